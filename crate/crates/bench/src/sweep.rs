//! Multi-seed epsilon sweeps and BSS-vs-uniform sample-size sweeps.
//!
//! Every seed owns one cell group: it splits the data, whitens a basis on the
//! pool part only, and then runs every configured setting against the same
//! split. Seeds run in parallel; results are reduced in seed order, so a
//! sweep is a pure function of its inputs.

use activereg_core::basis::{build_basis, FeatureBasis, MapKind};
use activereg_core::data::{split, Dataset, Standardizer};
use activereg_core::erm::{fit_full, fit_weighted};
use activereg_core::sampler::{
    select_bss, select_uniform, BssConfig, Provenance, SelectionResult, Strategy, DEFAULT_C0,
};
use activereg_core::{rmse, FeatureMap};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub eps_list: Vec<f64>,
    pub seeds: Vec<u64>,
    pub test_frac: f64,
    pub c0: f64,
    pub map: MapKind,
    pub basis_ridge: f64,
    /// Rescale features to zero mean and unit variance (pool statistics) before whitening.
    pub standardize: bool,
}

impl SweepConfig {
    pub fn new(eps_list: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            eps_list,
            seeds,
            test_frac: 0.2,
            c0: DEFAULT_C0,
            map: MapKind::Affine,
            basis_ridge: 0.0,
            standardize: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() || self.seeds.is_empty() {
            return Err(BenchError::Config("eps list and seed list must be non-empty".into()));
        }
        if let Some(e) = self.eps_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(BenchError::Config(format!("epsilon {e} outside (0, 1]")));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err(BenchError::Config(format!(
                "test fraction {} outside (0, 1)",
                self.test_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Epsilon,
    K,
}

/// Outcome of one (seed, setting) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub setting: String,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub strategy: Option<Strategy>,
    /// Distinct labeled points (the whole pool for the full fit).
    pub selected: Option<usize>,
    /// Sampler draws, counting repeats.
    pub draws: Option<usize>,
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

impl SweepCell {
    fn new(setting: impl Into<String>, seed: u64, epsilon: Option<f64>, strategy: Option<Strategy>) -> Self {
        Self {
            setting: setting.into(),
            seed,
            epsilon,
            strategy,
            selected: None,
            draws: None,
            rmse: None,
            error: None,
        }
    }

    fn failed(mut self, err: impl std::fmt::Display) -> Self {
        self.error = Some(err.to_string());
        self
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Mean and population standard deviation over the successful seeds of one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub selected_mean: f64,
    pub selected_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub seeds: usize,
    #[serde(default)]
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub kind: SweepKind,
    pub dataset: String,
    pub rows_in_dataset: usize,
    pub config: SweepConfig,
    pub std_estimator: String,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl SweepReport {
    pub fn row(&self, setting: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(|c| !c.is_ok())
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn eps_label(eps: f64) -> String {
    format!("eps={eps}")
}

/// Pool/test data of one seed with the basis whitened on the pool.
pub struct SeedContext {
    pub basis: FeatureBasis,
    pub pool_v: Array2<f64>,
    pub pool_y: ndarray::Array1<f64>,
    pub test_x: Array2<f64>,
    pub test_y: ndarray::Array1<f64>,
}

impl SeedContext {
    pub fn prepare(ds: &Dataset, config: &SweepConfig, seed: u64) -> activereg_core::Result<Self> {
        let sp = split(ds, config.test_frac, seed)?;
        let pool = ds.subset(&sp.pool_indices)?;
        let test = ds.subset(&sp.test_indices)?;
        let (pool_x, test_x) = if config.standardize {
            let st = Standardizer::fit(pool.features.view())?;
            (st.apply(pool.features.view())?, st.apply(test.features.view())?)
        } else {
            (pool.features, test.features)
        };
        let map = FeatureMap::new(config.map, ds.num_features())?;
        let basis = build_basis(pool_x.view(), map, config.basis_ridge)?;
        let pool_v = basis.eval_rows(pool_x.view())?;
        Ok(Self {
            basis,
            pool_v,
            pool_y: pool.targets,
            test_x,
            test_y: test.targets,
        })
    }

    pub fn pool_size(&self) -> usize {
        self.pool_v.nrows()
    }

    /// Weighted fit on the selected rows and test RMSE.
    pub fn fit_and_score(&self, selection: &SelectionResult) -> activereg_core::Result<f64> {
        let idx = selection.indices();
        let model = fit_weighted(
            self.pool_v.select(Axis(0), &idx).view(),
            self.pool_y.select(Axis(0), &idx).view(),
            selection.weight_values().view(),
            0.0,
        )?
        .bind(&self.basis)?;
        let pred = model.predict_rows(&self.basis, self.test_x.view())?;
        rmse(pred.view(), self.test_y.view())
    }

    pub fn full_rmse(&self) -> activereg_core::Result<f64> {
        let model = fit_full(self.pool_v.view(), self.pool_y.view())?.bind(&self.basis)?;
        let pred = model.predict_rows(&self.basis, self.test_x.view())?;
        rmse(pred.view(), self.test_y.view())
    }

    fn full_cell(&self, seed: u64) -> SweepCell {
        let mut cell = SweepCell::new("full", seed, None, None);
        match self.full_rmse() {
            Ok(r) => {
                cell.selected = Some(self.pool_size());
                cell.rmse = Some(r);
                cell
            }
            Err(e) => cell.failed(e),
        }
    }

    fn bss_cell(&self, setting: String, seed: u64, eps: f64, c0: f64) -> (SweepCell, Option<usize>) {
        let mut cell = SweepCell::new(setting, seed, Some(eps), Some(Strategy::Bss));
        let sel = match select_bss(self.pool_v.view(), &BssConfig::new(eps, seed).with_c0(c0)) {
            Ok(s) => s,
            Err(e) => return (cell.failed(e), None),
        };
        cell.selected = Some(sel.distinct_count);
        cell.draws = Some(sel.iterations);
        match self.fit_and_score(&sel) {
            Ok(r) => {
                cell.rmse = Some(r);
                (cell, Some(sel.iterations))
            }
            Err(e) => (cell.failed(e), Some(sel.iterations)),
        }
    }

    fn uniform_cell(&self, setting: String, seed: u64, eps: f64, k: usize) -> SweepCell {
        let mut cell = SweepCell::new(setting, seed, Some(eps), Some(Strategy::Uniform));
        let sel = match select_uniform(self.pool_size(), k, seed) {
            Ok(s) => s,
            Err(e) => return cell.failed(e),
        };
        cell.selected = Some(sel.distinct_count);
        cell.draws = Some(k);
        match self.fit_and_score(&sel) {
            Ok(r) => {
                cell.rmse = Some(r);
                cell
            }
            Err(e) => cell.failed(e),
        }
    }
}

fn seed_cells(ds: &Dataset, config: &SweepConfig, seed: u64, kind: SweepKind) -> Vec<SweepCell> {
    let ctx = match SeedContext::prepare(ds, config, seed) {
        Ok(ctx) => ctx,
        Err(e) => {
            // Every setting of this seed fails with the same cause.
            let mut cells = vec![SweepCell::new("full", seed, None, None).failed(&e)];
            for &eps in &config.eps_list {
                cells.push(SweepCell::new(eps_label(eps), seed, Some(eps), Some(Strategy::Bss)).failed(&e));
                if kind == SweepKind::K {
                    cells.push(SweepCell::new(eps_label(eps), seed, Some(eps), Some(Strategy::Uniform)).failed(&e));
                }
            }
            return cells;
        }
    };
    let mut cells = vec![ctx.full_cell(seed)];
    for &eps in &config.eps_list {
        let (bss, draws) = ctx.bss_cell(eps_label(eps), seed, eps, config.c0);
        cells.push(bss);
        if kind == SweepKind::K {
            cells.push(match draws {
                Some(k) => ctx.uniform_cell(eps_label(eps), seed, eps, k),
                None => SweepCell::new(eps_label(eps), seed, Some(eps), Some(Strategy::Uniform))
                    .failed("no BSS draw count for this seed"),
            });
        }
    }
    cells
}

fn run_cells(ds: &Dataset, config: &SweepConfig, kind: SweepKind) -> Result<Vec<SweepCell>> {
    config.validate()?;
    let per_seed: Vec<Vec<SweepCell>> = config
        .seeds
        .par_iter()
        .map(|&seed| seed_cells(ds, config, seed, kind))
        .collect();
    Ok(per_seed.into_iter().flatten().collect())
}

fn aggregate(setting: String, cells: &[&SweepCell]) -> Option<SweepRow> {
    let ok: Vec<&&SweepCell> = cells.iter().filter(|c| c.is_ok()).collect();
    if ok.is_empty() {
        return None;
    }
    let selected: Vec<f64> = ok.iter().map(|c| c.selected.unwrap_or(0) as f64).collect();
    let rmses: Vec<f64> = ok.iter().map(|c| c.rmse.unwrap_or(f64::NAN)).collect();
    let draws: Vec<f64> = ok.iter().filter_map(|c| c.draws.map(|k| k as f64)).collect();
    let (selected_mean, selected_std) = mean_std(&selected);
    let (rmse_mean, rmse_std) = mean_std(&rmses);
    Some(SweepRow {
        setting,
        selected_mean,
        selected_std,
        rmse_mean,
        rmse_std,
        seeds: ok.len(),
        failed: cells.len() - ok.len(),
        epsilon: cells[0].epsilon,
        strategy: cells[0].strategy,
        draws_mean: (!draws.is_empty()).then(|| mean_std(&draws).0),
    })
}

fn group(cells: &[SweepCell], pred: impl Fn(&SweepCell) -> bool) -> Vec<&SweepCell> {
    cells.iter().filter(|c| pred(c)).collect()
}

fn report(
    ds: &Dataset,
    config: &SweepConfig,
    kind: SweepKind,
    rows: Vec<SweepRow>,
    cells: Vec<SweepCell>,
) -> SweepReport {
    SweepReport {
        schema_version: SCHEMA_VERSION,
        kind,
        dataset: ds.source.clone(),
        rows_in_dataset: ds.len(),
        config: config.clone(),
        std_estimator: "population".into(),
        rows,
        cells,
        provenance: None,
    }
}

/// One "full" row plus one row per epsilon.
pub fn epsilon_sweep(ds: &Dataset, config: &SweepConfig) -> Result<SweepReport> {
    let cells = run_cells(ds, config, SweepKind::Epsilon)?;
    let mut rows = Vec::new();
    rows.extend(aggregate("full".into(), &group(&cells, |c| c.setting == "full")));
    for &eps in &config.eps_list {
        let label = eps_label(eps);
        rows.extend(aggregate(label.clone(), &group(&cells, |c| c.setting == label)));
    }
    Ok(report(ds, config, SweepKind::Epsilon, rows, cells))
}

/// For each epsilon, the BSS run's draw count `k` and a uniform run with the
/// same `k` on the same split. Rows are labelled by the mean `k` over seeds.
pub fn k_sweep_vs_uniform(ds: &Dataset, config: &SweepConfig) -> Result<SweepReport> {
    let mut cells = run_cells(ds, config, SweepKind::K)?;
    let mut rows = Vec::new();
    rows.extend(aggregate("full".into(), &group(&cells, |c| c.setting == "full")));
    for &eps in &config.eps_list {
        let label = eps_label(eps);
        let bss = group(&cells, |c| c.setting == label && c.strategy == Some(Strategy::Bss));
        let draws: Vec<f64> = bss.iter().filter_map(|c| c.draws.map(|k| k as f64)).collect();
        let k_label = if draws.is_empty() {
            format!("k=?@{label}")
        } else {
            format!("k={}", mean_std(&draws).0.round() as u64)
        };
        for strategy in [Strategy::Bss, Strategy::Uniform] {
            let name = format!("{k_label}/{}", strategy_name(strategy));
            let members = group(&cells, |c| c.setting == label && c.strategy == Some(strategy));
            rows.extend(aggregate(name, &members));
        }
        for c in cells.iter_mut().filter(|c| c.setting == label) {
            c.setting = format!(
                "{k_label}/{}",
                strategy_name(c.strategy.expect("k-sweep cells carry a strategy"))
            );
        }
    }
    Ok(report(ds, config, SweepKind::K, rows, cells))
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Bss => "bss",
        Strategy::Uniform => "uniform",
    }
}
