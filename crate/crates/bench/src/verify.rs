//! Statistical verification suites.
//!
//! Each suite draws its own seeded instances, measures the quantity a
//! guarantee talks about, and reports one [`Check`] per property together
//! with the measured statistic.

use activereg_core::basis::{alpha_condition_from_evaluations, norm_bounds, FeatureMap};
use activereg_core::linalg::{
    eig_extremes, inverse_psd, sherman_morrison_update, symmetric_eigen, trace_of_inverse, EigenExtremes, SymMatrix,
    DEFAULT_EIG_TOL,
};
use activereg_core::pipeline::{self, PipelineConfig};
use activereg_core::rng::{self, derive_seed, streams};
use activereg_core::sampler::{
    required_iid_size, select_bss, select_uniform, verify_noise_controlling, verify_norm_preserving, BssConfig,
};
use activereg_core::synth_regression;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::workloads::whitened_normal_pool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Linalg,
    Basis,
    Sampler,
    Chernoff,
    Recovery,
}

impl std::str::FromStr for Suite {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linalg" => Ok(Self::Linalg),
            "basis" => Ok(Self::Basis),
            "sampler" => Ok(Self::Sampler),
            "chernoff" => Ok(Self::Chernoff),
            "recovery" => Ok(Self::Recovery),
            other => Err(BenchError::Config(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<SuiteReport> {
    if trials == 0 {
        return Err(BenchError::Config("trials must be at least 1".into()));
    }
    let checks = match suite {
        Suite::Linalg => kernel_checks(trials, seed),
        Suite::Basis => basis_checks(trials, seed)?,
        Suite::Sampler => {
            let stats = bss_statistics(2000, 10, 0.25, 3.0, seed, &(0..trials as u64).collect::<Vec<_>>())?;
            stats.checks()
        }
        Suite::Chernoff => vec![chernoff_trials(2000, 10, 0.5, 0.1, trials, seed)?.check()],
        Suite::Recovery => {
            let seeds: Vec<u64> = (0..trials as u64).map(|i| derive_seed(seed, i)).collect();
            recovery_trials(&RecoverySetup::default(), &[0.5, 0.25, 0.1], &seeds)?
                .iter()
                .map(RecoveryOutcome::check)
                .collect()
        }
    };
    Ok(SuiteReport {
        suite,
        trials,
        seed,
        checks,
    })
}

fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// `G G' / d + shift I` with `G` uniform in `[-1, 1]`.
pub fn random_pd(rng: &mut impl Rng, d: usize, shift: f64) -> SymMatrix {
    let g = uniform_matrix(rng, d, d + 3);
    SymMatrix::gram(g.t()).scaled(1.0 / d as f64).shifted(shift)
}

/// Unit diagonal with off-diagonal entries uniform in `[-rho, rho]`.
pub fn perturbed_gram(rng: &mut impl Rng, d: usize, rho: f64) -> SymMatrix {
    let mut g = Array2::<f64>::eye(d);
    for i in 0..d {
        for j in 0..i {
            g[[i, j]] = rng.random_range(-rho..=rho);
        }
    }
    SymMatrix::from_lower(g).expect("square lower triangle")
}

/// Unit diagonal with every off-diagonal entry equal to `rho`.
pub fn equicorrelated_gram(d: usize, rho: f64) -> SymMatrix {
    SymMatrix::try_from_array(Array2::from_shape_fn((d, d), |(i, j)| if i == j { 1.0 } else { rho }))
        .expect("constant off-diagonal is symmetric")
}

/// Worst Sherman-Morrison error against direct inversion over `instances`
/// random PD matrices with `d` cycling through `1..=20`.
pub fn sherman_morrison_max_error(instances: usize, seed: u64) -> f64 {
    let mut rng = rng::seeded(seed, streams::EVAL);
    let mut worst = 0.0_f64;
    let mut done = 0;
    while done < instances {
        let d = 1 + done % 20;
        let m = random_pd(&mut rng, d, 0.5);
        let u = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
        let scale = rng.random_range(0.0..2.0);
        let m_inv = inverse_psd(&m, 1e-12).expect("shifted Gram is definite");
        let mut direct = m.clone();
        direct.add_outer(scale, u.view());
        let updated = sherman_morrison_update(&m_inv, u.view(), scale).expect("positive update");
        let oracle = inverse_psd(&direct, 1e-12).expect("positive update keeps definiteness");
        worst = worst.max(updated.max_abs_diff(&oracle));
        done += 1;
    }
    worst
}

/// Worst relative gap between the Cholesky-based trace of the inverse and
/// the sum of reciprocal Jacobi eigenvalues.
pub fn trace_of_inverse_max_rel_error(instances: usize, seed: u64) -> f64 {
    let mut rng = rng::seeded(seed, streams::EVAL);
    (0..instances)
        .map(|i| {
            let m = random_pd(&mut rng, 1 + i % 20, 0.05);
            let t = trace_of_inverse(&m, 1e-12).expect("definite");
            let eig = symmetric_eigen(&m, DEFAULT_EIG_TOL).expect("small symmetric");
            let oracle: f64 = eig.values.iter().map(|x| 1.0 / x).sum();
            (t - oracle).abs() / oracle
        })
        .fold(0.0, f64::max)
}

/// Count of random unit-diagonal, rho-bounded Grams (`d` in `2..=30`) whose
/// spectrum stays inside `[1 - d rho, 1 + d rho]`.
pub fn gram_window_hits(instances: usize, seed: u64) -> usize {
    let mut rng = rng::seeded(seed, streams::EVAL);
    (0..instances)
        .filter(|&i| {
            let d = 2 + i % 29;
            let rho = [0.001, 0.01, 0.1 / d as f64][i % 3];
            let ext = eig_extremes(&perturbed_gram(&mut rng, d, rho), DEFAULT_EIG_TOL).expect("small symmetric");
            let dr = d as f64 * rho;
            ext.lambda_min >= 1.0 - dr - 1e-10 && ext.lambda_max <= 1.0 + dr + 1e-10
        })
        .count()
}

/// Count of random (alpha, equicorrelated G) pairs with `alpha' G alpha`
/// inside the norm window.
pub fn norm_window_hits(instances: usize, seed: u64) -> usize {
    let mut rng = rng::seeded(seed, streams::EVAL);
    (0..instances)
        .filter(|&i| {
            let d = 2 + i % 29;
            let rho = rng.random_range(0.0..1.0) / d as f64;
            let alpha: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let g = equicorrelated_gram(d, rho);
            let value = alpha.dot(&g.mul_vec(alpha.view()).expect("matching length"));
            let (lo, hi) = norm_bounds(alpha.view(), rho, d).expect("rho in range");
            let tol = 1e-12 * alpha.dot(&alpha).max(1.0);
            lo - tol <= value && value <= hi + tol
        })
        .count()
}

fn kernel_checks(trials: usize, seed: u64) -> Vec<Check> {
    let sm = sherman_morrison_max_error(trials, seed);
    let tr = trace_of_inverse_max_rel_error(trials, seed);
    vec![
        Check::new(
            "sherman_morrison_vs_direct",
            sm <= 1e-8,
            format!("max abs error {sm:.3e} over {trials} instances"),
        ),
        Check::new(
            "trace_of_inverse_vs_eigen_sum",
            tr <= 1e-8,
            format!("max rel error {tr:.3e} over {trials} instances"),
        ),
    ]
}

fn basis_checks(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let window = gram_window_hits(trials, seed);
    let norm = norm_window_hits(trials, seed);
    let pool = {
        let mut rng = rng::seeded(seed, streams::SYNTH);
        Array2::from_shape_fn((5000, 6), |_| rng.sample::<f64, _>(StandardNormal))
    };
    let basis = activereg_core::build_basis(pool.view(), FeatureMap::affine(6)?, 0.0)?;
    let rho = activereg_core::basis::estimate_rho(&basis, pool.view())?;
    Ok(vec![
        Check::new(
            "gram_eigen_window",
            window == trials,
            format!("{window}/{trials} Grams inside [1 - d rho, 1 + d rho]"),
        ),
        Check::new(
            "norm_window",
            norm == trials,
            format!("{norm}/{trials} pairs inside the norm window"),
        ),
        Check::new(
            "whitened_pool_gram",
            rho.max_offdiag <= 1e-6 && rho.max_diag_deviation <= 1e-6,
            format!(
                "max offdiag {:.2e}, max diag deviation {:.2e}",
                rho.max_offdiag, rho.max_diag_deviation
            ),
        ),
    ])
}

/// Diagnostics of one completed barrier run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub seed: u64,
    pub iterations: usize,
    pub distinct: usize,
    pub gram: EigenExtremes,
    pub lower: f64,
    pub upper: f64,
    pub gamma: f64,
    pub mid: f64,
    pub sum_gamma_over_phi: f64,
    pub beta_sum: f64,
    pub budget_ok: bool,
    pub per_round_ok: bool,
}

impl RunDiagnostics {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }

    /// `(1 - gamma^2 / (2d)) sum gamma/Phi <= mid <= sum gamma/Phi`
    pub fn mid_sandwich(&self, d: usize) -> (bool, bool) {
        let s = self.sum_gamma_over_phi;
        let lower_ok = (1.0 - 0.5 * self.gamma * self.gamma / d as f64) * s <= self.mid;
        let upper_ok = self.mid <= s;
        (lower_ok, upper_ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssStatistics {
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub runs: Vec<RunDiagnostics>,
    /// Seeds whose run stopped with an error, with the message.
    pub failures: Vec<(u64, String)>,
}

/// Runs the barrier sampler on one whitened normal pool for every seed.
pub fn bss_statistics(
    n: usize,
    d: usize,
    epsilon: f64,
    c0: f64,
    pool_seed: u64,
    seeds: &[u64],
) -> Result<BssStatistics> {
    let v = whitened_normal_pool(n, d, pool_seed)?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        match select_bss(v.view(), &BssConfig::new(epsilon, seed).with_c0(c0)) {
            Ok(sel) => {
                let trace = sel.trace.as_ref().expect("barrier runs carry a trace");
                let noise = verify_noise_controlling(&sel, &trace.round_alpha_condition, epsilon)?;
                runs.push(RunDiagnostics {
                    seed,
                    iterations: sel.iterations,
                    distinct: sel.distinct_count,
                    gram: verify_norm_preserving(v.view(), &sel)?,
                    lower: trace.final_lower,
                    upper: trace.final_upper,
                    gamma: sel.gamma,
                    mid: sel.mid,
                    sum_gamma_over_phi: trace.sum_gamma_over_phi,
                    beta_sum: noise.beta_sum,
                    budget_ok: noise.budget_ok,
                    per_round_ok: noise.per_round_ok,
                });
            }
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    Ok(BssStatistics {
        n,
        d,
        epsilon,
        gamma: epsilon.sqrt() / c0,
        runs,
        failures,
    })
}

impl BssStatistics {
    pub fn total(&self) -> usize {
        self.runs.len() + self.failures.len()
    }

    pub fn norm_preserving_count(&self) -> usize {
        self.runs.iter().filter(|r| r.gram.within(0.5, 1.5)).count()
    }

    pub fn within_iteration_bound(&self, c: f64) -> usize {
        let bound = c * self.d as f64 / (self.gamma * self.gamma);
        self.runs.iter().filter(|r| r.iterations as f64 <= bound).count()
    }

    pub fn gap_violations(&self) -> usize {
        let bound = 9.0 * self.d as f64 / self.gamma;
        self.runs.iter().filter(|r| r.gap() > bound).count()
    }

    /// Runs violating the lower and the upper half of the mid sandwich.
    pub fn mid_sandwich_violations(&self) -> (usize, usize) {
        self.runs.iter().fold((0, 0), |(lo, hi), r| {
            let (l, u) = r.mid_sandwich(self.d);
            (lo + usize::from(!l), hi + usize::from(!u))
        })
    }

    /// Runs with `r/l <= 1 + 8 gamma`, and how many of them leave `(1 - 5 gamma, 1 + 5 gamma)`.
    pub fn conditional_window(&self) -> (usize, usize) {
        let g = self.gamma;
        let eligible: Vec<&RunDiagnostics> = self
            .runs
            .iter()
            .filter(|r| r.lower > 0.0 && r.upper / r.lower <= 1.0 + 8.0 * g)
            .collect();
        let bad = eligible
            .iter()
            .filter(|r| !(r.gram.lambda_min > 1.0 - 5.0 * g && r.gram.lambda_max < 1.0 + 5.0 * g))
            .count();
        (eligible.len(), bad)
    }

    pub fn noise_controlling_count(&self) -> usize {
        self.runs.iter().filter(|r| r.budget_ok && r.per_round_ok).count()
    }

    pub fn checks(&self) -> Vec<Check> {
        let total = self.total();
        let np = self.norm_preserving_count();
        let term = self.within_iteration_bound(40.0);
        let (mid_lo, mid_hi) = self.mid_sandwich_violations();
        let (eligible, bad) = self.conditional_window();
        let noise = self.noise_controlling_count();
        vec![
            Check::new(
                "norm_preserving_frequency",
                np * 10 >= total * 9,
                format!("{np}/{total} runs with A'A spectrum inside [1/2, 3/2]"),
            ),
            Check::new(
                "noise_controlling",
                noise == total,
                format!("{noise}/{total} runs with sum beta <= 3/2 and beta_j K_j <= eps/2"),
            ),
            Check::new(
                "termination",
                term * 100 >= total * 99 && self.failures.is_empty(),
                format!(
                    "{term}/{total} runs within 40 d/gamma^2 iterations, {} errors",
                    self.failures.len()
                ),
            ),
            Check::new(
                "final_gap",
                self.gap_violations() == 0,
                format!("{} runs with r_k - l_k > 9 d/gamma", self.gap_violations()),
            ),
            Check::new(
                "mid_sandwich",
                mid_lo == 0 && mid_hi == 0,
                format!(
                    "{mid_lo} lower-half and {mid_hi} upper-half violations over {} runs",
                    self.runs.len()
                ),
            ),
            Check::new(
                "conditional_window",
                bad == 0,
                format!("{bad} of {eligible} runs with r/l <= 1 + 8 gamma leave (1 - 5 gamma, 1 + 5 gamma)"),
            ),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChernoffOutcome {
    pub k_alpha: f64,
    pub k: u64,
    pub epsilon: f64,
    pub trials: usize,
    pub within: usize,
    pub worst_deviation: f64,
}

impl ChernoffOutcome {
    pub fn check(&self) -> Check {
        Check::new(
            "iid_operator_norm",
            self.within * 10 >= self.trials * 9,
            format!(
                "{}/{} trials with ||A'A - I|| <= {} at k = {} (K_alpha = {:.2}, worst {:.3})",
                self.within, self.trials, self.epsilon, self.k, self.k_alpha, self.worst_deviation
            ),
        )
    }
}

/// Uniform i.i.d. draws of the size the matrix Chernoff bound asks for.
pub fn chernoff_trials(
    n: usize,
    d: usize,
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<ChernoffOutcome> {
    let v = whitened_normal_pool(n, d, seed)?;
    let k_alpha = alpha_condition_from_evaluations(v.view())?;
    let k = required_iid_size(k_alpha, d, epsilon, delta, 0.0)?;
    let mut within = 0;
    let mut worst = 0.0_f64;
    for t in 0..trials {
        let sel = select_uniform(n, k as usize, derive_seed(seed, t as u64))?;
        let dev = verify_norm_preserving(v.view(), &sel)?.deviation_from(1.0);
        worst = worst.max(dev);
        if dev <= epsilon {
            within += 1;
        }
    }
    Ok(ChernoffOutcome {
        k_alpha,
        k,
        epsilon,
        trials,
        within,
        worst_deviation: worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoverySetup {
    pub pool: usize,
    pub p: usize,
    pub noise_sigma: f64,
    pub fresh: usize,
}

impl Default for RecoverySetup {
    fn default() -> Self {
        Self {
            pool: 20_000,
            p: 10,
            noise_sigma: 0.5,
            fresh: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub epsilon: f64,
    /// `||f~ - f*||_D^2 / sigma^2` per seed.
    pub ratios: Vec<f64>,
    pub median: f64,
    pub distinct_mean: f64,
}

impl RecoveryOutcome {
    pub fn check(&self) -> Check {
        Check::new(
            format!("recovery_eps={}", self.epsilon),
            self.median <= 10.0 * self.epsilon,
            format!(
                "median excess ratio {:.4} (bound {}), mean distinct labels {:.1}",
                self.median,
                10.0 * self.epsilon,
                self.distinct_mean
            ),
        )
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs the full pipeline on synthetic linear data with known weights and
/// measures the excess risk of the fitted function on fresh points.
pub fn recovery_trials(setup: &RecoverySetup, eps_list: &[f64], seeds: &[u64]) -> Result<Vec<RecoveryOutcome>> {
    let mut ratios = vec![Vec::new(); eps_list.len()];
    let mut distinct = vec![0.0; eps_list.len()];
    for &seed in seeds {
        let (ds, prov) = synth_regression(setup.pool, setup.p, setup.noise_sigma, seed)?;
        let w_star = Array1::from(prov.w_star.clone());
        let fresh = {
            let mut rng = rng::seeded(seed, streams::EVAL);
            Array2::from_shape_fn((setup.fresh, setup.p), |_| rng.sample::<f64, _>(StandardNormal))
        };
        let truth = fresh.dot(&w_star);
        for (i, &eps) in eps_list.iter().enumerate() {
            let config = PipelineConfig {
                map: FeatureMap::affine(setup.p)?,
                selection: BssConfig::new(eps, seed),
                basis_ridge: 0.0,
                fit_ridge: 0.0,
            };
            let run = pipeline::run(ds.features.view(), &config, |j| Ok(ds.targets[j]))?;
            let pred = run.model.predict_rows(&run.basis, fresh.view())?;
            let excess = (&pred - &truth).mapv(|e| e * e).mean().unwrap_or(f64::NAN);
            ratios[i].push(excess / (setup.noise_sigma * setup.noise_sigma));
            distinct[i] += run.selection.distinct_count as f64;
        }
    }
    Ok(eps_list
        .iter()
        .zip(ratios)
        .zip(distinct)
        .map(|((&epsilon, ratios), total)| RecoveryOutcome {
            epsilon,
            median: median(&ratios),
            ratios,
            distinct_mean: total / seeds.len() as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleOutcome {
    pub runs: usize,
    pub steps: usize,
    /// Largest `mean / standard error` of the potential increment over steps.
    pub max_t: f64,
    /// Step at which `max_t` occurs.
    pub worst_step: usize,
}

/// Across-run mean of `Phi_{j+1} - Phi_j` at each step, in units of its standard error.
pub fn potential_increments(
    n: usize,
    d: usize,
    epsilon: f64,
    runs: usize,
    seed: u64,
) -> Result<SupermartingaleOutcome> {
    let v = whitened_normal_pool(n, d, seed)?;
    let mut paths = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let sel = select_bss(v.view(), &BssConfig::new(epsilon, derive_seed(seed, r)))?;
        paths.push(sel.trace.expect("barrier runs carry a trace").potentials);
    }
    let steps = paths.iter().map(|p| p.len() - 1).min().unwrap_or(0);
    let mut max_t = f64::NEG_INFINITY;
    let mut worst_step = 0;
    for j in 0..steps {
        let inc: Vec<f64> = paths.iter().map(|p| p[j + 1] - p[j]).collect();
        let m = inc.len() as f64;
        let mean = inc.iter().sum::<f64>() / m;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let se = (var / m).sqrt();
        let t = if se > 0.0 {
            mean / se
        } else if mean > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        if t > max_t {
            max_t = t;
            worst_step = j;
        }
    }
    Ok(SupermartingaleOutcome {
        runs,
        steps,
        max_t,
        worst_step,
    })
}
