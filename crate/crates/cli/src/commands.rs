use std::path::{Path, PathBuf};

use activereg_bench::report::{render, write_plot_csv};
use activereg_bench::verify::run_suite;
use activereg_bench::{epsilon_sweep, k_sweep_vs_uniform, ReportFormat, SweepConfig, SweepReport};
use activereg_core::basis::{build_basis, FeatureBasis, FeatureMap};
use activereg_core::data::SynthProvenance;
use activereg_core::erm::ModelFile;
use activereg_core::pipeline::{self, PipelineConfig};
use activereg_core::sampler::{BssConfig, Provenance, SelectionFile};
use activereg_core::{
    fit_weighted, load_csv, rmse, select_bss, split, synth_regression, write_csv, Dataset, RegressionModel,
    SelectionResult,
};
use ndarray::Axis;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::{
    BasisArgs, Command, DataArgs, EvalArgs, FitArgs, GenArgs, KsweepArgs, PipelineArgs, SamplerArgs, SelectArgs,
    SweepArgs, VerifyArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Select(a) => select(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => run_pipeline(a),
        Command::Sweep(a) => sweep(a),
        Command::Ksweep(a) => ksweep(a),
        Command::Verify(a) => verify(a),
    }
}

fn provenance() -> Provenance {
    Provenance {
        tool: "activereg".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        args: std::env::args().skip(1).collect(),
    }
}

fn to_json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Writes to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    path.with_file_name(name)
}

fn load(args: &DataArgs) -> Result<Dataset> {
    load_csv(&args.data, &args.target).map_err(|e| match e {
        activereg_core::Error::Io(io) => {
            CliError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", args.data.display())))
        }
        other => other.into(),
    })
}

fn basis_for(ds: &Dataset, args: &BasisArgs) -> Result<FeatureBasis> {
    let map = FeatureMap::new(args.map, ds.num_features())?;
    Ok(build_basis(ds.features.view(), map, args.basis_ridge)?)
}

fn bss_config(args: &SamplerArgs) -> BssConfig {
    let config = BssConfig::new(args.epsilon, args.seed).with_c0(args.c0);
    match args.max_iters {
        Some(cap) => config.with_max_iters(cap),
        None => config,
    }
}

fn selection_file(sel: &SelectionResult) -> SelectionFile {
    SelectionFile {
        provenance: Some(provenance()),
        ..sel.to_file()
    }
}

fn model_file(model: &RegressionModel, basis: &FeatureBasis) -> ModelFile {
    ModelFile {
        provenance: Some(provenance()),
        ..model.to_file(Some(basis))
    }
}

#[derive(Serialize)]
struct GenOutput<'a> {
    synth: &'a SynthProvenance,
    provenance: Provenance,
}

fn gen(a: GenArgs) -> Result<()> {
    let (ds, synth) = synth_regression(a.n, a.p, a.noise, a.seed)?;
    write_csv(&ds, &a.out)?;
    let meta = sidecar(&a.out);
    std::fs::write(
        &meta,
        to_json(&GenOutput {
            synth: &synth,
            provenance: provenance(),
        })?,
    )?;
    println!("wrote {} rows to {} ({})", ds.len(), a.out.display(), meta.display());
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let basis = basis_for(&ds, &a.basis)?;
    let v = basis.eval_rows(ds.features.view())?;
    let sel = select_bss(v.view(), &bss_config(&a.sampler))?;
    emit(a.out.as_deref(), &to_json(&selection_file(&sel))?)
}

fn fit(a: FitArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let text = std::fs::read_to_string(&a.selection)?;
    let sel = SelectionResult::from_file(&serde_json::from_str(&text)?)?;
    let idx = sel.indices();
    if let Some(&bad) = idx.iter().find(|&&i| i >= ds.len()) {
        return Err(activereg_core::Error::Schema(format!(
            "selection index {bad} is out of range for {} data rows",
            ds.len()
        ))
        .into());
    }
    let basis = basis_for(&ds, &a.basis)?;
    let v = basis.eval_rows(ds.features.select(Axis(0), &idx).view())?;
    let y = ds.targets.select(Axis(0), &idx);
    let model = fit_weighted(v.view(), y.view(), sel.weight_values().view(), a.ridge)?.bind(&basis)?;
    emit(a.out.as_deref(), &to_json(&model_file(&model, &basis))?)
}

#[derive(Serialize)]
struct EvalOutput {
    rmse: f64,
    rows: usize,
    split_seed: Option<u64>,
    test_frac: Option<f64>,
    provenance: Provenance,
}

fn eval(a: EvalArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(&a.model)?)?;
    let basis_file = file
        .basis
        .as_ref()
        .ok_or_else(|| activereg_core::Error::Schema("model file carries no basis".into()))?;
    let basis = FeatureBasis::from_file(basis_file)?;
    let model = RegressionModel::from_file(&file)?;
    let scored = match a.split_seed {
        Some(seed) => ds.subset(&split(&ds, a.test_frac, seed)?.test_indices)?,
        None => ds,
    };
    let pred = model.predict_rows(&basis, scored.features.view())?;
    let out = EvalOutput {
        rmse: rmse(pred.view(), scored.targets.view())?,
        rows: scored.len(),
        split_seed: a.split_seed,
        test_frac: a.split_seed.map(|_| a.test_frac),
        provenance: provenance(),
    };
    let text = to_json(&out)?;
    if let Some(p) = &a.out {
        std::fs::write(p, &text)?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct PipelineOutput {
    epsilon: f64,
    seed: u64,
    split_seed: u64,
    pool_rows: usize,
    test_rows: usize,
    draws: usize,
    labels_queried: usize,
    gram_lambda_min: Option<f64>,
    gram_lambda_max: Option<f64>,
    rmse: f64,
    provenance: Provenance,
}

fn run_pipeline(a: PipelineArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let split_seed = a.split_seed.unwrap_or(a.sampler.seed);
    let sp = split(&ds, a.test_frac, split_seed)?;
    let pool = ds.subset(&sp.pool_indices)?;
    let test = ds.subset(&sp.test_indices)?;
    let config = PipelineConfig {
        map: FeatureMap::new(a.basis.map, ds.num_features())?,
        selection: bss_config(&a.sampler),
        basis_ridge: a.basis.basis_ridge,
        fit_ridge: a.ridge,
    };
    let run = pipeline::run(pool.features.view(), &config, |i| Ok(pool.targets[i]))?;
    let pred = run.model.predict_rows(&run.basis, test.features.view())?;
    let out = PipelineOutput {
        epsilon: a.sampler.epsilon,
        seed: a.sampler.seed,
        split_seed,
        pool_rows: pool.len(),
        test_rows: test.len(),
        draws: run.selection.iterations,
        labels_queried: run.labels_queried(),
        gram_lambda_min: run.selection.gram_extremes.map(|e| e.lambda_min),
        gram_lambda_max: run.selection.gram_extremes.map(|e| e.lambda_max),
        rmse: rmse(pred.view(), test.targets.view())?,
        provenance: provenance(),
    };
    if let Some(p) = &a.model_out {
        std::fs::write(p, to_json(&model_file(&run.model, &run.basis))?)?;
    }
    if let Some(p) = &a.selection_out {
        std::fs::write(p, to_json(&selection_file(&run.selection))?)?;
    }
    print!("{}", to_json(&out)?);
    Ok(())
}

fn sweep_config(a: &SweepArgs) -> Result<SweepConfig> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let mut config = SweepConfig::new(a.eps_list.clone(), (a.seed_base..a.seed_base + a.seeds).collect());
    config.test_frac = a.test_frac;
    config.c0 = a.c0;
    config.map = a.basis.map;
    config.basis_ridge = a.basis.basis_ridge;
    config.standardize = a.standardize;
    Ok(config)
}

/// Renders the report with its provenance: inline for JSON and markdown,
/// in a sidecar file for CSV.
fn emit_sweep(report: &mut SweepReport, a: &SweepArgs) -> Result<()> {
    let prov = provenance();
    report.provenance = Some(prov.clone());
    let mut text = render(report, a.format)?;
    match a.format {
        ReportFormat::Json => {}
        ReportFormat::Markdown => {
            text.push_str(&format!(
                "\n<!-- {} {} {} -->\n",
                prov.tool,
                prov.version,
                prov.args.join(" ")
            ));
        }
        ReportFormat::Csv => {
            if let Some(out) = &a.out {
                std::fs::write(sidecar(out), to_json(&prov)?)?;
            }
        }
    }
    emit(a.out.as_deref(), &text)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let mut report = epsilon_sweep(&ds, &sweep_config(&a)?)?;
    emit_sweep(&mut report, &a)
}

fn ksweep(a: KsweepArgs) -> Result<()> {
    let ds = load(&a.sweep.data)?;
    let mut report = k_sweep_vs_uniform(&ds, &sweep_config(&a.sweep)?)?;
    if let Some(p) = &a.plot_csv {
        write_plot_csv(&report, p)?;
    }
    emit_sweep(&mut report, &a.sweep)
}

fn verify(a: VerifyArgs) -> Result<()> {
    let report = run_suite(a.suite, a.trials, a.seed)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(p) = &a.out {
        #[derive(Serialize)]
        struct Output<'a> {
            #[serde(flatten)]
            report: &'a activereg_bench::verify::SuiteReport,
            provenance: Provenance,
        }
        std::fs::write(
            p,
            to_json(&Output {
                report: &report,
                provenance: provenance(),
            })?,
        )?;
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::VerifyFailed(failed.join(", ")))
    }
}
