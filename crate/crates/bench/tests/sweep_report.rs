use activereg_bench::report::{read_json_report, render, render_csv, render_markdown, render_plot_csv, ROW_COLUMNS};
use activereg_bench::sweep::{eps_label, SeedContext};
use activereg_bench::{emit_report, epsilon_sweep, k_sweep_vs_uniform, ReportFormat, SweepConfig, SweepReport};
use activereg_core::basis::{build_basis, FeatureMap};
use activereg_core::sampler::{select_bss, select_uniform, BssConfig, Weight};
use activereg_core::{fit_full, fit_weighted, rmse, split, synth_regression};
use ndarray::Axis;
use proptest::prelude::*;

/// Replays one (seed, epsilon) cell step by step through the core API.
#[test]
fn sweep_row_matches_hand_driven_pipeline() {
    let (ds, _) = synth_regression(50, 2, 0.3, 11).unwrap();
    let (seed, eps) = (5, 1.0);
    let report = epsilon_sweep(&ds, &SweepConfig::new(vec![eps], vec![seed])).unwrap();

    let sp = split(&ds, 0.2, seed).unwrap();
    let pool = ds.subset(&sp.pool_indices).unwrap();
    let test = ds.subset(&sp.test_indices).unwrap();
    let basis = build_basis(pool.features.view(), FeatureMap::affine(2).unwrap(), 0.0).unwrap();
    assert_eq!(basis.dim(), 3);
    let v = basis.eval_rows(pool.features.view()).unwrap();
    let sel = select_bss(v.view(), &BssConfig::new(eps, seed)).unwrap();
    let idx = sel.indices();
    let model = fit_weighted(
        v.select(Axis(0), &idx).view(),
        pool.targets.select(Axis(0), &idx).view(),
        sel.weight_values().view(),
        0.0,
    )
    .unwrap()
    .bind(&basis)
    .unwrap();
    let pred = model.predict_rows(&basis, test.features.view()).unwrap();
    let expected = rmse(pred.view(), test.targets.view()).unwrap();

    let row = report.row(&eps_label(eps)).unwrap();
    assert_eq!(row.rmse_mean, expected);
    assert_eq!(row.rmse_std, 0.0);
    assert_eq!(row.selected_mean, sel.distinct_count as f64);
    assert_eq!(row.seeds, 1);

    let full = fit_full(v.view(), pool.targets.view()).unwrap().bind(&basis).unwrap();
    let full_pred = full.predict_rows(&basis, test.features.view()).unwrap();
    let full_row = report.row("full").unwrap();
    assert_eq!(full_row.rmse_mean, rmse(full_pred.view(), test.targets.view()).unwrap());
    assert_eq!(full_row.selected_mean, 40.0);
}

#[test]
fn uniform_weights_over_every_pool_row_match_full_fit() {
    let (ds, _) = synth_regression(60, 3, 0.5, 2).unwrap();
    let ctx = SeedContext::prepare(&ds, &SweepConfig::new(vec![1.0], vec![0]), 0).unwrap();
    let n = ctx.pool_size();
    let mut sel = select_uniform(n, n, 0).unwrap();
    sel.weights = (0..n)
        .map(|index| Weight {
            index,
            u: 1.0 / n as f64,
        })
        .collect();
    let weighted = ctx.fit_and_score(&sel).unwrap();
    assert!((weighted - ctx.full_rmse().unwrap()).abs() <= 1e-9);
}

#[test]
fn sweeps_are_deterministic() {
    let (ds, _) = synth_regression(300, 3, 0.5, 4).unwrap();
    let config = SweepConfig::new(vec![1.0, 0.5], vec![0, 1, 2]);
    assert_eq!(
        epsilon_sweep(&ds, &config).unwrap(),
        epsilon_sweep(&ds, &config).unwrap()
    );
    assert_eq!(
        k_sweep_vs_uniform(&ds, &config).unwrap(),
        k_sweep_vs_uniform(&ds, &config).unwrap()
    );
}

#[test]
fn selected_mean_grows_as_epsilon_shrinks() {
    let (ds, _) = synth_regression(3000, 4, 0.5, 6).unwrap();
    let eps = vec![1.0, 0.5, 0.25, 0.1];
    let report = epsilon_sweep(&ds, &SweepConfig::new(eps.clone(), (0..4).collect())).unwrap();
    let selected: Vec<f64> = eps
        .iter()
        .map(|&e| report.row(&eps_label(e)).unwrap().selected_mean)
        .collect();
    assert!(selected.windows(2).all(|w| w[0] <= w[1]), "{selected:?}");
    for row in &report.rows {
        assert!(row.selected_mean <= 2400.0 && row.selected_std >= 0.0 && row.rmse_std >= 0.0);
    }
}

#[test]
fn k_sweep_pairs_uniform_with_bss_draw_counts() {
    let (ds, _) = synth_regression(500, 3, 0.5, 8).unwrap();
    let report = k_sweep_vs_uniform(&ds, &SweepConfig::new(vec![1.0, 0.5], vec![0, 1])).unwrap();
    assert_eq!(report.rows.len(), 5);
    for seed in [0, 1] {
        let of = |strategy: &str| -> Vec<usize> {
            report
                .cells
                .iter()
                .filter(|c| c.seed == seed && c.setting.ends_with(strategy))
                .map(|c| c.draws.unwrap())
                .collect()
        };
        assert_eq!(of("/bss"), of("/uniform"));
    }
    let plot = render_plot_csv(&report).unwrap();
    assert_eq!(plot.lines().count(), 5);
}

fn empty_report() -> SweepReport {
    let (ds, _) = synth_regression(5, 5, 0.1, 1).unwrap();
    let report = epsilon_sweep(&ds, &SweepConfig::new(vec![1.0], vec![1])).unwrap();
    assert!(report.rows.is_empty());
    report
}

#[test]
fn empty_report_renders_header_only() {
    let report = empty_report();
    assert_eq!(render_csv(&report).unwrap(), format!("{}\n", ROW_COLUMNS.join(",")));
    let md = render_markdown(&report);
    assert!(md.starts_with("| setting |"));
    assert!(md.contains("Failed cells"));
    let json: serde_json::Value = serde_json::from_str(&render(&report, ReportFormat::Json).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 0);
    assert_eq!(json["schema_version"], 1);
}

#[test]
fn markdown_has_one_pipe_row_per_sweep_row() {
    let (ds, _) = synth_regression(200, 2, 0.5, 3).unwrap();
    let report = epsilon_sweep(&ds, &SweepConfig::new(vec![1.0, 0.5, 0.25], vec![0, 1])).unwrap();
    let md = render_markdown(&report);
    let body: Vec<&str> = md.lines().skip(2).filter(|l| l.starts_with('|')).collect();
    assert_eq!(body.len(), report.rows.len());
    for (line, row) in body.iter().zip(&report.rows) {
        assert!(line.starts_with(&format!("| {} |", row.setting)));
    }
}

#[test]
fn json_report_round_trips_through_a_file() {
    let (ds, _) = synth_regression(120, 2, 0.5, 9).unwrap();
    let report = epsilon_sweep(&ds, &SweepConfig::new(vec![1.0], vec![3])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit_report(&report, ReportFormat::Json, &path).unwrap();
    assert_eq!(read_json_report(&path).unwrap(), report);
    let csv_path = dir.path().join("r.csv");
    emit_report(&report, ReportFormat::Csv, &csv_path).unwrap();
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), ROW_COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), report.rows.len());
    for (rec, row) in rows.iter().zip(&report.rows) {
        assert_eq!(rec[3].parse::<f64>().unwrap(), row.rmse_mean);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rows_respect_aggregate_invariants(data_seed in any::<u64>(), n in 40usize..160, eps in 0.3f64..=1.0) {
        let (ds, _) = synth_regression(n, 2, 0.5, data_seed).unwrap();
        let report = epsilon_sweep(&ds, &SweepConfig::new(vec![eps], vec![0, 1, 2])).unwrap();
        let pool = n - (n as f64 * 0.2).round() as usize;
        for row in &report.rows {
            prop_assert!(row.seeds + row.failed == 3);
            prop_assert!(row.seeds >= 1);
            prop_assert!(row.selected_std >= 0.0 && row.rmse_std >= 0.0);
            prop_assert!(row.selected_mean <= pool as f64 + 1.0);
        }
        prop_assert_eq!(report.cells.len(), 6);
    }
}
