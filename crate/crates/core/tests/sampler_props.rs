mod common;

use activereg_core::basis::alpha_condition_from_evaluations;
use activereg_core::sampler::{
    mid_for, required_iid_size, select_bss, select_uniform, verify_noise_controlling, verify_norm_preserving,
    BarrierState, BssConfig,
};
use activereg_core::Error;
use common::whitened_normal_pool;
use ndarray::{Array1, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn identical_inputs_give_bit_identical_selections() {
    let v = whitened_normal_pool(500, 5, 1);
    let config = BssConfig::new(0.5, 42);
    let a = select_bss(v.view(), &config).unwrap();
    let b = select_bss(v.view(), &config).unwrap();
    assert_eq!(a, b);
    let c = select_bss(v.view(), &BssConfig::new(0.5, 43)).unwrap();
    assert_ne!(a.draws, c.draws);
}

/// Replays a run through `BarrierState` and checks the recorded potentials,
/// the barrier monotonicity identity and the containment of the spectrum.
#[test]
fn replay_reproduces_potentials_and_barrier_steps() {
    let v = whitened_normal_pool(800, 6, 2);
    let config = BssConfig::new(0.25, 7);
    let sel = select_bss(v.view(), &config).unwrap();
    let trace = sel.trace.as_ref().unwrap();
    let gamma = sel.gamma;
    let widen = 1.0 / (1.0 - gamma) - 1.0 / (1.0 + gamma);

    let mut state = BarrierState::new(6, gamma).unwrap();
    assert_eq!(state.phi(), trace.potentials[0]);
    for (j, draw) in sel.draws.iter().enumerate() {
        let (l, r, phi) = (state.lower(), state.upper(), state.phi());
        state.step(v.row(draw.index), draw.s).unwrap();
        assert!(state.lower() > l && state.upper() > r);
        let expected = gamma / phi * widen;
        assert!(((state.gap() - (r - l)) - expected).abs() <= 1e-12 * state.gap());
        assert_eq!(state.phi(), trace.potentials[j + 1]);
        let phi_check = state.inv_upper().trace() + state.inv_lower().trace();
        assert!((phi_check - state.phi()).abs() <= 1e-6 * state.phi());
    }
    assert_eq!(state.upper(), trace.final_upper);
    assert_eq!(state.lower(), trace.final_lower);
}

#[test]
fn termination_diagnostics_on_whitened_pool() {
    let (n, d) = (2000, 10);
    let v = whitened_normal_pool(n, d, 3);
    for seed in 0..10 {
        let sel = select_bss(v.view(), &BssConfig::new(0.25, seed)).unwrap();
        let trace = sel.trace.as_ref().unwrap();
        let gamma = sel.gamma;
        let df = d as f64;
        let gap = trace.final_upper - trace.final_lower;
        assert!(gap >= 8.0 * df / gamma && gap <= 9.0 * df / gamma, "gap {gap}");
        assert!(sel.iterations as f64 <= 40.0 * df / (gamma * gamma));
        // The upper half of the mid sandwich is forced by the stopping rule.
        assert!(sel.mid <= trace.sum_gamma_over_phi * (1.0 + 1e-12));
        assert_eq!(sel.mid, mid_for(gamma, d));
        assert!(sel.distinct_count <= sel.iterations && sel.distinct_count <= n);
        assert!(sel.beta_sum() <= 1.5 + 1e-9, "beta sum {}", sel.beta_sum());
    }
}

#[test]
fn norm_preserving_and_noise_controlling_on_twenty_seeds() {
    let (n, d, eps) = (2000, 10, 0.25);
    let v = whitened_normal_pool(n, d, 4);
    let mut inside = 0;
    for seed in 0..20 {
        let sel = select_bss(v.view(), &BssConfig::new(eps, seed)).unwrap();
        let ext = verify_norm_preserving(v.view(), &sel).unwrap();
        assert_eq!(Some(ext), sel.gram_extremes);
        if ext.within(0.5, 1.5) {
            inside += 1;
        }
        let rounds = &sel.trace.as_ref().unwrap().round_alpha_condition;
        let check = verify_noise_controlling(&sel, rounds, eps).unwrap();
        assert!(check.budget_ok && check.per_round_ok, "seed {seed}: {check:?}");
    }
    assert!(inside >= 18, "only {inside} of 20 runs inside [1/2, 3/2]");
}

/// Round condition numbers recomputed from scratch on a replayed state.
#[test]
fn round_alpha_condition_matches_direct_evaluation() {
    let v = whitened_normal_pool(300, 4, 5);
    let sel = select_bss(v.view(), &BssConfig::new(0.5, 3)).unwrap();
    let rounds = &sel.trace.as_ref().unwrap().round_alpha_condition;
    let mut state = BarrierState::new(4, sel.gamma).unwrap();
    let n = v.nrows() as f64;
    for (j, draw) in sel.draws.iter().enumerate().take(25) {
        let sigma = state.scores(v.view());
        let total = sigma.sum();
        let mut k = 0.0_f64;
        for (i, row) in v.rows().into_iter().enumerate() {
            let ratio = (1.0 / n) / (sigma[i] / total);
            k = k.max(ratio * row.dot(&row));
        }
        assert!((k - rounds[j]).abs() <= 1e-9 * k, "round {j}: {k} vs {}", rounds[j]);
        state.step(v.row(draw.index), draw.s).unwrap();
    }
}

/// The Monte-Carlo mean of `(D(x)/D_j(x)) h(x)` under a round distribution
/// recovers the pool mean of `h`.
#[test]
fn importance_ratio_is_unbiased_under_round_distribution() {
    let v = whitened_normal_pool(400, 5, 6);
    let gamma = 0.5_f64.sqrt() / 3.0;
    let sel = select_bss(v.view(), &BssConfig::new(0.5, 9)).unwrap();
    let mut state = BarrierState::new(5, gamma).unwrap();
    for draw in sel.draws.iter().take(40) {
        state.step(v.row(draw.index), draw.s).unwrap();
    }
    let sigma = state.scores(v.view());
    let total = sigma.sum();
    let n = v.nrows();
    let h: Array1<f64> = v.map_axis(Axis(1), |row| row[0].powi(2) + row[1] * row[2] + 0.3);
    let pool_mean = h.mean().unwrap();

    let cumulative: Vec<f64> = sigma
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 100_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let t = rng.random::<f64>() * total;
        let i = cumulative.partition_point(|&c| c <= t).min(n - 1);
        let value = (1.0 / n as f64) / (sigma[i] / total) * h[i];
        sum += value;
        sum_sq += value * value;
    }
    let mean = sum / draws as f64;
    let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
    assert!((mean - pool_mean).abs() <= 3.0 * se, "{mean} vs {pool_mean} (se {se})");
}

#[test]
fn potential_is_a_supermartingale_in_the_mean() {
    let (n, d) = (300, 3);
    let v = whitened_normal_pool(n, d, 7);
    let runs: Vec<Vec<f64>> = (0..200)
        .map(|seed| {
            let sel = select_bss(v.view(), &BssConfig::new(0.5, seed)).unwrap();
            sel.trace.unwrap().potentials
        })
        .collect();
    let horizon = runs.iter().map(|p| p.len() - 1).min().unwrap();
    for j in 0..horizon {
        let inc: Vec<f64> = runs.iter().map(|p| p[j + 1] - p[j]).collect();
        let mean = inc.iter().sum::<f64>() / inc.len() as f64;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (inc.len() - 1) as f64;
        let se = (var / inc.len() as f64).sqrt();
        assert!(mean <= 3.0 * se + 1e-15, "step {j}: mean increment {mean}, se {se}");
    }
}

#[test]
fn uniform_baseline_at_chernoff_size_meets_budget() {
    let (n, d) = (2000, 10);
    let v = whitened_normal_pool(n, d, 8);
    let k_alpha = alpha_condition_from_evaluations(v.view()).unwrap();
    let k = required_iid_size(k_alpha, d, 0.5, 0.1, 0.0).unwrap() as usize;
    let sel = select_uniform(n, k, 1).unwrap();
    let rounds = vec![k_alpha; k];
    let check = verify_noise_controlling(&sel, &rounds, 0.5).unwrap();
    assert!(check.budget_ok);
    assert!((check.beta_sum - 1.0).abs() <= 1e-9);
}

#[test]
fn uniform_weights_over_whole_pool_are_exactly_isotropic() {
    let v = whitened_normal_pool(200, 4, 9);
    let mut sel = select_uniform(200, 1, 0).unwrap();
    sel.weights = (0..200)
        .map(|index| activereg_core::sampler::Weight { index, u: 1.0 / 200.0 })
        .collect();
    let ext = verify_norm_preserving(v.view(), &sel).unwrap();
    assert!((ext.lambda_min - 1.0).abs() <= 1e-6 && (ext.lambda_max - 1.0).abs() <= 1e-6);
}

#[test]
fn pool_with_nonpositive_scores_errors() {
    let v = ndarray::Array2::<f64>::zeros((5, 2));
    assert!(matches!(
        select_bss(v.view(), &BssConfig::new(0.5, 0)),
        Err(Error::Numerical(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn selection_invariants(
        n in 20usize..200,
        d in 1usize..6,
        eps in 0.2f64..=1.0,
        seed in any::<u64>(),
        pool_seed in any::<u64>(),
    ) {
        prop_assume!(n >= 4 * d);
        let v = whitened_normal_pool(n, d, pool_seed);
        let config = BssConfig::new(eps, seed);
        let sel = select_bss(v.view(), &config).unwrap();
        prop_assert!(sel.weights.iter().all(|w| w.u > 0.0 && w.index < n));
        prop_assert!(sel.draws.iter().all(|x| x.beta > 0.0 && x.s > 0.0));
        prop_assert!(sel.distinct_count <= sel.iterations && sel.distinct_count <= n);
        prop_assert!(sel.beta_sum() <= 1.5 + 1e-9);
        prop_assert!(sel.weights.windows(2).all(|w| w[0].index < w[1].index));
        let total_u: f64 = sel.weights.iter().map(|w| w.u).sum();
        let total_s: f64 = sel.draws.iter().map(|x| x.s).sum();
        prop_assert!((total_u - total_s / sel.mid).abs() <= 1e-9 * total_u);
        prop_assert_eq!(select_bss(v.view(), &config).unwrap(), sel);
    }
}
