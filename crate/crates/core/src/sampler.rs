//! Randomized barrier (BSS-style) iterative importance sampling over a finite
//! pool, the uniform i.i.d. baseline, and the checks that a selection is
//! norm preserving and noise controlling.
//!
//! The pool distribution `D` is uniform over the `n` rows of `V` (the basis
//! evaluated at every pool point). Round `j` keeps a matrix `B_j` strictly
//! between two moving barriers `l_j < lambda(B_j) < r_j` and samples a row
//! with probability proportional to its score
//!
//! ```text
//! sigma(x) = v(x)' (r_j I - B_j)^-1 v(x) + v(x)' (B_j - l_j I)^-1 v(x)
//! ```
//!
//! The chosen row is added to `B_j` with weight `s_j = gamma D(x) / (Phi_j D_j(x))`,
//! both barriers advance, and the loop stops as soon as the barrier gap
//! reaches `8 d / gamma`. Final importance weights are `u_j = s_j / mid`.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Error, PartialRun, Result};
use crate::linalg::{self, EigenExtremes, SymMatrix, DEFAULT_EIG_TOL};
use crate::rng::{self, streams};

/// Default value of the absolute constant in `gamma = sqrt(eps) / c0`.
pub const DEFAULT_C0: f64 = 3.0;

/// Budget on the sum of round coefficients for a noise-controlling selection.
pub const BETA_BUDGET: f64 = 1.5;

pub fn gamma_for(epsilon: f64, c0: f64) -> f64 {
    epsilon.sqrt() / c0
}

/// `mid = (4d / gamma) / (1/(1 - gamma) - 1/(1 + gamma))`.
pub fn mid_for(gamma: f64, d: usize) -> f64 {
    (4.0 * d as f64 / gamma) / (1.0 / (1.0 - gamma) - 1.0 / (1.0 + gamma))
}

/// Hard cap used when none is given: `ceil(100 d / gamma^2)`.
pub fn default_max_iters(gamma: f64, d: usize) -> usize {
    (100.0 * d as f64 / (gamma * gamma)).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BssConfig {
    pub epsilon: f64,
    pub seed: u64,
    pub c0: f64,
    pub max_iters: Option<usize>,
}

impl BssConfig {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        Self {
            epsilon,
            seed,
            c0: DEFAULT_C0,
            max_iters: None,
        }
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = Some(max_iters);
        self
    }

    pub fn gamma(&self) -> f64 {
        gamma_for(self.epsilon, self.c0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(domain_err(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        if !(self.c0 >= 1.0) || !self.c0.is_finite() {
            return Err(domain_err(format!("c0 must be at least 1, got {}", self.c0)));
        }
        Ok(())
    }
}

/// Running state of the barrier procedure.
///
/// Both inverses are rebuilt from an eigendecomposition of `B` after every
/// step; the same decomposition gives the potential and the containment check.
#[derive(Debug, Clone)]
pub struct BarrierState {
    b: SymMatrix,
    lower: f64,
    upper: f64,
    inv_upper: SymMatrix,
    inv_lower: SymMatrix,
    iteration: usize,
    gamma: f64,
    phi: f64,
}

impl BarrierState {
    /// `B_0 = 0`, `l_0 = -2d/gamma`, `r_0 = 2d/gamma`.
    pub fn new(d: usize, gamma: f64) -> Result<Self> {
        if d == 0 {
            return Err(domain_err("basis dimension must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(domain_err(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let edge = 2.0 * d as f64 / gamma;
        let mut state = Self {
            b: SymMatrix::zeros(d),
            lower: -edge,
            upper: edge,
            inv_upper: SymMatrix::zeros(d),
            inv_lower: SymMatrix::zeros(d),
            iteration: 0,
            gamma,
            phi: 0.0,
        };
        state.refresh()?;
        Ok(state)
    }

    fn refresh(&mut self) -> Result<()> {
        let eig = linalg::symmetric_eigen(&self.b, DEFAULT_EIG_TOL)?;
        let ext = eig.extremes();
        if !ext.strictly_within(self.lower, self.upper) {
            return Err(Error::BarrierViolation {
                iteration: self.iteration,
                lambda_min: ext.lambda_min,
                lambda_max: ext.lambda_max,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let (l, r) = (self.lower, self.upper);
        self.inv_upper = eig.map_spectrum(|x| 1.0 / (r - x));
        self.inv_lower = eig.map_spectrum(|x| 1.0 / (x - l));
        self.phi = eig.values.iter().map(|&x| 1.0 / (r - x) + 1.0 / (x - l)).sum();
        debug_assert!((self.phi - self.inv_upper.trace() - self.inv_lower.trace()).abs() <= 1e-6 * self.phi);
        Ok(())
    }

    pub fn b(&self) -> &SymMatrix {
        &self.b
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }

    /// `(r I - B)^-1`
    pub fn inv_upper(&self) -> &SymMatrix {
        &self.inv_upper
    }

    /// `(B - l I)^-1`
    pub fn inv_lower(&self) -> &SymMatrix {
        &self.inv_lower
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `Phi = tr (r I - B)^-1 + tr (B - l I)^-1`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Per-row scores `sigma_i` for the rows of `v`.
    pub fn scores(&self, v: ArrayView2<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(v.nrows());
        self.scores_into(v, out.as_slice_mut().expect("fresh array is contiguous"));
        out
    }

    /// Writes `sigma_i` for every row of `v` into `out`.
    pub fn scores_into(&self, v: ArrayView2<f64>, out: &mut [f64]) {
        let d = self.b.dim();
        assert_eq!(v.ncols(), d, "pool rows must have the basis dimension");
        assert_eq!(v.nrows(), out.len());
        // Upper triangle of the summed inverses, off-diagonal entries doubled.
        let (mu, ml) = (self.inv_upper.as_array(), self.inv_lower.as_array());
        let mut packed = Vec::with_capacity(d * (d + 1) / 2);
        for a in 0..d {
            packed.push(mu[[a, a]] + ml[[a, a]]);
            for b in a + 1..d {
                packed.push(2.0 * (mu[[a, b]] + ml[[a, b]]));
            }
        }
        let quad = |row: &[f64]| {
            let mut total = 0.0;
            let mut k = 0;
            for a in 0..d {
                let tail = &packed[k..k + d - a];
                let acc: f64 = tail.iter().zip(&row[a..]).map(|(m, x)| m * x).sum();
                total += row[a] * acc;
                k += d - a;
            }
            total.max(0.0)
        };
        match v.as_slice() {
            Some(flat) => {
                for (o, row) in out.iter_mut().zip(flat.chunks_exact(d)) {
                    *o = quad(row);
                }
            }
            None => {
                let mut buf = vec![0.0; d];
                for (o, row) in out.iter_mut().zip(v.rows()) {
                    for (b, x) in buf.iter_mut().zip(row.iter()) {
                        *b = *x;
                    }
                    *o = quad(&buf);
                }
            }
        }
    }

    /// Adds `s v v'` to `B` and advances both barriers using the current `Phi`.
    pub fn step(&mut self, v: ArrayView1<f64>, s: f64) -> Result<()> {
        let (gamma, phi) = (self.gamma, self.phi);
        self.b.add_outer(s, v);
        self.upper += gamma / (phi * (1.0 - gamma));
        self.lower += gamma / (phi * (1.0 + gamma));
        self.iteration += 1;
        self.refresh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Bss,
    Uniform,
}

/// One round of the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub index: usize,
    pub s: f64,
    pub beta: f64,
}

/// Aggregated importance weight of one distinct pool row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub index: usize,
    pub u: f64,
}

/// Per-round trace of a barrier run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BarrierTrace {
    /// `Phi_0, ..., Phi_k` (one more entry than there are rounds).
    pub potentials: Vec<f64>,
    /// `K_{alpha, D_j}` of each round's sampling distribution.
    pub round_alpha_condition: Vec<f64>,
    pub final_lower: f64,
    pub final_upper: f64,
    /// `sum_j gamma / Phi_j`
    pub sum_gamma_over_phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub strategy: Strategy,
    pub draws: Vec<Draw>,
    /// Sorted by pool index.
    pub weights: Vec<Weight>,
    pub iterations: usize,
    /// Zero for the uniform baseline.
    pub gamma: f64,
    /// Zero for the uniform baseline.
    pub mid: f64,
    /// Zero for the uniform baseline.
    pub epsilon: f64,
    pub c0: f64,
    pub seed: u64,
    pub distinct_count: usize,
    /// Spectrum of `A'A`; filled by the barrier sampler, or later through
    /// [`SelectionResult::attach_gram_extremes`].
    pub gram_extremes: Option<EigenExtremes>,
    pub trace: Option<BarrierTrace>,
}

impl SelectionResult {
    pub fn beta_sum(&self) -> f64 {
        self.draws.iter().map(|d| d.beta).sum()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.weights.iter().map(|w| w.index).collect()
    }

    pub fn weight_values(&self) -> Array1<f64> {
        self.weights.iter().map(|w| w.u).collect()
    }

    pub fn attach_gram_extremes(&mut self, v: ArrayView2<f64>) -> Result<EigenExtremes> {
        let ext = verify_norm_preserving(v, self)?;
        self.gram_extremes = Some(ext);
        Ok(ext)
    }

    pub fn to_file(&self) -> SelectionFile {
        SelectionFile {
            strategy: self.strategy,
            epsilon: self.epsilon,
            seed: self.seed,
            c0: self.c0,
            gamma: self.gamma,
            mid: self.mid,
            iterations: self.iterations,
            distinct_count: self.distinct_count,
            gram_lambda_min: self.gram_extremes.map(|e| e.lambda_min),
            gram_lambda_max: self.gram_extremes.map(|e| e.lambda_max),
            draws: self.draws.clone(),
            weights: self.weights.clone(),
            provenance: None,
        }
    }

    /// Rebuilds a selection from its file form. Per-round traces are not stored.
    pub fn from_file(file: &SelectionFile) -> Result<Self> {
        let gram_extremes = match (file.gram_lambda_min, file.gram_lambda_max) {
            (Some(lo), Some(hi)) => Some(EigenExtremes::new(lo, hi)),
            (None, None) => None,
            _ => {
                return Err(Error::Schema(
                    "gram_lambda_min and gram_lambda_max must be given together".into(),
                ))
            }
        };
        if file.weights.iter().any(|w| !(w.u > 0.0)) {
            return Err(Error::Schema("selection weights must be positive".into()));
        }
        Ok(Self {
            strategy: file.strategy,
            draws: file.draws.clone(),
            weights: file.weights.clone(),
            iterations: file.iterations,
            gamma: file.gamma,
            mid: file.mid,
            epsilon: file.epsilon,
            c0: file.c0,
            seed: file.seed,
            distinct_count: file.distinct_count,
            gram_extremes,
            trace: None,
        })
    }
}

/// Tool name, version and the exact argument list that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub args: Vec<String>,
}

/// On-disk form of a selection. Indices are 0-based rows of the pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub strategy: Strategy,
    pub epsilon: f64,
    pub seed: u64,
    pub c0: f64,
    pub gamma: f64,
    pub mid: f64,
    pub iterations: usize,
    pub distinct_count: usize,
    pub gram_lambda_min: Option<f64>,
    pub gram_lambda_max: Option<f64>,
    pub draws: Vec<Draw>,
    pub weights: Vec<Weight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn aggregate(draws: &[Draw], per_draw_u: impl Fn(&Draw) -> f64) -> Vec<Weight> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for d in draws {
        *acc.entry(d.index).or_insert(0.0) += per_draw_u(d);
    }
    acc.into_iter().map(|(index, u)| Weight { index, u }).collect()
}

fn check_pool(v: ArrayView2<f64>) -> Result<()> {
    let (n, d) = v.dim();
    if n == 0 || d == 0 {
        return Err(shape_err(format!("pool matrix is {n}x{d}")));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("pool matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Runs the randomized barrier sampler over the rows of `v` (`n x d`).
///
/// The loop body runs until the post-update gap `r_{j+1} - l_{j+1}` reaches
/// `8 d / gamma`; the first round always runs since the initial gap is `4 d / gamma`.
///
/// The rows should be whitened so that `(1/n) V'V` is close to the identity.
/// Far from isotropy the lower barrier catches up with `B`, the potential
/// grows and the run can stall until it hits the iteration cap.
pub fn select_bss(v: ArrayView2<f64>, config: &BssConfig) -> Result<SelectionResult> {
    config.validate()?;
    check_pool(v)?;
    let (n, d) = v.dim();
    let gamma = config.gamma();
    let mid = mid_for(gamma, d);
    let cap = config.max_iters.unwrap_or_else(|| default_max_iters(gamma, d));
    let target_gap = 8.0 * d as f64 / gamma;
    let pool_mass = 1.0 / n as f64;

    let sq_norms = v.map_axis(Axis(1), |row| row.dot(&row));
    let mut state = BarrierState::new(d, gamma)?;
    let mut rng = rng::seeded(config.seed, streams::SELECT);

    let mut draws: Vec<Draw> = Vec::new();
    let mut potentials = vec![state.phi()];
    let mut round_alpha_condition = Vec::new();
    let mut sum_gamma_over_phi = 0.0;
    let mut cumulative = vec![0.0; n];
    let mut sigma = vec![0.0; n];

    loop {
        if draws.len() >= cap {
            return Err(Error::IterationCap {
                cap,
                partial: PartialRun {
                    iterations: draws.len(),
                    gamma,
                    mid,
                    lower: state.lower(),
                    upper: state.upper(),
                    sum_gamma_over_phi,
                },
            });
        }
        let phi = state.phi();
        state.scores_into(v, &mut sigma);
        let mut total = 0.0;
        for (c, s) in cumulative.iter_mut().zip(sigma.iter()) {
            total += s;
            *c = total;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical(format!(
                "sampling scores sum to {total} at iteration {}",
                draws.len()
            )));
        }

        // K_{alpha, D_j} = max_x (D(x) / D_j(x)) ||v(x)||^2 over rows D_j can reach.
        let k_round = sigma
            .iter()
            .zip(sq_norms.iter())
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, q)| pool_mass * total / s * q)
            .fold(0.0_f64, f64::max);
        round_alpha_condition.push(k_round);

        let target = rng.random::<f64>() * total;
        let mut index = cumulative.partition_point(|&c| c <= target).min(n - 1);
        while sigma[index] <= 0.0 {
            // Only reachable through rounding at the very top of the CDF.
            index -= 1;
        }
        let sampling_mass = sigma[index] / total;
        let s = gamma * (pool_mass / sampling_mass) / phi;
        draws.push(Draw {
            index,
            s,
            beta: gamma / (phi * mid),
        });
        sum_gamma_over_phi += gamma / phi;

        state.step(v.row(index), s)?;
        potentials.push(state.phi());
        if state.gap() >= target_gap {
            break;
        }
    }

    let weights = aggregate(&draws, |d| d.s / mid);
    let mut result = SelectionResult {
        strategy: Strategy::Bss,
        iterations: draws.len(),
        distinct_count: weights.len(),
        draws,
        weights,
        gamma,
        mid,
        epsilon: config.epsilon,
        c0: config.c0,
        seed: config.seed,
        gram_extremes: None,
        trace: Some(BarrierTrace {
            potentials,
            round_alpha_condition,
            final_lower: state.lower(),
            final_upper: state.upper(),
            sum_gamma_over_phi,
        }),
    };
    result.attach_gram_extremes(v)?;
    Ok(result)
}

/// `k` i.i.d. uniform draws with replacement from a pool of `n`, each with
/// `beta = u = 1/k`.
pub fn select_uniform(n: usize, k: usize, seed: u64) -> Result<SelectionResult> {
    if n == 0 {
        return Err(domain_err("pool must be non-empty"));
    }
    if k == 0 {
        return Err(domain_err("sample size must be at least 1"));
    }
    let mut rng = rng::seeded(seed, streams::UNIFORM);
    let share = 1.0 / k as f64;
    let draws: Vec<Draw> = (0..k)
        .map(|_| Draw {
            index: rng.random_range(0..n),
            s: 1.0,
            beta: share,
        })
        .collect();
    let weights = aggregate(&draws, |_| share);
    Ok(SelectionResult {
        strategy: Strategy::Uniform,
        iterations: k,
        distinct_count: weights.len(),
        draws,
        weights,
        gamma: 0.0,
        mid: 0.0,
        epsilon: 0.0,
        c0: 0.0,
        seed,
        gram_extremes: None,
        trace: None,
    })
}

/// Unrounded i.i.d. sample size `6 K log(d / delta) / (eps^2 (1 - rho d))`.
pub fn iid_size_bound(k_alpha: f64, d: usize, epsilon: f64, delta: f64, rho: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain_err(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain_err(format!("delta must lie in (0, 1), got {delta}")));
    }
    if d == 0 {
        return Err(domain_err("dimension must be positive"));
    }
    if !(k_alpha >= 1.0) {
        return Err(domain_err(format!("K_alpha must be at least 1, got {k_alpha}")));
    }
    let rho_d = rho * d as f64;
    if !(rho >= 0.0 && rho_d < 1.0) {
        return Err(domain_err(format!("need 0 <= rho * d < 1, got {rho_d}")));
    }
    Ok(6.0 * k_alpha * (d as f64 / delta).ln() / (epsilon * epsilon * (1.0 - rho_d)))
}

/// Number of uniform draws after which `||A'A - I|| <= eps` with probability
/// at least `1 - delta`.
pub fn required_iid_size(k_alpha: f64, d: usize, epsilon: f64, delta: f64, rho: f64) -> Result<u64> {
    Ok(iid_size_bound(k_alpha, d, epsilon, delta, rho)?.ceil() as u64)
}

/// Spectrum of `A'A`, where `A` has one row `sqrt(u_i) v(x_i)'` per distinct
/// selected index.
pub fn verify_norm_preserving(v: ArrayView2<f64>, selection: &SelectionResult) -> Result<EigenExtremes> {
    let (n, d) = v.dim();
    if d == 0 {
        return Err(shape_err("pool matrix has no columns"));
    }
    let mut gram = SymMatrix::zeros(d);
    for w in &selection.weights {
        if w.index >= n {
            return Err(shape_err(format!("selected index {} outside a pool of {n}", w.index)));
        }
        gram.add_outer(w.u, v.row(w.index));
    }
    linalg::eig_extremes(&gram, DEFAULT_EIG_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCheck {
    pub budget_ok: bool,
    pub per_round_ok: bool,
    pub beta_sum: f64,
    /// `max_j beta_j K_{alpha, D_j}`
    pub max_round_product: f64,
}

/// Checks `sum beta_j <= 3/2` and `beta_j K_{alpha, D_j} <= eps / 2` for every round.
pub fn verify_noise_controlling(
    selection: &SelectionResult,
    k_alpha_per_round: &[f64],
    epsilon: f64,
) -> Result<NoiseCheck> {
    if k_alpha_per_round.len() != selection.draws.len() {
        return Err(shape_err(format!(
            "{} round condition numbers for {} rounds",
            k_alpha_per_round.len(),
            selection.draws.len()
        )));
    }
    let beta_sum = selection.beta_sum();
    let max_round_product = selection
        .draws
        .iter()
        .zip(k_alpha_per_round)
        .map(|(d, k)| d.beta * k)
        .fold(0.0_f64, f64::max);
    Ok(NoiseCheck {
        budget_ok: beta_sum <= BETA_BUDGET,
        per_round_ok: max_round_product <= epsilon / 2.0,
        beta_sum,
        max_round_product,
    })
}
