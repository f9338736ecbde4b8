//! Seeded data generators for the experiments.

use activereg_core::linalg::{cholesky, SymMatrix};
use activereg_core::rng::{self, streams};
use activereg_core::{Dataset, Result};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

/// Standard normal rows rescaled so that `(1/n) V'V = I` exactly.
pub fn whitened_normal_pool(n: usize, d: usize, seed: u64) -> Result<Array2<f64>> {
    let mut rng = rng::seeded(seed, streams::SYNTH);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let l = cholesky(&SymMatrix::gram(x.view()).scaled(1.0 / n as f64))?;
    let mut v = x;
    for mut row in v.rows_mut() {
        for i in 0..d {
            let mut s = row[i];
            for k in 0..i {
                s -= l[[i, k]] * row[k];
            }
            row[i] = s / l[[i, i]];
        }
    }
    Ok(v)
}

/// Heavy-tailed features whose variances span three orders of magnitude,
/// with a linear target plus Gaussian noise.
///
/// Column `j` is `scale_j * t_j`, `t_j` Student-t with `dof` degrees of
/// freedom and `scale_j^2` log-spaced over `[1, 1000]`.
pub fn anisotropic_regression(n: usize, p: usize, dof: f64, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    let mut rng = rng::seeded(seed, streams::SYNTH);
    let t = StudentT::new(dof).map_err(|e| activereg_core::Error::Domain(e.to_string()))?;
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let frac = if p > 1 { j as f64 / (p - 1) as f64 } else { 0.0 };
            10f64.powf(1.5 * frac)
        })
        .collect();
    let w: Array1<f64> = scales
        .iter()
        .map(|s| rng.sample::<f64, _>(StandardNormal) / s)
        .collect();
    let mut features = Array2::zeros((n, p));
    let mut targets = Array1::zeros(n);
    for (mut row, y) in features.rows_mut().into_iter().zip(targets.iter_mut()) {
        for (x, s) in row.iter_mut().zip(&scales) {
            *x = s * t.sample(&mut rng);
        }
        *y = row.dot(&w) + noise_sigma * rng.sample::<f64, _>(StandardNormal);
    }
    let names = (0..p).map(|j| format!("x{j}")).collect();
    Dataset::new(
        features,
        targets,
        names,
        "y",
        format!("anisotropic_regression(n={n}, p={p}, dof={dof}, noise_sigma={noise_sigma}, seed={seed})"),
    )
}

/// Default heavy-tailed workload: finite variance, unbounded kurtosis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropicSetup {
    pub n: usize,
    pub p: usize,
    pub dof: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for AnisotropicSetup {
    fn default() -> Self {
        Self {
            n: 10_000,
            p: 10,
            dof: 2.5,
            noise_sigma: 1.0,
            seed: 1,
        }
    }
}

impl AnisotropicSetup {
    pub fn generate(&self) -> Result<Dataset> {
        anisotropic_regression(self.n, self.p, self.dof, self.noise_sigma, self.seed)
    }
}

/// A planted quadratic form `f*(x) = x'Qx + b'x + c` over standard normal inputs.
#[derive(Debug, Clone)]
pub struct PlantedQuadratic {
    pub q: Array2<f64>,
    pub b: Array1<f64>,
    pub c: f64,
}

impl PlantedQuadratic {
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed, streams::SYNTH);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let g = Array2::from_shape_fn((d, d), |_| normal());
        let q = (&g + &g.t()) / (2.0 * (d as f64).sqrt());
        let b = Array1::from_shape_fn(d, |_| normal());
        let c = normal();
        Self { q, b, c }
    }

    pub fn eval(&self, x: ndarray::ArrayView1<f64>) -> f64 {
        x.dot(&self.q.dot(&x)) + self.b.dot(&x) + self.c
    }

    /// `n` standard normal inputs with targets `f*(x) + noise_sigma * N(0, 1)`.
    pub fn sample(&self, n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
        let d = self.b.len();
        let mut rng = rng::seeded(seed, streams::EVAL);
        let features = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
        let targets: Array1<f64> = features
            .rows()
            .into_iter()
            .map(|x| self.eval(x) + noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let names = (0..d).map(|j| format!("x{j}")).collect();
        Dataset::new(
            features,
            targets,
            names,
            "y",
            format!("planted_quadratic(d={d}, n={n}, seed={seed})"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitened_pool_is_isotropic() {
        let v = whitened_normal_pool(500, 4, 1).unwrap();
        let g = v.t().dot(&v) / 500.0;
        let dev = (&g - &Array2::<f64>::eye(4))
            .iter()
            .fold(0.0_f64, |a, x| a.max(x.abs()));
        assert!(dev < 1e-12);
    }

    #[test]
    fn anisotropic_variances_span_three_decades() {
        let ds = anisotropic_regression(20_000, 5, 30.0, 0.1, 2).unwrap();
        let var = ds.features.var_axis(ndarray::Axis(0), 0.0);
        let ratio = var[4] / var[0];
        assert!(ratio > 500.0 && ratio < 2000.0, "{ratio}");
    }

    #[test]
    fn quadratic_targets_are_deterministic() {
        let f = PlantedQuadratic::random(4, 3);
        let a = f.sample(50, 0.1, 9).unwrap();
        assert_eq!(a, f.sample(50, 0.1, 9).unwrap());
        let x = a.features.row(0);
        assert!((a.targets[0] - f.eval(x)).abs() < 1.0);
    }
}
