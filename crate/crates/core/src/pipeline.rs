//! End-to-end active regression over an unlabeled pool: whiten a basis
//! against the pool, select points with the barrier sampler, query labels
//! for the selected points only, and fit weighted least squares.

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, FeatureBasis, FeatureMap};
use crate::erm::{fit_weighted, RegressionModel};
use crate::error::Result;
use crate::sampler::{select_bss, BssConfig, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub map: FeatureMap,
    pub selection: BssConfig,
    /// Ridge added to the pool second moment before whitening.
    pub basis_ridge: f64,
    /// Ridge of the final weighted fit.
    pub fit_ridge: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub basis: FeatureBasis,
    pub selection: SelectionResult,
    pub model: RegressionModel,
    /// Labels returned by the oracle, one per distinct selected index.
    pub labels: Array1<f64>,
}

impl PipelineRun {
    pub fn labels_queried(&self) -> usize {
        self.labels.len()
    }
}

/// Runs the pipeline; `label_of(i)` is called exactly once for every distinct
/// selected pool row `i`, in ascending order.
pub fn run<F>(pool: ArrayView2<f64>, config: &PipelineConfig, mut label_of: F) -> Result<PipelineRun>
where
    F: FnMut(usize) -> Result<f64>,
{
    let basis = build_basis(pool, config.map, config.basis_ridge)?;
    let v = basis.eval_rows(pool)?;
    let selection = select_bss(v.view(), &config.selection)?;
    let indices = selection.indices();
    let labels = indices.iter().map(|&i| label_of(i)).collect::<Result<Array1<f64>>>()?;
    let model = fit_weighted(
        v.select(Axis(0), &indices).view(),
        labels.view(),
        selection.weight_values().view(),
        config.fit_ridge,
    )?
    .bind(&basis)?;
    Ok(PipelineRun {
        basis,
        selection,
        model,
        labels,
    })
}
