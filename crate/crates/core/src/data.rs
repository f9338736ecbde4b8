//! Tabular data: CSV ingestion, synthetic regression data, seeded splits and RMSE.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Error, Result};
use crate::rng::{self, streams};

/// A numeric table with one designated target column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Where the data came from (a path or a generator description).
    pub source: String,
    /// Rows dropped at load time because a feature cell was missing or not a finite number.
    pub rejected_rows: usize,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        targets: Array1<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 {
            return Err(shape_err(format!("dataset must be at least 1x1, got {n}x{p}")));
        }
        if targets.len() != n {
            return Err(shape_err(format!("{n} feature rows but {} targets", targets.len())));
        }
        if feature_names.len() != p {
            return Err(shape_err(format!(
                "{p} feature columns but {} names",
                feature_names.len()
            )));
        }
        if !features.iter().chain(targets.iter()).all(|x| x.is_finite()) {
            return Err(Error::Numerical("dataset contains non-finite values".into()));
        }
        Ok(Self {
            features,
            targets,
            feature_names,
            target_name: target_name.into(),
            source: source.into(),
            rejected_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(domain_err("subset must contain at least one row"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(shape_err(format!("row {bad} outside a dataset of {}", self.len())));
        }
        Ok(Self {
            features: self.features.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            source: self.source.clone(),
            rejected_rows: 0,
        })
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Reads a headed CSV file and extracts `target_column` as the target.
///
/// A row whose feature cells are not all finite numbers is dropped and
/// counted in `rejected_rows`. A target cell that is not a number is a
/// schema error; a target that parses to NaN or infinity drops the row.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?
        .clone();
    let target_idx = headers
        .iter()
        .position(|h| h.trim() == target_column)
        .ok_or_else(|| Error::Schema(format!("target column {target_column:?} not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::Schema("no feature columns besides the target".into()));
    }
    let p = feature_names.len();

    let mut values = Vec::new();
    let mut targets = Vec::new();
    let mut rejected = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Schema(format!("malformed CSV record: {e}")))?;
        let row_no = line + 2;
        if record.len() != headers.len() {
            return Err(Error::Schema(format!(
                "row {row_no} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let target = parse_cell(&record[target_idx]).ok_or_else(|| {
            Error::Schema(format!(
                "row {row_no}: target {:?} is not a number",
                &record[target_idx]
            ))
        })?;
        let row: Option<Vec<f64>> = record
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, c)| parse_cell(c).filter(|x| x.is_finite()))
            .collect();
        match row {
            Some(row) if target.is_finite() => {
                values.extend(row);
                targets.push(target);
            }
            _ => rejected += 1,
        }
    }
    let n = targets.len();
    if n == 0 {
        return Err(Error::Schema(format!("no usable rows in {}", path.display())));
    }
    let features = Array2::from_shape_vec((n, p), values).expect("row-major buffer of n * p values");
    let mut ds = Dataset::new(
        features,
        Array1::from(targets),
        feature_names,
        target_column,
        path.display().to_string(),
    )?;
    ds.rejected_rows = rejected;
    Ok(ds)
}

/// Writes features then the target column. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(&ds.target_name);
    writer.write_record(&header).map_err(csv_err)?;
    for (row, target) in ds.features.rows().into_iter().zip(ds.targets.iter()) {
        let cells: Vec<String> = row.iter().chain(std::iter::once(target)).map(f64::to_string).collect();
        writer.write_record(&cells).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// Generator parameters and hidden weights of a synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthProvenance {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub noise_sigma: f64,
    pub w_star: Vec<f64>,
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;

/// Standard normal features, standard normal hidden weights `w*`, and
/// targets `X w* + noise_sigma * N(0, 1)`.
pub fn synth_regression(n: usize, p: usize, noise_sigma: f64, seed: u64) -> Result<(Dataset, SynthProvenance)> {
    if n == 0 || p == 0 {
        return Err(domain_err(format!("need n >= 1 and p >= 1, got n = {n}, p = {p}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(domain_err(format!(
            "noise_sigma must be non-negative, got {noise_sigma}"
        )));
    }
    let mut rng = rng::seeded(seed, streams::SYNTH);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let w_star: Array1<f64> = (0..p).map(|_| normal()).collect();
    let mut features = Array2::zeros((n, p));
    let mut targets = Array1::zeros(n);
    for (mut row, t) in features.rows_mut().into_iter().zip(targets.iter_mut()) {
        row.mapv_inplace(|_| normal());
        *t = row.dot(&w_star) + noise_sigma * normal();
    }
    let names = (0..p).map(|j| format!("x{j}")).collect();
    let provenance = SynthProvenance {
        seed,
        n,
        p,
        noise_sigma,
        w_star: w_star.to_vec(),
    };
    let source = format!("synth_regression(n={n}, p={p}, noise_sigma={noise_sigma}, seed={seed})");
    let ds = Dataset::new(features, targets, names, "y", source)?;
    Ok((ds, provenance))
}

/// Disjoint pool/test index sets covering `[0, n)`, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub pool_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    /// Stored as bits so the split stays `Eq`.
    test_frac_bits: u64,
}

impl Split {
    pub fn test_frac(&self) -> f64 {
        f64::from_bits(self.test_frac_bits)
    }
}

/// Seeded uniform permutation of `[0, n)`; the first `round(test_frac * n)`
/// entries become the test set.
pub fn split_indices(n: usize, test_frac: f64, seed: u64) -> Result<Split> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(domain_err(format!("test_frac must lie in (0, 1), got {test_frac}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed, streams::SPLIT));
    let n_test = (test_frac * n as f64).round() as usize;
    let mut test_indices = order[..n_test].to_vec();
    let mut pool_indices = order[n_test..].to_vec();
    test_indices.sort_unstable();
    pool_indices.sort_unstable();
    Ok(Split {
        pool_indices,
        test_indices,
        seed,
        test_frac_bits: test_frac.to_bits(),
    })
}

pub fn split(ds: &Dataset, test_frac: f64, seed: u64) -> Result<Split> {
    split_indices(ds.len(), test_frac, seed)
}

pub fn rmse(predictions: ArrayView1<f64>, targets: ArrayView1<f64>) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(shape_err(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(shape_err("rmse of empty vectors"));
    }
    let sq: f64 = predictions
        .iter()
        .zip(targets.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sq / predictions.len() as f64).sqrt())
}

/// Per-column affine rescaling to zero mean and unit (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column statistics of `xs`; constant columns keep scale 1.
    pub fn fit(xs: ndarray::ArrayView2<f64>) -> Result<Self> {
        if xs.nrows() == 0 {
            return Err(shape_err("cannot standardize an empty table"));
        }
        let mean = xs.mean_axis(Axis(0)).expect("non-empty");
        let std = xs.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        Ok(Self {
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }

    pub fn apply(&self, xs: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.mean.len() {
            return Err(shape_err(format!(
                "{} columns against a standardizer of width {}",
                xs.ncols(),
                self.mean.len()
            )));
        }
        let mean = ArrayView1::from(&self.mean);
        let std = ArrayView1::from(&self.std);
        Ok((&xs - &mean) / std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        path
    }

    #[test]
    fn loads_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "a.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let ds = load_csv(&path, "y").unwrap();
        assert_eq!(ds.features.dim(), (3, 2));
        assert_eq!(ds.targets, array![3.0, 6.0, 9.0]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.rejected_rows, 0);
    }

    #[test]
    fn drops_bad_feature_rows_and_rejects_bad_targets() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "b.csv", "a,b,y\n1,2,3\n4,oops,6\n7,8,9\n1,NaN,2\n");
        let ds = load_csv(&path, "y").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.rejected_rows, 2);

        let path = write_file(&dir, "c.csv", "a,y\n1,3\n4,six\n");
        assert!(matches!(load_csv(&path, "y"), Err(Error::Schema(_))));
        assert!(matches!(load_csv(&path, "target"), Err(Error::Schema(_))));
        assert!(matches!(
            load_csv(dir.path().join("missing.csv"), "y"),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn synth_is_deterministic_and_noiseless_is_exact() {
        let (a, pa) = synth_regression(20, 3, 0.0, 7).unwrap();
        let (b, pb) = synth_regression(20, 3, 0.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        let w = Array1::from(pa.w_star.clone());
        assert_eq!(a.features.dot(&w), a.targets);
        assert_ne!(synth_regression(20, 3, 0.0, 8).unwrap().0, a);
    }

    #[test]
    fn split_sizes() {
        let s = split_indices(10, 0.2, 1).unwrap();
        assert_eq!(s.test_indices.len(), 2);
        assert_eq!(s.pool_indices.len(), 8);
        let mut all: Vec<usize> = s.pool_indices.iter().chain(&s.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s, split_indices(10, 0.2, 1).unwrap());
        assert_eq!(s.test_frac(), 0.2);
        assert!(split_indices(10, 0.0, 1).is_err());
        assert!(split_indices(10, 1.0, 1).is_err());
    }

    #[test]
    fn rmse_examples() {
        let y = array![1.0, -2.0, 3.5];
        assert_eq!(rmse(y.view(), y.view()).unwrap(), 0.0);
        let shifted = &y + 0.75;
        assert_eq!(rmse(shifted.view(), y.view()).unwrap(), 0.75);
        assert!(matches!(rmse(y.view(), array![1.0].view()), Err(Error::Shape(_))));
    }

    #[test]
    fn standardizer_centers_columns() {
        let xs = array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]];
        let st = Standardizer::fit(xs.view()).unwrap();
        let z = st.apply(xs.view()).unwrap();
        assert!(z.column(0).sum().abs() < 1e-12);
        assert_eq!(z.column(1), array![0.0, 0.0, 0.0]);
    }
}
