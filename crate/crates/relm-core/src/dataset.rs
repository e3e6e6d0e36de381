//! CSV ingestion, sliding-window design construction, z-score normalization,
//! and chronological train/test splitting.
//!
//! A windowed dataset holds `X` with shape `n x S x Q` (sample, feature, lag)
//! and `Y` with shape `n`, where `X[i, s, t] = series_s[i + t - 1]` (1-based
//! lag `t`; oldest lag at `t = 1`, newest at `t = Q`) and
//! `Y[i] = series_0[i + Q]`. Feature 0 is the prediction target.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// A raw univariate series in time order.
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub name: String,
    pub values: Vec<f64>,
}

impl RawSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::DatasetTooShort {
                len: values.len(),
                q: 1,
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("raw series"));
        }
        Ok(Self {
            name: name.into(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-feature z-score parameters estimated from the training prefix.
/// `target` duplicates feature 0's parameters for convenience when
/// denormalizing predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormParams {
    #[inline]
    pub fn normalize(&self, feature: usize, v: f64) -> f64 {
        (v - self.mean[feature]) / self.std[feature]
    }

    #[inline]
    pub fn denormalize(&self, feature: usize, v: f64) -> f64 {
        v * self.std[feature] + self.mean[feature]
    }

    /// Std of the target feature, used to convert normalized RMSE back to
    /// original units.
    pub fn target_std(&self) -> f64 {
        self.std[0]
    }
}

/// Windowed (and optionally normalized) design matrix plus targets.
#[derive(Debug, Clone)]
pub struct TimeSeriesDataset {
    pub x: DenseTensor,
    pub y: DenseTensor,
    pub q: usize,
    pub s: usize,
    pub split_fraction: f64,
    pub n_train: usize,
    pub norm: Option<NormParams>,
}

impl TimeSeriesDataset {
    pub fn n(&self) -> usize {
        self.x.dims()[0]
    }

    pub fn n_test(&self) -> usize {
        self.n() - self.n_train
    }

    pub fn train_rows(&self) -> std::ops::Range<usize> {
        0..self.n_train
    }

    pub fn test_rows(&self) -> std::ops::Range<usize> {
        self.n_train..self.n()
    }

    /// Assemble a dataset directly from tensors (used by tests and benches
    /// that don't start from a raw series). All rows are treated as train
    /// unless a split is applied afterwards.
    pub fn from_parts(x: DenseTensor, y: DenseTensor) -> Result<Self> {
        if x.dims().len() != 3 || y.dims().len() != 1 {
            return Err(Error::Dimension(format!(
                "expected X rank 3 and Y rank 1, got {:?} / {:?}",
                x.dims(),
                y.dims()
            )));
        }
        if x.dims()[0] != y.dims()[0] {
            return Err(Error::Dimension(format!(
                "X has {} rows but Y has {}",
                x.dims()[0],
                y.dims()[0]
            )));
        }
        let (n, s, q) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        Ok(Self {
            x,
            y,
            q,
            s,
            split_fraction: 1.0,
            n_train: n,
            norm: None,
        })
    }
}

/// Read one numeric column from a headered CSV file, in file order.
pub fn load_csv(path: impl AsRef<Path>, column: &str) -> Result<RawSeries> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::MissingFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Ingestion {
            path: path.display().to_string(),
            row: 0,
            column: column.to_string(),
            reason: e.to_string(),
        })?
        .clone();
    let col_idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::MissingColumn {
            path: path.display().to_string(),
            column: column.to_string(),
        })?;

    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, counting the header line
        let record = record.map_err(|e| Error::Ingestion {
            path: path.display().to_string(),
            row,
            column: column.to_string(),
            reason: e.to_string(),
        })?;
        let cell = record.get(col_idx).ok_or_else(|| Error::Ingestion {
            path: path.display().to_string(),
            row,
            column: column.to_string(),
            reason: "missing cell".to_string(),
        })?;
        let trimmed = cell.trim();
        if trimmed.is_empty() {
            return Err(Error::Ingestion {
                path: path.display().to_string(),
                row,
                column: column.to_string(),
                reason: "blank cell".to_string(),
            });
        }
        let v: f64 = trimmed.parse().map_err(|_| Error::Ingestion {
            path: path.display().to_string(),
            row,
            column: column.to_string(),
            reason: format!("not a number: {trimmed:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Ingestion {
                path: path.display().to_string(),
                row,
                column: column.to_string(),
                reason: "non-finite value".to_string(),
            });
        }
        values.push(v);
    }
    RawSeries::new(path.display().to_string() + ":" + column, values)
}

/// Build the sliding-window design from a univariate series.
pub fn window(series: &RawSeries, q: usize) -> Result<TimeSeriesDataset> {
    window_multi(std::slice::from_ref(series), q)
}

/// Multivariate windowing: one series per feature, all the same length;
/// feature 0 supplies the target.
pub fn window_multi(series: &[RawSeries], q: usize) -> Result<TimeSeriesDataset> {
    if series.is_empty() {
        return Err(Error::Dimension("no feature series given".into()));
    }
    if q == 0 {
        return Err(Error::Config("window requires Q >= 1".into()));
    }
    let len = series[0].len();
    for s in series {
        if s.len() != len {
            return Err(Error::Dimension(format!(
                "feature series lengths differ: {} vs {}",
                len,
                s.len()
            )));
        }
    }
    if len <= q {
        return Err(Error::DatasetTooShort { len, q });
    }
    let n = len - q;
    let s_dim = series.len();
    let mut x = DenseTensor::zeros(&[n, s_dim, q])?;
    let mut y = DenseTensor::zeros(&[n])?;
    for i in 0..n {
        for (s, feat) in series.iter().enumerate() {
            for t in 1..=q {
                x.set3(i, s, t - 1, feat.values[i + t - 1]);
            }
        }
        y.data_mut()[i] = series[0].values[i + q];
    }
    TimeSeriesDataset::from_parts(x, y)
}

/// Chronologically split and z-score the dataset.
///
/// The first `floor(n * split_fraction)` rows are train. Per-feature mean/std
/// are estimated from the raw-value prefix the train rows touch (indices
/// `0 .. n_train + Q` of each feature series, population std) so that `X` and
/// `Y` are transformed consistently and no held-out value leaks into the
/// statistics. The same transform is applied to all rows.
pub fn normalize_split(ds: &TimeSeriesDataset, split_fraction: f64) -> Result<TimeSeriesDataset> {
    if !(split_fraction > 0.0 && split_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "split_fraction must be in (0, 1], got {split_fraction}"
        )));
    }
    if ds.norm.is_some() {
        return Err(Error::Config("dataset already normalized".into()));
    }
    let n = ds.n();
    let n_train = ((n as f64) * split_fraction).floor() as usize;
    if n_train == 0 {
        return Err(Error::Config("split leaves zero training rows".into()));
    }

    // Reconstruct each feature's raw training prefix from the windowed design:
    // feature s over raw indices 0..n_train+Q-1 appears as X[0..n_train, s, *]
    // and (for s = 0) Y[0..n_train]. Collect the distinct raw values.
    let q = ds.q;
    let mut mean = vec![0.0; ds.s];
    let mut std = vec![0.0; ds.s];
    for s in 0..ds.s {
        let mut vals = Vec::with_capacity(n_train + q);
        // raw[0 .. Q-1] from the first window row, raw[Q-1 + i] from row i's
        // newest lag; the target column supplies raw[i + Q] for feature 0.
        for t in 1..=q {
            vals.push(ds.x.get3(0, s, t - 1));
        }
        for i in 1..n_train {
            vals.push(ds.x.get3(i, s, q - 1));
        }
        if s == 0 {
            vals.push(ds.y.get1(n_train - 1));
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
        let sd = var.sqrt();
        if sd == 0.0 {
            return Err(Error::DegenerateSeries { feature: s });
        }
        mean[s] = m;
        std[s] = sd;
    }
    let norm = NormParams { mean, std };
    let mut out = apply_normalization(ds, &norm)?;
    out.split_fraction = split_fraction;
    out.n_train = n_train;
    Ok(out)
}

/// Apply existing normalization parameters to a raw (unnormalized) dataset,
/// e.g. when scoring new data against a trained model.
pub fn apply_normalization(ds: &TimeSeriesDataset, norm: &NormParams) -> Result<TimeSeriesDataset> {
    if norm.mean.len() != ds.s || norm.std.len() != ds.s {
        return Err(Error::Dimension(format!(
            "norm params cover {} features, dataset has {}",
            norm.mean.len(),
            ds.s
        )));
    }
    let mut out = ds.clone();
    let (n, s_dim, q) = (ds.n(), ds.s, ds.q);
    for i in 0..n {
        for s in 0..s_dim {
            for t in 0..q {
                let v = norm.normalize(s, ds.x.get3(i, s, t));
                out.x.set3(i, s, t, v);
            }
        }
        out.y.data_mut()[i] = norm.normalize(0, ds.y.get1(i));
    }
    out.x.assert_finite("normalized X")?;
    out.y.assert_finite("normalized Y")?;
    out.norm = Some(norm.clone());
    Ok(out)
}
