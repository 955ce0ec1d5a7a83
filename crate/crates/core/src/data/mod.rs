//! Tabular datasets: CSV ingestion, feature standardization and synthetic
//! benchmarks with planted subgroups.

mod rng;
mod synth;

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::rng::{stream_rng, Stream};
pub use self::synth::{sample_target, synth_generate, SynthConfig, SynthData, TargetDist};
use crate::rules::{Condition, CrispRule, FeatureKind};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub target: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub feature_kinds: Vec<FeatureKind>,
    pub feature_ranges: Vec<(f64, f64)>,
}

impl Dataset {
    /// Builds a dataset, inferring kinds (`{0,1}`-valued columns are binary)
    /// and ranges from the data.
    pub fn new(
        features: Matrix,
        target: Vec<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        if features.rows() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                actual: target.len(),
            });
        }
        if features.cols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                actual: feature_names.len(),
            });
        }
        if features
            .as_slice()
            .iter()
            .chain(&target)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "dataset contains non-finite values".into(),
            ));
        }
        let (feature_kinds, feature_ranges) = (0..features.cols())
            .map(|j| column_profile(features.column(j)))
            .unzip();
        Ok(Self {
            features,
            target,
            feature_names,
            target_name: target_name.into(),
            feature_kinds,
            feature_ranges,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

fn column_profile(values: impl Iterator<Item = f64>) -> (FeatureKind, (f64, f64)) {
    let mut binary = true;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for v in values {
        any = true;
        binary &= v == 0.0 || v == 1.0;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !any {
        return (FeatureKind::Continuous, (0.0, 0.0));
    }
    let kind = if binary {
        FeatureKind::Binary
    } else {
        FeatureKind::Continuous
    };
    (kind, (lo, hi))
}

/// A parsed CSV plus the number of rows skipped for bad cells.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

/// Reads a headered, comma-separated file; every column is parsed as a real.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<LoadedCsv> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut data = Vec::new();
    let mut target = Vec::new();
    let mut dropped = 0;
    let mut row = Vec::with_capacity(headers.len());
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        row.clear();
        let parsed = record.len() == headers.len()
            && record.iter().all(|cell| match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    row.push(v);
                    true
                }
                _ => false,
            });
        if !parsed {
            dropped += 1;
            continue;
        }
        target.push(row[target_idx]);
        data.extend(
            row.iter()
                .enumerate()
                .filter(|&(i, _)| i != target_idx)
                .map(|(_, v)| *v),
        );
    }
    if target.is_empty() {
        return Err(Error::NoUsableRows(path.to_path_buf()));
    }
    let features = Matrix::new(target.len(), feature_names.len(), data)?;
    Ok(LoadedCsv {
        dataset: Dataset::new(features, target, feature_names, target_column)?,
        dropped_rows: dropped,
    })
}

/// Writes features then the target as CSV, using shortest round-trip floats.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    let mut header = dataset.feature_names.join(",");
    if !header.is_empty() {
        header.push(',');
    }
    header.push_str(&dataset.target_name);
    writeln!(out, "{header}").map_err(io_err)?;
    let mut line = String::new();
    for (x, y) in dataset.features.iter_rows().zip(&dataset.target) {
        line.clear();
        for v in x {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&y.to_string());
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// How continuous columns are mapped; binary columns always stay `{0, 1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Observed range onto `[0, 1]`.
    #[default]
    MinMax,
    /// Zero mean, unit population variance.
    Standard,
}

/// Per-feature affine map `(v - shift) / scale` of the continuous columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub scaling: Scaling,
    pub shifts: Vec<f64>,
    pub scales: Vec<f64>,
    pub kinds: Vec<FeatureKind>,
    /// Continuous columns with zero variance; they scale to 0.
    pub constant_columns: Vec<usize>,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl FeatureScaler {
    pub fn fit(dataset: &Dataset, scaling: Scaling) -> Self {
        let mut constant_columns = Vec::new();
        let (shifts, scales) = dataset
            .feature_kinds
            .iter()
            .zip(&dataset.feature_ranges)
            .enumerate()
            .map(|(j, (kind, &(lo, hi)))| match kind {
                FeatureKind::Binary => (0.0, 1.0),
                FeatureKind::Continuous if hi > lo => match scaling {
                    Scaling::MinMax => (lo, hi - lo),
                    Scaling::Standard => {
                        mean_and_std(&dataset.features.column(j).collect::<Vec<_>>())
                    }
                },
                FeatureKind::Continuous => {
                    constant_columns.push(j);
                    (lo, 0.0)
                }
            })
            .unzip();
        Self {
            scaling,
            shifts,
            scales,
            kinds: dataset.feature_kinds.clone(),
            constant_columns,
        }
    }

    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        if self.scales[j] == 0.0 {
            0.0
        } else {
            (v - self.shifts[j]) / self.scales[j]
        }
    }

    pub fn unscale_value(&self, j: usize, v: f64) -> f64 {
        self.shifts[j] + v * self.scales[j]
    }

    pub fn scale(&self, features: &Matrix) -> Matrix {
        let mut out = features.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.scale_value(j, *v);
            }
        }
        out
    }

    pub fn unscale(&self, features: &Matrix) -> Matrix {
        let mut out = features.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.unscale_value(j, *v);
            }
        }
        out
    }

    /// Maps observed `(min, max)` ranges into scaled units.
    pub fn scale_ranges(&self, ranges: &[(f64, f64)]) -> Vec<(f64, f64)> {
        ranges
            .iter()
            .enumerate()
            .map(|(j, &(lo, hi))| (self.scale_value(j, lo), self.scale_value(j, hi)))
            .collect()
    }

    /// Maps interval bounds of a rule learned on scaled features back to
    /// original units.
    pub fn unscale_rule(&self, rule: &CrispRule) -> CrispRule {
        let mut out = rule.map_bounds(|j, v| self.unscale_value(j, v));
        // a zero-variance column collapses every bound onto one value
        for clause in &mut out.clauses {
            if let Condition::Interval { lo, hi } = clause.condition {
                if lo >= hi {
                    clause.condition = Condition::AlwaysTrue;
                }
            }
        }
        out
    }
}

/// Min-max scales the continuous features into `[0, 1]`.
pub fn feature_scaler(dataset: &Dataset) -> (Dataset, FeatureScaler) {
    scale_features(dataset, Scaling::MinMax)
}

/// Standardizes the continuous features; this is what training uses.
pub fn feature_standardizer(dataset: &Dataset) -> (Dataset, FeatureScaler) {
    scale_features(dataset, Scaling::Standard)
}

pub fn scale_features(dataset: &Dataset, scaling: Scaling) -> (Dataset, FeatureScaler) {
    let scaler = FeatureScaler::fit(dataset, scaling);
    let mut scaled = dataset.clone();
    scaled.features = scaler.scale(&dataset.features);
    scaled.feature_ranges = scaler.scale_ranges(&dataset.feature_ranges);
    (scaled, scaler)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_file() {
        let f = write_tmp("a,b,y\n0.5,1,2.0\n1.5,0,3.0\n2.5,1,4.5\n");
        let loaded = load_csv(f.path(), "y").unwrap();
        let d = loaded.dataset;
        assert_eq!((d.n_samples(), d.n_features()), (3, 2));
        assert_eq!(d.feature_names, vec!["a", "b"]);
        assert_eq!(
            d.feature_kinds,
            vec![FeatureKind::Continuous, FeatureKind::Binary]
        );
        assert_eq!(d.feature_ranges[0], (0.5, 2.5));
        assert_eq!(d.target, vec![2.0, 3.0, 4.5]);
        assert_eq!(loaded.dropped_rows, 0);
    }

    #[test]
    fn drops_bad_rows_and_names_missing_column() {
        let f = write_tmp("a,y\n1,2\nx,3\n4,\n5,6,7\n8,9\n");
        let loaded = load_csv(f.path(), "y").unwrap();
        assert_eq!(loaded.dataset.n_samples(), 2);
        assert_eq!(loaded.dropped_rows, 3);

        let err = load_csv(f.path(), "target").unwrap_err();
        assert!(err.to_string().contains("target"));
        let empty = write_tmp("a,y\nx,y\n");
        assert!(matches!(
            load_csv(empty.path(), "y"),
            Err(Error::NoUsableRows(_))
        ));
        assert!(load_csv("/nonexistent/file.csv", "y").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let x = Matrix::from_rows(&[vec![0.1, 1.0], vec![1.0 / 3.0, 0.0]]).unwrap();
        let d = Dataset::new(x, vec![2.5, -1e-7], vec!["p".into(), "q".into()], "y").unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, f.path()).unwrap();
        assert_eq!(load_csv(f.path(), "y").unwrap().dataset, d);
    }

    fn scaler_fixture() -> (Matrix, Dataset) {
        let x = Matrix::from_rows(&[
            vec![10.0, 0.0, 0.0, 7.0],
            vec![20.0, 1.0, 0.5, 7.0],
            vec![30.0, 1.0, 1.0, 7.0],
        ])
        .unwrap();
        let names = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let d = Dataset::new(x.clone(), vec![0.0; 3], names, "y").unwrap();
        (x, d)
    }

    fn check_scaled(x: &Matrix, scaled: &Dataset, scaler: &FeatureScaler, expect: [f64; 3]) {
        for (a, b) in scaled.features.column(0).zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let (lo, hi) = scaled.feature_ranges[0];
        assert!((lo - expect[0]).abs() < 1e-12 && (hi - expect[2]).abs() < 1e-12);
        assert_eq!(
            scaled.features.column(1).collect::<Vec<_>>(),
            vec![0.0, 1.0, 1.0]
        );
        assert_eq!(scaled.feature_ranges[1], (0.0, 1.0));
        assert_eq!(scaled.features.column(3).collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(scaler.constant_columns, vec![3]);
        let back = scaler.unscale(&scaled.features);
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn min_max_scaling() {
        let (x, d) = scaler_fixture();
        let (scaled, scaler) = feature_scaler(&d);
        check_scaled(&x, &scaled, &scaler, [0.0, 0.5, 1.0]);
        // already in [0, 1]
        let c: Vec<f64> = scaled.features.column(2).collect();
        assert_eq!(c, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn standard_scaling() {
        let (x, d) = scaler_fixture();
        let (scaled, scaler) = feature_standardizer(&d);
        // mean 20, population std sqrt(200 / 3)
        let z = 1.5f64.sqrt();
        check_scaled(&x, &scaled, &scaler, [-z, 0.0, z]);
    }
}
