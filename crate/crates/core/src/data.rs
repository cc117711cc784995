//! Tabular datasets: CSV ingestion, row splitting and response standardization.
//!
//! Missing feature values are stored as `NaN`. Responses are always complete.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Matrix, Result};

/// Standard deviations below this are replaced by it.
pub const SCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    responses: Matrix,
    feature_names: Vec<String>,
    response_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        responses: Matrix,
        feature_names: Vec<String>,
        response_names: Vec<String>,
    ) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.rows() != responses.rows() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: responses.rows(),
            });
        }
        if features.cols() == 0 || responses.cols() == 0 {
            return Err(Error::invalid("a dataset needs at least one feature and one response"));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                got: feature_names.len(),
            });
        }
        if response_names.len() != responses.cols() {
            return Err(Error::DimensionMismatch {
                expected: responses.cols(),
                got: response_names.len(),
            });
        }
        if responses.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("responses must be finite"));
        }
        Ok(Self {
            features,
            responses,
            feature_names,
            response_names,
        })
    }

    /// Dataset with generated column names `x1.. / y1..`.
    pub fn from_matrices(features: Matrix, responses: Matrix) -> Result<Self> {
        let fx = default_names("x", features.cols());
        let fy = default_names("y", responses.cols());
        Self::new(features, responses, fx, fy)
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn d_x(&self) -> usize {
        self.features.cols()
    }

    pub fn d_y(&self) -> usize {
        self.responses.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn responses(&self) -> &Matrix {
        &self.responses
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn response_names(&self) -> &[String] {
        &self.response_names
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select_rows(indices),
            self.responses.select_rows(indices),
            self.feature_names.clone(),
            self.response_names.clone(),
        )
    }

    /// Same dataset with every response row replaced by `f(row)`.
    pub fn map_responses(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let rows = self
            .responses
            .iter_rows()
            .map(&mut f)
            .collect::<Result<Vec<_>>>()?;
        let responses = Matrix::from_rows(self.d_y(), rows)?;
        Self::new(
            self.features.clone(),
            responses,
            self.feature_names.clone(),
            self.response_names.clone(),
        )
    }
}

pub fn default_names(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        return vec![prefix.to_string()];
    }
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Raw CSV contents: header plus string cells.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
}

impl CsvTable {
    /// Reads a headed CSV. Zero data rows are allowed here; [`load_csv`]
    /// rejects them.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut seen = HashSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::DuplicateColumn(h.clone()));
            }
        }
        let mut records = Vec::new();
        for rec in reader.records() {
            records.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, records })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Parses the named columns into a matrix. Feature columns map empty
    /// cells and `NaN` to missing; response columns must be numeric.
    pub fn numeric(&self, columns: &[usize], kind: ColumnKind) -> Result<Matrix> {
        let mut data = Vec::with_capacity(self.records.len() * columns.len());
        for (row, rec) in self.records.iter().enumerate() {
            for &c in columns {
                let cell = rec[c].trim();
                let column = || self.headers[c].clone();
                let value = match kind {
                    ColumnKind::Feature => parse_feature(cell).ok_or_else(|| Error::MalformedFeature {
                        column: column(),
                        row,
                        value: cell.to_string(),
                    })?,
                    ColumnKind::Response => parse_response(cell).ok_or_else(|| Error::MalformedResponse {
                        column: column(),
                        row,
                        value: cell.to_string(),
                    })?,
                };
                data.push(value);
            }
        }
        Matrix::new(self.records.len(), columns.len(), data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Feature,
    Response,
}

fn parse_feature(cell: &str) -> Option<f64> {
    if cell.is_empty() || cell == "NaN" {
        return Some(f64::NAN);
    }
    cell.parse::<f64>().ok().filter(|v| !v.is_nan())
}

fn parse_response(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a CSV where `response_columns` name the responses and every other
/// column is a feature.
pub fn load_csv(path: impl AsRef<Path>, response_columns: &[String]) -> Result<Dataset> {
    let table = CsvTable::read(path)?;
    dataset_from_table(&table, response_columns)
}

pub fn dataset_from_table(table: &CsvTable, response_columns: &[String]) -> Result<Dataset> {
    if table.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if response_columns.is_empty() {
        return Err(Error::invalid("at least one response column is required"));
    }
    let resp_idx = response_columns
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<Vec<_>>>()?;
    let feat_idx: Vec<usize> = (0..table.headers.len()).filter(|i| !resp_idx.contains(i)).collect();
    let features = table.numeric(&feat_idx, ColumnKind::Feature)?;
    let responses = table.numeric(&resp_idx, ColumnKind::Response)?;
    Dataset::new(
        features,
        responses,
        feat_idx.iter().map(|&i| table.headers[i].clone()).collect(),
        response_columns.to_vec(),
    )
}

/// Writes features then responses. Values use the shortest representation
/// that parses back to the same `f64`; missing values are empty cells.
pub fn save_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(d.feature_names().iter().chain(d.response_names()))?;
    let mut record = Vec::with_capacity(d.d_x() + d.d_y());
    for i in 0..d.n_rows() {
        record.clear();
        record.extend(d.features().row(i).iter().map(|v| format_cell(*v)));
        record.extend(d.responses().row(i).iter().map(|v| format_cell(*v)));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

/// Per-dimension affine standardization of the responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseScaler {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl ResponseScaler {
    pub fn identity(d_y: usize) -> Self {
        Self {
            means: vec![0.0; d_y],
            scales: vec![1.0; d_y],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y.len())?;
        Ok(y.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z.len())?;
        Ok(z.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }
}

/// Means and floored sample standard deviations (n − 1 denominator).
pub fn fit_scaler(d: &Dataset) -> Result<ResponseScaler> {
    let n = d.n_rows();
    if n < 2 {
        return Err(Error::invalid("fitting a response scaler needs at least 2 rows"));
    }
    let y = d.responses();
    let mut means = Vec::with_capacity(d.d_y());
    let mut scales = Vec::with_capacity(d.d_y());
    for k in 0..d.d_y() {
        let col = y.column(k);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        means.push(mean);
        scales.push(var.sqrt().max(SCALE_FLOOR));
    }
    Ok(ResponseScaler { means, scales })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation_fraction: f64,
    pub seed: u64,
}

/// Row indices `(train, valid)` of a seeded random partition. Both parts are
/// returned in ascending order.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let f = spec.validation_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid(format!("validation fraction {f} is outside (0, 1)")));
    }
    let n_valid = (n as f64 * f).round() as usize;
    if n_valid < 1 || n_valid >= n {
        return Err(Error::invalid(format!(
            "{n} rows are too few to hold out a fraction of {f}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(spec.seed));
    let mut valid = order[..n_valid].to_vec();
    let mut train = order[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    Ok((train, valid))
}

pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, valid) = split_indices(d.n_rows(), spec)?;
    Ok((d.select(&train)?, d.select(&valid)?))
}

/// Seeded `k`-fold partition: returns the test indices of each fold.
pub fn k_fold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("cannot make {k} folds from {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut folds: Vec<Vec<usize>> = (0..k)
        .map(|f| order.iter().skip(f).step_by(k).copied().collect())
        .collect();
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn ds(y: &[f64]) -> Dataset {
        let x = Matrix::new(y.len(), 1, (0..y.len()).map(|i| i as f64).collect()).unwrap();
        let y = Matrix::new(y.len(), 1, y.to_vec()).unwrap();
        Dataset::from_matrices(x, y).unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), &["y".into()]).unwrap();
        assert_eq!((d.n_rows(), d.d_x(), d.d_y()), (3, 2, 1));
        assert_eq!(d.feature_names(), &["a", "b"]);
        assert_eq!(d.responses().column(0), vec![3.0, 6.0, 9.0]);
    }

    #[test]
    fn empty_and_nan_features_are_missing() {
        let f = write_tmp("a,b,y\n,2,3\nNaN,5,6\n");
        let d = load_csv(f.path(), &["y".into()]).unwrap();
        assert!(d.features().get(0, 0).is_nan());
        assert!(d.features().get(1, 0).is_nan());
        assert_eq!(d.features().get(0, 1), 2.0);
    }

    #[test]
    fn csv_errors() {
        let f = write_tmp("a,y\n1,abc\n");
        assert!(matches!(
            load_csv(f.path(), &["y".into()]),
            Err(Error::MalformedResponse { .. })
        ));
        let f = write_tmp("a,y\n1,\n");
        assert!(matches!(
            load_csv(f.path(), &["y".into()]),
            Err(Error::MalformedResponse { .. })
        ));
        let f = write_tmp("a,a,y\n1,2,3\n");
        assert!(matches!(load_csv(f.path(), &["y".into()]), Err(Error::DuplicateColumn(_))));
        let f = write_tmp("a,y\n");
        assert!(matches!(load_csv(f.path(), &["y".into()]), Err(Error::EmptyDataset)));
        let f = write_tmp("a,y\n1,2\n");
        assert!(matches!(load_csv(f.path(), &["z".into()]), Err(Error::MissingColumn(_))));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &["y".into()]),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn scaler_hand_values() {
        let s = fit_scaler(&ds(&[0.0, 2.0])).unwrap();
        assert_eq!(s.means, vec![1.0]);
        assert!((s.scales[0] - 2f64.sqrt()).abs() < 1e-15);

        let s = fit_scaler(&ds(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(s.means, vec![5.0]);
        assert_eq!(s.scales, vec![SCALE_FLOOR]);

        assert!(fit_scaler(&ds(&[1.0])).is_err());
    }

    #[test]
    fn scaler_on_standard_normal_draws() {
        let mut rng = rng::seeded(11);
        let n = 10_000;
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let s = fit_scaler(&ds(&y)).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        assert!(s.means[0].abs() < bound);
        assert!((s.scales[0] - 1.0).abs() < bound);
    }

    #[test]
    fn apply_and_invert() {
        let s = ResponseScaler {
            means: vec![1.0],
            scales: vec![2.0],
        };
        assert_eq!(s.apply(&[3.0]).unwrap(), vec![1.0]);
        assert_eq!(ResponseScaler::identity(2).apply(&[3.0, -1.5]).unwrap(), vec![3.0, -1.5]);
        assert!(matches!(s.apply(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(s.invert(&[]).is_err());
    }

    proptest! {
        #[test]
        fn scaler_round_trip(
            y in proptest::collection::vec(-1e6f64..1e6, 3),
            means in proptest::collection::vec(-1e3f64..1e3, 3),
            scales in proptest::collection::vec(1e-3f64..1e3, 3),
        ) {
            let s = ResponseScaler { means, scales };
            let back = s.invert(&s.apply(&y).unwrap()).unwrap();
            for (a, b) in y.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn csv_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 1..20)) {
            let n = values.len();
            let mut x = Matrix::new(n, 1, values.clone()).unwrap();
            x.set(0, 0, f64::NAN);
            let d = Dataset::from_matrices(x, Matrix::new(n, 1, values).unwrap()).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            save_csv(&d, f.path()).unwrap();
            let back = load_csv(f.path(), &["y".into()]).unwrap();
            prop_assert_eq!(back.responses(), d.responses());
            prop_assert!(back.features().get(0, 0).is_nan());
            for i in 1..n {
                prop_assert_eq!(back.features().get(i, 0), d.features().get(i, 0));
            }
        }
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = ds(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
        let spec = SplitSpec {
            validation_fraction: 0.2,
            seed: 3,
        };
        let (tr, va) = split(&d, &spec).unwrap();
        assert_eq!((tr.n_rows(), va.n_rows()), (8, 2));
        let mut all: Vec<f64> = tr.responses().column(0);
        all.extend(va.responses().column(0));
        all.sort_by(f64::total_cmp);
        assert_eq!(all, d.responses().column(0));
        assert_eq!(split_indices(10, &spec).unwrap(), split_indices(10, &spec).unwrap());
    }

    #[test]
    fn split_seeds_differ() {
        let a = split_indices(50, &SplitSpec { validation_fraction: 0.2, seed: 1 }).unwrap();
        let b = split_indices(50, &SplitSpec { validation_fraction: 0.2, seed: 2 }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn split_errors() {
        for f in [0.0, 1.0, -0.1, 1.5] {
            assert!(split_indices(10, &SplitSpec { validation_fraction: f, seed: 0 }).is_err());
        }
        assert!(split_indices(2, &SplitSpec { validation_fraction: 0.1, seed: 0 }).is_err());
    }

    #[test]
    fn folds_partition_rows() {
        let folds = k_fold(23, 5, 9).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 4 || f.len() == 5));
    }
}
