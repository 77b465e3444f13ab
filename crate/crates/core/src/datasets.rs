//! Synthetic case-study generators, CSV ingestion, standardization and the
//! seeded 80/20 calibration/test split.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{ensure_finite, Error, Result};

/// Fraction of samples assigned to calibration.
pub const CAL_FRACTION: f64 = 0.8;
/// Default radial noise of the concentric-circles generator.
pub const DEFAULT_RADIAL_NOISE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}`"))),
        }
    }
}

/// Per-column mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
}

impl ColumnStats {
    /// Column means and standard deviations (divisor n − 1). A column whose
    /// spread is zero is rejected by name.
    pub fn fit(m: ArrayView2<f64>, names: &[String]) -> Result<Self> {
        let n = m.nrows();
        if n < 2 {
            return Err(Error::EmptyData(format!(
                "standardization needs at least 2 rows, got {n}"
            )));
        }
        ensure_finite(m.iter(), "data to standardize")?;
        let means = m.mean_axis(Axis(0)).expect("n >= 2");
        let stds = m.std_axis(Axis(0), 1.0);
        for (j, &s) in stds.iter().enumerate() {
            if !(s > 0.0) {
                let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
                return Err(Error::ZeroVariance(name));
            }
        }
        Ok(Self { means, stds })
    }

    pub fn n_columns(&self) -> usize {
        self.means.len()
    }
}

/// `(m − mean) / std` column-wise.
pub fn standardize(m: ArrayView2<f64>, stats: &ColumnStats) -> Result<Array2<f64>> {
    check_width(m, stats)?;
    Ok((&m - &stats.means) / &stats.stds)
}

/// Inverse of [`standardize`].
pub fn destandardize(m: ArrayView2<f64>, stats: &ColumnStats) -> Result<Array2<f64>> {
    check_width(m, stats)?;
    Ok(&m * &stats.stds + &stats.means)
}

fn check_width(m: ArrayView2<f64>, stats: &ColumnStats) -> Result<()> {
    if m.ncols() != stats.n_columns() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, statistics cover {}",
            m.ncols(),
            stats.n_columns()
        )));
    }
    Ok(())
}

/// Seeded shuffle split into `round(0.8 n)` calibration and the remaining
/// test indices, each returned in ascending order.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_cal = (CAL_FRACTION * n as f64).round() as usize;
    let mut cal = order[..n_cal].to_vec();
    let mut test = order[n_cal..].to_vec();
    cal.sort_unstable();
    test.sort_unstable();
    (cal, test)
}

/// A split, standardized data set.
///
/// Predictors are always standardized with calibration statistics. Regression
/// responses are standardized the same way; classification responses stay
/// one-hot 0/1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: Task,
    pub x_cal: Array2<f64>,
    pub y_cal: Array2<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array2<f64>,
    /// Responses in original units.
    pub y_cal_raw: Array2<f64>,
    pub y_test_raw: Array2<f64>,
    /// Noise-free test responses in original units, when known.
    pub y_true_test: Option<Array2<f64>>,
    pub x_stats: ColumnStats,
    /// `None` for classification.
    pub y_stats: Option<ColumnStats>,
    pub cal_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub feature_names: Vec<String>,
    pub response_names: Vec<String>,
    /// Class names in label order (classification only).
    pub class_names: Vec<String>,
    pub labels_cal: Vec<usize>,
    pub labels_test: Vec<usize>,
}

impl Dataset {
    /// Splits raw data and standardizes it with calibration statistics.
    /// For classification, `y` must be one-hot.
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw(
        x: Array2<f64>,
        y: Array2<f64>,
        y_true: Option<Array2<f64>>,
        task: Task,
        feature_names: Vec<String>,
        response_names: Vec<String>,
        class_names: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyData("no samples".into()));
        }
        if y.nrows() != n || y_true.as_ref().is_some_and(|t| t.dim() != y.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "{n} predictor rows but {} response rows",
                y.nrows()
            )));
        }
        if feature_names.len() != x.ncols() || response_names.len() != y.ncols() {
            return Err(Error::DimensionMismatch("column names do not match the data".into()));
        }
        ensure_finite(x.iter(), "predictors")?;
        ensure_finite(y.iter(), "responses")?;
        let (cal, test) = split_indices(n, seed);
        if cal.len() < 2 || test.is_empty() {
            return Err(Error::EmptyData(format!(
                "{n} samples are too few for a calibration/test split"
            )));
        }
        let x_cal_raw = x.select(Axis(0), &cal);
        let x_test_raw = x.select(Axis(0), &test);
        let y_cal_raw = y.select(Axis(0), &cal);
        let y_test_raw = y.select(Axis(0), &test);
        let x_stats = ColumnStats::fit(x_cal_raw.view(), &feature_names)?;
        let x_cal = standardize(x_cal_raw.view(), &x_stats)?;
        let x_test = standardize(x_test_raw.view(), &x_stats)?;

        let (y_cal, y_test, y_stats, labels_cal, labels_test) = match task {
            Task::Regression => {
                let stats = ColumnStats::fit(y_cal_raw.view(), &response_names)?;
                (
                    standardize(y_cal_raw.view(), &stats)?,
                    standardize(y_test_raw.view(), &stats)?,
                    Some(stats),
                    Vec::new(),
                    Vec::new(),
                )
            }
            Task::Classification => {
                if y.ncols() < 2 {
                    return Err(Error::InvalidArgument(
                        "classification needs at least two one-hot columns".into(),
                    ));
                }
                (
                    y_cal_raw.clone(),
                    y_test_raw.clone(),
                    None,
                    crate::kpls::argmax_rows(y_cal_raw.view()),
                    crate::kpls::argmax_rows(y_test_raw.view()),
                )
            }
        };
        Ok(Self {
            task,
            x_cal,
            y_cal,
            x_test,
            y_test,
            y_cal_raw,
            y_test_raw,
            y_true_test: y_true.map(|t| t.select(Axis(0), &test)),
            x_stats,
            y_stats,
            cal_indices: cal,
            test_indices: test,
            feature_names,
            response_names,
            class_names,
            labels_cal,
            labels_test,
        })
    }

    /// Maps responses predicted in model units back to original units.
    pub fn responses_to_raw(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.y_stats {
            Some(stats) => destandardize(y, stats),
            None => Ok(y.to_owned()),
        }
    }

    /// Standardizes new raw predictors with the calibration statistics.
    pub fn predictors_to_model(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        standardize(x, &self.x_stats)
    }

    pub fn n_samples(&self) -> usize {
        self.cal_indices.len() + self.test_indices.len()
    }
}

/// The two-input test surface with a single peak value `f(0,0) = (8/3)e⁻¹`.
pub fn peaks(x1: f64, x2: f64) -> f64 {
    3.0 * (1.0 - x1).powi(2) * (-x1 * x1 - (x2 + 1.0).powi(2)).exp()
        - 10.0 * (x1 / 5.0 - x1.powi(3) - x2.powi(5)) * (-x1 * x1 - x2 * x2).exp()
        - (-(x1 + 1.0).powi(2) - x2 * x2).exp() / 3.0
}

/// `n` points uniform on `[−2, 2]²` with `y = peaks(x) + noise·ε`,
/// `ε ~ N(0, 1)`. The noiseless test responses are kept.
pub fn gen_peaks(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("peaks needs n >= 10, got {n}")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut y = Array2::zeros((n, 1));
    let mut y_true = Array2::zeros((n, 1));
    for i in 0..n {
        let x1 = rng.random_range(-2.0..=2.0);
        let x2 = rng.random_range(-2.0..=2.0);
        let eps: f64 = rng.sample(StandardNormal);
        let f = peaks(x1, x2);
        x[[i, 0]] = x1;
        x[[i, 1]] = x2;
        y_true[[i, 0]] = f;
        y[[i, 0]] = f + noise * eps;
    }
    Dataset::from_raw(
        x,
        y,
        Some(y_true),
        Task::Regression,
        vec!["x1".into(), "x2".into()],
        vec!["y".into()],
        Vec::new(),
        seed.wrapping_add(1),
    )
}

/// Concentric circles: class `c` (0-based) lies at radius `c + 1` plus
/// Gaussian radial noise, at uniform angles. Responses are one-hot.
pub fn gen_circles(
    n_per_class: usize,
    n_classes: usize,
    radial_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "circles need at least 2 classes, got {n_classes}"
        )));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be positive".into()));
    }
    if !(radial_noise >= 0.0) || !radial_noise.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "radial noise must be >= 0, got {radial_noise}"
        )));
    }
    let n = n_per_class * n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut y = Array2::zeros((n, n_classes));
    for c in 0..n_classes {
        for k in 0..n_per_class {
            let i = c * n_per_class + k;
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let eps: f64 = rng.sample(StandardNormal);
            let r = (c + 1) as f64 + radial_noise * eps;
            x[[i, 0]] = r * angle.cos();
            x[[i, 1]] = r * angle.sin();
            y[[i, c]] = 1.0;
        }
    }
    let class_names: Vec<String> = (1..=n_classes).map(|c| format!("circle_{c}")).collect();
    Dataset::from_raw(
        x,
        y,
        None,
        Task::Classification,
        vec!["x1".into(), "x2".into()],
        class_names.clone(),
        class_names,
        seed.wrapping_add(1),
    )
}

/// A CSV column given by header name or 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty column reference".into()));
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        })
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "{i}"),
            ColumnRef::Name(n) => f.write_str(n),
        }
    }
}

/// Raw table read from a CSV file with a header row.
struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
    /// File line of each data row.
    lines: Vec<usize>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, "header"))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, "header"))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::EmptyData(format!("{} has no header", path.display())));
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, "-"))?;
        lines.push(record.position().map_or(rows.len() + 2, |p| p.line() as usize));
        rows.push(record);
    }
    if rows.is_empty() {
        return Err(Error::EmptyData(format!("{} has no data rows", path.display())));
    }
    Ok(Table { header, rows, lines })
}

fn csv_error(e: csv::Error, column: &str) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        return match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        };
    }
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Csv {
        row,
        column: column.to_string(),
        message: e.to_string(),
    }
}

fn resolve(header: &[String], column: &ColumnRef) -> Result<usize> {
    match column {
        ColumnRef::Index(i) if *i < header.len() => Ok(*i),
        ColumnRef::Name(name) => header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Csv {
                row: 1,
                column: name.clone(),
                message: "response column not found in header".into(),
            }
        }),
        ColumnRef::Index(i) => Err(Error::Csv {
            row: 1,
            column: i.to_string(),
            message: format!("response column index beyond the {} columns", header.len()),
        }),
    }
}

fn parse_cell(table: &Table, r: usize, c: usize) -> Result<f64> {
    let cell = table.rows[r].get(c).unwrap_or("");
    let err = |message: String| Error::Csv {
        row: table.lines[r],
        column: table.header[c].clone(),
        message,
    };
    if cell.is_empty() {
        return Err(err("missing value".into()));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| err(format!("non-numeric value `{cell}`")))?;
    if !v.is_finite() {
        return Err(err(format!("non-finite value `{cell}`")));
    }
    Ok(v)
}

/// Reads a numeric CSV with a header row, splits it 80/20 with `seed` and
/// standardizes it.
///
/// All columns not named in `responses` are predictors. For classification a
/// single response column holds class labels (any text); they are one-hot
/// encoded in sorted label order.
pub fn load_csv(
    path: impl AsRef<Path>,
    responses: &[ColumnRef],
    task: Task,
    seed: u64,
) -> Result<Dataset> {
    let table = read_table(path.as_ref())?;
    if responses.is_empty() {
        return Err(Error::InvalidArgument("no response column given".into()));
    }
    let mut response_idx = Vec::new();
    for r in responses {
        let i = resolve(&table.header, r)?;
        if response_idx.contains(&i) {
            return Err(Error::InvalidArgument(format!("response column `{r}` given twice")));
        }
        response_idx.push(i);
    }
    if task == Task::Classification && response_idx.len() != 1 {
        return Err(Error::InvalidArgument(
            "classification takes exactly one label column".into(),
        ));
    }
    let feature_idx: Vec<usize> = (0..table.header.len())
        .filter(|i| !response_idx.contains(i))
        .collect();
    if feature_idx.is_empty() {
        return Err(Error::EmptyData("no predictor columns".into()));
    }
    let n = table.rows.len();
    for (r, record) in table.rows.iter().enumerate() {
        if record.len() != table.header.len() {
            return Err(Error::Csv {
                row: table.lines[r],
                column: "-".into(),
                message: format!(
                    "{} fields where the header has {}",
                    record.len(),
                    table.header.len()
                ),
            });
        }
    }
    let mut x = Array2::zeros((n, feature_idx.len()));
    for r in 0..n {
        for (j, &c) in feature_idx.iter().enumerate() {
            x[[r, j]] = parse_cell(&table, r, c)?;
        }
    }
    let feature_names = feature_idx.iter().map(|&c| table.header[c].clone()).collect();

    match task {
        Task::Regression => {
            let mut y = Array2::zeros((n, response_idx.len()));
            for r in 0..n {
                for (j, &c) in response_idx.iter().enumerate() {
                    y[[r, j]] = parse_cell(&table, r, c)?;
                }
            }
            let response_names = response_idx.iter().map(|&c| table.header[c].clone()).collect();
            Dataset::from_raw(x, y, None, task, feature_names, response_names, Vec::new(), seed)
        }
        Task::Classification => {
            let c = response_idx[0];
            let mut labels = Vec::with_capacity(n);
            for r in 0..n {
                let cell = table.rows[r].get(c).unwrap_or("");
                if cell.is_empty() {
                    return Err(Error::Csv {
                        row: table.lines[r],
                        column: table.header[c].clone(),
                        message: "missing label".into(),
                    });
                }
                labels.push(cell.to_string());
            }
            let classes: Vec<String> = labels
                .iter()
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if classes.len() < 2 {
                return Err(Error::InvalidArgument(
                    "classification needs at least two distinct labels".into(),
                ));
            }
            let mut y = Array2::zeros((n, classes.len()));
            for (r, label) in labels.iter().enumerate() {
                let k = classes.binary_search(label).expect("label collected above");
                y[[r, k]] = 1.0;
            }
            Dataset::from_raw(x, y, None, task, feature_names, classes.clone(), classes, seed)
        }
    }
}
