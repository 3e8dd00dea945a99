//! Curve and dataset containers shared by every other module, plus CSV
//! ingestion and serialization.
//!
//! A dataset is `n` curves observed on one common grid of `r` strictly
//! increasing time points. Values are plain `f64` samples; missing or
//! non-finite entries are rejected at construction.

use std::io::{Read, Write};

use thiserror::Error;

/// Minimum number of grid points a dataset may have.
///
/// The noise-scale estimator sums over interior grid indices and reads two
/// positions ahead, which needs at least this many points.
pub const MIN_GRID_LEN: usize = 5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("input contains no curve rows")]
    Empty,
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    ParseCell { row: usize, col: usize, value: String },
    #[error("row {row}, column {col}: value must be finite")]
    NonFinite { row: usize, col: usize },
    #[error("row {row}: cannot parse {value:?} as an integer label")]
    ParseLabel { row: usize, value: String },
    #[error("row {row}: curve has no label to serialize")]
    MissingLabel { row: usize },
    #[error("grid has {r} points; at least {MIN_GRID_LEN} are required")]
    GridTooShort { r: usize },
    #[error("grid values must be strictly increasing (violated at index {index})")]
    GridNotIncreasing { index: usize },
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("a dataset needs at least 2 curves, found {n}")]
    TooFewCurves { n: usize },
    #[error("curve value at index {index} must be finite")]
    NonFiniteValue { index: usize },
}

/// Common observation grid: strictly increasing time points `t_1 < … < t_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// Validate and wrap a grid. Requires strictly increasing, finite points
    /// and at least [`MIN_GRID_LEN`] of them.
    pub fn new(points: Vec<f64>) -> Result<Self, DataError> {
        if points.len() < MIN_GRID_LEN {
            return Err(DataError::GridTooShort { r: points.len() });
        }
        for (i, &p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(DataError::NonFiniteValue { index: i });
            }
            if i > 0 && p <= points[i - 1] {
                return Err(DataError::GridNotIncreasing { index: i });
            }
        }
        Ok(Self { points })
    }

    /// Equally spaced grid of `r` points on `[0, 1]`, endpoints included.
    pub fn uniform(r: usize) -> Result<Self, DataError> {
        if r < MIN_GRID_LEN {
            return Err(DataError::GridTooShort { r });
        }
        let step = 1.0 / (r - 1) as f64;
        Self::new((0..r).map(|j| j as f64 * step).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// One observed curve: `r` sampled values plus an optional integer label.
///
/// Labels travel with simulated or benchmark data and are never consulted by
/// clustering or selection; they exist for accuracy reporting only.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    values: Vec<f64>,
    label: Option<i64>,
}

impl Curve {
    pub fn new(values: Vec<f64>) -> Result<Self, DataError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue { index });
        }
        Ok(Self { values, label: None })
    }

    pub fn with_label(values: Vec<f64>, label: i64) -> Result<Self, DataError> {
        let mut curve = Self::new(values)?;
        curve.label = Some(label);
        Ok(curve)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n` curves on a shared [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    grid: TimeGrid,
    curves: Vec<Curve>,
}

impl FunctionalDataset {
    pub fn new(grid: TimeGrid, curves: Vec<Curve>) -> Result<Self, DataError> {
        if curves.len() < 2 {
            return Err(DataError::TooFewCurves { n: curves.len() });
        }
        let r = grid.len();
        for curve in &curves {
            if curve.len() != r {
                return Err(DataError::LengthMismatch {
                    expected: r,
                    found: curve.len(),
                });
            }
        }
        Ok(Self { grid, curves })
    }

    /// Number of curves.
    pub fn n(&self) -> usize {
        self.curves.len()
    }

    /// Number of grid points.
    pub fn r(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn values(&self, i: usize) -> &[f64] {
        self.curves[i].values()
    }

    /// Pointwise mean of all curves.
    pub fn overall_mean(&self) -> Vec<f64> {
        let r = self.r();
        let mut mean = vec![0.0; r];
        for curve in &self.curves {
            for (m, v) in mean.iter_mut().zip(curve.values()) {
                *m += v;
            }
        }
        let n = self.n() as f64;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }
}

/// Residuals of one curve against a center, `ξ_j = Y(t_j) − c(t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    values: Vec<f64>,
}

impl ResidualVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Componentwise residuals of `values` against `center`.
pub fn residuals(values: &[f64], center: &[f64]) -> Result<ResidualVector, DataError> {
    if values.len() != center.len() {
        return Err(DataError::LengthMismatch {
            expected: values.len(),
            found: center.len(),
        });
    }
    Ok(ResidualVector {
        values: values.iter().zip(center).map(|(y, c)| y - c).collect(),
    })
}

/// Shape of a curve CSV stream.
///
/// The format is comma-separated with `.` as the decimal separator, one curve
/// per row. An optional first row carries the grid times and an optional last
/// column carries an integer label per curve. Lines that are blank or start
/// with `#` are skipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvFormat {
    /// First non-comment row holds the grid times.
    pub grid_header: bool,
    /// Last column of every curve row is an integer label.
    pub labels: bool,
}

impl CsvFormat {
    pub fn with_grid_header(mut self, yes: bool) -> Self {
        self.grid_header = yes;
        self
    }

    pub fn with_labels(mut self, yes: bool) -> Self {
        self.labels = yes;
        self
    }
}

fn parse_numeric_row(line: &str, row: usize) -> Result<Vec<f64>, DataError> {
    let mut out = Vec::new();
    for (col, field) in line.split(',').enumerate() {
        let value: f64 = field
            .trim()
            .parse()
            .map_err(|_| DataError::ParseCell {
                row,
                col: col + 1,
                value: field.trim().to_string(),
            })?;
        if !value.is_finite() {
            return Err(DataError::NonFinite { row, col: col + 1 });
        }
        out.push(value);
    }
    Ok(out)
}

/// Read a dataset from a UTF-8 CSV byte stream.
///
/// Without a grid header the grid defaults to equally spaced points on
/// `[0, 1]`. Row numbers in errors are 1-based physical line numbers.
pub fn load_dataset<R: Read>(mut source: R, format: CsvFormat) -> Result<FunctionalDataset, DataError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| DataError::NotUtf8)?;

    let mut grid: Option<TimeGrid> = None;
    let mut width: Option<usize> = None;
    let mut curves: Vec<Curve> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let row = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if format.grid_header && grid.is_none() {
            let points = parse_numeric_row(line, row)?;
            grid = Some(TimeGrid::new(points)?);
            continue;
        }

        let fields: Vec<&str> = line.split(',').collect();
        let expected = match width {
            Some(w) => w,
            None => {
                let w = fields.len();
                width = Some(w);
                w
            }
        };
        if fields.len() != expected {
            return Err(DataError::RaggedRow {
                row,
                expected,
                found: fields.len(),
            });
        }

        let value_count = if format.labels { expected - 1 } else { expected };
        let mut values = Vec::with_capacity(value_count);
        for (col, field) in fields[..value_count].iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| DataError::ParseCell {
                row,
                col: col + 1,
                value: field.trim().to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite { row, col: col + 1 });
            }
            values.push(value);
        }
        let curve = if format.labels {
            let field = fields[value_count].trim();
            let label: i64 = field.parse().map_err(|_| DataError::ParseLabel {
                row,
                value: field.to_string(),
            })?;
            Curve::with_label(values, label)?
        } else {
            Curve::new(values)?
        };
        curves.push(curve);
    }

    if curves.is_empty() {
        return Err(DataError::Empty);
    }
    let r = curves[0].len();
    let grid = match grid {
        Some(g) => {
            if g.len() != r {
                return Err(DataError::LengthMismatch {
                    expected: g.len(),
                    found: r,
                });
            }
            g
        }
        None => TimeGrid::uniform(r)?,
    };
    FunctionalDataset::new(grid, curves)
}

/// Write a dataset in the same CSV layout accepted by [`load_dataset`].
///
/// Values use the shortest round-trip decimal form, so a write/read cycle
/// reproduces the dataset exactly.
pub fn write_dataset<W: Write>(
    dataset: &FunctionalDataset,
    sink: &mut W,
    format: CsvFormat,
) -> Result<(), DataError> {
    let mut line = String::new();
    if format.grid_header {
        join_values(&mut line, dataset.grid().points());
        writeln!(sink, "{line}")?;
    }
    for (i, curve) in dataset.curves().iter().enumerate() {
        line.clear();
        join_values(&mut line, curve.values());
        if format.labels {
            let label = curve.label().ok_or(DataError::MissingLabel { row: i + 1 })?;
            line.push(',');
            line.push_str(&label.to_string());
        }
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

fn join_values(buf: &mut String, values: &[f64]) {
    buf.clear();
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            buf.push(',');
        }
        buf.push_str(&format!("{v}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_grid_is_equally_spaced_unit_interval() {
        let csv = "1,2,3,4,5\n6,7,8,9,10\n0,0,0,0,0\n";
        let ds = load_dataset(csv.as_bytes(), CsvFormat::default()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.r(), 5);
        assert_eq!(ds.grid().points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn grid_header_passes_through() {
        let csv = "0.1,0.2,0.3,0.4,0.5\n1,2,3,4,5\n5,4,3,2,1\n";
        let format = CsvFormat::default().with_grid_header(true);
        let ds = load_dataset(csv.as_bytes(), format).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.grid().points(), &[0.1, 0.2, 0.3, 0.4, 0.5]);
    }

    #[test]
    fn ragged_row_is_reported_with_its_line() {
        let csv = "1,2,3,4,5\n1,2,3,4\n1,2,3,4,5\n";
        let err = load_dataset(csv.as_bytes(), CsvFormat::default()).unwrap_err();
        match err {
            DataError::RaggedRow { row, expected, found } => {
                assert_eq!(row, 2);
                assert_eq!(expected, 5);
                assert_eq!(found, 4);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let csv = "1,2,3,4,5\n1,2,x,4,5\n";
        let err = load_dataset(csv.as_bytes(), CsvFormat::default()).unwrap_err();
        match err {
            DataError::ParseCell { row, col, value } => {
                assert_eq!((row, col), (2, 3));
                assert_eq!(value, "x");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn short_grid_is_rejected() {
        let csv = "1,2,3\n4,5,6\n";
        let err = load_dataset(csv.as_bytes(), CsvFormat::default()).unwrap_err();
        assert!(matches!(err, DataError::GridTooShort { r: 3 }));
    }

    #[test]
    fn labels_parse_from_last_column() {
        let csv = "1,2,3,4,5,0\n2,3,4,5,6,1\n";
        let format = CsvFormat::default().with_labels(true);
        let ds = load_dataset(csv.as_bytes(), format).unwrap();
        assert_eq!(ds.curves()[0].label(), Some(0));
        assert_eq!(ds.curves()[1].label(), Some(1));
        assert_eq!(ds.r(), 5);
    }

    #[test]
    fn comment_and_blank_lines_are_skipped() {
        let csv = "# generated\n\n1,2,3,4,5\n2,3,4,5,6\n";
        let ds = load_dataset(csv.as_bytes(), CsvFormat::default()).unwrap();
        assert_eq!(ds.n(), 2);
    }

    #[test]
    fn non_increasing_grid_is_rejected() {
        let err = TimeGrid::new(vec![0.0, 0.5, 0.5, 0.7, 1.0]).unwrap_err();
        assert!(matches!(err, DataError::GridNotIncreasing { index: 2 }));
    }

    #[test]
    fn residual_examples() {
        assert_eq!(
            residuals(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().values(),
            &[0.0, 0.0, 0.0]
        );
        assert_eq!(
            residuals(&[2.0, 4.0, 6.0], &[1.0, 1.0, 1.0]).unwrap().values(),
            &[1.0, 3.0, 5.0]
        );
        assert_eq!(
            residuals(&[0.5, 0.5], &[1.0, 0.0]).unwrap().values(),
            &[-0.5, 0.5]
        );
        assert!(residuals(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn small_dataset() -> impl Strategy<Value = FunctionalDataset> {
        (5usize..9, 2usize..6).prop_flat_map(|(r, n)| {
            proptest::collection::vec(
                proptest::collection::vec(-1e6f64..1e6, r..=r),
                n..=n,
            )
            .prop_map(move |rows| {
                let curves = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| Curve::with_label(v, i as i64).unwrap())
                    .collect();
                FunctionalDataset::new(TimeGrid::uniform(r).unwrap(), curves).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_identity(ds in small_dataset()) {
            let format = CsvFormat { grid_header: true, labels: true };
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf, format).unwrap();
            let back = load_dataset(buf.as_slice(), format).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn residuals_reconstruct_exactly(
            pair in proptest::collection::vec((-1_000_000i64..1_000_000, -1_000_000i64..1_000_000), 2..12)
        ) {
            // Integer-valued floats keep the subtraction exact, so the
            // round trip must be bitwise.
            let y: Vec<f64> = pair.iter().map(|p| p.0 as f64).collect();
            let c: Vec<f64> = pair.iter().map(|p| p.1 as f64).collect();
            let xi = residuals(&y, &c).unwrap();
            for ((x, cv), yv) in xi.values().iter().zip(&c).zip(&y) {
                prop_assert_eq!(x + cv, *yv);
            }
        }
    }
}
