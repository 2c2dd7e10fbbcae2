//! The dataset object shared by every module, and CSV ingestion.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::float::{center_in_place, Real};
use crate::linalg::Matrix;

/// `n × p` covariates with an optional response of length `n`.
#[derive(Debug, Clone, Serialize)]
pub struct Dataset<F> {
    x: Matrix<F>,
    y: Option<Vec<F>>,
    names: Option<Vec<String>>,
}

impl<F: Real> Dataset<F> {
    pub fn new(x: Matrix<F>, y: Option<Vec<F>>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n < 2 {
            return Err(Error::InvalidData(format!("need n >= 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidData("need at least one covariate".into()));
        }
        if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite covariate at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        if let Some(y) = &y {
            if y.len() != n {
                return Err(Error::InvalidData(format!(
                    "response has length {}, expected {n}",
                    y.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData("non-finite response entry".into()));
            }
        }
        Ok(Dataset { x, y, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::InvalidData(format!(
                "{} column names for {} covariates",
                names.len(),
                self.p()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    /// Same covariates, response replaced.
    pub fn with_response(&self, y: Vec<F>) -> Result<Self> {
        let mut d = Dataset::new(self.x.clone(), Some(y))?;
        d.names = self.names.clone();
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Matrix<F> {
        &self.x
    }

    pub fn y(&self) -> Option<&[F]> {
        self.y.as_deref()
    }

    pub fn require_y(&self) -> Result<&[F]> {
        self.y()
            .ok_or_else(|| Error::InvalidData("a response vector is required".into()))
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Covariates with every column centered.
    pub fn centered_x(&self) -> Matrix<F> {
        let mut xc = self.x.clone();
        for j in 0..xc.ncols() {
            center_in_place(xc.col_mut(j));
        }
        xc
    }

    /// Covariate columns restricted to `idx`, names carried along.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        let mut d = Dataset::new(self.x.select_columns(idx), self.y.clone())?;
        if let Some(names) = &self.names {
            d.names = Some(idx.iter().map(|&j| names[j].clone()).collect());
        }
        Ok(d)
    }
}

impl<F: Real> Dataset<F> {
    /// Observations restricted to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let cols: Vec<Vec<F>> = (0..self.p())
            .map(|j| {
                let c = self.x.col(j);
                rows.iter().map(|&i| c[i]).collect()
            })
            .collect();
        let y = self.y.as_ref().map(|y| rows.iter().map(|&i| y[i]).collect());
        let mut d = Dataset::new(Matrix::from_columns(&cols), y)?;
        d.names = self.names.clone();
        Ok(d)
    }
}

/// Centers every covariate column and the response, if present.
pub fn center_columns<F: Real>(d: &Dataset<F>) -> Dataset<F> {
    let y = d.y.as_ref().map(|y| {
        let mut y = y.clone();
        center_in_place(&mut y);
        y
    });
    Dataset {
        x: d.centered_x(),
        y,
        names: d.names.clone(),
    }
}

/// Where the response lives when reading a CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseSpec {
    None,
    /// A column of the data file, by header name or 0-based index.
    Column(String),
    /// A separate single-column file.
    File(std::path::PathBuf),
}

fn parse_cell<F: Real>(tok: &str, row: usize, column: usize) -> Result<F> {
    let t = tok.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(F::c(v)),
        _ => Err(Error::Parse {
            row,
            column,
            token: t.to_owned(),
        }),
    }
}

/// Reads a rectangular numeric CSV into `(header, rows)`; rows and columns in
/// errors are 1-based and count the header line.
pub fn read_numeric_csv<F: Real>(
    path: &Path,
    header: bool,
) -> Result<(Option<Vec<String>>, Vec<Vec<F>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut names = None;
    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if header && i == 0 {
            names = Some(rec.iter().map(str::to_owned).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        match width {
            Some(w) if w != rec.len() => {
                return Err(Error::RaggedRows {
                    row: line,
                    expected: w,
                    found: rec.len(),
                })
            }
            None => width = Some(rec.len()),
            _ => {}
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, tok)| parse_cell(tok, line, j + 1))
            .collect::<Result<Vec<F>>>()?;
        rows.push(row);
    }
    Ok((names, rows))
}

/// Loads a dataset; `response` picks the response column or file.
pub fn read_matrix<F: Real>(path: &Path, header: bool, response: &ResponseSpec) -> Result<Dataset<F>> {
    let (names, rows) = read_numeric_csv::<F>(path, header)?;
    if rows.is_empty() {
        return Err(Error::InvalidData(format!("{} has no data rows", path.display())));
    }
    let width = rows[0].len();
    let mut cols: Vec<Vec<F>> = (0..width)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    let mut names = names;
    let y = match response {
        ResponseSpec::None => None,
        ResponseSpec::Column(spec) => {
            let by_name = names
                .as_ref()
                .and_then(|ns| ns.iter().position(|n| n == spec));
            let idx = match by_name {
                Some(i) => i,
                None => spec.parse::<usize>().map_err(|_| {
                    Error::InvalidArgument(format!("response column {spec:?} not found"))
                })?,
            };
            if idx >= cols.len() {
                return Err(Error::InvalidArgument(format!(
                    "response column {idx} out of range for {} columns",
                    cols.len()
                )));
            }
            if let Some(ns) = names.as_mut() {
                ns.remove(idx);
            }
            Some(cols.remove(idx))
        }
        ResponseSpec::File(p) => {
            let (_, yrows) = read_numeric_csv::<F>(p, header)?;
            if let Some((i, r)) = yrows.iter().enumerate().find(|(_, r)| r.len() != 1) {
                return Err(Error::RaggedRows {
                    row: i + 1,
                    expected: 1,
                    found: r.len(),
                });
            }
            Some(yrows.into_iter().map(|r| r[0]).collect())
        }
    };
    let d = Dataset::new(Matrix::from_columns(&cols), y)?;
    match names {
        Some(ns) => d.with_names(ns),
        None => Ok(d),
    }
}

/// Reads a single numeric column (response, fitted values, residuals).
pub fn read_vector<F: Real>(path: &Path, header: bool) -> Result<Vec<F>> {
    let (_, rows) = read_numeric_csv::<F>(path, header)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() == 1 {
                Ok(r[0])
            } else {
                Err(Error::RaggedRows {
                    row: i + 1,
                    expected: 1,
                    found: r.len(),
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ds(cols: &[Vec<f64>]) -> Dataset<f64> {
        Dataset::new(Matrix::from_columns(cols), None).unwrap()
    }

    #[test]
    fn centering_examples() {
        let c = center_columns(&ds(&[vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]));
        assert_eq!(c.x().col(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(c.x().col(1), &[0.0, 0.0, 0.0]);
        let again = center_columns(&c);
        for (a, b) in again.x().as_slice().iter().zip(c.x().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn centers_response_too() {
        let d = Dataset::new(Matrix::from_columns(&[vec![1.0, 2.0]]), Some(vec![3.0, 5.0])).unwrap();
        assert_eq!(center_columns(&d).y().unwrap(), &[-1.0, 1.0]);
    }

    #[test]
    fn invariants_enforced() {
        assert!(Dataset::new(Matrix::from_columns(&[vec![1.0]]), None).is_err());
        assert!(Dataset::new(Matrix::from_columns(&[vec![1.0, f64::NAN]]), None).is_err());
        assert!(Dataset::new(Matrix::from_columns(&[vec![1.0, 2.0]]), Some(vec![1.0])).is_err());
    }

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_plain_matrix() {
        let f = write("1,2\n3,4\n5,6\n");
        let d: Dataset<f64> = read_matrix(f.path(), false, &ResponseSpec::None).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.x().col(1), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn nan_token_reports_location() {
        let f = write("1,2\n3,NaN\n");
        let err = read_matrix::<f64>(f.path(), false, &ResponseSpec::None).unwrap_err();
        match err {
            Error::Parse { row, column, token } => {
                assert_eq!((row, column, token.as_str()), (2, 2, "NaN"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let f = write("1,2\n3\n");
        assert!(matches!(
            read_matrix::<f64>(f.path(), false, &ResponseSpec::None),
            Err(Error::RaggedRows { row: 2, .. })
        ));
    }

    #[test]
    fn header_names_and_response_column() {
        let f = write("a,b,y\n1,2,0.5\n3,4,0.1\n5,7,0.9\n");
        let d: Dataset<f64> =
            read_matrix(f.path(), true, &ResponseSpec::Column("y".into())).unwrap();
        assert_eq!(d.names().unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(d.y().unwrap(), &[0.5, 0.1, 0.9]);
        let d2: Dataset<f64> =
            read_matrix(f.path(), true, &ResponseSpec::Column("0".into())).unwrap();
        assert_eq!(d2.y().unwrap(), &[1.0, 3.0, 5.0]);
    }
}
