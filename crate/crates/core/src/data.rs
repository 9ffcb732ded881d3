//! Dataset and design-matrix types.
//!
//! A [`Dataset`] holds an n x p covariate matrix, a binary outcome that may be
//! missing per row, and the derived observation indicator `s` (1 exactly where
//! the outcome is present). Missingness is assumed to follow the selection
//! model fitted elsewhere in this crate; the data layer only records it.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// How a covariate column enters smooth models: binary columns get a single
/// linear term, continuous columns get a spline expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// Immutable rectangular dataset with a partially observed binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<Option<u8>>,
    s: Vec<u8>,
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
}

impl Dataset {
    /// Build a dataset from a covariate matrix and a per-row outcome
    /// (`None` = missing). Column kinds are detected: a column is binary iff
    /// every value is exactly 0.0 or 1.0.
    pub fn new(x: Array2<f64>, y: Vec<Option<u8>>, names: Vec<String>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 {
            return Err(Error::Input("dataset has no rows".into()));
        }
        if y.len() != n {
            return Err(Error::Input(format!(
                "outcome length {} does not match {} rows",
                y.len(),
                n
            )));
        }
        if names.len() != p {
            return Err(Error::Input(format!(
                "{} column names for {} columns",
                names.len(),
                p
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite covariate value {v}")));
        }
        if let Some(bad) = y.iter().flatten().find(|&&v| v > 1) {
            return Err(Error::Input(format!("outcome value {bad} is not 0/1")));
        }
        let s = y.iter().map(|v| u8::from(v.is_some())).collect();
        let kinds = (0..p)
            .map(|j| {
                if x.column(j).iter().all(|&v| v == 0.0 || v == 1.0) {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Continuous
                }
            })
            .collect();
        Ok(Dataset { x, y, s, names, kinds })
    }

    /// Parse rows of string cells (e.g. from a CSV reader). Empty cells and
    /// `NA` (any capitalization) in the outcome column mean missing; those
    /// markers in a covariate column are an error, since covariates must be
    /// complete.
    pub fn from_records(
        headers: &[String],
        rows: &[Vec<String>],
        outcome_col: &str,
        covariate_cols: &[String],
    ) -> Result<Self> {
        let col_index = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Input(format!("column '{name}' not found in header")))
        };
        let y_idx = col_index(outcome_col)?;
        let x_idx: Vec<usize> =
            covariate_cols.iter().map(|c| col_index(c)).collect::<Result<_>>()?;
        if x_idx.contains(&y_idx) {
            return Err(Error::Input(format!(
                "outcome column '{outcome_col}' also listed as a covariate"
            )));
        }
        if rows.is_empty() {
            return Err(Error::Input("no data rows".into()));
        }

        let n = rows.len();
        let p = x_idx.len();
        let mut x = Array2::zeros((n, p));
        let mut y = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != headers.len() {
                return Err(Error::Input(format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    headers.len()
                )));
            }
            let y_cell = row[y_idx].trim();
            if is_missing_marker(y_cell) {
                y.push(None);
            } else {
                let v: f64 = y_cell.parse().map_err(|_| {
                    Error::Input(format!("row {}: outcome '{}' is not numeric", i + 1, y_cell))
                })?;
                if v == 0.0 {
                    y.push(Some(0));
                } else if v == 1.0 {
                    y.push(Some(1));
                } else {
                    return Err(Error::Input(format!(
                        "row {}: outcome must be 0 or 1, got {v}",
                        i + 1
                    )));
                }
            }
            for (jj, &j) in x_idx.iter().enumerate() {
                let cell = row[j].trim();
                if is_missing_marker(cell) {
                    return Err(Error::Input(format!(
                        "row {}: covariate '{}' is missing; covariates must be complete",
                        i + 1,
                        headers[j]
                    )));
                }
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Input(format!(
                        "row {}: covariate '{}' value '{}' is not numeric",
                        i + 1,
                        headers[j],
                        cell
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Input(format!(
                        "row {}: covariate '{}' is not finite",
                        i + 1,
                        headers[j]
                    )));
                }
                x[[i, jj]] = v;
            }
        }
        Dataset::new(x, y, covariate_cols.to_vec())
    }

    /// Force the named columns to be treated as linear (binary-kind) terms in
    /// smooth models, overriding detection. Consumes and returns the dataset.
    pub fn with_linear_columns(mut self, names: &[String]) -> Result<Self> {
        for name in names {
            let j = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Input(format!("column '{name}' not found")))?;
            self.kinds[j] = ColumnKind::Binary;
        }
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).to_vec()
    }

    pub fn y(&self) -> &[Option<u8>] {
        &self.y
    }

    pub fn s(&self) -> &[u8] {
        &self.s
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn n_observed(&self) -> usize {
        self.s.iter().map(|&v| v as usize).sum()
    }

    /// Indicator of outcome presence as a response vector (for selection fits).
    pub fn selection_response(&self) -> Array1<f64> {
        self.s.iter().map(|&v| f64::from(v)).collect()
    }

    /// Row indices with an observed outcome.
    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.s[i] == 1).collect()
    }

    /// The rows with an observed outcome, as a complete sub-dataset.
    /// Errors if no outcome was observed at all.
    pub fn observed_subsample(&self) -> Result<Dataset> {
        let idx = self.observed_indices();
        if idx.is_empty() {
            return Err(Error::DegenerateData("no rows with an observed outcome".into()));
        }
        self.subset(&idx)
    }

    /// Dataset restricted to the given row indices (repeats allowed, so this
    /// also serves bootstrap resampling). Kinds are copied, not re-detected:
    /// a resample of a continuous column stays continuous.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        if idx.is_empty() {
            return Err(Error::Input("empty row selection".into()));
        }
        let p = self.p();
        let mut x = Array2::zeros((idx.len(), p));
        let mut y = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            for j in 0..p {
                x[[r, j]] = self.x[[i, j]];
            }
            y.push(self.y[i]);
        }
        let s = y.iter().map(|v: &Option<u8>| u8::from(v.is_some())).collect();
        Ok(Dataset { x, y, s, names: self.names.clone(), kinds: self.kinds.clone() })
    }

    /// Observed outcomes in row order, as 0.0/1.0 (length = number of s=1 rows).
    pub fn observed_outcomes(&self) -> Array1<f64> {
        self.y.iter().flatten().map(|&v| f64::from(v)).collect()
    }

    /// `[1 | X]` design over all rows.
    pub fn design_full(&self) -> DesignMatrix {
        DesignMatrix::with_intercept(self.x.view(), &self.names)
    }
}

fn is_missing_marker(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na")
}

/// A fitting-ready design matrix: leading intercept column, labeled columns.
/// Rank is verified by the QR factorization at fit time.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    values: Array2<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    /// `[1 | x]` with labels `["(intercept)", names...]`.
    pub fn with_intercept(x: ArrayView2<f64>, names: &[String]) -> Self {
        let (n, p) = x.dim();
        assert_eq!(names.len(), p);
        let mut values = Array2::ones((n, p + 1));
        for i in 0..n {
            for j in 0..p {
                values[[i, j + 1]] = x[[i, j]];
            }
        }
        let mut labels = vec!["(intercept)".to_string()];
        labels.extend(names.iter().cloned());
        DesignMatrix { values, labels }
    }

    /// Wrap an already-assembled matrix. The caller owns the intercept
    /// convention; smooth-model bases use this.
    pub fn from_parts(values: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        if values.ncols() != labels.len() {
            return Err(Error::Input(format!(
                "{} labels for {} design columns",
                labels.len(),
                values.ncols()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite design value {v}")));
        }
        Ok(DesignMatrix { values, labels })
    }

    /// A copy with one extra labeled column on the right.
    pub fn append_column(&self, col: &Array1<f64>, label: &str) -> Result<Self> {
        if col.len() != self.values.nrows() {
            return Err(Error::Input(format!(
                "appended column has {} rows, design has {}",
                col.len(),
                self.values.nrows()
            )));
        }
        let (n, k) = self.values.dim();
        let mut values = Array2::zeros((n, k + 1));
        for i in 0..n {
            for j in 0..k {
                values[[i, j]] = self.values[[i, j]];
            }
            values[[i, k]] = col[i];
        }
        let mut labels = self.labels.clone();
        labels.push(label.to_string());
        DesignMatrix::from_parts(values, labels)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}
