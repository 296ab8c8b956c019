//! Estimators relating body features to income: OLS with pairs-bootstrap
//! inference, Nadaraya–Watson and quantile curves, Lasso with
//! cross-validation, and instrument-based corrections for endogeneity.

mod iv;
mod kernel;
mod lasso;
mod ols;
mod output;
mod quantile;

pub use iv::{
    control_function, first_stage, proxy_ols, residual_instrument, two_sls_oracle, CfResult, FirstStageResult,
    CONTROL_FUNCTION, WEAK_INSTRUMENT_F,
};
pub use kernel::{epanechnikov, kernel_curve, nadaraya_watson, quantile_grid, silverman_bandwidth, KernelSpec};
pub use lasso::{
    build_interactions, lambda_grid, lambda_max, lasso_cd, lasso_cv, lasso_path, post_lasso, soft_threshold, LassoFit,
    LassoResult,
};
pub use ols::{
    bootstrap_inference, bootstrap_replicates, ols_fit, ols_with_bootstrap, percentile, BootstrapSummary,
    RegressionResult,
};
pub use output::{
    read_curve_csv, read_regression_table, stars, write_curve_csv, write_regression_table, Curve, TableRow,
    CURVE_HEADER, FOOTER, TABLE_HEADER,
};
pub use quantile::{pinball_loss, quantile_polyfit, QuantileFit};

use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const INTERCEPT: &str = "Intercept";

/// Regressors (without the intercept column) plus names; when `intercept`
/// is set, estimators prepend a column of ones named [`INTERCEPT`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
    pub intercept: bool,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>, intercept: bool) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::Dimension {
                expected: values.ncols(),
                got: names.len(),
            });
        }
        if let Some(j) = (0..values.ncols()).find(|&j| values.column(j).iter().any(|v| !v.is_finite())) {
            return Err(Error::Data(format!("column `{}` has non-finite entries", names[j])));
        }
        Ok(DesignMatrix {
            values,
            names,
            intercept,
        })
    }

    pub fn from_columns(n: usize, columns: Vec<(String, Vec<f64>)>, intercept: bool) -> Result<Self> {
        if let Some((name, c)) = columns.iter().find(|(_, c)| c.len() != n) {
            return Err(Error::Data(format!(
                "column `{name}` has {} rows, expected {n}",
                c.len()
            )));
        }
        let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j].1[i]);
        Self::new(values, columns.into_iter().map(|c| c.0).collect(), intercept)
    }

    pub fn intercept_only(n: usize) -> Self {
        DesignMatrix {
            values: DMatrix::zeros(n, 0),
            names: Vec::new(),
            intercept: true,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Regressors excluding the intercept.
    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.ncols() + usize::from(self.intercept)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::with_capacity(self.n_params());
        if self.intercept {
            v.push(INTERCEPT.to_string());
        }
        v.extend(self.names.iter().cloned());
        v
    }

    /// The matrix the estimators actually use, intercept first.
    pub fn full(&self) -> DMatrix<f64> {
        if !self.intercept {
            return self.values.clone();
        }
        let (n, p) = self.values.shape();
        DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { self.values[(i, j - 1)] })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.values.column(j).iter().copied().collect())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        DesignMatrix {
            values: self.values.select_rows(idx),
            names: self.names.clone(),
            intercept: self.intercept,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        DesignMatrix {
            values: self.values.select_columns(cols),
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            intercept: self.intercept,
        }
    }

    /// Appends the columns of `other`; the intercept flag of `self` wins.
    pub fn hstack(&self, other: &DesignMatrix) -> Result<Self> {
        if other.nrows() != self.nrows() {
            return Err(Error::Dimension {
                expected: self.nrows(),
                got: other.nrows(),
            });
        }
        let (n, p, q) = (self.nrows(), self.ncols(), other.ncols());
        let values = DMatrix::from_fn(n, p + q, |i, j| {
            if j < p {
                self.values[(i, j)]
            } else {
                other.values[(i, j - p)]
            }
        });
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Ok(DesignMatrix {
            values,
            names,
            intercept: self.intercept,
        })
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: &[f64]) -> Result<()> {
        let extra = DesignMatrix::from_columns(self.nrows(), vec![(name.into(), values.to_vec())], false)?;
        *self = self.hstack(&extra)?;
        Ok(())
    }

    /// Reference-coded indicators for a categorical code column; code 0 is
    /// the reference and gets no column.
    pub fn push_categorical(&mut self, codes: &[u8], labels: &[&str]) -> Result<()> {
        if let Some(&c) = codes.iter().find(|&&c| usize::from(c) >= labels.len()) {
            return Err(Error::Data(format!(
                "category code {c} out of range for {} labels",
                labels.len()
            )));
        }
        for (k, label) in labels.iter().enumerate().skip(1) {
            let col: Vec<f64> = codes
                .iter()
                .map(|&c| f64::from(u8::from(usize::from(c) == k)))
                .collect();
            self.push_column(*label, &col)?;
        }
        Ok(())
    }
}
