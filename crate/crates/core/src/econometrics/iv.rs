use super::ols::{bootstrap_replicates, ols_coefficients, ols_fit, ols_with_bootstrap, summarize};
use super::{DesignMatrix, RegressionResult};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// First-stage instrument F below which instruments are flagged weak.
pub const WEAK_INSTRUMENT_F: f64 = 10.0;
/// Name of the first-stage residual in the second stage.
pub const CONTROL_FUNCTION: &str = "Control function";
const CRITICAL_T: f64 = 1.96;

/// Residual of `reported` on an intercept and `anchor`.
pub fn residual_instrument(reported: &[f64], anchor: &[f64]) -> Result<Vec<f64>> {
    let n = anchor.len();
    if reported.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: reported.len(),
        });
    }
    let m = anchor.iter().sum::<f64>() / n as f64;
    if n < 3 || anchor.iter().all(|v| (v - m).abs() <= 1e-12 * (1.0 + m.abs())) {
        return Err(Error::Data("anchor measure has no variance".into()));
    }
    let x = DesignMatrix::from_columns(n, vec![("anchor".into(), anchor.to_vec())], true)?;
    Ok(ols_fit(&x, reported)?.residuals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageResult {
    pub fit: RegressionResult,
    pub residuals: Vec<f64>,
    pub instrument_names: Vec<String>,
    /// Joint F-statistic of the instruments' exclusion.
    pub instrument_f: f64,
    pub weak: bool,
}

impl FirstStageResult {
    /// Coefficients on the instruments, in instrument order.
    pub fn gamma(&self) -> Vec<f64> {
        self.instrument_names
            .iter()
            .map(|n| self.fit.coef(n).expect("instrument in first stage"))
            .collect()
    }
}

/// OLS of the endogenous feature on the exogenous regressors and the
/// instruments, with the instruments' joint F.
pub fn first_stage(endogenous: &[f64], exog: &DesignMatrix, instruments: &DesignMatrix) -> Result<FirstStageResult> {
    if instruments.ncols() == 0 {
        return Err(Error::Config("first stage needs at least one instrument".into()));
    }
    let full = exog.hstack(instruments)?;
    let fit = ols_fit(&full, endogenous)?;
    let restricted = ols_fit(exog, endogenous)?;
    let q = instruments.ncols() as f64;
    let df = (full.nrows() - full.n_params()) as f64;
    let (ssr_u, ssr_r) = (fit.ssr(), restricted.ssr());
    let instrument_f = if ssr_u > 0.0 {
        ((ssr_r - ssr_u) / q) / (ssr_u / df)
    } else {
        f64::INFINITY
    };
    let weak = instrument_f < WEAK_INSTRUMENT_F;
    if weak {
        log::warn!("weak instruments: first-stage F = {instrument_f:.2}");
    }
    Ok(FirstStageResult {
        residuals: fit.residuals.clone(),
        fit,
        instrument_names: instruments.names.clone(),
        instrument_f,
        weak,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfResult {
    pub first: FirstStageResult,
    /// Second stage with the control function as the last regressor.
    pub second: RegressionResult,
    pub pi: f64,
    pub pi_se: f64,
    pub pi_t: f64,
    /// `|t| > 1.96` on the control-function coefficient.
    pub endogenous: bool,
    pub weak_instruments: bool,
}

fn second_stage_design(
    x: &DesignMatrix,
    endog_name: &str,
    endogenous: &[f64],
    other: &DesignMatrix,
    nu: &[f64],
) -> Result<DesignMatrix> {
    let mut d = x.clone();
    d.push_column(endog_name, endogenous)?;
    let mut d = d.hstack(other)?;
    d.push_column(CONTROL_FUNCTION, nu)?;
    Ok(d)
}

/// Control-function estimate: the first stage regresses the endogenous
/// feature on `x`, `other` and the instruments; the second stage adds its
/// residual to the outcome equation. With `b > 0`, each pairs-bootstrap
/// replicate re-runs both stages.
#[allow(clippy::too_many_arguments)]
pub fn control_function(
    y: &[f64],
    x: &DesignMatrix,
    endog_name: &str,
    endogenous: &[f64],
    other: &DesignMatrix,
    instruments: &DesignMatrix,
    b: usize,
    seed: u64,
) -> Result<CfResult> {
    let exog = x.hstack(other)?;
    let first = first_stage(endogenous, &exog, instruments)?;
    let design = second_stage_design(x, endog_name, endogenous, other, &first.residuals)?;
    let mut second = ols_fit(&design, y)?;
    if b > 0 {
        if b < 100 {
            return Err(Error::Config(format!(
                "bootstrap needs at least 100 replicates, got {b}"
            )));
        }
        let reps = bootstrap_replicates(y.len(), b, seed, "cf-bootstrap", |idx| {
            let e: Vec<f64> = idx.iter().map(|&i| endogenous[i]).collect();
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let (xb, ob) = (x.select_rows(idx), other.select_rows(idx));
            let fs = ols_fit(&xb.hstack(&ob)?.hstack(&instruments.select_rows(idx))?, &e)?;
            ols_coefficients(&second_stage_design(&xb, endog_name, &e, &ob, &fs.residuals)?, &yb)
        })?;
        second.bootstrap = Some(summarize(&reps));
    }
    let pi = second.coef(CONTROL_FUNCTION).expect("control function column");
    let pi_se = second.se(CONTROL_FUNCTION).unwrap_or(f64::NAN);
    let pi_t = pi / pi_se;
    Ok(CfResult {
        weak_instruments: first.weak,
        first,
        second,
        pi,
        pi_se,
        pi_t,
        endogenous: pi_t.abs() > CRITICAL_T,
    })
}

/// Textbook 2SLS by explicit projection onto the instrument space. Returns
/// coefficients ordered as intercept (if any), `x` columns, `endog` columns.
pub fn two_sls_oracle(
    y: &[f64],
    x: &DesignMatrix,
    endog: &DesignMatrix,
    instruments: &DesignMatrix,
) -> Result<Vec<f64>> {
    if instruments.ncols() < endog.ncols() {
        return Err(Error::Config("fewer instruments than endogenous regressors".into()));
    }
    let xf = x.full();
    let (n, px) = xf.shape();
    let (pe, pz) = (endog.ncols(), instruments.ncols());
    let w = DMatrix::from_fn(n, px + pz, |i, j| {
        if j < px {
            xf[(i, j)]
        } else {
            instruments.values[(i, j - px)]
        }
    });
    let d = DMatrix::from_fn(
        n,
        px + pe,
        |i, j| if j < px { xf[(i, j)] } else { endog.values[(i, j - px)] },
    );
    let wtw_inv = (w.transpose() * &w)
        .try_inverse()
        .ok_or_else(|| Error::Numerical("instrument cross-product is singular".into()))?;
    let pd = &w * (&wtw_inv * (w.transpose() * &d));
    let yv = DVector::from_column_slice(y);
    let lhs = (pd.transpose() * &d)
        .try_inverse()
        .ok_or_else(|| Error::Numerical("2SLS rank condition fails".into()))?;
    Ok((lhs * (pd.transpose() * yv)).iter().copied().collect())
}

/// OLS with the proxies added to the controls. `b = 0` skips the bootstrap.
pub fn proxy_ols(
    y: &[f64],
    core: &DesignMatrix,
    proxies: &DesignMatrix,
    features: &DesignMatrix,
    b: usize,
    seed: u64,
) -> Result<RegressionResult> {
    let design = core.hstack(proxies)?.hstack(features)?;
    if b == 0 {
        ols_fit(&design, y)
    } else {
        ols_with_bootstrap(&design, y, b, seed)
    }
}
