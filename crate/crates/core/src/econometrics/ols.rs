use super::DesignMatrix;
use crate::error::{Error, Result};
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

/// Smallest-to-largest singular value ratio below which a design is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;
const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub se: Vec<f64>,
    /// 5th percentile across replicates.
    pub lower: Vec<f64>,
    /// 95th percentile across replicates.
    pub upper: Vec<f64>,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    /// F-statistic against the constant-only model.
    pub f_stat: f64,
    pub f_pvalue: f64,
    pub n: usize,
    pub bootstrap: Option<BootstrapSummary>,
}

impl RegressionResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coefficients[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        let b = self.bootstrap.as_ref()?;
        self.index(name).map(|i| b.se[i])
    }

    pub fn ssr(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

/// Least-squares coefficients via Householder QR, after checking the
/// singular values of `R` for rank deficiency.
pub(crate) fn solve_ls(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if p == 0 {
        return Err(Error::Config("design has no columns".into()));
    }
    if n <= p {
        return Err(Error::Data(format!(
            "need more observations than parameters (n={n}, p={p})"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let svd = r.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let tol = RANK_TOL * smax;
    if smax == 0.0 || svd.singular_values.min() < tol {
        let v_t = svd.v_t.expect("requested V");
        let mut bad = vec![false; p];
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s < tol || smax == 0.0 {
                let row = v_t.row(k);
                let m = row.amax();
                for j in 0..p {
                    if row[j].abs() > 0.1 * m {
                        bad[j] = true;
                    }
                }
            }
        }
        return Err(Error::RankDeficient {
            columns: (0..p).filter(|&j| bad[j]).map(|j| names[j].clone()).collect(),
        });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, p).into_owned();
    r.solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
}

fn check_y(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("response has non-finite entries".into()));
    }
    Ok(())
}

/// Coefficients only; used inside resampling loops.
pub(crate) fn ols_coefficients(x: &DesignMatrix, y: &[f64]) -> Result<Vec<f64>> {
    check_y(x, y)?;
    let b = solve_ls(&x.full(), &DVector::from_column_slice(y), &x.param_names())?;
    Ok(b.iter().copied().collect())
}

/// OLS point estimates with R̄², F against the constant model and its
/// p-value. Without an intercept, R² is uncentred.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<RegressionResult> {
    check_y(x, y)?;
    let names = x.param_names();
    let xf = x.full();
    let yv = DVector::from_column_slice(y);
    let beta = solve_ls(&xf, &yv, &names)?;
    let fitted = &xf * &beta;
    let resid = &yv - &fitted;
    let n = y.len();
    let k = x.ncols();
    let ssr = resid.norm_squared();
    let sst = if x.intercept {
        let m = yv.mean();
        yv.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    } else {
        yv.norm_squared()
    };
    let r2 = if sst > 0.0 && k > 0 { 1.0 - ssr / sst } else { 0.0 };
    let df = (n - k - 1) as f64;
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / df;
    let (f_stat, f_pvalue) = if k == 0 || df <= 0.0 {
        (f64::NAN, f64::NAN)
    } else {
        let f = (r2 / k as f64) / ((1.0 - r2) / df);
        let p = if f.is_infinite() {
            0.0
        } else {
            FisherSnedecor::new(k as f64, df).map(|d| d.sf(f)).unwrap_or(f64::NAN)
        };
        (f, p)
    };
    Ok(RegressionResult {
        names,
        coefficients: beta.iter().copied().collect(),
        fitted: fitted.iter().copied().collect(),
        residuals: resid.iter().copied().collect(),
        r2,
        adj_r2,
        f_stat,
        f_pvalue,
        n,
        bootstrap: None,
    })
}

/// Linear-interpolation percentile (`q` in [0, 1]) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Runs `stat` on `b` pairs-bootstrap resamples of `n` rows. Replicate `r`
/// draws from its own stream of `(seed, tag, r)`, so results do not depend on
/// scheduling. A replicate whose statistic is rank deficient is redrawn from
/// the same stream, at most ten times.
pub fn bootstrap_replicates<F>(n: usize, b: usize, seed: u64, tag: &str, stat: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if n == 0 {
        return Err(Error::Data("cannot bootstrap an empty sample".into()));
    }
    (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, tag, r as u64);
            let mut idx = vec![0usize; n];
            let mut attempt = 0;
            loop {
                idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
                match stat(&idx) {
                    Err(Error::RankDeficient { columns }) => {
                        attempt += 1;
                        if attempt > MAX_REDRAWS {
                            return Err(Error::Numerical(format!(
                                "bootstrap replicate {r} stayed rank deficient after {MAX_REDRAWS} redraws ({})",
                                columns.join(", ")
                            )));
                        }
                    }
                    other => return other,
                }
            }
        })
        .collect()
}

pub(crate) fn summarize(reps: &[Vec<f64>]) -> BootstrapSummary {
    let p = reps.first().map_or(0, Vec::len);
    let b = reps.len() as f64;
    let mut out = BootstrapSummary {
        se: Vec::with_capacity(p),
        lower: Vec::with_capacity(p),
        upper: Vec::with_capacity(p),
        replicates: reps.len(),
    };
    for j in 0..p {
        let mut col: Vec<f64> = reps.iter().map(|r| r[j]).collect();
        let m = col.iter().sum::<f64>() / b;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1.0);
        col.sort_by(f64::total_cmp);
        out.se.push(var.sqrt());
        out.lower.push(percentile(&col, 0.05));
        out.upper.push(percentile(&col, 0.95));
    }
    out
}

/// Pairs-bootstrap SEs (SD across replicates) and 90% percentile CIs.
pub fn bootstrap_inference(x: &DesignMatrix, y: &[f64], b: usize, seed: u64) -> Result<BootstrapSummary> {
    if b < 100 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 100 replicates, got {b}"
        )));
    }
    check_y(x, y)?;
    let reps = bootstrap_replicates(y.len(), b, seed, "ols-bootstrap", |idx| {
        let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        ols_coefficients(&x.select_rows(idx), &yb)
    })?;
    Ok(summarize(&reps))
}

pub fn ols_with_bootstrap(x: &DesignMatrix, y: &[f64], b: usize, seed: u64) -> Result<RegressionResult> {
    let mut fit = ols_fit(x, y)?;
    fit.bootstrap = Some(bootstrap_inference(x, y, b, seed)?);
    Ok(fit)
}
