use super::ols::solve_ls;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const SMOOTHING: f64 = 1e-6;
const MAX_ITER: usize = 200;
const TOL: f64 = 1e-8;

/// Polynomial conditional-quantile curve. Coefficients multiply powers of the
/// standardised regressor `(x - x_mean) / x_scale`, lowest power first.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFit {
    pub tau: f64,
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub x_mean: f64,
    pub x_scale: f64,
    pub iterations: usize,
}

impl QuantileFit {
    /// A fit from given coefficients, using the same standardisation of `x`
    /// as [`quantile_polyfit`]. Used to keep the last iterate of a fit that
    /// hit the iteration cap.
    pub fn from_coefficients(x: &[f64], tau: f64, coefficients: Vec<f64>) -> Self {
        let (x_mean, x_scale) = standardization(x);
        QuantileFit {
            tau,
            degree: coefficients.len().saturating_sub(1),
            coefficients,
            x_mean,
            x_scale,
            iterations: MAX_ITER,
        }
    }

    pub fn predict(&self, x: f64) -> f64 {
        let z = (x - self.x_mean) / self.x_scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }
}

pub fn pinball_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

fn standardization(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

fn basis(x: &[f64], mean: f64, scale: f64, degree: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), degree + 1, |i, k| ((x[i] - mean) / scale).powi(k as i32))
}

/// Minimises `Σ ρ_τ(y - poly(x))` by iteratively reweighted least squares
/// with weights `c_i / max(|u_i|, 1e-6)`, starting from the least-squares
/// fit. Stops when the largest coefficient change falls below
/// `1e-8 · (1 + max|β|)`.
pub fn quantile_polyfit(x: &[f64], y: &[f64], tau: f64, degree: usize) -> Result<QuantileFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("quantile level must lie in (0, 1), got {tau}")));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n <= degree + 1 {
        return Err(Error::Data(format!(
            "degree {degree} quantile fit needs more than {} points",
            degree + 1
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("quantile fit input has non-finite entries".into()));
    }
    let (mean, scale) = standardization(x);
    let b = basis(x, mean, scale, degree);
    let names: Vec<String> = (0..=degree).map(|k| format!("x^{k}")).collect();
    let yv = DVector::from_column_slice(y);
    let mut beta = solve_ls(&b, &yv, &names)?;
    for it in 1..=MAX_ITER {
        let u = &yv - &b * &beta;
        let sw: Vec<f64> = u
            .iter()
            .map(|&r| {
                let c = if r < 0.0 { 1.0 - tau } else { tau };
                (c / r.abs().max(SMOOTHING)).sqrt()
            })
            .collect();
        let bw = DMatrix::from_fn(n, degree + 1, |i, k| sw[i] * b[(i, k)]);
        let yw = DVector::from_fn(n, |i, _| sw[i] * y[i]);
        let next = solve_ls(&bw, &yw, &names)?;
        let change = (&next - &beta).amax();
        beta = next;
        if change < TOL * (1.0 + beta.amax()) {
            return Ok(QuantileFit {
                tau,
                degree,
                coefficients: beta.iter().copied().collect(),
                x_mean: mean,
                x_scale: scale,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITER,
        last_iterate: beta.iter().copied().collect(),
    })
}
