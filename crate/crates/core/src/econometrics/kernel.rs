use super::ols::{bootstrap_replicates, percentile};
use super::Curve;
use crate::error::{Error, Result};

/// Epanechnikov kernel with a fixed bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Config(format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(KernelSpec { bandwidth })
    }

    pub fn silverman(x: &[f64]) -> Result<Self> {
        Self::new(silverman_bandwidth(x)?)
    }
}

pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// `0.9 · min(sd, IQR/1.349) · n^(-1/5)`. When the IQR is zero the SD alone
/// is used.
pub fn silverman_bandwidth(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Data("bandwidth needs at least 2 observations".into()));
    }
    let m = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Data("bandwidth undefined for zero-variance data".into()));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = percentile(&s, 0.75) - percentile(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Kernel-weighted mean at each grid point; `None` where no observation
/// falls inside the kernel window.
pub fn nadaraya_watson(x: &[f64], y: &[f64], grid: &[f64], spec: KernelSpec) -> Result<Vec<Option<f64>>> {
    if x.is_empty() {
        return Err(Error::Data("kernel regression on empty data".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    let h = spec.bandwidth;
    Ok(grid
        .iter()
        .map(|&g| {
            let (mut num, mut den) = (0.0, 0.0);
            for (&xi, &yi) in x.iter().zip(y) {
                let k = epanechnikov((xi - g) / h);
                num += k * yi;
                den += k;
            }
            (den > 0.0).then(|| num / den)
        })
        .collect())
}

/// Kernel curve with pointwise 90% pairs-bootstrap bands; the bandwidth is
/// held fixed across replicates. Unsupported points are NaN.
pub fn kernel_curve(x: &[f64], y: &[f64], grid: &[f64], spec: KernelSpec, b: usize, seed: u64) -> Result<Curve> {
    let est = nadaraya_watson(x, y, grid, spec)?;
    let reps = bootstrap_replicates(x.len(), b, seed, "kernel-bootstrap", |idx| {
        let xb: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        Ok(nadaraya_watson(&xb, &yb, grid, spec)?
            .into_iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect())
    })?;
    let mut curve = Curve {
        grid: grid.to_vec(),
        estimate: Vec::with_capacity(grid.len()),
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
    };
    for (g, e) in est.iter().enumerate() {
        let mut col: Vec<f64> = reps.iter().map(|r| r[g]).filter(|v| v.is_finite()).collect();
        col.sort_by(f64::total_cmp);
        curve.estimate.push(e.unwrap_or(f64::NAN));
        match e {
            Some(_) if !col.is_empty() => {
                curve.lower.push(percentile(&col, 0.05));
                curve.upper.push(percentile(&col, 0.95));
            }
            _ => {
                curve.lower.push(f64::NAN);
                curve.upper.push(f64::NAN);
            }
        }
    }
    Ok(curve)
}

/// `m` evenly spaced points spanning `[q_lo, q_hi]` quantiles of `x`.
pub fn quantile_grid(x: &[f64], q_lo: f64, q_hi: f64, m: usize) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let (a, b) = (percentile(&s, q_lo), percentile(&s, q_hi));
    if m < 2 {
        return vec![a; m];
    }
    (0..m).map(|k| a + (b - a) * k as f64 / (m - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    #[test]
    fn kernel_shape() {
        assert_eq!(epanechnikov(0.0), 0.75);
        assert_eq!(epanechnikov(1.5), 0.0);
        assert!((epanechnikov(0.5) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn silverman_hand_value_and_homogeneity() {
        // quartiles at ±1.349/2 and sample SD of exactly 1
        let c = 1.349 / 2.0;
        let mut x = vec![-c, -c, c, c];
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / 3.0;
        x.iter_mut().for_each(|v| *v /= m2.sqrt());
        let h = silverman_bandwidth(&x).unwrap();
        let iqr = 2.0 * c / m2.sqrt();
        let expect = 0.9 * (1.0f64).min(iqr / 1.349) * 4f64.powf(-0.2);
        assert!((h - expect).abs() < 1e-12);
        let scaled: Vec<f64> = x.iter().map(|v| v * 3.5).collect();
        assert!((silverman_bandwidth(&scaled).unwrap() - 3.5 * h).abs() < 1e-12);
        assert!((0.9 * 100f64.powf(-0.2) - 0.35829).abs() < 1e-5);
    }

    #[test]
    fn silverman_rejects_degenerate() {
        assert!(silverman_bandwidth(&[1.0]).is_err());
        assert!(silverman_bandwidth(&[2.0, 2.0, 2.0]).is_err());
        // IQR zero but SD positive falls back to SD
        let x = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
        assert!(silverman_bandwidth(&x).unwrap() > 0.0);
    }

    #[test]
    fn constant_and_single_point() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let spec = KernelSpec::new(1.2).unwrap();
        let c = nadaraya_watson(&x, &[4.0; 4], &[0.5, 2.5, 10.0], spec).unwrap();
        assert!((c[0].unwrap() - 4.0).abs() < 1e-12);
        assert!((c[1].unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(c[2], None);
        let one = nadaraya_watson(&[2.0], &[7.0], &[2.0], spec).unwrap();
        assert_eq!(one, vec![Some(7.0)]);
        assert!(nadaraya_watson(&[], &[], &[0.0], spec).is_err());
    }

    #[test]
    fn recovers_linear_function() {
        let mut r = rng::stream(5, "nw", 0);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let x: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut r)).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v + noise.sample(&mut r)).collect();
        let spec = KernelSpec::silverman(&x).unwrap();
        let grid = quantile_grid(&x, 0.1, 0.9, 41);
        let est = nadaraya_watson(&x, &y, &grid, spec).unwrap();
        for (g, e) in grid.iter().zip(est) {
            assert!((e.unwrap() - 2.0 * g).abs() < 0.1);
        }
    }

    #[test]
    fn curve_bands_bracket_estimate() {
        let mut r = rng::stream(6, "nw", 0);
        let x: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut r)).collect();
        let y: Vec<f64> = x.iter().map(|&v| v.sin()).collect();
        let grid = quantile_grid(&x, 0.1, 0.9, 9);
        let c = kernel_curve(&x, &y, &grid, KernelSpec::silverman(&x).unwrap(), 100, 1).unwrap();
        for g in 0..9 {
            assert!(c.lower[g] <= c.upper[g]);
            assert!(c.estimate[g].is_finite());
        }
        let again = kernel_curve(&x, &y, &grid, KernelSpec::silverman(&x).unwrap(), 100, 1).unwrap();
        assert_eq!(c, again);
    }
}
