use super::ols::ols_fit;
use super::{DesignMatrix, RegressionResult};
use crate::error::{Error, Result};
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

const TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 100_000;
/// Sweeps between attempts at an exact solve on the current support.
const POLISH_EVERY: usize = 25;

/// Lasso solution at one penalty, on the original scale of `X` and `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub lambda: f64,
    pub intercept: f64,
    /// One per column of the design; dropped columns hold 0.
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn active(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&j| self.coefficients[j] != 0.0)
            .collect()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.intercept + (0..x.ncols()).map(|j| x[(i, j)] * self.coefficients[j]).sum::<f64>())
            .collect()
    }

    pub fn r2(&self, x: &DMatrix<f64>, y: &[f64]) -> f64 {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let sst: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        let ssr: f64 = self.predict(x).iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum();
        if sst > 0.0 {
            1.0 - ssr / sst
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoResult {
    pub names: Vec<String>,
    pub lambdas: Vec<f64>,
    /// Full-sample fits along the grid.
    pub path: Vec<LassoFit>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub idx_min: usize,
    pub idx_1se: usize,
}

impl LassoResult {
    pub fn lambda_min(&self) -> f64 {
        self.lambdas[self.idx_min]
    }

    pub fn lambda_1se(&self) -> f64 {
        self.lambdas[self.idx_1se]
    }

    /// Column indices selected at λ_1se.
    pub fn active(&self) -> Vec<usize> {
        self.path[self.idx_1se].active()
    }

    pub fn active_names(&self) -> Vec<String> {
        self.active().into_iter().map(|j| self.names[j].clone()).collect()
    }
}

/// Columns standardised to mean 0 and population SD 1, `y` centred.
pub(crate) struct Standardized {
    pub z: DMatrix<f64>,
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub y_mean: f64,
    pub yc: DVector<f64>,
    pub p: usize,
}

impl Standardized {
    pub fn new(x: &DMatrix<f64>, y: &[f64], names: &[String], warn: bool) -> Result<Self> {
        let (n, p) = x.shape();
        if n != y.len() {
            return Err(Error::Dimension {
                expected: n,
                got: y.len(),
            });
        }
        if n < 2 {
            return Err(Error::Data("lasso needs at least 2 observations".into()));
        }
        let (mut keep, mut mean, mut sd) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..p {
            let c = x.column(j);
            let m = c.mean();
            let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            if s > 1e-12 * (1.0 + m.abs()) {
                keep.push(j);
                mean.push(m);
                sd.push(s);
            } else if warn {
                log::warn!("lasso: dropping zero-variance column `{}`", names[j]);
            }
        }
        let z = DMatrix::from_fn(n, keep.len(), |i, k| (x[(i, keep[k])] - mean[k]) / sd[k]);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
        Ok(Standardized {
            z,
            keep,
            mean,
            sd,
            y_mean,
            yc,
            p,
        })
    }

    pub fn lambda_max(&self) -> f64 {
        let n = self.z.nrows() as f64;
        // same reduction as the coordinate update, so λ_max zeroes exactly
        self.z
            .column_iter()
            .map(|c| (c.dot(&self.yc) / n).abs())
            .fold(0.0, f64::max)
    }

    fn objective(&self, lambda: f64, psi: &DVector<f64>) -> f64 {
        let r = &self.yc - &self.z * psi;
        r.norm_squared() / (2.0 * self.z.nrows() as f64) + lambda * psi.lp_norm(1)
    }

    /// Solves the stationarity conditions on the support of `psi` with its
    /// signs held fixed, dropping coordinates whose sign flips and solving
    /// again. Returned only if it lowers the objective.
    fn support_solve(&self, lambda: f64, psi: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.z.nrows() as f64;
        let mut active: Vec<usize> = (0..psi.len()).filter(|&j| psi[j] != 0.0).collect();
        while !active.is_empty() {
            let za = self.z.select_columns(&active);
            let gram = za.tr_mul(&za) / n;
            let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| psi[j].signum()));
            let sol = gram.cholesky()?.solve(&(za.tr_mul(&self.yc) / n - signs * lambda));
            let keep: Vec<usize> = (0..active.len()).filter(|&k| sol[k] * psi[active[k]] > 0.0).collect();
            if keep.len() == active.len() {
                let mut out = DVector::zeros(psi.len());
                for (&j, &v) in active.iter().zip(sol.iter()) {
                    out[j] = v;
                }
                return (self.objective(lambda, &out) < self.objective(lambda, psi)).then_some(out);
            }
            active = keep.into_iter().map(|k| active[k]).collect();
        }
        None
    }

    /// Coordinate descent from `start`, returning standardised coefficients.
    /// On ill-conditioned designs plain sweeps crawl once the support is
    /// found, so every few sweeps the support is solved exactly; the
    /// convergence test is always a plain sweep.
    pub fn solve(&self, lambda: f64, start: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
        let n = self.z.nrows() as f64;
        let q = self.z.ncols();
        let mut psi = start.clone();
        let mut r = &self.yc - &self.z * &psi;
        let mut full = true;
        for sweep in 1..=MAX_SWEEPS {
            if sweep % POLISH_EVERY == 0 {
                if let Some(exact) = self.support_solve(lambda, &psi) {
                    psi = exact;
                    r = &self.yc - &self.z * &psi;
                    full = true;
                }
            }
            let mut change: f64 = 0.0;
            for j in 0..q {
                if !full && psi[j] == 0.0 {
                    continue;
                }
                let zj = self.z.column(j);
                let old = psi[j];
                let rho = old + zj.dot(&r) / n;
                let new = soft_threshold(rho, lambda);
                if new != old {
                    r.axpy(old - new, &zj, 1.0);
                    psi[j] = new;
                    change = change.max((new - old).abs());
                }
            }
            if change < TOL {
                if full {
                    return Ok((psi, sweep));
                }
                full = true;
            } else {
                full = false;
            }
        }
        Err(Error::Numerical(format!("lasso did not converge at lambda {lambda}")))
    }

    pub fn unstandardize(&self, lambda: f64, psi: &DVector<f64>, sweeps: usize) -> LassoFit {
        let mut coefficients = vec![0.0; self.p];
        let mut intercept = self.y_mean;
        for (k, &j) in self.keep.iter().enumerate() {
            coefficients[j] = psi[k] / self.sd[k];
            intercept -= coefficients[j] * self.mean[k];
        }
        LassoFit {
            lambda,
            intercept,
            coefficients,
            sweeps,
        }
    }

    fn path(&self, lambdas: &[f64]) -> Result<Vec<LassoFit>> {
        let mut psi = DVector::zeros(self.z.ncols());
        lambdas
            .iter()
            .map(|&l| {
                let (next, sweeps) = self.solve(l, &psi)?;
                psi = next;
                Ok(self.unstandardize(l, &psi, sweeps))
            })
            .collect()
    }
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    z.signum() * (z.abs() - lambda).max(0.0)
}

fn check_lambda(l: f64) -> Result<()> {
    if !(l >= 0.0 && l.is_finite()) {
        return Err(Error::Config(format!("lasso penalty must be non-negative, got {l}")));
    }
    Ok(())
}

/// Minimises `(1/2N)·Σ(y_i - α - ψ·z_i)² + λ·Σ|ψ_j|` over standardised
/// columns `z`; the intercept is unpenalised.
pub fn lasso_cd(x: &DesignMatrix, y: &[f64], lambda: f64) -> Result<LassoFit> {
    check_lambda(lambda)?;
    let s = Standardized::new(&x.values, y, &x.names, true)?;
    let (psi, sweeps) = s.solve(lambda, &DVector::zeros(s.z.ncols()))?;
    Ok(s.unstandardize(lambda, &psi, sweeps))
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(x: &DesignMatrix, y: &[f64]) -> Result<f64> {
    Ok(Standardized::new(&x.values, y, &x.names, false)?.lambda_max())
}

/// `m` log-spaced penalties from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_grid(lambda_max: f64, m: usize, ratio: f64) -> Vec<f64> {
    if m == 1 {
        return vec![lambda_max];
    }
    (0..m)
        .map(|k| lambda_max * ratio.powf(k as f64 / (m - 1) as f64))
        .collect()
}

/// Warm-started fits along `lambdas`, in the order given.
pub fn lasso_path(x: &DesignMatrix, y: &[f64], lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    lambdas.iter().try_for_each(|&l| check_lambda(l))?;
    Standardized::new(&x.values, y, &x.names, true)?.path(lambdas)
}

/// K-fold cross-validation along a penalty grid. Folds come from a seeded
/// shuffle; each fold standardises on its own training rows.
pub fn lasso_cv(x: &DesignMatrix, y: &[f64], lambdas: &[f64], k: usize, seed: u64) -> Result<LassoResult> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    let n = x.nrows();
    if k < 2 || n < k {
        return Err(Error::Config(format!(
            "{k}-fold cross-validation needs k >= 2 and n >= k (n = {n})"
        )));
    }
    let path = lasso_path(x, y, lambdas)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "lasso-folds", 0));
    let mut fold = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    let fold_mse: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let xt = x.values.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let fits = Standardized::new(&xt, &yt, &x.names, false)?.path(lambdas)?;
            let xh = x.values.select_rows(&test);
            Ok(fits
                .iter()
                .map(|fit| {
                    let pred = fit.predict(&xh);
                    test.iter().zip(pred).map(|(&i, p)| (y[i] - p).powi(2)).sum::<f64>() / test.len() as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let kf = k as f64;
    let mut cv_mean = Vec::with_capacity(lambdas.len());
    let mut cv_se = Vec::with_capacity(lambdas.len());
    for l in 0..lambdas.len() {
        let m = fold_mse.iter().map(|f| f[l]).sum::<f64>() / kf;
        let var = fold_mse.iter().map(|f| (f[l] - m).powi(2)).sum::<f64>() / (kf - 1.0);
        cv_mean.push(m);
        cv_se.push((var / kf).sqrt());
    }
    let idx_min = (0..lambdas.len())
        .min_by(|&a, &b| cv_mean[a].total_cmp(&cv_mean[b]))
        .expect("non-empty grid");
    let bound = cv_mean[idx_min] + cv_se[idx_min];
    let idx_1se = (0..lambdas.len())
        .filter(|&l| cv_mean[l] <= bound)
        .max_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]).then(b.cmp(&a)))
        .expect("the minimum qualifies");
    Ok(LassoResult {
        names: x.names.clone(),
        lambdas: lambdas.to_vec(),
        path,
        cv_mean,
        cv_se,
        idx_min,
        idx_1se,
    })
}

/// OLS on an intercept plus the selected columns.
pub fn post_lasso(x: &DesignMatrix, y: &[f64], active: &[usize]) -> Result<RegressionResult> {
    if let Some(&j) = active.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::Config(format!("active column {j} out of range")));
    }
    let mut sel = x.select_columns(active);
    sel.intercept = true;
    ols_fit(&sel, y)
}

/// Appends squares and pairwise products of every column: `A²` and `A×B`
/// for each pair in column order.
pub fn build_interactions(body: &DesignMatrix) -> Result<DesignMatrix> {
    let p = body.ncols();
    if p < 2 {
        return Err(Error::Config("interactions need at least two columns".into()));
    }
    let mut names = body.names.clone();
    let mut cols: Vec<(usize, usize)> = Vec::with_capacity(p * (p + 1) / 2);
    for j in 0..p {
        for k in j..p {
            names.push(if j == k {
                format!("{}²", body.names[j])
            } else {
                format!("{}×{}", body.names[j], body.names[k])
            });
            cols.push((j, k));
        }
    }
    let n = body.nrows();
    let values = DMatrix::from_fn(n, p + cols.len(), |i, c| {
        if c < p {
            body.values[(i, c)]
        } else {
            let (j, k) = cols[c - p];
            body.values[(i, j)] * body.values[(i, k)]
        }
    });
    DesignMatrix::new(values, names, body.intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn sparse(n: usize, p: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut r = rng::stream(seed, "lasso-test", 0);
        let v = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut r));
        let y = (0..n)
            .map(|i| {
                1.0 + 2.0 * v[(i, 0)] - 1.5 * v[(i, 1)]
                    + v[(i, 2)]
                    + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)
            })
            .collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        (DesignMatrix::new(v, names, true).unwrap(), y)
    }

    #[test]
    fn zero_penalty_is_ols() {
        let (x, y) = sparse(100, 6, 1);
        let l = lasso_cd(&x, &y, 0.0).unwrap();
        let o = ols_fit(&x, &y).unwrap();
        assert!((l.intercept - o.coefficients[0]).abs() < 1e-6);
        for j in 0..6 {
            assert!((l.coefficients[j] - o.coefficients[j + 1]).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (x, y) = sparse(80, 5, 2);
        let lm = lambda_max(&x, &y).unwrap();
        assert!(lasso_cd(&x, &y, lm).unwrap().active().is_empty());
        assert!(!lasso_cd(&x, &y, 0.9 * lm).unwrap().active().is_empty());
    }

    #[test]
    fn single_standardized_regressor_soft_thresholds() {
        // x has mean 0 and population SD 1
        let xs = [-1.5, -0.5, 0.5, 1.5];
        let s = (xs.iter().map(|v: &f64| v * v).sum::<f64>() / 4.0).sqrt();
        let xs: Vec<f64> = xs.iter().map(|v| v / s).collect();
        let y = [0.3, -0.2, 1.1, 0.4];
        let z = xs.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / 4.0 - 0.0 * y.iter().sum::<f64>();
        let x = DesignMatrix::from_columns(4, vec![("a".into(), xs)], true).unwrap();
        for lambda in [0.0, 0.05, 0.2, 1.0] {
            let fit = lasso_cd(&x, &y, lambda).unwrap();
            assert!((fit.coefficients[0] - soft_threshold(z, lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_column_is_dropped() {
        let (mut x, y) = sparse(50, 3, 3);
        x.push_column("const", &[2.0; 50]).unwrap();
        let f = lasso_cd(&x, &y, 0.01).unwrap();
        assert_eq!(f.coefficients.len(), 4);
        assert_eq!(f.coefficients[3], 0.0);
    }

    #[test]
    fn kkt_conditions_hold_along_path() {
        let (x, y) = sparse(120, 10, 4);
        let s = Standardized::new(&x.values, &y, &x.names, false).unwrap();
        let grid = lambda_grid(s.lambda_max(), 20, 1e-3);
        let mut psi = DVector::zeros(10);
        for &l in &grid {
            psi = s.solve(l, &psi).unwrap().0;
            let r = &s.yc - &s.z * &psi;
            let g = s.z.transpose() * r / 120.0;
            for j in 0..10 {
                if psi[j] == 0.0 {
                    assert!(g[j].abs() <= l + 1e-7);
                } else {
                    assert!((g[j] - l * psi[j].signum()).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = lambda_grid(2.0, 100, 1e-4);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-4).abs() < 1e-15);
        assert!((g[1] / g[0] - g[2] / g[1]).abs() < 1e-12);
    }

    #[test]
    fn cv_one_se_rule_and_determinism() {
        let (x, y) = sparse(200, 20, 5);
        let grid = lambda_grid(lambda_max(&x, &y).unwrap(), 30, 1e-3);
        let a = lasso_cv(&x, &y, &grid, 10, 7).unwrap();
        assert!(a.lambda_1se() >= a.lambda_min());
        assert!(a.cv_mean[a.idx_1se] <= a.cv_mean[a.idx_min] + a.cv_se[a.idx_min]);
        let act = a.active();
        assert!([0, 1, 2].iter().all(|j| act.contains(j)));
        let b = lasso_cv(&x, &y, &grid, 10, 7).unwrap();
        assert_eq!((a.idx_min, a.idx_1se), (b.idx_min, b.idx_1se));
        assert!(lasso_cv(&x, &y, &[], 10, 7).is_err());
        assert!(lasso_cv(&x, &y, &grid, 1, 7).is_err());
    }

    #[test]
    fn post_lasso_edge_cases() {
        let (x, y) = sparse(60, 4, 6);
        let all = post_lasso(&x, &y, &[0, 1, 2, 3]).unwrap();
        assert_eq!(all.coefficients, ols_fit(&x, &y).unwrap().coefficients);
        let none = post_lasso(&x, &y, &[]).unwrap();
        assert_eq!(none.coefficients.len(), 1);
        assert_eq!(none.r2, 0.0);
    }

    #[test]
    fn interaction_counts_and_names() {
        let x = DesignMatrix::from_columns(
            2,
            vec![("A".into(), vec![1.0, 2.0]), ("B".into(), vec![3.0, 5.0])],
            true,
        )
        .unwrap();
        let e = build_interactions(&x).unwrap();
        assert_eq!(e.names, vec!["A", "B", "A²", "A×B", "B²"]);
        assert_eq!(e.column("A×B").unwrap(), vec![3.0, 10.0]);
        let nine = DesignMatrix::new(DMatrix::zeros(3, 9), (0..9).map(|j| format!("m{j}")).collect(), true).unwrap();
        assert_eq!(build_interactions(&nine).unwrap().ncols(), 9 + 45);
    }
}
