//! Per-group analyses. Each function returns estimator results; `run_group`
//! renders them to CSV under `tables/` and `curves/`.

use super::config::{Analysis, RunConfig};
use crate::autoencoder::correlation;
use crate::econometrics::{
    build_interactions, control_function, kernel_curve, lambda_grid, lambda_max, lasso_cv, ols_fit, ols_with_bootstrap,
    quantile_grid, quantile_polyfit, residual_instrument, write_curve_csv, write_regression_table, CfResult, Curve,
    DesignMatrix, KernelSpec, LassoResult, QuantileFit, RegressionResult, INTERCEPT,
};
use crate::error::{Error, Result};
use crate::rng::tag_seed;
use crate::synth::{BodyMeasures, SubjectRecord, BIRTH_REGION_LABELS, MARITAL_LABELS, OCCUPATION_LABELS, RACE_LABELS};
use nalgebra::DMatrix;
use std::fmt::Write as _;

pub const HEIGHT: &str = "Height";
pub const WEIGHT: &str = "Weight";
pub const BMI: &str = "BMI";
pub const HIP_TO_WAIST: &str = "Hip-to-waist";
pub const LOG_INCOME: &str = "Log income";

/// Rendered outputs: path relative to the run directory, file contents.
pub type Outputs = Vec<(String, String)>;

/// Standardised, aligned embedding components for one group, rows in
/// subject order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEmbedding {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl GroupEmbedding {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.column(k).iter().copied().collect()
    }

    pub fn columns(&self) -> Vec<(String, Vec<f64>)> {
        (0..self.names.len())
            .map(|k| (self.names[k].clone(), self.column(k)))
            .collect()
    }
}

fn col(s: &[SubjectRecord], f: impl Fn(&SubjectRecord) -> f64) -> Vec<f64> {
    s.iter().map(f).collect()
}

/// Reference-coded indicators for the categories that occur in the sample;
/// code 0 is the reference.
fn push_present(d: &mut DesignMatrix, codes: &[u8], labels: &[&str]) -> Result<()> {
    for (k, label) in labels.iter().enumerate().skip(1) {
        let c: Vec<f64> = codes
            .iter()
            .map(|&c| f64::from(u8::from(usize::from(c) == k)))
            .collect();
        if c.iter().any(|&v| v > 0.0) {
            d.push_column(*label, &c)?;
        }
    }
    Ok(())
}

/// Income controls: experience and its square, education, children, and
/// race, occupation and marital indicators, with an intercept.
pub fn income_controls(s: &[SubjectRecord]) -> Result<DesignMatrix> {
    let mut d = DesignMatrix::from_columns(
        s.len(),
        vec![
            ("Experience".into(), col(s, |r| r.experience)),
            ("Experience²".into(), col(s, |r| r.experience * r.experience)),
            ("Education".into(), col(s, |r| r.education)),
            ("Children".into(), col(s, |r| f64::from(r.n_children))),
        ],
        true,
    )?;
    push_present(&mut d, &s.iter().map(|r| r.race).collect::<Vec<_>>(), &RACE_LABELS)?;
    push_present(
        &mut d,
        &s.iter().map(|r| r.occupation).collect::<Vec<_>>(),
        &OCCUPATION_LABELS,
    )?;
    push_present(
        &mut d,
        &s.iter().map(|r| r.marital).collect::<Vec<_>>(),
        &MARITAL_LABELS,
    )?;
    Ok(d)
}

/// Observed proxies for unobserved income determinants: fitness and birth
/// region indicators.
pub fn proxies(s: &[SubjectRecord]) -> Result<DesignMatrix> {
    let mut d = DesignMatrix::from_columns(s.len(), vec![("Fitness".into(), col(s, |r| r.fitness))], false)?;
    push_present(
        &mut d,
        &s.iter().map(|r| r.birth_region).collect::<Vec<_>>(),
        &BIRTH_REGION_LABELS,
    )?;
    Ok(d)
}

pub fn height_cm(s: &[SubjectRecord], reported: bool) -> Vec<f64> {
    col(
        s,
        |r| if reported { r.reported_height } else { r.measures.height } / 10.0,
    )
}

pub fn weight_kg(s: &[SubjectRecord], reported: bool) -> Vec<f64> {
    col(s, |r| if reported { r.reported_weight } else { r.measures.weight })
}

pub fn bmi(s: &[SubjectRecord], reported: bool) -> Vec<f64> {
    col(s, |r| if reported { r.reported_bmi() } else { r.bmi() })
}

pub fn hip_to_waist(s: &[SubjectRecord]) -> Vec<f64> {
    col(s, |r| r.measures.hip_to_waist())
}

pub fn log_income(s: &[SubjectRecord]) -> Vec<f64> {
    col(s, |r| r.log_income)
}

/// Measured height, BMI and hip-to-waist ratio: the conventional stand-ins
/// for the three shape components.
pub fn conventional_features(s: &[SubjectRecord]) -> Vec<(String, Vec<f64>)> {
    vec![
        (HEIGHT.into(), height_cm(s, false)),
        (BMI.into(), bmi(s, false)),
        (HIP_TO_WAIST.into(), hip_to_waist(s)),
    ]
}

fn features(n: usize, cols: Vec<(String, Vec<f64>)>) -> Result<DesignMatrix> {
    DesignMatrix::from_columns(n, cols, false)
}

/// Height reporting error (mm) on log income, age, age², education and
/// measured height (mm).
pub fn reporting_error_height(s: &[SubjectRecord], b: usize, seed: u64) -> Result<RegressionResult> {
    let x = DesignMatrix::from_columns(
        s.len(),
        vec![
            (LOG_INCOME.into(), log_income(s)),
            ("Age".into(), col(s, |r| r.age)),
            ("Age²".into(), col(s, |r| r.age * r.age)),
            ("Education".into(), col(s, |r| r.education)),
            (HEIGHT.into(), col(s, |r| r.measures.height)),
        ],
        true,
    )?;
    ols_with_bootstrap(&x, &col(s, SubjectRecord::height_error), b, seed)
}

/// Weight reporting error (kg) on log income, age, education, fitness and
/// measured weight (kg).
pub fn reporting_error_weight(s: &[SubjectRecord], b: usize, seed: u64) -> Result<RegressionResult> {
    let x = DesignMatrix::from_columns(
        s.len(),
        vec![
            (LOG_INCOME.into(), log_income(s)),
            ("Age".into(), col(s, |r| r.age)),
            ("Education".into(), col(s, |r| r.education)),
            ("Fitness".into(), col(s, |r| r.fitness)),
            (WEIGHT.into(), col(s, |r| r.measures.weight)),
        ],
        true,
    )?;
    ols_with_bootstrap(&x, &col(s, SubjectRecord::weight_error), b, seed)
}

/// Log income on the income controls plus `extra` regressors.
pub fn income_regression(
    s: &[SubjectRecord],
    extra: Vec<(String, Vec<f64>)>,
    b: usize,
    seed: u64,
) -> Result<RegressionResult> {
    let x = income_controls(s)?.hstack(&features(s.len(), extra)?)?;
    ols_with_bootstrap(&x, &log_income(s), b, seed)
}

fn zscore(v: Vec<f64>) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    v.into_iter().map(|x| (x - m) / sd).collect()
}

/// Controls, then every body measure as a z-score, followed by squares and
/// pairwise products of those z-scores.
pub fn lasso_design(s: &[SubjectRecord]) -> Result<DesignMatrix> {
    let body = DesignMatrix::from_columns(
        s.len(),
        BodyMeasures::NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| (name.to_string(), zscore(col(s, |r| r.measures.as_array()[k]))))
            .collect(),
        false,
    )?;
    let mut controls = income_controls(s)?;
    controls.intercept = false;
    controls.hstack(&build_interactions(&body)?)
}

pub fn lasso_analysis(s: &[SubjectRecord], cfg: &RunConfig, seed: u64) -> Result<(LassoResult, RegressionResult)> {
    let z = lasso_design(s)?;
    let y = log_income(s);
    let grid = lambda_grid(lambda_max(&z, &y)?, cfg.lasso_grid_points, cfg.lasso_min_ratio);
    let cv = lasso_cv(&z, &y, &grid, cfg.lasso_folds, tag_seed(seed, "lasso-cv"))?;
    let mut sel = z.select_columns(&cv.active());
    sel.intercept = true;
    let post = ols_with_bootstrap(&sel, &y, cfg.bootstrap, tag_seed(seed, "post-lasso"))?;
    Ok((cv, post))
}

/// Size determinants: residuals of shoe, jacket and pants sizes on foot
/// length, chest and waist circumference.
pub fn size_instruments(s: &[SubjectRecord]) -> Result<DesignMatrix> {
    let m = |f: fn(&BodyMeasures) -> f64| col(s, |r| f(&r.measures));
    DesignMatrix::from_columns(
        s.len(),
        vec![
            (
                "Shoe size determinant".into(),
                residual_instrument(&col(s, |r| r.shoe_size), &m(|b| b.foot_length))?,
            ),
            (
                "Jacket size determinant".into(),
                residual_instrument(&col(s, |r| r.jacket_size), &m(|b| b.chest_circ))?,
            ),
            (
                "Pants size determinant".into(),
                residual_instrument(&col(s, |r| r.pants_size), &m(|b| b.waist_circ))?,
            ),
        ],
        false,
    )
}

/// Control function with the first listed feature endogenous and the rest
/// treated as exogenous.
pub fn cf_analysis(s: &[SubjectRecord], feats: &[(String, Vec<f64>)], b: usize, seed: u64) -> Result<CfResult> {
    let (first, rest) = feats
        .split_first()
        .ok_or_else(|| Error::Config("no endogenous feature".into()))?;
    let other = features(s.len(), rest.to_vec())?;
    control_function(
        &log_income(s),
        &income_controls(s)?,
        &first.0,
        &first.1,
        &other,
        &size_instruments(s)?,
        b,
        seed,
    )
}

pub fn cf_test_csv(cf: &CfResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["statistic", "value"]).expect("in-memory write");
    let rows = [
        ("instrument_f", cf.first.instrument_f.to_string()),
        ("weak_instruments", cf.weak_instruments.to_string()),
        ("pi", cf.pi.to_string()),
        ("pi_se", cf.pi_se.to_string()),
        ("pi_t", cf.pi_t.to_string()),
        ("endogenous", cf.endogenous.to_string()),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Linear fit of each embedding component on its matched measure.
pub fn embedding_fit_csv(emb: &GroupEmbedding, measures: &[(String, Vec<f64>)], matched: &[usize]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["component", "measure", "intercept", "slope", "r2", "corr"])
        .expect("in-memory write");
    for (k, name) in emb.names.iter().enumerate() {
        let (mname, m) = &measures[matched[k]];
        let p = emb.column(k);
        let x = DesignMatrix::from_columns(m.len(), vec![(mname.clone(), m.clone())], true)?;
        let fit = ols_fit(&x, &p)?;
        let c = correlation(p.iter().copied(), m.iter().copied());
        w.write_record([
            name.clone(),
            mname.clone(),
            fit.coefficients[0].to_string(),
            fit.coefficients[1].to_string(),
            fit.r2.to_string(),
            c.to_string(),
        ])
        .expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv"))
}

fn comparison_csv(panels: &[(&str, &RegressionResult, Vec<String>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["panel", "variable", "coefficient", "lower90", "upper90"])
        .expect("in-memory write");
    for (panel, r, vars) in panels {
        let b = r.bootstrap.as_ref().expect("bootstrapped");
        for v in vars {
            let j = r.index(v).expect("variable in regression");
            w.write_record([
                panel.to_string(),
                v.clone(),
                r.coefficients[j].to_string(),
                b.lower[j].to_string(),
                b.upper[j].to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn lasso_cv_curve(cv: &LassoResult) -> Curve {
    // 90% band: ±1.645 fold standard errors
    Curve {
        grid: cv.lambdas.clone(),
        estimate: cv.cv_mean.clone(),
        lower: cv.cv_mean.iter().zip(&cv.cv_se).map(|(m, s)| m - 1.645 * s).collect(),
        upper: cv.cv_mean.iter().zip(&cv.cv_se).map(|(m, s)| m + 1.645 * s).collect(),
    }
}

fn lasso_selection_csv(cv: &LassoResult) -> String {
    let mut s = String::from("variable,coefficient\n");
    let fit = &cv.path[cv.idx_1se];
    let _ = writeln!(s, "lambda_min,{}", cv.lambda_min());
    let _ = writeln!(s, "lambda_1se,{}", cv.lambda_1se());
    let _ = writeln!(s, "{INTERCEPT},{}", fit.intercept);
    for j in cv.active() {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record([cv.names[j].as_str(), &fit.coefficients[j].to_string()])
            .expect("in-memory write");
        s.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory flush")).expect("utf-8 csv"));
    }
    s
}

/// A fit that hits the iteration cap keeps its last iterate; the flag
/// reports whether that happened.
fn quantile_curve(x: &[f64], y: &[f64], grid: &[f64], tau: f64, degree: usize) -> Result<(Curve, bool)> {
    let (f, capped) = match quantile_polyfit(x, y, tau, degree) {
        Ok(f) => (f, false),
        Err(Error::NoConvergence { last_iterate, .. }) => {
            log::warn!("quantile fit at tau = {tau} stopped at the iteration cap; keeping the last iterate");
            (QuantileFit::from_coefficients(x, tau, last_iterate), true)
        }
        Err(e) => return Err(e),
    };
    let c = Curve {
        grid: grid.to_vec(),
        estimate: grid.iter().map(|&g| f.predict(g)).collect(),
        lower: vec![f64::NAN; grid.len()],
        upper: vec![f64::NAN; grid.len()],
    };
    Ok((c, capped))
}

/// Runs every enabled analysis for one group. `emb` is required by the
/// analyses that use embeddings; `matched[k]` indexes the conventional
/// feature that component `k` was aligned to.
pub fn run_group(
    cfg: &RunConfig,
    group: &str,
    s: &[SubjectRecord],
    emb: Option<(&GroupEmbedding, &[usize])>,
) -> Result<(Outputs, Vec<(Analysis, String)>)> {
    let mut out: Outputs = Vec::new();
    let mut done = Vec::new();
    let b = cfg.bootstrap;
    let seed = |name: &str| tag_seed(cfg.seed, &format!("{group}/{name}"));
    let table = |out: &mut Outputs, name: &str, r: &RegressionResult| {
        out.push((format!("tables/{name}_{group}.csv"), write_regression_table(r)));
    };
    for &a in &cfg.analyses {
        if a.needs_embedding() && emb.is_none() {
            return Err(Error::Data(format!(
                "analysis `{}` needs embeddings for group {group}; run `encode` first",
                a.name()
            )));
        }
        let mut status = "ok".to_string();
        match a {
            Analysis::ReportingErrors => {
                table(
                    &mut out,
                    "reporting_error_height",
                    &reporting_error_height(s, b, seed("reh"))?,
                );
                table(
                    &mut out,
                    "reporting_error_weight",
                    &reporting_error_weight(s, b, seed("rew"))?,
                );
            }
            Analysis::KernelCurves => {
                for (name, x, y) in [
                    (
                        "height_error",
                        col(s, |r| r.measures.height),
                        col(s, SubjectRecord::height_error),
                    ),
                    (
                        "weight_error",
                        col(s, |r| r.measures.weight),
                        col(s, SubjectRecord::weight_error),
                    ),
                ] {
                    let grid = quantile_grid(&x, 0.05, 0.95, cfg.kernel_grid_points);
                    let c = kernel_curve(&x, &y, &grid, KernelSpec::silverman(&x)?, b, seed(name))?;
                    out.push((format!("curves/kernel_{name}_{group}.csv"), write_curve_csv(&c)));
                }
            }
            Analysis::QuantileCurves => {
                let (mut fits, mut capped) = (0, 0);
                for (name, x, y) in [
                    (
                        "height_error",
                        col(s, |r| r.measures.height),
                        col(s, SubjectRecord::height_error),
                    ),
                    (
                        "weight_error",
                        col(s, |r| r.measures.weight),
                        col(s, SubjectRecord::weight_error),
                    ),
                ] {
                    let grid = quantile_grid(&x, 0.05, 0.95, cfg.kernel_grid_points);
                    for &tau in &cfg.quantile_levels {
                        let (c, cap) = quantile_curve(&x, &y, &grid, tau, cfg.quantile_degree)?;
                        fits += 1;
                        capped += usize::from(cap);
                        let tag = format!("q{:03}", (tau * 1000.0).round() as u32);
                        out.push((format!("curves/quantile_{name}_{tag}_{group}.csv"), write_curve_csv(&c)));
                    }
                }
                if capped > 0 {
                    status = format!("ok; {capped} of {fits} fits kept the last iterate at the iteration cap");
                }
            }
            Analysis::HeightWeight => {
                for (src, rep) in [("reported", true), ("measured", false)] {
                    let h = (HEIGHT.to_string(), height_cm(s, rep));
                    let w = (WEIGHT.to_string(), weight_kg(s, rep));
                    let r1 = income_regression(s, vec![h.clone()], b, seed(&format!("h-{src}")))?;
                    let r2 = income_regression(s, vec![h, w], b, seed(&format!("hw-{src}")))?;
                    table(&mut out, &format!("income_height_{src}"), &r1);
                    table(&mut out, &format!("income_height_weight_{src}"), &r2);
                }
            }
            Analysis::Bmi => {
                for (src, rep) in [("reported", true), ("measured", false)] {
                    let bm = (BMI.to_string(), bmi(s, rep));
                    let w = (WEIGHT.to_string(), weight_kg(s, rep));
                    let h = (HEIGHT.to_string(), height_cm(s, rep));
                    for (name, extra) in [
                        ("income_bmi", vec![bm.clone()]),
                        ("income_bmi_weight", vec![bm.clone(), w]),
                        ("income_bmi_height", vec![bm.clone(), h]),
                    ] {
                        let tag = format!("{name}_{src}");
                        table(&mut out, &tag, &income_regression(s, extra, b, seed(&tag))?);
                    }
                }
            }
            Analysis::BodyMeasures => {
                let extra = BodyMeasures::NAMES
                    .iter()
                    .enumerate()
                    .map(|(k, name)| (name.to_string(), col(s, |r| r.measures.as_array()[k])))
                    .collect();
                table(
                    &mut out,
                    "income_body_measures",
                    &income_regression(s, extra, b, seed("body"))?,
                );
            }
            Analysis::Lasso => {
                let (cv, post) = lasso_analysis(s, cfg, seed("lasso"))?;
                out.push((
                    format!("curves/lasso_cv_{group}.csv"),
                    write_curve_csv(&lasso_cv_curve(&cv)),
                ));
                out.push((format!("tables/lasso_selected_{group}.csv"), lasso_selection_csv(&cv)));
                table(&mut out, "post_lasso", &post);
            }
            Analysis::EmbeddingRegressions => {
                let (e, _) = emb.expect("checked above");
                for (name, p) in e.columns() {
                    let tag = format!("income_{}", name.to_lowercase());
                    table(&mut out, &tag, &income_regression(s, vec![(name, p)], b, seed(&tag))?);
                }
                table(
                    &mut out,
                    "income_components",
                    &income_regression(s, e.columns(), b, seed("p-all"))?,
                );
                let conv = income_regression(s, conventional_features(s), b, seed("conv"))?;
                table(&mut out, "income_height_bmi_hip_waist", &conv);
            }
            Analysis::EmbeddingFit => {
                let (e, matched) = emb.expect("checked above");
                out.push((
                    format!("tables/embedding_fit_{group}.csv"),
                    embedding_fit_csv(e, &conventional_features(s), matched)?,
                ));
            }
            Analysis::Proxy => {
                let (e, _) = emb.expect("checked above");
                let y = log_income(s);
                let (x, pr) = (income_controls(s)?, proxies(s)?);
                let deep =
                    crate::econometrics::proxy_ols(&y, &x, &pr, &features(s.len(), e.columns())?, b, seed("proxy-p"))?;
                let conv = crate::econometrics::proxy_ols(
                    &y,
                    &x,
                    &pr,
                    &features(s.len(), conventional_features(s))?,
                    b,
                    seed("proxy-conv"),
                )?;
                table(&mut out, "proxy_components", &deep);
                table(&mut out, "proxy_conventional", &conv);
            }
            Analysis::ControlFunction => {
                let (e, _) = emb.expect("checked above");
                for (name, feats) in [("components", e.columns()), ("conventional", conventional_features(s))] {
                    let cf = cf_analysis(s, &feats, b, seed(&format!("cf-{name}")))?;
                    let first_design = income_controls(s)?
                        .hstack(&features(s.len(), feats[1..].to_vec())?)?
                        .hstack(&size_instruments(s)?)?;
                    let first = ols_with_bootstrap(&first_design, &feats[0].1, b, seed(&format!("fs-{name}")))?;
                    table(&mut out, &format!("cf_first_stage_{name}"), &first);
                    table(&mut out, &format!("cf_second_stage_{name}"), &cf.second);
                    out.push((format!("tables/cf_test_{name}_{group}.csv"), cf_test_csv(&cf)));
                }
            }
            Analysis::Comparison => {
                let (e, _) = emb.expect("checked above");
                let conv = income_regression(s, conventional_features(s), b, seed("conv"))?;
                let deep = income_regression(s, e.columns(), b, seed("p-all"))?;
                let conv_names = conventional_features(s).into_iter().map(|c| c.0).collect();
                out.push((
                    format!("tables/comparison_{group}.csv"),
                    comparison_csv(&[
                        ("conventional", &conv, conv_names),
                        ("autoencoder", &deep, e.names.clone()),
                    ]),
                ));
            }
        }
        done.push((a, status));
    }
    Ok((out, done))
}
