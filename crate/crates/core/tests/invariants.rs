use bodyshape_core::econometrics::{
    nadaraya_watson, ols_fit, ols_with_bootstrap, proxy_ols, DesignMatrix, KernelSpec, RegressionResult, INTERCEPT,
};
use bodyshape_core::pipeline::{
    income_controls, log_income, reporting_error_height, reporting_error_weight, LOG_INCOME,
};
use bodyshape_core::rng::stream;
use bodyshape_core::synth::{sample_cohort_with, SubjectRecord};
use bodyshape_core::DgpConfig;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn small_dgp() -> DgpConfig {
    let mut c = DgpConfig::default();
    c.template_rings = 8;
    c.template_segments = 8;
    c
}

fn column(s: &[SubjectRecord], f: impl Fn(&SubjectRecord) -> f64) -> Vec<f64> {
    s.iter().map(f).collect()
}

fn t_stat(r: &RegressionResult, name: &str, truth: f64) -> f64 {
    (r.coef(name).unwrap() - truth) / r.se(name).unwrap()
}

#[test]
fn reporting_error_regressions_recover_the_dgp() {
    let dgp = small_dgp();
    let s = sample_cohort_with(2000, &dgp, 71, false).unwrap().subjects;
    let h = reporting_error_height(&s, 500, 1).unwrap();
    let w = reporting_error_weight(&s, 500, 2).unwrap();
    let nonzero = [
        (&h, INTERCEPT, dgp.rep_h_intercept),
        (&h, LOG_INCOME, dgp.rep_h_income),
        (&h, "Age²", dgp.rep_h_age_sq),
        (&w, INTERCEPT, dgp.rep_w_intercept),
        (&w, "Weight", dgp.rep_w_weight),
        (&w, "Fitness", dgp.rep_w_fitness),
    ];
    for (r, name, truth) in nonzero {
        let t = t_stat(r, name, truth);
        assert!(t.abs() <= 3.0, "{name}: t = {t:.2}");
    }

    // zero coefficients: rejection rate of |t| > 1.96 across cohorts
    let zeros = [
        (true, "Age"),
        (true, "Education"),
        (true, "Height"),
        (false, LOG_INCOME),
        (false, "Age"),
        (false, "Education"),
    ];
    let (mut rejected, mut total) = (0usize, 0usize);
    for k in 0..100u64 {
        let s = sample_cohort_with(500, &dgp, 5000 + k, false).unwrap().subjects;
        let h = reporting_error_height(&s, 200, k).unwrap();
        let w = reporting_error_weight(&s, 200, k).unwrap();
        for (height, name) in zeros {
            let r = if height { &h } else { &w };
            rejected += usize::from(t_stat(r, name, 0.0).abs() > 1.96);
            total += 1;
        }
    }
    let rate = rejected as f64 / total as f64;
    assert!((0.025..=0.085).contains(&rate), "rejection rate {rate:.3}");
}

#[test]
fn ols_bias_follows_confounding() {
    let n = 20_000;
    for kappa in [0.0, 0.8] {
        let mut dgp = small_dgp().with_endogeneity(kappa, 0.6);
        dgp.lambda_a = 1.0;
        let s = sample_cohort_with(n, &dgp, 41, false).unwrap().subjects;
        let latent = DesignMatrix::from_columns(
            n,
            vec![
                ("stature".into(), column(&s, |r| r.latent.stature)),
                ("obesity".into(), column(&s, |r| r.latent.obesity)),
                ("hip_waist".into(), column(&s, |r| r.latent.hip_waist)),
            ],
            false,
        )
        .unwrap();
        let x = income_controls(&s).unwrap().hstack(&latent).unwrap();
        let fit = ols_with_bootstrap(&x, &log_income(&s), 100, 3).unwrap();
        let bias = fit.coef("stature").unwrap() - dgp.beta_stature;
        if kappa == 0.0 {
            assert!(bias.abs() <= 3.0 * fit.se("stature").unwrap(), "bias {bias:.4}");
        } else {
            let ovb = dgp.stature_ovb(bodyshape_core::synth::Group::Female);
            assert!((bias - ovb).abs() <= 0.1 * ovb, "bias {bias:.4} vs {ovb:.4}");
        }
    }
}

#[test]
fn proxies_for_ability() {
    let n = 2000;
    let mut dgp = small_dgp().with_endogeneity(0.8, 0.6);
    dgp.lambda_a = 1.0;
    let s = sample_cohort_with(n, &dgp, 43, false).unwrap().subjects;
    let y = log_income(&s);
    let core = income_controls(&s).unwrap();
    let features = DesignMatrix::from_columns(
        n,
        vec![
            ("stature".into(), column(&s, |r| r.latent.stature)),
            ("obesity".into(), column(&s, |r| r.latent.obesity)),
            ("hip_waist".into(), column(&s, |r| r.latent.hip_waist)),
        ],
        false,
    )
    .unwrap();
    let none = DesignMatrix::new(nalgebra::DMatrix::zeros(n, 0), Vec::new(), false).unwrap();

    let naive = proxy_ols(&y, &core, &none, &features, 200, 1).unwrap();
    let ability = DesignMatrix::from_columns(n, vec![("ability".into(), column(&s, |r| r.ability))], false).unwrap();
    let perfect = proxy_ols(&y, &core, &ability, &features, 200, 1).unwrap();
    assert!(t_stat(&naive, "stature", dgp.beta_stature).abs() > 2.0);
    assert!(t_stat(&perfect, "stature", dgp.beta_stature).abs() <= 2.0);

    let mut r = stream(43, "noise-proxies", 0);
    let noise = DesignMatrix::from_columns(
        n,
        (0..3)
            .map(|k| {
                (
                    format!("noise{k}"),
                    (0..n).map(|_| StandardNormal.sample(&mut r)).collect(),
                )
            })
            .collect(),
        false,
    )
    .unwrap();
    let noisy = proxy_ols(&y, &core, &noise, &features, 0, 0).unwrap();
    let shift = noisy.coef("stature").unwrap() - naive.coef("stature").unwrap();
    assert!(shift.abs() < naive.se("stature").unwrap(), "shift {shift:.4}");
    assert_eq!(
        proxy_ols(&y, &core, &none, &features, 0, 0).unwrap(),
        ols_fit(&core.hstack(&features).unwrap(), &y).unwrap()
    );
}

/// Mean over replications of the largest |m̂ − sin| on the inner 80% of the support.
fn sine_error(n: usize, reps: u64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let grid: Vec<f64> = (0..=40).map(|k| two_pi * (0.1 + 0.8 * k as f64 / 40.0)).collect();
    (0..reps)
        .map(|rep| {
            let mut r = stream(rep, "sine", n as u64);
            let x: Vec<f64> = (0..n).map(|_| two_pi * r.random::<f64>()).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|v| v.sin() + 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
                .collect();
            let m = nadaraya_watson(&x, &y, &grid, KernelSpec::silverman(&x).unwrap()).unwrap();
            grid.iter()
                .zip(m)
                .map(|(g, v)| (v.unwrap() - g.sin()).abs())
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / reps as f64
}

#[test]
fn kernel_error_halves_from_1000_to_8000() {
    let ratio = sine_error(8000, 20) / sine_error(1000, 20);
    assert!((0.35..=0.65).contains(&ratio), "ratio {ratio:.3}");
}
