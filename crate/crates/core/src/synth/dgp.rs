//! Data-generating-process coefficients, readable from and writable to flat
//! `key=value` files. Key names are the field names.

use super::{Group, TemplateSpec};
use crate::error::{Error, Result};
use crate::kv::{parse_bool, parse_value, KvFile};
use std::fmt::Write as _;

macro_rules! dgp_config {
    (
        f64 { $($f:ident = $fd:expr, $fdoc:literal;)* }
        usize { $($u:ident = $ud:expr, $udoc:literal;)* }
        bool { $($b:ident = $bd:expr, $bdoc:literal;)* }
    ) => {
        /// Coefficients of the synthetic cohort. Defaults give a desk-scale
        /// cohort whose "female-like" group has endogenous stature.
        #[derive(Debug, Clone, PartialEq)]
        pub struct DgpConfig {
            $(#[doc = $fdoc] pub $f: f64,)*
            $(#[doc = $udoc] pub $u: usize,)*
            $(#[doc = $bdoc] pub $b: bool,)*
        }

        impl Default for DgpConfig {
            fn default() -> Self {
                DgpConfig {
                    $($f: $fd,)*
                    $($u: $ud,)*
                    $($b: $bd,)*
                }
            }
        }

        impl DgpConfig {
            pub const KEYS: &'static [&'static str] = &[
                $(stringify!($f),)* $(stringify!($u),)* $(stringify!($b),)*
            ];

            /// Sets `key`; `Ok(false)` if the key is not a DGP key.
            pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
                match key {
                    $(stringify!($f) => self.$f = parse_value(key, value)?,)*
                    $(stringify!($u) => self.$u = parse_value(key, value)?,)*
                    $(stringify!($b) => self.$b = parse_bool(key, value)?,)*
                    _ => return Ok(false),
                }
                Ok(true)
            }

            pub fn to_kv(&self) -> String {
                let mut s = String::new();
                $(let _ = writeln!(s, "{}={}", stringify!($f), self.$f);)*
                $(let _ = writeln!(s, "{}={}", stringify!($u), self.$u);)*
                $(let _ = writeln!(s, "{}={}", stringify!($b), self.$b);)*
                s
            }

            fn float_fields(&self) -> Vec<(&'static str, f64)> {
                vec![$((stringify!($f), self.$f),)*]
            }
        }
    };
}

dgp_config! {
    f64 {
        female_fraction = 0.5, "Probability that a subject belongs to the female-like group.";
        stature_mean = 0.0, "Mean of the stature latent.";
        kappa_male = 0.0, "Ability loading of stature, male-like group.";
        kappa_female = 0.8, "Ability loading of stature, female-like group.";
        sigma_u_male = 1.0, "SD of the ability-free part of stature, male-like group.";
        sigma_u_female = 0.6, "SD of the ability-free part of stature, female-like group.";
        hip_waist_sd_male = 0.25, "SD of the hip-to-waist latent, male-like group.";
        hip_waist_sd_female = 1.0, "SD of the hip-to-waist latent, female-like group.";
        lambda_a = 0.25, "Ability loading in the log-income error.";
        alpha_intercept = 10.2, "Log-income intercept.";
        alpha_education = 0.05, "Return to a year of education.";
        alpha_experience = 0.02, "Return to a year of potential experience.";
        alpha_experience_sq = -0.0004, "Coefficient on squared experience.";
        alpha_children = 0.0, "Coefficient on number of children.";
        alpha_married = 0.25, "Married vs single.";
        alpha_management = 0.1, "Management vs white-collar occupation.";
        beta_stature = 0.06, "Log-income effect of one SD of the stature latent.";
        beta_obesity = -0.04, "Log-income effect of one SD of the obesity latent.";
        beta_hip_waist = 0.0, "Log-income effect of one SD of the hip-to-waist latent.";
        income_sd = 0.5, "SD of the idiosyncratic log-income error.";
        gamma_shoe = 0.3, "Stature loading on the shoe-size determinant.";
        gamma_jacket = 0.25, "Stature loading on the jacket-size determinant.";
        gamma_pants = 0.2, "Stature loading on the pants-size determinant.";
        pref_sd_shoe = 1.0, "SD of the shoe-size determinant (size units).";
        pref_sd_jacket = 1.0, "SD of the jacket-size determinant (size units).";
        pref_sd_pants = 1.0, "SD of the pants-size determinant (size units).";
        rep_h_intercept = 60.0, "Height reporting error: intercept (mm).";
        rep_h_income = -5.0, "Height reporting error: mm per log-dollar of income.";
        rep_h_age_sq = 0.005, "Height reporting error: mm per squared year of age.";
        rep_h_sd = 25.0, "Height reporting error: noise SD (mm).";
        rep_w_intercept = 4.0, "Weight reporting error: intercept (kg).";
        rep_w_weight = -0.05, "Weight reporting error: kg per kg of true weight.";
        rep_w_fitness = -0.075, "Weight reporting error: kg per weekly exercise hour.";
        rep_w_sd = 2.0, "Weight reporting error: noise SD (kg).";
        mesh_noise_sd = 2.0, "Per-coordinate Gaussian vertex noise (mm).";
        density = 985.0, "Body density (kg/m³).";
        template_height_mm = 1750.0, "Baseline template height H₀ (mm).";
        c_stature = 0.05, "Template stature scale.";
        c_obesity = 0.08, "Template obesity scale.";
        c_hip_waist = 0.04, "Template hip-to-waist scale.";
    }
    usize {
        template_rings = 24, "Template ring count.";
        template_segments = 32, "Template segments per ring.";
    }
    bool {
        income_classes = false, "Snap income to the ten class midpoints before taking logs.";
    }
}

impl DgpConfig {
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut c = DgpConfig::default();
        for (k, v) in kv.iter() {
            if !c.set(k, v)? {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Both groups share the same ability loading and residual stature SD.
    pub fn with_endogeneity(mut self, kappa: f64, sigma_u: f64) -> Self {
        self.kappa_male = kappa;
        self.kappa_female = kappa;
        self.sigma_u_male = sigma_u;
        self.sigma_u_female = sigma_u;
        self
    }

    pub fn template(&self) -> TemplateSpec {
        TemplateSpec {
            rings: self.template_rings,
            segments: self.template_segments,
            height_mm: self.template_height_mm,
            c_stature: self.c_stature,
            c_obesity: self.c_obesity,
            c_hip_waist: self.c_hip_waist,
            ..TemplateSpec::default()
        }
    }

    pub fn kappa(&self, g: Group) -> f64 {
        match g {
            Group::Male => self.kappa_male,
            Group::Female => self.kappa_female,
        }
    }

    pub fn sigma_u(&self, g: Group) -> f64 {
        match g {
            Group::Male => self.sigma_u_male,
            Group::Female => self.sigma_u_female,
        }
    }

    pub fn hip_waist_sd(&self, g: Group) -> f64 {
        match g {
            Group::Male => self.hip_waist_sd_male,
            Group::Female => self.hip_waist_sd_female,
        }
    }

    /// Variance of stature carried by the three size determinants.
    pub fn instrument_variance(&self) -> f64 {
        (self.gamma_shoe * self.pref_sd_shoe).powi(2)
            + (self.gamma_jacket * self.pref_sd_jacket).powi(2)
            + (self.gamma_pants * self.pref_sd_pants).powi(2)
    }

    /// SD of the stature component that is neither ability nor a size
    /// determinant.
    pub fn residual_stature_sd(&self, g: Group) -> f64 {
        (self.sigma_u(g).powi(2) - self.instrument_variance()).max(0.0).sqrt()
    }

    /// Omitted-variable bias of OLS on the stature latent when ability is
    /// left in the error: `λ_a·κ/(κ²+σ_u²)`.
    pub fn stature_ovb(&self, g: Group) -> f64 {
        let k = self.kappa(g);
        self.lambda_a * k / (k * k + self.sigma_u(g).powi(2))
    }

    /// True weight at which the expected weight-reporting error is zero,
    /// given mean fitness.
    pub fn weight_error_crossing(&self, mean_fitness: f64) -> f64 {
        -(self.rep_w_intercept + self.rep_w_fitness * mean_fitness) / self.rep_w_weight
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.float_fields() {
            if !v.is_finite() {
                return Err(Error::Config(format!("`{name}` must be finite, got {v}")));
            }
        }
        let sds = [
            ("sigma_u_male", self.sigma_u_male),
            ("sigma_u_female", self.sigma_u_female),
            ("hip_waist_sd_male", self.hip_waist_sd_male),
            ("hip_waist_sd_female", self.hip_waist_sd_female),
            ("income_sd", self.income_sd),
            ("pref_sd_shoe", self.pref_sd_shoe),
            ("pref_sd_jacket", self.pref_sd_jacket),
            ("pref_sd_pants", self.pref_sd_pants),
            ("rep_h_sd", self.rep_h_sd),
            ("rep_w_sd", self.rep_w_sd),
            ("mesh_noise_sd", self.mesh_noise_sd),
        ];
        if let Some((name, v)) = sds.iter().find(|(_, v)| *v < 0.0) {
            return Err(Error::Config(format!("`{name}` must be ≥ 0, got {v}")));
        }
        if !(self.density > 0.0) {
            return Err(Error::Config("`density` must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.female_fraction) {
            return Err(Error::Config("`female_fraction` must lie in [0, 1]".into()));
        }
        for g in [Group::Male, Group::Female] {
            if self.sigma_u(g).powi(2) + 1e-12 < self.instrument_variance() {
                return Err(Error::Config(format!(
                    "sigma_u ({}) too small for the size-determinant loadings (variance {})",
                    self.sigma_u(g),
                    self.instrument_variance()
                )));
            }
        }
        self.template().validate()
    }
}
