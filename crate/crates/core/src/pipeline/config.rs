use crate::autoencoder::TrainConfig;
use crate::error::{Error, Result};
use crate::kv::{parse_bool, parse_list, parse_value, KvFile};
use crate::synth::DgpConfig;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Analyses that `regress` can run. Each maps to one family of output
/// tables or curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Analysis {
    ReportingErrors,
    KernelCurves,
    QuantileCurves,
    HeightWeight,
    Bmi,
    BodyMeasures,
    Lasso,
    EmbeddingRegressions,
    EmbeddingFit,
    Proxy,
    ControlFunction,
    Comparison,
}

impl Analysis {
    pub const ALL: [Analysis; 12] = [
        Analysis::ReportingErrors,
        Analysis::KernelCurves,
        Analysis::QuantileCurves,
        Analysis::HeightWeight,
        Analysis::Bmi,
        Analysis::BodyMeasures,
        Analysis::Lasso,
        Analysis::EmbeddingRegressions,
        Analysis::EmbeddingFit,
        Analysis::Proxy,
        Analysis::ControlFunction,
        Analysis::Comparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::ReportingErrors => "reporting_errors",
            Analysis::KernelCurves => "kernel_curves",
            Analysis::QuantileCurves => "quantile_curves",
            Analysis::HeightWeight => "height_weight",
            Analysis::Bmi => "bmi",
            Analysis::BodyMeasures => "body_measures",
            Analysis::Lasso => "lasso",
            Analysis::EmbeddingRegressions => "embedding_regressions",
            Analysis::EmbeddingFit => "embedding_fit",
            Analysis::Proxy => "proxy",
            Analysis::ControlFunction => "control_function",
            Analysis::Comparison => "comparison",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown analysis `{s}`")))
    }

    /// Whether the analysis reads autoencoder embeddings.
    pub fn needs_embedding(self) -> bool {
        matches!(
            self,
            Analysis::EmbeddingRegressions
                | Analysis::EmbeddingFit
                | Analysis::Proxy
                | Analysis::ControlFunction
                | Analysis::Comparison
        )
    }
}

/// Everything a command needs. Read from a flat `key=value` file; keys not
/// listed in [`RunConfig::KEYS`] or [`DgpConfig::KEYS`] are errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Cohort size.
    pub n: usize,
    pub dgp: DgpConfig,
    /// Training hyperparameters; `train.d` is the pooled embedding size and
    /// `train.seed` is overwritten by `seed`.
    pub train: TrainConfig,
    /// Train and analyse each group separately.
    pub per_group: bool,
    pub embedding_dim_male: usize,
    pub embedding_dim_female: usize,
    /// Embedding sizes for the validation-loss sweep; empty skips it.
    pub sweep_dims: Vec<usize>,
    pub bootstrap: usize,
    pub kernel_grid_points: usize,
    pub quantile_levels: Vec<f64>,
    pub quantile_degree: usize,
    pub lasso_folds: usize,
    pub lasso_grid_points: usize,
    pub lasso_min_ratio: f64,
    pub analyses: BTreeSet<Analysis>,
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "out",
        "n",
        "per_group",
        "embedding_dim",
        "embedding_dim_male",
        "embedding_dim_female",
        "epochs",
        "batch_size",
        "learning_rate",
        "learning_rate_final",
        "rms_decay",
        "rms_epsilon",
        "split_fraction",
        "hidden",
        "sweep_dims",
        "bootstrap_replicates",
        "kernel_grid_points",
        "quantile_levels",
        "quantile_degree",
        "lasso_folds",
        "lasso_grid_points",
        "lasso_min_ratio",
        "analyses",
    ];

    /// Defaults with the given seed.
    pub fn new(seed: u64) -> Self {
        RunConfig {
            seed,
            out: None,
            n: 500,
            dgp: DgpConfig::default(),
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            per_group: true,
            embedding_dim_male: 2,
            embedding_dim_female: 3,
            sweep_dims: Vec::new(),
            bootstrap: 1000,
            kernel_grid_points: 50,
            quantile_levels: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            quantile_degree: 3,
            lasso_folds: 10,
            lasso_grid_points: 100,
            lasso_min_ratio: 1e-4,
            analyses: Analysis::ALL.into_iter().collect(),
        }
    }

    /// Builds a config from a parsed file. `seed_override` wins over the
    /// file's `seed`; one of the two must be present.
    pub fn from_kv(kv: &KvFile, seed_override: Option<u64>) -> Result<Self> {
        let file_seed = kv
            .iter()
            .find(|(k, _)| *k == "seed")
            .map(|(k, v)| parse_value::<u64>(k, v))
            .transpose()?;
        let seed = seed_override
            .or(file_seed)
            .ok_or_else(|| Error::Config("a seed is required (config key `seed` or --seed)".into()))?;
        let mut c = RunConfig::new(seed);
        for (k, v) in kv.iter() {
            c.set(k, v)?;
        }
        c.seed = seed;
        c.train.seed = seed;
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?, seed_override)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "n" => self.n = parse_value(key, v)?,
            "per_group" => self.per_group = parse_bool(key, v)?,
            "embedding_dim" => self.train.d = parse_value(key, v)?,
            "embedding_dim_male" => self.embedding_dim_male = parse_value(key, v)?,
            "embedding_dim_female" => self.embedding_dim_female = parse_value(key, v)?,
            "epochs" => self.train.epochs = parse_value(key, v)?,
            "batch_size" => self.train.batch_size = parse_value(key, v)?,
            "learning_rate" => self.train.learning_rate = parse_value(key, v)?,
            "learning_rate_final" => self.train.learning_rate_final = parse_value(key, v)?,
            "rms_decay" => self.train.rms_decay = parse_value(key, v)?,
            "rms_epsilon" => self.train.rms_epsilon = parse_value(key, v)?,
            "split_fraction" => self.train.split_fraction = parse_value(key, v)?,
            "hidden" => self.train.hidden = parse_list(key, v)?,
            "sweep_dims" => self.sweep_dims = parse_list(key, v)?,
            "bootstrap_replicates" => self.bootstrap = parse_value(key, v)?,
            "kernel_grid_points" => self.kernel_grid_points = parse_value(key, v)?,
            "quantile_levels" => self.quantile_levels = parse_list(key, v)?,
            "quantile_degree" => self.quantile_degree = parse_value(key, v)?,
            "lasso_folds" => self.lasso_folds = parse_value(key, v)?,
            "lasso_grid_points" => self.lasso_grid_points = parse_value(key, v)?,
            "lasso_min_ratio" => self.lasso_min_ratio = parse_value(key, v)?,
            "analyses" => {
                self.analyses = match v.trim() {
                    "all" => Analysis::ALL.into_iter().collect(),
                    "none" | "" => BTreeSet::new(),
                    list => list
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(Analysis::from_name)
                        .collect::<Result<_>>()?,
                }
            }
            _ => {
                if !self.dgp.set(key, v)? {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.train.validate()?;
        if self.n == 0 {
            return Err(Error::Config("`n` must be ≥ 1".into()));
        }
        if self.embedding_dim_male == 0 || self.embedding_dim_female == 0 {
            return Err(Error::Config("embedding dimensions must be ≥ 1".into()));
        }
        if self.sweep_dims.contains(&0) {
            return Err(Error::Config("`sweep_dims` entries must be ≥ 1".into()));
        }
        if self.bootstrap < 100 {
            return Err(Error::Config(format!(
                "`bootstrap_replicates` must be ≥ 100, got {}",
                self.bootstrap
            )));
        }
        if self.kernel_grid_points < 2 {
            return Err(Error::Config("`kernel_grid_points` must be ≥ 2".into()));
        }
        if let Some(t) = self.quantile_levels.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Config(format!("quantile level {t} outside (0, 1)")));
        }
        if self.lasso_folds < 2 || self.lasso_grid_points == 0 {
            return Err(Error::Config("lasso needs ≥ 2 folds and a non-empty grid".into()));
        }
        if !(self.lasso_min_ratio > 0.0 && self.lasso_min_ratio < 1.0) {
            return Err(Error::Config("`lasso_min_ratio` must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// The effective configuration as a `key=value` file that
    /// [`RunConfig::from_kv`] reads back to an equal value. `out` is omitted.
    pub fn to_kv(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let t = &self.train;
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "per_group={}", self.per_group);
        let _ = writeln!(s, "embedding_dim={}", t.d);
        let _ = writeln!(s, "embedding_dim_male={}", self.embedding_dim_male);
        let _ = writeln!(s, "embedding_dim_female={}", self.embedding_dim_female);
        let _ = writeln!(s, "epochs={}", t.epochs);
        let _ = writeln!(s, "batch_size={}", t.batch_size);
        let _ = writeln!(s, "learning_rate={}", t.learning_rate);
        let _ = writeln!(s, "learning_rate_final={}", t.learning_rate_final);
        let _ = writeln!(s, "rms_decay={}", t.rms_decay);
        let _ = writeln!(s, "rms_epsilon={}", t.rms_epsilon);
        let _ = writeln!(s, "split_fraction={}", t.split_fraction);
        let _ = writeln!(s, "hidden={}", list(&t.hidden));
        let _ = writeln!(s, "sweep_dims={}", list(&self.sweep_dims));
        let _ = writeln!(s, "bootstrap_replicates={}", self.bootstrap);
        let _ = writeln!(s, "kernel_grid_points={}", self.kernel_grid_points);
        let levels: Vec<String> = self.quantile_levels.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "quantile_levels={}", levels.join(","));
        let _ = writeln!(s, "quantile_degree={}", self.quantile_degree);
        let _ = writeln!(s, "lasso_folds={}", self.lasso_folds);
        let _ = writeln!(s, "lasso_grid_points={}", self.lasso_grid_points);
        let _ = writeln!(s, "lasso_min_ratio={}", self.lasso_min_ratio);
        let names: Vec<&str> = self.analyses.iter().map(|a| a.name()).collect();
        let _ = writeln!(
            s,
            "analyses={}",
            if names.is_empty() {
                "none".to_string()
            } else {
                names.join(",")
            }
        );
        s.push_str(&self.dgp.to_kv());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory_and_overridable() {
        let kv = KvFile::parse("n=20\n").unwrap();
        assert!(matches!(RunConfig::from_kv(&kv, None), Err(Error::Config(_))));
        let kv = KvFile::parse("seed=3\nn=20\n").unwrap();
        assert_eq!(RunConfig::from_kv(&kv, None).unwrap().seed, 3);
        let c = RunConfig::from_kv(&kv, Some(9)).unwrap();
        assert_eq!((c.seed, c.train.seed), (9, 9));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let kv = KvFile::parse("seed=1\nbogus=2\n").unwrap();
        assert!(matches!(RunConfig::from_kv(&kv, None), Err(Error::Config(_))));
    }

    #[test]
    fn dgp_keys_pass_through() {
        let kv = KvFile::parse("seed=1\nkappa_female=0.3\ntemplate_rings=12\n").unwrap();
        let c = RunConfig::from_kv(&kv, None).unwrap();
        assert_eq!(c.dgp.kappa_female, 0.3);
        assert_eq!(c.dgp.template_rings, 12);
    }

    #[test]
    fn analysis_lists() {
        let none = RunConfig::from_kv(&KvFile::parse("seed=1\nanalyses=none").unwrap(), None).unwrap();
        assert!(none.analyses.is_empty());
        let some = RunConfig::from_kv(&KvFile::parse("seed=1\nanalyses=lasso, bmi").unwrap(), None).unwrap();
        assert_eq!(some.analyses.len(), 2);
        assert!(RunConfig::from_kv(&KvFile::parse("seed=1\nanalyses=nope").unwrap(), None).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut c = RunConfig::new(5);
        c.sweep_dims = vec![1, 2, 3];
        c.quantile_levels = vec![0.2, 0.8];
        c.analyses = [Analysis::Lasso].into_iter().collect();
        c.dgp.kappa_male = 0.1;
        let back = RunConfig::from_kv(&KvFile::parse(&c.to_kv()).unwrap(), None).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values() {
        for text in [
            "seed=1\nbootstrap_replicates=10",
            "seed=1\nquantile_levels=0.5,1.0",
            "seed=1\nn=0",
            "seed=x",
        ] {
            assert!(
                RunConfig::from_kv(&KvFile::parse(text).unwrap(), None).is_err(),
                "{text}"
            );
        }
    }
}
