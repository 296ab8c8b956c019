//! The `synth`, `train`, `encode`, `regress` and `replicate` commands.
//!
//! All commands share one output directory:
//!
//! ```text
//! cohort.csv, cohort_config.txt, meshes/<id>.off, summary.csv
//! run_config.txt
//! models/model_<group>.gae, models/history_<group>.csv, models/sweep_<group>.csv
//! embeddings/embedding_<group>.csv, embeddings/alignment_<group>.csv
//! tables/*.csv, curves/*.csv
//! manifest.csv
//! ```
//!
//! `<group>` is `male` and `female` with `per_group=true`, otherwise `all`.

mod analyses;
mod config;
mod manifest;

pub use analyses::{
    bmi, cf_analysis, conventional_features, height_cm, hip_to_waist, income_controls, income_regression,
    lasso_analysis, lasso_design, log_income, proxies, reporting_error_height, reporting_error_weight, run_group,
    size_instruments, weight_kg, GroupEmbedding, Outputs, BMI, HEIGHT, HIP_TO_WAIST, LOG_INCOME, WEIGHT,
};
pub use config::{Analysis, RunConfig};
pub use manifest::{sha256_hex, Manifest, MANIFEST};

use crate::autoencoder::{
    align_components, dim_sweep, encode_cohort, flatten_cohort, train, write_history_csv, write_sweep_csv, Alignment,
    AutoencoderModel, Embedding, TrainConfig,
};
use crate::econometrics::percentile;
use crate::error::{Error, Result};
use crate::synth::{sample_cohort, Cohort, Group, SubjectRecord, COHORT_CSV};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const RUN_CONFIG: &str = "run_config.txt";
pub const SUMMARY: &str = "summary.csv";

/// Group labels used in file names, with the subset they select.
pub fn groups(cfg: &RunConfig) -> Vec<(&'static str, Option<Group>)> {
    if cfg.per_group {
        vec![("male", Some(Group::Male)), ("female", Some(Group::Female))]
    } else {
        vec![("all", None)]
    }
}

fn select(subjects: &[SubjectRecord], g: Option<Group>) -> Vec<SubjectRecord> {
    subjects
        .iter()
        .filter(|s| g.is_none_or(|g| s.group == g))
        .cloned()
        .collect()
}

fn embedding_dim(cfg: &RunConfig, g: Option<Group>) -> usize {
    match g {
        Some(Group::Male) => cfg.embedding_dim_male,
        Some(Group::Female) => cfg.embedding_dim_female,
        None => cfg.train.d,
    }
}

/// Runs `f` as a named stage. On failure the stage is marked failed, the
/// partial manifest is written and the error is tagged with the stage name.
fn stage<T>(m: &mut Manifest, out: &Path, name: &str, f: impl FnOnce(&mut Manifest) -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    match f(m) {
        Ok(v) => {
            m.set_status(format!("stage:{name}"), "ok");
            m.write(out)?;
            Ok(v)
        }
        Err(e) => {
            m.set_status(format!("stage:{name}"), format!("failed: {e}"));
            m.write(out)?;
            Err(Error::stage(name, e))
        }
    }
}

fn summary_stats(v: &[f64]) -> [f64; 5] {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    [mean, percentile(&s, 0.5), sd, s[0], s[s.len() - 1]]
}

/// Descriptive statistics by group: `group,variable,Mean,Median,S.D.,Min,Max`.
pub fn summary_csv(subjects: &[SubjectRecord]) -> String {
    type Getter = fn(&SubjectRecord) -> f64;
    let vars: [(&str, Getter); 21] = [
        ("Height", |s| s.measures.height),
        ("Weight", |s| s.measures.weight),
        ("BMI", |s| s.bmi()),
        ("Reported height", |s| s.reported_height),
        ("Reported weight", |s| s.reported_weight),
        ("Reported BMI", |s| s.reported_bmi()),
        ("Chest circumference", |s| s.measures.chest_circ),
        ("Waist circumference", |s| s.measures.waist_circ),
        ("Hip circumference", |s| s.measures.hip_circ),
        ("Neck circumference", |s| s.measures.neck_circ),
        ("Foot length", |s| s.measures.foot_length),
        ("Family income", |s| s.income()),
        ("Log income", |s| s.log_income),
        ("Education", |s| s.education),
        ("Experience", |s| s.experience),
        ("Age", |s| s.age),
        ("Fitness", |s| s.fitness),
        ("Children", |s| f64::from(s.n_children)),
        ("Shoe size", |s| s.shoe_size),
        ("Pants size", |s| s.pants_size),
        ("Jacket size", |s| s.jacket_size),
    ];
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "variable", "Mean", "Median", "S.D.", "Min", "Max"])
        .expect("in-memory write");
    for (label, g) in [
        ("all", None),
        ("male", Some(Group::Male)),
        ("female", Some(Group::Female)),
    ] {
        let sub = select(subjects, g);
        if sub.len() < 2 {
            continue;
        }
        for (name, f) in vars {
            let v: Vec<f64> = sub.iter().map(f).collect();
            let mut row = vec![label.to_string(), name.to_string()];
            row.extend(summary_stats(&v).iter().map(f64::to_string));
            w.write_record(row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Draws the cohort and writes it with its summary table. Starts a fresh
/// manifest.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let mut m = Manifest::default();
    stage(&mut m, out, "synth", |m| synth_into(cfg, out, m))?;
    Ok(m)
}

fn synth_into(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let cohort = sample_cohort(cfg.n, &cfg.dgp, cfg.seed)?;
    for rel in cohort.write_dir(out)? {
        m.record(out, &rel)?;
    }
    m.emit(out, SUMMARY, summary_csv(&cohort.subjects).as_bytes())?;
    m.emit(out, RUN_CONFIG, cfg.to_kv().as_bytes())
}

fn read_subjects(out: &Path) -> Result<Vec<SubjectRecord>> {
    let path = out.join(COHORT_CSV);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Cohort::subjects_from_csv(&text)
}

/// Trains one autoencoder per group, plus the optional dimension sweep.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let mut m = Manifest::read_or_default(out)?;
    stage(&mut m, out, "train", |m| train_into(cfg, out, m))?;
    Ok(m)
}

fn train_into(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let cohort = Cohort::read_dir(out)?;
    if !cohort.has_meshes() {
        return Err(Error::Data(format!(
            "no meshes under {}; run `synth` first",
            out.display()
        )));
    }
    for (label, g) in groups(cfg) {
        let sub = match g {
            Some(g) => cohort.subset(g),
            None => cohort.clone(),
        };
        let data = flatten_cohort(&sub)?;
        let tc = TrainConfig {
            d: embedding_dim(cfg, g),
            seed: cfg.seed,
            ..cfg.train.clone()
        };
        log::info!("training group {label}: {} subjects, d = {}", data.len(), tc.d);
        let (model, history) = train(&data, &tc)?;
        m.emit(out, &format!("models/model_{label}.gae"), &model.to_bytes())?;
        m.emit(
            out,
            &format!("models/history_{label}.csv"),
            write_history_csv(&history).as_bytes(),
        )?;
        if !cfg.sweep_dims.is_empty() {
            let rows = dim_sweep(&data, &cfg.sweep_dims, &tc)?;
            let best = rows
                .iter()
                .min_by(|a, b| a.val_mse.total_cmp(&b.val_mse))
                .expect("non-empty sweep");
            m.emit(
                out,
                &format!("models/sweep_{label}.csv"),
                write_sweep_csv(&rows).as_bytes(),
            )?;
            m.set_status(format!("sweep:{label}"), format!("argmin d={}", best.d));
        }
    }
    Ok(())
}

fn alignment_csv(a: &Alignment, measure_names: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["component", "raw_component", "sign", "measure", "corr"])
        .expect("in-memory write");
    for k in 0..a.order.len() {
        let j = a.order[k];
        w.write_record([
            format!("P{}", k + 1),
            format!("{}", j + 1),
            a.signs[j].to_string(),
            measure_names[a.measure[k]].clone(),
            a.corr[k].to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Encodes each group with its model and aligns the components to height,
/// BMI and hip-to-waist ratio.
pub fn cmd_encode(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let mut m = Manifest::read_or_default(out)?;
    stage(&mut m, out, "encode", |m| encode_into(cfg, out, m))?;
    Ok(m)
}

fn encode_into(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let cohort = Cohort::read_dir(out)?;
    for (label, g) in groups(cfg) {
        let sub = match g {
            Some(g) => cohort.subset(g),
            None => cohort.clone(),
        };
        let model = AutoencoderModel::load(&out.join(format!("models/model_{label}.gae")))?;
        let emb = encode_cohort(&model, &sub)?;
        let feats = conventional_features(&sub.subjects);
        let measures = DMatrix::from_fn(sub.len(), feats.len(), |i, k| feats[k].1[i]);
        let a = align_components(&emb.raw, &measures)?;
        let names: Vec<String> = feats.into_iter().map(|f| f.0).collect();
        m.emit(
            out,
            &format!("embeddings/embedding_{label}.csv"),
            emb.aligned(&a).to_csv().as_bytes(),
        )?;
        m.emit(
            out,
            &format!("embeddings/alignment_{label}.csv"),
            alignment_csv(&a, &names).as_bytes(),
        )?;
    }
    Ok(())
}

/// Reads an aligned embedding and the measure index of each component.
fn read_group_embedding(out: &Path, label: &str, subjects: &[SubjectRecord]) -> Result<(GroupEmbedding, Vec<usize>)> {
    let path = out.join(format!("embeddings/embedding_{label}.csv"));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let emb = Embedding::from_csv(&text)?;
    if emb.ids.len() != subjects.len() || emb.ids.iter().zip(subjects).any(|(i, s)| *i != s.id) {
        return Err(Error::Data(format!("{} does not match the cohort", path.display())));
    }
    let apath = out.join(format!("embeddings/alignment_{label}.csv"));
    let atext = std::fs::read_to_string(&apath).map_err(|e| Error::io(&apath, e))?;
    let names: Vec<String> = conventional_features(&[]).into_iter().map(|f| f.0).collect();
    let mut r = csv::Reader::from_reader(atext.as_bytes());
    let matched = r
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Data(format!("alignment csv: {e}")))?;
            names
                .iter()
                .position(|n| n == &rec[3])
                .ok_or_else(|| Error::Data(format!("alignment csv: unknown measure `{}`", &rec[3])))
        })
        .collect::<Result<Vec<_>>>()?;
    if matched.len() != emb.dim() {
        return Err(Error::Data("alignment and embedding dimensions differ".into()));
    }
    Ok((
        GroupEmbedding {
            names: (1..=emb.dim()).map(|k| format!("P{k}")).collect(),
            values: emb.standardized(),
        },
        matched,
    ))
}

/// Runs the enabled analyses for every group.
pub fn cmd_regress(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let mut m = Manifest::read_or_default(out)?;
    stage(&mut m, out, "regress", |m| regress_into(cfg, out, m))?;
    Ok(m)
}

fn regress_into(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    for a in Analysis::ALL {
        let status = if cfg.analyses.contains(&a) {
            "pending"
        } else {
            "disabled"
        };
        m.set_status(format!("analysis:{}", a.name()), status);
    }
    if cfg.analyses.is_empty() {
        return Ok(());
    }
    let subjects = read_subjects(out)?;
    let needs_emb = cfg.analyses.iter().any(|a| a.needs_embedding());
    let mut per_group: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (label, g) in groups(cfg) {
        let sub = select(&subjects, g);
        log::info!("analyses for group {label}: {} subjects", sub.len());
        let emb = if needs_emb {
            Some(read_group_embedding(out, label, &sub)?)
        } else {
            None
        };
        let (files, done) = run_group(cfg, label, &sub, emb.as_ref().map(|(e, k)| (e, k.as_slice())))?;
        for (rel, text) in files {
            m.emit(out, &rel, text.as_bytes())?;
        }
        for (a, s) in done {
            per_group.entry(a.name()).or_default().push(format!("{label}: {s}"));
        }
    }
    for (name, list) in per_group {
        let all_ok = list.iter().all(|s| s.ends_with(": ok"));
        m.set_status(
            format!("analysis:{name}"),
            if all_ok { "ok".to_string() } else { list.join("; ") },
        );
    }
    Ok(())
}

/// synth → train → encode → regress in one directory.
pub fn cmd_replicate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let mut m = Manifest::default();
    stage(&mut m, out, "synth", |m| synth_into(cfg, out, m))?;
    let needs_model = cfg.analyses.iter().any(|a| a.needs_embedding()) || !cfg.sweep_dims.is_empty();
    if needs_model {
        stage(&mut m, out, "train", |m| train_into(cfg, out, m))?;
        stage(&mut m, out, "encode", |m| encode_into(cfg, out, m))?;
    } else {
        m.set_status("stage:train", "disabled");
        m.set_status("stage:encode", "disabled");
    }
    stage(&mut m, out, "regress", |m| regress_into(cfg, out, m))?;
    Ok(m)
}

/// One line per manifest status entry, for terminal output.
pub fn status_report(m: &Manifest) -> String {
    let mut s = String::new();
    for (k, v) in &m.status {
        let _ = writeln!(s, "{k}: {v}");
    }
    let _ = writeln!(s, "{} files", m.files.len());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::read_regression_table;

    fn tiny(seed: u64) -> RunConfig {
        let mut c = RunConfig::new(seed);
        c.n = 10;
        c.dgp.template_rings = 8;
        c.dgp.template_segments = 8;
        c
    }

    #[test]
    fn synth_counts_and_summary_mean() {
        let dir = tempfile::tempdir().unwrap();
        let m = cmd_synth(&tiny(1), dir.path()).unwrap();
        let offs = m.files.keys().filter(|k| k.ends_with(".off")).count();
        assert_eq!(offs, 10);
        assert!(m.files.contains_key(COHORT_CSV) && m.files.contains_key(SUMMARY));
        let subjects = read_subjects(dir.path()).unwrap();
        let mean = subjects.iter().map(|s| s.measures.height).sum::<f64>() / 10.0;
        let text = std::fs::read_to_string(dir.path().join(SUMMARY)).unwrap();
        let row = text.lines().find(|l| l.starts_with("all,Height,")).unwrap();
        let reported: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((reported - mean).abs() < 1e-9);
    }

    #[test]
    fn synth_is_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert_eq!(
            cmd_synth(&tiny(2), a.path()).unwrap(),
            cmd_synth(&tiny(2), b.path()).unwrap()
        );
    }

    #[test]
    fn empty_analysis_set_gives_valid_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(3);
        c.analyses.clear();
        cmd_synth(&c, dir.path()).unwrap();
        let m = cmd_regress(&c, dir.path()).unwrap();
        assert!(m.files.keys().all(|k| !k.starts_with("tables/")));
        assert_eq!(m.status["analysis:lasso"], "disabled");
        assert_eq!(Manifest::read_or_default(dir.path()).unwrap(), m);
    }

    #[test]
    fn regress_without_embeddings_fails_with_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(4);
        c.n = 120;
        c.bootstrap = 100;
        c.analyses = [Analysis::ReportingErrors, Analysis::Proxy].into_iter().collect();
        cmd_synth(&c, dir.path()).unwrap();
        let err = cmd_regress(&c, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Stage { .. }));
        assert_eq!(err.exit_code(), 3);
        let m = Manifest::read_or_default(dir.path()).unwrap();
        assert!(m.status["stage:regress"].starts_with("failed"));
    }

    #[test]
    fn reporting_tables_parse() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(5);
        c.n = 200;
        c.bootstrap = 100;
        c.analyses = [Analysis::ReportingErrors].into_iter().collect();
        cmd_synth(&c, dir.path()).unwrap();
        let m = cmd_regress(&c, dir.path()).unwrap();
        assert_eq!(m.status["analysis:reporting_errors"], "ok");
        let text = std::fs::read_to_string(dir.path().join("tables/reporting_error_weight_female.csv")).unwrap();
        let rows = read_regression_table(&text).unwrap();
        assert!(rows.iter().any(|r| r.variable == WEIGHT));
        assert!(m.verify(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn train_needs_cohort() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_train(&tiny(6), dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
