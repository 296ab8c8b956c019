use super::{derive_measures, mesh_from_latents, BodyMeasures, DgpConfig, LatentBody, TemplateSpec};
use crate::error::{Error, Result};
use crate::kv::{parse_value, KvFile};
use crate::mesh::RegisteredMesh;
use crate::rng::{self, StreamRng};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::path::Path;

pub const RACE_LABELS: [&str; 4] = ["White", "Hispanic", "Black", "Asian"];
pub const OCCUPATION_LABELS: [&str; 4] = ["White Collar", "Management", "Blue Collar", "Service"];
pub const MARITAL_LABELS: [&str; 3] = ["Single", "Married", "Div./Wid."];
pub const BIRTH_REGION_LABELS: [&str; 5] = ["Midwest", "Northeast", "South", "West", "Foreign"];

const RACE_P: [f64; 4] = [0.83, 0.02, 0.09, 0.06];
const OCCUPATION_P: [f64; 4] = [0.60, 0.18, 0.13, 0.09];
const MARITAL_P: [f64; 3] = [0.31, 0.61, 0.08];
const BIRTH_REGION_P: [f64; 5] = [0.36, 0.14, 0.14, 0.16, 0.20];
const EDUCATION: [(f64, f64); 6] = [
    (12.0, 0.15),
    (14.0, 0.15),
    (16.0, 0.35),
    (18.0, 0.20),
    (20.0, 0.10),
    (24.0, 0.05),
];
const FITNESS: [(f64, f64); 8] = [
    (0.5, 0.10),
    (1.0, 0.12),
    (2.0, 0.18),
    (2.5, 0.15),
    (4.0, 0.15),
    (5.0, 0.10),
    (7.0, 0.10),
    (10.0, 0.10),
];
const CHILDREN_P: [f64; 7] = [0.35, 0.20, 0.25, 0.12, 0.05, 0.02, 0.01];

/// Upper bounds (dollars) of the first nine income classes; the tenth is open.
const INCOME_CLASS_BOUNDS: [f64; 9] = [
    10_000.0, 20_000.0, 30_000.0, 40_000.0, 50_000.0, 60_000.0, 75_000.0, 100_000.0, 125_000.0,
];
const INCOME_CLASS_MIDPOINTS: [f64; 10] = [
    7_500.0, 15_000.0, 25_000.0, 35_000.0, 45_000.0, 55_000.0, 67_500.0, 87_500.0, 112_500.0, 150_000.0,
];

/// Garment sizes per mm of their anatomical anchor.
const SHOE_PER_MM: f64 = 0.1;
const JACKET_PER_MM: f64 = 0.04;
const PANTS_PER_MM: f64 = 1.0 / 25.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Male,
    Female,
}

impl Group {
    pub fn code(self) -> u8 {
        match self {
            Group::Male => 0,
            Group::Female => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Group::Male),
            1 => Ok(Group::Female),
            _ => Err(Error::Data(format!("unknown group code {c}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::Male => "male",
            Group::Female => "female",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: usize,
    pub group: Group,
    pub latent: LatentBody,
    pub measures: BodyMeasures,
    pub reported_height: f64,
    pub reported_weight: f64,
    pub log_income: f64,
    pub education: f64,
    pub experience: f64,
    pub age: f64,
    pub fitness: f64,
    pub race: u8,
    pub occupation: u8,
    pub marital: u8,
    pub birth_region: u8,
    pub n_children: u32,
    pub shoe_size: f64,
    pub pants_size: f64,
    pub jacket_size: f64,
    /// Hidden confounder; retained for oracle checks only.
    pub ability: f64,
}

impl SubjectRecord {
    pub fn bmi(&self) -> f64 {
        self.measures.bmi()
    }

    pub fn reported_bmi(&self) -> f64 {
        self.reported_weight / (self.reported_height / 1000.0).powi(2)
    }

    pub fn height_error(&self) -> f64 {
        self.reported_height - self.measures.height
    }

    pub fn weight_error(&self) -> f64 {
        self.reported_weight - self.measures.weight
    }

    pub fn income(&self) -> f64 {
        self.log_income.exp()
    }
}

pub const COHORT_COLUMNS: [&str; 30] = [
    "id",
    "group",
    "stature",
    "obesity",
    "hip_waist",
    "ability",
    "height",
    "weight",
    "chest_circ",
    "waist_circ",
    "hip_circ",
    "neck_circ",
    "foot_length",
    "arm_length",
    "shoulder_breadth",
    "reported_height",
    "reported_weight",
    "log_income",
    "education",
    "experience",
    "age",
    "fitness",
    "race",
    "occupation",
    "marital",
    "birth_region",
    "n_children",
    "shoe_size",
    "pants_size",
    "jacket_size",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub subjects: Vec<SubjectRecord>,
    /// Per-subject vertex positions (mm); empty when meshes were not kept.
    pub vertices: Vec<Vec<[f64; 3]>>,
    /// Face list shared by every mesh in the cohort.
    pub faces: Vec<[usize; 3]>,
    pub template: TemplateSpec,
    pub config: DgpConfig,
    pub seed: u64,
}

fn draw_index(rng: &mut StreamRng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn draw_weighted(rng: &mut StreamRng, table: &[(f64, f64)]) -> f64 {
    let probs: Vec<f64> = table.iter().map(|t| t.1).collect();
    table[draw_index(rng, &probs)].0
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Population mean of weekly exercise hours in the generator.
pub fn mean_fitness() -> f64 {
    FITNESS.iter().map(|(v, p)| v * p).sum()
}

/// Midpoint (dollars) of the income class containing `income`.
pub fn income_class_midpoint(income: f64) -> f64 {
    let class = INCOME_CLASS_BOUNDS
        .iter()
        .position(|&b| income < b)
        .unwrap_or(INCOME_CLASS_BOUNDS.len());
    INCOME_CLASS_MIDPOINTS[class]
}

/// Reported height (mm) and weight (kg) given the true measures.
///
/// `reported_height = height + c₀ + c_inc·log_income + c_age²·age² + η_H` and
/// `reported_weight = weight + d₀ + d_w·weight + d_fit·fitness + η_W`.
pub fn apply_reporting_errors(subject: &SubjectRecord, config: &DgpConfig, rng: &mut impl Rng) -> (f64, f64) {
    let eta_h: f64 = StandardNormal.sample(rng);
    let eta_w: f64 = StandardNormal.sample(rng);
    let m = &subject.measures;
    let h = m.height
        + config.rep_h_intercept
        + config.rep_h_income * subject.log_income
        + config.rep_h_age_sq * subject.age * subject.age
        + config.rep_h_sd * eta_h;
    let w = m.weight
        + config.rep_w_intercept
        + config.rep_w_weight * m.weight
        + config.rep_w_fitness * subject.fitness
        + config.rep_w_sd * eta_w;
    (h, w)
}

fn sample_subject(
    id: usize,
    config: &DgpConfig,
    template: &TemplateSpec,
    seed: u64,
) -> Result<(SubjectRecord, Vec<[f64; 3]>)> {
    let mut rng = rng::stream(seed, "subject", id as u64);
    let group = if rng.random::<f64>() < config.female_fraction {
        super::Group::Female
    } else {
        super::Group::Male
    };
    let ability = normal(&mut rng);
    let z_s = normal(&mut rng);
    let zeta_shoe = config.pref_sd_shoe * normal(&mut rng);
    let zeta_jacket = config.pref_sd_jacket * normal(&mut rng);
    let zeta_pants = config.pref_sd_pants * normal(&mut rng);
    let obesity = normal(&mut rng);
    let hip_waist = config.hip_waist_sd(group) * normal(&mut rng);
    let stature = config.stature_mean
        + config.kappa(group) * ability
        + config.gamma_shoe * zeta_shoe
        + config.gamma_jacket * zeta_jacket
        + config.gamma_pants * zeta_pants
        + config.residual_stature_sd(group) * z_s;
    let latent = LatentBody::new(stature, obesity, hip_waist);

    let mesh_seed: u64 = rng.random();
    let mesh = mesh_from_latents(&latent, template, config.mesh_noise_sd, mesh_seed)?;
    let measures = derive_measures(&mesh, template, config.density)?;

    let age = rng.random_range(20..=60) as f64;
    let education = draw_weighted(&mut rng, &EDUCATION);
    let experience = (age - education - 6.0).max(0.0);
    let fitness = draw_weighted(&mut rng, &FITNESS);
    let n_children = draw_index(&mut rng, &CHILDREN_P) as u32;
    let race = draw_index(&mut rng, &RACE_P) as u8;
    let occupation = draw_index(&mut rng, &OCCUPATION_P) as u8;
    let marital = draw_index(&mut rng, &MARITAL_P) as u8;
    let birth_region = draw_index(&mut rng, &BIRTH_REGION_P) as u8;

    let eps = normal(&mut rng);
    let mut log_income = config.alpha_intercept
        + config.alpha_education * education
        + config.alpha_experience * experience
        + config.alpha_experience_sq * experience * experience
        + config.alpha_children * n_children as f64
        + config.alpha_married * f64::from(u8::from(marital == 1))
        + config.alpha_management * f64::from(u8::from(occupation == 1))
        + config.beta_stature * stature
        + config.beta_obesity * obesity
        + config.beta_hip_waist * hip_waist
        + config.lambda_a * ability
        + config.income_sd * eps;
    if config.income_classes {
        log_income = income_class_midpoint(log_income.exp()).ln();
    }

    let mut subject = SubjectRecord {
        id,
        group,
        latent,
        measures,
        reported_height: 0.0,
        reported_weight: 0.0,
        log_income,
        education,
        experience,
        age,
        fitness,
        race,
        occupation,
        marital,
        birth_region,
        n_children,
        shoe_size: SHOE_PER_MM * measures.foot_length + zeta_shoe,
        pants_size: PANTS_PER_MM * measures.waist_circ + zeta_pants,
        jacket_size: JACKET_PER_MM * measures.chest_circ + zeta_jacket,
        ability,
    };
    let (rh, rw) = apply_reporting_errors(&subject, config, &mut rng);
    subject.reported_height = rh;
    subject.reported_weight = rw;
    Ok((subject, mesh.vertices))
}

/// Draws `n` subjects; subject `i` uses its own stream keyed by `(seed, i)`.
pub fn sample_cohort(n: usize, config: &DgpConfig, seed: u64) -> Result<Cohort> {
    sample_cohort_with(n, config, seed, true)
}

/// As [`sample_cohort`]; with `keep_meshes = false` the vertex arrays are
/// dropped after the measures are derived.
pub fn sample_cohort_with(n: usize, config: &DgpConfig, seed: u64, keep_meshes: bool) -> Result<Cohort> {
    if n == 0 {
        return Err(Error::Data("empty cohort".into()));
    }
    config.validate()?;
    let template = config.template();
    let drawn: Vec<(SubjectRecord, Vec<[f64; 3]>)> = (0..n)
        .into_par_iter()
        .map(|i| sample_subject(i, config, &template, seed))
        .collect::<Result<_>>()?;
    let (subjects, vertices): (Vec<_>, Vec<_>) = drawn.into_iter().unzip();
    Ok(Cohort {
        subjects,
        vertices: if keep_meshes { vertices } else { Vec::new() },
        faces: template.faces(),
        template,
        config: config.clone(),
        seed,
    })
}

fn fmt_row(s: &SubjectRecord) -> Vec<String> {
    let m = &s.measures;
    let f = |v: f64| v.to_string();
    vec![
        s.id.to_string(),
        s.group.code().to_string(),
        f(s.latent.stature),
        f(s.latent.obesity),
        f(s.latent.hip_waist),
        f(s.ability),
        f(m.height),
        f(m.weight),
        f(m.chest_circ),
        f(m.waist_circ),
        f(m.hip_circ),
        f(m.neck_circ),
        f(m.foot_length),
        f(m.arm_length),
        f(m.shoulder_breadth),
        f(s.reported_height),
        f(s.reported_weight),
        f(s.log_income),
        f(s.education),
        f(s.experience),
        f(s.age),
        f(s.fitness),
        s.race.to_string(),
        s.occupation.to_string(),
        s.marital.to_string(),
        s.birth_region.to_string(),
        s.n_children.to_string(),
        f(s.shoe_size),
        f(s.pants_size),
        f(s.jacket_size),
    ]
}

fn parse_row(rec: &csv::StringRecord) -> Result<SubjectRecord> {
    if rec.len() != COHORT_COLUMNS.len() {
        return Err(Error::Data(format!(
            "cohort row has {} fields, expected {}",
            rec.len(),
            COHORT_COLUMNS.len()
        )));
    }
    let num = |i: usize| -> Result<f64> {
        rec[i]
            .parse::<f64>()
            .map_err(|_| Error::Data(format!("column `{}`: bad number `{}`", COHORT_COLUMNS[i], &rec[i])))
    };
    let int = |i: usize| -> Result<u64> {
        rec[i]
            .parse::<u64>()
            .map_err(|_| Error::Data(format!("column `{}`: bad integer `{}`", COHORT_COLUMNS[i], &rec[i])))
    };
    let measures = BodyMeasures::from_array([
        num(6)?,
        num(7)?,
        num(8)?,
        num(9)?,
        num(10)?,
        num(11)?,
        num(12)?,
        num(13)?,
        num(14)?,
    ]);
    Ok(SubjectRecord {
        id: int(0)? as usize,
        group: Group::from_code(int(1)? as u8)?,
        latent: LatentBody::new(num(2)?, num(3)?, num(4)?),
        ability: num(5)?,
        measures,
        reported_height: num(15)?,
        reported_weight: num(16)?,
        log_income: num(17)?,
        education: num(18)?,
        experience: num(19)?,
        age: num(20)?,
        fitness: num(21)?,
        race: int(22)? as u8,
        occupation: int(23)? as u8,
        marital: int(24)? as u8,
        birth_region: int(25)? as u8,
        n_children: int(26)? as u32,
        shoe_size: num(27)?,
        pants_size: num(28)?,
        jacket_size: num(29)?,
    })
}

pub const COHORT_CSV: &str = "cohort.csv";
pub const COHORT_META: &str = "cohort_config.txt";
pub const MESH_DIR: &str = "meshes";

impl Cohort {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn has_meshes(&self) -> bool {
        self.vertices.len() == self.subjects.len()
    }

    pub fn mesh(&self, i: usize) -> Option<RegisteredMesh> {
        self.vertices.get(i).map(|v| RegisteredMesh {
            vertices: v.clone(),
            faces: self.faces.clone(),
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COHORT_COLUMNS).expect("in-memory write");
        for s in &self.subjects {
            w.write_record(fmt_row(s)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn subjects_from_csv(text: &str) -> Result<Vec<SubjectRecord>> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| Error::Data(format!("cohort csv: {e}")))?;
        if headers.iter().ne(COHORT_COLUMNS.iter().copied()) {
            return Err(Error::Data("cohort csv: unexpected header".into()));
        }
        r.records()
            .map(|rec| {
                let rec = rec.map_err(|e| Error::Data(format!("cohort csv: {e}")))?;
                parse_row(&rec)
            })
            .collect()
    }

    fn meta_kv(&self) -> String {
        format!("n={}\nseed={}\n{}", self.len(), self.seed, self.config.to_kv())
    }

    /// Writes `cohort.csv`, `cohort_config.txt` and `meshes/<id>.off`.
    /// Returns the written paths relative to `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let csv_path = dir.join(COHORT_CSV);
        std::fs::write(&csv_path, self.to_csv_string()).map_err(|e| Error::io(&csv_path, e))?;
        written.push(COHORT_CSV.to_string());
        let meta = dir.join(COHORT_META);
        std::fs::write(&meta, self.meta_kv()).map_err(|e| Error::io(&meta, e))?;
        written.push(COHORT_META.to_string());
        if self.has_meshes() {
            let mdir = dir.join(MESH_DIR);
            std::fs::create_dir_all(&mdir).map_err(|e| Error::io(&mdir, e))?;
            for (i, s) in self.subjects.iter().enumerate() {
                let name = format!("{MESH_DIR}/{}.off", s.id);
                self.mesh(i).expect("mesh present").write_off(&dir.join(&name))?;
                written.push(name);
            }
        }
        Ok(written)
    }

    /// Reads a cohort written by [`Cohort::write_dir`]. Meshes are loaded
    /// when the mesh directory exists and checked for shared topology.
    pub fn read_dir(dir: &Path) -> Result<Cohort> {
        let meta_path = dir.join(COHORT_META);
        let kv = KvFile::read(&meta_path)?;
        let mut config = DgpConfig::default();
        let mut seed = 0u64;
        for (k, v) in kv.iter() {
            match k {
                "seed" => seed = parse_value(k, v)?,
                "n" => {}
                _ => {
                    if !config.set(k, v)? {
                        return Err(Error::Config(format!("unknown key `{k}` in {}", meta_path.display())));
                    }
                }
            }
        }
        config.validate()?;
        let csv_path = dir.join(COHORT_CSV);
        let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let subjects = Self::subjects_from_csv(&text)?;
        let template = config.template();
        let faces = template.faces();
        let mdir = dir.join(MESH_DIR);
        let mut vertices = Vec::new();
        if mdir.is_dir() {
            for s in &subjects {
                let m = RegisteredMesh::read_off(&mdir.join(format!("{}.off", s.id)))?;
                if m.faces != faces {
                    return Err(Error::Data(format!(
                        "mesh {} does not match the template topology",
                        s.id
                    )));
                }
                vertices.push(m.vertices);
            }
        }
        Ok(Cohort {
            subjects,
            vertices,
            faces,
            template,
            config,
            seed,
        })
    }

    /// Subjects (and meshes) of one group, ids preserved.
    pub fn subset(&self, group: Group) -> Cohort {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.subjects[i].group == group).collect();
        Cohort {
            subjects: keep.iter().map(|&i| self.subjects[i].clone()).collect(),
            vertices: if self.has_meshes() {
                keep.iter().map(|&i| self.vertices[i].clone()).collect()
            } else {
                Vec::new()
            },
            faces: self.faces.clone(),
            template: self.template,
            config: self.config.clone(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn small() -> DgpConfig {
        DgpConfig {
            template_rings: 8,
            template_segments: 8,
            ..DgpConfig::default()
        }
    }

    #[test]
    fn empty_cohort_is_rejected() {
        let err = sample_cohort(0, &DgpConfig::default(), 1).unwrap_err().to_string();
        assert!(err.contains("empty cohort"));
    }

    #[test]
    fn non_finite_config_is_rejected() {
        let mut c = small();
        c.beta_stature = f64::INFINITY;
        assert!(sample_cohort(3, &c, 1).is_err());
    }

    #[test]
    fn shared_topology_and_experience_rule() {
        let c = sample_cohort(20, &DgpConfig::default(), 3).unwrap();
        assert_eq!(c.len(), 20);
        let m0 = c.mesh(0).unwrap();
        for i in 1..c.len() {
            assert!(m0.same_topology(&c.mesh(i).unwrap()));
        }
        for s in &c.subjects {
            assert_eq!(s.experience, (s.age - s.education - 6.0).max(0.0));
            assert!(s.reported_height.is_finite() && s.reported_weight.is_finite());
            assert!(s.bmi() > 0.0);
        }
    }

    #[test]
    fn regeneration_is_bit_exact() {
        let a = sample_cohort(15, &small(), 42).unwrap();
        let b = sample_cohort(15, &small(), 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let c = sample_cohort(15, &small(), 43).unwrap();
        assert_ne!(a.to_csv_string(), c.to_csv_string());
    }

    #[test]
    fn subject_streams_do_not_depend_on_cohort_size() {
        let a = sample_cohort(5, &small(), 9).unwrap();
        let b = sample_cohort(12, &small(), 9).unwrap();
        assert_eq!(a.subjects[..], b.subjects[..5]);
    }

    #[test]
    fn csv_round_trip() {
        let a = sample_cohort(10, &small(), 5).unwrap();
        let back = Cohort::subjects_from_csv(&a.to_csv_string()).unwrap();
        assert_eq!(back, a.subjects);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = sample_cohort(6, &small(), 5).unwrap();
        let files = a.write_dir(dir.path()).unwrap();
        assert_eq!(files.len(), 2 + 6);
        let b = Cohort::read_dir(dir.path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn latent_means_are_centred() {
        let n = 4000;
        let c = sample_cohort_with(n, &small().with_endogeneity(0.0, 1.0), 11, false).unwrap();
        let tol = 5.0 / (n as f64).sqrt();
        for k in 0..2 {
            let mean = c.subjects.iter().map(|s| s.latent.as_array()[k]).sum::<f64>() / n as f64;
            assert!(mean.abs() < tol, "factor {k}: {mean}");
        }
    }

    #[test]
    fn independence_when_kappa_is_zero() {
        let n = 4000;
        let mut cfg = small().with_endogeneity(0.0, 1.0);
        cfg.lambda_a = 1.0;
        let c = sample_cohort_with(n, &cfg, 12, false).unwrap();
        let s: Vec<f64> = c.subjects.iter().map(|s| s.latent.stature).collect();
        let a: Vec<f64> = c.subjects.iter().map(|s| s.ability).collect();
        assert!(corr(&s, &a).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn stature_ability_correlation_matches_loading() {
        let n = 20_000;
        let c = sample_cohort_with(n, &small().with_endogeneity(0.8, 0.6), 13, false).unwrap();
        let s: Vec<f64> = c.subjects.iter().map(|s| s.latent.stature).collect();
        let a: Vec<f64> = c.subjects.iter().map(|s| s.ability).collect();
        let expected = 0.8 / (0.8f64 * 0.8 + 0.6 * 0.6).sqrt();
        assert!((corr(&s, &a) - expected).abs() < 0.02);
    }

    fn subject_with(weight: f64) -> SubjectRecord {
        let c = sample_cohort(1, &small(), 1).unwrap();
        let mut s = c.subjects[0].clone();
        s.measures.weight = weight;
        s
    }

    #[test]
    fn zero_error_coefficients_report_truth() {
        let s = subject_with(77.0);
        let mut cfg = small();
        for k in [
            "rep_h_intercept",
            "rep_h_income",
            "rep_h_age_sq",
            "rep_h_sd",
            "rep_w_intercept",
            "rep_w_weight",
            "rep_w_fitness",
            "rep_w_sd",
        ] {
            cfg.set(k, "0").unwrap();
        }
        let mut rng = rng::stream(1, "t", 0);
        let (h, w) = apply_reporting_errors(&s, &cfg, &mut rng);
        assert_eq!(h, s.measures.height);
        assert_eq!(w, s.measures.weight);
    }

    #[test]
    fn weight_error_arithmetic() {
        let s = subject_with(100.0);
        let mut cfg = small();
        cfg.rep_w_intercept = 4.0;
        cfg.rep_w_weight = -0.05;
        cfg.rep_w_fitness = 0.0;
        cfg.rep_w_sd = 0.0;
        let mut rng = rng::stream(1, "t", 0);
        let (_, w) = apply_reporting_errors(&s, &cfg, &mut rng);
        assert_eq!(w, 99.0);
    }

    #[test]
    fn weight_error_slope_is_recovered() {
        let n = 20_000;
        let mut cfg = small();
        cfg.rep_w_weight = -0.05;
        let c = sample_cohort_with(n, &cfg, 21, false).unwrap();
        let x: Vec<f64> = c.subjects.iter().map(|s| s.measures.weight).collect();
        let y: Vec<f64> = c.subjects.iter().map(|s| s.weight_error()).collect();
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        assert!((sxy / sxx + 0.05).abs() < 0.01);
    }

    #[test]
    fn income_classes() {
        assert_eq!(income_class_midpoint(5_000.0), 7_500.0);
        assert_eq!(income_class_midpoint(52_000.0), 55_000.0);
        assert_eq!(income_class_midpoint(1e7), 150_000.0);
        let mut cfg = small();
        cfg.income_classes = true;
        let c = sample_cohort_with(50, &cfg, 2, false).unwrap();
        for s in &c.subjects {
            let dollars = s.income().round();
            assert!(INCOME_CLASS_MIDPOINTS.iter().any(|m| (m - dollars).abs() < 1e-6));
        }
    }

    #[test]
    fn fitness_mean_matches_table() {
        assert!((mean_fitness() - 3.705).abs() < 1e-12);
    }
}
