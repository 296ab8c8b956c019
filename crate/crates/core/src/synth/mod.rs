//! Synthetic cohorts with known ground truth: registered body meshes driven
//! by three latent factors, anthropometrics derived from the meshes, and a
//! demographics / income / reporting-error process with engineered
//! endogeneity between stature and an unobserved ability.

mod cohort;
mod dgp;
mod template;

pub use cohort::{
    apply_reporting_errors, income_class_midpoint, mean_fitness, sample_cohort, sample_cohort_with, Cohort, Group,
    SubjectRecord, BIRTH_REGION_LABELS, COHORT_COLUMNS, COHORT_CSV, COHORT_META, MARITAL_LABELS, MESH_DIR,
    OCCUPATION_LABELS, RACE_LABELS,
};
pub use dgp::DgpConfig;
pub use template::{mesh_from_latents, Landmarks, Profile, TemplateSpec};

use crate::error::{Error, Result};
use crate::mesh::RegisteredMesh;

/// Latent body factors on a standard-normal scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentBody {
    pub stature: f64,
    pub obesity: f64,
    pub hip_waist: f64,
}

impl LatentBody {
    pub fn new(stature: f64, obesity: f64, hip_waist: f64) -> Self {
        LatentBody {
            stature,
            obesity,
            hip_waist,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.stature.is_finite() && self.obesity.is_finite() && self.hip_waist.is_finite()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.stature, self.obesity, self.hip_waist]
    }
}

/// Anthropometrics in mm, weight in kg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyMeasures {
    pub height: f64,
    pub weight: f64,
    pub chest_circ: f64,
    pub waist_circ: f64,
    pub hip_circ: f64,
    pub neck_circ: f64,
    pub foot_length: f64,
    pub arm_length: f64,
    pub shoulder_breadth: f64,
}

impl BodyMeasures {
    pub const NAMES: [&'static str; 9] = [
        "height",
        "weight",
        "chest_circ",
        "waist_circ",
        "hip_circ",
        "neck_circ",
        "foot_length",
        "arm_length",
        "shoulder_breadth",
    ];

    pub fn as_array(&self) -> [f64; 9] {
        [
            self.height,
            self.weight,
            self.chest_circ,
            self.waist_circ,
            self.hip_circ,
            self.neck_circ,
            self.foot_length,
            self.arm_length,
            self.shoulder_breadth,
        ]
    }

    pub fn from_array(a: [f64; 9]) -> Self {
        BodyMeasures {
            height: a[0],
            weight: a[1],
            chest_circ: a[2],
            waist_circ: a[3],
            hip_circ: a[4],
            neck_circ: a[5],
            foot_length: a[6],
            arm_length: a[7],
            shoulder_breadth: a[8],
        }
    }

    pub fn bmi(&self) -> f64 {
        self.weight / (self.height / 1000.0).powi(2)
    }

    pub fn hip_to_waist(&self) -> f64 {
        self.hip_circ / self.waist_circ * 100.0
    }
}

/// Body-mass index in kg/m² from weight in kg and height in mm.
pub fn bmi(weight_kg: f64, height_mm: f64) -> Result<f64> {
    if !(height_mm > 0.0) {
        return Err(Error::Data(format!("height must be positive, got {height_mm}")));
    }
    Ok(weight_kg / (height_mm / 1000.0).powi(2))
}

/// Hip circumference over waist circumference, × 100.
pub fn hip_to_waist_ratio(hip_circ: f64, waist_circ: f64) -> Result<f64> {
    if !(waist_circ > 0.0) {
        return Err(Error::Data(format!(
            "waist circumference must be positive, got {waist_circ}"
        )));
    }
    Ok(hip_circ / waist_circ * 100.0)
}

fn x_extent(mesh: &RegisteredMesh, indices: &[usize]) -> f64 {
    let (lo, hi) = indices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        let x = mesh.vertices[i][0];
        (lo.min(x), hi.max(x))
    });
    hi - lo
}

/// Anthropometrics read off a template-registered mesh.
///
/// Height is the z-extent, circumferences are ring perimeters at the
/// template landmarks, foot length and shoulder breadth are x-extents of the
/// foot and shoulder rings, and arm length is the slant distance from the
/// shoulder ring at segment 0 to the waist ring at segment 0. Weight is
/// `density × volume` with volume converted to m³.
pub fn derive_measures(mesh: &RegisteredMesh, template: &TemplateSpec, density: f64) -> Result<BodyMeasures> {
    if mesh.vertex_count() != template.vertex_count() {
        return Err(Error::Dimension {
            expected: template.vertex_count(),
            got: mesh.vertex_count(),
        });
    }
    if !(density > 0.0) {
        return Err(Error::Config("density must be positive".into()));
    }
    let volume_mm3 = mesh.volume()?;
    let (zmin, zmax) = mesh
        .vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v[2]), hi.max(v[2]))
        });
    let lm = template.landmarks();
    let perim = |ring| template::ring_perimeter(mesh, template, ring);
    let shoulder = mesh.vertices[template.ring_vertex(lm.shoulder, 0)];
    let waist = mesh.vertices[template.ring_vertex(lm.waist, 0)];
    let arm =
        ((shoulder[0] - waist[0]).powi(2) + (shoulder[1] - waist[1]).powi(2) + (shoulder[2] - waist[2]).powi(2)).sqrt();
    Ok(BodyMeasures {
        height: zmax - zmin,
        weight: density * volume_mm3 * 1e-9,
        chest_circ: perim(lm.chest),
        waist_circ: perim(lm.waist),
        hip_circ: perim(lm.hip),
        neck_circ: perim(lm.neck),
        foot_length: x_extent(mesh, &template.ring_indices(lm.foot)),
        arm_length: arm,
        shoulder_breadth: x_extent(mesh, &template.ring_indices(lm.shoulder)),
    })
}
