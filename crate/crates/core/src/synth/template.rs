//! Generalized-cylinder body template: `rings × segments` side vertices plus
//! a bottom and a top cap apex.
//!
//! Vertex layout: index 0 is the bottom apex, ring `k` segment `j` sits at
//! `1 + k·segments + j`, and the top apex is last. Ring 0 is at the feet.

use super::LatentBody;
use crate::error::{Error, Result};
use crate::mesh::{polygon_perimeter, RegisteredMesh};
use crate::rng::StreamRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Landmark positions as a fraction of body height.
const HIP_T: f64 = 0.50;
const WAIST_T: f64 = 0.60;
const CHEST_T: f64 = 0.72;
const SHOULDER_T: f64 = 0.80;
const NECK_T: f64 = 0.87;
/// Width of the hip-to-waist lobes in relative height.
const BUMP_WIDTH: f64 = 0.06;

/// Base body radius (mm) control points over normalised height.
const BODY_PROFILE: [(f64, f64); 11] = [
    (0.00, 45.0),
    (0.10, 55.0),
    (0.25, 75.0),
    (0.40, 120.0),
    (0.50, 165.0),
    (0.60, 135.0),
    (0.72, 160.0),
    (0.80, 150.0),
    (0.87, 60.0),
    (0.93, 90.0),
    (1.00, 40.0),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// Smooth human-like radius profile.
    Body,
    /// Constant radius in mm; used for analytic volume checks.
    Cylinder { radius_mm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateSpec {
    pub rings: usize,
    pub segments: usize,
    /// Baseline height H₀ in mm.
    pub height_mm: f64,
    /// Stature scale: heights scale by `exp(c_stature·s)`.
    pub c_stature: f64,
    /// Obesity scale: radii scale by `exp(c_obesity·o)`.
    pub c_obesity: f64,
    /// Hip-to-waist scale applied through the bump profile.
    pub c_hip_waist: f64,
    pub profile: Profile,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        TemplateSpec {
            rings: 24,
            segments: 32,
            height_mm: 1750.0,
            c_stature: 0.05,
            c_obesity: 0.08,
            c_hip_waist: 0.04,
            profile: Profile::Body,
        }
    }
}

/// Ring indices at which the named body measures are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Landmarks {
    pub foot: usize,
    pub hip: usize,
    pub waist: usize,
    pub chest: usize,
    pub shoulder: usize,
    pub neck: usize,
}

impl TemplateSpec {
    pub fn with_size(rings: usize, segments: usize) -> Self {
        TemplateSpec {
            rings,
            segments,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rings < 8 || self.segments < 8 {
            return Err(Error::Config(format!(
                "template needs at least 8 rings and 8 segments, got {}×{}",
                self.rings, self.segments
            )));
        }
        let vals = [self.height_mm, self.c_stature, self.c_obesity, self.c_hip_waist];
        if vals.iter().any(|v| !v.is_finite()) || self.height_mm <= 0.0 {
            return Err(Error::Config("template constants must be finite, height > 0".into()));
        }
        if let Profile::Cylinder { radius_mm } = self.profile {
            if !(radius_mm > 0.0 && radius_mm.is_finite()) {
                return Err(Error::Config("cylinder radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.rings * self.segments + 2
    }

    pub fn ring_vertex(&self, ring: usize, segment: usize) -> usize {
        1 + ring * self.segments + segment % self.segments
    }

    pub fn ring_indices(&self, ring: usize) -> Vec<usize> {
        (0..self.segments).map(|j| self.ring_vertex(ring, j)).collect()
    }

    pub fn top_apex(&self) -> usize {
        self.rings * self.segments + 1
    }

    fn ring_t(&self, ring: usize) -> f64 {
        ring as f64 / (self.rings - 1) as f64
    }

    /// Landmark rings: nearest ring to each landmark height, nudged upward so
    /// that hip < waist < chest < shoulder < neck are distinct.
    pub fn landmarks(&self) -> Landmarks {
        let top = self.rings - 1;
        let mut prev = 0usize;
        let mut left = 5usize;
        let mut place = |t: f64| {
            left -= 1;
            let ideal = (t * top as f64).round() as usize;
            let k = ideal.max(prev + 1).min(top - left);
            prev = k;
            k
        };
        let hip = place(HIP_T);
        let waist = place(WAIST_T);
        let chest = place(CHEST_T);
        let shoulder = place(SHOULDER_T);
        let neck = place(NECK_T);
        Landmarks {
            foot: 0,
            hip,
            waist,
            chest,
            shoulder,
            neck,
        }
    }

    pub fn base_radius(&self, ring: usize) -> f64 {
        match self.profile {
            Profile::Cylinder { radius_mm } => radius_mm,
            Profile::Body => body_profile(self.ring_t(ring)),
        }
    }

    /// Hip-to-waist bump: broad positive lobe over the hips, negative lobe
    /// at the waist, weaker positive lobe at the chest, in relative height.
    pub fn bump(&self, ring: usize) -> f64 {
        if let Profile::Cylinder { .. } = self.profile {
            return 0.0;
        }
        let t = self.ring_t(ring);
        let g = |center: f64| {
            let u = (t - center) / BUMP_WIDTH;
            (-u * u).exp()
        };
        1.5 * g(HIP_T - 0.02) - 1.5 * g(WAIST_T) + 0.75 * g(CHEST_T)
    }

    pub fn faces(&self) -> Vec<[usize; 3]> {
        let (r, s) = (self.rings, self.segments);
        let mut faces = Vec::with_capacity(2 * r * s);
        for j in 0..s {
            faces.push([0, self.ring_vertex(0, j + 1), self.ring_vertex(0, j)]);
        }
        for k in 0..r - 1 {
            for j in 0..s {
                let a = self.ring_vertex(k, j);
                let b = self.ring_vertex(k, j + 1);
                let c = self.ring_vertex(k + 1, j + 1);
                let d = self.ring_vertex(k + 1, j);
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        let top = self.top_apex();
        for j in 0..s {
            faces.push([top, self.ring_vertex(r - 1, j), self.ring_vertex(r - 1, j + 1)]);
        }
        faces
    }

    /// Noise-free vertex positions for the given latents.
    pub fn vertices(&self, latents: &LatentBody) -> Vec<[f64; 3]> {
        let height = self.height_mm * (self.c_stature * latents.stature).exp();
        let girth = (self.c_obesity * latents.obesity).exp();
        let mut v = Vec::with_capacity(self.vertex_count());
        v.push([0.0, 0.0, 0.0]);
        for k in 0..self.rings {
            let z = self.ring_t(k) * height;
            let radius = self.base_radius(k) * girth * (1.0 + self.c_hip_waist * latents.hip_waist * self.bump(k));
            for j in 0..self.segments {
                let theta = 2.0 * PI * j as f64 / self.segments as f64;
                v.push([radius * theta.cos(), radius * theta.sin(), z]);
            }
        }
        v.push([0.0, 0.0, height]);
        v
    }
}

/// Cosine-blended interpolation through [`BODY_PROFILE`].
fn body_profile(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    let i = BODY_PROFILE
        .windows(2)
        .position(|w| t <= w[1].0)
        .unwrap_or(BODY_PROFILE.len() - 2);
    let (t0, r0) = BODY_PROFILE[i];
    let (t1, r1) = BODY_PROFILE[i + 1];
    let u = (t - t0) / (t1 - t0);
    r0 + (r1 - r0) * 0.5 * (1.0 - (PI * u).cos())
}

/// Registered body mesh for `latents`, with i.i.d. Gaussian vertex noise.
pub fn mesh_from_latents(
    latents: &LatentBody,
    template: &TemplateSpec,
    noise_sd: f64,
    seed: u64,
) -> Result<RegisteredMesh> {
    template.validate()?;
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::Config(format!("mesh noise SD must be ≥ 0, got {noise_sd}")));
    }
    if !latents.is_finite() {
        return Err(Error::Data("non-finite latent factors".into()));
    }
    let mut vertices = template.vertices(latents);
    if noise_sd > 0.0 {
        let mut rng = StreamRng::seed_from_u64(seed);
        for v in &mut vertices {
            for c in v.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *c += noise_sd * e;
            }
        }
    }
    RegisteredMesh::new(vertices, template.faces())
}

pub(crate) fn ring_perimeter(mesh: &RegisteredMesh, template: &TemplateSpec, ring: usize) -> f64 {
    polygon_perimeter(&mesh.vertices, &template.ring_indices(ring))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero() -> LatentBody {
        LatentBody::new(0.0, 0.0, 0.0)
    }

    #[test]
    fn default_template_has_770_vertices() {
        let t = TemplateSpec::default();
        assert_eq!(t.vertex_count(), 770);
        let m = mesh_from_latents(&zero(), &t, 0.0, 1).unwrap();
        assert_eq!(m.vertex_count(), 770);
        assert!(m.is_closed());
        assert!(m.volume().unwrap() > 0.0);
    }

    #[test]
    fn landmarks_are_ordered_for_small_and_default_templates() {
        for rings in [8, 9, 12, 24, 40] {
            let lm = TemplateSpec::with_size(rings, 8).landmarks();
            assert!(lm.foot < lm.hip);
            assert!(lm.hip < lm.waist && lm.waist < lm.chest);
            assert!(lm.chest < lm.shoulder && lm.shoulder < lm.neck);
            assert!(lm.neck < rings, "rings={rings} {lm:?}");
        }
    }

    #[test]
    fn bump_sign_pattern() {
        let t = TemplateSpec::default();
        let lm = t.landmarks();
        assert!(t.bump(lm.hip) > 0.5);
        assert!(t.bump(lm.waist) < -0.5);
        assert!(t.bump(lm.foot).abs() < 1e-6);
    }

    #[test]
    fn zero_latents_without_noise_is_the_baseline() {
        let t = TemplateSpec::default();
        let a = mesh_from_latents(&zero(), &t, 0.0, 1).unwrap();
        let b = mesh_from_latents(&zero(), &t, 0.0, 99).unwrap();
        assert_eq!(a.vertices, t.vertices(&zero()));
        assert_eq!(a, b);
    }

    #[test]
    fn stature_scales_height_exactly() {
        let t = TemplateSpec::default();
        let base = mesh_from_latents(&zero(), &t, 0.0, 0).unwrap();
        let tall = mesh_from_latents(&LatentBody::new(1.0, 0.0, 0.0), &t, 0.0, 0).unwrap();
        let h = |m: &RegisteredMesh| m.vertices[t.top_apex()][2] - m.vertices[0][2];
        assert_eq!(h(&tall) / h(&base), (t.c_stature).exp());
    }

    #[test]
    fn obesity_scales_every_ring_circumference() {
        let t = TemplateSpec::default();
        let base = mesh_from_latents(&zero(), &t, 0.0, 0).unwrap();
        let wide = mesh_from_latents(&LatentBody::new(0.0, 1.0, 0.0), &t, 0.0, 0).unwrap();
        let factor = t.c_obesity.exp();
        for k in 0..t.rings {
            // independent recomputation straight from the vertex coordinates
            let circ = |m: &RegisteredMesh| {
                let idx = t.ring_indices(k);
                let mut p = 0.0;
                for i in 0..idx.len() {
                    let a = m.vertices[idx[i]];
                    let b = m.vertices[idx[(i + 1) % idx.len()]];
                    p += (a[0] - b[0]).hypot(a[1] - b[1]);
                }
                p
            };
            let rel = (circ(&wide) / circ(&base) - factor).abs() / factor;
            assert!(rel < 1e-9, "ring {k}: {rel}");
        }
    }

    #[test]
    fn noise_is_seeded() {
        let t = TemplateSpec::default();
        let a = mesh_from_latents(&zero(), &t, 2.0, 5).unwrap();
        let b = mesh_from_latents(&zero(), &t, 2.0, 5).unwrap();
        let c = mesh_from_latents(&zero(), &t, 2.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_negative_noise_and_tiny_templates() {
        let t = TemplateSpec::default();
        assert!(mesh_from_latents(&zero(), &t, -1.0, 0).is_err());
        assert!(mesh_from_latents(&zero(), &TemplateSpec::with_size(7, 32), 0.0, 0).is_err());
        assert!(mesh_from_latents(&zero(), &TemplateSpec::with_size(24, 7), 0.0, 0).is_err());
    }

    #[test]
    fn profile_is_positive_and_hits_control_points() {
        for &(t, r) in BODY_PROFILE.iter() {
            assert!((body_profile(t) - r).abs() < 1e-9);
        }
        for i in 0..=1000 {
            assert!(body_profile(i as f64 / 1000.0) > 0.0);
        }
    }
}
