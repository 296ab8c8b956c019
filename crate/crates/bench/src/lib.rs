//! Fixtures shared by the criterion benches.

use bodyshape_core::autoencoder::flatten_cohort;
use bodyshape_core::econometrics::DesignMatrix;
use bodyshape_core::pipeline::{height_cm, income_controls, log_income};
use bodyshape_core::synth::sample_cohort;
use bodyshape_core::{Cohort, DgpConfig};

/// A cohort on a coarse template, so mesh sampling stays cheap.
pub fn small_cohort(n: usize, seed: u64) -> Cohort {
    let mut dgp = DgpConfig::default();
    dgp.template_rings = 12;
    dgp.template_segments = 16;
    sample_cohort(n, &dgp, seed).expect("default DGP is valid")
}

/// Log income on the income controls plus measured height.
pub fn income_design(cohort: &Cohort) -> (DesignMatrix, Vec<f64>) {
    let s = &cohort.subjects;
    let x = income_controls(s)
        .and_then(|c| {
            c.hstack(&DesignMatrix::from_columns(
                s.len(),
                vec![("Height".into(), height_cm(s, false))],
                false,
            )?)
        })
        .expect("cohort design");
    (x, log_income(s))
}

/// Flattened meshes, one row per subject.
pub fn mesh_rows(cohort: &Cohort) -> Vec<Vec<f64>> {
    flatten_cohort(cohort).expect("cohort has meshes")
}
