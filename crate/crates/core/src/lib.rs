//! Body-shape econometrics toolkit.
//!
//! The crate is organised around four pieces:
//!
//! * [`synth`]: registered generalized-cylinder body meshes driven by known
//!   latent factors, plus a demographics / income / reporting-error
//!   data-generating process with controllable endogeneity.
//! * [`autoencoder`]: an hour-glass MLP autoencoder over flattened meshes,
//!   trained with RMSprop, with dimension sweeps and component alignment.
//! * [`econometrics`]: OLS with pairs bootstrap, Nadaraya–Watson, quantile
//!   polynomials, Lasso with cross-validation, residual instruments,
//!   proxy-variable and control-function estimators, and a 2SLS oracle.
//! * [`pipeline`]: configuration, the `synth` / `train` / `encode` /
//!   `regress` / `replicate` commands, and hash manifests of their output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod econometrics;
pub mod error;
pub mod kv;
pub mod mesh;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use autoencoder::{AutoencoderModel, Embedding, TrainConfig, TrainHistory};
pub use econometrics::{DesignMatrix, RegressionResult};
pub use error::{Error, Result};
pub use mesh::RegisteredMesh;
pub use pipeline::{Analysis, Manifest, RunConfig};
pub use synth::{BodyMeasures, Cohort, DgpConfig, LatentBody, SubjectRecord, TemplateSpec};
