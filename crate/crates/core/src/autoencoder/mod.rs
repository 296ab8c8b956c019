//! Hour-glass MLP autoencoder over flattened registered meshes.
//!
//! The encoder `f₁∘…∘f_m` maps a flattened mesh (metres) to a `d`-vector and
//! the decoder `g₁∘…∘g_m` maps it back. Hidden layers use ReLU, the terminal
//! layer of each half is linear. Inputs are centred by a stored mean vector
//! and divided by a stored scalar scale before entering the network; losses
//! are always reported in the original units (m²).

mod embedding;
mod io;
mod train;

pub use embedding::{align_components, correlation, encode_cohort, Alignment, Embedding};
pub use io::{read_history_csv, read_sweep_csv, write_history_csv, write_sweep_csv};
pub use train::{dim_sweep, rmsprop_step, train, RmsProp, SweepRow, TrainConfig, TrainHistory};

use crate::error::{Error, Result};
use crate::mesh::RegisteredMesh;
use crate::rng::StreamRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub(crate) fn code(self) -> u64 {
        match self {
            Activation::Relu => 0,
            Activation::Linear => 1,
        }
    }

    pub(crate) fn from_code(c: u64) -> Result<Self> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Linear),
            _ => Err(Error::Data(format!("unknown activation code {c}"))),
        }
    }
}

/// `σ(W·h + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        if weight.nrows() == 0 || weight.ncols() == 0 {
            return Err(Error::Config("layer dimensions must be ≥ 1".into()));
        }
        if bias.len() != weight.nrows() {
            return Err(Error::Dimension {
                expected: weight.nrows(),
                got: bias.len(),
            });
        }
        Ok(Layer {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Layer {
            weight: DMatrix::zeros(out_dim, in_dim),
            bias: DVector::zeros(out_dim),
            activation,
        }
    }

    /// Uniform on `±√(6/(fan_in+fan_out))`, zero bias.
    pub fn xavier(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut StreamRng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Layer {
            weight: DMatrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-limit..=limit)),
            bias: DVector::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weight * h;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        if self.activation == Activation::Relu {
            z.apply(|v| *v = v.max(0.0));
        }
        z
    }
}

/// Encoder and decoder layer stacks plus the input normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    /// Subtracted from every input (metres).
    pub center: DVector<f64>,
    /// Centred inputs are divided by this (metres).
    pub scale: f64,
}

/// Parameter-shaped gradient (or cache) for every layer, encoder first.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &AutoencoderModel) -> Self {
        Gradients {
            weights: model
                .layers()
                .map(|l| DMatrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: model.layers().map(|l| DVector::zeros(l.out_dim())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.amax())
            .chain(self.biases.iter().map(|b| b.amax()))
            .fold(0.0, f64::max)
    }
}

impl AutoencoderModel {
    /// Hour-glass network `input-h₁-…-h_k-d-h_k-…-h₁-input` with Xavier
    /// initialisation, identity normalisation.
    pub fn new(input_dim: usize, hidden: &[usize], d: usize, rng: &mut StreamRng) -> Result<Self> {
        if input_dim == 0 || d == 0 || hidden.contains(&0) {
            return Err(Error::Config("layer widths must be ≥ 1".into()));
        }
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(d);
        let half = |w: &[usize], rng: &mut StreamRng| -> Vec<Layer> {
            w.windows(2)
                .enumerate()
                .map(|(i, p)| {
                    let act = if i + 2 == w.len() {
                        Activation::Linear
                    } else {
                        Activation::Relu
                    };
                    Layer::xavier(p[0], p[1], act, rng)
                })
                .collect()
        };
        let encoder = half(&widths, rng);
        widths.reverse();
        let decoder = half(&widths, rng);
        Ok(AutoencoderModel {
            encoder,
            decoder,
            center: DVector::zeros(input_dim),
            scale: 1.0,
        })
    }

    /// Assembles a model from explicit layers, checking that dimensions
    /// chain and that both halves end linearly.
    pub fn from_layers(encoder: Vec<Layer>, decoder: Vec<Layer>) -> Result<Self> {
        if encoder.is_empty() || decoder.is_empty() {
            return Err(Error::Config("encoder and decoder need at least one layer".into()));
        }
        let input_dim = encoder[0].in_dim();
        let model = AutoencoderModel {
            encoder,
            decoder,
            center: DVector::zeros(input_dim),
            scale: 1.0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let layers: Vec<&Layer> = self.layers().collect();
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension {
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        let out = layers.last().expect("non-empty").out_dim();
        if out != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: out,
            });
        }
        if self.encoder.last().map(|l| l.activation) != Some(Activation::Linear)
            || self.decoder.last().map(|l| l.activation) != Some(Activation::Linear)
        {
            return Err(Error::Config(
                "terminal encoder and decoder layers must be linear".into(),
            ));
        }
        if self.center.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: self.center.len(),
            });
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "input scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.last().expect("non-empty encoder").out_dim()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Normalised inputs as columns.
    pub(crate) fn normalise_batch(&self, batch: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        for x in batch {
            self.check_len(x)?;
        }
        let n = self.input_dim();
        Ok(DMatrix::from_fn(n, batch.len(), |r, c| {
            (batch[c][r] - self.center[r]) / self.scale
        }))
    }

    fn run(layers: &[Layer], mut h: DMatrix<f64>) -> DMatrix<f64> {
        for l in layers {
            h = l.apply(&h);
        }
        h
    }

    /// Embedding and reconstruction of one flattened mesh.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.normalise_batch(std::slice::from_ref(&x.to_vec()))?;
        let p = Self::run(&self.encoder, u);
        let r = Self::run(&self.decoder, p.clone());
        let recon = r
            .iter()
            .zip(self.center.iter())
            .map(|(v, c)| c + self.scale * v)
            .collect();
        Ok((p.iter().copied().collect(), recon))
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let u = self.normalise_batch(std::slice::from_ref(&x.to_vec()))?;
        Ok(Self::run(&self.encoder, u).iter().copied().collect())
    }

    pub fn decode(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.embedding_dim() {
            return Err(Error::Dimension {
                expected: self.embedding_dim(),
                got: p.len(),
            });
        }
        let r = Self::run(&self.decoder, DMatrix::from_column_slice(p.len(), 1, p));
        Ok(r.iter()
            .zip(self.center.iter())
            .map(|(v, c)| c + self.scale * v)
            .collect())
    }

    /// Encodes many inputs at once; rows of the result are subjects.
    pub fn encode_batch(&self, batch: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let u = self.normalise_batch(batch)?;
        Ok(Self::run(&self.encoder, u).transpose())
    }

    /// Mean squared coordinate error on normalised columns.
    pub(crate) fn normalised_loss(&self, u: &DMatrix<f64>) -> f64 {
        let r = Self::run(&self.decoder, Self::run(&self.encoder, u.clone()));
        (r - u).norm_squared() / u.len() as f64
    }

    /// Mean over the batch of `‖V − g(f(V))‖² / input_dim`, in m².
    pub fn reconstruction_loss(&self, batch: &[Vec<f64>]) -> Result<f64> {
        let u = self.normalise_batch(batch)?;
        Ok(self.normalised_loss(&u) * self.scale * self.scale)
    }

    /// Backpropagation of the normalised loss; returns the loss too.
    pub(crate) fn backprop(&self, u: &DMatrix<f64>) -> (f64, Gradients) {
        let layers: Vec<&Layer> = self.layers().collect();
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(u.clone());
        for l in &layers {
            let next = l.apply(acts.last().expect("non-empty"));
            acts.push(next);
        }
        let out = acts.last().expect("non-empty");
        let diff = out - u;
        let count = u.len() as f64;
        let loss = diff.norm_squared() / count;
        let mut delta = diff * (2.0 / count);
        let mut weights = Vec::with_capacity(layers.len());
        let mut biases = Vec::with_capacity(layers.len());
        for (i, l) in layers.iter().enumerate().rev() {
            if l.activation == Activation::Relu {
                delta.zip_apply(&acts[i + 1], |d, a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            weights.push(&delta * acts[i].transpose());
            biases.push(delta.column_sum());
            if i > 0 {
                delta = l.weight.transpose() * &delta;
            }
        }
        weights.reverse();
        biases.reverse();
        (loss, Gradients { weights, biases })
    }

    /// Exact gradients of [`reconstruction_loss`](Self::reconstruction_loss)
    /// with respect to every weight and bias. The ReLU derivative at 0 is 0.
    pub fn gradients(&self, batch: &[Vec<f64>]) -> Result<Gradients> {
        let u = self.normalise_batch(batch)?;
        let (_, mut g) = self.backprop(&u);
        let s2 = self.scale * self.scale;
        if s2 != 1.0 {
            g.weights.iter_mut().for_each(|w| *w *= s2);
            g.biases.iter_mut().for_each(|b| *b *= s2);
        }
        Ok(g)
    }
}

/// Vertex coordinates `(x₁,y₁,z₁,x₂,…)` converted from mm to metres.
pub fn flatten(mesh: &RegisteredMesh) -> Vec<f64> {
    mesh.vertices.iter().flatten().map(|c| c / 1000.0).collect()
}

/// Inverse of [`flatten`] given the shared face list.
pub fn unflatten(x: &[f64], faces: &[[usize; 3]]) -> Result<RegisteredMesh> {
    if !x.len().is_multiple_of(3) {
        return Err(Error::Data(format!(
            "flattened length {} is not a multiple of 3",
            x.len()
        )));
    }
    let vertices = x
        .chunks_exact(3)
        .map(|c| [c[0] * 1000.0, c[1] * 1000.0, c[2] * 1000.0])
        .collect();
    RegisteredMesh::new(vertices, faces.to_vec())
}

/// Flattened meshes of a cohort in subject order.
pub fn flatten_cohort(cohort: &crate::synth::Cohort) -> Result<Vec<Vec<f64>>> {
    if !cohort.has_meshes() {
        return Err(Error::Data("cohort has no meshes".into()));
    }
    Ok((0..cohort.len())
        .map(|i| cohort.vertices[i].iter().flatten().map(|c| c / 1000.0).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_model(widths_in: usize, hidden: &[usize], d: usize, seed: u64) -> AutoencoderModel {
        let mut r = rng::stream(seed, "init", 0);
        let mut m = AutoencoderModel::new(widths_in, hidden, d, &mut r).unwrap();
        // non-zero biases so the bias gradients are exercised
        for l in m.layers_mut() {
            l.bias.apply(|b| *b = r.random_range(-0.3..0.3));
        }
        m
    }

    fn random_batch(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, "batch", 0);
        (0..n)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect()
    }

    #[test]
    fn flatten_layout_and_round_trip() {
        let m = RegisteredMesh::new(vec![[1000.0, 0.0, 0.0], [0.0, 2000.0, 0.0]], vec![]).unwrap();
        assert_eq!(flatten(&m), vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let back = unflatten(&flatten(&m), &m.faces).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn template_mesh_flattens_to_2310() {
        let t = crate::synth::TemplateSpec::default();
        let m = crate::synth::mesh_from_latents(&crate::LatentBody::new(0.0, 0.0, 0.0), &t, 0.0, 0).unwrap();
        assert_eq!(flatten(&m).len(), 2310);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = AutoencoderModel::from_layers(
            vec![
                Layer::zeros(4, 3, Activation::Relu),
                Layer::zeros(3, 2, Activation::Linear),
            ],
            vec![
                Layer::zeros(2, 3, Activation::Relu),
                Layer::zeros(3, 4, Activation::Linear),
            ],
        )
        .unwrap();
        let (p, r) = m.forward(&[1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p, vec![0.0; 2]);
        assert_eq!(r, vec![0.0; 4]);
    }

    #[test]
    fn identity_pair_reconstructs_exactly() {
        let id = |n| Layer::new(DMatrix::identity(n, n), DVector::zeros(n), Activation::Linear).unwrap();
        let m = AutoencoderModel::from_layers(vec![id(3)], vec![id(3)]).unwrap();
        let x = [0.25, -1.5, 3.0];
        let (p, r) = m.forward(&x).unwrap();
        assert_eq!(p, x.to_vec());
        assert_eq!(r, x.to_vec());
        assert_eq!(m.reconstruction_loss(&[x.to_vec()]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_one_two_one() {
        // encoder 1→2 ReLU, 2→1 linear; decoder 1→1 linear
        let e1 = Layer::new(
            DMatrix::from_row_slice(2, 1, &[2.0, -1.0]),
            DVector::from_vec(vec![0.5, 0.25]),
            Activation::Relu,
        )
        .unwrap();
        let e2 = Layer::new(
            DMatrix::from_row_slice(1, 2, &[1.5, -3.0]),
            DVector::from_vec(vec![0.1]),
            Activation::Linear,
        )
        .unwrap();
        let d1 = Layer::new(
            DMatrix::from_row_slice(1, 1, &[-0.5]),
            DVector::from_vec(vec![2.0]),
            Activation::Linear,
        )
        .unwrap();
        let m = AutoencoderModel::from_layers(vec![e1, e2], vec![d1]).unwrap();
        // x = 0.2: h = relu(0.9, 0.05) = (0.9, 0.05); p = 1.35 − 0.15 + 0.1 = 1.3; r = −0.65 + 2 = 1.35
        let (p, r) = m.forward(&[0.2]).unwrap();
        assert!((p[0] - 1.3).abs() < 1e-12);
        assert!((r[0] - 1.35).abs() < 1e-12);
        // x = 1: h = relu(2.5, −0.75) = (2.5, 0); p = 3.85; r = 0.075
        let (p, r) = m.forward(&[1.0]).unwrap();
        assert!((p[0] - 3.85).abs() < 1e-12);
        assert!((r[0] - 0.075).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = random_model(6, &[3], 2, 1);
        assert!(matches!(
            m.forward(&[1.0; 5]),
            Err(Error::Dimension { expected: 6, got: 5 })
        ));
        assert!(m.reconstruction_loss(&[]).is_err());
        assert!(m.decode(&[0.0; 3]).is_err());
    }

    #[test]
    fn from_layers_checks_chaining_and_terminal_activation() {
        let bad = AutoencoderModel::from_layers(
            vec![Layer::zeros(4, 3, Activation::Linear)],
            vec![Layer::zeros(2, 4, Activation::Linear)],
        );
        assert!(bad.is_err());
        let relu_end = AutoencoderModel::from_layers(
            vec![Layer::zeros(4, 2, Activation::Relu)],
            vec![Layer::zeros(2, 4, Activation::Linear)],
        );
        assert!(relu_end.is_err());
    }

    #[test]
    fn offset_by_one_gives_unit_loss() {
        let n = 3;
        let id = Layer::new(DMatrix::identity(n, n), DVector::zeros(n), Activation::Linear).unwrap();
        let shift = Layer::new(
            DMatrix::identity(n, n),
            DVector::from_element(n, 1.0),
            Activation::Linear,
        )
        .unwrap();
        let m = AutoencoderModel::from_layers(vec![id], vec![shift]).unwrap();
        let loss = m.reconstruction_loss(&random_batch(4, n, 2)).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_direct_resummation() {
        let mut m = random_model(5, &[4], 2, 3);
        m.center = DVector::from_fn(5, |i, _| 0.1 * i as f64);
        m.scale = 0.7;
        let x = random_batch(1, 5, 4).remove(0);
        let (_, r) = m.forward(&x).unwrap();
        let direct: f64 = x.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 5.0;
        assert!((m.reconstruction_loss(&[x]).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_gradients() {
        let mut r = rng::stream(5, "init", 0);
        let m = AutoencoderModel::new(6, &[3], 2, &mut r).unwrap();
        let g = m.gradients(&[vec![0.0; 6], vec![0.0; 6]]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn duplicated_batch_leaves_gradients_unchanged() {
        let m = random_model(6, &[3], 2, 6);
        let b = random_batch(1, 6, 7);
        let g1 = m.gradients(&b).unwrap();
        let g2 = m.gradients(&[b[0].clone(), b[0].clone()]).unwrap();
        for (a, b) in g1.weights.iter().zip(&g2.weights) {
            assert!((a - b).amax() < 1e-15);
        }
    }

    fn param(m: &mut AutoencoderModel, li: usize, r: usize, c: Option<usize>) -> &mut f64 {
        let l = m.layers_mut().nth(li).unwrap();
        match c {
            Some(c) => &mut l.weight[(r, c)],
            None => &mut l.bias[r],
        }
    }

    /// Central differences of the loss, perturbing one parameter at a time.
    fn max_fd_relative_error(m: &AutoencoderModel, batch: &[Vec<f64>]) -> f64 {
        let h = 1e-5;
        let g = m.gradients(batch).unwrap();
        let mut probe = m.clone();
        let mut worst: f64 = 0.0;
        for li in 0..g.weights.len() {
            let (rows, cols) = g.weights[li].shape();
            for r in 0..rows {
                for c in (0..cols).map(Some).chain([None]) {
                    let orig = *param(&mut probe, li, r, c);
                    *param(&mut probe, li, r, c) = orig + h;
                    let up = probe.reconstruction_loss(batch).unwrap();
                    *param(&mut probe, li, r, c) = orig - h;
                    let down = probe.reconstruction_loss(batch).unwrap();
                    *param(&mut probe, li, r, c) = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = match c {
                        Some(c) => g.weights[li][(r, c)],
                        None => g.biases[li][r],
                    };
                    worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-7));
                }
            }
        }
        worst
    }

    #[test]
    fn finite_difference_gradients_6_3_2_3_6() {
        let m = random_model(6, &[3], 2, 8);
        let batch = random_batch(4, 6, 9);
        let err = max_fd_relative_error(&m, &batch);
        assert!(err < 1e-5, "max relative error {err}");
    }
}
