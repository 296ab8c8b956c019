use super::{AutoencoderModel, Gradients};
use crate::error::{Error, Result};
use crate::rng;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Embedding dimension.
    pub d: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate of the last epoch; the rate decays geometrically from
    /// `learning_rate` to this value. Equal values give a constant rate.
    pub learning_rate_final: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    /// Fraction of subjects used for training; the rest validate.
    pub split_fraction: f64,
    pub seed: u64,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 3,
            epochs: 500,
            batch_size: 50,
            learning_rate: 1e-3,
            learning_rate_final: 1e-5,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            split_fraction: 0.8,
            seed: 0,
            hidden: vec![256, 64, 16],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("embedding dimension must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if !(self.learning_rate > 0.0)
            || !(self.learning_rate_final > 0.0)
            || !(0.0..1.0).contains(&self.rms_decay)
            || !(self.rms_epsilon >= 0.0)
        {
            return Err(Error::Config("invalid RMSprop hyperparameters".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses in m², plus the split used.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl TrainHistory {
    pub fn final_train(&self) -> f64 {
        self.train_mse.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_val(&self) -> f64 {
        self.val_mse.last().copied().unwrap_or(f64::NAN)
    }
}

/// RMSprop state: one squared-gradient cache per parameter.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub cache: Gradients,
}

impl RmsProp {
    pub fn new(model: &AutoencoderModel, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        RmsProp {
            learning_rate,
            decay,
            epsilon,
            cache: Gradients::zeros_like(model),
        }
    }

    /// `cache ← ρ·cache + (1−ρ)·g²`, `θ ← θ − η·g/(√cache + ε)`.
    pub fn step(&mut self, model: &mut AutoencoderModel, grads: &Gradients) {
        let (lr, rho, eps) = (self.learning_rate, self.decay, self.epsilon);
        let update = |theta: &mut [f64], cache: &mut [f64], g: &[f64]| {
            for ((t, c), &g) in theta.iter_mut().zip(cache.iter_mut()).zip(g) {
                *c = rho * *c + (1.0 - rho) * g * g;
                *t -= lr * g / (c.sqrt() + eps);
            }
        };
        for (i, layer) in model.layers_mut().enumerate() {
            update(
                layer.weight.as_mut_slice(),
                self.cache.weights[i].as_mut_slice(),
                grads.weights[i].as_slice(),
            );
            update(
                layer.bias.as_mut_slice(),
                self.cache.biases[i].as_mut_slice(),
                grads.biases[i].as_slice(),
            );
        }
    }
}

pub fn rmsprop_step(model: &mut AutoencoderModel, state: &mut RmsProp, grads: &Gradients) -> Result<()> {
    let shapes_match = grads.weights.len() == state.cache.weights.len()
        && grads
            .weights
            .iter()
            .zip(&state.cache.weights)
            .all(|(g, c)| g.shape() == c.shape());
    if !shapes_match {
        return Err(Error::Data("gradient shapes do not match the optimizer state".into()));
    }
    state.step(model, grads);
    Ok(())
}

fn columns(data: &[Vec<f64>], idx: &[usize], model: &AutoencoderModel) -> DMatrix<f64> {
    let n = model.input_dim();
    DMatrix::from_fn(n, idx.len(), |r, c| (data[idx[c]][r] - model.center[r]) / model.scale)
}

/// Trains a fresh hour-glass model on flattened meshes (metres).
///
/// The split, initialisation and per-epoch shuffles come from independent
/// streams of `config.seed`, so a run is reproducible bit for bit.
pub fn train(data: &[Vec<f64>], config: &TrainConfig) -> Result<(AutoencoderModel, TrainHistory)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let dim = data[0].len();
    if let Some(x) = data.iter().find(|x| x.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: x.len(),
        });
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite input coordinate".into()));
    }
    let n = data.len();
    let n_train = (n as f64 * config.split_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Data(format!(
            "{n} subjects cannot be split {:.2}:{:.2} with both groups non-empty",
            config.split_fraction,
            1.0 - config.split_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(config.seed, "split", 0));
    let mut train_idx = order[..n_train].to_vec();
    let val_idx = order[n_train..].to_vec();

    let mut init = rng::stream(config.seed, "init", config.d as u64);
    let mut model = AutoencoderModel::new(dim, &config.hidden, config.d, &mut init)?;
    for j in 0..dim {
        model.center[j] = train_idx.iter().map(|&i| data[i][j]).sum::<f64>() / n_train as f64;
    }
    let ss: f64 = train_idx
        .iter()
        .map(|&i| {
            data[i]
                .iter()
                .zip(model.center.iter())
                .map(|(x, c)| (x - c).powi(2))
                .sum::<f64>()
        })
        .sum();
    let scale = (ss / (n_train * dim) as f64).sqrt();
    model.scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };

    let train_u = columns(data, &train_idx, &model);
    let val_u = columns(data, &val_idx, &model);
    let s2 = model.scale * model.scale;
    let mut opt = RmsProp::new(&model, config.learning_rate, config.rms_decay, config.rms_epsilon);
    let mut history = TrainHistory {
        train_mse: Vec::with_capacity(config.epochs),
        val_mse: Vec::with_capacity(config.epochs),
        train_indices: train_idx.clone(),
        val_indices: val_idx.clone(),
    };
    let mut pos: Vec<usize> = (0..n_train).collect();
    let ratio = config.learning_rate_final / config.learning_rate;
    for epoch in 0..config.epochs {
        let frac = if config.epochs > 1 {
            epoch as f64 / (config.epochs - 1) as f64
        } else {
            0.0
        };
        opt.learning_rate = config.learning_rate * ratio.powf(frac);
        pos.shuffle(&mut rng::stream(config.seed, "epoch", epoch as u64));
        for chunk in pos.chunks(config.batch_size) {
            let batch = train_u.select_columns(chunk);
            let (_, g) = model.backprop(&batch);
            opt.step(&mut model, &g);
        }
        let tr = model.normalised_loss(&train_u) * s2;
        let va = model.normalised_loss(&val_u) * s2;
        if !tr.is_finite() || !va.is_finite() {
            return Err(Error::Numerical(format!("training diverged at epoch {}", epoch + 1)));
        }
        history.train_mse.push(tr);
        history.val_mse.push(va);
        if (epoch + 1) % 100 == 0 {
            log::debug!("d={} epoch {}: train {tr:.3e} val {va:.3e}", config.d, epoch + 1);
        }
    }
    train_idx.sort_unstable();
    history.train_indices = train_idx;
    let mut v = val_idx;
    v.sort_unstable();
    history.val_indices = v;
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub d: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// One independent training run per embedding dimension, all sharing the
/// split of `config.seed`.
pub fn dim_sweep(data: &[Vec<f64>], d_values: &[usize], config: &TrainConfig) -> Result<Vec<SweepRow>> {
    if d_values.is_empty() {
        return Err(Error::Config("dimension sweep needs at least one d".into()));
    }
    d_values
        .par_iter()
        .map(|&d| {
            let cfg = TrainConfig { d, ..config.clone() };
            let (_, h) = train(data, &cfg)?;
            Ok(SweepRow {
                d,
                train_mse: h.final_train(),
                val_mse: h.final_val(),
                epochs: cfg.epochs,
                seed: cfg.seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{Activation, Layer};
    use nalgebra::{DMatrix, DVector};

    fn one_param_model(w: f64) -> AutoencoderModel {
        let e = Layer::new(DMatrix::from_element(1, 1, w), DVector::zeros(1), Activation::Linear).unwrap();
        let d = Layer::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1), Activation::Linear).unwrap();
        AutoencoderModel::from_layers(vec![e], vec![d]).unwrap()
    }

    fn unit_grad(m: &AutoencoderModel, g: f64) -> Gradients {
        let mut grads = Gradients::zeros_like(m);
        grads.weights[0][(0, 0)] = g;
        grads
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = one_param_model(0.3);
        let before = m.clone();
        let mut opt = RmsProp::new(&m, 0.01, 0.9, 1e-8);
        let g = Gradients::zeros_like(&m);
        rmsprop_step(&mut m, &mut opt, &g).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn hand_evaluated_steps() {
        let mut m = one_param_model(0.0);
        let mut opt = RmsProp::new(&m, 0.01, 0.9, 0.0);
        let g = unit_grad(&m, 1.0);
        rmsprop_step(&mut m, &mut opt, &g).unwrap();
        let first = -m.encoder[0].weight[(0, 0)];
        assert!((first - 0.01 / 0.1f64.sqrt()).abs() < 1e-15);
        assert!((first - 0.031623).abs() < 1e-6);
        rmsprop_step(&mut m, &mut opt, &g).unwrap();
        let second = -m.encoder[0].weight[(0, 0)] - first;
        assert!((second - 0.022942).abs() < 1e-6);
    }

    #[test]
    fn mismatched_gradients_are_rejected() {
        let mut m = one_param_model(0.0);
        let mut opt = RmsProp::new(&m, 0.01, 0.9, 0.0);
        let g = Gradients {
            weights: vec![DMatrix::zeros(2, 2)],
            biases: vec![],
        };
        assert!(rmsprop_step(&mut m, &mut opt, &g).is_err());
    }

    fn toy_data(n: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand_distr::{Distribution, StandardNormal};
        let mut r = rng::stream(seed, "toy", 0);
        (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut r);
                let b: f64 = StandardNormal.sample(&mut r);
                (0..8)
                    .map(|j| a * (j as f64 * 0.3).cos() + 0.5 * b * (j as f64 * 0.7).sin())
                    .collect()
            })
            .collect()
    }

    fn small_config(d: usize) -> TrainConfig {
        TrainConfig {
            d,
            epochs: 60,
            batch_size: 16,
            hidden: vec![16, 8],
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn constant_data_is_fit_exactly() {
        let x: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let data = vec![x; 50];
        let cfg = TrainConfig {
            d: 2,
            epochs: 20,
            batch_size: 10,
            hidden: vec![8, 4],
            ..TrainConfig::default()
        };
        let (_, h) = train(&data, &cfg).unwrap();
        assert_eq!(h.train_mse.len(), 20);
        assert!(h.final_train() < 1e-6);
    }

    #[test]
    fn training_is_reproducible_and_learns() {
        let data = toy_data(120, 1);
        let (m1, h1) = train(&data, &small_config(2)).unwrap();
        let (m2, h2) = train(&data, &small_config(2)).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert!(h1.train_mse[59] < h1.train_mse[0]);
        assert!(h1.val_mse.iter().all(|v| *v >= 0.0));
        assert_eq!(h1.train_indices.len(), 96);
        assert_eq!(h1.val_indices.len(), 24);
    }

    #[test]
    fn invalid_inputs() {
        assert!(train(&[], &small_config(2)).is_err());
        assert!(train(&[vec![1.0; 8]], &small_config(2)).is_err());
        let mut cfg = small_config(2);
        cfg.split_fraction = 1.0;
        assert!(train(&toy_data(10, 1), &cfg).is_err());
        assert!(dim_sweep(&toy_data(10, 1), &[], &small_config(1)).is_err());
    }

    #[test]
    fn sweep_rows_follow_d_values() {
        let data = toy_data(60, 2);
        let rows = dim_sweep(&data, &[1, 2], &small_config(1)).unwrap();
        assert_eq!(rows.iter().map(|r| r.d).collect::<Vec<_>>(), vec![1, 2]);
        assert!(rows.iter().all(|r| r.epochs == 60 && r.seed == 4));
    }
}
