//! Feed-forward network surrogate: `input -> 64 -> 64 -> 1`, ReLU, dropout on
//! both hidden layers, Adam on mean squared error.
//!
//! The predictive mean is the dropout-free forward pass. The predictive
//! variance is the sample variance over a fixed set of Monte Carlo dropout
//! masks drawn once at the end of training, so prediction stays a pure
//! function of the fitted model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Prediction, Surrogate, SurrogateFitter};
use crate::error::{domain, Error, Result};

pub const MIN_TRAINING_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mc_samples: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            dropout: 0.5,
            learning_rate: 0.01,
            epochs: 300,
            batch_size: 32,
            mc_samples: 32,
        }
    }
}

impl MlpConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 || self.mc_samples < 2 {
            return Err(domain(format!("invalid MLP configuration {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(domain(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(domain("learning rate must be > 0"));
        }
        Ok(())
    }
}

/// Dense layer, weights row-major `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn he(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// Affine standardization `(v - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit(columns: &[Vec<f64>]) -> Self {
        let (offset, scale) = columns
            .iter()
            .map(|c| {
                let n = c.len() as f64;
                let mean = c.iter().sum::<f64>() / n;
                let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = var.sqrt();
                (mean, if sd > 1e-12 { sd } else { 1.0 })
            })
            .unzip();
        Self { offset, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }
}

/// Dropout keep-masks for the two hidden layers, already scaled by `1/(1-p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutMask {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl DropoutMask {
    fn sample(hidden: usize, p: f64, rng: &mut ChaCha8Rng) -> Self {
        let keep = 1.0 / (1.0 - p);
        let mut draw = || -> Vec<f64> {
            (0..hidden)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect()
        };
        let first = draw();
        let second = draw();
        Self { first, second }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSurrogate {
    pub config: MlpConfig,
    pub layers: [Dense; 3],
    pub inputs: Standardizer,
    pub target: Standardizer,
    pub mc_masks: Vec<DropoutMask>,
    /// Training MSE (original units, dropout off) before the first update.
    pub initial_mse: f64,
    /// Training MSE (original units, dropout off) after the last epoch.
    pub final_mse: f64,
}

struct Activations {
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

impl MlpSurrogate {
    fn forward_std(&self, x: &[f64], mask: Option<&DropoutMask>) -> Activations {
        let mut h1 = Vec::with_capacity(self.config.hidden);
        let mut h2 = Vec::with_capacity(self.config.hidden);
        let mut out = Vec::with_capacity(1);
        self.layers[0].forward(x, &mut h1);
        relu_dropout(&mut h1, mask.map(|m| m.first.as_slice()));
        self.layers[1].forward(&h1, &mut h2);
        relu_dropout(&mut h2, mask.map(|m| m.second.as_slice()));
        self.layers[2].forward(&h2, &mut out);
        Activations { h1, h2, out }
    }

    fn unscale(&self, v: f64) -> f64 {
        v * self.target.scale[0] + self.target.offset[0]
    }

    /// Dropout-free prediction in original units.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let z = self.inputs.apply(x);
        Ok(self.unscale(self.forward_std(&z, None).out[0]))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.layers[0].inputs {
            return Err(domain(format!(
                "query dimension {} differs from {}",
                x.len(),
                self.layers[0].inputs
            )));
        }
        Ok(())
    }

    fn mse(&self, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let e = self.predict_mean(x)? - y;
            total += e * e;
        }
        Ok(total / xs.len() as f64)
    }
}

impl Surrogate for MlpSurrogate {
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        mlp_predict(self, x)
    }
}

fn relu_dropout(h: &mut [f64], mask: Option<&[f64]>) {
    match mask {
        Some(m) => h.iter_mut().zip(m).for_each(|(v, k)| *v = v.max(0.0) * k),
        None => h.iter_mut().for_each(|v| *v = v.max(0.0)),
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
            }
        }
    }
}

/// Trains the network on `(input, value)` pairs. `seed` fixes weight
/// initialization, batch order and dropout masks.
pub fn mlp_fit(points: &[(Vec<f64>, f64)], config: &MlpConfig, seed: u64) -> Result<MlpSurrogate> {
    config.validate()?;
    if points.len() < MIN_TRAINING_POINTS {
        return Err(domain(format!(
            "MLP training needs at least {MIN_TRAINING_POINTS} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].0.len();
    if dim == 0 || points.iter().any(|(x, _)| x.len() != dim) {
        return Err(domain("MLP inputs must share a nonzero dimension"));
    }
    if points.iter().any(|(x, y)| !y.is_finite() || x.iter().any(|v| !v.is_finite())) {
        return Err(domain("MLP training data must be finite"));
    }

    let xs: Vec<Vec<f64>> = points.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| *y).collect();
    let columns: Vec<Vec<f64>> = (0..dim).map(|d| xs.iter().map(|x| x[d]).collect()).collect();
    let inputs = Standardizer::fit(&columns);
    let target = Standardizer::fit(std::slice::from_ref(&ys));
    let zx: Vec<Vec<f64>> = xs.iter().map(|x| inputs.apply(x)).collect();
    let zy: Vec<f64> = ys.iter().map(|y| (y - target.offset[0]) / target.scale[0]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.hidden;
    let mut model = MlpSurrogate {
        config: *config,
        layers: [
            Dense::he(dim, h, &mut rng),
            Dense::he(h, h, &mut rng),
            Dense::he(h, 1, &mut rng),
        ],
        inputs,
        target,
        mc_masks: Vec::new(),
        initial_mse: 0.0,
        final_mse: 0.0,
    };
    model.initial_mse = model.mse(&xs, &ys)?;

    let shapes: Vec<usize> = model
        .layers
        .iter()
        .flat_map(|l| [l.weights.len(), l.bias.len()])
        .collect();
    let mut adam = Adam::new(&shapes);
    let mut order: Vec<usize> = (0..zx.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let mask = DropoutMask::sample(h, config.dropout, &mut rng);
                let act = model.forward_std(&zx[i], Some(&mask));
                let err = act.out[0] - zy[i];
                epoch_loss += err * err;
                backprop(&model, &zx[i], &act, &mask, err * scale, &mut grads);
            }
            let [l0, l1, l2] = &mut model.layers;
            let mut params = [
                &mut l0.weights,
                &mut l0.bias,
                &mut l1.weights,
                &mut l1.bias,
                &mut l2.weights,
                &mut l2.bias,
            ];
            adam.update(&mut params, &grads, config.learning_rate);
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
        }
    }

    model.final_mse = model.mse(&xs, &ys)?;
    if !model.final_mse.is_finite() {
        return Err(Error::Training("final training loss is not finite".into()));
    }
    model.mc_masks = (0..config.mc_samples)
        .map(|_| DropoutMask::sample(h, config.dropout, &mut rng))
        .collect();
    Ok(model)
}

fn backprop(
    model: &MlpSurrogate,
    x: &[f64],
    act: &Activations,
    mask: &DropoutMask,
    d_out: f64,
    grads: &mut [Vec<f64>],
) {
    let [l0, l1, l2] = &model.layers;
    let h = l1.outputs;

    // Output layer.
    for j in 0..h {
        grads[4][j] += d_out * act.h2[j];
    }
    grads[5][0] += d_out;

    // Second hidden layer: a2 = relu(z2) * mask, h2 = a2.
    let mut d_z2 = vec![0.0; h];
    for j in 0..h {
        if act.h2[j] > 0.0 {
            d_z2[j] = d_out * l2.weights[j] * mask.second[j];
        }
    }
    for (o, dz) in d_z2.iter().enumerate() {
        if *dz == 0.0 {
            continue;
        }
        let row = &mut grads[2][o * h..(o + 1) * h];
        row.iter_mut().zip(&act.h1).for_each(|(g, a)| *g += dz * a);
        grads[3][o] += dz;
    }

    // First hidden layer.
    let mut d_h1 = vec![0.0; h];
    for (o, dz) in d_z2.iter().enumerate() {
        if *dz == 0.0 {
            continue;
        }
        let row = &l1.weights[o * h..(o + 1) * h];
        d_h1.iter_mut().zip(row).for_each(|(d, w)| *d += dz * w);
    }
    let inputs = l0.inputs;
    for j in 0..h {
        if act.h1[j] <= 0.0 {
            continue;
        }
        let dz = d_h1[j] * mask.first[j];
        let row = &mut grads[0][j * inputs..(j + 1) * inputs];
        row.iter_mut().zip(x).for_each(|(g, v)| *g += dz * v);
        grads[1][j] += dz;
    }
}

/// Dropout-free mean and Monte Carlo dropout variance at `query`.
pub fn mlp_predict(model: &MlpSurrogate, query: &[f64]) -> Result<Prediction> {
    if model.mc_masks.len() < 2 {
        return Err(Error::State("MLP surrogate has no Monte Carlo masks; fit it first".into()));
    }
    let mean = model.predict_mean(query)?;
    let z = model.inputs.apply(query);
    let samples: Vec<f64> = model
        .mc_masks
        .iter()
        .map(|m| model.unscale(model.forward_std(&z, Some(m)).out[0]))
        .collect();
    let t = samples.len() as f64;
    let mc_mean = samples.iter().sum::<f64>() / t;
    let variance = samples.iter().map(|s| (s - mc_mean) * (s - mc_mean)).sum::<f64>() / (t - 1.0);
    Ok(Prediction { mean, variance })
}

/// Trains a fresh network on every call, seeding it from the loop round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MlpFitter {
    pub config: MlpConfig,
    pub seed: u64,
}

impl SurrogateFitter for MlpFitter {
    fn fit(&self, xs: &[Vec<f64>], ys: &[f64], seed: u64) -> Result<Box<dyn Surrogate>> {
        let points: Vec<(Vec<f64>, f64)> = xs.iter().cloned().zip(ys.iter().copied()).collect();
        let seed = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed;
        Ok(Box::new(mlp_fit(&points, &self.config, seed)?))
    }
}
