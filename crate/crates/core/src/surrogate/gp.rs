//! Exact Gaussian-process regression with a squared-exponential kernel.

use serde::{Deserialize, Serialize};

use super::{Prediction, Surrogate, SurrogateFitter};
use crate::error::{domain, Error, Result};

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;
const VARIANCE_FLOOR: f64 = -1e-10;

/// Squared-exponential covariance `s2 * exp(-|x - x'|^2 / (2 l^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquaredExponential {
    pub length_scale: f64,
    pub signal_var: f64,
}

impl SquaredExponential {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_var * (-0.5 * sq / (self.length_scale * self.length_scale)).exp()
    }
}

/// How kernel hyperparameters are chosen at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelConfig {
    Fixed(SquaredExponential),
    /// Length-scale by log-marginal-likelihood over 20 log-spaced values in
    /// `[0.01, 10]`; signal variance set to the sample variance of the targets.
    #[default]
    GridSearch,
}

/// Length-scales tried by [`KernelConfig::GridSearch`].
pub fn length_scale_grid() -> Vec<f64> {
    let (lo, hi, n) = (0.01f64.ln(), 10f64.ln(), 20);
    (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Factorization {
    /// Lower Cholesky factor, row-major `n x n`.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    log_marginal_likelihood: f64,
}

/// A GP surrogate. Training points are stored in canonical (sorted) order,
/// which makes predictions independent of the order they were supplied in.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    kernel: SquaredExponential,
    noise_var: f64,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    prior_mean: f64,
    fitted: Option<Factorization>,
}

impl GpModel {
    /// An unfitted model with fixed hyperparameters.
    pub fn new(kernel: SquaredExponential, noise_var: f64) -> Self {
        Self {
            kernel,
            noise_var,
            train_x: Vec::new(),
            train_y: Vec::new(),
            prior_mean: 0.0,
            fitted: None,
        }
    }

    pub fn kernel(&self) -> SquaredExponential {
        self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn train_x(&self) -> &[Vec<f64>] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    /// Jitter that was needed to factorize the kernel matrix.
    pub fn jitter(&self) -> Option<f64> {
        self.fitted.as_ref().map(|f| f.jitter)
    }

    pub fn log_marginal_likelihood(&self) -> Option<f64> {
        self.fitted.as_ref().map(|f| f.log_marginal_likelihood)
    }
}

impl Surrogate for GpModel {
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        gp_predict(self, x)
    }
}

fn validate_points(points: &[(Vec<f64>, f64)], noise_var: f64) -> Result<usize> {
    let first = points.first().ok_or_else(|| domain("GP fit needs at least one point"))?;
    let dim = first.0.len();
    if dim == 0 {
        return Err(domain("GP inputs must have at least one dimension"));
    }
    for (x, y) in points {
        if x.len() != dim {
            return Err(domain(format!("input dimension {} differs from {dim}", x.len())));
        }
        if !x.iter().all(|v| v.is_finite()) || !y.is_finite() {
            return Err(domain("GP training data must be finite"));
        }
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(domain(format!("noise variance must be >= 0, got {noise_var}")));
    }
    Ok(dim)
}

fn canonical_order(points: &[(Vec<f64>, f64)]) -> Vec<(Vec<f64>, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.total_cmp(&b.1))
    });
    sorted
}

/// In-place lower Cholesky factorization of a row-major SPD matrix.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
        for k in (j + 1)..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn backward_substitute_transposed(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn factorize(
    xs: &[Vec<f64>],
    centered: &[f64],
    kernel: &SquaredExponential,
    noise_var: f64,
) -> Option<Factorization> {
    let n = xs.len();
    let mut base = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel.eval(&xs[i], &xs[j]);
            base[i * n + j] = k;
            base[j * n + i] = k;
        }
    }
    let mut jitter = 0.0;
    loop {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += noise_var + jitter;
        }
        if cholesky(&mut a, n) {
            let mut alpha = centered.to_vec();
            forward_substitute(&a, n, &mut alpha);
            let fit_term: f64 = alpha.iter().map(|v| v * v).sum();
            backward_substitute_transposed(&a, n, &mut alpha);
            let log_det: f64 = (0..n).map(|i| a[i * n + i].ln()).sum();
            let lml = -0.5 * fit_term
                - log_det
                - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Some(Factorization {
                chol: a,
                alpha,
                jitter,
                log_marginal_likelihood: lml,
            });
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return None;
        }
    }
}

fn sample_variance(ys: &[f64], mean: f64) -> f64 {
    if ys.len() < 2 {
        return 0.0;
    }
    ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (ys.len() - 1) as f64
}

/// Fits a GP to `(input, value)` pairs.
pub fn gp_fit(points: &[(Vec<f64>, f64)], kernel: &KernelConfig, noise_var: f64) -> Result<GpModel> {
    validate_points(points, noise_var)?;
    let sorted = canonical_order(points);
    if noise_var == 0.0 {
        if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Fit(format!(
                "duplicate input {:?} with zero observation noise",
                w[0].0
            )));
        }
    }
    let (train_x, train_y): (Vec<Vec<f64>>, Vec<f64>) = sorted.into_iter().unzip();
    let prior_mean = train_y.iter().sum::<f64>() / train_y.len() as f64;
    let centered: Vec<f64> = train_y.iter().map(|y| y - prior_mean).collect();

    let candidates: Vec<SquaredExponential> = match kernel {
        KernelConfig::Fixed(k) => {
            if !(k.length_scale > 0.0 && k.signal_var > 0.0) {
                return Err(domain(format!("kernel hyperparameters must be > 0, got {k:?}")));
            }
            vec![*k]
        }
        KernelConfig::GridSearch => {
            let var = sample_variance(&train_y, prior_mean);
            let signal_var = if var.is_finite() && var > 0.0 { var } else { 1.0 };
            length_scale_grid()
                .into_iter()
                .map(|length_scale| SquaredExponential {
                    length_scale,
                    signal_var,
                })
                .collect()
        }
    };

    let mut best: Option<(SquaredExponential, Factorization)> = None;
    for k in candidates {
        if let Some(f) = factorize(&train_x, &centered, &k, noise_var) {
            let better = match &best {
                None => true,
                // Less jitter first: jitter changes the model being scored.
                Some((_, b)) => {
                    f.jitter < b.jitter
                        || (f.jitter == b.jitter && f.log_marginal_likelihood > b.log_marginal_likelihood)
                }
            };
            if better {
                best = Some((k, f));
            }
        }
    }
    let (kernel, fitted) = best.ok_or_else(|| {
        Error::Fit(format!(
            "kernel matrix not positive definite after jitter {JITTER_MAX:e}"
        ))
    })?;
    Ok(GpModel {
        kernel,
        noise_var,
        train_x,
        train_y,
        prior_mean,
        fitted: Some(fitted),
    })
}

/// Posterior predictive mean and variance (latent variance plus observation
/// noise) at `query`.
pub fn gp_predict(model: &GpModel, query: &[f64]) -> Result<Prediction> {
    let f = model
        .fitted
        .as_ref()
        .ok_or_else(|| Error::State("GP model used before fitting".into()))?;
    let dim = model.train_x[0].len();
    if query.len() != dim {
        return Err(domain(format!("query dimension {} differs from {dim}", query.len())));
    }
    let n = model.train_x.len();
    let mut k_star: Vec<f64> = model
        .train_x
        .iter()
        .map(|x| model.kernel.eval(x, query))
        .collect();
    let mean = model.prior_mean + k_star.iter().zip(&f.alpha).map(|(k, a)| k * a).sum::<f64>();
    forward_substitute(&f.chol, n, &mut k_star);
    let explained: f64 = k_star.iter().map(|v| v * v).sum();
    let mut latent = model.kernel.signal_var - explained;
    if latent < 0.0 {
        if latent < VARIANCE_FLOOR * model.kernel.signal_var.max(1.0) {
            return Err(Error::Internal(format!("negative posterior variance {latent:e}")));
        }
        latent = 0.0;
    }
    Ok(Prediction {
        mean,
        variance: latent + model.noise_var,
    })
}

/// Snapshot payload: hyperparameters and training data. Loading refits with
/// the stored hyperparameters, which reproduces the factorization exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub kernel: SquaredExponential,
    pub noise_var: f64,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
}

impl GpModel {
    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            kernel: self.kernel,
            noise_var: self.noise_var,
            train_x: self.train_x.clone(),
            train_y: self.train_y.clone(),
        }
    }

    pub fn from_snapshot(s: &GpSnapshot) -> Result<Self> {
        if s.train_x.len() != s.train_y.len() {
            return Err(Error::Snapshot("train_x and train_y differ in length".into()));
        }
        let points: Vec<(Vec<f64>, f64)> =
            s.train_x.iter().cloned().zip(s.train_y.iter().copied()).collect();
        gp_fit(&points, &KernelConfig::Fixed(s.kernel), s.noise_var)
    }
}

/// Fits a fresh GP on every call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpFitter {
    pub kernel: KernelConfig,
    pub noise_var: f64,
}

impl Default for GpFitter {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::GridSearch,
            noise_var: 1e-6,
        }
    }
}

impl SurrogateFitter for GpFitter {
    fn fit(&self, xs: &[Vec<f64>], ys: &[f64], _seed: u64) -> Result<Box<dyn Surrogate>> {
        let points: Vec<(Vec<f64>, f64)> = xs.iter().cloned().zip(ys.iter().copied()).collect();
        Ok(Box::new(gp_fit(&points, &self.kernel, self.noise_var)?))
    }
}
