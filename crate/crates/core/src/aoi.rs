//! Age-of-Information analytics for an M/M/1 FCFS status-update queue and the
//! semantic objective `r = pi_s * Pr(X = k)` built on top of it.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::sensing::{detection_probability, DetectionContext, SensorLayout};

const SINGULARITY_GUARD: f64 = 1e-9;
const CLAMP_TOLERANCE: f64 = 1e-12;

/// Arrival rate, service rate and AoI threshold `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    pub lambda: f64,
    pub mu: f64,
    pub threshold_m: f64,
}

impl Default for QueueParams {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            mu: 1.0,
            threshold_m: 5.0,
        }
    }
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64, threshold_m: f64) -> Result<Self> {
        let q = Self {
            lambda,
            mu,
            threshold_m,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(domain(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(domain(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.threshold_m >= 0.0) {
            return Err(domain(format!("threshold M must be >= 0, got {}", self.threshold_m)));
        }
        if self.lambda >= self.mu {
            return Err(Error::Unstable {
                lambda: self.lambda,
                mu: self.mu,
            });
        }
        let gap = self.mu - self.lambda;
        if gap <= SINGULARITY_GUARD {
            return Err(Error::Singular { gap });
        }
        Ok(())
    }
}

/// Stationary probability that the age exceeds `M`:
///
/// ```text
/// e^{-(mu-lambda)M} + (mu/(lambda-mu) - lambda M) e^{-mu M} - mu/(lambda-mu) e^{-lambda M}
/// ```
///
/// The two `mu/(lambda-mu)` terms are combined through `expm1` so that the
/// cancellation near `lambda ~ mu` does not lose precision.
pub fn aoi_violation(params: &QueueParams) -> Result<f64> {
    params.validate()?;
    let QueueParams {
        lambda,
        mu,
        threshold_m: m,
    } = *params;
    if m.is_infinite() {
        return Ok(0.0);
    }
    let gap = mu - lambda;
    // mu/(lambda-mu) * (e^{-mu M} - e^{-lambda M}) = mu e^{-lambda M} (1 - e^{-gap M}) / gap
    let paired = mu * (-lambda * m).exp() * -(-gap * m).exp_m1() / gap;
    let value = (-gap * m).exp() - lambda * m * (-mu * m).exp() + paired;
    clamp_probability(value, "aoi violation")
}

fn clamp_probability(value: f64, what: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else if value < 0.0 && value >= -CLAMP_TOLERANCE {
        Ok(0.0)
    } else if value > 1.0 && value <= 1.0 + CLAMP_TOLERANCE {
        Ok(1.0)
    } else {
        Err(Error::Internal(format!("{what} evaluated to {value}, outside [0, 1]")))
    }
}

/// Probability that a status carries fresh event information,
/// `pi_s = lambda A_i e^{-lambda A_i}`.
pub fn status_probability(lambda: f64, a_i: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(domain(format!("lambda must be > 0, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&a_i) {
        return Err(domain(format!("violation probability must lie in [0, 1], got {a_i}")));
    }
    let x = lambda * a_i;
    Ok(x * (-x).exp())
}

/// A sensing configuration `X`: layout plus the detection context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub layout: SensorLayout,
    pub decay: f64,
    pub ctx: DetectionContext,
}

/// One evaluation of the semantic objective and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticEvaluation {
    pub lambda: f64,
    pub mu: f64,
    pub threshold_m: f64,
    pub a_i: f64,
    pub pi_s: f64,
    pub pr_detect: f64,
    pub r: f64,
}

/// `r(lambda) = pi_s(lambda, A_i(lambda)) * Pr(X = k)` with `Pr(X = k)` taken
/// at the `k`-th sensor of the configuration.
pub fn semantic_objective(
    lambda: f64,
    queue: &QueueParams,
    k: usize,
    config: &SensingConfig,
) -> Result<SemanticEvaluation> {
    let q = queue.with_lambda(lambda);
    let a_i = aoi_violation(&q)?;
    let pi_s = status_probability(lambda, a_i)?;
    if k == 0 || k > config.layout.len() {
        return Err(domain(format!(
            "sensor index {k} outside layout of {} sensors",
            config.layout.len()
        )));
    }
    let pr_detect = detection_probability(
        k,
        config.layout.distances_m()[k - 1],
        config.layout.boundary_m()[k - 1],
        config.decay,
        &config.ctx,
    )?;
    Ok(SemanticEvaluation {
        lambda,
        mu: q.mu,
        threshold_m: q.threshold_m,
        a_i,
        pi_s,
        pr_detect,
        r: pi_s * pr_detect,
    })
}

/// The triple `(A, r, X)`: recorded violation values, evaluated objective
/// values keyed by configuration and arrival rate, and the configurations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChuSpace {
    configurations: Vec<SensingConfig>,
    violations: Vec<f64>,
    mapping: BTreeMap<(usize, u64), f64>,
    log: Vec<(usize, SemanticEvaluation)>,
}

impl ChuSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_configuration(&mut self, config: SensingConfig) -> usize {
        self.configurations.push(config);
        self.configurations.len() - 1
    }

    pub fn record(&mut self, config_id: usize, eval: SemanticEvaluation) -> Result<()> {
        if config_id >= self.configurations.len() {
            return Err(domain(format!("unknown configuration {config_id}")));
        }
        if !(0.0..=1.0).contains(&eval.r) || !(0.0..=1.0).contains(&eval.a_i) {
            return Err(Error::Internal(format!(
                "refusing to record r = {} / A_i = {} outside [0, 1]",
                eval.r, eval.a_i
            )));
        }
        self.violations.push(eval.a_i);
        self.mapping.insert((config_id, eval.lambda.to_bits()), eval.r);
        self.log.push((config_id, eval));
        Ok(())
    }

    pub fn configurations(&self) -> &[SensingConfig] {
        &self.configurations
    }

    pub fn violations(&self) -> &[f64] {
        &self.violations
    }

    /// Recorded `r` for a configuration at an exact arrival rate.
    pub fn lookup(&self, config_id: usize, lambda: f64) -> Option<f64> {
        self.mapping.get(&(config_id, lambda.to_bits())).copied()
    }

    /// Evaluations in recording order.
    pub fn log(&self) -> &[(usize, SemanticEvaluation)] {
        &self.log
    }
}

/// Black-box rate objective: evaluates `r(lambda)` for a fixed configuration
/// and records every evaluation in a shared [`ChuSpace`].
#[derive(Debug)]
pub struct RateObjective {
    queue: QueueParams,
    k: usize,
    config_id: usize,
    config: SensingConfig,
    space: Mutex<ChuSpace>,
}

impl RateObjective {
    pub fn new(queue: QueueParams, k: usize, config: SensingConfig) -> Result<Self> {
        if k == 0 || k > config.layout.len() {
            return Err(domain(format!(
                "sensor index {k} outside layout of {} sensors",
                config.layout.len()
            )));
        }
        let mut space = ChuSpace::new();
        let config_id = space.add_configuration(config.clone());
        Ok(Self {
            queue,
            k,
            config_id,
            config,
            space: Mutex::new(space),
        })
    }

    pub fn queue(&self) -> &QueueParams {
        &self.queue
    }

    pub fn evaluate(&self, lambda: f64) -> Result<SemanticEvaluation> {
        let eval = semantic_objective(lambda, &self.queue, self.k, &self.config)?;
        self.space
            .lock()
            .map_err(|_| Error::Internal("chu space lock poisoned".into()))?
            .record(self.config_id, eval)?;
        Ok(eval)
    }

    pub fn into_space(self) -> ChuSpace {
        self.space.into_inner().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> ChuSpace {
        self.space.lock().map(|s| s.clone()).unwrap_or_else(|e| e.into_inner().clone())
    }
}
