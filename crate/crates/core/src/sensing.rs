//! Event detection, wake-up expectation and the sensor-count problem (P1).
//!
//! A sensor `k` at distance `d_k` from the point of interest detects with
//! certainty inside its boundary radius. Beyond it, detection follows a
//! Poisson kernel evaluated at `k` with rate `y = 1 / (decay * A_b(f, d_k))`.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::channel::{attenuation_db, ChannelParams};
use crate::error::{domain, Error, Result};

/// How the path attenuation enters the detection rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttenuationScale {
    /// Use the dB value directly.
    #[default]
    Db,
    /// Convert to a linear power ratio, `10^(dB/10)`.
    Linear,
}

impl std::str::FromStr for AttenuationScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "db" => Ok(Self::Db),
            "linear" => Ok(Self::Linear),
            other => Err(domain(format!("unknown attenuation scale `{other}`"))),
        }
    }
}

/// Channel context shared by every detection evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionContext {
    pub channel: ChannelParams,
    pub scale: AttenuationScale,
}

impl DetectionContext {
    pub fn new(channel: ChannelParams, scale: AttenuationScale) -> Self {
        Self { channel, scale }
    }

    /// Attenuation at `distance_m` on the configured scale.
    pub fn attenuation(&self, distance_m: f64) -> Result<f64> {
        let db = attenuation_db(&self.channel, distance_m)?;
        Ok(match self.scale {
            AttenuationScale::Db => db,
            AttenuationScale::Linear => 10f64.powf(db / 10.0),
        })
    }
}

/// Per-sensor geometry: distances to the point of interest, boundary radii and
/// detection efficiencies. The sensor count `K` is the list length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    distances_m: Vec<f64>,
    boundary_m: Vec<f64>,
    efficiencies: Vec<f64>,
}

impl SensorLayout {
    pub fn new(distances_m: Vec<f64>, boundary_m: Vec<f64>, efficiencies: Vec<f64>) -> Result<Self> {
        if distances_m.len() != boundary_m.len() || distances_m.len() != efficiencies.len() {
            return Err(domain(format!(
                "layout lists differ in length: {} distances, {} boundaries, {} efficiencies",
                distances_m.len(),
                boundary_m.len(),
                efficiencies.len()
            )));
        }
        if let Some(d) = distances_m.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(domain(format!("sensor distance must be > 0, got {d}")));
        }
        if let Some(b) = boundary_m.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(domain(format!("boundary radius must be > 0, got {b}")));
        }
        if let Some(e) = efficiencies.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(domain(format!("efficiency must lie in (0, 1], got {e}")));
        }
        Ok(Self {
            distances_m,
            boundary_m,
            efficiencies,
        })
    }

    /// Layout with a shared boundary radius and efficiency for every sensor.
    pub fn uniform(distances_m: Vec<f64>, boundary_m: f64, efficiency: f64) -> Result<Self> {
        let n = distances_m.len();
        Self::new(distances_m, vec![boundary_m; n], vec![efficiency; n])
    }

    /// `count` sensors on a ray from the point of interest: the first at
    /// `first_m`, the rest `spacing_m` apart.
    pub fn evenly_spaced(
        count: usize,
        first_m: f64,
        spacing_m: f64,
        boundary_m: f64,
        efficiency: f64,
    ) -> Result<Self> {
        if !(spacing_m.is_finite() && spacing_m >= 0.0) {
            return Err(domain(format!("spacing must be >= 0, got {spacing_m}")));
        }
        let distances = (0..count).map(|i| first_m + i as f64 * spacing_m).collect();
        Self::uniform(distances, boundary_m, efficiency)
    }

    pub fn len(&self) -> usize {
        self.distances_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances_m.is_empty()
    }

    pub fn distances_m(&self) -> &[f64] {
        &self.distances_m
    }

    pub fn boundary_m(&self) -> &[f64] {
        &self.boundary_m
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }
}

/// Wake-up probability, its P1 ceiling, and the detection decay factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WakeupParams {
    pub gamma_wake: f64,
    pub gamma_cap: f64,
    pub decay: f64,
}

impl WakeupParams {
    /// Checks ranges only; the `gamma_wake <= gamma_cap` constraint is
    /// enforced by [`WakeupParams::check_constraint`].
    pub fn new(gamma_wake: f64, gamma_cap: f64, decay: f64) -> Result<Self> {
        let params = Self {
            gamma_wake,
            gamma_cap,
            decay,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma_wake) {
            return Err(domain(format!("gamma_wake must lie in [0, 1], got {}", self.gamma_wake)));
        }
        if !(0.0..=1.0).contains(&self.gamma_cap) {
            return Err(domain(format!("gamma_cap must lie in [0, 1], got {}", self.gamma_cap)));
        }
        if !(self.decay.is_finite() && self.decay > 0.0) {
            return Err(domain(format!("decay must be > 0, got {}", self.decay)));
        }
        Ok(())
    }

    pub fn check_constraint(&self) -> Result<()> {
        if self.gamma_wake > self.gamma_cap {
            return Err(Error::Constraint {
                gamma_wake: self.gamma_wake,
                gamma_cap: self.gamma_cap,
            });
        }
        Ok(())
    }
}

/// Poisson probability mass at `k` for the given rate.
pub fn poisson_pmf(k: u32, rate: f64) -> f64 {
    if rate == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k <= 20 {
        let mut factorial = 1.0;
        for i in 2..=k {
            factorial *= i as f64;
        }
        rate.powi(k as i32) * (-rate).exp() / factorial
    } else {
        let k = k as f64;
        (k * rate.ln() - rate - ln_gamma(k + 1.0)).exp()
    }
}

/// Probability that sensor `k` (1-based) detects the event.
pub fn detection_probability(
    k: usize,
    distance_m: f64,
    boundary_m: f64,
    decay: f64,
    ctx: &DetectionContext,
) -> Result<f64> {
    if k == 0 {
        return Err(domain("sensor index k starts at 1"));
    }
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(domain(format!("sensor distance must be > 0, got {distance_m}")));
    }
    if !(decay.is_finite() && decay > 0.0) {
        return Err(domain(format!("decay must be > 0, got {decay}")));
    }
    if distance_m < boundary_m {
        return Ok(1.0);
    }
    let attenuation = ctx.attenuation(distance_m)?;
    if !(attenuation > 0.0) {
        return Err(domain(format!(
            "attenuation must be > 0 outside the boundary, got {attenuation} at {distance_m} m"
        )));
    }
    let k = u32::try_from(k).map_err(|_| domain("sensor index too large"))?;
    Ok(poisson_pmf(k, 1.0 / (decay * attenuation)))
}

/// Detection probability of every sensor in the layout, in order.
pub fn layout_detection(
    layout: &SensorLayout,
    decay: f64,
    ctx: &DetectionContext,
) -> Result<Vec<f64>> {
    layout
        .distances_m
        .iter()
        .zip(&layout.boundary_m)
        .enumerate()
        .map(|(i, (&d, &b))| detection_probability(i + 1, d, b, decay, ctx))
        .collect()
}

/// Expected successful detection `E(X)` over the sensors of `layout`.
pub fn wakeup_expectation(
    layout: &SensorLayout,
    params: &WakeupParams,
    ctx: &DetectionContext,
) -> Result<f64> {
    if layout.is_empty() {
        return Err(domain("layout has no sensors"));
    }
    params.validate()?;
    let detection = layout_detection(layout, params.decay, ctx)?;
    Ok(detection
        .iter()
        .zip(&layout.efficiencies)
        .enumerate()
        .map(|(i, (&pr, &eff))| {
            let k = (i + 1) as i32;
            (1.0 - (1.0 - params.gamma_wake * eff).powi(k)) * pr
        })
        .sum())
}

/// How P1 derives sensor distances for a candidate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingStrategy {
    /// `K` sensors equally spaced across `[d_min, d_max]`.
    Uniform { d_min: f64, d_max: f64 },
    /// The first `K` entries of a user-supplied list.
    Explicit(Vec<f64>),
}

impl SpacingStrategy {
    pub fn distances(&self, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(domain("sensor count must be >= 1"));
        }
        match self {
            Self::Uniform { d_min, d_max } => {
                if !(*d_min > 0.0 && d_min <= d_max) {
                    return Err(domain(format!(
                        "uniform spacing needs 0 < d_min <= d_max, got [{d_min}, {d_max}]"
                    )));
                }
                if count == 1 {
                    return Ok(vec![*d_min]);
                }
                let step = (d_max - d_min) / (count - 1) as f64;
                Ok((0..count).map(|i| d_min + i as f64 * step).collect())
            }
            Self::Explicit(list) => list.get(..count).map(<[f64]>::to_vec).ok_or_else(|| {
                domain(format!(
                    "explicit spacing lists {} distances, {count} requested",
                    list.len()
                ))
            }),
        }
    }
}

/// Shared per-sensor properties used when P1 builds candidate layouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorTemplate {
    pub boundary_m: f64,
    pub efficiency: f64,
}

impl Default for SensorTemplate {
    fn default() -> Self {
        Self {
            boundary_m: 5.0,
            efficiency: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Solution {
    pub count: usize,
    pub layout: SensorLayout,
    pub expectation: f64,
    /// `(K, E(X))` for every candidate, ascending in `K`.
    pub candidates: Vec<(usize, f64)>,
}

/// Solves P1: the active sensor count (and its layout) maximizing `E(X)`
/// subject to `gamma_wake <= gamma_cap`.
pub fn solve_p1(
    counts: RangeInclusive<usize>,
    spacing: &SpacingStrategy,
    template: SensorTemplate,
    params: &WakeupParams,
    ctx: &DetectionContext,
) -> Result<P1Solution> {
    params.validate()?;
    params.check_constraint()?;
    if counts.is_empty() || *counts.start() == 0 {
        return Err(domain(format!(
            "candidate count range {}..={} must be nonempty and start at >= 1",
            counts.start(),
            counts.end()
        )));
    }
    let mut evaluated: Vec<(usize, SensorLayout, f64)> = counts
        .into_par_iter()
        .map(|k| {
            let distances = spacing.distances(k)?;
            let layout = SensorLayout::uniform(distances, template.boundary_m, template.efficiency)?;
            let e = wakeup_expectation(&layout, params, ctx)?;
            Ok((k, layout, e))
        })
        .collect::<Result<_>>()?;

    // One layout per K in ascending order: a strict comparison keeps the
    // smallest K on ties.
    let mut best = 0;
    for (i, (_, _, e)) in evaluated.iter().enumerate() {
        if *e > evaluated[best].2 {
            best = i;
        }
    }
    let candidates = evaluated.iter().map(|(k, _, e)| (*k, *e)).collect();
    let (count, layout, expectation) = evaluated.swap_remove(best);
    Ok(P1Solution {
        count,
        layout,
        expectation,
        candidates,
    })
}
