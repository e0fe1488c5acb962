//! End-to-end delay of sensed updates under different placement strategies.
//!
//! Per update, the delay is the time until some sensor detects the event
//! (whole sensing periods of misses), plus acoustic propagation from the
//! closest detecting sensor, plus the M/M/1 system time of the update at the
//! subnet's sink. Queue arrivals and services come from a stream shared by
//! all strategies, so strategies differ only through their layouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mm1::simulate_fcfs;
use crate::aoi::QueueParams;
use crate::error::{domain, Result};
use crate::optimizer::{optimize_placement, placement_space, BoConfig, Dimension, PlacementProblem};
use crate::sensing::{layout_detection, SensorLayout};

/// Safety cap on missed sensing periods for a single update.
const MAX_MISSED_PERIODS: u32 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub subnets: usize,
    pub nodes_per_subnet: usize,
    pub sound_speed_mps: f64,
    pub sim_horizon: f64,
    pub sensing_period_s: f64,
    /// Spacing of the fixed K=2 baseline.
    pub baseline_spacing_m: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            subnets: 4,
            nodes_per_subnet: 50,
            sound_speed_mps: 1500.0,
            sim_horizon: 2000.0,
            sensing_period_s: 1.0,
            baseline_spacing_m: 5.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subnets == 0 || self.nodes_per_subnet == 0 {
            return Err(domain(format!(
                "subnets and nodes per subnet must be >= 1 (got {}, {})",
                self.subnets, self.nodes_per_subnet
            )));
        }
        for (name, v) in [
            ("horizon", self.sim_horizon),
            ("sound speed", self.sound_speed_mps),
            ("sensing period", self.sensing_period_s),
            ("baseline spacing", self.baseline_spacing_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subnet {
    pub index: usize,
    pub max_nodes: usize,
    pub queue_seed: u64,
    pub detect_seed: u64,
    pub placement_seed: u64,
}

fn mix(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined value.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lays out the subnets and their independent random streams.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Vec<Subnet>> {
    config.validate()?;
    Ok((0..config.subnets)
        .map(|i| {
            let base = mix(config.seed, i as u64 + 1);
            Subnet {
                index: i,
                max_nodes: config.nodes_per_subnet,
                queue_seed: mix(base, 1),
                detect_seed: mix(base, 2),
                placement_seed: mix(base, 3),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Optimized,
    Random,
    Fixed,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Self::Optimized, Self::Random, Self::Fixed];

    pub fn label(self) -> &'static str {
        match self {
            Self::Optimized => "optimized",
            Self::Random => "random",
            Self::Fixed => "fixed",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimized" => Ok(Self::Optimized),
            "random" => Ok(Self::Random),
            "fixed" => Ok(Self::Fixed),
            other => Err(domain(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySample {
    pub subnet: usize,
    pub generated_at: f64,
    pub detection_wait: f64,
    pub propagation: f64,
    pub system_time: f64,
    pub delay: f64,
}

/// `delay = detection wait + distance / sound speed + system time`.
pub fn compose_delay(detection_wait: f64, distance_m: f64, sound_speed_mps: f64, system_time: f64) -> f64 {
    detection_wait + distance_m / sound_speed_mps + system_time
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementChoice {
    pub subnet: usize,
    pub count: usize,
    pub spacing_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySeries {
    pub strategy: Strategy,
    pub placements: Vec<PlacementChoice>,
    pub samples: Vec<DelaySample>,
    pub mean_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayComparison {
    pub series: Vec<StrategySeries>,
    /// Strategies whose placement failed, with the reason.
    pub skipped: Vec<(Strategy, String)>,
}

impl DelayComparison {
    pub fn get(&self, strategy: Strategy) -> Option<&StrategySeries> {
        self.series.iter().find(|s| s.strategy == strategy)
    }
}

/// Draws the missed-period count and the detecting sensor for one update.
/// Each period, sensor `k` detects independently with probability `p[k]`.
fn detect(p: &[f64], distances: &[f64], rng: &mut ChaCha8Rng) -> Result<(u32, f64)> {
    for missed in 0..MAX_MISSED_PERIODS {
        let mut closest: Option<f64> = None;
        for (&pk, &d) in p.iter().zip(distances) {
            if rng.random::<f64>() < pk {
                closest = Some(closest.map_or(d, |c: f64| c.min(d)));
            }
        }
        if let Some(d) = closest {
            return Ok((missed, d));
        }
    }
    Err(domain(format!("no detection within {MAX_MISSED_PERIODS} sensing periods")))
}

/// Delay samples of one subnet for a given layout and per-sensor detection
/// probabilities per period.
pub fn subnet_delays(
    subnet: &Subnet,
    queue: &QueueParams,
    scenario: &ScenarioConfig,
    distances: &[f64],
    per_period: &[f64],
) -> Result<Vec<DelaySample>> {
    if distances.is_empty() || distances.len() != per_period.len() {
        return Err(domain("layout and detection probabilities must be nonempty and aligned"));
    }
    if per_period.iter().all(|&p| p <= 0.0) {
        return Err(domain("layout can never detect the event"));
    }
    let mut queue_rng = ChaCha8Rng::seed_from_u64(subnet.queue_seed);
    let jobs = simulate_fcfs(queue.lambda, queue.mu, scenario.sim_horizon, &mut queue_rng)?;
    let mut detect_rng = ChaCha8Rng::seed_from_u64(subnet.detect_seed);
    jobs.iter()
        .map(|job| {
            let (missed, distance) = detect(per_period, distances, &mut detect_rng)?;
            let wait = missed as f64 * scenario.sensing_period_s;
            let propagation = distance / scenario.sound_speed_mps;
            Ok(DelaySample {
                subnet: subnet.index,
                generated_at: job.arrival,
                detection_wait: wait,
                propagation,
                system_time: job.system_time(),
                delay: compose_delay(wait, distance, scenario.sound_speed_mps, job.system_time()),
            })
        })
        .collect()
}

fn per_period_probabilities(problem: &PlacementProblem, layout: &SensorLayout) -> Result<Vec<f64>> {
    let pr = layout_detection(layout, problem.params.decay, &problem.ctx)?;
    Ok(pr
        .iter()
        .zip(layout.efficiencies())
        .map(|(p, e)| problem.params.gamma_wake * e * p)
        .collect())
}

fn spacing_bounds(bo: &BoConfig) -> Result<(usize, f64, f64)> {
    match bo.bounds.dims() {
        [Dimension::Integer { hi, .. }, Dimension::Continuous { lo, hi: s_hi }] => {
            Ok(((*hi).max(1) as usize, *lo, *s_hi))
        }
        _ => Err(domain("placement bounds must be (integer K, continuous spacing)")),
    }
}

fn placements(
    strategy: Strategy,
    subnets: &[Subnet],
    scenario: &ScenarioConfig,
    problem: &PlacementProblem,
    bo: &BoConfig,
) -> Result<Vec<PlacementChoice>> {
    let (k_hi, s_lo, s_hi) = spacing_bounds(bo)?;
    let k_hi = k_hi.min(scenario.nodes_per_subnet);
    match strategy {
        Strategy::Optimized => {
            let mut cfg = bo.clone();
            cfg.bounds = placement_space(1, k_hi, s_lo, s_hi)?;
            cfg.seed = mix(scenario.seed, 0xB0);
            let trace = optimize_placement(problem, &cfg)?;
            let (count, spacing_m) = (trace.best_input[0] as usize, trace.best_input[1]);
            Ok(subnets
                .iter()
                .map(|s| PlacementChoice {
                    subnet: s.index,
                    count,
                    spacing_m,
                })
                .collect())
        }
        Strategy::Random => Ok(subnets
            .iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s.placement_seed);
                let count = rng.random_range(1..=k_hi.min(s.max_nodes));
                let spacing_m = if s_hi > s_lo { rng.random_range(s_lo..s_hi) } else { s_lo };
                PlacementChoice {
                    subnet: s.index,
                    count,
                    spacing_m,
                }
            })
            .collect()),
        Strategy::Fixed => Ok(subnets
            .iter()
            .map(|s| PlacementChoice {
                subnet: s.index,
                count: 2,
                spacing_m: scenario.baseline_spacing_m,
            })
            .collect()),
    }
}

fn run_strategy(
    strategy: Strategy,
    subnets: &[Subnet],
    scenario: &ScenarioConfig,
    queue: &QueueParams,
    problem: &PlacementProblem,
    bo: &BoConfig,
) -> Result<StrategySeries> {
    let choices = placements(strategy, subnets, scenario, problem, bo)?;
    let mut samples = Vec::new();
    for (subnet, choice) in subnets.iter().zip(&choices) {
        let layout = problem.layout(choice.count, choice.spacing_m)?;
        let p = per_period_probabilities(problem, &layout)?;
        samples.extend(subnet_delays(subnet, queue, scenario, layout.distances_m(), &p)?);
    }
    if samples.is_empty() {
        return Err(domain("no update departed within the horizon"));
    }
    let mean_delay = samples.iter().map(|s| s.delay).sum::<f64>() / samples.len() as f64;
    Ok(StrategySeries {
        strategy,
        placements: choices,
        samples,
        mean_delay,
    })
}

/// Runs each requested strategy on the same scenario. A strategy whose
/// placement or simulation fails is reported in `skipped`.
pub fn simulate_delay_comparison(
    scenario: &ScenarioConfig,
    queue: &QueueParams,
    problem: &PlacementProblem,
    bo: &BoConfig,
    strategies: &[Strategy],
) -> Result<DelayComparison> {
    if strategies.is_empty() {
        return Err(domain("at least one strategy is required"));
    }
    queue.validate()?;
    let subnets = generate_scenario(scenario)?;
    let mut out = DelayComparison {
        series: Vec::new(),
        skipped: Vec::new(),
    };
    for &strategy in strategies {
        match run_strategy(strategy, &subnets, scenario, queue, problem, bo) {
            Ok(series) => out.series.push(series),
            Err(e) => out.skipped.push((strategy, e.to_string())),
        }
    }
    Ok(out)
}
