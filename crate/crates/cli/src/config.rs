//! Run configuration: TOML sections per module, every field optional in the
//! file, defaults matching the reference experiment setup.

use std::path::Path;

use aquaplan::acquisition::AcquisitionKind;
use aquaplan::aoi::{QueueParams, SensingConfig};
use aquaplan::channel::ChannelParams;
use aquaplan::optimizer::{placement_space, BoConfig, Dimension, DriftConfig, PlacementProblem, SearchSpace};
use aquaplan::sensing::{AttenuationScale, DetectionContext, SensorTemplate, SpacingStrategy, WakeupParams};
use aquaplan::simkit::{ScenarioConfig, Strategy};
use aquaplan::surrogate::{MlpConfig, SurrogateKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub a0_db: f64,
    pub zeta: f64,
    pub freq_khz: f64,
    /// `db` or `linear`.
    pub scale: String,
    /// Distance sweep of the `channel` command, in metres.
    pub max_distance_m: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            a0_db: 0.0,
            zeta: 1.5,
            freq_khz: 10.0,
            scale: "db".into(),
            max_distance_m: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingSection {
    /// Sensor count of the reference layout.
    pub k: usize,
    pub first_m: f64,
    pub spacing_m: f64,
    pub boundary_m: f64,
    pub efficiency: f64,
    pub gamma_wake: f64,
    pub gamma_cap: f64,
    pub delta: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub spacing_min_m: f64,
    pub spacing_max_m: f64,
    /// Span the `sense` command spreads K sensors over.
    pub p1_d_min: f64,
    pub p1_d_max: f64,
}

impl Default for SensingSection {
    fn default() -> Self {
        Self {
            k: 2,
            first_m: 2.0,
            spacing_m: 5.0,
            boundary_m: 5.0,
            efficiency: 0.9,
            gamma_wake: 0.9,
            gamma_cap: 1.0,
            delta: 0.6,
            k_min: 1,
            k_max: 50,
            spacing_min_m: 0.5,
            spacing_max_m: 20.0,
            p1_d_min: 1.0,
            p1_d_max: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueSection {
    pub lambda: f64,
    pub mu: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

impl Default for QueueSection {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            mu: 1.0,
            m: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoSection {
    pub n_init: usize,
    pub batch: usize,
    pub iters: usize,
    pub surrogate: SurrogateKind,
    pub acq: AcquisitionKind,
    pub omega: f64,
    pub gate_factor: f64,
    pub noise_var: f64,
    /// Rate search box as fractions of mu.
    pub rate_lo_frac: f64,
    pub rate_hi_frac: f64,
    pub mlp_epochs: usize,
    pub drift: bool,
    pub drift_every: usize,
    pub drift_rel: f64,
    /// Seeds per variant in `compare`.
    pub compare_seeds: usize,
    pub compare_mlp: bool,
}

impl Default for BoSection {
    fn default() -> Self {
        Self {
            n_init: 10,
            batch: 100,
            iters: 40,
            surrogate: SurrogateKind::Gp,
            acq: AcquisitionKind::Aei,
            omega: 0.1,
            gate_factor: 0.05,
            noise_var: 1e-6,
            rate_lo_frac: 0.05,
            rate_hi_frac: 0.95,
            mlp_epochs: 300,
            drift: false,
            drift_every: 5,
            drift_rel: 0.05,
            compare_seeds: 10,
            compare_mlp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub subnets: usize,
    pub nodes_per_subnet: usize,
    pub sound_speed_mps: f64,
    pub sim_horizon: f64,
    pub sensing_period_s: f64,
    pub strategies: Vec<Strategy>,
    /// Measured departures per `simulate --kind mm1` replication.
    pub departures: f64,
    pub replications: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            subnets: 4,
            nodes_per_subnet: 50,
            sound_speed_mps: 1500.0,
            sim_horizon: 2000.0,
            sensing_period_s: 1.0,
            strategies: Strategy::ALL.to_vec(),
            departures: 1e5,
            replications: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub channel: ChannelSection,
    pub sensing: SensingSection,
    pub queue: QueueSection,
    pub bo: BoSection,
    pub scenario: ScenarioSection,
}

/// Values given on the command line; each one replaces its config field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub m: Option<f64>,
    pub gamma_wake: Option<f64>,
    pub delta: Option<f64>,
    pub k: Option<usize>,
    pub freq_khz: Option<f64>,
    pub zeta: Option<f64>,
    pub iters: Option<usize>,
    pub surrogate: Option<SurrogateKind>,
    pub acq: Option<AcquisitionKind>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(o.seed => self.seed);
        set!(o.lambda => self.queue.lambda);
        set!(o.mu => self.queue.mu);
        set!(o.m => self.queue.m);
        set!(o.gamma_wake => self.sensing.gamma_wake);
        set!(o.delta => self.sensing.delta);
        set!(o.k => self.sensing.k);
        set!(o.freq_khz => self.channel.freq_khz);
        set!(o.zeta => self.channel.zeta);
        set!(o.iters => self.bo.iters);
        set!(o.surrogate => self.bo.surrogate);
        set!(o.acq => self.bo.acq);
    }

    pub fn channel_params(&self) -> aquaplan::Result<ChannelParams> {
        ChannelParams::new(self.channel.a0_db, self.channel.zeta, self.channel.freq_khz)
    }

    pub fn detection_context(&self) -> aquaplan::Result<DetectionContext> {
        let scale: AttenuationScale = self.channel.scale.parse()?;
        Ok(DetectionContext::new(self.channel_params()?, scale))
    }

    pub fn wakeup(&self) -> aquaplan::Result<WakeupParams> {
        WakeupParams::new(self.sensing.gamma_wake, self.sensing.gamma_cap, self.sensing.delta)
    }

    pub fn template(&self) -> SensorTemplate {
        SensorTemplate {
            boundary_m: self.sensing.boundary_m,
            efficiency: self.sensing.efficiency,
        }
    }

    pub fn queue_params(&self) -> aquaplan::Result<QueueParams> {
        QueueParams::new(self.queue.lambda, self.queue.mu, self.queue.m)
    }

    pub fn p1_spacing(&self) -> SpacingStrategy {
        SpacingStrategy::Uniform {
            d_min: self.sensing.p1_d_min,
            d_max: self.sensing.p1_d_max,
        }
    }

    pub fn placement_problem(&self) -> aquaplan::Result<PlacementProblem> {
        Ok(PlacementProblem {
            first_m: self.sensing.first_m,
            template: self.template(),
            params: self.wakeup()?,
            ctx: self.detection_context()?,
        })
    }

    /// Reference layout: `k` sensors from `first_m`, `spacing_m` apart.
    pub fn sensing_config(&self) -> aquaplan::Result<SensingConfig> {
        let problem = self.placement_problem()?;
        Ok(SensingConfig {
            layout: problem.layout(self.sensing.k, self.sensing.spacing_m)?,
            decay: self.sensing.delta,
            ctx: problem.ctx,
        })
    }

    fn bo_config(&self, bounds: SearchSpace) -> BoConfig {
        let b = &self.bo;
        let mut c = BoConfig::new(bounds);
        c.n_init = b.n_init;
        c.batch = b.batch;
        c.iters = b.iters;
        c.seed = self.seed;
        c.surrogate_kind = b.surrogate;
        c.acquisition_kind = b.acq;
        c.omega = b.omega;
        c.gate_factor = b.gate_factor;
        c.noise_var = b.noise_var;
        c.mlp = MlpConfig {
            epochs: b.mlp_epochs,
            ..MlpConfig::default()
        };
        c.drift = b.drift.then_some(DriftConfig {
            every: b.drift_every,
            rel_change: b.drift_rel,
        });
        c
    }

    pub fn rate_bo(&self) -> aquaplan::Result<BoConfig> {
        let mu = self.queue.mu;
        let bounds = SearchSpace::new(vec![Dimension::Continuous {
            lo: self.bo.rate_lo_frac * mu,
            hi: self.bo.rate_hi_frac * mu,
        }])?;
        Ok(self.bo_config(bounds))
    }

    pub fn placement_bo(&self) -> aquaplan::Result<BoConfig> {
        let s = &self.sensing;
        Ok(self.bo_config(placement_space(s.k_min, s.k_max, s.spacing_min_m, s.spacing_max_m)?))
    }

    pub fn scenario(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            subnets: s.subnets,
            nodes_per_subnet: s.nodes_per_subnet,
            sound_speed_mps: s.sound_speed_mps,
            sim_horizon: s.sim_horizon,
            sensing_period_s: s.sensing_period_s,
            baseline_spacing_m: self.sensing.spacing_m,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.bo.iters, 40);
        assert_eq!(c.queue.m, 5.0);
    }

    #[test]
    fn sections_override_and_round_trip() {
        let c = RunConfig::parse("seed = 4\n[queue]\nlambda = 0.5\nM = 2.0\n[bo]\nsurrogate = \"mlp\"\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.queue.lambda, 0.5);
        assert_eq!(c.queue.m, 2.0);
        assert_eq!(c.bo.surrogate, SurrogateKind::Mlp);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[queue]\nlamda = 0.5\n").is_err());
        assert!(RunConfig::parse("[bo]\nacq = \"ucb\"\n").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let mut c = RunConfig::parse("[queue]\nlambda = 0.5\n").unwrap();
        c.apply(&Overrides {
            lambda: Some(0.3),
            iters: Some(5),
            ..Default::default()
        });
        assert_eq!(c.queue.lambda, 0.3);
        assert_eq!(c.bo.iters, 5);
    }
}
