//! Discrete-event simulation: the M/M/1 age oracle and the delay comparison
//! of placement strategies.

pub mod delay;
pub mod events;
pub mod mm1;

pub use delay::{
    compose_delay, generate_scenario, simulate_delay_comparison, subnet_delays, DelayComparison,
    DelaySample, PlacementChoice, ScenarioConfig, Strategy, StrategySeries, Subnet,
};
pub use events::EventQueue;
pub use mm1::{horizon_for, replicate_mm1_aoi, simulate_fcfs, simulate_mm1_aoi, AoiSample, Job};
