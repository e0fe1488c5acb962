//! Expected Improvement and its adaptive-threshold variant.
//!
//! Everything here is written for minimization: improvement over a threshold
//! `c` is `max(c - Y, 0)` for the surrogate's Gaussian belief `Y`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form `E[max(c - Y, 0)]` for `Y ~ N(mean, std^2)`.
pub fn ei(mean: f64, std: f64, c: f64) -> Result<f64> {
    if !(mean.is_finite() && std.is_finite() && c.is_finite()) {
        return Err(domain(format!(
            "expected improvement needs finite inputs, got mean={mean} std={std} c={c}"
        )));
    }
    if std < 0.0 {
        return Err(domain(format!("posterior std must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok((c - mean).max(0.0));
    }
    let z = (c - mean) / std;
    Ok((std * (z * std_normal_cdf(z) + std_normal_pdf(z))).max(0.0))
}

/// Expected Improvement against the adaptive threshold `c_t` of `state`.
pub fn aei(mean: f64, std: f64, state: &AcquisitionState) -> Result<f64> {
    ei(mean, std, state.threshold())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    Ei,
    #[default]
    Aei,
}

impl std::str::FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ei" => Ok(Self::Ei),
            "aei" => Ok(Self::Aei),
            other => Err(domain(format!("unknown acquisition `{other}`"))),
        }
    }
}

impl std::fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ei => "ei",
            Self::Aei => "aei",
        })
    }
}

/// One feedback step: surrogate prediction, observed value, and their gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub predicted: f64,
    pub actual: f64,
    pub delta: f64,
}

/// Adaptive threshold `c_t = c + phi_t`.
///
/// `c` is the baseline threshold (the optimizer moves it to the best observed
/// value); `phi_t` accumulates `omega * delta_t` for every discrepancy above
/// `delta_gate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionState {
    base: f64,
    shift: f64,
    omega: f64,
    delta_gate: f64,
    history: Vec<Discrepancy>,
}

impl AcquisitionState {
    pub fn new(c: f64, omega: f64, delta_gate: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(domain(format!("threshold must be finite, got {c}")));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(domain(format!("recalibration factor must be >= 0, got {omega}")));
        }
        if !(delta_gate.is_finite() && delta_gate >= 0.0) {
            return Err(domain(format!("discrepancy gate must be >= 0, got {delta_gate}")));
        }
        Ok(Self {
            base: c,
            shift: 0.0,
            omega,
            delta_gate,
            history: Vec::new(),
        })
    }

    /// Current threshold `c_t`.
    pub fn threshold(&self) -> f64 {
        self.base + self.shift
    }

    /// Accumulated adjustment `c_t - c`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn delta_gate(&self) -> f64 {
        self.delta_gate
    }

    pub fn history(&self) -> &[Discrepancy] {
        &self.history
    }

    /// Moves the baseline `c`, keeping the accumulated adjustment.
    pub fn rebase(&mut self, c: f64) {
        self.base = c;
    }

    /// Drops the accumulated adjustment and restarts from `c`.
    pub fn reset(&mut self, c: f64) {
        self.base = c;
        self.shift = 0.0;
    }

    /// Feeds back one (predicted, actual) pair. Returns `delta_t`.
    pub fn recalibrate(&mut self, predicted: f64, actual: f64) -> Result<f64> {
        if !(predicted.is_finite() && actual.is_finite()) {
            return Err(domain(format!(
                "recalibration needs finite values, got predicted={predicted} actual={actual}"
            )));
        }
        let delta = (predicted - actual).abs();
        if delta > self.delta_gate {
            self.shift += self.omega * delta;
        }
        self.history.push(Discrepancy {
            predicted,
            actual,
            delta,
        });
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_std_cases() {
        assert_eq!(ei(1.0, 0.0, 0.5).unwrap(), 0.0);
        assert_eq!(ei(0.5, 0.0, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(ei(0.2, 0.0, 0.5).unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn at_threshold_ei_is_pdf_at_zero() {
        assert_abs_diff_eq!(ei(0.7, 1.0, 0.7).unwrap(), 0.398_942_28, epsilon = 1e-8);
        let state = AcquisitionState::new(0.7, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(aei(0.7, 1.0, &state).unwrap(), 0.398_942_28, epsilon = 1e-8);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        assert!(ei(f64::NAN, 1.0, 0.0).is_err());
        assert!(ei(0.0, f64::INFINITY, 0.0).is_err());
        assert!(ei(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn recalibration_steps() {
        let mut s = AcquisitionState::new(0.5, 0.1, 0.0).unwrap();
        let d = s.recalibrate(0.9, 0.7).unwrap();
        assert_abs_diff_eq!(d, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.threshold(), 0.52, epsilon = 1e-12);

        let mut frozen = AcquisitionState::new(0.5, 0.0, 0.0).unwrap();
        for (p, a) in [(0.1, 0.9), (3.0, -2.0)] {
            frozen.recalibrate(p, a).unwrap();
        }
        assert_eq!(frozen.threshold(), 0.5);
        assert_eq!(frozen.history().len(), 2);

        let mut gated = AcquisitionState::new(0.5, 0.1, 0.3).unwrap();
        gated.recalibrate(0.9, 0.7).unwrap();
        assert_eq!(gated.threshold(), 0.5);
        assert_eq!(gated.history().len(), 1);
        assert!(gated.recalibrate(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn rebase_keeps_shift_and_reset_drops_it() {
        let mut s = AcquisitionState::new(1.0, 0.5, 0.0).unwrap();
        s.recalibrate(1.0, 0.0).unwrap();
        assert_eq!(s.threshold(), 1.5);
        s.rebase(0.2);
        assert_eq!(s.threshold(), 0.7);
        s.reset(0.1);
        assert_eq!(s.threshold(), 0.1);
    }

    #[test]
    fn fresh_state_reduces_to_ei() {
        let s = AcquisitionState::new(0.3, 0.1, 0.01).unwrap();
        for (m, sd) in [(0.0, 0.1), (0.3, 0.5), (1.0, 0.2), (0.29, 0.0)] {
            assert_eq!(aei(m, sd, &s).unwrap(), ei(m, sd, 0.3).unwrap());
        }
    }

    proptest! {
        #[test]
        fn ei_nonnegative_and_monotone(
            mean in -5.0..5.0f64,
            std in 0.0..3.0f64,
            c in -5.0..5.0f64,
            dc in 0.0..2.0f64,
            ds in 0.0..2.0f64,
        ) {
            let base = ei(mean, std, c).unwrap();
            prop_assert!(base >= 0.0);
            let tol = 1e-13 * base.max(1.0);
            prop_assert!(ei(mean, std, c + dc).unwrap() >= base - tol);
            if mean <= c {
                prop_assert!(ei(mean, std + ds, c).unwrap() >= base - tol);
            }
        }

        #[test]
        fn raised_threshold_never_lowers_aei(
            mean in -2.0..2.0f64,
            std in 0.0..2.0f64,
            deltas in proptest::collection::vec(0.0..1.0f64, 1..10),
        ) {
            let mut s = AcquisitionState::new(0.0, 0.2, 0.0).unwrap();
            let mut last = s.threshold();
            for d in deltas {
                s.recalibrate(d, 0.0).unwrap();
                prop_assert!(s.threshold() >= last);
                last = s.threshold();
            }
            prop_assert!(aei(mean, std, &s).unwrap() >= ei(mean, std, 0.0).unwrap());
        }
    }
}
