//! Probabilistic stand-ins for the black-box objectives.
//!
//! Both surrogates expose a predictive mean and variance through
//! [`Surrogate`]; the optimizer only sees that trait, so the GP and the MLP
//! are interchangeable inside the same loop.

pub mod gp;
pub mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub use gp::{gp_fit, gp_predict, GpFitter, GpModel, KernelConfig, SquaredExponential};
pub use mlp::{mlp_fit, mlp_predict, MlpConfig, MlpFitter, MlpSurrogate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// A fitted model. Fitted models are immutable and shared across the
/// candidate-scoring workers.
pub trait Surrogate: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<Prediction>;
}

/// Builds a fresh surrogate from the observations gathered so far.
pub trait SurrogateFitter: Send + Sync {
    fn fit(&self, xs: &[Vec<f64>], ys: &[f64], seed: u64) -> Result<Box<dyn Surrogate>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateKind {
    #[default]
    Gp,
    Mlp,
}

impl std::str::FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gp" => Ok(Self::Gp),
            "mlp" => Ok(Self::Mlp),
            other => Err(domain(format!("unknown surrogate `{other}`"))),
        }
    }
}

impl std::fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gp => "gp",
            Self::Mlp => "mlp",
        })
    }
}

/// Current snapshot document version.
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSnapshot {
    Gp(gp::GpSnapshot),
    Mlp(Box<MlpSurrogate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SnapshotDocument {
    format_version: u32,
    model: ModelSnapshot,
}

impl ModelSnapshot {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&SnapshotDocument {
            format_version: SNAPSHOT_VERSION,
            model: self.clone(),
        })
        .map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SnapshotDocument =
            serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        if doc.format_version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc.model)
    }

    /// Rebuilds a ready-to-use surrogate.
    pub fn restore(&self) -> Result<Box<dyn Surrogate>> {
        match self {
            Self::Gp(s) => Ok(Box::new(GpModel::from_snapshot(s)?)),
            Self::Mlp(m) => Ok(Box::new((**m).clone())),
        }
    }
}
