//! Command configuration schemas.

use lresnet_core::config::{ReferenceSpec, TargetSpec};
use lresnet_core::training::TrainSpec;
use serde::{Deserialize, Serialize};

/// Chain parameters as stored in config files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ChainSettings {
    pub step_size: f64,
    pub steps: usize,
    pub particles: usize,
    pub seed: u64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            step_size: 0.02,
            steps: 200,
            particles: 10_000,
            seed: 1,
        }
    }
}

/// Drift used by the `sample` command: the exact `-∇V` or a trained stack.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Exact,
    Stack { dir: String },
}

impl Default for DriftSpec {
    fn default() -> Self {
        DriftSpec::Exact
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SampleConfig {
    pub target: TargetSpec,
    pub reference: ReferenceSpec,
    pub chain: ChainSettings,
    pub drift: DriftSpec,
    /// Write every this many steps (step 0 and the final step always).
    pub record_every: usize,
    /// Also write a gzip copy of the trajectory.
    pub gzip: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            target: TargetSpec::default_gaussian(),
            reference: ReferenceSpec::StandardNormal,
            chain: ChainSettings::default(),
            drift: DriftSpec::Exact,
            record_every: 1,
            gzip: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub target: TargetSpec,
    pub reference: ReferenceSpec,
    pub train: TrainSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            target: TargetSpec::default_gaussian(),
            reference: ReferenceSpec::StandardNormal,
            train: TrainSpec::default(),
            seed: 1,
        }
    }
}

/// Sweep request for the `bounds` command.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "key", rename_all = "snake_case")]
pub enum SweepSpec {
    K { from: usize, to: usize },
    H { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct BoundsConfig {
    pub h: f64,
    pub m: f64,
    pub big_m: f64,
    pub d: usize,
    pub k: usize,
    pub w2_init: f64,
    pub eps: f64,
    pub sweep: Option<SweepSpec>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            h: 0.02,
            m: 1.0,
            big_m: 1.0,
            d: 10,
            k: 200,
            w2_init: 1.0,
            eps: 0.0,
            sweep: None,
        }
    }
}

/// Construction request for the `construct` command.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstructConfig {
    Identity {
        d: usize,
    },
    L1 {
        d: usize,
    },
    Indicator {
        d: usize,
        r: f64,
        delta: f64,
    },
    /// Clamp of a serialized network to `[-c_i, c_i]` per output.
    Cutoff {
        net_path: String,
        c: Vec<f64>,
    },
    Mult {
        m: f64,
        eps: f64,
    },
    ElementwiseMult {
        d: usize,
        scalar_range: [f64; 2],
        vector_range: [f64; 2],
        eps: f64,
    },
    LinearDrift {
        d: usize,
        m: f64,
    },
    /// Composite drift over an optional serialized local residual network
    /// (a zero residual when omitted, i.e. the quadratic-potential case).
    Composite {
        d: usize,
        r: f64,
        m: f64,
        big_m: f64,
        eps: f64,
        local_net_path: Option<String>,
    },
}
