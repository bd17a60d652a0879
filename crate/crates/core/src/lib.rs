//! # lresnet-core
//!
//! Sampling from smooth log-concave targets with Langevin Monte Carlo (LMC)
//! and with ResNet-like stacks of small ReLU drift networks.
//!
//! The crate provides:
//!
//! * [`nn`] — explicit fully connected ReLU networks with weight-level
//!   combinators (sum, parallelization, concatenation, last-layer scaling)
//!   and a JSON wire format,
//! * [`construct`] — closed-form network constructions (identity, `ℓ¹`-norm,
//!   indicator ramp, clamp/cutoff, Yarotsky-style multiplication, element-wise
//!   multiplication, linear drift, and the composite drift network with global
//!   linear error growth),
//! * [`langevin`] — exact and network-driven LMC chains over particle clouds,
//!   the ResNet-like realization, and synchronous coupling diagnostics,
//! * [`targets`] — Gaussian and Gaussian-mixture potentials with analytic
//!   gradients and exact samplers,
//! * [`bounds`] — Wasserstein-2 convergence bounds, sub-Gaussian
//!   variance-proxy recursions, domain radii, and the sphere-averaged
//!   Lyapunov function,
//! * [`transport`] — log-domain Sinkhorn divergence and an exact
//!   assignment-based empirical Wasserstein-2 oracle,
//! * [`training`] — a from-scratch MLP regression trainer (backprop + Adam)
//!   and the staged per-step drift-training pipeline,
//! * [`experiment`] — the reproducible experiment driver producing
//!   divergence-curve artifacts.
//!
//! All numerical state is `f64`; networks are immutable after construction
//! and safe to share across threads.

pub mod bounds;
pub mod config;
pub mod construct;
pub mod experiment;
pub mod langevin;
pub(crate) mod linalg;
pub mod nn;
pub mod seed;
pub mod targets;
pub mod training;
pub mod transport;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimension mismatch between operands.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar or array argument violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Non-finite value encountered (weights, inputs, or diverged chain).
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A chain state exceeded the blow-up guard.
    #[error("numeric abort at step {step}: {message}")]
    NumericAbort { step: usize, message: String },

    /// Matrix is not symmetric positive definite.
    #[error("matrix not symmetric positive definite: {0}")]
    NotSpd(String),

    /// Training produced a non-finite loss.
    #[error("training abort at step {k}, epoch {epoch}: non-finite loss")]
    TrainingAbort { k: usize, epoch: usize },

    /// Malformed serialized artifact.
    #[error("serialization: {0}")]
    Serialization(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
