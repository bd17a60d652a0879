//! Langevin Monte Carlo chains over particle clouds.
//!
//! The exact chain applies `X_k = X_{k-1} - h ∇V(X_{k-1}) + ξ_k` with
//! `ξ_k ~ N(0, 2h I)`; the driven chain replaces `-∇V` by per-step drift
//! maps; the ResNet-like realization composes pre-scaled networks
//! `x_i = x_{i-1} + ψ_i(x_{i-1}) + ξ_i`. All three consume noise from the
//! same counter-addressable stream in a fixed order (step-major,
//! particle-minor, coordinate-innermost), so chains are couplable and
//! results do not depend on thread count.

use crate::nn::Fcnn;
use crate::seed::{self, tag};
use crate::targets::{PotentialTarget, ReferenceDistribution};
use crate::{Error, Result};
use ndarray::parallel::prelude::*;
use ndarray::{Array2, ArrayView2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Any coordinate beyond this magnitude aborts the chain.
pub const BLOW_UP_GUARD: f64 = 1e12;

/// Chain parameters. `step_size` must satisfy `h < 2/M` for the supplied
/// target; `h ≥ 2/(m+M)` is allowed (second bound regime) with a warning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub step_size: f64,
    pub steps: usize,
    pub dim: usize,
    pub particles: usize,
    pub seed: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.dim == 0 || self.particles == 0 {
            return Err(Error::InvalidParameter(
                "dimension and particle count must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Enforces `h < 2/M`; warns (does not reject) when `h ≥ 2/(m+M)`.
    pub fn validate_for(&self, target: &PotentialTarget) -> Result<()> {
        self.validate()?;
        if target.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "target has dimension {}, chain expects {}",
                target.dim(),
                self.dim
            )));
        }
        let big_m = target.gradient_lipschitz();
        if big_m > 0.0 && self.step_size >= 2.0 / big_m {
            return Err(Error::InvalidParameter(format!(
                "step size {} violates h < 2/M = {}",
                self.step_size,
                2.0 / big_m
            )));
        }
        let m = target.strong_convexity();
        if big_m > 0.0 && self.step_size >= 2.0 / (m + big_m) {
            log::warn!(
                "step size {} is in the second bound regime (h >= 2/(m+M) = {})",
                self.step_size,
                2.0 / (m + big_m)
            );
        }
        Ok(())
    }
}

/// Counter-addressable Gaussian increments `ξ_k ~ N(0, 2h I)`.
///
/// Draw `(step k, particle i)` is generated by Box–Muller from ChaCha8
/// keystream words at position `((k-1)·n + i) · 4·⌈d/2⌉`, so any entry can
/// be produced independently and particle blocks can be sharded across
/// threads without changing the result.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    particles: usize,
    dim: usize,
    scale: f64,
}

impl NoiseStream {
    pub fn new(seed: u64, particles: usize, dim: usize, step_size: f64) -> Self {
        Self {
            seed: seed::derive(seed, tag::CHAIN_NOISE),
            particles,
            dim,
            scale: (2.0 * step_size).sqrt(),
        }
    }

    /// Noise disabled: every increment is zero (deterministic test mode).
    pub fn disabled(particles: usize, dim: usize) -> Self {
        Self {
            seed: 0,
            particles,
            dim,
            scale: 0.0,
        }
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fills the increment for (1-based) step `k`, particle `i`.
    pub fn fill_increment(&self, step: usize, particle: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        if self.scale == 0.0 {
            out.fill(0.0);
            return;
        }
        let pairs = self.dim.div_ceil(2);
        let index = ((step - 1) * self.particles + particle) as u128;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(index * 4 * pairs as u128);
        for p in 0..pairs {
            let u1 = unit_open(rng.next_u64());
            let u2 = unit_open(rng.next_u64());
            let radius = (-2.0 * u1.ln()).sqrt();
            let angle = std::f64::consts::TAU * u2;
            out[2 * p] = self.scale * radius * angle.cos();
            if 2 * p + 1 < self.dim {
                out[2 * p + 1] = self.scale * radius * angle.sin();
            }
        }
    }

    /// Full `n × d` increment matrix for step `k` (rows in parallel).
    pub fn increment_matrix(&self, step: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.particles, self.dim));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                self.fill_increment(step, i, row.as_slice_mut().unwrap());
            });
        out
    }
}

/// Uniform in (0, 1] from the top 53 bits.
#[inline]
fn unit_open(word: u64) -> f64 {
    ((word >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Largest grid point `kh ≤ s` of the step grid.
pub fn chi(s: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grid step must be positive, got {h}"
        )));
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time must be nonnegative, got {s}"
        )));
    }
    let mut k = (s / h).floor();
    // Correct for rounding in the division so k is the exact floor.
    while (k + 1.0) * h <= s {
        k += 1.0;
    }
    while k > 0.0 && k * h > s {
        k -= 1.0;
    }
    Ok(k * h)
}

/// A per-step drift map `ℝ^d → ℝ^d` applied to particle clouds row-wise.
pub trait Drift {
    fn apply_batch(&self, cloud: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl Drift for Fcnn {
    fn apply_batch(&self, cloud: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.realize_batch(cloud)
    }
}

/// The exact drift `-∇V` of a target.
#[derive(Clone, Copy)]
pub struct ExactDrift<'a>(pub &'a PotentialTarget);

impl Drift for ExactDrift<'_> {
    fn apply_batch(&self, cloud: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.0.grad_batch(cloud).mapv(|g| -g))
    }
}

/// The zero drift (pure random walk).
#[derive(Clone, Copy)]
pub struct ZeroDrift;

impl Drift for ZeroDrift {
    fn apply_batch(&self, cloud: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(Array2::zeros((cloud.nrows(), cloud.ncols())))
    }
}

/// Particle states `Y_0..Y_K` with the configuration that produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Array2<f64>>,
    pub config: ChainConfig,
}

impl Trajectory {
    pub fn final_state(&self) -> &Array2<f64> {
        self.states.last().expect("trajectory stores Y_0")
    }
}

fn initial_cloud(cfg: &ChainConfig, init: &ReferenceDistribution) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, tag::INIT_CLOUD));
    init.sample(cfg.particles, cfg.dim, &mut rng)
}

/// One Euler step `Y + h·drift + ξ` applied in place, with the blow-up guard.
fn advance(
    state: &mut Array2<f64>,
    drift: &Array2<f64>,
    h: f64,
    noise: &NoiseStream,
    step: usize,
) -> Result<()> {
    let dim = state.ncols();
    let guard = state
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let mut xi = vec![0.0; dim];
            noise.fill_increment(step, i, &mut xi);
            let mut ok = true;
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v + h * drift[[i, j]] + xi[j];
                ok &= v.is_finite() && v.abs() <= BLOW_UP_GUARD;
            }
            ok
        })
        .reduce(|| true, |a, b| a && b);
    if !guard {
        return Err(Error::NumericAbort {
            step,
            message: "particle coordinate exceeded the blow-up guard".into(),
        });
    }
    Ok(())
}

/// Runs the exact-drift chain, invoking `observe(k, state)` at every step
/// `k = 0..=K`, and returns the final cloud. Noise comes from `noise`, which
/// callers may share between chains for synchronous coupling.
pub fn lmc_chain_observe<F: FnMut(usize, &Array2<f64>)>(
    target: &PotentialTarget,
    cfg: &ChainConfig,
    init: &ReferenceDistribution,
    noise: &NoiseStream,
    mut observe: F,
) -> Result<Array2<f64>> {
    cfg.validate_for(target)?;
    let mut state = initial_cloud(cfg, init)?;
    observe(0, &state);
    for k in 1..=cfg.steps {
        let drift = target.grad_batch(state.view()).mapv(|g| -g);
        advance(&mut state, &drift, cfg.step_size, noise, k)?;
        observe(k, &state);
    }
    Ok(state)
}

/// Exact-drift LMC chain; stores every state.
pub fn lmc_chain(
    target: &PotentialTarget,
    cfg: &ChainConfig,
    init: &ReferenceDistribution,
) -> Result<Trajectory> {
    let noise = NoiseStream::new(cfg.seed, cfg.particles, cfg.dim, cfg.step_size);
    lmc_chain_with_stream(target, cfg, init, &noise)
}

/// Exact-drift LMC chain with an explicit noise stream (test mode uses
/// [`NoiseStream::disabled`]).
pub fn lmc_chain_with_stream(
    target: &PotentialTarget,
    cfg: &ChainConfig,
    init: &ReferenceDistribution,
    noise: &NoiseStream,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(cfg.steps + 1);
    lmc_chain_observe(target, cfg, init, noise, |_, s| states.push(s.clone()))?;
    Ok(Trajectory {
        states,
        config: *cfg,
    })
}

/// Runs the driven chain `Y_k = Y_{k-1} + h φ_k(Y_{k-1}) + ξ_k` with one
/// drift map per step, observing every state.
pub fn driven_chain_observe<D: Drift, F: FnMut(usize, &Array2<f64>)>(
    drifts: &[D],
    cfg: &ChainConfig,
    init: &ReferenceDistribution,
    noise: &NoiseStream,
    mut observe: F,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    if drifts.len() != cfg.steps {
        return Err(Error::InvalidParameter(format!(
            "need one drift map per step: got {} maps for {} steps",
            drifts.len(),
            cfg.steps
        )));
    }
    let mut state = initial_cloud(cfg, init)?;
    observe(0, &state);
    for k in 1..=cfg.steps {
        let drift = drifts[k - 1].apply_batch(state.view())?;
        if drift.dim() != state.dim() {
            return Err(Error::DimensionMismatch(format!(
                "drift map {k} returned shape {:?}, expected {:?}",
                drift.dim(),
                state.dim()
            )));
        }
        advance(&mut state, &drift, cfg.step_size, noise, k)?;
        observe(k, &state);
    }
    Ok(state)
}

/// Network/function-driven chain; stores every state.
pub fn driven_chain<D: Drift>(
    drifts: &[D],
    cfg: &ChainConfig,
    init: &ReferenceDistribution,
) -> Result<Trajectory> {
    let noise = NoiseStream::new(cfg.seed, cfg.particles, cfg.dim, cfg.step_size);
    driven_chain_with_stream(drifts, cfg, init, &noise)
}

pub fn driven_chain_with_stream<D: Drift>(
    drifts: &[D],
    cfg: &ChainConfig,
    init: &ReferenceDistribution,
    noise: &NoiseStream,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(cfg.steps + 1);
    driven_chain_observe(drifts, cfg, init, noise, |_, s| states.push(s.clone()))?;
    Ok(Trajectory {
        states,
        config: *cfg,
    })
}

/// ResNet-like realization `x_i = x_{i-1} + ψ_i(x_{i-1}) + ξ_i` applied to a
/// particle cloud; returns `x_K`. The networks are pre-scaled (ψ = h-scaled
/// drift), the raw noise increments pass through the skip inputs verbatim.
pub fn resnet_realize(
    stack: &[Fcnn],
    y0: ArrayView2<f64>,
    noise: &NoiseStream,
) -> Result<Array2<f64>> {
    resnet_realize_observe(stack, y0, noise, |_, _| {})
}

/// ResNet-like realization with an observer at every intermediate state.
pub fn resnet_realize_observe<F: FnMut(usize, &Array2<f64>)>(
    stack: &[Fcnn],
    y0: ArrayView2<f64>,
    noise: &NoiseStream,
    mut observe: F,
) -> Result<Array2<f64>> {
    let dim = y0.ncols();
    if noise.dim() != dim || noise.particles() != y0.nrows() {
        return Err(Error::DimensionMismatch(
            "noise stream shape does not match the input cloud".into(),
        ));
    }
    for (i, net) in stack.iter().enumerate() {
        if net.input_dim() != dim || net.output_dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "block {i} maps {} -> {}, expected {dim} -> {dim}",
                net.input_dim(),
                net.output_dim()
            )));
        }
    }
    let mut state = y0.to_owned();
    observe(0, &state);
    for (i, net) in stack.iter().enumerate() {
        let residual = net.realize_batch(state.view())?;
        // h = 1: the blocks already carry the step size in their last layer.
        advance(&mut state, &residual, 1.0, noise, i + 1)?;
        observe(i + 1, &state);
    }
    Ok(state)
}

/// Synchronous-coupling diagnostic: runs the exact-drift chains of two
/// targets under a shared noise stream and identical configs, returning the
/// per-step mean `ℓ²` distance between the paired particle clouds.
pub fn couple_chains(
    target_a: &PotentialTarget,
    init_a: &ReferenceDistribution,
    target_b: &PotentialTarget,
    init_b: &ReferenceDistribution,
    cfg: &ChainConfig,
) -> Result<Vec<f64>> {
    if target_a.dim() != target_b.dim() {
        return Err(Error::DimensionMismatch(
            "coupled chains need targets of equal dimension".into(),
        ));
    }
    let noise = NoiseStream::new(cfg.seed, cfg.particles, cfg.dim, cfg.step_size);
    let mut states_a = Vec::with_capacity(cfg.steps + 1);
    lmc_chain_observe(target_a, cfg, init_a, &noise, |_, s| {
        states_a.push(s.clone())
    })?;
    let mut distances = Vec::with_capacity(cfg.steps + 1);
    let mut idx = 0;
    lmc_chain_observe(target_b, cfg, init_b, &noise, |_, s| {
        distances.push(mean_l2_distance(&states_a[idx], s));
        idx += 1;
    })?;
    Ok(distances)
}

fn mean_l2_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut total = 0.0;
    for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
        let mut sq = 0.0;
        for (x, y) in ra.iter().zip(rb.iter()) {
            sq += (x - y) * (x - y);
        }
        total += sq.sqrt();
    }
    total / n as f64
}
