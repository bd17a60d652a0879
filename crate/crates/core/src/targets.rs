//! Potentials and reference distributions.
//!
//! A [`PotentialTarget`] bundles a potential `V`, its gradient, the strong
//! convexity constant `m`, the gradient-Lipschitz constant `M`, the
//! minimizer, and (when available) the exact mean/covariance of the target
//! law together with an exact sampler. Gaussian targets carry exact `m`, `M`
//! from the precision spectrum; mixture targets report `m = 0` so that
//! strong-convexity bounds refuse them.

use crate::linalg;
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.8378770664093453;

/// Exact first and second moments of the target law.
#[derive(Debug, Clone)]
pub struct Analytic {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

#[derive(Debug, Clone)]
enum TargetKind {
    Gaussian {
        mean: Array1<f64>,
        precision: Array2<f64>,
        chol_cov: Array2<f64>,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<Array1<f64>>,
        precisions: Vec<Array2<f64>>,
        chol_covs: Vec<Array2<f64>>,
        // log w_k + ½ log det P_k − (d/2) log 2π
        log_coeffs: Vec<f64>,
    },
}

/// A potential `V` with gradient and convexity/Lipschitz constants.
#[derive(Debug, Clone)]
pub struct PotentialTarget {
    kind: TargetKind,
    dim: usize,
    m: f64,
    big_m: f64,
    minimizer: Array1<f64>,
    analytic: Analytic,
}

/// Builds the Gaussian target `μ∞ = N(mean, precision⁻¹)` with
/// `V(x) = ½ (x-mean)ᵀ P (x-mean)`, `m = λ_min(P)`, `M = λ_max(P)`.
pub fn gaussian_target(mean: Array1<f64>, precision: Array2<f64>) -> Result<PotentialTarget> {
    let d = mean.len();
    if precision.nrows() != d || precision.ncols() != d {
        return Err(Error::DimensionMismatch(
            "precision matrix must be d x d".into(),
        ));
    }
    let eigs = linalg::sym_eigenvalues(precision.view(), "precision")?;
    let (m, big_m) = (eigs[0], eigs[d - 1]);
    if m <= 0.0 {
        return Err(Error::NotSpd("precision is not positive definite".into()));
    }
    let cov = linalg::invert_spd(precision.view(), "precision")?;
    let chol_cov = linalg::cholesky_lower(cov.view(), "covariance")?;
    Ok(PotentialTarget {
        kind: TargetKind::Gaussian {
            mean: mean.clone(),
            precision,
            chol_cov,
        },
        dim: d,
        m,
        big_m,
        minimizer: mean.clone(),
        analytic: Analytic { mean, cov },
    })
}

/// Builds a Gaussian mixture target with density `Σ_k w_k N(μ_k, Σ_k)`.
///
/// The potential is the exact negative log density (normalized), gradients
/// use log-sum-exp stabilized responsibilities, `m` is reported as 0, and
/// `M` is a numerical Lipschitz estimate over a box covering the components.
pub fn gmm_target(
    weights: Vec<f64>,
    means: Vec<Array1<f64>>,
    covs: Vec<Array2<f64>>,
) -> Result<PotentialTarget> {
    let c = weights.len();
    if c == 0 || means.len() != c || covs.len() != c {
        return Err(Error::InvalidParameter(
            "mixture needs matching weights, means, covariances".into(),
        ));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter(
            "mixture weights must be positive".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "mixture weights sum to {total}, expected 1 within 1e-12"
        )));
    }
    let d = means[0].len();
    if means.iter().any(|mu| mu.len() != d) {
        return Err(Error::DimensionMismatch(
            "mixture means must share a dimension".into(),
        ));
    }
    let mut precisions = Vec::with_capacity(c);
    let mut chol_covs = Vec::with_capacity(c);
    let mut log_coeffs = Vec::with_capacity(c);
    for (k, cov) in covs.iter().enumerate() {
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "covariance {k} must be d x d"
            )));
        }
        let prec = linalg::invert_spd(cov.view(), "mixture covariance")?;
        let log_det_cov = linalg::log_det_spd(cov.view(), "mixture covariance")?;
        chol_covs.push(linalg::cholesky_lower(cov.view(), "mixture covariance")?);
        precisions.push(prec);
        log_coeffs.push(weights[k].ln() - 0.5 * log_det_cov - 0.5 * d as f64 * LN_2PI);
    }

    // Exact mixture moments.
    let mut mean = Array1::<f64>::zeros(d);
    for (w, mu) in weights.iter().zip(&means) {
        mean += &mu.mapv(|v| v * w);
    }
    let mut cov = Array2::<f64>::zeros((d, d));
    for k in 0..c {
        let delta = &means[k] - &mean;
        let outer = Array2::from_shape_fn((d, d), |(i, j)| delta[i] * delta[j]);
        cov += &(&covs[k] + &outer).mapv(|v| v * weights[k]);
    }

    let kind = TargetKind::Mixture {
        weights,
        means,
        precisions,
        chol_covs,
        log_coeffs,
    };
    let mut target = PotentialTarget {
        kind,
        dim: d,
        m: 0.0,
        big_m: 0.0,
        minimizer: mean.clone(),
        analytic: Analytic { mean, cov },
    };
    target.big_m = target.estimate_lipschitz();
    target.minimizer = target.local_minimize(target.analytic.mean.clone());
    Ok(target)
}

impl PotentialTarget {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Strong convexity constant; 0 for mixtures.
    pub fn strong_convexity(&self) -> f64 {
        self.m
    }

    /// Gradient Lipschitz constant (exact for Gaussians, estimated for mixtures).
    pub fn gradient_lipschitz(&self) -> f64 {
        self.big_m
    }

    pub fn minimizer(&self) -> &Array1<f64> {
        &self.minimizer
    }

    pub fn analytic(&self) -> &Analytic {
        &self.analytic
    }

    pub fn is_strongly_convex(&self) -> bool {
        self.m > 0.0
    }

    /// Potential value `V(x)` (negative log density up to the Gaussian
    /// normalization for the pure Gaussian case; exact for mixtures).
    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        match &self.kind {
            TargetKind::Gaussian {
                mean, precision, ..
            } => {
                let delta = &x - mean;
                0.5 * delta.dot(&precision.dot(&delta))
            }
            TargetKind::Mixture { .. } => -logsumexp(&self.component_log_terms(x)),
        }
    }

    /// Gradient `∇V(x)`.
    pub fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match &self.kind {
            TargetKind::Gaussian {
                mean, precision, ..
            } => {
                let delta = &x - mean;
                precision.dot(&delta)
            }
            TargetKind::Mixture {
                means, precisions, ..
            } => {
                let log_terms = self.component_log_terms(x);
                let lse = logsumexp(&log_terms);
                let mut g = Array1::zeros(self.dim);
                for k in 0..means.len() {
                    let r = (log_terms[k] - lse).exp();
                    if r > 0.0 {
                        let delta = &x - &means[k];
                        g += &precisions[k].dot(&delta).mapv(|v| v * r);
                    }
                }
                g
            }
        }
    }

    /// Gradient applied row-wise to a particle cloud.
    pub fn grad_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match &self.kind {
            TargetKind::Gaussian {
                mean, precision, ..
            } => {
                let centered = &x - &mean.view().insert_axis(Axis(0));
                centered.dot(&precision.t())
            }
            TargetKind::Mixture { .. } => {
                let mut out = Array2::zeros((x.nrows(), self.dim));
                for (row_in, mut row_out) in x.rows().into_iter().zip(out.rows_mut()) {
                    row_out.assign(&self.grad(row_in));
                }
                out
            }
        }
    }

    fn component_log_terms(&self, x: ArrayView1<f64>) -> Vec<f64> {
        match &self.kind {
            TargetKind::Gaussian { .. } => unreachable!("only used for mixtures"),
            TargetKind::Mixture {
                means,
                precisions,
                log_coeffs,
                ..
            } => (0..means.len())
                .map(|k| {
                    let delta = &x - &means[k];
                    log_coeffs[k] - 0.5 * delta.dot(&precisions[k].dot(&delta))
                })
                .collect(),
        }
    }

    /// Exact sampler from the target law.
    pub fn sample_exact<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let d = self.dim;
        let mut out = Array2::zeros((n, d));
        match &self.kind {
            TargetKind::Gaussian { mean, chol_cov, .. } => {
                for mut row in out.rows_mut() {
                    let z = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
                    row.assign(&(mean + &chol_cov.dot(&z)));
                }
            }
            TargetKind::Mixture {
                weights,
                means,
                chol_covs,
                ..
            } => {
                for mut row in out.rows_mut() {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut k = weights.len() - 1;
                    for (i, w) in weights.iter().enumerate() {
                        acc += w;
                        if u <= acc {
                            k = i;
                            break;
                        }
                    }
                    let z = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
                    row.assign(&(&means[k] + &chol_covs[k].dot(&z)));
                }
            }
        }
        out
    }

    /// Stationary covariance of the discrete LMC chain
    /// `X_{k+1} = (I - hP) X_k + √(2h) Z` for a Gaussian target: in the
    /// precision eigenbasis each variance is `2h / (1 - (1 - hλ)²)`.
    pub fn lmc_stationary_cov(&self, h: f64) -> Result<Array2<f64>> {
        match &self.kind {
            TargetKind::Gaussian { precision, .. } => {
                if !(h > 0.0) || h >= 2.0 / self.big_m {
                    return Err(Error::InvalidParameter(format!(
                        "need 0 < h < 2/M for a stationary law, got h={h}"
                    )));
                }
                let eig = linalg::to_dmatrix(precision.view()).symmetric_eigen();
                let d = self.dim;
                let mut cov = Array2::zeros((d, d));
                for (idx, lambda) in eig.eigenvalues.iter().enumerate() {
                    let factor = 1.0 - h * lambda;
                    let var = 2.0 * h / (1.0 - factor * factor);
                    for i in 0..d {
                        for j in 0..d {
                            cov[[i, j]] +=
                                var * eig.eigenvectors[(i, idx)] * eig.eigenvectors[(j, idx)];
                        }
                    }
                }
                Ok(cov)
            }
            TargetKind::Mixture { .. } => Err(Error::InvalidParameter(
                "stationary LMC law is only available for Gaussian targets".into(),
            )),
        }
    }

    fn estimate_lipschitz(&self) -> f64 {
        // Deterministic difference-quotient sweep over a box covering all
        // component means plus four standard deviations.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x4c69_7073);
        let (lo, hi) = self.sampling_box();
        let mut max_ratio: f64 = 0.0;
        for _ in 0..4000 {
            let x = Array1::from_shape_fn(self.dim, |i| rng.random_range(lo[i]..hi[i]));
            let y = Array1::from_shape_fn(self.dim, |i| rng.random_range(lo[i]..hi[i]));
            let dx = (&x - &y).mapv(|v| v * v).sum().sqrt();
            if dx < 1e-9 {
                continue;
            }
            let dg = (self.grad(x.view()) - self.grad(y.view()))
                .mapv(|v| v * v)
                .sum()
                .sqrt();
            max_ratio = max_ratio.max(dg / dx);
        }
        1.2 * max_ratio
    }

    fn sampling_box(&self) -> (Array1<f64>, Array1<f64>) {
        let std = self.analytic.cov.diag().mapv(f64::sqrt);
        let lo = &self.analytic.mean - &std.mapv(|s| 4.0 * s + 1.0);
        let hi = &self.analytic.mean + &std.mapv(|s| 4.0 * s + 1.0);
        (lo, hi)
    }

    fn local_minimize(&self, start: Array1<f64>) -> Array1<f64> {
        let step = 0.5 / self.big_m.max(1.0);
        let mut x = start;
        for _ in 0..2000 {
            let g = self.grad(x.view());
            let norm = g.dot(&g).sqrt();
            if norm <= 1e-12 {
                break;
            }
            x -= &g.mapv(|v| v * step);
        }
        x
    }
}

fn logsumexp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

// --- Reference distributions -------------------------------------------------

#[derive(Debug, Clone)]
enum RefKind {
    StandardNormal,
    Gaussian {
        mean: Array1<f64>,
        chol_cov: Array2<f64>,
    },
    PointMass {
        point: Array1<f64>,
    },
}

/// Sub-Gaussian reference distribution for chain initialization.
#[derive(Debug, Clone)]
pub struct ReferenceDistribution {
    kind: RefKind,
    sigma0_sq: f64,
}

impl ReferenceDistribution {
    pub fn standard_normal() -> Self {
        Self {
            kind: RefKind::StandardNormal,
            sigma0_sq: 1.0,
        }
    }

    /// Gaussian reference; the variance proxy is `λ_max(cov)` (the proxy of
    /// the centered law).
    pub fn gaussian(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self> {
        let eigs = linalg::sym_eigenvalues(cov.view(), "reference covariance")?;
        let chol_cov = linalg::cholesky_lower(cov.view(), "reference covariance")?;
        Ok(Self {
            kind: RefKind::Gaussian { mean, chol_cov },
            sigma0_sq: eigs[eigs.len() - 1],
        })
    }

    pub fn point_mass(point: Array1<f64>) -> Self {
        Self {
            kind: RefKind::PointMass { point },
            sigma0_sq: 0.0,
        }
    }

    pub fn variance_proxy(&self) -> f64 {
        self.sigma0_sq
    }

    /// Dimension when fixed by the kind; `StandardNormal` adapts to any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.kind {
            RefKind::StandardNormal => None,
            RefKind::Gaussian { mean, .. } => Some(mean.len()),
            RefKind::PointMass { point } => Some(point.len()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, dim: usize, rng: &mut R) -> Result<Array2<f64>> {
        if let Some(d) = self.fixed_dim() {
            if d != dim {
                return Err(Error::DimensionMismatch(format!(
                    "reference distribution has dimension {d}, chain expects {dim}"
                )));
            }
        }
        let mut out = Array2::zeros((n, dim));
        match &self.kind {
            RefKind::StandardNormal => {
                for mut row in out.rows_mut() {
                    for v in row.iter_mut() {
                        *v = rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            RefKind::Gaussian { mean, chol_cov } => {
                for mut row in out.rows_mut() {
                    let z = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
                    row.assign(&(mean + &chol_cov.dot(&z)));
                }
            }
            RefKind::PointMass { point } => {
                for mut row in out.rows_mut() {
                    row.assign(point);
                }
            }
        }
        Ok(out)
    }
}

// --- Assumption verification ---------------------------------------------------

/// Empirical strong-convexity / Lipschitz estimates over random pairs.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub m_hat: f64,
    pub big_m_hat: f64,
    pub pass: bool,
    /// `max ‖-∇V(x) + m x‖ / ‖x‖` over the sample, populated when `M < √2 m`.
    pub linear_residual_ratio: Option<f64>,
}

/// Estimates `m` and `M` from difference quotients of `∇V` over
/// `sample_count` random pairs in the ball of radius `radius` around the
/// minimizer. Pass requires `m_hat ≥ m(1-tol)` and `M_hat ≤ M(1+tol)` with
/// `tol = 1e-6` for Gaussian targets and `1e-2` otherwise.
pub fn verify_assumption(
    target: &PotentialTarget,
    sample_count: usize,
    radius: f64,
    seed: u64,
) -> AssumptionReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = target.dim();
    let center = target.minimizer().clone();
    let mut m_hat = f64::INFINITY;
    let mut big_m_hat: f64 = 0.0;
    let mut residual_ratio: f64 = 0.0;
    for _ in 0..sample_count {
        let x = &center + &random_in_ball(d, radius, &mut rng);
        let y = &center + &random_in_ball(d, radius, &mut rng);
        let dx = &x - &y;
        let norm_sq = dx.dot(&dx);
        if norm_sq < 1e-16 {
            continue;
        }
        let dg = target.grad(x.view()) - target.grad(y.view());
        m_hat = m_hat.min(dg.dot(&dx) / norm_sq);
        big_m_hat = big_m_hat.max((dg.dot(&dg) / norm_sq).sqrt());

        // Residual of the linear drift -m x relative to -∇V, measured at
        // points shifted so the minimizer sits at the origin.
        let shifted = &x - &center;
        let norm = shifted.dot(&shifted).sqrt();
        if norm > 1e-9 {
            let res = target.grad(x.view()) - shifted.mapv(|v| v * target.strong_convexity());
            residual_ratio = residual_ratio.max(res.dot(&res).sqrt() / norm);
        }
    }
    let tol = if matches!(target.kind, TargetKind::Gaussian { .. }) {
        1e-6
    } else {
        1e-2
    };
    let pass = m_hat >= target.strong_convexity() * (1.0 - tol)
        && big_m_hat <= target.gradient_lipschitz() * (1.0 + tol);
    let linear = if target.strong_convexity() > 0.0
        && target.gradient_lipschitz() < 2f64.sqrt() * target.strong_convexity()
    {
        Some(residual_ratio)
    } else {
        None
    };
    AssumptionReport {
        m_hat,
        big_m_hat,
        pass,
        linear_residual_ratio: linear,
    }
}

fn random_in_ball<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Array1<f64> {
    let z = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
    let norm = z.dot(&z).sqrt().max(1e-300);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    z.mapv(|v| v * r / norm)
}
