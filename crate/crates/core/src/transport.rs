//! Empirical Wasserstein-2 machinery.
//!
//! [`sinkhorn_cost`] computes the entropy-regularized transport cost
//! `T_λ(μ,ν) = min_γ ⟨γ, C⟩ + 2λ KL(γ | μ⊗ν)` between uniform empirical
//! measures with squared Euclidean cost, using log-domain iterations with an
//! epsilon-scaling warm start. [`sinkhorn_divergence`] debiases it into
//! `S_λ = T_λ(μ,ν) - ½(T_λ(μ,μ) + T_λ(ν,ν))`. [`exact_w2_empirical`] is the
//! independent oracle: an optimal-assignment solve on the same cost.

use crate::linalg;
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

/// Default `ℓ¹` marginal tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Largest sample count accepted by the assignment oracle.
pub const MAX_ASSIGNMENT_SIZE: usize = 1024;

/// Squared-distance cost matrix `C_ij = ‖x_i - y_j‖²`.
pub fn cost_matrix(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(
            "sample clouds must share a dimension".into(),
        ));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::InvalidParameter("sample clouds must be nonempty".into()));
    }
    let (n, m) = (x.nrows(), y.nrows());
    let mut c = Array2::zeros((n, m));
    c.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let xi = x.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                let mut sq = 0.0;
                for (a, b) in xi.iter().zip(y.row(j).iter()) {
                    sq += (a - b) * (a - b);
                }
                *v = sq;
            }
        });
    Ok(c)
}

/// Converged entropic transport cost with its dual potentials.
#[derive(Debug, Clone)]
pub struct SinkhornResult {
    /// The full functional `⟨γ, C⟩ + 2λ KL(γ | μ⊗ν)`.
    pub cost: f64,
    /// The transport part `⟨γ, C⟩` alone (diagnostics).
    pub transport_cost: f64,
    pub potential_f: Array1<f64>,
    pub potential_g: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `ℓ¹` violation of the column marginals at exit (rows are exact
    /// after the final `f` update).
    pub marginal_error: f64,
}

/// Stabilized-scaling state: the plan is `γ_ij = u_i K_ij v_j` with the
/// absorbed kernel `K_ij = a_i b_j exp((f_i + g_j - C_ij)/ε)`. Scaling
/// vectors stay O(1) because they are absorbed into the potentials whenever
/// they drift, so the kernel is rebuilt rarely and the inner iterations are
/// plain matrix-vector products.
struct Scaling<'a> {
    cost: &'a Array2<f64>,
    log_a: f64,
    log_b: f64,
    f: Array1<f64>,
    g: Array1<f64>,
    kernel: Array2<f64>,
    u: Array1<f64>,
    v: Array1<f64>,
}

impl<'a> Scaling<'a> {
    fn new(cost: &'a Array2<f64>) -> Self {
        let (n, m) = cost.dim();
        Self {
            cost,
            log_a: (1.0 / n as f64).ln(),
            log_b: (1.0 / m as f64).ln(),
            f: Array1::zeros(n),
            g: Array1::zeros(m),
            kernel: Array2::zeros((n, m)),
            u: Array1::from_elem(n, 1.0),
            v: Array1::from_elem(m, 1.0),
        }
    }

    fn rebuild_kernel(&mut self, eps: f64) {
        let f = &self.f;
        let g = &self.g;
        let (log_a, log_b) = (self.log_a, self.log_b);
        let cost = self.cost;
        self.kernel
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let c_row = cost.row(i);
                for (j, k) in row.iter_mut().enumerate() {
                    *k = (log_a + log_b + (f[i] + g[j] - c_row[j]) / eps).exp();
                }
            });
    }

    /// Folds the current scalings into the potentials and resets them.
    /// Rows whose kernel mass underflowed are re-centered by a c-transform.
    fn absorb(&mut self, eps: f64) {
        for (fi, ui) in self.f.iter_mut().zip(self.u.iter_mut()) {
            if *ui > 0.0 && ui.is_finite() {
                *fi += eps * ui.ln();
            }
            *ui = 1.0;
        }
        for (gj, vj) in self.g.iter_mut().zip(self.v.iter_mut()) {
            if *vj > 0.0 && vj.is_finite() {
                *gj += eps * vj.ln();
            }
            *vj = 1.0;
        }
    }

    /// Re-centers stale potentials by the c-transform so no kernel row or
    /// column is entirely underflowed.
    fn recenter(&mut self) {
        let cost = self.cost;
        let g = self.g.clone();
        self.f
            .as_slice_mut()
            .unwrap()
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, fi)| {
                let row = cost.row(i);
                let mut best = f64::INFINITY;
                for j in 0..row.len() {
                    best = best.min(row[j] - g[j]);
                }
                *fi = best;
            });
    }

    fn kv(&self) -> Array1<f64> {
        let kernel = &self.kernel;
        let v = &self.v;
        let mut out = Array1::zeros(kernel.nrows());
        out.as_slice_mut()
            .unwrap()
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, o)| {
                *o = kernel.row(i).dot(v);
            });
        out
    }

    fn ktu(&self) -> Array1<f64> {
        // Fixed-size chunks summed in index order keep the result
        // bit-deterministic under any thread schedule.
        const CHUNK: usize = 256;
        let kernel = &self.kernel;
        let u = &self.u;
        let n = kernel.nrows();
        let chunk_count = n.div_ceil(CHUNK);
        let partials: Vec<Array1<f64>> = (0..chunk_count)
            .into_par_iter()
            .map(|ci| {
                let lo = ci * CHUNK;
                let hi = (lo + CHUNK).min(n);
                let mut acc = Array1::<f64>::zeros(kernel.ncols());
                for i in lo..hi {
                    let ui = u[i];
                    for (a, k) in acc.iter_mut().zip(kernel.row(i).iter()) {
                        *a += ui * k;
                    }
                }
                acc
            })
            .collect();
        let mut out = Array1::<f64>::zeros(kernel.ncols());
        for p in partials {
            out += &p;
        }
        out
    }

    /// `ℓ¹` column-marginal violation of the implied plan. The `u` update
    /// makes rows exact, so the columns measure convergence.
    fn col_marginal_error(&self) -> f64 {
        let b = self.log_b.exp();
        let ktu = self.ktu();
        ktu.iter()
            .zip(self.v.iter())
            .map(|(s, vj)| (s * vj - b).abs())
            .sum()
    }

    /// Total potentials including un-absorbed scalings.
    fn potentials(&self, eps: f64) -> (Array1<f64>, Array1<f64>) {
        let f = Array1::from_shape_fn(self.f.len(), |i| {
            self.f[i] + if self.u[i] > 0.0 { eps * self.u[i].ln() } else { 0.0 }
        });
        let g = Array1::from_shape_fn(self.g.len(), |j| {
            self.g[j] + if self.v[j] > 0.0 { eps * self.v[j].ln() } else { 0.0 }
        });
        (f, g)
    }

    /// Transport part and KL part of the functional at potentials `(f, g)`.
    fn primal_parts(&self, eps: f64, f: &Array1<f64>, g: &Array1<f64>) -> (f64, f64) {
        let cost = self.cost;
        let (log_a, log_b) = (self.log_a, self.log_b);
        let parts: Vec<(f64, f64)> = (0..cost.nrows())
            .into_par_iter()
            .map(|i| {
                let row = cost.row(i);
                let mut transport = 0.0;
                let mut kl = 0.0;
                for j in 0..cost.ncols() {
                    let log_gamma = log_a + log_b + (f[i] + g[j] - row[j]) / eps;
                    let gamma = log_gamma.exp();
                    transport += gamma * row[j];
                    kl += gamma * (f[i] + g[j] - row[j]) / eps;
                }
                (transport, kl)
            })
            .collect();
        parts
            .into_iter()
            .fold((0.0, 0.0), |(t, k), (dt, dk)| (t + dt, k + dk))
    }
}

/// Log-domain Sinkhorn between uniform empirical measures.
///
/// The effective entropic scale is `2λ` per the `2λ·KL` convention of the
/// returned functional. An epsilon-scaling warm start anneals the scale from
/// the cost magnitude down to `2λ`; the stopping rule at the target scale is
/// the `ℓ¹` row-marginal violation falling below `tol`, within `max_iters`
/// total iterations at the target scale. Non-convergence is flagged, not an
/// error.
pub fn sinkhorn_cost(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "regularization must be positive, got {lambda}"
        )));
    }
    let cost = cost_matrix(x, y)?;
    sinkhorn_on_cost(&cost, lambda, max_iters, tol)
}

fn sinkhorn_on_cost(
    cost: &Array2<f64>,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    let (n, m) = cost.dim();
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let eps_target = 2.0 * lambda;
    let max_cost = cost.iter().cloned().fold(0.0f64, f64::max);

    // Epsilon schedule, coarse to target, factor 4 per level.
    let mut levels = vec![eps_target];
    let mut e = eps_target;
    while e * 4.0 < max_cost {
        e *= 4.0;
        levels.push(e);
    }
    levels.reverse();

    let mut state = Scaling::new(cost);
    let mut iterations = 0;
    let mut converged = false;
    let mut marginal_error = f64::INFINITY;

    for (li, &eps) in levels.iter().enumerate() {
        let is_target = li == levels.len() - 1;
        let budget = if is_target { max_iters } else { 60 };
        let level_tol = if is_target {
            tol
        } else {
            (tol * 1e4).clamp(1e-6, 1e-2)
        };
        state.rebuild_kernel(eps);
        let mut spent = 0;
        let mut prev_err = f64::INFINITY;
        let mut stalled_checks = 0;
        while spent < budget {
            let ktu = state.ktu();
            let mut stale = false;
            for (vj, s) in state.v.iter_mut().zip(ktu.iter()) {
                if *s > 0.0 {
                    *vj = b / s;
                } else {
                    stale = true;
                }
            }
            let kv = state.kv();
            for (ui, s) in state.u.iter_mut().zip(kv.iter()) {
                if *s > 0.0 {
                    *ui = a / s;
                } else {
                    stale = true;
                }
            }
            spent += 1;
            if is_target {
                iterations += 1;
            }
            let drifted = state
                .u
                .iter()
                .chain(state.v.iter())
                .any(|x| !(1e-30..=1e30).contains(x));
            if stale || drifted {
                state.absorb(eps);
                if stale {
                    state.recenter();
                }
                state.rebuild_kernel(eps);
                continue;
            }
            if spent % 5 == 0 || spent == budget {
                let err = state.col_marginal_error();
                if is_target {
                    marginal_error = err;
                }
                if err <= level_tol {
                    converged = is_target;
                    break;
                }
                // Roundoff floor: the error stops improving long before the
                // tolerance. Stop early; the result stays flagged.
                if err > 0.999 * prev_err {
                    stalled_checks += 1;
                    if stalled_checks >= 6 {
                        break;
                    }
                } else {
                    stalled_checks = 0;
                }
                prev_err = err;
            }
        }
        state.absorb(eps);
    }

    if !converged {
        state.rebuild_kernel(eps_target);
        marginal_error = state.col_marginal_error();
        converged = marginal_error <= tol;
        if !converged {
            log::warn!(
                "sinkhorn did not converge in {max_iters} iterations (marginal error {marginal_error:.3e})"
            );
        }
    }
    let (f, g) = state.potentials(eps_target);
    let (transport_cost, kl) = state.primal_parts(eps_target, &f, &g);
    Ok(SinkhornResult {
        cost: transport_cost + 2.0 * lambda * kl,
        transport_cost,
        potential_f: f,
        potential_g: g,
        iterations,
        converged,
        marginal_error,
    })
}

/// Debiased Sinkhorn divergence
/// `S_λ(μ,ν) = T_λ(μ,ν) - ½(T_λ(μ,μ) + T_λ(ν,ν))`.
pub fn sinkhorn_divergence(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<f64> {
    let cross = sinkhorn_cost(x, y, lambda, max_iters, tol)?;
    let self_x = sinkhorn_cost(x, x, lambda, max_iters, tol)?;
    let self_y = sinkhorn_cost(y, y, lambda, max_iters, tol)?;
    Ok(cross.cost - 0.5 * (self_x.cost + self_y.cost))
}

/// Divergence with a precomputed self term for the second argument; avoids
/// re-solving `T_λ(ν,ν)` when one cloud is fixed across many evaluations.
pub fn sinkhorn_divergence_cached(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    self_y_cost: f64,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<f64> {
    let cross = sinkhorn_cost(x, y, lambda, max_iters, tol)?;
    let self_x = sinkhorn_cost(x, x, lambda, max_iters, tol)?;
    Ok(cross.cost - 0.5 * (self_x.cost + self_y_cost))
}

/// Exact empirical Wasserstein-2 distance between equally sized clouds via
/// optimal assignment on the squared-distance cost (shortest augmenting
/// paths with dual potentials, O(n³)); returns `√(mean matched cost)`.
pub fn exact_w2_empirical(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "assignment oracle needs equal sizes, got {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() > MAX_ASSIGNMENT_SIZE {
        return Err(Error::InvalidParameter(format!(
            "assignment oracle capped at {MAX_ASSIGNMENT_SIZE} samples, got {}",
            x.nrows()
        )));
    }
    let cost = cost_matrix(x, y)?;
    let assignment = solve_assignment(&cost);
    let n = x.nrows();
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[[i, j]])
        .sum();
    Ok((total / n as f64).sqrt())
}

/// Minimum-cost perfect assignment; returns the column matched to each row.
pub(crate) fn solve_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // Dual potentials with a virtual column 0; matched[j] is the row
    // occupying column j (1-based over columns).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![usize::MAX; n + 1];
    for row in 0..n {
        matched[0] = row;
        let mut j0 = 0usize;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prev = vec![0usize; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[[i0, j - 1]] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    prev[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == usize::MAX {
                break;
            }
        }
        // Augment along the alternating path.
        loop {
            let j1 = prev[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![usize::MAX; n];
    for j in 1..=n {
        if matched[j] != usize::MAX {
            result[matched[j]] = j - 1;
        }
    }
    result
}

/// Closed-form Wasserstein-2 between Gaussians (Bures metric):
/// `W₂² = ‖μ₁-μ₂‖² + tr(Σ₁ + Σ₂ - 2(Σ₂^½ Σ₁ Σ₂^½)^½)`.
pub fn gaussian_w2(
    mean1: ArrayView1<f64>,
    cov1: ArrayView2<f64>,
    mean2: ArrayView1<f64>,
    cov2: ArrayView2<f64>,
) -> Result<f64> {
    if mean1.len() != mean2.len() {
        return Err(Error::DimensionMismatch(
            "gaussian means must share a dimension".into(),
        ));
    }
    // Validate positive definiteness through the factorizations themselves.
    let sqrt2 = linalg::sym_sqrt(cov2, "second covariance")?;
    linalg::cholesky_lower(cov1, "first covariance")?;
    linalg::cholesky_lower(cov2, "second covariance")?;
    let inner = sqrt2.dot(&cov1.dot(&sqrt2));
    let cross = linalg::sym_sqrt(inner.view(), "bures inner matrix")?;
    let mean_sq: f64 = mean1
        .iter()
        .zip(mean2.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let trace = cov1.diag().sum() + cov2.diag().sum() - 2.0 * cross.diag().sum();
    Ok((mean_sq + trace.max(0.0)).sqrt())
}
