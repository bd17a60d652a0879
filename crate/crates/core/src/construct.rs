//! Closed-form ReLU network constructions.
//!
//! Every builder returns an explicit [`Fcnn`] whose realization equals (or
//! approximates, with a certified tolerance) a stated closed form: the
//! identity, the `ℓ¹` norm, an indicator ramp on the `ℓ¹` ball, a
//! componentwise clamp, scalar and element-wise multiplication, the linear
//! drift `x ↦ -mx`, and the composite drift network that glues a local
//! approximator to the linear drift with globally linear error growth.
//!
//! The composite construction certifies its accuracy on the `ℓ¹` ball
//! `B¹_r(0)`; the corresponding `ℓ²`-ball statement holds on
//! `B²_r(0) ∩ B¹_r(0)`.

use crate::nn::{concatenate, parallelize, sum_networks, Fcnn, Layer};
use crate::{Error, Result};
use ndarray::{Array1, Array2};

/// Per-output clamp levels for [`cutoff`]; entries must be nonnegative.
#[derive(Debug, Clone)]
pub struct BoxBound {
    levels: Array1<f64>,
}

impl BoxBound {
    pub fn new(levels: Array1<f64>) -> Result<Self> {
        if levels.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidParameter(
                "clamp levels must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { levels })
    }

    pub fn uniform(dim: usize, level: f64) -> Result<Self> {
        Self::new(Array1::from_elem(dim, level))
    }

    pub fn levels(&self) -> &Array1<f64> {
        &self.levels
    }
}

/// Parameters of the scalar multiplication network: accurate to `tolerance`
/// on `[-range_half_width, range_half_width]²`, built from `levels` sawtooth
/// compositions per squaring branch.
#[derive(Debug, Clone, Copy)]
pub struct MultSpec {
    pub range_half_width: f64,
    pub tolerance: f64,
    pub levels: usize,
}

impl MultSpec {
    /// Chooses `levels = max(1, ⌈log₂(3M²/ε)⌉)`, which makes the per-branch
    /// squaring error at most `ε/3` after rescaling.
    pub fn new(range_half_width: f64, tolerance: f64) -> Result<Self> {
        if !(range_half_width > 0.0) || !range_half_width.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "multiplication range half-width must be positive, got {range_half_width}"
            )));
        }
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "multiplication tolerance must lie in (0,1), got {tolerance}"
            )));
        }
        let m2 = range_half_width * range_half_width;
        let levels = (3.0 * m2 / tolerance).log2().ceil().max(1.0) as usize;
        Ok(Self {
            range_half_width,
            tolerance,
            levels,
        })
    }
}

/// Exact identity on `ℝ^d`: `σ(x) - σ(-x) = x`. 4d nonzero parameters, depth 1.
pub fn identity_net(d: usize) -> Fcnn {
    let mut a0 = Array2::zeros((2 * d, d));
    let mut a1 = Array2::zeros((d, 2 * d));
    for i in 0..d {
        a0[[i, i]] = 1.0;
        a0[[d + i, i]] = -1.0;
        a1[[i, i]] = 1.0;
        a1[[i, d + i]] = -1.0;
    }
    Fcnn::new(vec![
        Layer {
            weight: a0,
            bias: Array1::zeros(2 * d),
        },
        Layer {
            weight: a1,
            bias: Array1::zeros(d),
        },
    ])
    .expect("identity construction is well-formed")
}

/// Exact `ℓ¹` norm: sums `σ(x_i) + σ(-x_i)`. 4d nonzero parameters, depth 1.
pub fn l1_net(d: usize) -> Fcnn {
    let mut a0 = Array2::zeros((2 * d, d));
    for i in 0..d {
        a0[[i, i]] = 1.0;
        a0[[d + i, i]] = -1.0;
    }
    Fcnn::new(vec![
        Layer {
            weight: a0,
            bias: Array1::zeros(2 * d),
        },
        Layer {
            weight: Array2::ones((1, 2 * d)),
            bias: Array1::zeros(1),
        },
    ])
    .expect("l1 construction is well-formed")
}

/// Piecewise-linear indicator of the `ℓ¹` ball of radius `r`: exactly 1 on
/// `‖x‖₁ ≤ r`, an affine ramp down to 0 on `r ≤ ‖x‖₁ ≤ r+δ`, and 0 beyond
/// (up to one rounding per ReLU arm). 4d+7 nonzero parameters, depth 3.
pub fn indicator_net(d: usize, r: f64, delta: f64) -> Result<Fcnn> {
    if !(r > 0.0) || !(delta > 0.0) || !r.is_finite() || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "indicator needs r > 0 and delta > 0, got r={r}, delta={delta}"
        )));
    }
    let l1 = l1_net(d);
    let mut layers = l1.layers().to_vec();
    layers.push(Layer {
        weight: Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap(),
        bias: Array1::from_vec(vec![-r, -(r + delta)]),
    });
    layers.push(Layer {
        weight: Array2::from_shape_vec((1, 2), vec![-1.0 / delta, 1.0 / delta]).unwrap(),
        bias: Array1::from_vec(vec![1.0]),
    });
    Fcnn::new(layers)
}

/// Appends two ReLU layers clamping output `i` to `[-c_i, c_i]`:
/// `y ↦ σ(-σ(-y + c) + 2c) - c`. Depth + 2; the realization inside the box
/// is unchanged.
pub fn cutoff(net: &Fcnn, bound: &BoxBound) -> Result<Fcnn> {
    let d = net.output_dim();
    if bound.levels.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "clamp has {} levels but network outputs {d}",
            bound.levels.len()
        )));
    }
    let c = &bound.levels;
    let layers = net.layers();
    let last = layers.last().unwrap();
    // Merge the sign flip into the former output map: u = σ(c - (A_L x + b_L)).
    let h1 = Layer {
        weight: last.weight.mapv(|w| -w),
        bias: c - &last.bias,
    };
    let h2 = Layer {
        weight: Array2::from_diag(&Array1::from_elem(d, -1.0)),
        bias: c.mapv(|v| 2.0 * v),
    };
    let out = Layer {
        weight: Array2::from_diag(&Array1::ones(d)),
        bias: c.mapv(|v| -v),
    };
    let mut all = layers[..layers.len() - 1].to_vec();
    all.push(h1);
    all.push(h2);
    all.push(out);
    Fcnn::new(all)
}

/// Scalar multiplication network `(x, y) ↦ xy` on `[-M, M]²` via the
/// polarization identity `xy = M²(p² - q²)` with `p = |x+y|/2M`,
/// `q = |x-y|/2M`, each square approximated by a sawtooth telescoping
/// network. Inputs with `x = 0` or `y = 0` map to exactly 0 because the two
/// squaring branches then receive identical inputs.
pub fn mult_net(spec: &MultSpec) -> Fcnn {
    let m = spec.range_half_width;
    let s = spec.levels;
    let inv = 1.0 / (2.0 * m);

    // (x, y) -> ReLU units of (x+y)/2M and (x-y)/2M with both signs.
    let l0 = Layer {
        weight: Array2::from_shape_vec(
            (4, 2),
            vec![inv, inv, -inv, -inv, inv, -inv, -inv, inv],
        )
        .unwrap(),
        bias: Array1::zeros(4),
    };

    // First sawtooth level: per branch, units σ(v), σ(v-1/2), σ(v-1), σ(v)
    // where v = sum of the branch's two absolute-value units.
    let mut w1 = Array2::zeros((8, 4));
    let mut b1 = Array1::zeros(8);
    for branch in 0..2 {
        let (r0, c0) = (4 * branch, 2 * branch);
        for unit in 0..4 {
            w1[[r0 + unit, c0]] = 1.0;
            w1[[r0 + unit, c0 + 1]] = 1.0;
        }
        b1[r0 + 1] = -0.5;
        b1[r0 + 2] = -1.0;
    }
    let l1 = Layer {
        weight: w1,
        bias: b1,
    };

    let mut layers = vec![l0, l1];

    // Transition consuming sawtooth level j: new units are the sawtooth of
    // g_j = 2u₁ - 4u₂ + 2u₃ and the carry u₄ - 4^{-j} g_j.
    for j in 1..s {
        let scale = 0.25f64.powi(j as i32);
        let mut w = Array2::zeros((8, 8));
        let mut b = Array1::zeros(8);
        for branch in 0..2 {
            let o = 4 * branch;
            for unit in 0..3 {
                w[[o + unit, o]] = 2.0;
                w[[o + unit, o + 1]] = -4.0;
                w[[o + unit, o + 2]] = 2.0;
            }
            b[o + 1] = -0.5;
            b[o + 2] = -1.0;
            w[[o + 3, o]] = -2.0 * scale;
            w[[o + 3, o + 1]] = 4.0 * scale;
            w[[o + 3, o + 2]] = -2.0 * scale;
            w[[o + 3, o + 3]] = 1.0;
        }
        layers.push(Layer {
            weight: w,
            bias: b,
        });
    }

    // Output: M² [(carry_p - 4^{-s} g_s(p)) - (carry_q - 4^{-s} g_s(q))].
    let scale = 0.25f64.powi(s as i32);
    let m2 = m * m;
    let mut wout = Array2::zeros((1, 8));
    for (branch, sign) in [(0usize, 1.0), (1usize, -1.0)] {
        let o = 4 * branch;
        wout[[0, o]] = sign * m2 * (-2.0 * scale);
        wout[[0, o + 1]] = sign * m2 * (4.0 * scale);
        wout[[0, o + 2]] = sign * m2 * (-2.0 * scale);
        wout[[0, o + 3]] = sign * m2;
    }
    layers.push(Layer {
        weight: wout,
        bias: Array1::zeros(1),
    });

    Fcnn::new(layers).expect("multiplication construction is well-formed")
}

/// Guaranteed uniform error of [`mult_net`] on its range box:
/// `2M² · 4^{-(levels+1)}`.
pub fn mult_net_error_bound(spec: &MultSpec) -> f64 {
    2.0 * spec.range_half_width * spec.range_half_width
        * 0.25f64.powi(spec.levels as i32 + 1)
}

/// Extraction block `z = (x, y) ↦ (x, y_j)` for `z ∈ ℝ^{d+1}`; 8 nonzero
/// parameters, depth 1.
fn extraction_net(d: usize, j: usize) -> Fcnn {
    let mut a0 = Array2::zeros((4, d + 1));
    a0[[0, 0]] = 1.0;
    a0[[1, j + 1]] = 1.0;
    a0[[2, 0]] = -1.0;
    a0[[3, j + 1]] = -1.0;
    let a1 = Array2::from_shape_vec(
        (2, 4),
        vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
    )
    .unwrap();
    Fcnn::new(vec![
        Layer {
            weight: a0,
            bias: Array1::zeros(4),
        },
        Layer {
            weight: a1,
            bias: Array1::zeros(2),
        },
    ])
    .expect("extraction construction is well-formed")
}

/// Element-wise multiplication `(x, y) ↦ x·y` for scalar `x ∈ [A₁,B₁]` and
/// vector `y ∈ [A₂,B₂]^d`, accurate to `eps` in `ℓ¹`. Each scalar product is
/// built to tolerance `eps/d`; the multiplication range half-width is
/// `max(B₁-t, B₂-t)` with `t = min(A₁,A₂)`.
pub fn elementwise_mult_net(
    d: usize,
    scalar_range: (f64, f64),
    vector_range: (f64, f64),
    eps: f64,
) -> Result<Fcnn> {
    let (a1, b1) = scalar_range;
    let (a2, b2) = vector_range;
    if !(a1.is_finite() && b1.is_finite() && a2.is_finite() && b2.is_finite())
        || a1 > b1
        || a2 > b2
    {
        return Err(Error::InvalidParameter(
            "element-wise multiplication ranges must be finite ordered intervals".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "element-wise multiplication tolerance must be positive, got {eps}"
        )));
    }
    let t = a1.min(a2);
    let half = (b1 - t).max(b2 - t).max(f64::MIN_POSITIVE);
    for v in [a1, b1, a2, b2] {
        if v.abs() > half {
            return Err(Error::InvalidParameter(format!(
                "range value {v} outside the multiplication box [-{half}, {half}]"
            )));
        }
    }
    let spec = MultSpec::new(half, (eps / d as f64).min(0.9))?;
    let mult = mult_net(&spec);
    let blocks: Vec<Fcnn> = (0..d)
        .map(|j| concatenate(&mult, &extraction_net(d, j)))
        .collect::<Result<_>>()?;
    parallelize(&blocks)
}

/// Exact linear drift `x ↦ -m x` (identity network with the output map
/// scaled by `-m`). 4d nonzero parameters, depth 1.
pub fn linear_drift_net(d: usize, m: f64) -> Result<Fcnn> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "linear drift needs m > 0, got {m}"
        )));
    }
    let id = identity_net(d);
    let mut layers = id.layers().to_vec();
    let last = layers.last_mut().unwrap();
    last.weight.mapv_inplace(|w| -m * w);
    Fcnn::new(layers)
}

/// Composite drift network and its construction constants.
#[derive(Debug, Clone)]
pub struct CompositeDriftNet {
    pub net: Fcnn,
    /// Radius of the `ℓ¹` ball on which the local approximator is trusted.
    pub inner_radius: f64,
    /// Radius `b` past which the realization equals `-mx` exactly.
    pub outer_radius: f64,
    /// Componentwise clamp level `rG` applied to the local branch.
    pub clamp_level: f64,
    /// Working tolerance `ε/√(2d)` that drives every internal budget.
    pub working_tol: f64,
}

/// Builds the globally linear-error drift approximator
///
/// `φ(x) = ×̃(indicator(x), clamp(local(x))) - mx`
///
/// from a `local` network approximating the residual `-∇V(x) + mx` on
/// `B¹_r(0)`. With `G = √(M² - m²)` the construction clamps the local branch
/// to `[-rG, rG]^d`, ramps the indicator between `r` and
/// `b = r + ε_w/max(lip_bound, M)` where `ε_w = ε/√(2d)`, and approximates the
/// product to `ε_w/√d` per coordinate. The result satisfies
/// `‖-∇V(x) - φ(x)‖₂ ≤ 9 ε_w + G ‖x‖₂` whenever `local` meets its tolerance,
/// and equals `-mx` outside `B¹_b(0)` up to rounding noise.
pub fn composite_drift_net(
    local: &Fcnn,
    r: f64,
    m: f64,
    big_m: f64,
    eps: f64,
    lip_bound: f64,
) -> Result<CompositeDriftNet> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "composite drift needs r > 0, got {r}"
        )));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "composite drift needs eps > 0, got {eps}"
        )));
    }
    if !(m > 0.0) || !(big_m >= m) || big_m >= 2f64.sqrt() * m {
        return Err(Error::InvalidParameter(format!(
            "composite drift needs 0 < m <= M < sqrt(2) m, got m={m}, M={big_m}"
        )));
    }
    let d = local.input_dim();
    if local.output_dim() != d {
        return Err(Error::DimensionMismatch(
            "local network must map R^d to R^d".into(),
        ));
    }
    if !(lip_bound >= 0.0) || !lip_bound.is_finite() {
        return Err(Error::InvalidParameter(
            "lip_bound must be a finite nonnegative Lipschitz bound".into(),
        ));
    }

    let g = (big_m * big_m - m * m).sqrt();
    let clamp_level = r * g;
    let eps_w = eps / (2.0 * d as f64).sqrt();
    let b = r + eps_w / lip_bound.max(big_m);

    let indicator = indicator_net(d, r, b - r)?;
    let clamped = cutoff(local, &BoxBound::uniform(d, clamp_level)?)?;
    let stacked = parallelize(&[indicator, clamped])?;
    let product = elementwise_mult_net(
        d,
        (0.0, 1.0),
        (-clamp_level, clamp_level),
        eps_w * (d as f64).sqrt(),
    )?;
    let local_branch = concatenate(&product, &stacked)?;
    let net = sum_networks(&[local_branch, linear_drift_net(d, m)?])?;

    Ok(CompositeDriftNet {
        net,
        inner_radius: r,
        outer_radius: b,
        clamp_level,
        working_tol: eps_w,
    })
}
