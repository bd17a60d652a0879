//! Fully connected ReLU networks as explicit weight lists.
//!
//! A network is an ordered list of affine maps `(A_0,b_0),…,(A_L,b_L)`;
//! ReLU is applied after every map except the last. The depth convention
//! counts activated transitions, so the two-affine-map identity network has
//! depth 1. Combinators operate on weights directly: summation and
//! parallelization pad shallower operands with exact identity levels,
//! concatenation merges the inner network's output map into the outer
//! network's input map.

use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// One affine map `x ↦ Wx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::DimensionMismatch(format!(
                "layer weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.iter().any(|w| !w.is_finite()) || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer entries must be finite".into()));
        }
        Ok(Self { weight, bias })
    }

    fn nonzero(&self) -> usize {
        self.weight.iter().filter(|w| **w != 0.0).count()
            + self.bias.iter().filter(|b| **b != 0.0).count()
    }

    fn dense(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Parameter counts under both conventions: `nonzero` counts nonzero entries
/// of all weights and biases, `dense` counts every entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub nonzero: usize,
    pub dense: usize,
}

/// A fully connected feed-forward network with ReLU activation.
///
/// Invariants: at least two affine maps, adjacent maps dimension-compatible,
/// all entries finite. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Fcnn {
    layers: Vec<Layer>,
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl Fcnn {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidParameter(
                "a network needs at least two affine maps".into(),
            ));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.ncols() != pair[0].weight.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} outputs {} units but layer {} expects {}",
                    i,
                    pair[0].weight.nrows(),
                    i + 1,
                    pair[1].weight.ncols()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    /// Number of activated (hidden) transitions; the identity network has depth 1.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Width of the widest hidden layer.
    pub fn max_width(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weight.nrows())
            .max()
            .unwrap_or(0)
    }

    pub fn param_count(&self) -> ParamCount {
        ParamCount {
            nonzero: self.layers.iter().map(Layer::nonzero).sum(),
            dense: self.layers.iter().map(Layer::dense).sum(),
        }
    }

    /// Forward pass; ReLU after every affine map except the last.
    pub fn realize(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input must be finite".into()));
        }
        let mut state = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.weight.dot(&state) + &layer.bias;
            if i < last {
                next.mapv_inplace(relu);
            }
            state = next;
        }
        Ok(state)
    }

    /// Forward pass over a batch; rows of `x` are samples.
    pub fn realize_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut state = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = state.dot(&layer.weight.t());
            next += &layer.bias;
            if i < last {
                next.mapv_inplace(relu);
            }
            state = next;
        }
        Ok(state)
    }

    /// Returns the network with its final affine map scaled by `h > 0`.
    /// Shape, depth, and (for finite nonzero entries) parameter counts are
    /// unchanged; the realization is scaled pointwise by `h`.
    pub fn scale_last_layer(&self, h: f64) -> Result<Fcnn> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "last-layer scale must be a positive finite real, got {h}"
            )));
        }
        let mut layers = self.layers.clone();
        let last = layers.last_mut().unwrap();
        last.weight.mapv_inplace(|w| h * w);
        last.bias.mapv_inplace(|b| h * b);
        Fcnn::new(layers)
    }

    /// Product of layer-wise spectral norms: an upper bound on the Lipschitz
    /// constant of the realization (ReLU is 1-Lipschitz).
    pub fn lipschitz_upper_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| spectral_norm(&l.weight))
            .product()
    }

    /// Appends one exact identity level: realization unchanged, depth + 1.
    ///
    /// The final affine map `(A,b)` becomes a hidden layer `([A;−A],[b;−b])`
    /// followed by the output map `([I|−I], 0)`.
    pub fn pad_one_level(&self) -> Fcnn {
        let k = self.output_dim();
        let last = self.layers.last().unwrap();
        let mut hidden_w = Array2::zeros((2 * k, last.weight.ncols()));
        let mut hidden_b = Array1::zeros(2 * k);
        for r in 0..k {
            for c in 0..last.weight.ncols() {
                hidden_w[[r, c]] = last.weight[[r, c]];
                hidden_w[[r + k, c]] = -last.weight[[r, c]];
            }
            hidden_b[r] = last.bias[r];
            hidden_b[r + k] = -last.bias[r];
        }
        let mut out_w = Array2::zeros((k, 2 * k));
        for r in 0..k {
            out_w[[r, r]] = 1.0;
            out_w[[r, r + k]] = -1.0;
        }
        let mut layers = self.layers[..self.layers.len() - 1].to_vec();
        layers.push(Layer {
            weight: hidden_w,
            bias: hidden_b,
        });
        layers.push(Layer {
            weight: out_w,
            bias: Array1::zeros(k),
        });
        Fcnn { layers }
    }

    fn pad_to_depth(&self, depth: usize) -> Fcnn {
        let mut net = self.clone();
        while net.depth() < depth {
            net = net.pad_one_level();
        }
        net
    }
}

/// Largest singular value via power iteration on `AᵀA` (50 iterations,
/// tolerance 1e-8).
pub fn spectral_norm(a: &Array2<f64>) -> f64 {
    if a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let n = a.ncols();
    let mut v = Array1::from_elem(n, (n as f64).sqrt().recip());
    let mut prev = 0.0;
    for _ in 0..50 {
        let av = a.dot(&v);
        let mut w = a.t().dot(&av);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        w.mapv_inplace(|x| x / norm);
        let est = a.dot(&w).mapv(|x| x * x).sum().sqrt();
        if (est - prev).abs() <= 1e-8 * est.max(1.0) {
            return est;
        }
        prev = est;
        v = w;
    }
    prev
}

/// Pointwise sum of networks sharing input and output dimensions.
///
/// Shallower summands are padded with identity levels to the maximum depth,
/// hidden layers are stacked block-diagonally, and the output maps are
/// concatenated so the realization is the exact pointwise sum (up to
/// floating-point associativity). Depth is the maximum summand depth.
pub fn sum_networks(nets: &[Fcnn]) -> Result<Fcnn> {
    let stacked = stack_blocks(nets)?;
    let k = nets[0].output_dim();
    if nets.iter().any(|n| n.output_dim() != k) {
        return Err(Error::DimensionMismatch(
            "sum_networks requires equal output dimensions".into(),
        ));
    }
    // Merge the stacked output rows: out = Σ_i (A_L^i x_L^i + b_L^i).
    let padded: Vec<Fcnn> = stacked;
    let total_cols: usize = padded
        .iter()
        .map(|n| n.layers.last().unwrap().weight.ncols())
        .sum();
    let mut out_w = Array2::zeros((k, total_cols));
    let mut out_b = Array1::zeros(k);
    let mut col = 0;
    for net in &padded {
        let last = net.layers.last().unwrap();
        out_w
            .slice_mut(ndarray::s![.., col..col + last.weight.ncols()])
            .assign(&last.weight);
        out_b += &last.bias;
        col += last.weight.ncols();
    }
    let mut layers = block_hidden_layers(&padded)?;
    layers.push(Layer {
        weight: out_w,
        bias: out_b,
    });
    Fcnn::new(layers)
}

/// Stacks networks over a shared input: the realization is the concatenation
/// of the individual realizations, output dimension is the sum of output
/// dimensions. No parameters are added beyond depth padding.
pub fn parallelize(nets: &[Fcnn]) -> Result<Fcnn> {
    let padded = stack_blocks(nets)?;
    let out_dim: usize = padded.iter().map(Fcnn::output_dim).sum();
    let total_cols: usize = padded
        .iter()
        .map(|n| n.layers.last().unwrap().weight.ncols())
        .sum();
    let mut out_w = Array2::zeros((out_dim, total_cols));
    let mut out_b = Array1::zeros(out_dim);
    let (mut row, mut col) = (0, 0);
    for net in &padded {
        let last = net.layers.last().unwrap();
        out_w
            .slice_mut(ndarray::s![
                row..row + last.weight.nrows(),
                col..col + last.weight.ncols()
            ])
            .assign(&last.weight);
        out_b
            .slice_mut(ndarray::s![row..row + last.bias.len()])
            .assign(&last.bias);
        row += last.weight.nrows();
        col += last.weight.ncols();
    }
    let mut layers = block_hidden_layers(&padded)?;
    layers.push(Layer {
        weight: out_w,
        bias: out_b,
    });
    Fcnn::new(layers)
}

fn stack_blocks(nets: &[Fcnn]) -> Result<Vec<Fcnn>> {
    if nets.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one network".into(),
        ));
    }
    let d = nets[0].input_dim();
    if nets.iter().any(|n| n.input_dim() != d) {
        return Err(Error::DimensionMismatch(
            "all networks must share the input dimension".into(),
        ));
    }
    let depth = nets.iter().map(Fcnn::depth).max().unwrap();
    Ok(nets.iter().map(|n| n.pad_to_depth(depth)).collect())
}

/// Hidden layers of the block network: first layer stacked vertically over
/// the shared input, later layers block-diagonal.
fn block_hidden_layers(padded: &[Fcnn]) -> Result<Vec<Layer>> {
    let depth = padded[0].depth();
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let rows: usize = padded.iter().map(|n| n.layers[l].weight.nrows()).sum();
        let (w, b) = if l == 0 {
            let d = padded[0].input_dim();
            let mut w = Array2::zeros((rows, d));
            let mut b = Array1::zeros(rows);
            let mut row = 0;
            for net in padded {
                let layer = &net.layers[0];
                w.slice_mut(ndarray::s![row..row + layer.weight.nrows(), ..])
                    .assign(&layer.weight);
                b.slice_mut(ndarray::s![row..row + layer.bias.len()])
                    .assign(&layer.bias);
                row += layer.weight.nrows();
            }
            (w, b)
        } else {
            let cols: usize = padded.iter().map(|n| n.layers[l].weight.ncols()).sum();
            let mut w = Array2::zeros((rows, cols));
            let mut b = Array1::zeros(rows);
            let (mut row, mut col) = (0, 0);
            for net in padded {
                let layer = &net.layers[l];
                w.slice_mut(ndarray::s![
                    row..row + layer.weight.nrows(),
                    col..col + layer.weight.ncols()
                ])
                .assign(&layer.weight);
                b.slice_mut(ndarray::s![row..row + layer.bias.len()])
                    .assign(&layer.bias);
                row += layer.weight.nrows();
                col += layer.weight.ncols();
            }
            (w, b)
        };
        layers.push(Layer { weight: w, bias: b });
    }
    Ok(layers)
}

/// Composition `outer ∘ inner` with the inner output map merged into the
/// outer input map: the merged layer is `(A_0^outer A_L^inner,
/// A_0^outer b_L^inner + b_0^outer)`. Depth is `depth(inner) + depth(outer)`.
pub fn concatenate(outer: &Fcnn, inner: &Fcnn) -> Result<Fcnn> {
    if inner.output_dim() != outer.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "inner outputs {} but outer expects {}",
            inner.output_dim(),
            outer.input_dim()
        )));
    }
    let inner_last = inner.layers.last().unwrap();
    let outer_first = &outer.layers[0];
    let merged = Layer {
        weight: outer_first.weight.dot(&inner_last.weight),
        bias: outer_first.weight.dot(&inner_last.bias) + &outer_first.bias,
    };
    let mut layers = inner.layers[..inner.layers.len() - 1].to_vec();
    layers.push(merged);
    layers.extend_from_slice(&outer.layers[1..]);
    Fcnn::new(layers)
}

// --- JSON wire format -------------------------------------------------------
//
// {"layers":[{"A":[[...],[...]],"b":[...]}, ...]} with row-major matrices.
// serde_json emits shortest round-trip decimal for f64, so the format is
// bit-exact for finite doubles.

#[derive(Serialize, Deserialize)]
struct NetJson {
    layers: Vec<LayerJson>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Fcnn {
    pub fn to_json(&self) -> String {
        let doc = NetJson {
            layers: self
                .layers
                .iter()
                .map(|l| LayerJson {
                    a: l.weight.rows().into_iter().map(|r| r.to_vec()).collect(),
                    b: l.bias.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("network serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Fcnn> {
        let doc: NetJson =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        let mut layers = Vec::with_capacity(doc.layers.len());
        for l in doc.layers {
            let rows = l.a.len();
            let cols = l.a.first().map(Vec::len).unwrap_or(0);
            if rows == 0 || cols == 0 || l.a.iter().any(|r| r.len() != cols) {
                return Err(Error::Serialization("ragged or empty weight matrix".into()));
            }
            let flat: Vec<f64> = l.a.into_iter().flatten().collect();
            let weight = Array2::from_shape_vec((rows, cols), flat)
                .map_err(|e| Error::Serialization(e.to_string()))?;
            layers.push(Layer::new(weight, Array1::from_vec(l.b))?);
        }
        Fcnn::new(layers)
    }
}

/// Mean row of a batch output; small helper shared by diagnostics.
pub fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::identity_net;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> Fcnn {
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weight: Array2::from_shape_fn((w[1], w[0]), |_| {
                    rng.random_range(-scale..scale)
                }),
                bias: Array1::from_shape_fn(w[1], |_| rng.random_range(-scale..scale)),
            })
            .collect();
        Fcnn::new(layers).unwrap()
    }

    #[test]
    fn rejects_single_affine_map() {
        let layers = vec![Layer {
            weight: array![[1.0]],
            bias: array![0.0],
        }];
        assert!(Fcnn::new(layers).is_err());
    }

    #[test]
    fn rejects_dimension_mismatch_and_nonfinite() {
        let bad = vec![
            Layer {
                weight: array![[1.0], [2.0]],
                bias: array![0.0, 0.0],
            },
            Layer {
                weight: array![[1.0, 2.0, 3.0]],
                bias: array![0.0],
            },
        ];
        assert!(matches!(Fcnn::new(bad), Err(Error::DimensionMismatch(_))));
        assert!(Layer::new(array![[f64::NAN]], array![0.0]).is_err());
    }

    #[test]
    fn realize_rejects_wrong_length_input() {
        let net = identity_net(3);
        assert!(net.realize(array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn no_activation_after_last_layer() {
        // Single hidden layer with a strongly negative final bias: a trailing
        // ReLU would clamp the output to zero.
        let net = Fcnn::new(vec![
            Layer {
                weight: array![[1.0]],
                bias: array![0.0],
            },
            Layer {
                weight: array![[1.0]],
                bias: array![-5.0],
            },
        ])
        .unwrap();
        let y = net.realize(array![1.0].view()).unwrap();
        assert_eq!(y[0], -4.0);
    }

    #[test]
    fn batch_matches_single_realize() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = random_net(&mut rng, &[3, 8, 5, 2], 0.7);
        let batch = Array2::from_shape_fn((40, 3), |_| rng.random_range(-4.0..4.0));
        let out = net.realize_batch(batch.view()).unwrap();
        for (row_in, row_out) in batch.rows().into_iter().zip(out.rows()) {
            let single = net.realize(row_in).unwrap();
            for (a, b) in single.iter().zip(row_out.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sum_of_identity_and_negated_identity_is_zero() {
        let id = identity_net(3);
        let mut neg = id.clone();
        // Manual negation of the output map (scale_last_layer rejects h <= 0).
        let last = neg.layers.last_mut().unwrap();
        last.weight.mapv_inplace(|w| -w);
        let sum = sum_networks(&[id, neg]).unwrap();
        let y = sum.realize(array![1.5, -2.0, 0.25].view()).unwrap();
        assert_eq!(y, array![0.0, 0.0, 0.0]);
    }

    #[test]
    fn sum_of_two_identities_doubles() {
        let id = identity_net(2);
        let sum = sum_networks(&[id.clone(), id]).unwrap();
        let y = sum.realize(array![1.0, 2.0].view()).unwrap();
        assert_eq!(y, array![2.0, 4.0]);
    }

    #[test]
    fn sum_depth_is_max_depth() {
        let shallow = identity_net(2); // depth 1
        let deep = shallow.pad_one_level().pad_one_level(); // depth 3
        assert_eq!(deep.depth(), 3);
        let sum = sum_networks(&[shallow, deep]).unwrap();
        assert_eq!(sum.depth(), 3);
    }

    #[test]
    fn sum_padding_cost_is_recorded_bound() {
        // Padding one level duplicates the final affine map and adds the
        // 2k-entry collapse; assert the measured overhead formula.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_net(&mut rng, &[3, 6, 3], 0.5); // depth 2
        let b = random_net(&mut rng, &[3, 5, 7, 4, 3], 0.5); // depth 4
        let last = a.layers.last().unwrap();
        let per_level = last.nonzero() + 2 * a.output_dim();
        let sum = sum_networks(&[a.clone(), b.clone()]).unwrap();
        let bound = a.param_count().nonzero + b.param_count().nonzero + 2 * per_level;
        assert!(sum.param_count().nonzero <= bound);
    }

    #[test]
    fn parallelize_shares_input() {
        let nets = [identity_net(1), identity_net(1)];
        let par = parallelize(&nets).unwrap();
        assert_eq!(par.output_dim(), 2);
        let y = par.realize(array![5.0].view()).unwrap();
        assert_eq!(y, array![5.0, 5.0]);
        // No fan-out overhead: exactly the summand parameters.
        assert_eq!(
            par.param_count().nonzero,
            nets.iter().map(|n| n.param_count().nonzero).sum::<usize>()
        );
    }

    #[test]
    fn parallelize_output_dim_is_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_net(&mut rng, &[4, 6, 2], 0.4);
        let b = random_net(&mut rng, &[4, 3, 3], 0.4);
        let par = parallelize(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(par.output_dim(), 5);
        let x = array![0.3, -1.0, 2.0, 0.5];
        let y = par.realize(x.view()).unwrap();
        let ya = a.realize(x.view()).unwrap();
        let yb = b.realize(x.view()).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(y[i], ya[i], epsilon = 1e-12);
        }
        for i in 0..3 {
            assert_abs_diff_eq!(y[2 + i], yb[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn concatenate_identities_is_identity() {
        let net = concatenate(&identity_net(3), &identity_net(3)).unwrap();
        let x = array![0.5, -2.0, 4.0];
        assert_eq!(net.realize(x.view()).unwrap(), x);
        assert_eq!(net.depth(), 2);
    }

    #[test]
    fn concatenate_matches_unfused_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let inner = random_net(&mut rng, &[4, 9, 6], 0.5);
        let outer = random_net(&mut rng, &[6, 7, 3], 0.5);
        let fused = concatenate(&outer, &inner).unwrap();
        assert_eq!(fused.depth(), inner.depth() + outer.depth());
        let mut max_diff: f64 = 0.0;
        for _ in 0..100 {
            let x = Array1::from_shape_fn(4, |_| rng.random_range(-10.0..10.0));
            let direct = fused.realize(x.view()).unwrap();
            let composed = outer
                .realize(inner.realize(x.view()).unwrap().view())
                .unwrap();
            for (a, b) in direct.iter().zip(composed.iter()) {
                max_diff = max_diff.max((a - b).abs());
            }
        }
        assert!(max_diff <= 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn scale_last_layer_halves_identity() {
        let net = identity_net(4).scale_last_layer(0.5).unwrap();
        let x = array![2.0, -6.0, 0.0, 1.0];
        assert_eq!(net.realize(x.view()).unwrap(), array![1.0, -3.0, 0.0, 0.5]);
    }

    #[test]
    fn scale_last_layer_keeps_counts_and_rejects_nonpositive() {
        let net = identity_net(5);
        let scaled = net.scale_last_layer(0.37).unwrap();
        assert_eq!(net.param_count(), scaled.param_count());
        assert_eq!(net.depth(), scaled.depth());
        assert!(net.scale_last_layer(0.0).is_err());
        assert!(net.scale_last_layer(-1.0).is_err());
    }

    #[test]
    fn scale_by_one_is_realization_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = random_net(&mut rng, &[3, 5, 3], 0.8);
        let scaled = net.scale_last_layer(1.0).unwrap();
        let x = array![0.2, -0.4, 1.7];
        assert_eq!(
            net.realize(x.view()).unwrap(),
            scaled.realize(x.view()).unwrap()
        );
    }

    #[test]
    fn lipschitz_bound_dominates_sampled_increments() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..20 {
            let hidden = rng.random_range(2..=8);
            let depth = rng.random_range(1..=4);
            let mut dims = vec![rng.random_range(1..=8)];
            for _ in 0..depth {
                dims.push(hidden);
            }
            dims.push(rng.random_range(1..=8));
            let net = random_net(&mut rng, &dims, 0.9);
            let bound = net.lipschitz_upper_bound();
            for _ in 0..50 {
                let x = Array1::from_shape_fn(dims[0], |_| rng.random_range(-5.0..5.0));
                let y = Array1::from_shape_fn(dims[0], |_| rng.random_range(-5.0..5.0));
                let fx = net.realize(x.view()).unwrap();
                let fy = net.realize(y.view()).unwrap();
                let num = (&fx - &fy).mapv(|v| v * v).sum().sqrt();
                let den = (&x - &y).mapv(|v| v * v).sum().sqrt();
                assert!(num <= bound * den * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, -7.0]];
        assert_abs_diff_eq!(spectral_norm(&a), 7.0, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(values in proptest::collection::vec(-1e12f64..1e12, 12)) {
            let w0 = Array2::from_shape_vec((3, 2), values[0..6].to_vec()).unwrap();
            let b0 = Array1::from_vec(values[6..9].to_vec());
            let w1 = Array2::from_shape_vec((1, 3), values[9..12].to_vec()).unwrap();
            let b1 = array![values[0] * 0.5];
            let net = Fcnn::new(vec![
                Layer { weight: w0, bias: b0 },
                Layer { weight: w1, bias: b1 },
            ]).unwrap();
            let back = Fcnn::from_json(&net.to_json()).unwrap();
            for (la, lb) in net.layers().iter().zip(back.layers()) {
                for (a, b) in la.weight.iter().zip(lb.weight.iter()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
                for (a, b) in la.bias.iter().zip(lb.bias.iter()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }

        #[test]
        fn sum_realization_matches_pointwise_sum(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = rng.random_range(1..=4);
            let k = rng.random_range(1..=3);
            let (w1, w2, w3) = (
                rng.random_range(2..=6),
                rng.random_range(2..=6),
                rng.random_range(2..=6),
            );
            let a = random_net(&mut rng, &[d, w1, k], 0.6);
            let b = random_net(&mut rng, &[d, w2, w3, k], 0.6);
            let sum = sum_networks(&[a.clone(), b.clone()]).unwrap();
            for _ in 0..10 {
                let x = Array1::from_shape_fn(d, |_| rng.random_range(-10.0..10.0));
                let lhs = sum.realize(x.view()).unwrap();
                let rhs = a.realize(x.view()).unwrap() + b.realize(x.view()).unwrap();
                for (l, r) in lhs.iter().zip(rhs.iter()) {
                    prop_assert!((l - r).abs() <= 1e-12);
                }
            }
        }
    }
}
