//! From-scratch drift-network training.
//!
//! A small ReLU MLP (`d → width → … → d`) is fit by minibatch Adam to the
//! drift `-∇V` over a particle cloud; the staged pipeline trains one network
//! per chain step, each on the cloud produced by the already-trained prefix,
//! and returns the h-scaled blocks ready for the ResNet-like realization.
//! Everything is seeded and single-threaded per network, so runs are
//! bit-reproducible.

use crate::langevin::NoiseStream;
use crate::nn::{Fcnn, Layer};
use crate::seed::{self, tag};
use crate::targets::{PotentialTarget, ReferenceDistribution};
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Training protocol. Defaults mirror the experimental setting: 2 hidden
/// layers of width 32, 50 epochs over 10,000 samples with batches of 64,
/// Adam at learning rate 5e-4, horizon T = 4 split into 200 steps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainSpec {
    pub hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dataset_size: usize,
    pub horizon: f64,
    pub steps: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Initialize each step's network from the previous step's weights
    /// instead of fresh random weights.
    pub warm_start: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            width: 32,
            epochs: 50,
            batch_size: 64,
            learning_rate: 5e-4,
            dataset_size: 10_000,
            horizon: 4.0,
            steps: 200,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            warm_start: false,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0
            || self.width == 0
            || self.batch_size == 0
            || self.dataset_size == 0
            || self.steps == 0
        {
            return Err(Error::InvalidParameter(
                "train spec sizes must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(
                "learning rate and horizon must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Chain step size `h = T/K`.
    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    fn layer_dims(&self, d: usize) -> Vec<usize> {
        let mut dims = vec![d];
        dims.extend(std::iter::repeat(self.width).take(self.hidden_layers));
        dims.push(d);
        dims
    }
}

/// Glorot-uniform layer tensors: weights `U(-√(6/(fan_in+fan_out)), +…)`,
/// biases zero.
pub fn init_weights(dims: &[usize], seed: u64) -> Result<Vec<Layer>> {
    if dims.len() < 2 || dims.iter().any(|d| *d == 0) {
        return Err(Error::InvalidParameter(
            "weight initialization needs at least two positive dims".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weight: Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-a..a)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect())
}

/// MLP with dense per-layer Adam state. Layout matches [`Fcnn`]: affine maps
/// with ReLU after all but the last.
struct Mlp {
    layers: Vec<Layer>,
    adam_m: Vec<Layer>,
    adam_v: Vec<Layer>,
    step: usize,
}

struct Gradients {
    layers: Vec<Layer>,
}

impl Mlp {
    fn new(layers: Vec<Layer>) -> Self {
        let zeros = |l: &Layer| Layer {
            weight: Array2::zeros(l.weight.dim()),
            bias: Array1::zeros(l.bias.len()),
        };
        Self {
            adam_m: layers.iter().map(zeros).collect(),
            adam_v: layers.iter().map(zeros).collect(),
            layers,
            step: 0,
        }
    }

    /// Forward pass retaining pre-activation signs for backprop.
    fn forward(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let mut activations = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weight.t());
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
            }
            activations.push(z);
        }
        let out = activations.pop().unwrap();
        (activations, out)
    }

    /// Mean-squared loss `(1/B) Σ ‖φ(x) - t‖²` and its weight gradients.
    fn loss_and_grads(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Gradients) {
        let batch = x.nrows() as f64;
        let (activations, out) = self.forward(x);
        let diff = &out - &target;
        let loss = diff.mapv(|v| v * v).sum() / batch;

        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: Array2::zeros(l.weight.dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();

        // d loss / d out
        let mut delta = diff.mapv(|v| 2.0 * v / batch);
        for i in (0..self.layers.len()).rev() {
            let input = &activations[i];
            grads[i].weight = delta.t().dot(input);
            grads[i].bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weight);
                // ReLU mask of the layer input (post-activation of layer i-1).
                back.zip_mut_with(input, |b, a| {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                });
                delta = back;
            }
        }
        (loss, Gradients { layers: grads })
    }

    fn adam_step(&mut self, grads: &Gradients, spec: &TrainSpec) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps, lr) = (
            spec.adam_beta1,
            spec.adam_beta2,
            spec.adam_eps,
            spec.learning_rate,
        );
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for ((layer, grad), (m, v)) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.adam_m.iter_mut().zip(self.adam_v.iter_mut()))
        {
            ndarray::Zip::from(&mut layer.weight)
                .and(&grad.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(&grad.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                });
        }
    }

    fn into_fcnn(self) -> Fcnn {
        Fcnn::new(self.layers).expect("trained layers are well-formed")
    }
}

/// Fisher–Yates shuffle of index order.
fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

fn gather_rows(data: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), data.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&data.row(i));
    }
    out
}

/// Per-epoch mean training loss curve of one network.
pub type LossCurve = Vec<f64>;

/// Trains one drift network on `samples` against `target_fn` (typically
/// `x ↦ -∇V(x)`). Returns the fitted network and its loss curve; epoch 0 in
/// the curve is the pre-training loss.
pub fn train_drift_net<F>(
    samples: ArrayView2<f64>,
    target_fn: F,
    spec: &TrainSpec,
    seed: u64,
    init: Option<&Fcnn>,
) -> Result<(Fcnn, LossCurve)>
where
    F: Fn(ArrayView2<f64>) -> Array2<f64>,
{
    spec.validate()?;
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training samples must be finite".into()));
    }
    let d = samples.ncols();
    let layers = match init {
        Some(net) => net.layers().to_vec(),
        None => init_weights(&spec.layer_dims(d), seed::derive(seed, tag::TRAIN_INIT))?,
    };
    let mut mlp = Mlp::new(layers);
    let targets = target_fn(samples);
    if targets.dim() != samples.dim() {
        return Err(Error::DimensionMismatch(
            "drift targets must match the sample cloud shape".into(),
        ));
    }

    let mut curve = Vec::with_capacity(spec.epochs + 1);
    let (loss0, _) = mlp.loss_and_grads(samples, targets.view());
    curve.push(loss0);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, tag::TRAIN_SHUFFLE));
    let n = samples.nrows();
    for epoch in 0..spec.epochs {
        let order = shuffled_indices(n, &mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(spec.batch_size) {
            let x = gather_rows(samples, chunk);
            let t = gather_rows(targets.view(), chunk);
            let (loss, grads) = mlp.loss_and_grads(x.view(), t.view());
            if !loss.is_finite() {
                return Err(Error::TrainingAbort { k: 0, epoch });
            }
            mlp.adam_step(&grads, spec);
            epoch_loss += loss;
            batches += 1.0;
        }
        curve.push(epoch_loss / batches);
    }
    Ok((mlp.into_fcnn(), curve))
}

/// Compares analytic backprop against central finite differences on a fresh
/// Glorot-initialized network of shape `dims`, probing `probes` random
/// weights per layer at the given difference step. Returns the maximum
/// relative error observed.
pub fn gradient_check_max_rel_err(
    dims: &[usize],
    batch: usize,
    probes: usize,
    step: f64,
    seed: u64,
) -> Result<f64> {
    let layers = init_weights(dims, seed)?;
    let mut mlp = Mlp::new(layers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, 0xF1D));
    let d_in = dims[0];
    let d_out = *dims.last().unwrap();
    let x = Array2::from_shape_fn((batch, d_in), |_| rng.random_range(-2.0..2.0));
    let t = Array2::from_shape_fn((batch, d_out), |_| rng.random_range(-2.0..2.0));
    let (_, grads) = mlp.loss_and_grads(x.view(), t.view());
    let mut worst: f64 = 0.0;
    for layer_idx in 0..mlp.layers.len() {
        for _ in 0..probes {
            let r = rng.random_range(0..mlp.layers[layer_idx].weight.nrows());
            let c = rng.random_range(0..mlp.layers[layer_idx].weight.ncols());
            let orig = mlp.layers[layer_idx].weight[[r, c]];
            mlp.layers[layer_idx].weight[[r, c]] = orig + step;
            let (lp, _) = mlp.loss_and_grads(x.view(), t.view());
            mlp.layers[layer_idx].weight[[r, c]] = orig - step;
            let (lm, _) = mlp.loss_and_grads(x.view(), t.view());
            mlp.layers[layer_idx].weight[[r, c]] = orig;
            let fd = (lp - lm) / (2.0 * step);
            let an = grads.layers[layer_idx].weight[[r, c]];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
        }
    }
    Ok(worst)
}

/// A trained per-step stack: `psis[k]` is the h-scaled block for step `k+1`,
/// `drifts[k]` the unscaled drift network it came from.
#[derive(Debug, Clone)]
pub struct TrainedStack {
    pub psis: Vec<Fcnn>,
    pub drifts: Vec<Fcnn>,
    pub loss_curves: Vec<LossCurve>,
    pub spec: TrainSpec,
    pub seed: u64,
}

impl TrainedStack {
    pub fn step_size(&self) -> f64 {
        self.spec.step_size()
    }
}

/// Staged pipeline: for each step `k = 1..=K`, fit a drift network on the
/// current cloud, scale its last layer by `h`, then advance the cloud one
/// Euler step with the freshly trained drift and step-`k` noise. The cloud
/// therefore always follows the distribution the stack produces at
/// inference time.
pub fn train_pipeline(
    target: &PotentialTarget,
    reference: &ReferenceDistribution,
    spec: &TrainSpec,
    seed: u64,
) -> Result<TrainedStack> {
    spec.validate()?;
    let d = target.dim();
    let h = spec.step_size();
    let n = spec.dataset_size;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, tag::INIT_CLOUD));
    let mut cloud = reference.sample(n, d, &mut init_rng)?;
    let noise = NoiseStream::new(seed, n, d, h);

    let mut psis = Vec::with_capacity(spec.steps);
    let mut drifts = Vec::with_capacity(spec.steps);
    let mut loss_curves = Vec::with_capacity(spec.steps);

    for k in 1..=spec.steps {
        let warm = if spec.warm_start { drifts.last() } else { None };
        let step_seed = seed::derive(seed, (k as u64) << 8);
        let (net, curve) = train_drift_net(
            cloud.view(),
            |x| target.grad_batch(x).mapv(|g| -g),
            spec,
            step_seed,
            warm,
        )
        .map_err(|e| match e {
            Error::TrainingAbort { epoch, .. } => Error::TrainingAbort { k, epoch },
            other => other,
        })?;

        // Advance the cloud through the trained drift: Y += h φ_k(Y) + ξ_k.
        let drift = net.realize_batch(cloud.view())?;
        let mut abort = false;
        for (i, mut row) in cloud.rows_mut().into_iter().enumerate() {
            let mut xi = vec![0.0; d];
            noise.fill_increment(k, i, &mut xi);
            for (j, v) in row.iter_mut().enumerate() {
                *v += h * drift[[i, j]] + xi[j];
                abort |= !v.is_finite() || v.abs() > crate::langevin::BLOW_UP_GUARD;
            }
        }
        if abort {
            return Err(Error::NumericAbort {
                step: k,
                message: "training cloud exceeded the blow-up guard".into(),
            });
        }

        psis.push(net.scale_last_layer(h)?);
        drifts.push(net);
        loss_curves.push(curve);
    }

    Ok(TrainedStack {
        psis,
        drifts,
        loss_curves,
        spec: spec.clone(),
        seed,
    })
}

// --- Stack serialization -----------------------------------------------------
//
// A trained stack is a directory: manifest.json (spec, seed, file list) plus
// one network JSON per step and a loss-curve CSV.

#[derive(Serialize, Deserialize)]
struct StackManifest {
    schema_version: u32,
    spec: TrainSpec,
    seed: u64,
    step_size: f64,
    files: Vec<String>,
}

impl TrainedStack {
    /// Writes `manifest.json`, per-step `step_XXX.json` (h-scaled blocks),
    /// and `loss_curves.csv` under `dir`.
    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.psis.len());
        for (i, psi) in self.psis.iter().enumerate() {
            let name = format!("step_{:04}.json", i + 1);
            std::fs::write(dir.join(&name), psi.to_json())?;
            files.push(name);
        }
        let manifest = StackManifest {
            schema_version: 1,
            spec: self.spec.clone(),
            seed: self.seed,
            step_size: self.step_size(),
            files,
        };
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)
                .map_err(|e| Error::Serialization(e.to_string()))?,
        )?;
        let mut csv = String::from("step,epoch,loss\n");
        for (k, curve) in self.loss_curves.iter().enumerate() {
            for (epoch, loss) in curve.iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", k + 1, epoch, loss));
            }
        }
        std::fs::write(dir.join("loss_curves.csv"), csv)?;
        Ok(())
    }

    /// Loads the h-scaled blocks of a saved stack.
    pub fn load_blocks(dir: &std::path::Path) -> Result<Vec<Fcnn>> {
        let manifest: StackManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)
                .map_err(|e| Error::Serialization(e.to_string()))?;
        manifest
            .files
            .iter()
            .map(|name| Fcnn::from_json(&std::fs::read_to_string(dir.join(name))?))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::gaussian_target;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn quick_spec() -> TrainSpec {
        TrainSpec {
            epochs: 30,
            dataset_size: 512,
            learning_rate: 5e-3,
            width: 16,
            steps: 4,
            horizon: 0.4,
            ..TrainSpec::default()
        }
    }

    #[test]
    fn init_weights_shape_and_moments() {
        let layers = init_weights(&[10, 32, 32, 10], 7).unwrap();
        assert_eq!(layers.len(), 3);
        for l in &layers {
            assert!(l.bias.iter().all(|b| *b == 0.0));
        }
        // Empirical variance of U(-a, a) is a²/3 = 2/(fan_in+fan_out).
        let w = &layers[1].weight;
        let var = w.mapv(|v| v * v).mean().unwrap();
        let expect = 2.0 / 64.0;
        assert!((var - expect).abs() <= 0.1 * expect, "var {var}");
        // Same seed, same tensors.
        let again = init_weights(&[10, 32, 32, 10], 7).unwrap();
        assert_eq!(layers[0].weight, again[0].weight);
    }

    #[test]
    fn zero_epochs_returns_initialized_net() {
        let samples = Array2::from_shape_fn((32, 1), |(i, _)| i as f64 / 16.0 - 1.0);
        let spec = TrainSpec {
            epochs: 0,
            ..quick_spec()
        };
        let (net, curve) = train_drift_net(samples.view(), |x| x.to_owned(), &spec, 3, None).unwrap();
        assert_eq!(curve.len(), 1);
        let fresh = init_weights(&spec.layer_dims(1), seed::derive(3, tag::TRAIN_INIT)).unwrap();
        assert_eq!(net.layers()[0].weight, fresh[0].weight);
    }

    #[test]
    fn linear_drift_is_learned() {
        // d=1 quadratic target: drift -x is linear and easily fit.
        let target = gaussian_target(Array1::zeros(1), Array2::eye(1)).unwrap();
        let samples = Array2::from_shape_fn((512, 1), |(i, _)| (i as f64 / 256.0 - 1.0) * 2.5);
        let spec = TrainSpec {
            epochs: 50,
            ..quick_spec()
        };
        let (_, curve) = train_drift_net(
            samples.view(),
            |x| target.grad_batch(x).mapv(|g| -g),
            &spec,
            11,
            None,
        )
        .unwrap();
        let last = *curve.last().unwrap();
        assert!(last < 1e-3, "final MSE {last}");
        assert!(last < curve[0]);
    }

    #[test]
    fn gradient_check_against_central_differences() {
        // Analytic backprop vs finite differences over every layer shape.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [1usize, 3] {
            let dims = [d, 8, 8, d];
            let layers = init_weights(&dims, 99).unwrap();
            let mut mlp = Mlp::new(layers);
            let x = Array2::from_shape_fn((16, d), |_| rng.random_range(-2.0..2.0));
            let t = Array2::from_shape_fn((16, d), |_| rng.random_range(-2.0..2.0));
            let (_, grads) = mlp.loss_and_grads(x.view(), t.view());
            let step = 1e-6;
            for layer_idx in 0..mlp.layers.len() {
                for _ in 0..20 {
                    let r = rng.random_range(0..mlp.layers[layer_idx].weight.nrows());
                    let c = rng.random_range(0..mlp.layers[layer_idx].weight.ncols());
                    let orig = mlp.layers[layer_idx].weight[[r, c]];
                    mlp.layers[layer_idx].weight[[r, c]] = orig + step;
                    let (lp, _) = mlp.loss_and_grads(x.view(), t.view());
                    mlp.layers[layer_idx].weight[[r, c]] = orig - step;
                    let (lm, _) = mlp.loss_and_grads(x.view(), t.view());
                    mlp.layers[layer_idx].weight[[r, c]] = orig;
                    let fd = (lp - lm) / (2.0 * step);
                    let an = grads.layers[layer_idx].weight[[r, c]];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                    assert!(rel < 1e-5, "layer {layer_idx} [{r},{c}]: fd {fd} an {an}");
                }
            }
        }
    }

    #[test]
    fn adam_step_with_zero_gradient_is_identity() {
        let layers = init_weights(&[2, 4, 2], 1).unwrap();
        let mut mlp = Mlp::new(layers.clone());
        let zero = Gradients {
            layers: layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        };
        mlp.adam_step(&zero, &TrainSpec::default());
        for (a, b) in mlp.layers.iter().zip(&layers) {
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn nan_loss_aborts_with_epoch() {
        let samples = array![[1.0e200], [2.0e200]];
        let spec = TrainSpec {
            learning_rate: 1e10,
            epochs: 50,
            batch_size: 2,
            dataset_size: 2,
            ..quick_spec()
        };
        match train_drift_net(samples.view(), |x| x.mapv(|v| v * 1e200), &spec, 1, None) {
            Err(Error::TrainingAbort { .. }) => {}
            other => panic!("expected training abort, got {other:?}"),
        }
    }

    #[test]
    fn pipeline_is_deterministic_and_scaled() {
        let target = gaussian_target(Array1::zeros(2), Array2::eye(2)).unwrap();
        let reference = ReferenceDistribution::standard_normal();
        let spec = TrainSpec {
            epochs: 3,
            dataset_size: 128,
            steps: 3,
            horizon: 0.3,
            width: 8,
            ..TrainSpec::default()
        };
        let a = train_pipeline(&target, &reference, &spec, 42).unwrap();
        let b = train_pipeline(&target, &reference, &spec, 42).unwrap();
        assert_eq!(a.psis.len(), 3);
        for (x, y) in a.loss_curves.iter().flatten().zip(b.loss_curves.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // ψ_k realizes h·φ_k.
        let h = spec.step_size();
        let p = array![0.3, -0.8];
        for (psi, phi) in a.psis.iter().zip(&a.drifts) {
            let scaled = psi.realize(p.view()).unwrap();
            let raw = phi.realize(p.view()).unwrap();
            for i in 0..2 {
                assert_abs_diff_eq!(scaled[i], h * raw[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pipeline_k1_is_one_regression_and_step() {
        let target = gaussian_target(Array1::zeros(1), Array2::eye(1)).unwrap();
        let reference = ReferenceDistribution::standard_normal();
        let spec = TrainSpec {
            epochs: 2,
            dataset_size: 64,
            steps: 1,
            horizon: 0.1,
            width: 8,
            ..TrainSpec::default()
        };
        let stack = train_pipeline(&target, &reference, &spec, 9).unwrap();
        assert_eq!(stack.psis.len(), 1);
        assert_eq!(stack.loss_curves[0].len(), 3);
    }

    #[test]
    fn pipeline_mse_does_not_blow_up_along_steps() {
        let target = gaussian_target(Array1::zeros(2), Array2::eye(2)).unwrap();
        let reference = ReferenceDistribution::standard_normal();
        let spec = TrainSpec {
            epochs: 12,
            dataset_size: 256,
            steps: 10,
            horizon: 1.0,
            width: 16,
            learning_rate: 5e-3,
            warm_start: true,
            ..TrainSpec::default()
        };
        let stack = train_pipeline(&target, &reference, &spec, 31).unwrap();
        let finals: Vec<f64> = stack
            .loss_curves
            .iter()
            .map(|c| *c.last().unwrap())
            .collect();
        let mut sorted = finals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        assert!(
            median <= 10.0 * finals[0].max(1e-9),
            "median {median} vs first {}",
            finals[0]
        );
    }

    #[test]
    fn stack_round_trips_through_directory() {
        let target = gaussian_target(Array1::zeros(1), Array2::eye(1)).unwrap();
        let reference = ReferenceDistribution::standard_normal();
        let spec = TrainSpec {
            epochs: 1,
            dataset_size: 32,
            steps: 2,
            horizon: 0.2,
            width: 4,
            ..TrainSpec::default()
        };
        let stack = train_pipeline(&target, &reference, &spec, 5).unwrap();
        let dir = std::env::temp_dir().join(format!("lresnet_stack_{}", std::process::id()));
        stack.save(&dir).unwrap();
        let blocks = TrainedStack::load_blocks(&dir).unwrap();
        assert_eq!(blocks.len(), 2);
        for (a, b) in stack.psis.iter().zip(&blocks) {
            assert_eq!(a.to_json(), b.to_json());
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
