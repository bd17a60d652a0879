//! Reproducible divergence-curve experiments.
//!
//! One repetition trains a per-step drift stack, rolls fresh particles
//! through both the trained stack (ResNet-like realization) and the
//! exact-drift Euler–Maruyama baseline under shared noise, and records the
//! Sinkhorn divergence to a fixed cloud of exact target samples on a step
//! grid. Repetitions run in parallel with derived seeds; the merged result
//! is ordered by repetition index, so output does not depend on thread
//! count.

use crate::config::ExperimentConfig;
use crate::langevin::{lmc_chain_observe, resnet_realize_observe, ChainConfig, NoiseStream};
use crate::seed::{self, tag};
use crate::training::train_pipeline;
use crate::transport::{sinkhorn_cost, sinkhorn_divergence_cached};
use crate::{Error, Result};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;

/// Divergence curves of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Times `t = k h` of the evaluation grid.
    pub times: Vec<f64>,
    /// Per-repetition model curves, indexed `[rep][time]`.
    pub model_runs: Vec<Vec<f64>>,
    /// Per-repetition exact-drift baseline curves.
    pub baseline_runs: Vec<Vec<f64>>,
    pub model_mean: Vec<f64>,
    pub model_std: Vec<f64>,
    pub baseline_mean: Vec<f64>,
    pub baseline_std: Vec<f64>,
    /// Median (over repetitions) of each repetition's median per-step final
    /// training loss; a coarse training health indicator.
    pub median_final_loss: f64,
}

fn mean_std(runs: &[Vec<f64>], idx: usize) -> (f64, f64) {
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r[idx]).sum::<f64>() / n;
    if runs.len() < 2 {
        return (mean, 0.0);
    }
    let var = runs.iter().map(|r| (r[idx] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the configured experiment: `repetitions` independent train/evaluate
/// cycles, each with its own derived seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let target = cfg.target.build()?;
    let reference = cfg.reference.build()?;
    let h = cfg.train.step_size();
    let steps = cfg.train.steps;

    if target.is_strongly_convex() {
        // h < 2/M must hold for the baseline chain.
        if h >= 2.0 / target.gradient_lipschitz() {
            return Err(Error::InvalidParameter(format!(
                "step size {h} violates h < 2/M for the configured target"
            )));
        }
    }

    let eval_steps: Vec<usize> = (0..=steps)
        .filter(|k| k % cfg.eval_every == 0 || *k == steps)
        .collect();
    let times: Vec<f64> = eval_steps.iter().map(|k| *k as f64 * h).collect();

    let reps: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = seed::repetition_seed(cfg.seed, rep);
            run_single_repetition(cfg, &target, &reference, rep_seed, &eval_steps)
        })
        .collect();

    let mut model_runs = Vec::with_capacity(cfg.repetitions);
    let mut baseline_runs = Vec::with_capacity(cfg.repetitions);
    let mut final_losses = Vec::new();
    for r in reps {
        let (model, baseline, loss) = r?;
        model_runs.push(model);
        baseline_runs.push(baseline);
        final_losses.push(loss);
    }

    let mut model_mean = Vec::with_capacity(times.len());
    let mut model_std = Vec::with_capacity(times.len());
    let mut baseline_mean = Vec::with_capacity(times.len());
    let mut baseline_std = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let (m, s) = mean_std(&model_runs, i);
        model_mean.push(m);
        model_std.push(s);
        let (m, s) = mean_std(&baseline_runs, i);
        baseline_mean.push(m);
        baseline_std.push(s);
    }
    final_losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_final_loss = final_losses[final_losses.len() / 2];

    Ok(ExperimentResult {
        times,
        model_runs,
        baseline_runs,
        model_mean,
        model_std,
        baseline_mean,
        baseline_std,
        median_final_loss,
    })
}

fn run_single_repetition(
    cfg: &ExperimentConfig,
    target: &crate::targets::PotentialTarget,
    reference: &crate::targets::ReferenceDistribution,
    rep_seed: u64,
    eval_steps: &[usize],
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let d = target.dim();
    let h = cfg.train.step_size();
    let steps = cfg.train.steps;
    let sk = cfg.sinkhorn;

    // 1. Train the per-step stack on its own sample budget.
    let stack = train_pipeline(target, reference, &cfg.train, rep_seed)?;
    let finals: Vec<f64> = stack
        .loss_curves
        .iter()
        .map(|c| c.last().copied().unwrap_or(f64::NAN))
        .collect();
    let mut sorted = finals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_loss = sorted[sorted.len() / 2];

    // 2. One fixed evaluation cloud of exact target samples per repetition.
    let mut target_rng =
        ChaCha8Rng::seed_from_u64(seed::derive(rep_seed, tag::TARGET_SAMPLES));
    let target_cloud = target.sample_exact(cfg.n_eval, &mut target_rng);
    let self_target = sinkhorn_cost(
        target_cloud.view(),
        target_cloud.view(),
        sk.lambda,
        sk.max_iters,
        sk.tol,
    )?
    .cost;

    // 3. Shared evaluation randomness: both rollouts start from the same
    //    fresh cloud and consume the same increments.
    let eval_seed = seed::derive(rep_seed, tag::EVAL_CLOUD);
    let eval_cfg = ChainConfig {
        step_size: h,
        steps,
        dim: d,
        particles: cfg.n_eval,
        seed: eval_seed,
    };
    let noise = NoiseStream::new(eval_seed, cfg.n_eval, d, h);

    let divergence = |cloud: &Array2<f64>| -> Result<f64> {
        sinkhorn_divergence_cached(
            cloud.view(),
            target_cloud.view(),
            self_target,
            sk.lambda,
            sk.max_iters,
            sk.tol,
        )
    };

    // 4. Model rollout through the h-scaled blocks.
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed::derive(eval_seed, tag::INIT_CLOUD));
    let y0 = reference.sample(cfg.n_eval, d, &mut init_rng)?;
    let mut model_curve = Vec::with_capacity(eval_steps.len());
    let mut model_err = None;
    resnet_realize_observe(&stack.psis, y0.view(), &noise, |k, cloud| {
        if eval_steps.contains(&k) && model_err.is_none() {
            match divergence(cloud) {
                Ok(s) => model_curve.push(s),
                Err(e) => model_err = Some(e),
            }
        }
    })?;
    if let Some(e) = model_err {
        return Err(e);
    }

    // 5. Exact-drift baseline under the same init and noise.
    let mut baseline_curve = Vec::with_capacity(eval_steps.len());
    let mut baseline_err = None;
    lmc_chain_observe(target, &eval_cfg, reference, &noise, |k, cloud| {
        if eval_steps.contains(&k) && baseline_err.is_none() {
            match divergence(cloud) {
                Ok(s) => baseline_curve.push(s),
                Err(e) => baseline_err = Some(e),
            }
        }
    })?;
    if let Some(e) = baseline_err {
        return Err(e);
    }

    Ok((model_curve, baseline_curve, median_loss))
}

/// Spearman rank correlation; ties get mean ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean) * (a - mean);
        dy += (b - mean) * (b - mean);
    }
    num / (dx.sqrt() * dy.sqrt()).max(f64::MIN_POSITIVE)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[order[k]] = rank;
        }
        i = j + 1;
    }
    out
}

/// Writes a mean/std curve in the schema `t,s_lambda_mean,s_lambda_std,n_runs`.
pub fn write_curve_csv(
    path: &std::path::Path,
    times: &[f64],
    mean: &[f64],
    std: &[f64],
    n_runs: usize,
) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "t,s_lambda_mean,s_lambda_std,n_runs")?;
    for i in 0..times.len() {
        writeln!(file, "{},{},{},{}", times[i], mean[i], std[i], n_runs)?;
    }
    Ok(())
}

/// Writes per-repetition raw curves: `rep,t,s_lambda_model,s_lambda_baseline`.
pub fn write_runs_csv(path: &std::path::Path, result: &ExperimentResult) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "rep,t,s_lambda_model,s_lambda_baseline")?;
    for (rep, (model, baseline)) in result
        .model_runs
        .iter()
        .zip(&result.baseline_runs)
        .enumerate()
    {
        for (i, t) in result.times.iter().enumerate() {
            writeln!(file, "{},{},{},{}", rep, t, model[i], baseline[i])?;
        }
    }
    Ok(())
}
