//! Command implementations and artifact writers.

use crate::configs::*;
use crate::CliError;
use lresnet_core::bounds::{w2_bound_perturbed, BoundReport};
use lresnet_core::config::ExperimentConfig;
use lresnet_core::construct;
use lresnet_core::experiment::{run_experiment, write_curve_csv, write_runs_csv};
use lresnet_core::langevin::{
    lmc_chain_observe, resnet_realize_observe, ChainConfig, NoiseStream,
};
use lresnet_core::nn::Fcnn;
use lresnet_core::seed::{self, tag};
use lresnet_core::training::{train_pipeline, TrainedStack};
use lresnet_core::Error as CoreError;
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::io::Write;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

fn map_core(err: CoreError) -> CliError {
    match err {
        CoreError::NumericAbort { step, message } => CliError::Numeric { step, message },
        CoreError::TrainingAbort { k, epoch } => CliError::Numeric {
            step: k,
            message: format!("non-finite training loss at epoch {epoch}"),
        },
        CoreError::Io(e) => CliError::Internal(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn write_summary(out: &Path, hash: &str, command: &str, extra: serde_json::Value) -> Result<(), CliError> {
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": hash,
    });
    if let (Some(obj), Some(add)) = (doc.as_object_mut(), extra.as_object()) {
        for (k, v) in add {
            obj.insert(k.clone(), v.clone());
        }
    }
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))?,
    )
    .map_err(|e| CliError::Internal(e.to_string()))
}

fn float_cell(v: f64) -> String {
    format!("{v}")
}

// --- sample -------------------------------------------------------------------

pub fn cmd_sample(cfg: SampleConfig, hash: &str, out: &Path) -> Result<(), CliError> {
    let target = cfg.target.build().map_err(map_core)?;
    let reference = cfg.reference.build().map_err(map_core)?;
    if cfg.record_every == 0 {
        return Err(CliError::Config("record_every must be positive".into()));
    }
    let d = target.dim();
    let chain = ChainConfig {
        step_size: cfg.chain.step_size,
        steps: cfg.chain.steps,
        dim: d,
        particles: cfg.chain.particles,
        seed: cfg.chain.seed,
    };

    let csv_name = if cfg.gzip {
        "trajectory.csv.gz"
    } else {
        "trajectory.csv"
    };
    let file =
        std::fs::File::create(out.join(csv_name)).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut sink: Box<dyn Write> = if cfg.gzip {
        Box::new(flate2::write::GzEncoder::new(
            std::io::BufWriter::new(file),
            flate2::Compression::default(),
        ))
    } else {
        Box::new(std::io::BufWriter::new(file))
    };

    let mut header = String::from("step,particle");
    for j in 0..d {
        header.push_str(&format!(",coord{j}"));
    }
    writeln!(sink, "{header}").map_err(|e| CliError::Internal(e.to_string()))?;

    let mut rows = 0usize;
    let mut states = 0usize;
    let mut io_err: Option<std::io::Error> = None;
    let mut observe = |k: usize, cloud: &Array2<f64>| {
        if io_err.is_some() || (k % cfg.record_every != 0 && k != chain.steps) {
            return;
        }
        states += 1;
        for (i, row) in cloud.rows().into_iter().enumerate() {
            let mut line = format!("{k},{i}");
            for v in row.iter() {
                line.push(',');
                line.push_str(&float_cell(*v));
            }
            if let Err(e) = writeln!(sink, "{line}") {
                io_err = Some(e);
                return;
            }
            rows += 1;
        }
    };

    match &cfg.drift {
        DriftSpec::Exact => {
            let noise = NoiseStream::new(chain.seed, chain.particles, d, chain.step_size);
            lmc_chain_observe(&target, &chain, &reference, &noise, &mut observe)
                .map_err(map_core)?;
        }
        DriftSpec::Stack { dir } => {
            let blocks = TrainedStack::load_blocks(Path::new(dir)).map_err(map_core)?;
            if blocks.len() != chain.steps {
                return Err(CliError::Config(format!(
                    "stack has {} blocks but chain.steps = {}",
                    blocks.len(),
                    chain.steps
                )));
            }
            let mut init_rng =
                ChaCha8Rng::seed_from_u64(seed::derive(chain.seed, tag::INIT_CLOUD));
            let y0 = reference
                .sample(chain.particles, d, &mut init_rng)
                .map_err(map_core)?;
            let noise = NoiseStream::new(chain.seed, chain.particles, d, chain.step_size);
            resnet_realize_observe(&blocks, y0.view(), &noise, &mut observe).map_err(map_core)?;
        }
    }
    if let Some(e) = io_err {
        return Err(CliError::Internal(e.to_string()));
    }
    drop(sink);

    write_summary(
        out,
        hash,
        "sample",
        json!({
            "trajectory": csv_name,
            "states_written": states,
            "rows_written": rows,
            "dim": d,
            "particles": chain.particles,
            "steps": chain.steps,
        }),
    )
}

// --- experiment -----------------------------------------------------------------

pub fn cmd_experiment(cfg: ExperimentConfig, hash: &str, out: &Path) -> Result<(), CliError> {
    let result = run_experiment(&cfg).map_err(map_core)?;
    write_curve_csv(
        &out.join("curve_model.csv"),
        &result.times,
        &result.model_mean,
        &result.model_std,
        result.model_runs.len(),
    )
    .map_err(map_core)?;
    write_curve_csv(
        &out.join("curve_baseline.csv"),
        &result.times,
        &result.baseline_mean,
        &result.baseline_std,
        result.baseline_runs.len(),
    )
    .map_err(map_core)?;
    write_runs_csv(&out.join("runs_raw.csv"), &result).map_err(map_core)?;
    let final_idx = result.times.len() - 1;
    write_summary(
        out,
        hash,
        "experiment",
        json!({
            "repetitions": result.model_runs.len(),
            "times": result.times,
            "final_model_mean": result.model_mean[final_idx],
            "final_baseline_mean": result.baseline_mean[final_idx],
            "median_final_train_loss": result.median_final_loss,
            "files": ["curve_model.csv", "curve_baseline.csv", "runs_raw.csv"],
        }),
    )
}

// --- bounds ----------------------------------------------------------------------

fn bound_row(cfg: &BoundsConfig, h: f64, k: usize) -> Result<BoundReport, CliError> {
    w2_bound_perturbed(h, cfg.m, cfg.big_m, cfg.d, k, cfg.w2_init, cfg.eps).map_err(map_core)
}

pub fn cmd_bounds(cfg: BoundsConfig, hash: &str, out: &Path) -> Result<(), CliError> {
    match &cfg.sweep {
        None => {
            let report = bound_row(&cfg, cfg.h, cfg.k)?;
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "config_hash": hash,
                "inputs": cfg,
                "report": report,
            });
            let text =
                serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))?;
            println!("{text}");
            std::fs::write(out.join("bound.json"), &text)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            write_summary(out, hash, "bounds", json!({"report": report}))
        }
        Some(sweep) => {
            let rows: Vec<(f64, usize)> = match sweep {
                SweepSpec::K { from, to } => {
                    if from > to {
                        return Err(CliError::Config("sweep range is empty".into()));
                    }
                    (*from..=*to).map(|k| (cfg.h, k)).collect()
                }
                SweepSpec::H { values } => values.iter().map(|h| (*h, cfg.k)).collect(),
            };
            let mut csv = String::from(
                "h,m,big_m,d,k,w2_init,eps,regime,contraction,discretization,approximation,total\n",
            );
            for (h, k) in rows {
                let r = bound_row(&cfg, h, k)?;
                let regime = serde_json::to_value(r.regime)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    h,
                    cfg.m,
                    cfg.big_m,
                    cfg.d,
                    k,
                    cfg.w2_init,
                    cfg.eps,
                    regime,
                    r.contraction,
                    r.discretization,
                    r.approximation,
                    r.total
                ));
            }
            std::fs::write(out.join("sweep.csv"), csv)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            write_summary(out, hash, "bounds", json!({"sweep": "sweep.csv"}))
        }
    }
}

// --- construct --------------------------------------------------------------------

struct Verification {
    formula_params: Option<usize>,
    max_err: f64,
    details: serde_json::Value,
}

fn probe_max_err<F: Fn(&Array1<f64>) -> Array1<f64>>(
    net: &Fcnn,
    oracle: F,
    lo: f64,
    hi: f64,
    points: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let d = net.input_dim();
    let mut max_err: f64 = 0.0;
    for _ in 0..points {
        let x = Array1::from_shape_fn(d, |_| rng.random_range(lo..hi));
        let got = net.realize(x.view()).expect("probe inside domain");
        let want = oracle(&x);
        for (g, w) in got.iter().zip(want.iter()) {
            max_err = max_err.max((g - w).abs());
        }
    }
    max_err
}

fn zero_net(d: usize) -> Fcnn {
    use lresnet_core::nn::Layer;
    Fcnn::new(vec![
        Layer {
            weight: Array2::zeros((d, d)),
            bias: Array1::zeros(d),
        },
        Layer {
            weight: Array2::zeros((d, d)),
            bias: Array1::zeros(d),
        },
    ])
    .expect("zero net is well-formed")
}

fn build_and_verify(cfg: &ConstructConfig) -> Result<(Fcnn, Verification), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
    match cfg {
        ConstructConfig::Identity { d } => {
            let net = construct::identity_net(*d);
            let err = probe_max_err(&net, |x| x.clone(), -10.0, 10.0, 1000, &mut rng);
            Ok((
                net,
                Verification {
                    formula_params: Some(4 * d),
                    max_err: err,
                    details: json!({}),
                },
            ))
        }
        ConstructConfig::L1 { d } => {
            let net = construct::l1_net(*d);
            let err = probe_max_err(
                &net,
                |x| Array1::from_elem(1, x.iter().map(|v| v.abs()).sum::<f64>()),
                -10.0,
                10.0,
                1000,
                &mut rng,
            );
            Ok((
                net,
                Verification {
                    formula_params: Some(4 * d),
                    max_err: err,
                    details: json!({}),
                },
            ))
        }
        ConstructConfig::Indicator { d, r, delta } => {
            let net = construct::indicator_net(*d, *r, *delta).map_err(map_core)?;
            let (r, delta) = (*r, *delta);
            let ramp = move |x: &Array1<f64>| {
                let s: f64 = x.iter().map(|v| v.abs()).sum();
                let v = if s <= r {
                    1.0
                } else if s >= r + delta {
                    0.0
                } else {
                    (r + delta - s) / delta
                };
                Array1::from_elem(1, v)
            };
            let lim = r + 2.0 * delta;
            let err = probe_max_err(&net, ramp, -lim, lim, 1000, &mut rng);
            // Exact probes along the first axis.
            let probes: Vec<f64> = [r, r + delta / 2.0, r + 2.0 * delta]
                .iter()
                .map(|s| {
                    let mut x = Array1::zeros(net.input_dim());
                    x[0] = *s;
                    net.realize(x.view()).unwrap()[0]
                })
                .collect();
            Ok((
                net,
                Verification {
                    formula_params: Some(4 * d + 7),
                    max_err: err,
                    details: json!({"probe_radii_values": probes}),
                },
            ))
        }
        ConstructConfig::Cutoff { net_path, c } => {
            let inner = Fcnn::from_json(
                &std::fs::read_to_string(net_path)
                    .map_err(|e| CliError::Config(format!("cannot read {net_path}: {e}")))?,
            )
            .map_err(map_core)?;
            let bound =
                construct::BoxBound::new(Array1::from_vec(c.clone())).map_err(map_core)?;
            let net = construct::cutoff(&inner, &bound).map_err(map_core)?;
            let levels = bound.levels().clone();
            let err = probe_max_err(
                &net,
                |x| {
                    let raw = inner.realize(x.view()).unwrap();
                    Array1::from_shape_fn(raw.len(), |i| raw[i].clamp(-levels[i], levels[i]))
                },
                -10.0,
                10.0,
                1000,
                &mut rng,
            );
            let added_dense = net.param_count().dense - inner.param_count().dense;
            Ok((
                net,
                Verification {
                    formula_params: None,
                    max_err: err,
                    details: json!({"added_dense_params": added_dense, "added_layers": 2}),
                },
            ))
        }
        ConstructConfig::Mult { m, eps } => {
            let spec = construct::MultSpec::new(*m, *eps).map_err(map_core)?;
            let net = construct::mult_net(&spec);
            let mut max_err: f64 = 0.0;
            for i in 0..201 {
                let x = -m + 2.0 * m * i as f64 / 200.0;
                for j in 0..201 {
                    let y = -m + 2.0 * m * j as f64 / 200.0;
                    let got = net
                        .realize(Array1::from_vec(vec![x, y]).view())
                        .unwrap()[0];
                    max_err = max_err.max((got - x * y).abs());
                }
            }
            let zero_err = (0..41)
                .map(|i| {
                    let y = -m + 2.0 * m * i as f64 / 40.0;
                    let a = net
                        .realize(Array1::from_vec(vec![0.0, y]).view())
                        .unwrap()[0]
                        .abs();
                    let b = net
                        .realize(Array1::from_vec(vec![y, 0.0]).view())
                        .unwrap()[0]
                        .abs();
                    a.max(b)
                })
                .fold(0.0f64, f64::max);
            Ok((
                net,
                Verification {
                    formula_params: None,
                    max_err,
                    details: json!({
                        "levels": spec.levels,
                        "tolerance": eps,
                        "grid_max_err": max_err,
                        "zero_axis_max": zero_err,
                    }),
                },
            ))
        }
        ConstructConfig::ElementwiseMult {
            d,
            scalar_range,
            vector_range,
            eps,
        } => {
            let net = construct::elementwise_mult_net(
                *d,
                (scalar_range[0], scalar_range[1]),
                (vector_range[0], vector_range[1]),
                *eps,
            )
            .map_err(map_core)?;
            let mut max_l1: f64 = 0.0;
            for _ in 0..2000 {
                let x: f64 = rng.random_range(scalar_range[0]..=scalar_range[1]);
                let mut z = Array1::zeros(d + 1);
                z[0] = x;
                for i in 0..*d {
                    z[i + 1] = rng.random_range(vector_range[0]..=vector_range[1]);
                }
                let got = net.realize(z.view()).unwrap();
                let l1: f64 = (0..*d).map(|i| (got[i] - x * z[i + 1]).abs()).sum();
                max_l1 = max_l1.max(l1);
            }
            Ok((
                net,
                Verification {
                    formula_params: None,
                    max_err: max_l1,
                    details: json!({"l1_tolerance": eps}),
                },
            ))
        }
        ConstructConfig::LinearDrift { d, m } => {
            let net = construct::linear_drift_net(*d, *m).map_err(map_core)?;
            let m = *m;
            let err = probe_max_err(&net, |x| x.mapv(|v| -m * v), -10.0, 10.0, 1000, &mut rng);
            Ok((
                net,
                Verification {
                    formula_params: Some(4 * d),
                    max_err: err,
                    details: json!({}),
                },
            ))
        }
        ConstructConfig::Composite {
            d,
            r,
            m,
            big_m,
            eps,
            local_net_path,
        } => {
            let local = match local_net_path {
                Some(path) => Fcnn::from_json(
                    &std::fs::read_to_string(path)
                        .map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?,
                )
                .map_err(map_core)?,
                None => zero_net(*d),
            };
            let lip = local.lipschitz_upper_bound();
            let built = construct::composite_drift_net(&local, *r, *m, *big_m, *eps, lip)
                .map_err(map_core)?;
            // Outside the outer ball the drift is -mx; report the residual.
            let mut outside_err: f64 = 0.0;
            for _ in 0..200 {
                let mut x = Array1::from_shape_fn(*d, |_| rng.random_range(-1.0..1.0));
                let l1: f64 = x.iter().map(|v: &f64| v.abs()).sum();
                let scale = (built.outer_radius * 1.01 + rng.random_range(0.0..*r)) / l1.max(1e-9);
                x.mapv_inplace(|v| v * scale);
                let got = built.net.realize(x.view()).unwrap();
                for i in 0..*d {
                    outside_err = outside_err.max((got[i] + m * x[i]).abs());
                }
            }
            let info = json!({
                "inner_radius": built.inner_radius,
                "outer_radius": built.outer_radius,
                "clamp_level": built.clamp_level,
                "working_tol": built.working_tol,
                "outside_ball_max_err": outside_err,
                "local_lipschitz_bound": lip,
            });
            Ok((
                built.net,
                Verification {
                    formula_params: None,
                    max_err: outside_err,
                    details: info,
                },
            ))
        }
    }
}

pub fn cmd_construct(cfg: ConstructConfig, hash: &str, out: &Path) -> Result<(), CliError> {
    let (net, verification) = build_and_verify(&cfg)?;
    std::fs::write(out.join("network.json"), net.to_json())
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let count = net.param_count();
    let formula_matches = verification
        .formula_params
        .map(|formula| formula == count.nonzero);
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": hash,
        "request": cfg,
        "depth": net.depth(),
        "param_count": {"nonzero": count.nonzero, "dense": count.dense},
        "formula_params": verification.formula_params,
        "measured_params": count.nonzero,
        "formula_matches": formula_matches,
        "max_err": verification.max_err,
        "details": verification.details,
    });
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    std::fs::write(out.join("report.json"), &text)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    write_summary(out, hash, "construct", json!({"report": "report.json"}))
}

// --- train ------------------------------------------------------------------------

pub fn cmd_train(cfg: TrainConfig, hash: &str, out: &Path) -> Result<(), CliError> {
    let target = cfg.target.build().map_err(map_core)?;
    let reference = cfg.reference.build().map_err(map_core)?;
    let stack = train_pipeline(&target, &reference, &cfg.train, cfg.seed).map_err(map_core)?;
    let stack_dir = out.join("stack");
    stack.save(&stack_dir).map_err(map_core)?;
    let finals: Vec<f64> = stack
        .loss_curves
        .iter()
        .map(|c| *c.last().unwrap())
        .collect();
    write_summary(
        out,
        hash,
        "train",
        json!({
            "stack_dir": "stack",
            "steps": stack.psis.len(),
            "step_size": stack.step_size(),
            "first_final_loss": finals.first(),
            "last_final_loss": finals.last(),
        }),
    )
}
