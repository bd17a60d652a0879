//! Serializable experiment configuration.
//!
//! Defaults reproduce the reference experimental protocol: the d=10
//! Gaussian target with mean `2((-1)^{i-1}(i-1))` and identity covariance,
//! a standard-normal reference, 200 steps over horizon T=4, per-step
//! networks of 2x32 hidden units trained with Adam, Sinkhorn divergence at
//! λ=1e-2, and 5 repetitions.

use crate::targets::{gaussian_target, gmm_target, PotentialTarget, ReferenceDistribution};
use crate::training::TrainSpec;
use crate::{linalg, Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map(Vec::len).unwrap_or(0);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidParameter(format!(
            "{what} must be a nonempty rectangular matrix"
        )));
    }
    Ok(Array2::from_shape_vec(
        (n, m),
        rows.iter().flatten().copied().collect(),
    )
    .expect("shape checked above"))
}

/// Target specification as stored in config JSON. Gaussian targets carry
/// the covariance; the precision is derived on build.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Gmm {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covs: Vec<Vec<Vec<f64>>>,
    },
}

impl TargetSpec {
    /// The d=10 Gaussian of the reference protocol.
    pub fn default_gaussian() -> Self {
        let mean: Vec<f64> = (1..=10)
            .map(|i| 2.0 * if i % 2 == 1 { 1.0 } else { -1.0 } * (i - 1) as f64)
            .collect();
        let cov = (0..10)
            .map(|i| (0..10).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        TargetSpec::Gaussian { mean, cov }
    }

    /// A mildly separated two-component mixture in d=2.
    pub fn default_gmm() -> Self {
        let eye = |s: f64| vec![vec![s, 0.0], vec![0.0, s]];
        TargetSpec::Gmm {
            weights: vec![0.5, 0.5],
            means: vec![vec![-1.2, 0.0], vec![1.2, 0.0]],
            covs: vec![eye(0.25), eye(0.25)],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::Gmm { means, .. } => means.first().map(Vec::len).unwrap_or(0),
        }
    }

    pub fn build(&self) -> Result<PotentialTarget> {
        match self {
            TargetSpec::Gaussian { mean, cov } => {
                let cov = to_matrix(cov, "gaussian covariance")?;
                let precision = linalg::invert_spd(cov.view(), "gaussian covariance")?;
                gaussian_target(Array1::from_vec(mean.clone()), precision)
            }
            TargetSpec::Gmm {
                weights,
                means,
                covs,
            } => {
                let means = means
                    .iter()
                    .map(|m| Array1::from_vec(m.clone()))
                    .collect::<Vec<_>>();
                let covs = covs
                    .iter()
                    .map(|c| to_matrix(c, "mixture covariance"))
                    .collect::<Result<Vec<_>>>()?;
                gmm_target(weights.clone(), means, covs)
            }
        }
    }
}

/// Reference (initial) distribution specification.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    StandardNormal,
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    PointMass { point: Vec<f64> },
}

impl ReferenceSpec {
    pub fn build(&self) -> Result<ReferenceDistribution> {
        match self {
            ReferenceSpec::StandardNormal => Ok(ReferenceDistribution::standard_normal()),
            ReferenceSpec::Gaussian { mean, cov } => ReferenceDistribution::gaussian(
                Array1::from_vec(mean.clone()),
                to_matrix(cov, "reference covariance")?,
            ),
            ReferenceSpec::PointMass { point } => {
                Ok(ReferenceDistribution::point_mass(Array1::from_vec(
                    point.clone(),
                )))
            }
        }
    }
}

/// Sinkhorn evaluation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SinkhornSettings {
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            tol: crate::transport::DEFAULT_TOL,
            max_iters: crate::transport::DEFAULT_MAX_ITERS,
        }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub reference: ReferenceSpec,
    pub train: TrainSpec,
    pub sinkhorn: SinkhornSettings,
    pub repetitions: usize,
    /// Particles rolled through both evaluation chains and drawn from the
    /// target for each repetition's fixed evaluation cloud.
    pub n_eval: usize,
    /// Record the divergence every this many chain steps.
    pub eval_every: usize,
    pub seed: u64,
    /// Constant `c(d)` of the ball-cover parameter-count formula.
    pub cover_constant: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            target: TargetSpec::default_gaussian(),
            reference: ReferenceSpec::StandardNormal,
            train: TrainSpec::default(),
            sinkhorn: SinkhornSettings::default(),
            repetitions: 5,
            n_eval: 2000,
            eval_every: 10,
            seed: 1,
            cover_constant: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.repetitions == 0 || self.n_eval == 0 || self.eval_every == 0 {
            return Err(Error::InvalidParameter(
                "repetitions, n_eval and eval_every must be positive".into(),
            ));
        }
        if !(self.sinkhorn.lambda > 0.0) {
            return Err(Error::InvalidParameter(
                "sinkhorn regularization must be positive".into(),
            ));
        }
        Ok(())
    }
}
