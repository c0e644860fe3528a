//! Argument groups shared between verbs.

use std::path::PathBuf;

use clap::Args;
use ratebench_core::engine::{Dataset, Init, ModelSpec, OptimizerSpec};
use ratebench_core::tuner::DataSource;
use ratebench_core::{LrKind, LrPolicy};

use crate::CliError;

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Policy literal `kind:k0[:k1[:gamma[:p]]]`; replaces --kind/--k0/--k1/--gamma/--p
    #[arg(long, conflicts_with_all = ["kind", "k0", "k1", "gamma", "p"])]
    pub policy: Option<String>,
    /// Learning-rate function (FIX, STEP, NSTEP, EXP, INV, POLY, TRI, TRI2, TRIEXP, SIN, SIN2, SINEXP, COS)
    #[arg(long)]
    pub kind: Option<LrKind>,
    #[arg(long)]
    pub k0: Option<f64>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Power of INV and POLY
    #[arg(long)]
    pub p: Option<f64>,
    /// Step size (STEP) or half-cycle length (cyclic kinds)
    #[arg(long)]
    pub l: Option<u64>,
    /// NSTEP step boundaries, comma separated
    #[arg(long, value_delimiter = ',')]
    pub milestones: Option<Vec<u64>>,
    /// POLY horizon; defaults to the training budget where one exists
    #[arg(long)]
    pub horizon: Option<u64>,
}

impl PolicyArgs {
    pub fn is_given(&self) -> bool {
        self.policy.is_some() || self.kind.is_some()
    }

    /// Assembles and validates the policy. `budget` fills a missing POLY
    /// horizon.
    pub fn build(&self, budget: Option<u64>) -> Result<LrPolicy, CliError> {
        let mut policy = match (&self.policy, self.kind) {
            (Some(lit), _) => LrPolicy::from_literal(lit).map_err(CliError::invalid)?,
            (None, Some(kind)) => {
                let k0 = self.k0.ok_or_else(|| CliError::Usage("--k0 is required with --kind".into()))?;
                let mut p = LrPolicy::fix(k0);
                p.kind = kind;
                p.k1 = self.k1;
                p.gamma = self.gamma;
                p.p = self.p;
                p
            }
            (None, None) => return Err(CliError::Usage("give --policy or --kind".into())),
        };
        policy.l = self.l;
        policy.milestones = self.milestones.clone();
        policy.max_iter = self.horizon;
        if policy.kind == LrKind::Poly && policy.max_iter.is_none() {
            policy.max_iter = budget;
        }
        policy.validate().into_result().map_err(CliError::invalid)?;
        Ok(policy)
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// `blobs`, `idx:DIR` (MNIST file names, optionally .gz) or `cifar:DIR`
    #[arg(long, default_value = "blobs")]
    pub data: String,
    /// Blob samples per class
    #[arg(long, default_value_t = 1000)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub dim: usize,
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    /// Blob generator seed; defaults to --seed
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Keep only the first N training samples
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Keep only the first N test samples
    #[arg(long)]
    pub test_limit: Option<usize>,
}

impl DataArgs {
    pub fn source(&self, seed: u64) -> Result<DataSource, CliError> {
        match self.data.split_once(':') {
            None if self.data == "blobs" => Ok(DataSource::Blobs {
                seed: self.data_seed.unwrap_or(seed),
                n_per_class: self.n_per_class,
                classes: self.classes,
                dim: self.dim,
                separation: self.separation,
            }),
            Some(("idx", dir)) => Ok(DataSource::idx_dir(&PathBuf::from(dir))),
            Some(("cifar", dir)) => Ok(DataSource::cifar_dir(&PathBuf::from(dir))),
            _ => Err(CliError::Usage(format!("unknown data source `{}`", self.data))),
        }
    }

    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset), CliError> {
        let (train_set, test_set) = self.source(seed)?.load(&PathBuf::from("."))?;
        let limit = |d: Dataset, n: Option<usize>| match n {
            Some(n) if n < d.len() => d.head(n),
            _ => d,
        };
        Ok((limit(train_set, self.train_limit), limit(test_set, self.test_limit)))
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `linear` or `mlp-H` (one hidden ReLU layer of H units)
    #[arg(long, default_value = "mlp-32")]
    pub model: String,
    /// `xavier` or `gaussian:SIGMA`
    #[arg(long, default_value = "xavier")]
    pub init: String,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// sgd, momentum or nesterov
    #[arg(long, default_value = "momentum")]
    pub optimizer: String,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
}

impl ModelArgs {
    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let base = match self.model.as_str() {
            "linear" => ModelSpec::softmax_linear(),
            m => match m.strip_prefix("mlp-").and_then(|h| h.parse().ok()) {
                Some(h) => ModelSpec::mlp(h),
                None => return Err(CliError::Usage(format!("unknown model `{m}`"))),
            },
        };
        let init = match self.init.split_once(':') {
            None if self.init == "xavier" => Init::XavierUniform,
            Some(("gaussian", s)) => Init::Gaussian {
                sigma: s.parse().map_err(|_| CliError::Usage(format!("bad sigma `{s}`")))?,
            },
            _ => return Err(CliError::Usage(format!("unknown init `{}`", self.init))),
        };
        let spec = base.with_init(init).with_weight_decay(self.weight_decay);
        spec.validate().map_err(CliError::invalid)?;
        Ok(spec)
    }

    pub fn optimizer_spec(&self) -> Result<OptimizerSpec, CliError> {
        let spec = match self.optimizer.as_str() {
            "sgd" => OptimizerSpec::sgd(),
            "momentum" => OptimizerSpec::momentum(self.momentum),
            "nesterov" => OptimizerSpec::nesterov(self.momentum),
            o => return Err(CliError::Usage(format!("unknown optimizer `{o}`"))),
        };
        spec.validate().map_err(CliError::invalid)?;
        Ok(spec)
    }
}
