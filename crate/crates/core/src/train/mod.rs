//! RMSProp training with deterministic batching and resumable checkpoints.

mod init;
mod optim;

pub use init::{init_params, init_params_with, TruncatedNormal, INIT_STD};
pub use optim::{lr_at, rmsprop_step, OptimizerState, EPSILON, MOMENTUM, RMS_DECAY, SQ_WEIGHT};

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::image::QuantizedImage;
use crate::model::{self, parse_kv, Checkpoint, ModelBundle, ModelConfig, ModelKind, Objective};
use crate::tensor::Graph;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub batch_size: usize,
    pub steps: u64,
    pub base_lr: f64,
    pub halve_every: u64,
    pub seed: u64,
    /// Validation cadence in steps; 0 disables.
    pub eval_every: u64,
    /// Validation uses at most this many pairs.
    pub eval_limit: usize,
    /// Checkpoint cadence in steps; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::O2,
            batch_size: 32,
            steps: 2000,
            base_lr: 0.0004,
            halve_every: 500_000,
            seed: 0,
            eval_every: 0,
            eval_limit: 64,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("batch_size and steps must be at least 1".into()));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.base_lr)));
        }
        Ok(())
    }

    /// Checks the objective against the model family.
    pub fn check_compatible(&self, kind: ModelKind) -> Result<()> {
        let ok = matches!(
            (self.objective, kind),
            (Objective::O1 | Objective::O2, ModelKind::PixelRecursive)
                | (Objective::PixelCe, ModelKind::PixelCe)
                | (Objective::Mse, ModelKind::Regression)
        );
        if !ok {
            return Err(Error::Config(format!(
                "objective {} cannot train a {} model",
                self.objective.as_str(),
                kind.as_str()
            )));
        }
        Ok(())
    }

    /// `train.*` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "train.objective={}", self.objective.as_str());
        let _ = writeln!(s, "train.batch_size={}", self.batch_size);
        let _ = writeln!(s, "train.steps={}", self.steps);
        let _ = writeln!(s, "train.base_lr={}", self.base_lr);
        let _ = writeln!(s, "train.halve_every={}", self.halve_every);
        let _ = writeln!(s, "train.seed={}", self.seed);
        let _ = writeln!(s, "train.eval_every={}", self.eval_every);
        let _ = writeln!(s, "train.eval_limit={}", self.eval_limit);
        let _ = writeln!(s, "train.checkpoint_every={}", self.checkpoint_every);
        s
    }

    /// Applies `train.*` keys and returns the keys it did not recognise.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<Vec<String>> {
        let mut unknown = Vec::new();
        for (k, v) in kv {
            match k.as_str() {
                "train.objective" => self.objective = v.parse()?,
                "train.batch_size" => self.batch_size = model_parse(k, v)?,
                "train.steps" => self.steps = model_parse(k, v)?,
                "train.base_lr" => self.base_lr = model_parse(k, v)?,
                "train.halve_every" => self.halve_every = model_parse(k, v)?,
                "train.seed" => self.seed = model_parse(k, v)?,
                "train.eval_every" => self.eval_every = model_parse(k, v)?,
                "train.eval_limit" => self.eval_limit = model_parse(k, v)?,
                "train.checkpoint_every" => self.checkpoint_every = model_parse(k, v)?,
                _ => unknown.push(k.clone()),
            }
        }
        Ok(unknown)
    }
}

fn model_parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {k}")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogEntry {
    pub step: u64,
    pub lr: f64,
    pub loss_nats: f64,
    pub loss_bits: f64,
    /// Validation NLL in bits per sub-pixel, or MSE for regression models.
    pub valid: Option<f64>,
}

/// Indices of the training pairs used at `step` (0-based). Every epoch is a
/// fresh permutation seeded by `(seed, epoch)`, so the sequence depends on
/// nothing but the step counter.
pub fn batch_indices(seed: u64, step: u64, batch: usize, n: usize, cache: &mut Option<(u64, Vec<usize>)>) -> Vec<usize> {
    (0..batch as u64)
        .map(|b| {
            let j = step * batch as u64 + b;
            let (epoch, pos) = (j / n as u64, (j % n as u64) as usize);
            if cache.as_ref().is_none_or(|(e, _)| *e != epoch) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(epoch);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                *cache = Some((epoch, perm));
            }
            cache.as_ref().expect("filled above").1[pos]
        })
        .collect()
}

/// Mean validation score: NLL in bits for likelihood models, MSE otherwise.
pub fn validation_score(bundle: &ModelBundle, ds: &PairedDataset, limit: usize) -> Result<f64> {
    let pairs = &ds.pairs[..ds.len().min(limit.max(1))];
    if pairs.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        total += match bundle.kind() {
            ModelKind::Regression => {
                let pred = bundle.predict_regression(&p.input)?;
                let t = p.target.dequantize();
                model::loss_mse(&pred.data, &t.data)?
            }
            _ => model::nll_report(bundle, &p.input, &p.target)?,
        };
    }
    Ok(total / pairs.len() as f64)
}

/// Loss and per-parameter gradients for one batch.
pub fn loss_and_grads(
    bundle: &ModelBundle,
    objective: Objective,
    xs: &[&QuantizedImage],
    ys: &[&QuantizedImage],
) -> Result<(f64, IndexMap<String, Vec<f64>>)> {
    let mut g = Graph::new();
    let p = bundle.params.bind(&mut g);
    let f = bundle.forward(&mut g, &p, xs, Some(ys))?;
    let loss = objective.build(&mut g, &f, ys, bundle.config.loss_mean)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Ok((value, IndexMap::new()));
    }
    g.backward(loss)?;
    let grads = p
        .iter()
        .map(|(name, v)| {
            let grad = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).len()]);
            (name.to_string(), grad)
        })
        .collect();
    Ok((value, grads))
}

/// Model, optimizer state and schedule; the unit of checkpointing.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub bundle: ModelBundle,
    pub state: OptimizerState,
    pub log: Vec<LogEntry>,
    perm: Option<(u64, Vec<usize>)>,
}

const STEP_KEY: &str = "train.completed_steps";

impl Trainer {
    pub fn new(config: TrainConfig, bundle: ModelBundle) -> Result<Self> {
        config.validate()?;
        config.check_compatible(bundle.kind())?;
        let state = OptimizerState::new(&bundle.params);
        Ok(Self {
            config,
            bundle,
            state,
            log: Vec::new(),
            perm: None,
        })
    }

    pub fn step(&self) -> u64 {
        self.state.step
    }

    /// Runs one update and returns its log entry.
    pub fn train_step(&mut self, train: &PairedDataset) -> Result<LogEntry> {
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let step = self.state.step;
        let idx = batch_indices(self.config.seed, step, self.config.batch_size, train.len(), &mut self.perm);
        let xs: Vec<&QuantizedImage> = idx.iter().map(|&i| &train.pairs[i].input).collect();
        let ys: Vec<&QuantizedImage> = idx.iter().map(|&i| &train.pairs[i].target).collect();
        let (loss, grads) = loss_and_grads(&self.bundle, self.config.objective, &xs, &ys)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss is {loss} at step {}", step + 1)));
        }
        let lr = lr_at(step, self.config.base_lr, self.config.halve_every);
        rmsprop_step(&mut self.bundle.params, &grads, &mut self.state, lr)?;
        let entry = LogEntry {
            step: step + 1,
            lr,
            loss_nats: loss,
            loss_bits: loss / LN_2,
            valid: None,
        };
        self.log.push(entry.clone());
        Ok(entry)
    }

    /// Trains until `config.steps` updates have been applied. On a
    /// non-finite loss the state before the failing step is checkpointed
    /// (when a path is given) and the error returned.
    pub fn run(
        &mut self,
        train: &PairedDataset,
        valid: Option<&PairedDataset>,
        checkpoint: Option<&Path>,
        mut on_log: impl FnMut(&LogEntry),
    ) -> Result<()> {
        while self.state.step < self.config.steps {
            let entry = match self.train_step(train) {
                Ok(e) => e,
                Err(e @ Error::NonFinite(_)) => {
                    if let Some(path) = checkpoint {
                        self.save(path)?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            let s = entry.step;
            if let Some(v) = valid {
                if self.config.eval_every > 0 && (s % self.config.eval_every == 0 || s == self.config.steps) {
                    let score = validation_score(&self.bundle, v, self.config.eval_limit)?;
                    if let Some(last) = self.log.last_mut() {
                        last.valid = Some(score);
                    }
                }
            }
            on_log(self.log.last().expect("just pushed"));
            if let Some(path) = checkpoint {
                if self.config.checkpoint_every > 0 && s % self.config.checkpoint_every == 0 {
                    self.save(path)?;
                }
            }
        }
        if let Some(path) = checkpoint {
            self.save(path)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.bundle.to_checkpoint();
        ck.config.push_str(&self.config.to_text());
        let _ = writeln!(ck.config, "{STEP_KEY}={}", self.state.step);
        for (name, v) in &self.state.sq {
            ck.tensors.insert(format!("opt.sq.{name}"), crate::tensor::Tensor::new(vec![v.len()], v.clone()).expect("1-d"));
        }
        for (name, v) in &self.state.mom {
            ck.tensors.insert(format!("opt.mom.{name}"), crate::tensor::Tensor::new(vec![v.len()], v.clone()).expect("1-d"));
        }
        ck
    }

    /// Restores model, optimizer state, step counter and schedule. A plain
    /// model checkpoint (no optimizer tensors) starts a fresh optimizer.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bundle = ModelBundle::from_checkpoint(ck)?;
        let kv = parse_kv(&ck.config)?;
        let mut config = TrainConfig {
            objective: default_objective(bundle.kind()),
            ..TrainConfig::default()
        };
        config.apply(&kv)?;
        let mut t = Self::new(config, bundle)?;
        if let Some(step) = kv.get(STEP_KEY) {
            t.state.step = model_parse(STEP_KEY, step)?;
            let names: Vec<String> = t.state.sq.keys().cloned().collect();
            for name in names {
                for (prefix, slot) in [("opt.sq.", &mut t.state.sq), ("opt.mom.", &mut t.state.mom)] {
                    let tensor = ck
                        .tensors
                        .get(&format!("{prefix}{name}"))
                        .ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor {prefix}{name}")))?;
                    let dst = slot.get_mut(&name).expect("same keys");
                    if tensor.len() != dst.len() {
                        return Err(Error::Checkpoint(format!("optimizer tensor {prefix}{name} has the wrong size")));
                    }
                    dst.copy_from_slice(tensor.data());
                }
            }
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        model::write_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&model::read_checkpoint(path)?)
    }
}

pub fn default_objective(kind: ModelKind) -> Objective {
    match kind {
        ModelKind::PixelRecursive => Objective::O2,
        ModelKind::PixelCe => Objective::PixelCe,
        ModelKind::Regression => Objective::Mse,
    }
}

/// Everything `train_loop` produces.
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub state: OptimizerState,
    pub log: Vec<LogEntry>,
}

/// Initialises (or continues) a model and trains it for `config.steps`
/// updates.
pub fn train_loop(
    config: &TrainConfig,
    model: &ModelConfig,
    train: &PairedDataset,
    valid: Option<&PairedDataset>,
    bundle: Option<ModelBundle>,
    checkpoint: Option<PathBuf>,
) -> Result<TrainOutcome> {
    let bundle = match bundle {
        Some(b) => b,
        None => init_params(model, config.seed)?,
    };
    let mut t = Trainer::new(config.clone(), bundle)?;
    t.run(train, valid, checkpoint.as_deref(), |_| {})?;
    Ok(TrainOutcome {
        bundle: t.bundle,
        state: t.state,
        log: t.log,
    })
}
