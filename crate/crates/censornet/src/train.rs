//! Alternating optimization of the regularized objective: per mini-batch the
//! censor updates on its own loss with the task model frozen, then the task
//! model updates on CE + lambda * L_censor with the censor frozen. Gradients
//! of the penalty flow through the projector into the encoder.

use serde::{Deserialize, Serialize};

use crate::censor::{complementary_combine, CensorMethod, CensorMode, CensorModel, CensorSpec};
use crate::error::Error;
use crate::model::{split_latent, ProjectionType, TaskModel, TaskModelConfig};
use crate::nn::{
    softmax_cross_entropy, AdamWConfig, AdamWState, NetGrads, Network, RealMatrix, RngStream,
};
use crate::stats::{balanced_accuracy, ConfusionCounts};
use crate::synth::TrialBatch;

/// RNG stream assignment. Task init, censor init, and the training loop use
/// disjoint streams so a lambda = 0 run draws exactly the same task-side
/// randomness as plain ERM regardless of censor configuration.
pub const STREAM_TASK_INIT: u64 = 0;
pub const STREAM_CENSOR_INIT: u64 = 1;
pub const STREAM_TRAIN: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalPoint {
    Final,
    BestVal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: CensorMode,
    pub method: CensorMethod,
    pub lambda: f64,
    pub projection: ProjectionType,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Censor updates per task update.
    pub censor_steps: usize,
    pub eval_point: EvalPoint,
    pub seed: u64,
    /// Early-stopping patience: stop after this many epochs without a new
    /// best validation accuracy. `None` disables early stopping.
    pub max_val_epochs: Option<usize>,
}

impl TrainConfig {
    pub fn new(mode: CensorMode, method: CensorMethod, lambda: f64, seed: u64) -> Self {
        TrainConfig {
            mode,
            method,
            lambda,
            projection: ProjectionType::Trivial,
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.0,
            censor_steps: 1,
            eval_point: EvalPoint::Final,
            seed,
            max_val_epochs: None,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.lambda > 0.0 && self.batch_size < 2 {
            return Err(Error::Config(
                "lambda > 0 needs batch size >= 2 (permutation trick)".into(),
            ));
        }
        if self.censor_steps == 0 && self.lambda > 0.0 {
            return Err(Error::Config("lambda > 0 needs censor_steps >= 1".into()));
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub task_ce: f64,
    /// Mean censor penalty entering the task objective (0 when lambda = 0).
    pub censor_penalty: f64,
    pub censor_train_loss: f64,
    pub train_ba: f64,
    pub val_ba: Option<f64>,
}

/// Full training state; restoring and resuming reproduces the original run
/// bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Epochs completed.
    pub epoch: usize,
    pub task: TaskModel,
    pub censors: Vec<CensorModel>,
    pub task_opt: AdamWState,
    pub censor_opts: Vec<AdamWState>,
    pub train_word_pos: u128,
}

/// Per the tie-break rule: `Final` takes the last checkpoint, `BestVal` the
/// earliest epoch achieving the maximum validation accuracy.
pub fn select_checkpoint(
    logs: &[EpochLog],
    checkpoints: &[Checkpoint],
    eval_point: EvalPoint,
) -> Result<Checkpoint, Error> {
    if logs.len() != checkpoints.len() || logs.is_empty() {
        return Err(Error::Config(format!(
            "{} logs vs {} checkpoints",
            logs.len(),
            checkpoints.len()
        )));
    }
    match eval_point {
        EvalPoint::Final => Ok(checkpoints[checkpoints.len() - 1].clone()),
        EvalPoint::BestVal => {
            let mut best: Option<(usize, f64)> = None;
            for (i, log) in logs.iter().enumerate() {
                let v = log
                    .val_ba
                    .ok_or_else(|| Error::Config("best-val selection without validation metrics".into()))?;
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            Ok(checkpoints[best.unwrap().0].clone())
        }
    }
}

fn censor_specs(config: &TrainConfig, model_cfg: &TaskModelConfig, n_nuisance: usize) -> Vec<CensorSpec> {
    let k = model_cfg.latent_dim;
    match config.mode {
        CensorMode::Marginal | CensorMode::Conditional => vec![CensorSpec::new(
            config.mode,
            config.method,
            k,
            n_nuisance,
            model_cfg.n_classes,
        )],
        // Independent estimators on the two halves of the projected features.
        CensorMode::Complementary => {
            let half = CensorSpec::new(
                CensorMode::Complementary,
                config.method,
                k / 2,
                n_nuisance,
                model_cfg.n_classes,
            );
            vec![half.clone(), half]
        }
    }
}

struct Trainer {
    config: TrainConfig,
    task: TaskModel,
    censors: Vec<CensorModel>,
    task_opt: AdamWState,
    censor_opts: Vec<AdamWState>,
    train_rng: RngStream,
    epoch: usize,
}

impl Trainer {
    fn fresh(config: &TrainConfig, model_cfg: TaskModelConfig, n_nuisance: usize) -> Result<Self, Error> {
        let mut task_rng = RngStream::new(config.seed, STREAM_TASK_INIT);
        let task = TaskModel::new(model_cfg.clone(), &mut task_rng)?;
        let (censors, censor_opts) = if config.lambda > 0.0 {
            let mut censor_rng = RngStream::new(config.seed, STREAM_CENSOR_INIT);
            let mut censors = Vec::new();
            let mut opts = Vec::new();
            for spec in censor_specs(config, &model_cfg, n_nuisance) {
                let c = CensorModel::new(spec, &mut censor_rng)?;
                opts.push(AdamWState::for_params(config.optimizer(), &c.net.param_slices()));
                censors.push(c);
            }
            (censors, opts)
        } else {
            (Vec::new(), Vec::new())
        };
        let task_opt = AdamWState::for_params(config.optimizer(), &task_param_slices(&task));
        Ok(Trainer {
            config: config.clone(),
            task,
            censors,
            task_opt,
            censor_opts,
            train_rng: RngStream::new(config.seed, STREAM_TRAIN),
            epoch: 0,
        })
    }

    fn from_checkpoint(ckpt: Checkpoint) -> Trainer {
        let train_rng = RngStream::restore(ckpt.config.seed, STREAM_TRAIN, ckpt.train_word_pos);
        Trainer {
            config: ckpt.config,
            task: ckpt.task,
            censors: ckpt.censors,
            task_opt: ckpt.task_opt,
            censor_opts: ckpt.censor_opts,
            train_rng,
            epoch: ckpt.epoch,
        }
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            epoch: self.epoch,
            task: self.task.clone(),
            censors: self.censors.clone(),
            task_opt: self.task_opt.clone(),
            censor_opts: self.censor_opts.clone(),
            train_word_pos: self.train_rng.word_pos(),
        }
    }

    /// Censor-visible label input: true task labels in conditional mode.
    fn censor_labels<'a>(&self, y: &'a [usize]) -> Option<&'a [usize]> {
        if self.config.mode == CensorMode::Conditional {
            Some(y)
        } else {
            None
        }
    }

    /// One alternating step on a mini-batch; returns (ce, penalty,
    /// censor train loss).
    fn batch_step(&mut self, batch: &TrialBatch) -> Result<(f64, f64, f64), Error> {
        let lambda = self.config.lambda;
        let mut censor_loss = 0.0;
        let mut censor_loss_terms = 0usize;

        if lambda > 0.0 {
            // Censor update(s): task parameters frozen, features constant.
            let hidden = self.task.encode(&batch.x)?;
            let projected = self.task.project(&hidden)?;
            for _ in 0..self.config.censor_steps {
                if self.config.mode == CensorMode::Complementary {
                    let halves = split_latent(&projected)?;
                    for (censor_idx, feats) in [(0usize, &halves.z), (1usize, &halves.w)] {
                        censor_loss += self.censors[censor_idx].train_step(
                            feats,
                            &batch.s,
                            None,
                            &mut self.censor_opts[censor_idx],
                            &mut self.train_rng,
                        )?;
                        censor_loss_terms += 1;
                    }
                } else {
                    let y = self.censor_labels(&batch.y);
                    censor_loss += self.censors[0].train_step(
                        &projected,
                        &batch.s,
                        y,
                        &mut self.censor_opts[0],
                        &mut self.train_rng,
                    )?;
                    censor_loss_terms += 1;
                }
            }
        }

        // Task update: censor parameters frozen.
        let (hidden, enc_cache) = self.task.encoder.forward(&batch.x)?;
        let (logits, cls_cache) = self.task.classifier.forward(&hidden)?;
        let (ce, dlogits) = softmax_cross_entropy(&logits, &batch.y)?;
        let (cls_grads, mut dhidden) = self.task.classifier.backward(&cls_cache, &dlogits)?;

        let mut penalty = 0.0;
        let mut proj_grads: Option<NetGrads> = None;
        if lambda > 0.0 {
            let (projected, proj_cache) = match &self.task.projector {
                Some(p) => {
                    let (out, cache) = p.forward(&hidden)?;
                    (out, Some(cache))
                }
                None => (hidden.clone(), None),
            };
            let mut dproj;
            if self.config.mode == CensorMode::Complementary {
                let halves = split_latent(&projected)?;
                let (pz, dz) =
                    self.censors[0].penalty(&halves.z, &batch.s, None, &mut self.train_rng)?;
                let (pw, mut dw) =
                    self.censors[1].penalty(&halves.w, &batch.s, None, &mut self.train_rng)?;
                penalty = complementary_combine(pz, pw);
                dw.scale(-1.0);
                dproj = RealMatrix::hconcat(&[&dz, &dw])?;
            } else {
                let y = self.censor_labels(&batch.y);
                let (p, dfeat) =
                    self.censors[0].penalty(&projected, &batch.s, y, &mut self.train_rng)?;
                penalty = p;
                dproj = dfeat;
            }
            dproj.scale(lambda);
            match (&self.task.projector, proj_cache) {
                (Some(p), Some(cache)) => {
                    let (pg, dh) = p.backward(&cache, &dproj)?;
                    proj_grads = Some(pg);
                    dhidden.add_assign(&dh)?;
                }
                _ => dhidden.add_assign(&dproj)?,
            }
        }

        let (enc_grads, _) = self.task.encoder.backward(&enc_cache, &dhidden)?;

        let total = ce + lambda * penalty;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "task objective {} (ce {}, penalty {})",
                total, ce, penalty
            )));
        }

        let mut grad_slices: Vec<&[f64]> = Network::grad_slices(&enc_grads);
        grad_slices.extend(Network::grad_slices(&cls_grads));
        if let Some(pg) = &proj_grads {
            grad_slices.extend(Network::grad_slices(pg));
        }
        let mut params = task_param_slices_mut(&mut self.task);
        self.task_opt.step(&mut params, &grad_slices)?;

        let mean_censor_loss = if censor_loss_terms > 0 {
            censor_loss / censor_loss_terms as f64
        } else {
            0.0
        };
        Ok((ce, penalty, mean_censor_loss))
    }

    fn run_epoch(&mut self, train: &TrialBatch, val: Option<&TrialBatch>) -> Result<EpochLog, Error> {
        let order = self.train_rng.permutation(train.len());
        let bs = self.config.batch_size.min(train.len());
        let mut sums = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            // a final partial batch is kept unless the permutation trick
            // would be degenerate on it
            if chunk.len() < 2 && (self.config.lambda > 0.0 || chunk.len() == 0) {
                continue;
            }
            let batch = train.select(chunk);
            let (ce, pen, closs) = self.batch_step(&batch)?;
            sums.0 += ce;
            sums.1 += pen;
            sums.2 += closs;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::Config("no usable mini-batches".into()));
        }
        self.epoch += 1;
        let train_ba = batch_balanced_accuracy(&self.task, train)?;
        let val_ba = match val {
            Some(v) => Some(batch_balanced_accuracy(&self.task, v)?),
            None => None,
        };
        Ok(EpochLog {
            epoch: self.epoch,
            task_ce: sums.0 / batches as f64,
            censor_penalty: sums.1 / batches as f64,
            censor_train_loss: sums.2 / batches as f64,
            train_ba,
            val_ba,
        })
    }
}

pub fn batch_balanced_accuracy(task: &TaskModel, batch: &TrialBatch) -> Result<f64, Error> {
    let pred = task.predict(&batch.x)?;
    let confusion = ConfusionCounts::from_labels(&batch.y, &pred, batch.n_classes)?;
    balanced_accuracy(&confusion)
}

pub fn task_param_slices(task: &TaskModel) -> Vec<&[f64]> {
    let mut out = task.encoder.param_slices();
    out.extend(task.classifier.param_slices());
    if let Some(p) = &task.projector {
        out.extend(p.param_slices());
    }
    out
}

pub fn task_param_slices_mut(task: &mut TaskModel) -> Vec<&mut [f64]> {
    let mut out = task.encoder.param_slices_mut();
    out.extend(task.classifier.param_slices_mut());
    if let Some(p) = &mut task.projector {
        out.extend(p.param_slices_mut());
    }
    out
}

/// Freshly initialized training state for the given configuration; also the
/// structural skeleton the checkpoint decoder fills with stored tensors.
pub fn init_checkpoint(
    config: &TrainConfig,
    model_cfg: &TaskModelConfig,
    n_nuisance: usize,
) -> Result<Checkpoint, Error> {
    config.validate()?;
    Ok(Trainer::fresh(config, model_cfg.clone(), n_nuisance)?.checkpoint())
}

/// Train from scratch (or resume from `start`) and return the selected
/// checkpoint plus the per-epoch logs of the epochs run in this call.
pub fn train_run(
    config: &TrainConfig,
    model_cfg: &TaskModelConfig,
    train: &TrialBatch,
    val: Option<&TrialBatch>,
    start: Option<Checkpoint>,
) -> Result<(Checkpoint, Vec<EpochLog>), Error> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if config.eval_point == EvalPoint::BestVal && val.is_none() {
        return Err(Error::Config("best-val evaluation requires a validation set".into()));
    }
    let mut trainer = match start {
        Some(ckpt) => {
            let mut t = Trainer::from_checkpoint(ckpt);
            // the caller's config governs the remaining epochs
            t.config = config.clone();
            t
        }
        None => Trainer::fresh(config, model_cfg.clone(), train.n_nuisance)?,
    };
    let mut logs = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    while trainer.epoch < config.epochs {
        let log = trainer.run_epoch(train, val)?;
        if let Some(v) = log.val_ba {
            // strict improvement keeps the earliest epoch on ties
            if best.as_ref().map_or(true, |(b, _)| v > *b) {
                best = Some((v, trainer.checkpoint()));
            }
        }
        let best_epoch = best.as_ref().map(|(_, c)| c.epoch);
        logs.push(log);
        if let (Some(patience), Some(be)) = (config.max_val_epochs, best_epoch) {
            if trainer.epoch - be >= patience {
                break;
            }
        }
    }
    let selected = match config.eval_point {
        EvalPoint::Final => trainer.checkpoint(),
        EvalPoint::BestVal => best.map(|(_, c)| c).ok_or_else(|| {
            Error::Config("no validation metrics recorded".into())
        })?,
    };
    Ok((selected, logs))
}
