//! Cross-validation sweep: for each (seed, fold) a shared lambda = 0 control
//! run plus one run per grid cell, each trained on the fold's training
//! subjects and evaluated on its held-out test subjects.

use std::path::Path;

use crate::censor::{CensorMethod, CensorMode};
use crate::error::Error;
use crate::io::config::{
    eval_point_name, method_name, mode_name, projection_name, DatasetSource, ExperimentConfig,
};
use crate::model::{ProjectionType, TaskModelConfig};
use crate::nn::RngStream;
use crate::stats::{overfit_ratio, probe_subject_accuracy};
use crate::synth::{subject_split, subsample_nontargets, GenModel, TrialBatch};
use crate::train::{batch_balanced_accuracy, train_run, EvalPoint, TrainConfig};

pub const CSV_HEADER: &str = "run_id,seed,fold,censor_mode,censor_method,lambda,projection,eval_point,epochs_trained,train_ba,val_ba,test_ba,overfit_ratio,probe_ba,status";

/// RNG stream for the subject-probe diagnostic, disjoint from the trainer's.
const STREAM_PROBE: u64 = 4;
/// Stream for per-fold non-target subsampling.
const STREAM_SUBSAMPLE: u64 = 5;
/// Stream feeding synthetic model realization and sampling.
const STREAM_DATA: u64 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run_id: String,
    pub seed: u64,
    pub fold: u64,
    pub censor_mode: String,
    pub censor_method: String,
    pub lambda: f64,
    pub projection: String,
    pub eval_point: String,
    pub epochs_trained: Option<usize>,
    pub train_ba: Option<f64>,
    pub val_ba: Option<f64>,
    pub test_ba: Option<f64>,
    pub overfit_ratio: Option<f64>,
    pub probe_ba: Option<f64>,
    pub status: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{:.6}", x)).unwrap_or_default()
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.fold,
            self.censor_mode,
            self.censor_method,
            self.lambda,
            self.projection,
            self.eval_point,
            self.epochs_trained.map(|e| e.to_string()).unwrap_or_default(),
            fmt_opt(self.train_ba),
            fmt_opt(self.val_ba),
            fmt_opt(self.test_ba),
            fmt_opt(self.overfit_ratio),
            fmt_opt(self.probe_ba),
            self.status
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self, Error> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(Error::Format(format!(
                "expected 15 CSV fields, got {}: {}",
                fields.len(),
                line
            )));
        }
        let opt_f = |s: &str| -> Result<Option<f64>, Error> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Format(format!("bad number \"{}\"", s)))
            }
        };
        Ok(ResultRow {
            run_id: fields[0].to_string(),
            seed: fields[1].parse().map_err(|_| Error::Format(format!("bad seed \"{}\"", fields[1])))?,
            fold: fields[2].parse().map_err(|_| Error::Format(format!("bad fold \"{}\"", fields[2])))?,
            censor_mode: fields[3].to_string(),
            censor_method: fields[4].to_string(),
            lambda: fields[5].parse().map_err(|_| Error::Format(format!("bad lambda \"{}\"", fields[5])))?,
            projection: fields[6].to_string(),
            eval_point: fields[7].to_string(),
            epochs_trained: if fields[8].is_empty() {
                None
            } else {
                Some(fields[8].parse().map_err(|_| Error::Format(format!("bad epoch count \"{}\"", fields[8])))?)
            },
            train_ba: opt_f(fields[9])?,
            val_ba: opt_f(fields[10])?,
            test_ba: opt_f(fields[11])?,
            overfit_ratio: opt_f(fields[12])?,
            probe_ba: opt_f(fields[13])?,
            status: fields[14].to_string(),
        })
    }
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<(), Error> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "unexpected CSV header: {:?}",
                other
            )))
        }
    }
    lines.map(ResultRow::from_csv_line).collect()
}

/// Loaded dataset plus the nuisance -> subject mapping (multiple sessions of
/// one subject share a subject id).
pub struct Dataset {
    pub batch: TrialBatch,
    pub n_subjects: usize,
    pub n_sessions: usize,
}

impl Dataset {
    pub fn subject_of(&self, s: usize) -> usize {
        s / self.n_sessions
    }
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset, Error> {
    match &config.dataset {
        DatasetSource::Synthetic {
            spec,
            trials_per_subject,
            data_seed,
        } => {
            let mut rng = RngStream::new(*data_seed, STREAM_DATA);
            let model = GenModel::realize(spec, &mut rng)?;
            let n = trials_per_subject * spec.n_nuisance();
            let (batch, _truth) = model.sample(n, &mut rng)?;
            Ok(Dataset {
                batch,
                n_subjects: spec.n_subjects,
                n_sessions: spec.n_sessions,
            })
        }
        DatasetSource::EpochFile { path } => {
            let batch = crate::io::epoch::read_epoch_file(path)?;
            let n_subjects = batch.n_nuisance;
            Ok(Dataset {
                batch,
                n_subjects,
                n_sessions: 1,
            })
        }
    }
}

fn model_config(config: &ExperimentConfig, data: &TrialBatch) -> TaskModelConfig {
    let mut cfg = TaskModelConfig::default_for(data.input, data.n_classes);
    if let Some(k) = config.latent_dim {
        cfg.latent_dim = k;
    }
    if let Some(h) = &config.encoder_hidden {
        cfg.encoder_hidden = h.clone();
    }
    if let Some(h) = &config.classifier_hidden {
        cfg.classifier_hidden = h.clone();
    }
    if let Some(h) = &config.projector_hidden {
        cfg.projector_hidden = h.clone();
    }
    cfg
}

struct GridCell {
    mode: CensorMode,
    method: CensorMethod,
    lambda: f64,
    projection: ProjectionType,
    eval_point: EvalPoint,
}

fn grid_cells(config: &ExperimentConfig) -> Vec<GridCell> {
    let mut cells = Vec::new();
    for &mode in &config.modes {
        for &method in &config.methods {
            for &lambda in &config.lambdas {
                for &projection in &config.projections {
                    for &eval_point in &config.eval_points {
                        cells.push(GridCell {
                            mode,
                            method,
                            lambda,
                            projection,
                            eval_point,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn train_config(config: &ExperimentConfig, cell: &GridCell, seed: u64) -> TrainConfig {
    let mut tc = TrainConfig::new(cell.mode, cell.method, cell.lambda, seed);
    tc.projection = cell.projection;
    tc.eval_point = cell.eval_point;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.lr = config.lr;
    tc.weight_decay = config.weight_decay;
    tc.censor_steps = config.censor_steps;
    tc.max_val_epochs = config.max_val_epochs;
    tc
}

struct RunMetrics {
    epochs_trained: usize,
    train_ba: f64,
    val_ba: Option<f64>,
    test_ba: f64,
    overfit: f64,
    probe_ba: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    config: &ExperimentConfig,
    cell: &GridCell,
    mcfg: &TaskModelConfig,
    seed: u64,
    fold: u64,
    train: &TrialBatch,
    val: Option<&TrialBatch>,
    test: &TrialBatch,
    dataset: &Dataset,
) -> Result<RunMetrics, Error> {
    let mut tc = train_config(config, cell, seed);
    let mut mcfg = mcfg.clone();
    mcfg.projection = cell.projection;
    tc.projection = cell.projection;
    let (ckpt, logs) = train_run(&tc, &mcfg, train, val, None)?;
    let epochs_trained = logs.last().map_or(0, |l| l.epoch);
    let train_ba = batch_balanced_accuracy(&ckpt.task, train)?;
    let val_ba = match val {
        Some(v) => Some(batch_balanced_accuracy(&ckpt.task, v)?),
        None => None,
    };
    let test_ba = batch_balanced_accuracy(&ckpt.task, test)?;
    let overfit = overfit_ratio(train_ba, test_ba)?;
    // Subject probe on the censor-visible features of the training trials:
    // the independence penalty acts on the training subjects, so this is
    // where censoring is expected to reduce subject decodability.
    let probe_ba = {
        let hidden = ckpt.task.encode(&train.x)?;
        let features = ckpt.task.project(&hidden)?;
        let mut subjects: Vec<usize> = train.s.iter().map(|&s| dataset.subject_of(s)).collect();
        let mut uniq: Vec<usize> = subjects.clone();
        uniq.sort_unstable();
        uniq.dedup();
        for sub in &mut subjects {
            *sub = uniq.binary_search(sub).unwrap();
        }
        let mut probe_rng = RngStream::new(seed, STREAM_PROBE).derive(fold);
        probe_subject_accuracy(&features, &subjects, &mut probe_rng).ok()
    };
    Ok(RunMetrics {
        epochs_trained,
        train_ba,
        val_ba,
        test_ba,
        overfit,
        probe_ba,
    })
}

fn subset_by_subjects(dataset: &Dataset, subjects: &[usize]) -> TrialBatch {
    let idx: Vec<usize> = (0..dataset.batch.len())
        .filter(|&i| subjects.contains(&dataset.subject_of(dataset.batch.s[i])))
        .collect();
    dataset.batch.select(&idx)
}

/// Execute the full sweep. Individual run failures become status=failed rows
/// and never abort the remaining runs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>, Error> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let mcfg = model_config(config, &dataset.batch);
    let cells = grid_cells(config);
    let all_subjects: Vec<usize> = (0..dataset.n_subjects).collect();
    let data_seed = match &config.dataset {
        DatasetSource::Synthetic { data_seed, .. } => *data_seed,
        DatasetSource::EpochFile { .. } => 0,
    };
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        for &fold in &config.folds {
            let split_rng = RngStream::new(data_seed, 7);
            let (train_subj, val_subj, test_subj) = subject_split(
                &all_subjects,
                config.n_train_subjects,
                config.n_val_subjects,
                config.n_test_subjects,
                fold,
                &split_rng,
            )?;
            let mut train = subset_by_subjects(&dataset, &train_subj);
            let val = if val_subj.is_empty() {
                None
            } else {
                Some(subset_by_subjects(&dataset, &val_subj))
            };
            let test = subset_by_subjects(&dataset, &test_subj);
            if let Some(ratio) = config.subsample_ratio {
                let mut sub_rng = RngStream::new(seed, STREAM_SUBSAMPLE).derive(fold);
                let (subsampled, _warnings) = subsample_nontargets(&train, ratio, &mut sub_rng)?;
                train = subsampled;
            }

            // grid index 0 is the shared lambda = 0 control
            let control = GridCell {
                mode: CensorMode::Marginal,
                method: CensorMethod::Adversarial,
                lambda: 0.0,
                projection: ProjectionType::Trivial,
                eval_point: config.eval_points[0],
            };
            for (gidx, cell) in std::iter::once(&control).chain(cells.iter()).enumerate() {
                let is_control = gidx == 0;
                let outcome = run_one(
                    config, cell, &mcfg, seed, fold, &train, val.as_ref(), &test, &dataset,
                );
                let (mode_s, method_s) = if is_control {
                    ("none".to_string(), "none".to_string())
                } else {
                    (mode_name(cell.mode).to_string(), method_name(cell.method).to_string())
                };
                let mut row = ResultRow {
                    run_id: format!("s{}_f{}_c{}", seed, fold, gidx),
                    seed,
                    fold,
                    censor_mode: mode_s,
                    censor_method: method_s,
                    lambda: cell.lambda,
                    projection: projection_name(cell.projection).to_string(),
                    eval_point: eval_point_name(cell.eval_point).to_string(),
                    epochs_trained: None,
                    train_ba: None,
                    val_ba: None,
                    test_ba: None,
                    overfit_ratio: None,
                    probe_ba: None,
                    status: "failed".to_string(),
                };
                if let Ok(m) = outcome {
                    row.epochs_trained = Some(m.epochs_trained);
                    row.train_ba = Some(m.train_ba);
                    row.val_ba = m.val_ba;
                    row.test_ba = Some(m.test_ba);
                    row.overfit_ratio = Some(m.overfit);
                    row.probe_ba = m.probe_ba;
                    row.status = "ok".to_string();
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
