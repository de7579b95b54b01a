//! Experiment configuration: dataset source, subject-split counts, the
//! (mode x method x lambda x projection x eval-point) grid, and training
//! hyperparameters shared by every grid cell.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::censor::{CensorMethod, CensorMode};
use crate::error::Error;
use crate::model::ProjectionType;
use crate::synth::GenModelSpec;
use crate::train::EvalPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        spec: GenModelSpec,
        trials_per_subject: usize,
        data_seed: u64,
    },
    EpochFile {
        path: PathBuf,
    },
}

fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_censor_steps() -> usize {
    1
}
fn default_projections() -> Vec<ProjectionType> {
    vec![ProjectionType::Trivial]
}
fn default_eval_points() -> Vec<EvalPoint> {
    vec![EvalPoint::Final]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub n_train_subjects: usize,
    #[serde(default)]
    pub n_val_subjects: usize,
    pub n_test_subjects: usize,
    pub folds: Vec<u64>,
    pub seeds: Vec<u64>,
    pub modes: Vec<CensorMode>,
    pub methods: Vec<CensorMethod>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_projections")]
    pub projections: Vec<ProjectionType>,
    #[serde(default = "default_eval_points")]
    pub eval_points: Vec<EvalPoint>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_censor_steps")]
    pub censor_steps: usize,
    #[serde(default)]
    pub max_val_epochs: Option<usize>,
    /// Non-targets kept per target during training-set subsampling
    /// (binary tasks only).
    #[serde(default)]
    pub subsample_ratio: Option<usize>,
    /// Latent dimension K of the encoder.
    #[serde(default)]
    pub latent_dim: Option<usize>,
    #[serde(default)]
    pub encoder_hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub classifier_hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub projector_hidden: Option<Vec<usize>>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        for (name, empty) in [
            ("folds", self.folds.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("modes", self.modes.is_empty()),
            ("methods", self.methods.is_empty()),
            ("lambdas", self.lambdas.is_empty()),
            ("projections", self.projections.is_empty()),
            ("eval_points", self.eval_points.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("{} list must be nonempty", name)));
            }
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        for &l in &self.lambdas {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("lambda must be >= 0, got {}", l)));
            }
            if l > 0.0 && self.batch_size < 2 {
                return Err(Error::Config(
                    "lambda > 0 needs batch size >= 2 (permutation trick)".into(),
                ));
            }
        }
        if self.n_train_subjects == 0 || self.n_test_subjects == 0 {
            return Err(Error::Config("train and test subject counts must be positive".into()));
        }
        if self.eval_points.contains(&EvalPoint::BestVal) && self.n_val_subjects == 0 {
            return Err(Error::Config(
                "best-val evaluation requires validation subjects".into(),
            ));
        }
        if let DatasetSource::Synthetic { spec, trials_per_subject, .. } = &self.dataset {
            spec.validate()?;
            if *trials_per_subject == 0 {
                return Err(Error::Config("trials_per_subject must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn mode_name(mode: CensorMode) -> &'static str {
    match mode {
        CensorMode::Marginal => "marginal",
        CensorMode::Conditional => "conditional",
        CensorMode::Complementary => "complementary",
    }
}

pub fn method_name(method: CensorMethod) -> &'static str {
    match method {
        CensorMethod::Adversarial => "adversarial",
        CensorMethod::DensityRatio => "density_ratio",
        CensorMethod::Wasserstein => "wasserstein",
    }
}

pub fn projection_name(p: ProjectionType) -> &'static str {
    match p {
        ProjectionType::Trivial => "trivial",
        ProjectionType::NonTrivial => "non_trivial",
    }
}

pub fn eval_point_name(e: EvalPoint) -> &'static str {
    match e {
        EvalPoint::Final => "final",
        EvalPoint::BestVal => "best_val",
    }
}

/// Small synthetic experiment used across the test suite.
#[cfg(test)]
pub fn tiny_config() -> ExperimentConfig {
    use crate::synth::GenVariant;
    ExperimentConfig {
        dataset: DatasetSource::Synthetic {
            spec: GenModelSpec {
                variant: GenVariant::A,
                n_classes: 2,
                n_subjects: 6,
                n_sessions: 1,
                latent_dim: 3,
                x_dim: 4,
                class_sep: 2.0,
                subject_offset_scale: 1.0,
                subject_rotation: false,
                session_perturbation: 0.0,
                noise: 0.3,
                label_table: None,
                w_sep: 0.0,
            },
            trials_per_subject: 40,
            data_seed: 11,
        },
        n_train_subjects: 4,
        n_val_subjects: 0,
        n_test_subjects: 2,
        folds: vec![0, 1],
        seeds: vec![0, 1],
        modes: vec![CensorMode::Marginal],
        methods: vec![CensorMethod::DensityRatio],
        lambdas: vec![0.1, 1.0, 10.0],
        projections: vec![ProjectionType::Trivial],
        eval_points: vec![EvalPoint::Final],
        epochs: 2,
        batch_size: 16,
        lr: 1e-3,
        weight_decay: 0.0,
        censor_steps: 1,
        max_val_epochs: None,
        subsample_ratio: None,
        latent_dim: Some(6),
        encoder_hidden: Some(vec![8]),
        classifier_hidden: Some(vec![8]),
        projector_hidden: Some(vec![8]),
        output_dir: PathBuf::from("out"),
    }
}
