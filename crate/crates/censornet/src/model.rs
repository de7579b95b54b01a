//! The classification pathway: encoder (x -> hidden features), classifier
//! (hidden features -> class posterior), and the optional projector feeding
//! the censor path. The classifier consumes hidden features; only the
//! projected features reach the censor.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::{
    softmax, Activation, Conv1dLayer, DenseLayer, Layer, Network, RealMatrix, RngStream,
};
use crate::synth::InputKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionType {
    /// Identity with zero parameters.
    Trivial,
    NonTrivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskModelConfig {
    pub input: InputKind,
    /// Latent dimension K (output of the encoder).
    pub latent_dim: usize,
    pub n_classes: usize,
    /// Hidden widths of the MLP encoder (vector input).
    pub encoder_hidden: Vec<usize>,
    /// Channel width of the conv blocks (epoched input).
    pub conv_width: usize,
    pub classifier_hidden: Vec<usize>,
    pub projection: ProjectionType,
    pub projector_hidden: Vec<usize>,
}

impl TaskModelConfig {
    /// Desk-scale defaults: K=128; vector encoder 2x256; conv encoder two
    /// blocks (kernel 7, stride 2, relu) + global average pool + dense;
    /// classifier 2x128; projector 2x128.
    pub fn default_for(input: InputKind, n_classes: usize) -> Self {
        TaskModelConfig {
            input,
            latent_dim: 128,
            n_classes,
            encoder_hidden: vec![256, 256],
            conv_width: 32,
            classifier_hidden: vec![128, 128],
            projection: ProjectionType::Trivial,
            projector_hidden: vec![128, 128],
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.latent_dim == 0 || self.n_classes < 2 {
            return Err(Error::Config(
                "latent_dim must be positive and n_classes >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Encoder F, classifier G, projector P with their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    pub config: TaskModelConfig,
    pub encoder: Network,
    pub classifier: Network,
    /// `None` for the trivial (identity) projection.
    pub projector: Option<Network>,
}

impl TaskModel {
    pub fn new(config: TaskModelConfig, rng: &mut RngStream) -> Result<Self, Error> {
        config.validate()?;
        let k = config.latent_dim;
        let encoder = match config.input {
            InputKind::Vector { dim } => {
                let mut dims = vec![dim];
                dims.extend(&config.encoder_hidden);
                dims.push(k);
                Network::mlp(&dims, Activation::Identity, rng)
            }
            InputKind::Epoched { channels, samples } => {
                let w = config.conv_width;
                let c1 = Conv1dLayer::new(channels, w, 7, 2, Activation::Relu, rng);
                let l1 = c1.out_len(samples)?;
                let c2 = Conv1dLayer::new(w, w, 7, 2, Activation::Relu, rng);
                let _ = c2.out_len(l1)?;
                Network::new(vec![
                    Layer::Conv1d(c1),
                    Layer::Conv1d(c2),
                    Layer::GlobalAvgPool { channels: w },
                    Layer::Dense(DenseLayer::new(w, k, Activation::Identity, rng)),
                ])
            }
        };
        let mut cdims = vec![k];
        cdims.extend(&config.classifier_hidden);
        cdims.push(config.n_classes);
        let classifier = Network::mlp(&cdims, Activation::Identity, rng);
        let projector = match config.projection {
            ProjectionType::Trivial => None,
            ProjectionType::NonTrivial => {
                let mut pdims = vec![k];
                pdims.extend(&config.projector_hidden);
                pdims.push(k);
                Some(Network::mlp(&pdims, Activation::Identity, rng))
            }
        };
        Ok(TaskModel {
            config,
            encoder,
            classifier,
            projector,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Hidden features (batch x K).
    pub fn encode(&self, x: &RealMatrix) -> Result<RealMatrix, Error> {
        Ok(self.encoder.forward(x)?.0)
    }

    /// Class posterior rows (softmax of the classifier's logits over the
    /// hidden features).
    pub fn classify(&self, hidden: &RealMatrix) -> Result<RealMatrix, Error> {
        let (logits, _) = self.classifier.forward(hidden)?;
        Ok(softmax(&logits))
    }

    /// Observed features: identity for the trivial projector.
    pub fn project(&self, hidden: &RealMatrix) -> Result<RealMatrix, Error> {
        match &self.projector {
            None => Ok(hidden.clone()),
            Some(p) => Ok(p.forward(hidden)?.0),
        }
    }

    /// Argmax class predictions for a batch of inputs.
    pub fn predict(&self, x: &RealMatrix) -> Result<Vec<usize>, Error> {
        let hidden = self.encode(x)?;
        let posterior = self.classify(&hidden)?;
        Ok((0..posterior.rows())
            .map(|r| {
                let row = posterior.row(r);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }
}

/// Positional split of projected features into halves for complementary
/// censoring.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSplit {
    pub z: RealMatrix,
    pub w: RealMatrix,
}

pub fn split_latent(features: &RealMatrix) -> Result<LatentSplit, Error> {
    let k = features.cols();
    if k % 2 != 0 {
        return Err(Error::Config(format!(
            "complementary mode requires an even latent dimension, got {}",
            k
        )));
    }
    Ok(LatentSplit {
        z: features.col_slice(0, k / 2),
        w: features.col_slice(k / 2, k),
    })
}
