//! Minimal deterministic neural-network engine: dense and 1-D convolution
//! layers, softmax/logistic losses, AdamW, spectral normalization, and a
//! seedable counter-based RNG. All arithmetic is in 64-bit reals.

pub mod layer;
pub mod loss;
pub mod matrix;
pub mod optim;
pub mod rng;
pub mod spectral;

pub use layer::{Activation, Conv1dLayer, DenseLayer, ForwardCache, Layer, LayerGrads, NetGrads, Network};
pub use loss::{logistic_terms, sigmoid, softmax, softmax_cross_entropy, softplus};
pub use matrix::{one_hot, RealMatrix};
pub use optim::{AdamWConfig, AdamWState};
pub use rng::RngStream;
pub use spectral::{spectral_backward, spectral_normalize, SpectralNormCache, SpectralNormState};
