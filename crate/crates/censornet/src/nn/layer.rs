use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::matrix::RealMatrix;
use crate::nn::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(&self, pre: &RealMatrix) -> RealMatrix {
        match self {
            Activation::Identity => pre.clone(),
            Activation::Relu => {
                let mut out = pre.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                out
            }
        }
    }

    /// Gradient through the activation given the pre-activation values.
    fn backprop(&self, pre: &RealMatrix, grad_out: &RealMatrix) -> RealMatrix {
        match self {
            Activation::Identity => grad_out.clone(),
            Activation::Relu => {
                let mut g = grad_out.clone();
                for (gv, pv) in g.data_mut().iter_mut().zip(pre.data()) {
                    if *pv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                g
            }
        }
    }
}

/// Fully connected layer; weights are (out x in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: RealMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut weights = RealMatrix::zeros(out_dim, in_dim);
        for v in weights.data_mut() {
            *v = rng.uniform_in(-bound, bound);
        }
        DenseLayer {
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// 1-D convolution over channel-major rows: a row of the input matrix is
/// `[ch0 t0..tL, ch1 t0..tL, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1dLayer {
    /// (out_ch x in_ch x kernel_width), flattened.
    pub kernels: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel_width: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl Conv1dLayer {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel_width: usize,
        stride: usize,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Self {
        assert!(kernel_width >= 1 && stride >= 1);
        let fan_in = in_ch * kernel_width;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let kernels = (0..out_ch * fan_in)
            .map(|_| rng.uniform_in(-bound, bound))
            .collect();
        Conv1dLayer {
            kernels,
            bias: vec![0.0; out_ch],
            in_ch,
            out_ch,
            kernel_width,
            stride,
            activation,
        }
    }

    pub fn out_len(&self, in_len: usize) -> Result<usize, Error> {
        if in_len < self.kernel_width {
            return Err(Error::Shape(format!(
                "conv1d input length {} shorter than kernel width {}",
                in_len, self.kernel_width
            )));
        }
        Ok((in_len - self.kernel_width) / self.stride + 1)
    }

    #[inline]
    fn k(&self, oc: usize, ic: usize, t: usize) -> f64 {
        self.kernels[(oc * self.in_ch + ic) * self.kernel_width + t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(DenseLayer),
    Conv1d(Conv1dLayer),
    /// Mean over the time axis per channel: (ch x L) -> (ch).
    GlobalAvgPool { channels: usize },
}

#[derive(Debug, Clone)]
pub enum LayerGrads {
    Dense { dw: RealMatrix, db: Vec<f64> },
    Conv1d { dk: Vec<f64>, db: Vec<f64> },
    None,
}

#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn scale(&mut self, a: f64) {
        for lg in &mut self.layers {
            match lg {
                LayerGrads::Dense { dw, db } => {
                    dw.scale(a);
                    for v in db {
                        *v *= a;
                    }
                }
                LayerGrads::Conv1d { dk, db } => {
                    for v in dk {
                        *v *= a;
                    }
                    for v in db {
                        *v *= a;
                    }
                }
                LayerGrads::None => {}
            }
        }
    }

    pub fn add_assign(&mut self, other: &NetGrads) -> Result<(), Error> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape("gradient layer count mismatch".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (LayerGrads::Dense { dw, db }, LayerGrads::Dense { dw: dw2, db: db2 }) => {
                    dw.add_assign(dw2)?;
                    for (x, y) in db.iter_mut().zip(db2) {
                        *x += y;
                    }
                }
                (LayerGrads::Conv1d { dk, db }, LayerGrads::Conv1d { dk: dk2, db: db2 }) => {
                    for (x, y) in dk.iter_mut().zip(dk2) {
                        *x += y;
                    }
                    for (x, y) in db.iter_mut().zip(db2) {
                        *x += y;
                    }
                }
                (LayerGrads::None, LayerGrads::None) => {}
                _ => return Err(Error::Shape("gradient layer kind mismatch".into())),
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
struct LayerCache {
    input: RealMatrix,
    preact: RealMatrix,
}

/// Cached intermediates from a forward pass; required by `backward`.
#[derive(Debug)]
pub struct ForwardCache {
    per_layer: Vec<LayerCache>,
    pub output: RealMatrix,
}

/// A plain sequential network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network { layers }
    }

    /// An MLP with the given layer widths; hidden layers use relu, the last
    /// layer uses `last_activation`.
    pub fn mlp(dims: &[usize], last_activation: Activation, rng: &mut RngStream) -> Self {
        assert!(dims.len() >= 2);
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let act = if i + 2 == dims.len() {
                last_activation
            } else {
                Activation::Relu
            };
            layers.push(Layer::Dense(DenseLayer::new(dims[i], dims[i + 1], act, rng)));
        }
        Network { layers }
    }

    pub fn forward(&self, input: &RealMatrix) -> Result<(RealMatrix, ForwardCache), Error> {
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (out, cache) = match layer {
                Layer::Dense(d) => {
                    if x.cols() != d.in_dim() {
                        return Err(Error::Shape(format!(
                            "dense expects {} input cols, got {}",
                            d.in_dim(),
                            x.cols()
                        )));
                    }
                    let mut pre = x.matmul_transpose(&d.weights)?;
                    pre.add_row_vector(&d.bias)?;
                    let out = d.activation.apply(&pre);
                    (
                        out,
                        LayerCache {
                            input: x,
                            preact: pre,
                        },
                    )
                }
                Layer::Conv1d(c) => {
                    if x.cols() % c.in_ch != 0 {
                        return Err(Error::Shape(format!(
                            "conv1d input cols {} not divisible by {} channels",
                            x.cols(),
                            c.in_ch
                        )));
                    }
                    let in_len = x.cols() / c.in_ch;
                    let out_len = c.out_len(in_len)?;
                    let mut pre = RealMatrix::zeros(x.rows(), c.out_ch * out_len);
                    for r in 0..x.rows() {
                        let row = x.row(r);
                        for oc in 0..c.out_ch {
                            for t in 0..out_len {
                                let mut acc = c.bias[oc];
                                let base = t * c.stride;
                                for ic in 0..c.in_ch {
                                    let chan = &row[ic * in_len..(ic + 1) * in_len];
                                    for k in 0..c.kernel_width {
                                        acc += c.k(oc, ic, k) * chan[base + k];
                                    }
                                }
                                pre.set(r, oc * out_len + t, acc);
                            }
                        }
                    }
                    let out = c.activation.apply(&pre);
                    (
                        out,
                        LayerCache {
                            input: x,
                            preact: pre,
                        },
                    )
                }
                Layer::GlobalAvgPool { channels } => {
                    if x.cols() % channels != 0 {
                        return Err(Error::Shape(format!(
                            "pool input cols {} not divisible by {} channels",
                            x.cols(),
                            channels
                        )));
                    }
                    let len = x.cols() / channels;
                    let mut out = RealMatrix::zeros(x.rows(), *channels);
                    for r in 0..x.rows() {
                        let row = x.row(r);
                        for ch in 0..*channels {
                            let s: f64 = row[ch * len..(ch + 1) * len].iter().sum();
                            out.set(r, ch, s / len as f64);
                        }
                    }
                    (
                        out.clone(),
                        LayerCache {
                            input: x,
                            preact: out,
                        },
                    )
                }
            };
            per_layer.push(cache);
            x = out;
        }
        Ok((
            x.clone(),
            ForwardCache {
                per_layer,
                output: x,
            },
        ))
    }

    /// Reverse pass. Returns parameter gradients and the gradient with
    /// respect to the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &RealMatrix,
    ) -> Result<(NetGrads, RealMatrix), Error> {
        if cache.per_layer.len() != self.layers.len() {
            return Err(Error::Shape(
                "forward cache does not match network depth".into(),
            ));
        }
        if grad_output.rows() != cache.output.rows() || grad_output.cols() != cache.output.cols() {
            return Err(Error::Shape(format!(
                "upstream gradient {}x{} vs output {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                cache.output.rows(),
                cache.output.cols()
            )));
        }
        let mut grads = vec![LayerGrads::None; self.layers.len()];
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.per_layer[i];
            match layer {
                Layer::Dense(d) => {
                    let dpre = d.activation.backprop(&lc.preact, &g);
                    // dW = dpre^T * input; db = column sums of dpre.
                    let dw = dpre.transpose_matmul(&lc.input)?;
                    let mut db = vec![0.0; d.out_dim()];
                    for r in 0..dpre.rows() {
                        for (j, v) in dpre.row(r).iter().enumerate() {
                            db[j] += v;
                        }
                    }
                    g = dpre.matmul(&d.weights)?;
                    grads[i] = LayerGrads::Dense { dw, db };
                }
                Layer::Conv1d(c) => {
                    let dpre = c.activation.backprop(&lc.preact, &g);
                    let in_len = lc.input.cols() / c.in_ch;
                    let out_len = c.out_len(in_len)?;
                    let mut dk = vec![0.0; c.kernels.len()];
                    let mut db = vec![0.0; c.out_ch];
                    let mut din = RealMatrix::zeros(lc.input.rows(), lc.input.cols());
                    for r in 0..lc.input.rows() {
                        let row = lc.input.row(r);
                        for oc in 0..c.out_ch {
                            for t in 0..out_len {
                                let gv = dpre.get(r, oc * out_len + t);
                                if gv == 0.0 {
                                    continue;
                                }
                                db[oc] += gv;
                                let base = t * c.stride;
                                for ic in 0..c.in_ch {
                                    for k in 0..c.kernel_width {
                                        let ki = (oc * c.in_ch + ic) * c.kernel_width + k;
                                        dk[ki] += gv * row[ic * in_len + base + k];
                                        let di = ic * in_len + base + k;
                                        let cur = din.get(r, di);
                                        din.set(r, di, cur + gv * c.kernels[ki]);
                                    }
                                }
                            }
                        }
                    }
                    g = din;
                    grads[i] = LayerGrads::Conv1d { dk, db };
                }
                Layer::GlobalAvgPool { channels } => {
                    let len = lc.input.cols() / channels;
                    let mut din = RealMatrix::zeros(lc.input.rows(), lc.input.cols());
                    for r in 0..g.rows() {
                        for ch in 0..*channels {
                            let gv = g.get(r, ch) / len as f64;
                            for t in 0..len {
                                din.set(r, ch * len + t, gv);
                            }
                        }
                    }
                    g = din;
                    grads[i] = LayerGrads::None;
                }
            }
        }
        Ok((NetGrads { layers: grads }, g))
    }

    /// Parameter tensors in a fixed order (weights then bias per layer).
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.data());
                    out.push(d.bias.as_slice());
                }
                Layer::Conv1d(c) => {
                    out.push(c.kernels.as_slice());
                    out.push(c.bias.as_slice());
                }
                Layer::GlobalAvgPool { .. } => {}
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.data_mut());
                    out.push(d.bias.as_mut_slice());
                }
                Layer::Conv1d(c) => {
                    out.push(c.kernels.as_mut_slice());
                    out.push(c.bias.as_mut_slice());
                }
                Layer::GlobalAvgPool { .. } => {}
            }
        }
        out
    }

    pub fn grad_slices(grads: &NetGrads) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for lg in &grads.layers {
            match lg {
                LayerGrads::Dense { dw, db } => {
                    out.push(dw.data());
                    out.push(db.as_slice());
                }
                LayerGrads::Conv1d { dk, db } => {
                    out.push(dk.as_slice());
                    out.push(db.as_slice());
                }
                LayerGrads::None => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Dense(d) => Some(d.out_dim()),
            Layer::Conv1d(_) => None,
            Layer::GlobalAvgPool { channels } => Some(*channels),
        })
    }
}
