//! A ReLU multi-layer perceptron with explicit forward and reverse passes.
//!
//! Every layer stores its weight as `in_dim × out_dim`, so a layer computes
//! `Wᵀ x + b`. ReLU follows every layer except the last. The reverse pass
//! returns gradients for every parameter block plus the input, which lets the
//! scoring code pick any subset of parameters.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::linalg::{matvec, Matrix, Vector};
use crate::rng::Rng;

const MLP_MAGIC: &[u8; 4] = b"MLP1";

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    weight: Matrix,
    bias: Vector,
}

impl LinearLayer {
    pub fn new(weight: Matrix, bias: Vector) -> Result<Self> {
        if weight.cols() != bias.len() {
            return Err(Error::shape(format!(
                "weight {}x{} with bias of length {}",
                weight.rows(),
                weight.cols(),
                bias.len()
            )));
        }
        if weight.rows() == 0 || weight.cols() == 0 {
            return Err(Error::shape("layer dimensions must be positive"));
        }
        Ok(LinearLayer { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Vector {
        &mut self.bias
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        let mut z = matvec(&self.weight, x)?;
        for (zi, bi) in z.iter_mut().zip(self.bias.iter()) {
            *zi += bi;
        }
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<LinearLayer>,
}

/// Cached activations from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Vector,
    /// `pre[k]` is layer `k`'s affine output.
    pre: Vec<Vector>,
    /// `post[k]` is `relu(pre[k])` for hidden layers and `pre[k]` for the last.
    post: Vec<Vector>,
    fingerprint: u64,
}

impl ForwardTrace {
    pub fn input(&self) -> &Vector {
        &self.input
    }

    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    pub fn pre_activations(&self) -> &[Vector] {
        &self.pre
    }

    pub fn logits(&self) -> &Vector {
        self.post.last().expect("trace has at least one layer")
    }

    /// Input of the final layer: the last hidden activation, or the raw input
    /// for a single-layer model.
    pub fn penultimate(&self) -> &Vector {
        match self.post.len() {
            0 | 1 => &self.input,
            n => &self.post[n - 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: Matrix,
    pub bias: Vector,
}

/// Gradients of a scalar loss for every layer and for the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub input: Vector,
}

/// Which parameter blocks are concatenated before taking a norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamSelection {
    /// Weight matrix of the final layer, bias excluded.
    #[default]
    LastLayerWeight,
    /// Weight and bias of layer `k` (0-based).
    Layer(usize),
    /// Every weight and bias.
    AllParams,
}

impl fmt::Display for ParamSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamSelection::LastLayerWeight => f.write_str("last"),
            ParamSelection::Layer(k) => write!(f, "layer:{k}"),
            ParamSelection::AllParams => f.write_str("all"),
        }
    }
}

impl FromStr for ParamSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "last" => Ok(ParamSelection::LastLayerWeight),
            "all" => Ok(ParamSelection::AllParams),
            other => {
                let k = other
                    .strip_prefix("layer:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::config("selection", format!("expected last|layer:K|all, got {s:?}"))
                    })?;
                Ok(ParamSelection::Layer(k))
            }
        }
    }
}

impl Gradients {
    /// Concatenates the selected blocks: layer-major, each layer's weight in
    /// row-major order followed by its bias. `LastLayerWeight` contributes the
    /// final weight only.
    pub fn select(&self, sel: ParamSelection) -> Result<Vector> {
        let n = self.layers.len();
        let mut out = Vec::new();
        match sel {
            ParamSelection::LastLayerWeight => {
                let last = self.layers.last().ok_or(Error::LayerOutOfRange {
                    index: 0,
                    layers: 0,
                })?;
                out.extend_from_slice(last.weight.as_slice());
            }
            ParamSelection::Layer(k) => {
                let g = self.layers.get(k).ok_or(Error::LayerOutOfRange {
                    index: k,
                    layers: n,
                })?;
                out.extend_from_slice(g.weight.as_slice());
                out.extend_from_slice(&g.bias);
            }
            ParamSelection::AllParams => {
                for g in &self.layers {
                    out.extend_from_slice(g.weight.as_slice());
                    out.extend_from_slice(&g.bias);
                }
            }
        }
        Ok(Vector::new(out))
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weight
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v *= factor);
            g.bias.iter_mut().for_each(|v| *v *= factor);
        }
        self.input.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += factor · other`; shapes must already agree.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                *x += factor * y;
            }
            for (x, y) in a.bias.iter_mut().zip(b.bias.iter()) {
                *x += factor * y;
            }
        }
        for (x, y) in self.input.iter_mut().zip(other.input.iter()) {
            *x += factor * y;
        }
    }
}

/// Free-function form of [`Gradients::select`].
pub fn select_gradients(grads: &Gradients, sel: ParamSelection) -> Result<Vector> {
    grads.select(sel)
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x <= 0.0 {
            *x = 0.0;
        }
    }
}

impl MlpModel {
    pub fn new(layers: Vec<LinearLayer>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::shape("model needs at least one layer"))?;
        if last.out_dim() < 2 {
            return Err(Error::TooFewClasses(last.out_dim()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(MlpModel { layers })
    }

    /// Glorot-uniform weights in `[−s, s]`, `s = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases. Weights are drawn layer by layer in row-major order.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("dims", "need at least input and output dims"));
        }
        if let Some(d) = dims.iter().position(|&d| d == 0) {
            return Err(Error::config("dims", format!("dimension {d} is zero")));
        }
        let mut rng = Rng::new(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.uniform(-s, s)).collect();
            layers.push(LinearLayer::new(
                Matrix::new(fan_in, fan_out, w)?,
                Vector::zeros(fan_out),
            )?);
        }
        MlpModel::new(layers)
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Width of the vector feeding the final layer.
    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].in_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(LinearLayer::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim() * l.out_dim() + l.out_dim())
            .sum()
    }

    /// Hash of shapes and parameter bits, used to reject traces from a
    /// different or since-modified model.
    fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01B3;
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(PRIME);
        };
        for l in &self.layers {
            mix(l.in_dim() as u64);
            mix(l.out_dim() as u64);
            for v in l.weight.as_slice().iter().chain(l.bias.iter()) {
                mix(v.to_bits());
            }
        }
        h
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vector, ForwardTrace)> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "model expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vector> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { x } else { &post[k - 1][..] };
            let z = layer.forward(input)?;
            let mut a = z.clone();
            if k != last {
                relu(&mut a);
            }
            pre.push(z);
            post.push(a);
        }
        let trace = ForwardTrace {
            input: Vector::from(x),
            pre,
            post,
            fingerprint: self.fingerprint(),
        };
        Ok((trace.logits().clone(), trace))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vector> {
        Ok(self.forward(x)?.0)
    }

    /// `(penultimate features, logits)` for one input.
    pub fn features_and_logits(&self, x: &[f64]) -> Result<(Vector, Vector)> {
        let (logits, trace) = self.forward(x)?;
        Ok((trace.penultimate().clone(), logits))
    }

    /// Reverse pass of a scalar loss given its gradient with respect to the
    /// logits. ReLU's derivative at exactly 0 is taken as 0.
    pub fn backward(&self, trace: &ForwardTrace, dloss_dlogits: &[f64]) -> Result<Gradients> {
        if trace.depth() != self.layers.len()
            || trace.input.len() != self.input_dim()
            || trace.fingerprint != self.fingerprint()
        {
            return Err(Error::StaleTrace(
                "trace was not produced by forward on this model".into(),
            ));
        }
        if dloss_dlogits.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "upstream gradient of length {} for {} logits",
                dloss_dlogits.len(),
                self.output_dim()
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut delta = dloss_dlogits.to_vec();
        let mut input_grad = Vector::default();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let a = if k == 0 {
                &trace.input
            } else {
                &trace.post[k - 1]
            };
            let (rows, cols) = layer.weight.shape();
            let mut gw = Vec::with_capacity(rows * cols);
            for &ai in a.iter() {
                gw.extend(delta.iter().map(|d| ai * d));
            }
            layers.push(LayerGradient {
                weight: Matrix::new(rows, cols, gw)?,
                bias: Vector::from(&delta[..]),
            });
            let mut da = layer.weight.mul_vec(&delta)?;
            if k == 0 {
                input_grad = da;
            } else {
                for (d, z) in da.iter_mut().zip(trace.pre[k - 1].iter()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = da.into_inner();
            }
        }
        layers.reverse();
        Ok(Gradients {
            layers,
            input: input_grad,
        })
    }

    /// Applies `θ ← θ − lr · g` to every parameter.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer
                .weight
                .as_mut_slice()
                .iter_mut()
                .zip(g.weight.as_slice())
            {
                *w -= lr * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(g.bias.iter()) {
                *b -= lr * gb;
            }
        }
    }

    /// `MLP1` encoding: magic, u32 layer count, then per layer u32 in_dim,
    /// u32 out_dim, weight f64s row-major, bias f64s. Little-endian.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(8 + self.num_params() * 8 + self.layers.len() * 8);
        out.extend_from_slice(MLP_MAGIC);
        binio::put_u32(&mut out, binio::dim_u32(self.layers.len(), "layer count")?);
        for l in &self.layers {
            binio::put_u32(&mut out, binio::dim_u32(l.in_dim(), "in_dim")?);
            binio::put_u32(&mut out, binio::dim_u32(l.out_dim(), "out_dim")?);
            binio::put_f64s(&mut out, l.weight.as_slice());
            binio::put_f64s(&mut out, &l.bias);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "MLP1");
        r.magic(MLP_MAGIC)?;
        let count = r.u32()? as usize;
        if count == 0 {
            return Err(Error::Malformed("MLP1: zero layers".into()));
        }
        let mut layers = Vec::new();
        for _ in 0..count {
            let in_dim = r.u32()? as usize;
            let out_dim = r.u32()? as usize;
            let n = in_dim
                .checked_mul(out_dim)
                .ok_or_else(|| Error::DimOverflow(format!("MLP1 layer {in_dim}x{out_dim}")))?;
            let w = r.f64s(n)?;
            let b = r.f64s(out_dim)?;
            let layer = LinearLayer::new(Matrix::new(in_dim, out_dim, w)?, Vector::new(b))
                .map_err(|e| Error::Malformed(format!("MLP1: {e}")))?;
            layers.push(layer);
        }
        r.finish()?;
        MlpModel::new(layers).map_err(|e| Error::Malformed(format!("MLP1: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        binio::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        MlpModel::from_bytes(&std::fs::read(path)?)
    }
}
