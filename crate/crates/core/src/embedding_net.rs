//! The shared-weight embedding network.
//!
//! A fully-connected feed-forward net `input_dim -> hidden_dims... -> embed_dim`
//! with leaky rectified hidden activations and an unconstrained affine output
//! layer. Both branches of a Siamese pair run through the same parameters; the
//! batched training path stacks the two branches into one matrix so the
//! sharing is structural rather than copied.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{pair_loss, pair_loss_derivative};
use crate::error::{Error, Result};
use crate::seed;

pub const MODEL_FORMAT: &str = "sds-embedding-net";
pub const MODEL_VERSION: u32 = 1;

/// Architecture and initialization seed of an [`EmbeddingNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub leaky_slope: f64,
    pub init_seed: u64,
}

impl NetSpec {
    /// Three hidden layers of width 128, a 64-wide embedding and slope 0.01.
    pub fn with_defaults(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![128, 128, 128],
            embed_dim: 64,
            leaky_slope: 0.01,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config("all layer widths must be at least 1"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("leaky slope must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_dims.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden_dims);
        widths.push(self.embed_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One affine layer; `weights` is `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet {
    spec: NetSpec,
    layers: Vec<Layer>,
}

/// Parameter gradients laid out like the net's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &EmbeddingNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// All partials in the order of [`EmbeddingNet::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&g| g == 0.0)
    }
}

/// Per-layer inputs and pre-activations kept for backpropagation.
struct Trace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

#[inline]
fn leaky(t: f64, slope: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        slope * t
    }
}

#[inline]
fn leaky_derivative(t: f64, slope: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        slope
    }
}

impl EmbeddingNet {
    /// Fan-based uniform initialization with zero biases.
    pub fn init(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(spec.init_seed);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-limit..=limit));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Assembles a net from explicit parameters, checking that shapes chain.
    pub fn from_layers(spec: NetSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::ModelFormat(format!(
                "expected {} layers, found {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (k, ((fan_in, fan_out), layer)) in shapes.iter().zip(&layers).enumerate() {
            if layer.weights.dim() != (*fan_out, *fan_in) || layer.bias.len() != *fan_out {
                return Err(Error::ModelFormat(format!(
                    "layer {k}: expected {fan_out}x{fan_in} weights and {fan_out} biases, found {:?} and {}",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {k} parameters")));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.spec.embed_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameter vector: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Mutable access to the `index`-th entry of [`Self::parameters`].
    pub fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            if index < nw {
                let cols = layer.weights.ncols();
                return &mut layer.weights[(index / cols, index % cols)];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// `params -= learning_rate * grads`.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-learning_rate, &g.weights);
            layer.bias.scaled_add(-learning_rate, &g.bias);
        }
    }

    /// Embeds one sample. Each unit is `bias + sum_k w_k x_k`, summed in
    /// index order, so the result is bit-identical to any straight-line
    /// evaluation with the same order.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward input".into()));
        }
        let mut h: Vec<f64> = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.bias.len());
            for (row, &b) in layer.weights.rows().into_iter().zip(&layer.bias) {
                let mut acc = 0.0;
                for (w, v) in row.iter().zip(&h) {
                    acc += w * v;
                }
                let t = acc + b;
                next.push(if k == last { t } else { leaky(t, self.spec.leaky_slope) });
            }
            h = next;
        }
        Ok(Array1::from(h))
    }

    /// Row-wise [`Self::forward`].
    pub fn forward_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((xs.nrows(), self.spec.embed_dim));
        for (i, x) in xs.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.forward(x)?);
        }
        Ok(out)
    }

    /// Matrix-product forward used by training; keeps the backprop trace.
    fn forward_trace(&self, xs: Array2<f64>) -> Trace {
        let last = self.layers.len() - 1;
        let slope = self.spec.leaky_slope;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = xs;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights.t());
            z += &layer.bias;
            inputs.push(h);
            h = if k == last {
                z.clone()
            } else {
                z.mapv(|t| leaky(t, slope))
            };
            pre.push(z);
        }
        Trace { inputs, pre, output: h }
    }

    /// Contrastive loss and gradient for a batch of pairs.
    ///
    /// Row `k` of `xa`/`xb` forms pair `k` with target `genuine[k]`. Returns
    /// the per-pair losses and the gradient of `scale * sum_k loss_k`.
    pub fn pair_batch_gradient<'x>(
        &self,
        xa: ArrayView2<'x, f64>,
        xb: ArrayView2<'x, f64>,
        genuine: &[bool],
        margin: f64,
        scale: f64,
    ) -> Result<(Vec<f64>, Gradients)> {
        let b = genuine.len();
        if xa.nrows() != b || xb.nrows() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                actual: xa.nrows().min(xb.nrows()),
            });
        }
        for x in [&xa, &xb] {
            if x.ncols() != self.spec.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.spec.input_dim,
                    actual: x.ncols(),
                });
            }
        }
        if !(margin > 0.0) {
            return Err(Error::config("margin must be positive"));
        }

        let stacked = ndarray::concatenate(Axis(0), &[xa, xb]).expect("same widths");
        let trace = self.forward_trace(stacked);
        let ea = trace.output.slice(s![..b, ..]);
        let eb = trace.output.slice(s![b.., ..]);
        let diff = &ea - &eb;

        let mut losses = Vec::with_capacity(b);
        let mut coeff = Array1::<f64>::zeros(b);
        for (k, row) in diff.rows().into_iter().enumerate() {
            let d = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("distance of pair {k}")));
            }
            losses.push(pair_loss(d, genuine[k], margin)?);
            // dD/d(ea) = diff / D, taken as zero at D = 0.
            if d > 0.0 {
                coeff[k] = scale * pair_loss_derivative(d, genuine[k], margin) / d;
            }
        }

        let ga = &diff * &coeff.insert_axis(Axis(1));
        let mut delta = ndarray::concatenate(Axis(0), &[ga.view(), (-&ga).view()]).expect("same widths");

        let slope = self.spec.leaky_slope;
        let mut grads = Gradients::zeros_like(self);
        for k in (0..self.layers.len()).rev() {
            grads.layers[k].weights = delta.t().dot(&trace.inputs[k]);
            grads.layers[k].bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights);
                Zip::from(&mut back)
                    .and(&trace.pre[k - 1])
                    .for_each(|g, &t| *g *= leaky_derivative(t, slope));
                delta = back;
            }
        }
        if grads
            .layers
            .iter()
            .any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok((losses, grads))
    }

    /// Exact gradient of the contrastive loss of a single pair.
    pub fn backward<'x>(
        &self,
        xa: ArrayView1<'x, f64>,
        xb: ArrayView1<'x, f64>,
        genuine: bool,
        margin: f64,
    ) -> Result<Gradients> {
        let (_, grads) = self.pair_batch_gradient(
            xa.insert_axis(Axis(0)),
            xb.insert_axis(Axis(0)),
            &[genuine],
            margin,
            1.0,
        )?;
        Ok(grads)
    }

    /// Writes the net as a self-describing JSON document.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unknown format `{}`", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, rec)| {
                if rec.weights.len() != rec.rows * rec.cols {
                    return Err(Error::ModelFormat(format!(
                        "layer {k}: declared {}x{} but holds {} weights",
                        rec.rows,
                        rec.cols,
                        rec.weights.len()
                    )));
                }
                let weights = Array2::from_shape_vec((rec.rows, rec.cols), rec.weights).expect("length checked");
                Ok(Layer {
                    weights,
                    bias: Array1::from(rec.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(file.spec, layers)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    spec: NetSpec,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Euclidean distance, summed in index order.
pub fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// Embedded samples, one per row, with the source labels when known.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub vectors: Array2<f64>,
    pub source_labels: Option<Vec<usize>>,
}

impl EmbeddingMatrix {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }
}
