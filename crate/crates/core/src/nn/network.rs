use serde::{Deserialize, Serialize};

use super::conv::{extract_patches, fold_patches, maps_to_positions, positions_to_maps, ConvGeometry};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Relu => z.map(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiplies `upstream` by the derivative at pre-activation `z`.
    /// ReLU passes gradient only where `z > 0`.
    fn backprop(self, z: &Matrix, upstream: &Matrix) -> Matrix {
        match self {
            Activation::Relu => {
                let data = z
                    .as_slice()
                    .iter()
                    .zip(upstream.as_slice())
                    .map(|(&zv, &g)| if zv > 0.0 { g } else { 0.0 })
                    .collect();
                Matrix::from_raw(z.rows(), z.cols(), data)
            }
            Activation::Identity => upstream.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense {
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        in_height: usize,
        in_width: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerSpec::Dense { fan_in, fan_out, activation }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv { activation, .. } => activation,
        }
    }

    pub(crate) fn geometry(&self) -> Option<ConvGeometry> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                kernel_size,
                stride,
                in_height,
                in_width,
                ..
            } => Some(ConvGeometry {
                channels: in_channels,
                height: in_height,
                width: in_width,
                kernel: kernel_size,
                stride,
            }),
            LayerSpec::Dense { .. } => None,
        }
    }

    /// Flattened per-sample input length.
    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_in, .. } => fan_in,
            LayerSpec::Conv { .. } => self.geometry().map_or(0, |g| g.input_len()),
        }
    }

    /// Flattened per-sample output length.
    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_out, .. } => fan_out,
            LayerSpec::Conv { out_channels, .. } => out_channels * self.geometry().map_or(0, |g| g.positions()),
        }
    }

    /// Weight matrix shape, bias column included.
    pub fn weight_shape(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { fan_in, fan_out, .. } => (fan_out, fan_in + 1),
            LayerSpec::Conv { out_channels, .. } => {
                (out_channels, self.geometry().map_or(0, |g| g.patch_len()) + 1)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dense { fan_in, fan_out, .. } => {
                if fan_in == 0 || fan_out == 0 {
                    return Err(Error::InvalidArgument("dense layer dimensions must be positive".into()));
                }
                Ok(())
            }
            LayerSpec::Conv { out_channels, .. } => {
                if out_channels == 0 {
                    return Err(Error::InvalidArgument("conv layer needs at least one output channel".into()));
                }
                self.geometry().expect("conv").validate()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: Matrix,
}

/// Feedforward classifier. Every layer input carries a trailing constant-1
/// coordinate, so the last weight column is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    num_classes: usize,
}

/// Per-layer inputs recorded during a forward pass, one column per sample
/// (dense) or per patch (conv), bias row included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    pub layers: Vec<Matrix>,
}

impl ActivationTrace {
    /// Column-wise concatenation of traces from the same network.
    pub fn concat(traces: &[&ActivationTrace]) -> Result<ActivationTrace> {
        let n = traces.first().map_or(0, |t| t.layers.len());
        if traces.iter().any(|t| t.layers.len() != n) {
            return Err(Error::Shape("traces have different layer counts".into()));
        }
        let layers = (0..n)
            .map(|l| {
                let parts: Vec<&Matrix> = traces.iter().map(|t| &t.layers[l]).collect();
                Matrix::hcat(&parts)
            })
            .collect::<Result<_>>()?;
        Ok(ActivationTrace { layers })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grads: Vec<Matrix>,
    pub loss: f64,
}

pub struct ForwardOutput {
    /// `K × B`.
    pub logits: Matrix,
    pub trace: Option<ActivationTrace>,
}

struct Cache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    logits: Matrix,
}

impl Network {
    /// Zero-weight network; see [`Network::init`] for random weights.
    pub fn new(specs: Vec<LayerSpec>, num_classes: usize) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        for s in &specs {
            s.validate()?;
        }
        for (i, w) in specs.windows(2).enumerate() {
            if w[0].output_len() != w[1].input_len() {
                return Err(Error::Shape(format!(
                    "layer {} emits {} features but layer {} expects {}",
                    i,
                    w[0].output_len(),
                    i + 1,
                    w[1].input_len()
                )));
            }
        }
        let last = specs.last().expect("non-empty");
        if !matches!(last, LayerSpec::Dense { .. }) || last.activation() != Activation::Identity {
            return Err(Error::InvalidArgument("final layer must be a dense identity head".into()));
        }
        if last.output_len() != num_classes {
            return Err(Error::Shape(format!(
                "head emits {} logits for {} classes",
                last.output_len(),
                num_classes
            )));
        }
        let layers = specs
            .into_iter()
            .map(|spec| {
                let (r, c) = spec.weight_shape();
                Layer { spec, weight: Matrix::zeros(r, c) }
            })
            .collect();
        Ok(Network { layers, num_classes })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(specs: Vec<LayerSpec>, num_classes: usize, seed: u64) -> Result<Self> {
        let mut net = Network::new(specs, num_classes)?;
        let mut rng = SeededRng::new(seed);
        for layer in &mut net.layers {
            let (fan_in, fan_out) = match layer.spec {
                LayerSpec::Dense { fan_in, fan_out, .. } => (fan_in, fan_out),
                LayerSpec::Conv { in_channels, out_channels, kernel_size, .. } => {
                    let k2 = kernel_size * kernel_size;
                    (in_channels * k2, out_channels * k2)
                }
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (rows, cols) = layer.weight.shape();
            for r in 0..rows {
                for c in 0..cols - 1 {
                    layer.weight[(r, c)] = rng.uniform_in(-bound, bound);
                }
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from specs and explicit weights.
    pub fn from_parts(specs: Vec<LayerSpec>, weights: Vec<Matrix>, num_classes: usize) -> Result<Self> {
        let mut net = Network::new(specs, num_classes)?;
        if weights.len() != net.layers.len() {
            return Err(Error::Shape(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                net.layers.len()
            )));
        }
        net.set_weights(weights)?;
        Ok(net)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn weights(&self) -> Vec<&Matrix> {
        self.layers.iter().map(|l| &l.weight).collect()
    }

    pub fn weight(&self, l: usize) -> &Matrix {
        &self.layers[l].weight
    }

    pub fn set_weights(&mut self, weights: Vec<Matrix>) -> Result<()> {
        for (layer, w) in self.layers.iter().zip(&weights) {
            if layer.weight.shape() != w.shape() {
                return Err(Error::Shape(format!(
                    "weight {:?} does not fit layer expecting {:?}",
                    w.shape(),
                    layer.weight.shape()
                )));
            }
            w.check_finite()?;
        }
        for (layer, w) in self.layers.iter_mut().zip(weights) {
            layer.weight = w;
        }
        Ok(())
    }

    /// `w_l += k · delta_l` for every layer.
    pub fn add_scaled(&mut self, k: f64, delta: &[Matrix]) -> Result<()> {
        if delta.len() != self.layers.len() {
            return Err(Error::Shape("update has wrong layer count".into()));
        }
        for (layer, d) in self.layers.iter_mut().zip(delta) {
            layer.weight.axpy(k, d)?;
        }
        Ok(())
    }

    /// Per-layer `self − other`.
    pub fn weight_delta(&self, other: &Network) -> Result<Vec<Matrix>> {
        self.check_same_architecture(other)?;
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.weight.sub(&b.weight))
            .collect()
    }

    pub fn check_same_architecture(&self, other: &Network) -> Result<()> {
        if self.num_classes != other.num_classes || self.specs() != other.specs() {
            return Err(Error::Shape("networks have different architectures".into()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix, record: bool) -> Result<ForwardOutput> {
        let cache = self.forward_cache(batch)?;
        Ok(ForwardOutput {
            logits: cache.logits,
            trace: record.then_some(ActivationTrace { layers: cache.inputs }),
        })
    }

    /// Softmax probabilities, `K × B`. Evaluates in chunks of 512 samples.
    pub fn predict_proba(&self, batch: &Matrix) -> Result<Matrix> {
        const CHUNK: usize = 512;
        if batch.cols() <= CHUNK {
            return Ok(softmax_columns(&self.forward(batch, false)?.logits));
        }
        let mut parts = Vec::new();
        let mut start = 0;
        while start < batch.cols() {
            let end = (start + CHUNK).min(batch.cols());
            let idx: Vec<usize> = (start..end).collect();
            parts.push(softmax_columns(&self.forward(&batch.select_columns(&idx), false)?.logits));
            start = end;
        }
        let refs: Vec<&Matrix> = parts.iter().collect();
        Matrix::hcat(&refs)
    }

    /// Mean softmax cross-entropy and exact gradients for every layer.
    pub fn loss_and_grads(&self, batch: &Matrix, labels: &[usize]) -> Result<GradientSet> {
        let (set, _) = self.loss_grads_trace(batch, labels)?;
        Ok(set)
    }

    /// As [`Network::loss_and_grads`], also returning the activation trace.
    pub fn loss_grads_trace(&self, batch: &Matrix, labels: &[usize]) -> Result<(GradientSet, ActivationTrace)> {
        if labels.len() != batch.cols() {
            return Err(Error::Shape(format!(
                "{} labels for {} samples",
                labels.len(),
                batch.cols()
            )));
        }
        if batch.cols() == 0 {
            return Err(Error::Empty("batch".into()));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::InvalidLabel { label, num_classes: self.num_classes });
        }
        let cache = self.forward_cache(batch)?;
        let n = batch.cols();
        if let Some((row, col)) = cache.logits.find_non_finite() {
            return Err(Error::Numeric(format!("logit ({row}, {col}) is {}", cache.logits[(row, col)])));
        }
        let probs = softmax_columns(&cache.logits);
        let mut loss = 0.0;
        let mut delta = probs.clone();
        for (b, &y) in labels.iter().enumerate() {
            loss -= probs[(y, b)].max(f64::MIN_POSITIVE).ln();
            delta[(y, b)] -= 1.0;
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss is {loss}")));
        }
        let mut upstream = delta.scale(1.0 / n as f64);

        let mut grads = vec![Matrix::zeros(0, 0); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (g, down) = match layer.spec.geometry() {
                None => {
                    let d = layer.spec.activation().backprop(&cache.pre[l], &upstream);
                    let g = d.matmul_t(&cache.inputs[l])?;
                    let down = (l > 0)
                        .then(|| layer.weight.t_matmul(&d).map(|m| m.without_last_row()))
                        .transpose()?;
                    (g, down)
                }
                Some(geom) => {
                    let npos = geom.positions();
                    let up = maps_to_positions(&upstream, layer.weight.rows(), npos);
                    let d = layer.spec.activation().backprop(&cache.pre[l], &up);
                    let g = d.matmul_t(&cache.inputs[l])?;
                    let down = if l > 0 {
                        let dp = layer.weight.t_matmul(&d)?.without_last_row();
                        Some(fold_patches(&dp, &geom, n))
                    } else {
                        None
                    };
                    (g, down)
                }
            };
            grads[l] = g;
            if let Some(d) = down {
                upstream = d;
            }
        }
        Ok((GradientSet { grads, loss }, ActivationTrace { layers: cache.inputs }))
    }

    fn forward_cache(&self, batch: &Matrix) -> Result<Cache> {
        if batch.rows() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features, network expects {}",
                batch.rows(),
                self.input_dim()
            )));
        }
        let n = batch.cols();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = batch.clone();
        for layer in &self.layers {
            let (input, z, out) = match layer.spec.geometry() {
                None => {
                    let input = act.append_ones_row();
                    let z = layer.weight.matmul(&input)?;
                    let out = layer.spec.activation().apply(&z);
                    (input, z, out)
                }
                Some(geom) => {
                    let input = extract_patches(&act, &geom)?.append_ones_row();
                    let z = layer.weight.matmul(&input)?;
                    let a = layer.spec.activation().apply(&z);
                    let out = positions_to_maps(&a, n, geom.positions());
                    (input, z, out)
                }
            };
            inputs.push(input);
            pre.push(z);
            act = out;
        }
        Ok(Cache { inputs, pre, logits: act })
    }
}

/// Column-wise numerically stable softmax.
pub fn softmax_columns(logits: &Matrix) -> Matrix {
    let (k, n) = logits.shape();
    let mut out = Matrix::zeros(k, n);
    for b in 0..n {
        let m = (0..k).map(|i| logits[(i, b)]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for i in 0..k {
            let e = (logits[(i, b)] - m).exp();
            out[(i, b)] = e;
            sum += e;
        }
        for i in 0..k {
            out[(i, b)] /= sum;
        }
    }
    out
}

/// Index of the largest entry in each column; ties go to the lowest index.
pub fn argmax_columns(m: &Matrix) -> Vec<usize> {
    (0..m.cols())
        .map(|b| {
            let mut best = 0;
            for i in 1..m.rows() {
                if m[(i, b)] > m[(best, b)] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
