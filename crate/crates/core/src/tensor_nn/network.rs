use std::fmt;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::activation::{
    command_head, command_head_backward, relu, relu_backward, sigmoid, sigmoid_backward, tanh,
    tanh_backward,
};
use super::conv::{
    axis_geometry, conv2d, conv2d_backward, conv2d_output_shape, conv3d, conv3d_backward, Padding,
};
use super::convlstm::{
    convlstm2d_sequence, convlstm2d_sequence_backward, ConvLstmParams, StepCache,
};
use super::dense::{dense, dense_backward};
use super::loss::{mse_grad, mse_loss};
use super::pool::{maxpool2d, maxpool3d, maxpool_backward};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn unit2() -> [usize; 2] {
    [1, 1]
}

fn unit3() -> [usize; 3] {
    [1, 1, 1]
}

/// One layer of a sequential network. Activations are separate layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        #[serde(default = "unit2")]
        stride: [usize; 2],
        #[serde(default)]
        padding: Padding,
    },
    Conv3d {
        filters: usize,
        kernel: [usize; 3],
        #[serde(default = "unit3")]
        stride: [usize; 3],
        #[serde(default)]
        padding: Padding,
    },
    /// Same-padded, unit-stride ConvLSTM. A rank-3 input is a length-1 sequence.
    Convlstm2d {
        filters: usize,
        kernel: [usize; 2],
        #[serde(default)]
        return_sequences: bool,
    },
    Dense {
        units: usize,
    },
    Relu,
    Tanh,
    Sigmoid,
    Maxpool2d {
        window: [usize; 2],
        stride: [usize; 2],
    },
    Maxpool3d {
        window: [usize; 3],
        stride: [usize; 3],
    },
    Flatten,
    /// Applies a `conv2d` or `maxpool2d` to every frame of a `[T,H,W,C]` input with shared weights.
    TimeDistributed {
        layer: Box<LayerSpec>,
    },
    /// Sigmoid on unit 0 (linear speed), tanh on unit 1 (angular speed).
    CommandHead,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Conv3d { .. } => "conv3d",
            LayerSpec::Convlstm2d { .. } => "convlstm2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Maxpool2d { .. } => "maxpool2d",
            LayerSpec::Maxpool3d { .. } => "maxpool3d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::TimeDistributed { .. } => "time_distributed",
            LayerSpec::CommandHead => "command_head",
        }
    }

    /// Parameter roles and shapes for the given per-sample input shape.
    fn param_shapes(&self, input: &[usize]) -> Vec<(ParamRole, Vec<usize>)> {
        let channels = *input.last().unwrap_or(&0);
        match self {
            LayerSpec::Conv2d {
                filters, kernel, ..
            } => vec![
                (
                    ParamRole::Kernel,
                    vec![kernel[0], kernel[1], channels, *filters],
                ),
                (ParamRole::Bias, vec![*filters]),
            ],
            LayerSpec::Conv3d {
                filters, kernel, ..
            } => vec![
                (
                    ParamRole::Kernel,
                    vec![kernel[0], kernel[1], kernel[2], channels, *filters],
                ),
                (ParamRole::Bias, vec![*filters]),
            ],
            LayerSpec::Convlstm2d {
                filters, kernel, ..
            } => vec![
                (
                    ParamRole::Kernel,
                    vec![kernel[0], kernel[1], channels, 4 * filters],
                ),
                (
                    ParamRole::RecurrentKernel,
                    vec![kernel[0], kernel[1], *filters, 4 * filters],
                ),
                (ParamRole::Bias, vec![4 * filters]),
            ],
            LayerSpec::Dense { units } => vec![
                (ParamRole::Kernel, vec![input.iter().product(), *units]),
                (ParamRole::Bias, vec![*units]),
            ],
            LayerSpec::TimeDistributed { layer } => layer.param_shapes(&input[1..]),
            _ => Vec::new(),
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |what: &str| {
            Error::shape(
                "network",
                format!("{} layer {what}; input shape is {input:?}", self.kind()),
            )
        };
        match self {
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 {
                    return Err(bad("needs a [H,W,C] input"));
                }
                conv2d_output_shape(input, *kernel, *stride, *padding, *filters)
                    .ok_or_else(|| bad("kernel does not fit"))
            }
            LayerSpec::Conv3d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 4 {
                    return Err(bad("needs a [T,H,W,C] input"));
                }
                let mut out = Vec::with_capacity(4);
                for axis in 0..3 {
                    let (o, _) = axis_geometry(input[axis], kernel[axis], stride[axis], *padding)
                        .ok_or_else(|| bad("kernel does not fit"))?;
                    out.push(o);
                }
                out.push(*filters);
                Ok(out)
            }
            LayerSpec::Convlstm2d {
                filters,
                kernel,
                return_sequences,
            } => {
                let (t, h, w) = match input {
                    [h, w, _] => (1, *h, *w),
                    [t, h, w, _] => (*t, *h, *w),
                    _ => return Err(bad("needs a [T,H,W,C] or [H,W,C] input")),
                };
                if kernel[0] == 0 || kernel[1] == 0 {
                    return Err(bad("has an empty kernel"));
                }
                Ok(if *return_sequences {
                    vec![t, h, w, *filters]
                } else {
                    vec![h, w, *filters]
                })
            }
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return Err(bad("needs a flat input"));
                }
                Ok(vec![*units])
            }
            LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Maxpool2d { window, stride } => {
                if input.len() != 3 {
                    return Err(bad("needs a [H,W,C] input"));
                }
                let mut out = Vec::with_capacity(3);
                for a in 0..2 {
                    if window[a] > input[a] || stride[a] == 0 || window[a] == 0 {
                        return Err(bad("window does not fit"));
                    }
                    out.push((input[a] - window[a]) / stride[a] + 1);
                }
                out.push(input[2]);
                Ok(out)
            }
            LayerSpec::Maxpool3d { window, stride } => {
                if input.len() != 4 {
                    return Err(bad("needs a [T,H,W,C] input"));
                }
                let mut out = Vec::with_capacity(4);
                for a in 0..3 {
                    if window[a] > input[a] || stride[a] == 0 || window[a] == 0 {
                        return Err(bad("window does not fit"));
                    }
                    out.push((input[a] - window[a]) / stride[a] + 1);
                }
                out.push(input[3]);
                Ok(out)
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::TimeDistributed { layer } => {
                if !matches!(
                    **layer,
                    LayerSpec::Conv2d { .. } | LayerSpec::Maxpool2d { .. }
                ) {
                    return Err(bad("may only wrap conv2d or maxpool2d"));
                }
                if input.len() != 4 {
                    return Err(bad("needs a [T,H,W,C] input"));
                }
                let mut out = vec![input[0]];
                out.extend(layer.output_shape(&input[1..])?);
                Ok(out)
            }
            LayerSpec::CommandHead => {
                if input != [2] {
                    return Err(bad("needs exactly 2 units"));
                }
                Ok(vec![2])
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Kernel,
    RecurrentKernel,
    Bias,
}

impl ParamRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamRole::Kernel => "kernel",
            ParamRole::RecurrentKernel => "recurrent_kernel",
            ParamRole::Bias => "bias",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamKey {
    pub layer: usize,
    pub role: ParamRole,
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.layer, self.role.as_str())
    }
}

/// Ordered parameter (or gradient, or moment) tensors of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    keys: Vec<ParamKey>,
    tensors: Vec<Tensor>,
}

/// Gradients share the parameter layout.
pub type GradStore = ParamSet;

impl ParamSet {
    pub fn new(entries: Vec<(ParamKey, Tensor)>) -> Self {
        let (keys, tensors) = entries.into_iter().unzip();
        ParamSet { keys, tensors }
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        ParamSet {
            keys: other.keys.clone(),
            tensors: other
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn keys(&self) -> &[ParamKey] {
        &self.keys
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamKey, &Tensor)> {
        self.keys.iter().zip(&self.tensors)
    }

    pub fn get(&self, key: ParamKey) -> Option<&Tensor> {
        self.keys
            .iter()
            .position(|k| *k == key)
            .map(|i| &self.tensors[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        debug_assert_eq!(self.keys, other.keys);
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub(crate) fn slice(&self, range: Range<usize>) -> &[Tensor] {
        &self.tensors[range]
    }
}

enum Cache {
    Input(Tensor),
    Output(Tensor),
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Flatten(Vec<usize>),
    Lstm {
        steps: Vec<StepCache>,
        lifted: bool,
    },
    TimeDistributed(Vec<Cache>),
}

/// A validated sequential network: layers plus the per-sample shapes flowing between them.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    /// `shapes[i]` is the input to layer `i`; the last entry is the network output.
    shapes: Vec<Vec<usize>>,
    param_ranges: Vec<Range<usize>>,
    param_shapes: Vec<(ParamKey, Vec<usize>)>,
}

impl Network {
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.len() > 4 || input_shape.contains(&0) {
            return Err(Error::shape(
                "network",
                format!("invalid per-sample input shape {input_shape:?}"),
            ));
        }
        let mut shapes = vec![input_shape.to_vec()];
        let mut param_ranges = Vec::with_capacity(layers.len());
        let mut param_shapes = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            let input = shapes.last().expect("non-empty");
            let out = layer
                .output_shape(input)
                .map_err(|e| Error::shape("network", format!("layer {i}: {e}")))?;
            let start = param_shapes.len();
            for (role, shape) in layer.param_shapes(input) {
                param_shapes.push((ParamKey { layer: i, role }, shape));
            }
            param_ranges.push(start..param_shapes.len());
            shapes.push(out);
        }
        Ok(Network {
            layers,
            shapes,
            param_ranges,
            param_shapes,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty")
    }

    /// Per-sample activation shape entering each layer, followed by the output shape.
    pub fn activation_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn param_shapes(&self) -> &[(ParamKey, Vec<usize>)] {
        &self.param_shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Glorot-uniform kernels, zero biases.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = self
            .param_shapes
            .iter()
            .map(|(key, shape)| {
                let t = match key.role {
                    ParamRole::Bias => Tensor::zeros(shape),
                    ParamRole::Kernel | ParamRole::RecurrentKernel => {
                        let n = shape.len();
                        let receptive: usize = shape[..n - 2].iter().product();
                        let fan_in = receptive * shape[n - 2];
                        let fan_out = receptive * shape[n - 1];
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
                    }
                };
                (*key, t)
            })
            .collect();
        ParamSet::new(entries)
    }

    /// Zero-filled parameters in this network's layout.
    pub fn zero_params(&self) -> ParamSet {
        ParamSet::new(
            self.param_shapes
                .iter()
                .map(|(k, s)| (*k, Tensor::zeros(s)))
                .collect(),
        )
    }

    /// Checks that `params` has exactly this network's keys and shapes.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        if params.len() != self.param_shapes.len() {
            return Err(Error::shape(
                "network",
                format!(
                    "{} parameter tensors given, {} expected",
                    params.len(),
                    self.param_shapes.len()
                ),
            ));
        }
        for ((key, shape), (pk, t)) in self.param_shapes.iter().zip(params.iter()) {
            if key != pk || t.shape() != shape.as_slice() {
                return Err(Error::ParamShape {
                    name: key.to_string(),
                    expected: shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape() {
            return Err(Error::shape(
                "network",
                format!("input {:?}, expected {:?}", x.shape(), self.input_shape()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        self.forward_cached(params, x).map(|(y, _)| y)
    }

    fn forward_cached(&self, params: &ParamSet, x: &Tensor) -> Result<(Tensor, Vec<Cache>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let p = params.slice(self.param_ranges[i].clone());
            let (out, cache) = layer_forward(layer, p, act)?;
            caches.push(cache);
            act = out;
        }
        Ok((act, caches))
    }

    fn backward_cached(
        &self,
        params: &ParamSet,
        caches: Vec<Cache>,
        grad_out: Tensor,
    ) -> Result<(Tensor, ParamSet)> {
        let mut grads: Vec<Option<Tensor>> = vec![None; params.len()];
        let mut g = grad_out;
        for (i, cache) in caches.into_iter().enumerate().rev() {
            let range = self.param_ranges[i].clone();
            let (gi, pg) = layer_backward(&self.layers[i], params.slice(range.clone()), cache, &g)?;
            for (slot, t) in grads[range].iter_mut().zip(pg) {
                *slot = Some(t);
            }
            g = gi;
        }
        let tensors = grads
            .into_iter()
            .zip(params.tensors())
            .map(|(g, p)| g.unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        Ok((
            g,
            ParamSet {
                keys: params.keys.clone(),
                tensors,
            },
        ))
    }

    /// Back-propagates an arbitrary output gradient for one sample.
    /// Returns `(output, dL/dinput, dL/dparams)`.
    pub fn backward_sample(
        &self,
        params: &ParamSet,
        x: &Tensor,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Tensor, GradStore)> {
        let (y, caches) = self.forward_cached(params, x)?;
        if grad_out.shape() != y.shape() {
            return Err(Error::shape(
                "backward",
                format!(
                    "output gradient {:?} vs output {:?}",
                    grad_out.shape(),
                    y.shape()
                ),
            ));
        }
        let (gi, gp) = self.backward_cached(params, caches, grad_out.clone())?;
        Ok((y, gi, gp))
    }

    /// Mean-squared-error loss over the batch and its parameter gradients.
    ///
    /// Samples are processed independently (in parallel when threads are
    /// available) and their gradients summed in batch order, so the result
    /// does not depend on scheduling.
    pub fn loss_and_grads(
        &self,
        params: &ParamSet,
        inputs: &[Tensor],
        targets: &[Tensor],
    ) -> Result<BatchResult> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::shape(
                "backward",
                format!("{} inputs vs {} targets", inputs.len(), targets.len()),
            ));
        }
        let out_len: usize = self.output_shape().iter().product();
        let count = inputs.len() * out_len;
        let per_sample: Vec<(Tensor, ParamSet)> = inputs
            .par_iter()
            .zip(targets.par_iter())
            .map(|(x, t)| {
                let (y, caches) = self.forward_cached(params, x)?;
                if t.shape() != y.shape() {
                    return Err(Error::shape(
                        "backward",
                        format!("target {:?} vs output {:?}", t.shape(), y.shape()),
                    ));
                }
                let g = mse_grad(&y, t, count);
                let (_, gp) = self.backward_cached(params, caches, g)?;
                Ok((y, gp))
            })
            .collect::<Result<_>>()?;
        let mut grads = ParamSet::zeros_like(params);
        let mut predictions = Vec::with_capacity(per_sample.len());
        for (y, gp) in per_sample {
            grads.add_assign(&gp);
            predictions.push(y);
        }
        let loss = mse_loss(&Tensor::stack(&predictions)?, &Tensor::stack(targets)?)?;
        Ok(BatchResult {
            loss,
            predictions,
            grads,
        })
    }
}

pub struct BatchResult {
    pub loss: f64,
    pub predictions: Vec<Tensor>,
    pub grads: GradStore,
}

fn lstm_params(p: &[Tensor]) -> ConvLstmParams<'_> {
    ConvLstmParams {
        kernel: &p[0],
        recurrent: &p[1],
        bias: &p[2],
    }
}

fn layer_forward(layer: &LayerSpec, p: &[Tensor], x: Tensor) -> Result<(Tensor, Cache)> {
    Ok(match layer {
        LayerSpec::Conv2d {
            stride, padding, ..
        } => (
            conv2d(&x, &p[0], &p[1], *stride, *padding)?,
            Cache::Input(x),
        ),
        LayerSpec::Conv3d {
            stride, padding, ..
        } => (
            conv3d(&x, &p[0], &p[1], *stride, *padding)?,
            Cache::Input(x),
        ),
        LayerSpec::Convlstm2d {
            return_sequences, ..
        } => {
            let lifted = x.rank() == 3;
            let seq = if lifted {
                let mut s = vec![1];
                s.extend_from_slice(x.shape());
                x.reshape(&s)?
            } else {
                x
            };
            let (y, steps) = convlstm2d_sequence(&seq, lstm_params(p), *return_sequences)?;
            (y, Cache::Lstm { steps, lifted })
        }
        LayerSpec::Dense { .. } => (dense(&x, &p[0], &p[1])?, Cache::Input(x)),
        LayerSpec::Relu => (relu(&x), Cache::Input(x)),
        LayerSpec::Tanh => {
            let y = tanh(&x);
            (y.clone(), Cache::Output(y))
        }
        LayerSpec::Sigmoid => {
            let y = sigmoid(&x);
            (y.clone(), Cache::Output(y))
        }
        LayerSpec::CommandHead => {
            let y = command_head(&x);
            (y.clone(), Cache::Output(y))
        }
        LayerSpec::Maxpool2d { window, stride } => {
            let r = maxpool2d(&x, *window, *stride)?;
            (
                r.output,
                Cache::Pool {
                    input_shape: x.shape().to_vec(),
                    argmax: r.argmax,
                },
            )
        }
        LayerSpec::Maxpool3d { window, stride } => {
            let r = maxpool3d(&x, *window, *stride)?;
            (
                r.output,
                Cache::Pool {
                    input_shape: x.shape().to_vec(),
                    argmax: r.argmax,
                },
            )
        }
        LayerSpec::Flatten => {
            let shape = x.shape().to_vec();
            let n = x.len();
            (x.reshape(&[n])?, Cache::Flatten(shape))
        }
        LayerSpec::TimeDistributed { layer } => {
            let t = x.shape()[0];
            let mut outs = Vec::with_capacity(t);
            let mut caches = Vec::with_capacity(t);
            for i in 0..t {
                let (y, c) = layer_forward(layer, p, x.outer(i))?;
                outs.push(y);
                caches.push(c);
            }
            (Tensor::stack(&outs)?, Cache::TimeDistributed(caches))
        }
    })
}

fn layer_backward(
    layer: &LayerSpec,
    p: &[Tensor],
    cache: Cache,
    g: &Tensor,
) -> Result<(Tensor, Vec<Tensor>)> {
    Ok(match (layer, cache) {
        (
            LayerSpec::Conv2d {
                stride, padding, ..
            },
            Cache::Input(x),
        ) => {
            let r = conv2d_backward(&x, &p[0], *stride, *padding, g)?;
            (r.input, vec![r.kernel, r.bias])
        }
        (
            LayerSpec::Conv3d {
                stride, padding, ..
            },
            Cache::Input(x),
        ) => {
            let r = conv3d_backward(&x, &p[0], *stride, *padding, g)?;
            (r.input, vec![r.kernel, r.bias])
        }
        (
            LayerSpec::Convlstm2d {
                return_sequences, ..
            },
            Cache::Lstm { steps, lifted },
        ) => {
            let r = convlstm2d_sequence_backward(&steps, lstm_params(p), *return_sequences, g)?;
            let input = if lifted {
                let s = r.input.shape()[1..].to_vec();
                r.input.reshape(&s)?
            } else {
                r.input
            };
            (input, vec![r.kernel, r.recurrent, r.bias])
        }
        (LayerSpec::Dense { .. }, Cache::Input(x)) => {
            let (dx, dw, db) = dense_backward(&x, &p[0], g)?;
            (dx, vec![dw, db])
        }
        (LayerSpec::Relu, Cache::Input(x)) => (relu_backward(&x, g), Vec::new()),
        (LayerSpec::Tanh, Cache::Output(y)) => (tanh_backward(&y, g), Vec::new()),
        (LayerSpec::Sigmoid, Cache::Output(y)) => (sigmoid_backward(&y, g), Vec::new()),
        (LayerSpec::CommandHead, Cache::Output(y)) => (command_head_backward(&y, g), Vec::new()),
        (
            LayerSpec::Maxpool2d { .. } | LayerSpec::Maxpool3d { .. },
            Cache::Pool {
                input_shape,
                argmax,
            },
        ) => (maxpool_backward(&input_shape, &argmax, g), Vec::new()),
        (LayerSpec::Flatten, Cache::Flatten(shape)) => (g.clone().reshape(&shape)?, Vec::new()),
        (LayerSpec::TimeDistributed { layer }, Cache::TimeDistributed(caches)) => {
            let mut d_in = Vec::with_capacity(caches.len());
            let mut d_params: Vec<Tensor> = p.iter().map(|t| Tensor::zeros(t.shape())).collect();
            for (i, c) in caches.into_iter().enumerate() {
                let (gi, gp) = layer_backward(layer, p, c, &g.outer(i))?;
                d_in.push(gi);
                for (acc, t) in d_params.iter_mut().zip(&gp) {
                    acc.add_assign(t);
                }
            }
            (Tensor::stack(&d_in)?, d_params)
        }
        (layer, _) => unreachable!("cache does not belong to a {} layer", layer.kind()),
    })
}
