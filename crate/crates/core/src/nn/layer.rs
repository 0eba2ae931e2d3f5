use std::fmt;
use std::str::FromStr;

use super::activation::{relu, relu_backward, softmax, softmax_backward};
use super::batchnorm::{BatchNorm, BatchStats};
use super::conv::Conv1d;
use super::dense::Dense;
use super::pool::MaxPool1d;
use super::{Mode, Real, Tensor};
use crate::error::{Error, Result};

/// One entry of a flat layer list.
///
/// The canonical text form is a comma-separated token list such as
/// `C16k5s1,R,MP2,F,D100,R,D10,SM`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv1d { out_channels: usize, kernel: usize, stride: usize },
    MaxPool1d { window: usize },
    BatchNorm,
    Relu,
    Flatten,
    Dense { units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::MaxPool1d { .. } => "maxpool1d",
            LayerSpec::BatchNorm => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn has_parameters(&self) -> bool {
        matches!(self, LayerSpec::Conv1d { .. } | LayerSpec::Dense { .. } | LayerSpec::BatchNorm)
    }

    /// Checks the ordering rules of a whole stack: positive parameters,
    /// conv/pool only before the flatten, dense only after it, at most one
    /// flatten, and softmax only as the last layer.
    pub fn validate_stack(specs: &[LayerSpec]) -> Result<()> {
        let mut flattened = false;
        for (i, spec) in specs.iter().enumerate() {
            let bad = |msg: &str| Err(Error::Shape(format!("layer {i} ({}): {msg}", spec.kind())));
            match *spec {
                LayerSpec::Conv1d { out_channels, kernel, stride } => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return bad("parameters must be positive");
                    }
                    if flattened {
                        return bad("convolution after flatten");
                    }
                }
                LayerSpec::MaxPool1d { window } => {
                    if window == 0 {
                        return bad("window must be positive");
                    }
                    if flattened {
                        return bad("pooling after flatten");
                    }
                }
                LayerSpec::Flatten => {
                    if flattened {
                        return bad("second flatten");
                    }
                    flattened = true;
                }
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return bad("units must be positive");
                    }
                    if !flattened {
                        return bad("dense layer before flatten");
                    }
                }
                LayerSpec::Softmax => {
                    if i + 1 != specs.len() {
                        return bad("softmax must be the final layer");
                    }
                    if !flattened {
                        return bad("softmax before flatten");
                    }
                }
                LayerSpec::BatchNorm | LayerSpec::Relu => {}
            }
        }
        Ok(())
    }

    pub fn format_stack(specs: &[LayerSpec]) -> String {
        specs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn parse_stack(text: &str) -> Result<Vec<LayerSpec>> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Vec::new());
        }
        text.split(',').map(str::parse).collect()
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv1d { out_channels, kernel, stride } => write!(f, "C{out_channels}k{kernel}s{stride}"),
            LayerSpec::MaxPool1d { window } => write!(f, "MP{window}"),
            LayerSpec::BatchNorm => f.write_str("BN"),
            LayerSpec::Relu => f.write_str("R"),
            LayerSpec::Flatten => f.write_str("F"),
            LayerSpec::Dense { units } => write!(f, "D{units}"),
            LayerSpec::Softmax => f.write_str("SM"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(token: &str) -> Result<Self> {
        let bad = || Error::Format(format!("invalid layer token `{token}`"));
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let t = token.trim();
        Ok(match t {
            "BN" => LayerSpec::BatchNorm,
            "R" => LayerSpec::Relu,
            "F" => LayerSpec::Flatten,
            "SM" => LayerSpec::Softmax,
            _ if t.starts_with("MP") => LayerSpec::MaxPool1d { window: num(&t[2..])? },
            _ if t.starts_with('D') => LayerSpec::Dense { units: num(&t[1..])? },
            _ if t.starts_with('C') => {
                let (c, rest) = t[1..].split_once('k').ok_or_else(bad)?;
                let (k, s) = rest.split_once('s').ok_or_else(bad)?;
                LayerSpec::Conv1d { out_channels: num(c)?, kernel: num(k)?, stride: num(s)? }
            }
            _ => return Err(bad()),
        })
    }
}

/// A layer with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv1d(Conv1d<T>),
    MaxPool1d(MaxPool1d),
    BatchNorm(BatchNorm<T>),
    Relu,
    Flatten,
    Dense(Dense<T>),
    Softmax,
}

/// State saved by a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub enum Cache<T> {
    Conv1d { input: Tensor<T> },
    MaxPool1d { input_shape: Vec<usize>, argmax: Vec<usize> },
    BatchNorm { input_shape: Vec<usize>, stats: Option<BatchStats> },
    Relu { input: Tensor<T> },
    Flatten { input_shape: Vec<usize> },
    Dense { input: Tensor<T> },
    Softmax { output: Tensor<T> },
}

impl<T> Cache<T> {
    fn kind(&self) -> &'static str {
        match self {
            Cache::Conv1d { .. } => "conv1d",
            Cache::MaxPool1d { .. } => "maxpool1d",
            Cache::BatchNorm { .. } => "batchnorm",
            Cache::Relu { .. } => "relu",
            Cache::Flatten { .. } => "flatten",
            Cache::Dense { .. } => "dense",
            Cache::Softmax { .. } => "softmax",
        }
    }

    pub fn batch_stats(&self) -> Option<&BatchStats> {
        match self {
            Cache::BatchNorm { stats, .. } => stats.as_ref(),
            _ => None,
        }
    }
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPool1d(_) => "maxpool1d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }

    /// Trainable tensors in a fixed order (weight before bias, gamma before beta).
    pub fn params(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv1d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<&[T]> {
        match self {
            Layer::BatchNorm(b) => vec![&b.running_mean, &b.running_var],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::BatchNorm(b) => vec![&mut b.running_mean, &mut b.running_var],
            _ => Vec::new(),
        }
    }

    /// Output shape (without the batch dimension) for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let three = || match *input {
            [c, l] => Ok((c, l)),
            _ => Err(Error::Shape(format!("{} expects (channels, length), got {input:?}", self.kind()))),
        };
        match self {
            Layer::Conv1d(c) => {
                let (ch, l) = three()?;
                if ch != c.in_channels {
                    return Err(Error::Shape(format!("conv1d expects {} channels, got {ch}", c.in_channels)));
                }
                Ok(vec![c.out_channels, c.output_len(l)?])
            }
            Layer::MaxPool1d(p) => {
                let (ch, l) = three()?;
                Ok(vec![ch, p.output_len(l)?])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(d) => match *input {
                [f] if f == d.inputs => Ok(vec![d.units]),
                _ => Err(Error::Shape(format!("dense expects ({},), got {input:?}", d.inputs))),
            },
            Layer::BatchNorm(b) => {
                if input.first() != Some(&b.channels()) {
                    return Err(Error::Shape(format!("batchnorm expects {} channels, got {input:?}", b.channels())));
                }
                Ok(input.to_vec())
            }
            Layer::Relu | Layer::Softmax => Ok(input.to_vec()),
        }
    }

    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Cache<T>)> {
        Ok(match self {
            Layer::Conv1d(c) => (c.forward(input)?, Cache::Conv1d { input: input.clone() }),
            Layer::MaxPool1d(p) => {
                let (y, argmax) = p.forward(input)?;
                (y, Cache::MaxPool1d { input_shape: input.shape().to_vec(), argmax })
            }
            Layer::BatchNorm(b) => {
                let (y, stats) = b.forward(input, mode)?;
                (y, Cache::BatchNorm { input_shape: input.shape().to_vec(), stats })
            }
            Layer::Relu => (relu(input), Cache::Relu { input: input.clone() }),
            Layer::Flatten => {
                let b = input.batch();
                let f = input.len() / b.max(1);
                (input.clone().reshape(vec![b, f])?, Cache::Flatten { input_shape: input.shape().to_vec() })
            }
            Layer::Dense(d) => (d.forward(input)?, Cache::Dense { input: input.clone() }),
            Layer::Softmax => {
                let y = softmax(input)?;
                (y.clone(), Cache::Softmax { output: y })
            }
        })
    }

    /// Returns the input gradient and one gradient per entry of [`Layer::params`].
    pub fn backward(&self, cache: &Cache<T>, upstream: &Tensor<T>) -> Result<(Tensor<T>, Vec<Vec<T>>)> {
        let mismatch = || {
            Error::Usage(format!(
                "backward through a {} layer given a {} cache",
                self.kind(),
                cache.kind()
            ))
        };
        Ok(match (self, cache) {
            (Layer::Conv1d(c), Cache::Conv1d { input }) => {
                let (dx, gw, gb) = c.backward(input, upstream)?;
                (dx, vec![gw, gb])
            }
            (Layer::MaxPool1d(_), Cache::MaxPool1d { input_shape, argmax }) => {
                (MaxPool1d::backward(input_shape, argmax, upstream)?, Vec::new())
            }
            (Layer::BatchNorm(b), Cache::BatchNorm { input_shape, stats }) => {
                let stats = stats.as_ref().ok_or_else(|| {
                    Error::Usage("batch norm backward needs a train-mode forward pass".into())
                })?;
                let (dx, dg, db) = b.backward(input_shape, stats, upstream)?;
                (dx, vec![dg, db])
            }
            (Layer::Relu, Cache::Relu { input }) => (relu_backward(input, upstream)?, Vec::new()),
            (Layer::Flatten, Cache::Flatten { input_shape }) => {
                (upstream.clone().reshape(input_shape.clone())?, Vec::new())
            }
            (Layer::Dense(d), Cache::Dense { input }) => {
                let (dx, gw, gb) = d.backward(input, upstream)?;
                (dx, vec![gw, gb])
            }
            (Layer::Softmax, Cache::Softmax { output }) => (softmax_backward(output, upstream)?, Vec::new()),
            _ => return Err(mismatch()),
        })
    }
}
