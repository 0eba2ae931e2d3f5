use super::activation::softmax_cross_entropy;
use super::batchnorm::BatchNorm;
use super::conv::Conv1d;
use super::dense::Dense;
use super::layer::{Cache, Layer, LayerSpec};
use super::pool::MaxPool1d;
use super::{Mode, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::{tags, uniform, StreamKey};

/// Parameter tensors and buffers, as returned by [`Model::snapshot`].
pub type Snapshot<T> = (Vec<Vec<T>>, Vec<Vec<T>>);

/// A sequential stack of layers over single-channel inputs of fixed length.
///
/// Every parameter mutation bumps an internal version number; a [`Trace`]
/// records the version it was produced under so that a backward pass through
/// a stale trace is refused.
#[derive(Clone, Debug)]
pub struct Model<T> {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    input_len: usize,
    version: u64,
    checked: bool,
}

/// Forward state of one batch, consumed by [`Model::backward`].
#[derive(Clone, Debug)]
pub struct Trace<T> {
    version: u64,
    mode: Mode,
    caches: Vec<Cache<T>>,
    pub output: Tensor<T>,
}

/// Per-layer gradients handed to a backward hook.
pub struct LayerGrads<'a, T> {
    pub index: usize,
    pub spec: LayerSpec,
    pub input: &'a mut Tensor<T>,
    pub params: &'a mut Vec<Vec<T>>,
}

impl<T: Real> Model<T> {
    /// Builds and initializes a model. Conv and dense weights are drawn
    /// uniformly from `±sqrt(6 / fan_in)` using a stream per layer derived
    /// from `seed`; biases start at zero, batch-norm at `gamma = 1, beta = 0`.
    pub fn new(specs: Vec<LayerSpec>, input_len: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(specs, input_len)?;
        let root = StreamKey::root(seed).child(tags::INIT);
        for (i, layer) in model.layers.iter_mut().enumerate() {
            let (weight, fan_in) = match layer {
                Layer::Conv1d(c) => (&mut c.weight, c.in_channels * c.kernel),
                Layer::Dense(d) => (&mut d.weight, d.inputs),
                _ => continue,
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            let mut rng = root.child(i as u64).stream();
            for w in weight.iter_mut() {
                *w = T::from_f64(uniform(&mut rng, -limit, limit));
            }
        }
        Ok(model)
    }

    /// Builds a model with all weights zero (batch-norm at its identity).
    pub fn zeros(specs: Vec<LayerSpec>, input_len: usize) -> Result<Self> {
        LayerSpec::validate_stack(&specs)?;
        let mut shape = vec![1usize, input_len];
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Conv1d { out_channels, kernel, stride } => {
                    Layer::Conv1d(Conv1d::zeros(shape[0], out_channels, kernel, stride))
                }
                LayerSpec::MaxPool1d { window } => Layer::MaxPool1d(MaxPool1d { window }),
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(shape[0])),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { units } => Layer::Dense(Dense::zeros(shape[0], units)),
                LayerSpec::Softmax => Layer::Softmax,
            };
            shape = layer.output_shape(&shape).map_err(|e| {
                Error::Shape(format!("layer {i} ({spec}) on input length {input_len}: {}", strip(e)))
            })?;
            if shape.contains(&0) {
                return Err(Error::Shape(format!("layer {i} ({spec}) produces an empty output")));
            }
            layers.push(layer);
        }
        Ok(Model { specs, layers, input_len, version: 0, checked: cfg!(debug_assertions) })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// In checked mode every activation is scanned for NaN/Inf.
    pub fn set_checked(&mut self, checked: bool) {
        self.checked = checked;
    }

    /// Width of the last layer's output.
    pub fn n_outputs(&self) -> usize {
        self.shapes().last().map(|s| s.iter().product()).unwrap_or(self.input_len)
    }

    /// Per-layer output shapes without the batch dimension.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut shape = vec![1, self.input_len];
        self.layers
            .iter()
            .map(|l| {
                shape = l.output_shape(&shape).expect("validated at construction");
                shape.clone()
            })
            .collect()
    }

    /// `(positions, channels)` entering the flatten layer.
    pub fn conv_output(&self) -> (usize, usize) {
        let mut shape = vec![1, self.input_len];
        for (layer, out) in self.layers.iter().zip(self.shapes()) {
            if matches!(layer, Layer::Flatten) {
                break;
            }
            shape = out;
        }
        (shape[1], shape[0])
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    /// Copies of all parameters and buffers, for later [`Model::restore`].
    pub fn snapshot(&self) -> Snapshot<T> {
        let own = |v: Vec<&[T]>| v.into_iter().map(|s| s.to_vec()).collect();
        (own(self.params()), own(self.buffers()))
    }

    pub fn restore(&mut self, snapshot: &Snapshot<T>) -> Result<()> {
        copy_into(self.params_mut(), &snapshot.0, "parameter")?;
        copy_into(self.buffers_mut(), &snapshot.1, "buffer")
    }

    /// Converts the stored values to another scalar type.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let mut out = Model::<U>::zeros(self.specs.clone(), self.input_len).expect("same architecture");
        let conv = |v: Vec<&[T]>| -> Vec<Vec<U>> {
            v.into_iter().map(|s| s.iter().map(|x| U::from_f64(x.to_f64())).collect()).collect()
        };
        out.restore(&(conv(self.params()), conv(self.buffers()))).expect("same architecture");
        out.checked = self.checked;
        out
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        match *input.shape() {
            [_, 1, l] if l == self.input_len => Ok(()),
            _ => Err(Error::Shape(format!(
                "model expects input (batch, 1, {}), got {:?}",
                self.input_len,
                input.shape()
            ))),
        }
    }

    fn guard(&self, i: usize, t: &Tensor<T>) -> Result<()> {
        if self.checked && !t.all_finite() {
            return Err(Error::Domain(format!(
                "non-finite value after layer {i} ({})",
                self.specs[i]
            )));
        }
        Ok(())
    }

    fn logits_end(&self) -> usize {
        match self.specs.last() {
            Some(LayerSpec::Softmax) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Full forward pass, including a trailing softmax if present.
    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.run(input, mode, self.layers.len())
    }

    /// Forward pass stopping before a trailing softmax.
    pub fn logits(&self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.run(input, mode, self.logits_end())
    }

    fn run(&self, input: &Tensor<T>, mode: Mode, end: usize) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (i, layer) in self.layers[..end].iter().enumerate() {
            x = layer.forward(&x, mode)?.0;
            self.guard(i, &x)?;
        }
        Ok(x)
    }

    /// Forward pass up to the logits, keeping what backward needs.
    pub fn forward_traced(&self, input: &Tensor<T>, mode: Mode) -> Result<Trace<T>> {
        self.check_input(input)?;
        let end = self.logits_end();
        let mut caches = Vec::with_capacity(end);
        let mut x = input.clone();
        for (i, layer) in self.layers[..end].iter().enumerate() {
            let (y, cache) = layer.forward(&x, mode)?;
            self.guard(i, &y)?;
            caches.push(cache);
            x = y;
        }
        Ok(Trace { version: self.version, mode, caches, output: x })
    }

    /// Gradients of every parameter tensor (in [`Model::params`] order),
    /// given the gradient with respect to the trace output.
    pub fn backward(&self, trace: &Trace<T>, upstream: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        self.backward_with(trace, upstream, &mut |_| {})
    }

    /// As [`Model::backward`], calling `hook` on each layer's gradients
    /// before they propagate further.
    pub fn backward_with(
        &self,
        trace: &Trace<T>,
        upstream: &Tensor<T>,
        hook: &mut dyn FnMut(LayerGrads<'_, T>),
    ) -> Result<Vec<Vec<T>>> {
        if trace.version != self.version {
            return Err(Error::Usage(
                "stale forward trace: parameters changed since the forward pass".into(),
            ));
        }
        if trace.caches.len() != self.logits_end() {
            return Err(Error::Usage("forward trace does not belong to this model".into()));
        }
        if upstream.shape() != trace.output.shape() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                trace.output.shape()
            )));
        }
        let mut per_layer: Vec<Vec<Vec<T>>> = vec![Vec::new(); trace.caches.len()];
        let mut g = upstream.clone();
        for i in (0..trace.caches.len()).rev() {
            let (mut dx, mut params) = self.layers[i].backward(&trace.caches[i], &g)?;
            hook(LayerGrads { index: i, spec: self.specs[i], input: &mut dx, params: &mut params });
            per_layer[i] = params;
            g = dx;
        }
        Ok(per_layer.into_iter().flatten().collect())
    }

    /// Folds the batch statistics recorded in a train-mode trace into the
    /// batch-norm running averages.
    pub fn absorb_batch_stats(&mut self, trace: &Trace<T>) -> Result<()> {
        if trace.mode != Mode::Train {
            return Ok(());
        }
        self.version += 1;
        for (layer, cache) in self.layers.iter_mut().zip(&trace.caches) {
            if let (Layer::BatchNorm(bn), Some(stats)) = (layer, cache.batch_stats()) {
                bn.absorb(stats);
            }
        }
        Ok(())
    }

    /// Mean cross-entropy of a batch and the parameter gradients.
    pub fn loss_and_gradients(
        &self,
        input: &Tensor<T>,
        labels: &[i64],
        mode: Mode,
    ) -> Result<(f64, Trace<T>, Vec<Vec<T>>)> {
        let trace = self.forward_traced(input, mode)?;
        let (loss, grad) = softmax_cross_entropy(&trace.output, labels)?;
        let grads = self.backward(&trace, &grad)?;
        Ok((loss, trace, grads))
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Shape(m) => m,
        other => other.to_string(),
    }
}

fn copy_into<T: Copy>(dst: Vec<&mut [T]>, src: &[Vec<T>], what: &str) -> Result<()> {
    if dst.len() != src.len() || dst.iter().zip(src).any(|(d, s)| d.len() != s.len()) {
        return Err(Error::Shape(format!("{what} snapshot does not match the model")));
    }
    for (d, s) in dst.into_iter().zip(src) {
        d.copy_from_slice(s);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Vec<LayerSpec> {
        LayerSpec::parse_stack("C4k3s1,BN,R,MP2,F,D8,R,D3,SM").unwrap()
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::<f32>::new(tiny(), 20, 9).unwrap();
        let b = Model::<f32>::new(tiny(), 20, 9).unwrap();
        let c = Model::<f32>::new(tiny(), 20, 10).unwrap();
        assert_eq!(a.snapshot(), b.snapshot());
        assert_ne!(a.snapshot(), c.snapshot());
    }

    #[test]
    fn shapes_and_conv_output() {
        let m = Model::<f32>::new(tiny(), 20, 0).unwrap();
        assert_eq!(m.conv_output(), (9, 4));
        assert_eq!(m.n_outputs(), 3);
        assert_eq!(m.param_count(), 4 * 3 + 4 + 4 + 4 + 36 * 8 + 8 + 8 * 3 + 3);
    }

    #[test]
    fn too_short_input_names_the_layer() {
        let err = Model::<f32>::new(LayerSpec::parse_stack("MP8,F,D2").unwrap(), 4, 0).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn stale_trace_is_refused() {
        let mut m = Model::<f64>::new(tiny(), 20, 1).unwrap();
        let x = Tensor::zeros(vec![2, 1, 20]);
        let trace = m.forward_traced(&x, Mode::Train).unwrap();
        m.params_mut()[0][0] += 1.0;
        let up = Tensor::zeros(trace.output.shape().to_vec());
        assert!(matches!(m.backward(&trace, &up), Err(Error::Usage(_))));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = Model::<f32>::new(tiny(), 20, 2).unwrap();
        let x = Tensor::from_f64(vec![2, 1, 20], &(0..40).map(|i| (i as f64).sin()).collect::<Vec<_>>()).unwrap();
        let p = m.forward(&x, Mode::Eval).unwrap();
        for row in p.data().chunks(3) {
            assert!((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn checked_mode_trips_on_nan() {
        let mut m = Model::<f32>::new(LayerSpec::parse_stack("F,D2").unwrap(), 3, 0).unwrap();
        m.set_checked(true);
        let x = Tensor::new(vec![1, 1, 3], vec![f32::NAN, 0.0, 0.0]).unwrap();
        assert!(matches!(m.forward(&x, Mode::Eval), Err(Error::Domain(_))));
    }
}
