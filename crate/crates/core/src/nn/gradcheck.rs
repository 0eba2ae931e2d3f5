//! Central-difference verification of analytic gradients, in 64-bit.

use super::activation::softmax_cross_entropy;
use super::layer::Layer;
use super::model::{LayerGrads, Model};
use super::{Mode, Tensor};
use crate::error::Result;
use crate::rng::{uniform, StreamKey};

/// `|a - n| / max(|a|, |n|, 1e-8)`; defined (zero) when both are zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error over every parameter of `model` between the
/// backpropagated gradient of the mean cross-entropy and its central
/// difference with step `h`. Batch norm runs in train mode.
pub fn gradient_check(model: &Model<f64>, input: &Tensor<f64>, labels: &[i64], h: f64) -> Result<f64> {
    gradient_check_with(model, input, labels, h, &mut |_| {})
}

/// As [`gradient_check`], with a hook that may alter the analytic backward
/// pass (used to confirm the check notices a broken layer).
pub fn gradient_check_with(
    model: &Model<f64>,
    input: &Tensor<f64>,
    labels: &[i64],
    h: f64,
    hook: &mut dyn FnMut(LayerGrads<'_, f64>),
) -> Result<f64> {
    let trace = model.forward_traced(input, Mode::Train)?;
    let (_, upstream) = softmax_cross_entropy(&trace.output, labels)?;
    let analytic = model.backward_with(&trace, &upstream, hook)?;

    let loss = |m: &Model<f64>| -> Result<f64> {
        Ok(softmax_cross_entropy(&m.logits(input, Mode::Train)?, labels)?.0)
    };
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (t, grads) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let original = probe.params_mut()[t][k];
            probe.params_mut()[t][k] = original + h;
            let plus = loss(&probe)?;
            probe.params_mut()[t][k] = original - h;
            let minus = loss(&probe)?;
            probe.params_mut()[t][k] = original;
            worst = worst.max(relative_error(a, (plus - minus) / (2.0 * h)));
        }
    }
    Ok(worst)
}

/// Checks one layer in isolation with the scalar objective
/// `L = sum(r * layer(x))` for a fixed random `r`. Both the input gradient
/// and every parameter gradient are compared; returns the worst relative error.
pub fn layer_gradient_check(layer: &Layer<f64>, input: &Tensor<f64>, h: f64, seed: u64) -> Result<f64> {
    let mode = Mode::Train;
    let (y, cache) = layer.forward(input, mode)?;
    let mut rng = StreamKey::root(seed).stream();
    let r: Vec<f64> = (0..y.len()).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
    let upstream = Tensor::new(y.shape().to_vec(), r.clone())?;
    let (dx, dparams) = layer.backward(&cache, &upstream)?;

    let objective = |l: &Layer<f64>, x: &Tensor<f64>| -> Result<f64> {
        let out = l.forward(x, mode)?.0;
        Ok(out.data().iter().zip(&r).map(|(a, b)| a * b).sum())
    };

    let mut worst = 0.0f64;
    let mut x = input.clone();
    for k in 0..x.len() {
        let original = x.data()[k];
        x.data_mut()[k] = original + h;
        let plus = objective(layer, &x)?;
        x.data_mut()[k] = original - h;
        let minus = objective(layer, &x)?;
        x.data_mut()[k] = original;
        worst = worst.max(relative_error(dx.data()[k], (plus - minus) / (2.0 * h)));
    }
    let mut probe = layer.clone();
    for (t, grads) in dparams.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let original = probe.params_mut()[t][k];
            probe.params_mut()[t][k] = original + h;
            let plus = objective(&probe, input)?;
            probe.params_mut()[t][k] = original - h;
            let minus = objective(&probe, input)?;
            probe.params_mut()[t][k] = original;
            worst = worst.max(relative_error(a, (plus - minus) / (2.0 * h)));
        }
    }
    Ok(worst)
}
