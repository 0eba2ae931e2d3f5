use super::{Real, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let zero = T::default();
    let data = input.data().iter().map(|&v| if v > zero { v } else { zero }).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Subgradient 0 at and below zero.
pub fn relu_backward<T: Real>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(input, upstream, "relu")?;
    let zero = T::default();
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > zero { g } else { zero })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Row-wise softmax of a `(batch, classes)` tensor, max-subtracted.
pub fn softmax<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c) = input.dims2()?;
    let mut out = Vec::with_capacity(b * c);
    for row in input.data().chunks(c.max(1)).take(b) {
        out.extend(softmax_row(row).into_iter().map(T::from_f64));
    }
    Tensor::new(vec![b, c], out)
}

fn softmax_row<T: Real>(row: &[T]) -> Vec<f64> {
    let m = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v.to_f64() - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Backward of softmax given its output `y`: `y * (dy - sum(dy * y))` per row.
pub fn softmax_backward<T: Real>(output: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(output, upstream, "softmax")?;
    let (_, c) = output.dims2()?;
    let mut out = Vec::with_capacity(output.len());
    for (y, dy) in output.data().chunks(c).zip(upstream.data().chunks(c)) {
        let s: f64 = y.iter().zip(dy).map(|(a, b)| a.to_f64() * b.to_f64()).sum();
        out.extend(y.iter().zip(dy).map(|(a, b)| T::from_f64(a.to_f64() * (b.to_f64() - s))));
    }
    Tensor::new(output.shape().to_vec(), out)
}

/// Mean cross-entropy of `softmax(logits)` against integer labels, and its
/// gradient with respect to the logits, `(softmax - one_hot) / batch`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[i64]) -> Result<(f64, Tensor<T>)> {
    let (b, c) = logits.dims2()?;
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if b == 0 {
        return Err(Error::Shape("cross-entropy over an empty batch".into()));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(b * c);
    for (row, &label) in logits.data().chunks(c).zip(labels) {
        if label < 0 || label as usize >= c {
            return Err(Error::Domain(format!("label {label} outside [0, {c})")));
        }
        let m = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v.to_f64() - m).exp()).sum::<f64>().ln();
        loss += lse - row[label as usize].to_f64();
        for (k, v) in row.iter().enumerate() {
            let p = (v.to_f64() - lse).exp();
            let target = if k == label as usize { 1.0 } else { 0.0 };
            grad.push(T::from_f64((p - target) / b as f64));
        }
    }
    Ok((loss / b as f64, Tensor::new(vec![b, c], grad)?))
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what} upstream gradient {:?} does not match {:?}",
            b.shape(),
            a.shape()
        )));
    }
    Ok(())
}
