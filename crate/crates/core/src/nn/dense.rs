use super::kernels::{axpy, dot, store, sum};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Fully connected layer, `y = W x + b` with `weight` stored row-major as
/// `(units, inputs)`: row `u` holds the weights feeding output `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub units: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, units: usize) -> Self {
        Dense {
            inputs,
            units,
            weight: vec![T::default(); inputs * units],
            bias: vec![T::default(); units],
        }
    }

    fn row(&self, u: usize) -> &[T] {
        &self.weight[u * self.inputs..(u + 1) * self.inputs]
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, f) = input.dims2()?;
        if f != self.inputs {
            return Err(Error::Shape(format!(
                "dense layer expects {} features, got {f}",
                self.inputs
            )));
        }
        let x = input.data();
        let mut out = Vec::with_capacity(b * self.units);
        for bi in 0..b {
            let xr = &x[bi * f..(bi + 1) * f];
            for u in 0..self.units {
                out.push(T::from_f64(self.bias[u].to_f64() + dot(self.row(u), xr)));
            }
        }
        Tensor::new(vec![b, self.units], out)
    }

    /// Returns `(input_grad, weight_grad, bias_grad)`.
    pub fn backward(&self, input: &Tensor<T>, upstream: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        let (b, f) = input.dims2()?;
        if upstream.shape() != [b, self.units] {
            return Err(Error::Shape(format!(
                "dense upstream gradient {:?} does not match output ({b}, {})",
                upstream.shape(),
                self.units
            )));
        }
        let (x, dy) = (input.data(), upstream.data());
        let mut gw = vec![T::default(); self.weight.len()];
        let mut gb = vec![T::default(); self.units];
        let mut acc = vec![0.0f64; f];
        let mut col = vec![T::default(); b];
        for u in 0..self.units {
            for bi in 0..b {
                col[bi] = dy[bi * self.units + u];
            }
            gb[u] = T::from_f64(sum(&col));
            acc.fill(0.0);
            for bi in 0..b {
                axpy(&mut acc, col[bi].to_f64(), &x[bi * f..(bi + 1) * f]);
            }
            store(&mut gw[u * f..(u + 1) * f], &acc);
        }
        let mut dx = Tensor::zeros(vec![b, f]);
        for bi in 0..b {
            acc.fill(0.0);
            for u in 0..self.units {
                axpy(&mut acc, dy[bi * self.units + u].to_f64(), self.row(u));
            }
            store(&mut dx.data_mut()[bi * f..(bi + 1) * f], &acc);
        }
        Ok((dx, gw, gb))
    }
}
