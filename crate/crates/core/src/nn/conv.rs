use super::kernels::{axpy, dot, store, sum};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Valid (unpadded) 1D cross-correlation.
///
/// `weight` is laid out `(out_channels, in_channels, kernel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv1d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: vec![T::default(); out_channels * in_channels * kernel],
            bias: vec![T::default(); out_channels],
        }
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        if self.kernel > len {
            return Err(Error::Shape(format!(
                "kernel {} exceeds input length {len}",
                self.kernel
            )));
        }
        Ok((len - self.kernel) / self.stride + 1)
    }

    fn w(&self, co: usize, ci: usize) -> &[T] {
        let k = self.kernel;
        let at = (co * self.in_channels + ci) * k;
        &self.weight[at..at + k]
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, l) = input.dims3()?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let lo = self.output_len(l)?;
        let s = self.stride;
        let x = input.data();
        let mut out = Tensor::zeros(vec![b, self.out_channels, lo]);
        let mut acc = vec![0.0f64; lo];
        for bi in 0..b {
            for co in 0..self.out_channels {
                acc.fill(self.bias[co].to_f64());
                for ci in 0..c {
                    let row = &x[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for (j, &w) in self.w(co, ci).iter().enumerate() {
                        let w = w.to_f64();
                        if s == 1 {
                            axpy(&mut acc, w, &row[j..j + lo]);
                        } else {
                            for (t, a) in acc.iter_mut().enumerate() {
                                *a += w * row[t * s + j].to_f64();
                            }
                        }
                    }
                }
                let at = (bi * self.out_channels + co) * lo;
                store(&mut out.data_mut()[at..at + lo], &acc);
            }
        }
        Ok(out)
    }

    /// Returns `(input_grad, weight_grad, bias_grad)`.
    pub fn backward(&self, input: &Tensor<T>, upstream: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        let (b, c, l) = input.dims3()?;
        let lo = self.output_len(l)?;
        let co_n = self.out_channels;
        if upstream.shape() != [b, co_n, lo] {
            return Err(Error::Shape(format!(
                "conv upstream gradient {:?} does not match output ({b}, {co_n}, {lo})",
                upstream.shape()
            )));
        }
        let (x, dy) = (input.data(), upstream.data());
        let s = self.stride;
        let k = self.kernel;
        let dy_row = |bi: usize, co: usize| &dy[(bi * co_n + co) * lo..(bi * co_n + co + 1) * lo];
        let x_row = |bi: usize, ci: usize| &x[(bi * c + ci) * l..(bi * c + ci + 1) * l];

        let mut gw = vec![0.0f64; self.weight.len()];
        let mut gb = vec![0.0f64; co_n];
        for co in 0..co_n {
            for bi in 0..b {
                gb[co] += sum(dy_row(bi, co));
            }
            for ci in 0..c {
                for j in 0..k {
                    let mut g = 0.0;
                    for bi in 0..b {
                        let d = dy_row(bi, co);
                        let xr = x_row(bi, ci);
                        g += if s == 1 {
                            dot(d, &xr[j..j + lo])
                        } else {
                            d.iter()
                                .enumerate()
                                .map(|(t, v)| v.to_f64() * xr[t * s + j].to_f64())
                                .fold(0.0, |a, v| a + v)
                        };
                    }
                    gw[(co * c + ci) * k + j] = g;
                }
            }
        }

        let mut dx = Tensor::zeros(vec![b, c, l]);
        let mut acc = vec![0.0f64; l];
        for bi in 0..b {
            for ci in 0..c {
                acc.fill(0.0);
                for co in 0..co_n {
                    let d = dy_row(bi, co);
                    for (j, &w) in self.w(co, ci).iter().enumerate() {
                        let w = w.to_f64();
                        if s == 1 {
                            axpy(&mut acc[j..j + lo], w, d);
                        } else {
                            for (t, v) in d.iter().enumerate() {
                                acc[t * s + j] += w * v.to_f64();
                            }
                        }
                    }
                }
                let at = (bi * c + ci) * l;
                store(&mut dx.data_mut()[at..at + l], &acc);
            }
        }
        let to_t = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect();
        Ok((dx, to_t(gw), to_t(gb)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{uniform, StreamKey};

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut r = StreamKey::root(seed).stream();
        (0..n).map(|_| uniform(&mut r, -1.0, 1.0)).collect()
    }

    /// Naive nested-loop reference.
    fn reference(x: &[f64], b: usize, c: usize, l: usize, conv: &Conv1d<f64>) -> Vec<f64> {
        let lo = (l - conv.kernel) / conv.stride + 1;
        let mut out = vec![0.0; b * conv.out_channels * lo];
        for bi in 0..b {
            for co in 0..conv.out_channels {
                for t in 0..lo {
                    let mut s = conv.bias[co];
                    for ci in 0..c {
                        for j in 0..conv.kernel {
                            s += conv.weight[(co * c + ci) * conv.kernel + j]
                                * x[(bi * c + ci) * l + t * conv.stride + j];
                        }
                    }
                    out[(bi * conv.out_channels + co) * lo + t] = s;
                }
            }
        }
        out
    }

    #[test]
    fn output_length_arithmetic() {
        let conv = Conv1d::<f32>::zeros(1, 1, 5, 1);
        let y = conv.forward(&Tensor::zeros(vec![1, 1, 1000])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 996]);
        assert!(matches!(
            conv.forward(&Tensor::zeros(vec![1, 1, 4])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut conv = Conv1d::<f64>::zeros(1, 1, 1, 1);
        conv.weight[0] = 1.0;
        let x = Tensor::from_f64(vec![2, 1, 6], &random(12, 1)).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn strided_matches_reference_loop() {
        let mut conv = Conv1d::<f64>::zeros(2, 3, 3, 2);
        conv.weight = random(18, 2);
        conv.bias = random(3, 3);
        let xs = random(16, 4);
        let x = Tensor::from_f64(vec![1, 2, 8], &xs).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        for (a, b) in y.data().iter().zip(reference(&xs, 1, 2, 8, &conv)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
