use super::{Mode, Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Per-channel batch normalization over `(batch, channels, length)` or
/// `(batch, features)` inputs. Running statistics use the biased batch
/// variance and the update `running = momentum * running + (1 - momentum) * batch`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// What a train-mode forward pass needs to remember.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Normalized input, same layout as the input.
    pub xhat: Vec<f64>,
}

fn layout<T: Real>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, c, l] => Ok((b, c, l)),
        [b, f] => Ok((b, f, 1)),
        _ => Err(Error::Shape(format!(
            "batch norm expects a 2-D or 3-D input, got {:?}",
            x.shape()
        ))),
    }
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![T::from_f64(1.0); channels],
            beta: vec![T::default(); channels],
            running_mean: vec![T::default(); channels],
            running_var: vec![T::from_f64(1.0); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, c: usize) -> Result<()> {
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batch norm has {} channels, input has {c}",
                self.channels()
            )));
        }
        Ok(())
    }

    /// Train mode returns the batch statistics alongside the output; the
    /// running statistics are updated separately by [`BatchNorm::absorb`].
    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Option<BatchStats>)> {
        let (b, c, l) = layout(input)?;
        self.check(c)?;
        let x = input.data();
        let idx = |bi: usize, ci: usize, t: usize| (bi * c + ci) * l + t;
        let mut out = Tensor::zeros(input.shape().to_vec());
        match mode {
            Mode::Eval => {
                let y = out.data_mut();
                for ci in 0..c {
                    let inv = 1.0 / (self.running_var[ci].to_f64() + BN_EPSILON).sqrt();
                    let (m, g, be) = (
                        self.running_mean[ci].to_f64(),
                        self.gamma[ci].to_f64(),
                        self.beta[ci].to_f64(),
                    );
                    for bi in 0..b {
                        for t in 0..l {
                            let i = idx(bi, ci, t);
                            y[i] = T::from_f64(g * (x[i].to_f64() - m) * inv + be);
                        }
                    }
                }
                Ok((out, None))
            }
            Mode::Train => {
                if b < 2 {
                    return Err(Error::Shape(
                        "batch norm in train mode needs a batch of at least 2".into(),
                    ));
                }
                let n = (b * l) as f64;
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                let mut xhat = vec![0.0; x.len()];
                let y = out.data_mut();
                for ci in 0..c {
                    let mut s = 0.0;
                    for bi in 0..b {
                        for t in 0..l {
                            s += x[idx(bi, ci, t)].to_f64();
                        }
                    }
                    let m = s / n;
                    let mut q = 0.0;
                    for bi in 0..b {
                        for t in 0..l {
                            let d = x[idx(bi, ci, t)].to_f64() - m;
                            q += d * d;
                        }
                    }
                    let v = q / n;
                    let inv = 1.0 / (v + BN_EPSILON).sqrt();
                    let (g, be) = (self.gamma[ci].to_f64(), self.beta[ci].to_f64());
                    for bi in 0..b {
                        for t in 0..l {
                            let i = idx(bi, ci, t);
                            let h = (x[i].to_f64() - m) * inv;
                            xhat[i] = h;
                            y[i] = T::from_f64(g * h + be);
                        }
                    }
                    mean[ci] = m;
                    var[ci] = v;
                }
                Ok((out, Some(BatchStats { mean, var, xhat })))
            }
        }
    }

    /// Folds one batch's statistics into the running averages.
    pub fn absorb(&mut self, stats: &BatchStats) {
        for ci in 0..self.channels() {
            let rm = self.running_mean[ci].to_f64();
            let rv = self.running_var[ci].to_f64();
            self.running_mean[ci] = T::from_f64(BN_MOMENTUM * rm + (1.0 - BN_MOMENTUM) * stats.mean[ci]);
            self.running_var[ci] = T::from_f64(BN_MOMENTUM * rv + (1.0 - BN_MOMENTUM) * stats.var[ci]);
        }
    }

    /// Gradient through the batch statistics. Returns
    /// `(input_grad, gamma_grad, beta_grad)`.
    pub fn backward(
        &self,
        input_shape: &[usize],
        stats: &BatchStats,
        upstream: &Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        if upstream.shape() != input_shape {
            return Err(Error::Shape(format!(
                "batch norm upstream gradient {:?} does not match input {input_shape:?}",
                upstream.shape()
            )));
        }
        let (b, c, l) = layout(upstream)?;
        let dy = upstream.data();
        let idx = |bi: usize, ci: usize, t: usize| (bi * c + ci) * l + t;
        let n = (b * l) as f64;
        let mut dx = Tensor::zeros(input_shape.to_vec());
        let mut dgamma = vec![T::default(); c];
        let mut dbeta = vec![T::default(); c];
        let out = dx.data_mut();
        for ci in 0..c {
            let g = self.gamma[ci].to_f64();
            let inv = 1.0 / (stats.var[ci] + BN_EPSILON).sqrt();
            let (mut sdy, mut sdyh) = (0.0, 0.0);
            for bi in 0..b {
                for t in 0..l {
                    let i = idx(bi, ci, t);
                    let d = dy[i].to_f64();
                    sdy += d;
                    sdyh += d * stats.xhat[i];
                }
            }
            dgamma[ci] = T::from_f64(sdyh);
            dbeta[ci] = T::from_f64(sdy);
            // dxhat = g * dy, so the sums above scale by g.
            for bi in 0..b {
                for t in 0..l {
                    let i = idx(bi, ci, t);
                    let dxh = g * dy[i].to_f64();
                    out[i] = T::from_f64(inv / n * (n * dxh - g * sdy - stats.xhat[i] * g * sdyh));
                }
            }
        }
        Ok((dx, dgamma, dbeta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{uniform, StreamKey};

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut r = StreamKey::root(seed).stream();
        (0..n).map(|_| uniform(&mut r, -3.0, 5.0)).collect()
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let bn = BatchNorm::<f64>::new(3);
        let x = Tensor::from_f64(vec![4, 3, 5], &random(60, 1)).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for ci in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|b| (0..5).map(move |t| (b * 3 + ci) * 5 + t))
                .map(|i| y.data()[i])
                .collect();
            let m = vals.iter().sum::<f64>() / 20.0;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-5);
            assert!((v - 1.0).abs() < 1e-5, "variance {v}");
        }
    }

    #[test]
    fn eval_with_unit_stats_is_near_identity() {
        let bn = BatchNorm::<f64>::new(2);
        let xs = random(8, 2);
        let x = Tensor::from_f64(vec![2, 2, 2], &xs).unwrap();
        let (y, stats) = bn.forward(&x, Mode::Eval).unwrap();
        assert!(stats.is_none());
        for (a, b) in y.data().iter().zip(&xs) {
            assert!((a - b).abs() <= b.abs() * 1e-5);
        }
    }

    #[test]
    fn matches_direct_formula() {
        let mut bn = BatchNorm::<f32>::new(2);
        bn.gamma = vec![1.5, -0.5];
        bn.beta = vec![0.25, 2.0];
        let xs = random(2 * 2 * 4, 3);
        let x = Tensor::from_f64(vec![2, 2, 4], &xs).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        let xs32: Vec<f64> = x.to_f64_vec();
        for ci in 0..2 {
            let idx: Vec<usize> = (0..2).flat_map(|b| (0..4).map(move |t| (b * 2 + ci) * 4 + t)).collect();
            let m = idx.iter().map(|&i| xs32[i]).sum::<f64>() / 8.0;
            let v = idx.iter().map(|&i| (xs32[i] - m).powi(2)).sum::<f64>() / 8.0;
            for &i in &idx {
                let want = bn.gamma[ci] as f64 * (xs32[i] - m) / (v + 1e-5).sqrt() + bn.beta[ci] as f64;
                assert!((y.data()[i] as f64 - want).abs() <= 1e-6, "{} vs {want}", y.data()[i]);
            }
        }
    }

    #[test]
    fn batch_of_one_is_rejected_in_train_mode() {
        let bn = BatchNorm::<f32>::new(1);
        let x = Tensor::zeros(vec![1, 1, 4]);
        assert!(bn.forward(&x, Mode::Train).is_err());
        assert!(bn.forward(&x, Mode::Eval).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = Tensor::from_f64(vec![2, 1], &[1.0, 3.0]).unwrap();
        let (_, stats) = bn.forward(&x, Mode::Train).unwrap();
        bn.absorb(&stats.unwrap());
        assert!((bn.running_mean[0] - 0.02).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.99 + 0.01)).abs() < 1e-15);
    }
}
