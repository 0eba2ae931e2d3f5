use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Non-overlapping max pooling; a trailing partial window is dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaxPool1d {
    pub window: usize,
}

impl MaxPool1d {
    pub fn output_len(&self, len: usize) -> Result<usize> {
        let out = len / self.window;
        if out == 0 {
            return Err(Error::Shape(format!(
                "pool window {} exceeds input length {len}",
                self.window
            )));
        }
        Ok(out)
    }

    /// Returns the pooled tensor and, per output element, the flat input
    /// index of the winner (lowest index on ties).
    pub fn forward<T: Real>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let (b, c, l) = input.dims3()?;
        let w = self.window;
        let lo = self.output_len(l)?;
        let x = input.data();
        let mut out = Vec::with_capacity(b * c * lo);
        let mut argmax = Vec::with_capacity(b * c * lo);
        for row in 0..b * c {
            let base = row * l;
            for t in 0..lo {
                let start = base + t * w;
                let mut best = start;
                for i in start + 1..start + w {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
        Ok((Tensor::new(vec![b, c, lo], out)?, argmax))
    }

    pub fn backward<T: Real>(input_shape: &[usize], argmax: &[usize], upstream: &Tensor<T>) -> Result<Tensor<T>> {
        if upstream.len() != argmax.len() {
            return Err(Error::Shape(format!(
                "pool upstream gradient has {} values, expected {}",
                upstream.len(),
                argmax.len()
            )));
        }
        let mut dx = Tensor::<T>::zeros(input_shape.to_vec());
        let d = dx.data_mut();
        for (&i, &g) in argmax.iter().zip(upstream.data()) {
            d[i] = T::from_f64(d[i].to_f64() + g.to_f64());
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64], shape: Vec<usize>) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn pools_pairs() {
        let (y, idx) = MaxPool1d { window: 2 }
            .forward(&t(&[1.0, 3.0, 2.0, 8.0], vec![1, 1, 4]))
            .unwrap();
        assert_eq!(y.data(), &[3.0, 8.0]);
        assert_eq!(idx, vec![1, 3]);
    }

    #[test]
    fn window_one_is_identity() {
        let x = t(&[4.0, -1.0, 2.0], vec![1, 1, 3]);
        let (y, _) = MaxPool1d { window: 1 }.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn remainder_is_dropped_and_ties_go_low() {
        let x = t(&[1.0, 1.0, 5.0, 2.0, 0.0, 9.0, 100.0], vec![1, 1, 7]);
        let (y, idx) = MaxPool1d { window: 2 }.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 5.0, 9.0]);
        assert_eq!(idx, vec![0, 2, 5]);
    }

    #[test]
    fn gradient_goes_to_the_winner() {
        let x = t(&[1.0, 3.0], vec![1, 1, 2]);
        let p = MaxPool1d { window: 2 };
        let (_, idx) = p.forward(&x).unwrap();
        let dx = MaxPool1d::backward(x.shape(), &idx, &t(&[5.0], vec![1, 1, 1])).unwrap();
        assert_eq!(dx.data(), &[0.0, 5.0]);
    }
}
