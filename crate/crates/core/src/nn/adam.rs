use super::Real;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments shaped like `sizes`.
    pub fn new(sizes: &[usize], learning_rate: f64) -> Self {
        AdamState {
            m: sizes.iter().map(|&n| vec![T::default(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::default(); n]).collect(),
            t: 0,
            learning_rate,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }

    /// One update: `t` is incremented first, then
    /// `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Shape(format!(
                    "adam tensor {i}: expected {} values, got {} parameters and {} gradients",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        let lr = self.learning_rate;
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for k in 0..p.len() {
                let gk = g[k].to_f64();
                let mk = b1 * m[k].to_f64() + (1.0 - b1) * gk;
                let vk = b2 * v[k].to_f64() + (1.0 - b2) * gk * gk;
                m[k] = T::from_f64(mk);
                v[k] = T::from_f64(vk);
                let update = lr * (mk / c1) / ((vk / c2).sqrt() + self.epsilon);
                p[k] = T::from_f64(p[k].to_f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step1(p: &mut Vec<f64>, g: f64, s: &mut AdamState<f64>) {
        s.step(&mut [p.as_mut_slice()], &[vec![g]]).unwrap();
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, -7.0, 1e4] {
            let mut s = AdamState::<f64>::new(&[1], 3e-4);
            let mut p = vec![1.0];
            step1(&mut p, g, &mut s);
            let delta = (p[0] - 1.0).abs();
            assert!((delta - 3e-4).abs() < 3e-4 * 1e-4, "g={g}: {delta}");
            assert_eq!(p[0] < 1.0, g > 0.0);
        }
    }

    #[test]
    fn zero_gradient_never_moves() {
        let mut s = AdamState::<f32>::new(&[3], 3e-4);
        let mut p = vec![0.5f32, -1.0, 2.0];
        for _ in 0..100 {
            s.step(&mut [p.as_mut_slice()], &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn quadratic_trajectory_matches_scalar_reference() {
        let mut s = AdamState::<f64>::new(&[1], 0.1);
        let mut p = vec![1.0];
        // Independent scalar Adam.
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut prev = 1.0;
        for t in 1..=10 {
            let g = 2.0 * p[0];
            step1(&mut p, g, &mut s);
            let gr = 2.0 * w;
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!(p[0] < prev);
            assert!((p[0] - w).abs() < 1e-14);
            prev = p[0];
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut s = AdamState::<f32>::new(&[2], 0.0);
        let mut p = vec![0.25f32, 4.0];
        s.step(&mut [p.as_mut_slice()], &[vec![3.0, -1.0]]).unwrap();
        assert_eq!(p, vec![0.25, 4.0]);
        assert!(s.v[0].iter().all(|&v| v >= 0.0));
    }
}
