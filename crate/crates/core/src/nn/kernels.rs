//! Inner loops shared by the layers. Every routine has a fixed summation
//! order, so results do not depend on scheduling.

use super::Real;

const LANES: usize = 8;

/// `sum_i a[i] * b[i]` accumulated in eight interleaved `f64` lanes that are
/// combined pairwise at the end.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += x[k].to_f64() * y[k].to_f64();
        }
    }
    for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
        acc[k] += x.to_f64() * y.to_f64();
    }
    let s0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let s1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    s0 + s1
}

/// `acc[i] += w * x[i]`
#[inline]
pub fn axpy<T: Real>(acc: &mut [f64], w: f64, x: &[T]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += w * v.to_f64();
    }
}

/// Sum in the same lane order as [`dot`].
#[inline]
pub fn sum<T: Real>(a: &[T]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let c = a.chunks_exact(LANES);
    let r = c.remainder();
    for x in c {
        for k in 0..LANES {
            acc[k] += x[k].to_f64();
        }
    }
    for (k, x) in r.iter().enumerate() {
        acc[k] += x.to_f64();
    }
    let s0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let s1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    s0 + s1
}

pub fn store<T: Real>(out: &mut [T], src: &[f64]) {
    for (o, &s) in out.iter_mut().zip(src) {
        *o = T::from_f64(s);
    }
}
