//! Deterministic parallel reductions over grid-sized buffers.
//!
//! Sums are chunked at a fixed width: partial sums are produced per chunk in
//! parallel, then folded sequentially in chunk order. The result is therefore
//! independent of the thread count, which is what makes solver output and the
//! probe CSVs byte-reproducible.

use rayon::prelude::*;

use crate::Real;

const CHUNK: usize = 4096;

pub fn sum<T: Real>(v: &[T]) -> T {
    let partials: Vec<T> = v
        .par_chunks(CHUNK)
        .map(|c| c.iter().fold(T::zero(), |a, &x| a + x))
        .collect();
    partials.into_iter().fold(T::zero(), |a, x| a + x)
}

pub fn mean<T: Real>(v: &[T]) -> T {
    sum(v) / T::from_usize(v.len()).unwrap()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let partials: Vec<T> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| {
            ca.iter()
                .zip(cb)
                .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
        })
        .collect();
    partials.into_iter().fold(T::zero(), |a, x| a + x)
}

pub fn norm2<T: Real>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Max of |v_i|; max is order-insensitive so a plain parallel reduce is fine.
pub fn linf<T: Real>(v: &[T]) -> T {
    v.par_iter()
        .map(|x| x.abs())
        .reduce(T::zero, |a, b| a.max(b))
}

pub fn max<T: Real>(v: &[T]) -> T {
    v.par_iter()
        .copied()
        .reduce(|| T::neg_infinity(), |a, b| a.max(b))
}

pub fn min<T: Real>(v: &[T]) -> T {
    v.par_iter()
        .copied()
        .reduce(|| T::infinity(), |a, b| a.min(b))
}

/// y <- y + a*x
pub fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, &xi)| {
        *yi = *yi + a * xi;
    });
}

/// Subtract the (deterministic) mean in place and return it.
pub fn remove_mean<T: Real>(v: &mut [T]) -> T {
    let m = mean(v);
    v.par_iter_mut().for_each(|x| *x = *x - m);
    m
}
