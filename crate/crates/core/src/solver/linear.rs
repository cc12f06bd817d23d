//! Diagonally preconditioned BiCGStab for the nonsymmetric bordered systems
//! the Newton step produces. All inner products go through the fixed-order
//! reductions in [`crate::reduce`], so iterates are bit-reproducible.

use rayon::prelude::*;

use crate::{real, reduce, Real};

#[derive(Clone, Copy, Debug)]
pub struct LinearStats<T> {
    pub iterations: usize,
    pub converged: bool,
    pub residual: T,
}

fn scaled_add<T: Real>(out: &mut [T], a: T, x: &[T]) {
    out.par_iter_mut()
        .zip(x.par_iter())
        .for_each(|(o, &xi)| *o = *o + a * xi);
}

/// p <- r + beta * (p - omega * v)
fn update_p<T: Real>(p: &mut [T], r: &[T], beta: T, omega: T, v: &[T]) {
    p.par_iter_mut()
        .zip(r.par_iter().zip(v.par_iter()))
        .for_each(|(pi, (&ri, &vi))| {
            *pi = ri + beta * (*pi - omega * vi);
        });
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn hadamard<T: Real>(out: &mut [T], a: &[T], b: &[T]) {
    out.par_iter_mut()
        .zip(a.par_iter().zip(b.par_iter()))
        .for_each(|(o, (&x, &y))| *o = x * y);
}

/// Solve `A x = b` with `x0 = 0`, Jacobi preconditioner `inv_diag`, and a
/// relative 2-norm stopping tolerance.
pub fn bicgstab<T, A>(
    apply: A,
    inv_diag: &[T],
    b: &[T],
    tol_rel: T,
    max_iters: usize,
) -> (Vec<T>, LinearStats<T>)
where
    T: Real,
    A: Fn(&[T], &mut [T]),
{
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let bnorm = reduce::norm2(b);
    if bnorm == T::zero() {
        return (
            x,
            LinearStats {
                iterations: 0,
                converged: true,
                residual: T::zero(),
            },
        );
    }
    let threshold = tol_rel * bnorm;
    let tiny = real::<T>(1e-300).max(T::min_positive_value());

    let mut r = b.to_vec();
    // A generic deterministic shadow vector: rhat = b breaks down exactly on
    // the bordered systems here (the border swaps the constant and beta
    // subspaces), so decorrelate it with a fixed integer-hash modulation.
    let mut rhat: Vec<T> = b
        .iter()
        .enumerate()
        .map(|(i, &bi)| {
            let h = splitmix(i as u64);
            let w = real::<T>(0.5 + (h >> 11) as f64 / (1u64 << 53) as f64);
            bi * w + real::<T>((h & 0xffff) as f64 / 65536.0 - 0.5) * bnorm
                / real::<T>(n as f64)
        })
        .collect();
    let mut p = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut phat = vec![T::zero(); n];
    let mut shat = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];

    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut res = bnorm;

    for it in 1..=max_iters {
        let mut rho1 = reduce::dot(&rhat, &r);
        if rho1.abs() < tiny {
            // Breakdown: restart the shadow residual on a remodulated copy
            // of the current one.
            let rnorm = reduce::norm2(&r);
            rhat.iter_mut().zip(r.iter()).enumerate().for_each(|(i, (rh, &ri))| {
                let h = splitmix((i as u64) ^ 0xabcdef);
                let w = real::<T>(0.5 + (h >> 11) as f64 / (1u64 << 53) as f64);
                *rh = ri * w
                    + real::<T>((h & 0xffff) as f64 / 65536.0 - 0.5) * rnorm
                        / real::<T>(n as f64);
            });
            rho1 = reduce::dot(&rhat, &r);
            if rho1.abs() < tiny {
                return (
                    x,
                    LinearStats {
                        iterations: it,
                        converged: res <= threshold,
                        residual: res,
                    },
                );
            }
            rho = rho1;
            omega = T::one();
            alpha = T::one();
            p.par_iter_mut().for_each(|z| *z = T::zero());
            v.par_iter_mut().for_each(|z| *z = T::zero());
        }
        let beta = (rho1 / rho) * (alpha / omega);
        update_p(&mut p, &r, beta, omega, &v);
        hadamard(&mut phat, inv_diag, &p);
        apply(&phat, &mut v);
        let denom = reduce::dot(&rhat, &v);
        if denom.abs() < tiny {
            return (
                x,
                LinearStats {
                    iterations: it,
                    converged: res <= threshold,
                    residual: res,
                },
            );
        }
        alpha = rho1 / denom;
        // s lives in r
        scaled_add(&mut r, -alpha, &v);
        res = reduce::norm2(&r);
        if res <= threshold {
            scaled_add(&mut x, alpha, &phat);
            return (
                x,
                LinearStats {
                    iterations: it,
                    converged: true,
                    residual: res,
                },
            );
        }
        hadamard(&mut shat, inv_diag, &r);
        apply(&shat, &mut t);
        let tt = reduce::dot(&t, &t);
        if tt < tiny {
            scaled_add(&mut x, alpha, &phat);
            res = reduce::norm2(&r);
            return (
                x,
                LinearStats {
                    iterations: it,
                    converged: res <= threshold,
                    residual: res,
                },
            );
        }
        omega = reduce::dot(&t, &r) / tt;
        scaled_add(&mut x, alpha, &phat);
        scaled_add(&mut x, omega, &shat);
        scaled_add(&mut r, -omega, &t);
        res = reduce::norm2(&r);
        if res <= threshold {
            return (
                x,
                LinearStats {
                    iterations: it,
                    converged: true,
                    residual: res,
                },
            );
        }
        rho = rho1;
    }
    (
        x,
        LinearStats {
            iterations: max_iters,
            converged: false,
            residual: res,
        },
    )
}
