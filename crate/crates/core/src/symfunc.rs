//! Elementary symmetric polynomial calculus on eigenvalue vectors and the
//! quotient operator `f(lambda) = (sigma_n / sigma_{n-m})^{1/m}` together
//! with its gradient and the second-derivative quadratic form of the inverse
//! operator `G = -sigma_m(1/lambda)`.
//!
//! Conventions: `sigma_0 = 1`, `sigma_k = 0` for `k < 0` and for `k` larger
//! than the number of non-excluded entries. Cone membership always uses
//! strict floating-point comparison with no epsilon; callers needing a margin
//! shift their inputs.

use num_complex::Complex;

use crate::linalg::{HermMat, MAX_DIM};
use crate::{real, MathError, Real};

/// Quotient parameters: complex dimension `n` and quotient order `m` with
/// `1 <= m <= n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuotientParams {
    n: usize,
    m: usize,
}

impl QuotientParams {
    pub fn new(n: usize, m: usize) -> Result<Self, MathError> {
        if n == 0 || n > MAX_DIM || m == 0 || m > n {
            return Err(MathError::BadQuotientOrder { m, n });
        }
        Ok(QuotientParams { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// The binomial factor `C(n, m)` relating the quotient level `h` to the
    /// right hand side `psi = C(n, m) h^m`.
    pub fn binomial<T: Real>(&self) -> T {
        T::from_u64(binomial(self.n as u64, self.m as u64)).unwrap()
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// An eigenvalue vector; the argument of all symmetric-function machinery.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    entries: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    pub fn new(entries: Vec<T>) -> Self {
        assert!(!entries.is_empty() && entries.len() <= MAX_DIM);
        Spectrum { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.entries
    }

    /// Strict membership in the open positive cone.
    pub fn in_positive_cone(&self) -> bool {
        in_cone(&self.entries)
    }

    pub fn norm(&self) -> T {
        norm(&self.entries)
    }
}

/// Flat storage of one spectrum per grid site.
#[derive(Clone, Debug)]
pub struct SpectrumField<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SpectrumField<T> {
    pub fn zeros(dim: usize, sites: usize) -> Self {
        SpectrumField {
            dim,
            data: vec![T::zero(); dim * sites],
        }
    }

    pub fn from_flat(dim: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len() % dim, 0);
        SpectrumField { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn site_count(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn site(&self, s: usize) -> &[T] {
        &self.data[s * self.dim..(s + 1) * self.dim]
    }

    pub fn site_mut(&mut self, s: usize) -> &mut [T] {
        &mut self.data[s * self.dim..(s + 1) * self.dim]
    }

    pub fn flat(&self) -> &[T] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

#[inline]
pub fn in_cone<T: Real>(lambda: &[T]) -> bool {
    lambda.iter().all(|&x| x > T::zero())
}

#[inline]
pub fn norm<T: Real>(lambda: &[T]) -> T {
    lambda
        .iter()
        .fold(T::zero(), |acc, &x| acc + x * x)
        .sqrt()
}

fn check_in_cone<T: Real>(lambda: &[T]) -> Result<(), MathError> {
    for (index, &x) in lambda.iter().enumerate() {
        if !(x > T::zero()) {
            return Err(MathError::OutsideCone { index });
        }
    }
    Ok(())
}

/// All of `sigma_0 .. sigma_j` for the entries of `lambda` with `skip`
/// optionally removed, by the stable product recurrence
/// `e_k(x_1..x_j) = e_k(x_1..x_{j-1}) + x_j e_{k-1}(x_1..x_{j-1})`.
#[inline]
fn sigma_table<T: Real>(lambda: &[T], skip: Option<usize>) -> [T; MAX_DIM + 1] {
    let mut e = [T::zero(); MAX_DIM + 1];
    e[0] = T::one();
    let mut used = 0usize;
    for (i, &x) in lambda.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        used += 1;
        let top = used.min(MAX_DIM);
        for k in (1..=top).rev() {
            e[k] = e[k] + x * e[k - 1];
        }
    }
    e
}

/// k-th elementary symmetric polynomial of `lambda` with the `excluded`
/// entries zeroed out, i.e. `sigma_{k; i_1..i_s}`.
///
/// `k < 0` returns 0, `k = 0` returns 1, and `k` above the number of
/// non-excluded entries returns 0.
pub fn sigma<T: Real>(lambda: &[T], k: isize, excluded: &[usize]) -> Result<T, MathError> {
    let n = lambda.len();
    let mut mask = [false; MAX_DIM];
    for &idx in excluded {
        if idx >= n {
            return Err(MathError::IndexOutOfRange { index: idx, dim: n });
        }
        if mask[idx] {
            return Err(MathError::DuplicateIndex { index: idx });
        }
        mask[idx] = true;
    }
    if k < 0 {
        return Ok(T::zero());
    }
    let k = k as usize;
    let kept = n - excluded.len();
    if k > kept {
        return Ok(T::zero());
    }
    let mut e = [T::zero(); MAX_DIM + 1];
    e[0] = T::one();
    for (i, &x) in lambda.iter().enumerate() {
        if mask[i] {
            continue;
        }
        for kk in (1..=k.min(MAX_DIM)).rev() {
            e[kk] = e[kk] + x * e[kk - 1];
        }
    }
    Ok(e[k])
}

/// The quotient operator `f(lambda) = (sigma_n / sigma_{n-m})^{1/m}` on the
/// closed positive cone. Interior values are positive; the boundary value is
/// exactly 0; points outside the closure are a domain error.
pub fn quotient<T: Real>(lambda: &[T], p: QuotientParams) -> Result<T, MathError> {
    if lambda.len() != p.n {
        return Err(MathError::DimensionMismatch {
            len: lambda.len(),
            expected: p.n,
        });
    }
    for (index, &x) in lambda.iter().enumerate() {
        if x < T::zero() {
            return Err(MathError::OutsideClosure { index });
        }
    }
    if lambda.iter().any(|&x| x == T::zero()) {
        return Ok(T::zero());
    }
    Ok(quotient_unchecked(lambda, p))
}

/// Interior fast path without domain checks; callers guarantee
/// `lambda` strictly positive of length `p.n`.
#[inline]
pub fn quotient_unchecked<T: Real>(lambda: &[T], p: QuotientParams) -> T {
    let e = sigma_table(lambda, None);
    let ratio = e[p.n] / e[p.n - p.m];
    if p.m == 1 {
        ratio
    } else {
        ratio.powf(T::one() / T::from_usize(p.m).unwrap())
    }
}

/// Gradient of the quotient operator, strictly positive on the open cone:
/// `f_i = (f/m) (sigma_{n-1;i}/sigma_n - sigma_{n-m-1;i}/sigma_{n-m})`.
pub fn quotient_grad<T: Real>(lambda: &[T], p: QuotientParams) -> Result<Vec<T>, MathError> {
    if lambda.len() != p.n {
        return Err(MathError::DimensionMismatch {
            len: lambda.len(),
            expected: p.n,
        });
    }
    check_in_cone(lambda)?;
    let mut out = vec![T::zero(); p.n];
    quotient_grad_into(lambda, p, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn quotient_grad_into<T: Real>(lambda: &[T], p: QuotientParams, out: &mut [T]) {
    let f = quotient_unchecked(lambda, p);
    let e = sigma_table(lambda, None);
    let m_inv = T::one() / T::from_usize(p.m).unwrap();
    for i in 0..p.n {
        let ei = sigma_table(lambda, Some(i));
        let mut c = ei[p.n - 1] / e[p.n];
        if p.m < p.n {
            c = c - ei[p.n - p.m - 1] / e[p.n - p.m];
        }
        out[i] = f * m_inv * c;
    }
}

/// Diagonal derivative coefficients of `log(sigma_n/sigma_{n-m})`:
/// `c_i = sigma_{n-1;i}/sigma_n - sigma_{n-m-1;i}/sigma_{n-m} = m f_i / f`.
/// These are the eigenframe coefficients of the elliptic linearization.
#[inline]
pub fn log_quotient_coeffs<T: Real>(lambda: &[T], p: QuotientParams, out: &mut [T]) {
    let e = sigma_table(lambda, None);
    for i in 0..p.n {
        let ei = sigma_table(lambda, Some(i));
        let mut c = ei[p.n - 1] / e[p.n];
        if p.m < p.n {
            c = c - ei[p.n - p.m - 1] / e[p.n - p.m];
        }
        out[i] = c;
    }
}

/// The inverse Hessian operator `G(lambda) = -sigma_m(1/lambda_1, ..)`.
pub fn inverse_operator<T: Real>(lambda: &[T], p: QuotientParams) -> Result<T, MathError> {
    if lambda.len() != p.n {
        return Err(MathError::DimensionMismatch {
            len: lambda.len(),
            expected: p.n,
        });
    }
    check_in_cone(lambda)?;
    let inv: Vec<T> = lambda.iter().map(|&x| T::one() / x).collect();
    Ok(-sigma(&inv, p.m as isize, &[]).unwrap())
}

/// Diagonal derivative entries of `G` in an eigenframe:
/// `G^{ii} = sigma_{m-1;i}(1/lambda) / lambda_i^2`.
pub fn inverse_operator_diag<T: Real>(
    lambda: &[T],
    p: QuotientParams,
    out: &mut [T],
) -> Result<(), MathError> {
    if lambda.len() != p.n {
        return Err(MathError::DimensionMismatch {
            len: lambda.len(),
            expected: p.n,
        });
    }
    check_in_cone(lambda)?;
    let mut inv = [T::zero(); MAX_DIM];
    for i in 0..p.n {
        inv[i] = T::one() / lambda[i];
    }
    let inv = &inv[..p.n];
    for i in 0..p.n {
        let ei = sigma_table(inv, Some(i));
        out[i] = ei[p.m - 1] * inv[i] * inv[i];
    }
    Ok(())
}

/// Coordinate limit `lim_{t->inf} f(lambda + t e_i)`.
///
/// Finite and equal to `(sigma_{n-1;i}/sigma_{n-m-1;i})^{1/m}` for `m < n`;
/// the Monge-Ampere case `m = n` is unbounded and returns the infinity
/// sentinel.
pub fn directional_limit<T: Real>(
    lambda: &[T],
    dir: usize,
    p: QuotientParams,
) -> Result<T, MathError> {
    if lambda.len() != p.n {
        return Err(MathError::DimensionMismatch {
            len: lambda.len(),
            expected: p.n,
        });
    }
    if dir >= p.n {
        return Err(MathError::IndexOutOfRange {
            index: dir,
            dim: p.n,
        });
    }
    check_in_cone(lambda)?;
    if p.m == p.n {
        return Ok(T::infinity());
    }
    let e = sigma_table(lambda, Some(dir));
    let ratio = e[p.n - 1] / e[p.n - p.m - 1];
    Ok(if p.m == 1 {
        ratio
    } else {
        ratio.powf(T::one() / T::from_usize(p.m).unwrap())
    })
}

/// Limit of `f` along the ray `t * lambda`. By 1-homogeneity this is
/// unbounded for every interior `lambda`, so the value is always the
/// infinity sentinel; it is exposed separately from [`directional_limit`]
/// because the two limits answer different questions.
pub fn ray_limit<T: Real>(lambda: &[T], p: QuotientParams) -> Result<T, MathError> {
    if lambda.len() != p.n {
        return Err(MathError::DimensionMismatch {
            len: lambda.len(),
            expected: p.n,
        });
    }
    check_in_cone(lambda)?;
    Ok(T::infinity())
}

/// Cached second-derivative data of `G` at a diagonal base point, exposing
/// the quadratic form `-G^{ik,jl} V_{ik} conj(V_{jl})`.
#[derive(Clone, Debug)]
pub struct HessQuadForm<T> {
    params: QuotientParams,
    base: Vec<T>,
    /// tau_i = 1/lambda_i, the inverse spectrum the sigma's act on.
    tau: [T; MAX_DIM],
    /// sigma_{m-1;i}(tau)
    sig_m1: [T; MAX_DIM],
    /// sigma_{m-2;ik}(tau), i != k
    sig_m2: [[T; MAX_DIM]; MAX_DIM],
}

impl<T: Real> HessQuadForm<T> {
    pub fn new(base: &[T], p: QuotientParams) -> Result<Self, MathError> {
        if base.len() != p.n {
            return Err(MathError::DimensionMismatch {
                len: base.len(),
                expected: p.n,
            });
        }
        check_in_cone(base)?;
        let mut tau = [T::zero(); MAX_DIM];
        for i in 0..p.n {
            tau[i] = T::one() / base[i];
        }
        let mut sig_m1 = [T::zero(); MAX_DIM];
        let mut sig_m2 = [[T::zero(); MAX_DIM]; MAX_DIM];
        let tau_s = &tau[..p.n];
        for i in 0..p.n {
            sig_m1[i] = sigma(tau_s, p.m as isize - 1, &[i]).unwrap();
            for k in 0..p.n {
                if k != i {
                    sig_m2[i][k] = sigma(tau_s, p.m as isize - 2, &[i, k]).unwrap();
                }
            }
        }
        Ok(HessQuadForm {
            params: p,
            base: base.to_vec(),
            tau,
            sig_m1,
            sig_m2,
        })
    }

    pub fn base(&self) -> &[T] {
        &self.base
    }

    /// Verify the cached coefficients against recomputation, to relative
    /// 1e-14.
    pub fn caches_consistent(&self) -> bool {
        let p = self.params;
        let tau = &self.tau[..p.n];
        let tol = real::<T>(1e-14);
        for i in 0..p.n {
            let s1 = sigma(tau, p.m as isize - 1, &[i]).unwrap();
            if (s1 - self.sig_m1[i]).abs() > tol * s1.abs().max(T::one()) {
                return false;
            }
            for k in 0..p.n {
                if k == i {
                    continue;
                }
                let s2 = sigma(tau, p.m as isize - 2, &[i, k]).unwrap();
                if (s2 - self.sig_m2[i][k]).abs() > tol * s2.abs().max(T::one()) {
                    return false;
                }
            }
        }
        true
    }

    /// Value of `-G^{ik,jl} V_{ik} conj(V_{jl})` for a Hermitian
    /// perturbation `V`, expanded in the frame diagonalizing the base:
    ///
    /// `sum_{i!=k} sigma_{m-2;ik} tau_i^2 tau_k^2 (V_ii V_kk - |V_ik|^2)
    ///  + 2 sum_{i,k} G^{ii} tau_k |V_ik|^2`.
    ///
    /// Nonnegative for every Hermitian `V` (concavity of `G`).
    pub fn apply(&self, v: &HermMat<T>) -> Result<T, MathError> {
        let p = self.params;
        if v.dim() != p.n {
            return Err(MathError::DimensionMismatch {
                len: v.dim(),
                expected: p.n,
            });
        }
        let two = real::<T>(2.0);
        let mut acc = T::zero();
        for i in 0..p.n {
            let gii = self.sig_m1[i] * self.tau[i] * self.tau[i];
            for k in 0..p.n {
                let vik2 = v.get(i, k).norm_sqr();
                acc += two * gii * self.tau[k] * vik2;
                if k != i {
                    let coupling = v.get(i, i).re * v.get(k, k).re - vik2;
                    acc += self.sig_m2[i][k]
                        * self.tau[i]
                        * self.tau[i]
                        * self.tau[k]
                        * self.tau[k]
                        * coupling;
                }
            }
        }
        Ok(acc)
    }
}

/// Left hand side of the GLZ09 inequality at `tau` in the positive cone:
///
/// `sum_i sigma_{m-1;i}(tau)/tau_i |xi_i|^2
///  + sum_{i!=k} sigma_{m-2;ik}(tau) xi_i conj(xi_k)`,
///
/// bounded below by `|sum_i sigma_{m-1;i} xi_i|^2 / sigma_m >= 0`.
pub fn glz_form<T: Real>(
    tau: &[T],
    xi: &[Complex<T>],
    p: QuotientParams,
) -> Result<T, MathError> {
    if tau.len() != p.n || xi.len() != p.n {
        return Err(MathError::DimensionMismatch {
            len: tau.len().min(xi.len()),
            expected: p.n,
        });
    }
    check_in_cone(tau)?;
    let mut acc = T::zero();
    for i in 0..p.n {
        let s1 = sigma(tau, p.m as isize - 1, &[i]).unwrap();
        acc += s1 / tau[i] * xi[i].norm_sqr();
        for k in 0..p.n {
            if k == i {
                continue;
            }
            let s2 = sigma(tau, p.m as isize - 2, &[i, k]).unwrap();
            acc += s2 * (xi[i] * xi[k].conj()).re;
        }
    }
    Ok(acc)
}
