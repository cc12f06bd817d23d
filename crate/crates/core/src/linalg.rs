//! Dense linear algebra for the tiny Hermitian matrices that live at each
//! grid site (complex dimension <= 4) plus a values-only real symmetric
//! eigensolver for the 2n x 2n real Hessian.

use num_complex::Complex;

use crate::{real, MathError, Real};

/// Largest complex dimension handled sitewise.
pub const MAX_DIM: usize = 4;

/// Hermitian matrix of runtime dimension `n <= 4`, stored densely.
///
/// Constructors keep the Hermitian symmetry exact: the upper triangle is the
/// source of truth and the lower triangle mirrors its conjugate.
#[derive(Clone, Copy, Debug)]
pub struct HermMat<T> {
    n: usize,
    e: [[Complex<T>; MAX_DIM]; MAX_DIM],
}

impl<T: Real> HermMat<T> {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_DIM);
        HermMat {
            n,
            e: [[Complex::new(T::zero(), T::zero()); MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.e[i][i] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn diag(entries: &[T]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &d) in entries.iter().enumerate() {
            m.e[i][i] = Complex::new(d, T::zero());
        }
        m
    }

    /// Build from a full row-major entry table, validating Hermitian symmetry
    /// to relative 1e-14.
    pub fn from_entries(n: usize, rows: &[Vec<Complex<T>>]) -> Result<Self, MathError> {
        assert!(n >= 1 && n <= MAX_DIM && rows.len() == n);
        let mut scale = T::zero();
        for r in rows {
            for v in r {
                scale = scale.max(v.re.abs()).max(v.im.abs());
            }
        }
        let tol = real::<T>(1e-14) * scale.max(T::one());
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let a = rows[i][j];
                let b = rows[j][i];
                if (a.re - b.re).abs() > tol || (a.im + b.im).abs() > tol {
                    return Err(MathError::NotHermitian { i, j });
                }
                if i == j {
                    m.e[i][i] = Complex::new(a.re, T::zero());
                } else {
                    m.set_pair(i, j, a);
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.e[i][j]
    }

    /// Set entry (i, j) with i < j and mirror the conjugate into (j, i).
    #[inline]
    pub fn set_pair(&mut self, i: usize, j: usize, v: Complex<T>) {
        debug_assert!(i < j);
        self.e[i][j] = v;
        self.e[j][i] = v.conj();
    }

    #[inline]
    pub fn set_diag(&mut self, i: usize, v: T) {
        self.e[i][i] = Complex::new(v, T::zero());
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.e[i][j] = out.e[i][j] + other.e[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.e[i][j] = out.e[i][j] * s;
            }
        }
        out
    }

    pub fn trace(&self) -> T {
        let mut t = T::zero();
        for i in 0..self.n {
            t += self.e[i][i].re;
        }
        t
    }

    pub fn max_abs_entry(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.e[i][j].norm());
            }
        }
        m
    }

    /// v^H A v, real for Hermitian A.
    pub fn quad_form(&self, v: &[Complex<T>]) -> T {
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..self.n {
            for j in 0..self.n {
                acc = acc + v[i].conj() * self.e[i][j] * v[j];
            }
        }
        acc.re
    }

    /// Largest |eigenvalue| (spectral norm for Hermitian input).
    pub fn spectral_norm(&self) -> T {
        let (vals, _) = eig_hermitian(self);
        let mut m = T::zero();
        for i in 0..self.n {
            m = m.max(vals[i].abs());
        }
        m
    }

    /// Cholesky factor L with A = L L^H. Fails on non positive definite input.
    pub fn cholesky(&self) -> Result<[[Complex<T>; MAX_DIM]; MAX_DIM], MathError> {
        let n = self.n;
        let zero = Complex::new(T::zero(), T::zero());
        let mut l = [[zero; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.e[i][j];
                for k in 0..j {
                    s = s - l[i][k] * l[j][k].conj();
                }
                if i == j {
                    if s.re <= T::zero() {
                        return Err(MathError::NotPositiveDefinite { index: i });
                    }
                    l[i][i] = Complex::new(s.re.sqrt(), T::zero());
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Ok(l)
    }

    pub fn determinant(&self) -> T {
        // Expand via Cholesky when positive definite is not guaranteed: fall
        // back to an LU-free cofactor expansion, exact for n <= 4.
        det_complex(self.n, &self.e).re
    }
}

fn det_complex<T: Real>(n: usize, a: &[[Complex<T>; MAX_DIM]; MAX_DIM]) -> Complex<T> {
    match n {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        4 => {
            let mut acc = Complex::new(T::zero(), T::zero());
            for col in 0..4 {
                let mut minor = [[Complex::new(T::zero(), T::zero()); MAX_DIM]; MAX_DIM];
                for (ri, row) in a.iter().enumerate().skip(1) {
                    let mut cj = 0;
                    for (ci, &v) in row.iter().enumerate().take(4) {
                        if ci != col {
                            minor[ri - 1][cj] = v;
                            cj += 1;
                        }
                    }
                }
                let term = a[0][col] * det_complex(3, &minor);
                if col % 2 == 0 {
                    acc = acc + term;
                } else {
                    acc = acc - term;
                }
            }
            acc
        }
        _ => unreachable!(),
    }
}

/// Unitary eigendecomposition of a Hermitian matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues sorted descending and the matching eigenvectors as
/// columns of the returned table.
pub fn eig_hermitian<T: Real>(
    a: &HermMat<T>,
) -> ([T; MAX_DIM], [[Complex<T>; MAX_DIM]; MAX_DIM]) {
    let n = a.n;
    let zero = Complex::new(T::zero(), T::zero());
    let mut m = a.e;
    let mut v = [[zero; MAX_DIM]; MAX_DIM];
    for (i, row) in v.iter_mut().enumerate().take(n) {
        row[i] = Complex::new(T::one(), T::zero());
    }

    let scale = a.max_abs_entry().max(T::min_positive_value());
    let tol = real::<T>(1e-15) * scale;

    for _sweep in 0..40 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[p][q].norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                let h = apq.norm();
                if h <= tol * real::<T>(1e-2) {
                    continue;
                }
                // Phase factor pulling the pivot onto the real axis, then a
                // real Jacobi rotation on the 2x2 block.
                let w = apq.conj() / h;
                let app = m[p][p].re;
                let aqq = m[q][q].re;
                let tau = (aqq - app) / (h + h);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    T::one() / (tau - (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // Effective 2x2 unitary J: J[p][p]=c, J[p][q]=s,
                // J[q][p]=-w*s, J[q][q]=w*c applied as A <- J^H A J.
                let jpp = Complex::new(c, T::zero());
                let jpq = Complex::new(s, T::zero());
                let jqp = w * (-s);
                let jqq = w * c;
                for r in 0..n {
                    let arp = m[r][p];
                    let arq = m[r][q];
                    m[r][p] = arp * jpp + arq * jqp;
                    m[r][q] = arp * jpq + arq * jqq;
                }
                for cidx in 0..n {
                    let apc = m[p][cidx];
                    let aqc = m[q][cidx];
                    m[p][cidx] = jpp.conj() * apc + jqp.conj() * aqc;
                    m[q][cidx] = jpq.conj() * apc + jqq.conj() * aqc;
                }
                m[p][q] = zero;
                m[q][p] = zero;
                m[p][p] = Complex::new(m[p][p].re, T::zero());
                m[q][q] = Complex::new(m[q][q].re, T::zero());
                for r in 0..n {
                    let vrp = v[r][p];
                    let vrq = v[r][q];
                    v[r][p] = vrp * jpp + vrq * jqp;
                    v[r][q] = vrp * jpq + vrq * jqq;
                }
            }
        }
    }

    let mut vals = [T::zero(); MAX_DIM];
    for i in 0..n {
        vals[i] = m[i][i].re;
    }
    // Sort descending, permuting eigenvector columns along.
    for i in 0..n {
        let mut best = i;
        for j in (i + 1)..n {
            if vals[j] > vals[best] {
                best = j;
            }
        }
        if best != i {
            vals.swap(i, best);
            for row in v.iter_mut().take(n) {
                row.swap(i, best);
            }
        }
    }
    (vals, v)
}

/// Values-only eigenvalues of a real symmetric matrix of dimension <= 8,
/// sorted descending. Used for the real Hessian monitor.
pub fn eig_symmetric_values<T: Real>(n: usize, a: &[[T; 8]; 8]) -> [T; 8] {
    let mut m = *a;
    let mut scale = T::zero();
    for row in m.iter().take(n) {
        for &x in row.iter().take(n) {
            scale = scale.max(x.abs());
        }
    }
    let tol = real::<T>(1e-15) * scale.max(T::min_positive_value());
    for _sweep in 0..60 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[p][q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() <= tol * real::<T>(1e-2) {
                    continue;
                }
                let tau = (m[q][q] - m[p][p]) / (apq + apq);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    T::one() / (tau - (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = m[r][p];
                    let arq = m[r][q];
                    m[r][p] = c * arp - s * arq;
                    m[r][q] = s * arp + c * arq;
                }
                for cc in 0..n {
                    let apc = m[p][cc];
                    let aqc = m[q][cc];
                    m[p][cc] = c * apc - s * aqc;
                    m[q][cc] = s * apc + c * aqc;
                }
                m[p][q] = T::zero();
                m[q][p] = T::zero();
            }
        }
    }
    let mut vals = [T::zero(); 8];
    for i in 0..n {
        vals[i] = m[i][i];
    }
    vals[..n].sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Solve L x = b for lower-triangular L (forward substitution).
pub fn solve_lower<T: Real>(
    n: usize,
    l: &[[Complex<T>; MAX_DIM]; MAX_DIM],
    b: &[Complex<T>],
) -> [Complex<T>; MAX_DIM] {
    let mut x = [Complex::new(T::zero(), T::zero()); MAX_DIM];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i][k] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Solve L^H x = b for lower-triangular L (backward substitution).
pub fn solve_lower_adjoint<T: Real>(
    n: usize,
    l: &[[Complex<T>; MAX_DIM]; MAX_DIM],
    b: &[Complex<T>],
) -> [Complex<T>; MAX_DIM] {
    let mut x = [Complex::new(T::zero(), T::zero()); MAX_DIM];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s = s - l[k][i].conj() * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn herm2(a: f64, d: f64, re: f64, im: f64) -> HermMat<f64> {
        let mut m = HermMat::zeros(2);
        m.set_diag(0, a);
        m.set_diag(1, d);
        m.set_pair(0, 1, Complex64::new(re, im));
        m
    }

    #[test]
    fn eig_2x2_known() {
        // [[2,1],[1,2]] -> eigenvalues 3, 1
        let m = herm2(2.0, 2.0, 1.0, 0.0);
        let (vals, vecs) = eig_hermitian(&m);
        assert!((vals[0] - 3.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        // Residual check A v = lambda v
        for k in 0..2 {
            for i in 0..2 {
                let mut av = Complex64::new(0.0, 0.0);
                for j in 0..2 {
                    av += m.get(i, j) * vecs[j][k];
                }
                let r = av - vecs[i][k] * vals[k];
                assert!(r.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn eig_complex_offdiag() {
        // [[1, i],[-i, 1]] has eigenvalues 2 and 0.
        let m = herm2(1.0, 1.0, 0.0, 1.0);
        let (vals, _) = eig_hermitian(&m);
        assert!((vals[0] - 2.0).abs() < 1e-14);
        assert!(vals[1].abs() < 1e-14);
    }

    #[test]
    fn eig_matches_char_poly_oracle() {
        // Characteristic polynomial oracle: det(A - lambda I) ~ 0 at each
        // computed eigenvalue, for pseudo-random Hermitian matrices n <= 3.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        for n in 1..=3usize {
            for _case in 0..200 {
                let mut m = HermMat::<f64>::zeros(n);
                for i in 0..n {
                    m.set_diag(i, 3.0 * rng());
                    for j in (i + 1)..n {
                        m.set_pair(i, j, Complex64::new(rng(), rng()));
                    }
                }
                let (vals, vecs) = eig_hermitian(&m);
                let scale = m.max_abs_entry().max(1.0);
                for k in 0..n {
                    let mut shifted = m;
                    for i in 0..n {
                        shifted.set_diag(i, m.get(i, i).re - vals[k]);
                    }
                    let d = shifted.determinant();
                    assert!(
                        d.abs() < 1e-10 * scale.powi(n as i32),
                        "char poly residual {d} at n={n}"
                    );
                    // Orthonormality
                    for l in 0..n {
                        let mut dotp = Complex64::new(0.0, 0.0);
                        for i in 0..n {
                            dotp += vecs[i][k].conj() * vecs[i][l];
                        }
                        let expect = if k == l { 1.0 } else { 0.0 };
                        assert!((dotp.norm() - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn cholesky_roundtrip() {
        let mut m = HermMat::<f64>::zeros(3);
        m.set_diag(0, 4.0);
        m.set_diag(1, 5.0);
        m.set_diag(2, 6.0);
        m.set_pair(0, 1, Complex64::new(1.0, 0.5));
        m.set_pair(0, 2, Complex64::new(-0.3, 0.2));
        m.set_pair(1, 2, Complex64::new(0.7, -0.1));
        let l = m.cholesky().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..3 {
                    s += l[i][k] * l[j][k].conj();
                }
                let d = s - m.get(i, j);
                assert!(d.norm() < 1e-13);
            }
        }
        assert!(HermMat::<f64>::diag(&[1.0, -0.1]).cholesky().is_err());
    }

    #[test]
    fn symmetric_values_8x8() {
        let mut a = [[0.0f64; 8]; 8];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = (i + 1) as f64;
        }
        a[0][3] = 0.5;
        a[3][0] = 0.5;
        let vals = eig_symmetric_values(6, &a);
        assert!(vals[0] > vals[5]);
        let trace: f64 = (0..6).map(|i| vals[i]).sum();
        assert!((trace - 21.0).abs() < 1e-12);
    }
}
