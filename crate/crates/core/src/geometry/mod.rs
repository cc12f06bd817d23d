//! Discrete flat complex torus: periodic grids over the real coordinates
//! `(x_1, y_1, .., x_n, y_n)`, the second-order central-difference `∂∂̄`
//! operator, assembly of the perturbed form, relative eigenvalues against a
//! constant metric, and the discrete C0/C1/C2 monitor quantities.
//!
//! Frame brackets vanish on the flat model, so `∂∂̄` reduces entirely to the
//! entry formula
//! `(i,j) -> 1/4 [ (d_{x_i x_j} + d_{y_i y_j}) u + i (d_{x_i y_j} - d_{y_i x_j}) u ]`.

pub mod io;

use num_complex::Complex;
use rayon::prelude::*;

use crate::linalg::{self, HermMat, MAX_DIM};
use crate::symfunc::{self, QuotientParams, SpectrumField};
use crate::{real, reduce, FieldError, Real};

/// Periodic grid with `2n` axes of `points` samples each and period `period`
/// per axis; sites are indexed row-major over `(x_1, y_1, .., x_n, y_n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid<T> {
    n: usize,
    points: usize,
    period: T,
    spacing: T,
    strides: [usize; 2 * MAX_DIM],
    site_count: usize,
}

impl<T: Real> TorusGrid<T> {
    pub fn new(n: usize, points: usize, period: T) -> Result<Self, FieldError> {
        if n == 0 || n > MAX_DIM {
            return Err(FieldError::BadDimension { n });
        }
        if points < 4 || points % 2 != 0 {
            return Err(FieldError::BadGridSize { points });
        }
        let axes = 2 * n;
        let mut strides = [0usize; 2 * MAX_DIM];
        let mut acc = 1usize;
        for a in (0..axes).rev() {
            strides[a] = acc;
            acc = acc
                .checked_mul(points)
                .ok_or(FieldError::BadGridSize { points })?;
        }
        Ok(TorusGrid {
            n,
            points,
            period,
            spacing: period / T::from_usize(points).unwrap(),
            strides,
            site_count: acc,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> usize {
        2 * self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn period(&self) -> T {
        self.period
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    #[inline]
    pub fn coords_of(&self, mut idx: usize) -> [usize; 2 * MAX_DIM] {
        let mut c = [0usize; 2 * MAX_DIM];
        for a in 0..self.axes() {
            c[a] = idx / self.strides[a];
            idx %= self.strides[a];
        }
        c
    }

    #[inline]
    pub fn index_of(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Real coordinates of a site (first `2n` entries meaningful).
    #[inline]
    pub fn position(&self, coords: &[usize; 2 * MAX_DIM]) -> [T; 2 * MAX_DIM] {
        let mut p = [T::zero(); 2 * MAX_DIM];
        for a in 0..self.axes() {
            p[a] = self.spacing * T::from_usize(coords[a]).unwrap();
        }
        p
    }

    /// Flat index of the periodic neighbor one step along `axis`.
    #[inline]
    pub fn step_up(&self, idx: usize, coord: usize, axis: usize) -> usize {
        if coord + 1 == self.points {
            idx + self.strides[axis] - self.points * self.strides[axis]
        } else {
            idx + self.strides[axis]
        }
    }

    #[inline]
    pub fn step_down(&self, idx: usize, coord: usize, axis: usize) -> usize {
        if coord == 0 {
            idx + (self.points - 1) * self.strides[axis]
        } else {
            idx - self.strides[axis]
        }
    }
}

/// Real-valued grid function.
#[derive(Clone, Debug)]
pub struct ScalarField<T> {
    grid: TorusGrid<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &TorusGrid<T>) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![T::zero(); grid.site_count()],
        }
    }

    pub fn constant(grid: &TorusGrid<T>, v: T) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![v; grid.site_count()],
        }
    }

    /// Evaluate a closure of the real coordinates at every site.
    pub fn from_fn(grid: &TorusGrid<T>, f: impl Fn(&[T]) -> T + Sync) -> Self {
        let g = *grid;
        let values: Vec<T> = (0..g.site_count())
            .into_par_iter()
            .map(|idx| {
                let c = g.coords_of(idx);
                let pos = g.position(&c);
                f(&pos[..g.axes()])
            })
            .collect();
        ScalarField { grid: g, values }
    }

    pub fn from_values(grid: &TorusGrid<T>, values: Vec<T>) -> Result<Self, FieldError> {
        if values.len() != grid.site_count() {
            return Err(FieldError::ShapeMismatch);
        }
        Ok(ScalarField {
            grid: *grid,
            values,
        })
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn mean(&self) -> T {
        reduce::mean(&self.values)
    }

    pub fn linf(&self) -> T {
        reduce::linf(&self.values)
    }

    pub fn max(&self) -> T {
        reduce::max(&self.values)
    }

    pub fn min(&self) -> T {
        reduce::min(&self.values)
    }

    pub fn remove_mean(&mut self) -> T {
        reduce::remove_mean(&mut self.values)
    }

    pub fn linf_diff(&self, other: &Self) -> T {
        self.values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(&a, &b)| (a - b).abs())
            .reduce(T::zero, |a, b| a.max(b))
    }
}

/// Hermitian-matrix-valued grid function, stored row-major per site.
#[derive(Clone, Debug)]
pub struct HermitianField<T> {
    grid: TorusGrid<T>,
    dim: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> HermitianField<T> {
    pub fn zeros(grid: &TorusGrid<T>) -> Self {
        let n = grid.dim();
        HermitianField {
            grid: *grid,
            dim: n,
            data: vec![Complex::new(T::zero(), T::zero()); grid.site_count() * n * n],
        }
    }

    pub fn constant(grid: &TorusGrid<T>, mat: &HermMat<T>) -> Self {
        assert_eq!(mat.dim(), grid.dim());
        let mut f = Self::zeros(grid);
        for s in 0..grid.site_count() {
            f.set_site(s, mat);
        }
        f
    }

    pub fn from_fn(grid: &TorusGrid<T>, f: impl Fn(&[T]) -> HermMat<T> + Sync) -> Self {
        let g = *grid;
        let n = g.dim();
        let mut out = Self::zeros(grid);
        out.data
            .par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(idx, chunk)| {
                let c = g.coords_of(idx);
                let pos = g.position(&c);
                let m = f(&pos[..g.axes()]);
                for i in 0..n {
                    for j in 0..n {
                        chunk[i * n + j] = m.get(i, j);
                    }
                }
            });
        out
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn site(&self, s: usize) -> HermMat<T> {
        let n = self.dim;
        let base = s * n * n;
        let mut m = HermMat::zeros(n);
        for i in 0..n {
            m.set_diag(i, self.data[base + i * n + i].re);
            for j in (i + 1)..n {
                m.set_pair(i, j, self.data[base + i * n + j]);
            }
        }
        m
    }

    pub fn set_site(&mut self, s: usize, mat: &HermMat<T>) {
        let n = self.dim;
        let base = s * n * n;
        for i in 0..n {
            for j in 0..n {
                self.data[base + i * n + j] = mat.get(i, j);
            }
        }
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    /// Largest Hermitian-symmetry defect over all sites.
    pub fn hermitian_defect(&self) -> T {
        let n = self.dim;
        self.data
            .par_chunks(n * n)
            .map(|chunk| {
                let mut d = T::zero();
                for i in 0..n {
                    d = d.max(chunk[i * n + i].im.abs());
                    for j in (i + 1)..n {
                        let a = chunk[i * n + j];
                        let b = chunk[j * n + i];
                        d = d.max((a.re - b.re).abs()).max((a.im + b.im).abs());
                    }
                }
                d
            })
            .reduce(T::zero, |a, b| a.max(b))
    }

    /// Max over sites of the sitewise spectral norm.
    pub fn spectral_sup(&self) -> T {
        (0..self.grid.site_count())
            .into_par_iter()
            .map(|s| self.site(s).spectral_norm())
            .reduce(T::zero, |a, b| a.max(b))
    }
}

/// Constant positive definite Hermitian reference metric with cached
/// Cholesky data for the relative eigenvalue problem.
#[derive(Clone, Debug)]
pub struct Metric<T> {
    mat: HermMat<T>,
    inv: HermMat<T>,
    linv: [[Complex<T>; MAX_DIM]; MAX_DIM],
    det: T,
    inv_spectral_sup: T,
    identity: bool,
}

impl<T: Real> Metric<T> {
    pub fn new(mat: HermMat<T>) -> Result<Self, FieldError> {
        let n = mat.dim();
        let l = mat.cholesky()?;
        // Invert the lower factor column by column.
        let zero = Complex::new(T::zero(), T::zero());
        let mut linv = [[zero; MAX_DIM]; MAX_DIM];
        for col in 0..n {
            let mut e = [zero; MAX_DIM];
            e[col] = Complex::new(T::one(), T::zero());
            let x = linalg::solve_lower(n, &l, &e);
            for (row, item) in x.iter().enumerate().take(n) {
                linv[row][col] = *item;
            }
        }
        // det(g) = prod diag(L)^2
        let mut det = T::one();
        for (i, li) in l.iter().enumerate().take(n) {
            det = det * li[i].re * li[i].re;
        }
        // inv = L^-H L^-1
        let mut inv = HermMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = zero;
                for k in 0..n {
                    s = s + linv[k][i].conj() * linv[k][j];
                }
                if i == j {
                    inv.set_diag(i, s.re);
                } else {
                    inv.set_pair(i, j, s);
                }
            }
        }
        let identity = {
            let mut id = true;
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { T::one() } else { T::zero() };
                    let v = mat.get(i, j);
                    if v.re != want || v.im != T::zero() {
                        id = false;
                    }
                }
            }
            id
        };
        let inv_spectral_sup = inv.spectral_norm();
        Ok(Metric {
            mat,
            inv,
            linv,
            det,
            inv_spectral_sup,
            identity,
        })
    }

    pub fn identity_metric(n: usize) -> Self {
        Metric::new(HermMat::identity(n)).expect("identity is positive definite")
    }

    pub fn matrix(&self) -> &HermMat<T> {
        &self.mat
    }

    pub fn inverse(&self) -> &HermMat<T> {
        &self.inv
    }

    pub fn determinant(&self) -> T {
        self.det
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// Largest eigenvalue of g^{-1}, used by the flow stability bound.
    pub fn inverse_spectral_sup(&self) -> T {
        self.inv_spectral_sup
    }

    /// Eigenvalues of `a` relative to the metric, sorted descending, plus the
    /// g-orthonormal eigenvectors as columns when `vectors` is requested.
    #[inline]
    pub fn eig_rel(
        &self,
        a: &HermMat<T>,
        vectors: bool,
    ) -> ([T; MAX_DIM], Option<[[Complex<T>; MAX_DIM]; MAX_DIM]>) {
        let n = self.dim();
        let b = if self.identity {
            *a
        } else {
            // B = Linv A Linv^H
            let zero = Complex::new(T::zero(), T::zero());
            let mut tmp = [[zero; MAX_DIM]; MAX_DIM];
            for i in 0..n {
                for j in 0..n {
                    let mut s = zero;
                    for k in 0..n {
                        s = s + self.linv[i][k] * a.get(k, j);
                    }
                    tmp[i][j] = s;
                }
            }
            let mut bm = HermMat::zeros(n);
            for i in 0..n {
                for j in i..n {
                    let mut s = zero;
                    for k in 0..n {
                        s = s + tmp[i][k] * self.linv[j][k].conj();
                    }
                    if i == j {
                        bm.set_diag(i, s.re);
                    } else {
                        bm.set_pair(i, j, s);
                    }
                }
            }
            bm
        };
        let (vals, w) = linalg::eig_hermitian(&b);
        if !vectors {
            return (vals, None);
        }
        if self.identity {
            return (vals, Some(w));
        }
        // Generalized eigenvectors v = L^{-H} w, columns g-orthonormal.
        let zero = Complex::new(T::zero(), T::zero());
        let mut v = [[zero; MAX_DIM]; MAX_DIM];
        for col in 0..n {
            for row in 0..n {
                let mut s = zero;
                for k in 0..n {
                    // (L^{-H})[row][k] = conj(linv[k][row])
                    s = s + self.linv[k][row].conj() * w[k][col];
                }
                v[row][col] = s;
            }
        }
        (vals, Some(v))
    }
}

/// Entry of the discrete `∂∂̄ u` matrix at one site.
#[inline]
pub fn ddbar_site<T: Real>(
    u: &[T],
    grid: &TorusGrid<T>,
    idx: usize,
    coords: &[usize; 2 * MAX_DIM],
) -> HermMat<T> {
    let n = grid.dim();
    let h2 = grid.spacing * grid.spacing;
    let inv_h2 = T::one() / h2;
    let inv_4h2 = inv_h2 * real::<T>(0.25);
    let quarter = real::<T>(0.25);
    let two = real::<T>(2.0);

    let second = |axis: usize| -> T {
        let up = grid.step_up(idx, coords[axis], axis);
        let dn = grid.step_down(idx, coords[axis], axis);
        (u[up] + u[dn] - two * u[idx]) * inv_h2
    };
    let mixed = |a: usize, b: usize| -> T {
        let pa = grid.step_up(idx, coords[a], a);
        let ma = grid.step_down(idx, coords[a], a);
        let pp = grid.step_up(pa, coords[b], b);
        let pm = grid.step_down(pa, coords[b], b);
        let mp = grid.step_up(ma, coords[b], b);
        let mm = grid.step_down(ma, coords[b], b);
        (u[pp] - u[pm] - u[mp] + u[mm]) * inv_4h2
    };

    let mut out = HermMat::zeros(n);
    for i in 0..n {
        let xi = 2 * i;
        let yi = 2 * i + 1;
        out.set_diag(i, quarter * (second(xi) + second(yi)));
        for j in (i + 1)..n {
            let xj = 2 * j;
            let yj = 2 * j + 1;
            let re = quarter * (mixed(xi, xj) + mixed(yi, yj));
            let im = quarter * (mixed(xi, yj) - mixed(yi, xj));
            out.set_pair(i, j, Complex::new(re, im));
        }
    }
    out
}

/// Discrete `∂∂̄` of a scalar field; Hermitian by construction at every site.
pub fn ddbar<T: Real>(u: &ScalarField<T>) -> HermitianField<T> {
    let grid = *u.grid();
    let n = grid.dim();
    let uv = u.values();
    let mut out = HermitianField::zeros(&grid);
    out.data
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(idx, chunk)| {
            let coords = grid.coords_of(idx);
            let m = ddbar_site(uv, &grid, idx, &coords);
            for i in 0..n {
                for j in 0..n {
                    chunk[i * n + j] = m.get(i, j);
                }
            }
        });
    out
}

/// Matrix field of the perturbed form: `chi + ∂∂̄ u` in the fixed frame.
pub fn assemble_gtilde<T: Real>(
    chi: &HermitianField<T>,
    u: &ScalarField<T>,
) -> Result<HermitianField<T>, FieldError> {
    if chi.grid() != u.grid() {
        return Err(FieldError::ShapeMismatch);
    }
    let grid = *u.grid();
    let n = grid.dim();
    let uv = u.values();
    let mut out = chi.clone();
    out.data
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(idx, chunk)| {
            let coords = grid.coords_of(idx);
            let m = ddbar_site(uv, &grid, idx, &coords);
            for i in 0..n {
                for j in 0..n {
                    chunk[i * n + j] = chunk[i * n + j] + m.get(i, j);
                }
            }
        });
    Ok(out)
}

/// Relative eigenvalues of a Hermitian field against the metric, sorted
/// descending per site.
pub fn eigen_rel<T: Real>(a: &HermitianField<T>, g: &Metric<T>) -> SpectrumField<T> {
    let n = a.dim();
    let sites = a.grid().site_count();
    let mut out = SpectrumField::zeros(n, sites);
    out.flat_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(s, lam)| {
            let (vals, _) = g.eig_rel(&a.site(s), false);
            lam.copy_from_slice(&vals[..n]);
        });
    out
}

/// Sitewise quotient `C(n,m) sigma_n(lambda) / sigma_{n-m}(lambda)` of the
/// relative eigenvalues; equals the right hand side exactly at a solution.
pub fn quotient_ratio<T: Real>(
    gtilde: &HermitianField<T>,
    g: &Metric<T>,
    p: QuotientParams,
) -> Result<ScalarField<T>, FieldError> {
    let grid = *gtilde.grid();
    let n = grid.dim();
    let c = p.binomial::<T>();
    let mut values = vec![T::zero(); grid.site_count()];
    let bad = std::sync::atomic::AtomicUsize::new(usize::MAX);
    values.par_iter_mut().enumerate().for_each(|(s, out)| {
        let (vals, _) = g.eig_rel(&gtilde.site(s), false);
        if vals[n - 1] <= T::zero() {
            bad.fetch_min(s, std::sync::atomic::Ordering::Relaxed);
            return;
        }
        let f = symfunc::quotient_unchecked(&vals[..n], p);
        let m = T::from_usize(p.m()).unwrap();
        *out = c * f.powf(m);
    });
    let bad = bad.load(std::sync::atomic::Ordering::Relaxed);
    if bad != usize::MAX {
        return Err(FieldError::InadmissibleSite {
            site: bad,
            coords: grid.coords_of(bad)[..grid.axes()].to_vec(),
        });
    }
    ScalarField::from_values(&grid, values)
}

/// Discrete monitor quantities for the a priori bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimates<T> {
    /// sup - inf of `u - ubar`.
    pub osc: T,
    /// Sitewise sup of `|∂u|_g`.
    pub grad_sup: T,
    /// Max over sites of the largest eigenvalue of the real Hessian.
    pub lambda1_sup: T,
    /// Grid quadrature of `|u - ubar|` against the metric volume element.
    pub l1_gap: T,
}

/// Compute the C0/C1/C2 monitor quantities.
///
/// Gradient convention: with the unitary frame `e_i = (d/dx_i - i d/dy_i)/sqrt(2)`
/// the complex gradient component is `w_i = (u_{x_i} - i u_{y_i})/sqrt(2)` and
/// `|∂u|_g^2 = w^H g^{-1} w`, so `u = eps cos(x_1)` has `sup |∂u| = eps/sqrt(2)`.
/// The probes and their tests both rely on this sqrt(2) normalization.
pub fn estimate_quantities<T: Real>(
    u: &ScalarField<T>,
    ubar: &ScalarField<T>,
    g: &Metric<T>,
) -> Result<Estimates<T>, FieldError> {
    if u.grid() != ubar.grid() {
        return Err(FieldError::ShapeMismatch);
    }
    let grid = *u.grid();
    let n = grid.dim();
    let axes = grid.axes();
    let uv = u.values();

    let diff: Vec<T> = uv
        .par_iter()
        .zip(ubar.values().par_iter())
        .map(|(&a, &b)| a - b)
        .collect();
    let osc = reduce::max(&diff) - reduce::min(&diff);

    // omega^n volume in real coordinates: n! 2^n det(g) h^{2n}.
    let mut vol = g.determinant() * grid.spacing().powi(axes as i32);
    for k in 1..=n {
        vol = vol * real::<T>(2.0) * T::from_usize(k).unwrap();
    }
    let abs_diff: Vec<T> = diff.par_iter().map(|&d| d.abs()).collect();
    let l1_gap = reduce::sum(&abs_diff) * vol;

    let two_h = grid.spacing() * real::<T>(2.0);
    let inv_h2 = T::one() / (grid.spacing() * grid.spacing());
    let inv_4h2 = inv_h2 * real::<T>(0.25);
    let sqrt_half = real::<T>(0.5).sqrt();

    let (grad_sup, lambda1_sup) = (0..grid.site_count())
        .into_par_iter()
        .map(|idx| {
            let coords = grid.coords_of(idx);
            let first = |axis: usize| -> T {
                let up = grid.step_up(idx, coords[axis], axis);
                let dn = grid.step_down(idx, coords[axis], axis);
                (uv[up] - uv[dn]) / two_h
            };
            let mut w = [Complex::new(T::zero(), T::zero()); MAX_DIM];
            for i in 0..n {
                w[i] = Complex::new(first(2 * i) * sqrt_half, -first(2 * i + 1) * sqrt_half);
            }
            let grad2 = g.inverse().quad_form(&w[..n]);

            // Real Hessian, 2n x 2n.
            let mut hess = [[T::zero(); 8]; 8];
            for a in 0..axes {
                let up = grid.step_up(idx, coords[a], a);
                let dn = grid.step_down(idx, coords[a], a);
                hess[a][a] = (uv[up] + uv[dn] - real::<T>(2.0) * uv[idx]) * inv_h2;
                for b in (a + 1)..axes {
                    let pa = grid.step_up(idx, coords[a], a);
                    let ma = grid.step_down(idx, coords[a], a);
                    let pp = grid.step_up(pa, coords[b], b);
                    let pm = grid.step_down(pa, coords[b], b);
                    let mp = grid.step_up(ma, coords[b], b);
                    let mm = grid.step_down(ma, coords[b], b);
                    let v = (uv[pp] - uv[pm] - uv[mp] + uv[mm]) * inv_4h2;
                    hess[a][b] = v;
                    hess[b][a] = v;
                }
            }
            let lam1 = linalg::eig_symmetric_values(axes, &hess)[0];
            (grad2, lam1)
        })
        .reduce(
            || (T::zero(), T::neg_infinity()),
            |a, b| (a.0.max(b.0), a.1.max(b.1)),
        );

    Ok(Estimates {
        osc,
        grad_sup: grad_sup.max(T::zero()).sqrt(),
        lambda1_sup,
        l1_gap,
    })
}
