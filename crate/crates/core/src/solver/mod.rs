//! Solvers for the normalized equation
//! `log( chi_u^n / (chi_u^{n-m} ∧ omega^m) ) = log psi + b`:
//! a damped Newton method with the scalar `b` and the mean constraint solved
//! simultaneously, the continuity path deforming an exactly solvable right
//! hand side into the target, and the parabolic flow whose drift recovers
//! `b`.
//!
//! The solvers normalize `u` to mean zero internally; a constant shift of
//! `u` leaves `∂∂̄ u`, hence the equation and `b`, unchanged, so converting
//! to the sup-zero normalization on output is a pure post-processing step.

pub mod linear;

use rayon::prelude::*;

use crate::geometry::{
    assemble_gtilde, ddbar_site, HermitianField, Metric, ScalarField, TorusGrid,
};
use crate::symfunc::{self, QuotientParams, SpectrumField};
use crate::{real, reduce, FieldError, Real, SolveError};

use self::linear::{bicgstab, LinearStats};

/// Sitewise residual tolerance at which the flow is considered stationary.
const FLOW_TOL: f64 = 1e-8;

/// The fixed data of one equation instance.
#[derive(Clone, Copy)]
pub struct Equation<'a, T> {
    pub chi: &'a HermitianField<T>,
    pub metric: &'a Metric<T>,
    pub params: QuotientParams,
}

impl<'a, T: Real> Equation<'a, T> {
    pub fn new(chi: &'a HermitianField<T>, metric: &'a Metric<T>, params: QuotientParams) -> Self {
        assert_eq!(chi.dim(), params.n());
        assert_eq!(metric.dim(), params.n());
        Equation {
            chi,
            metric,
            params,
        }
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        self.chi.grid()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig<T> {
    pub tol_residual: T,
    pub max_iters: usize,
    /// Backtracking halves the step down to `min_step`.
    pub backtrack_factor: T,
    pub min_step: T,
    pub linear_tol: T,
    pub linear_max_iters: usize,
}

impl<T: Real> Default for NewtonConfig<T> {
    fn default() -> Self {
        NewtonConfig {
            tol_residual: real(1e-10),
            max_iters: 30,
            backtrack_factor: real(0.5),
            min_step: real((2.0f64).powi(-10)),
            linear_tol: real(1e-12),
            linear_max_iters: 1200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome<T> {
    /// Mean-zero solution.
    pub u: ScalarField<T>,
    pub b: T,
    pub iters: usize,
    pub residual_inf: T,
    pub linear_iters: usize,
}

/// One accepted state of the continuity path.
#[derive(Clone, Debug)]
pub struct ContinuityState<T> {
    pub t: T,
    /// Mean-zero increment over the supersolution background.
    pub u: ScalarField<T>,
    pub b: T,
    pub newton_iters: usize,
    pub residual_inf: T,
}

#[derive(Clone, Debug)]
pub struct ContinuityRun<T> {
    pub states: Vec<ContinuityState<T>>,
    /// Quotient of the supersolution background; the path starts there.
    pub psi_tilde: ScalarField<T>,
    /// `max(psi_tilde - psi, 0)` over the grid; positive values mean the
    /// supersolution hypothesis failed and the bound on `b_t` is off the
    /// table (recorded, never fatal).
    pub supersolution_violation: T,
}

impl<T: Real> ContinuityRun<T> {
    pub fn final_state(&self) -> &ContinuityState<T> {
        self.states.last().expect("path has at least the t=0 state")
    }

    /// Compose the final increment with the background `v` and apply the
    /// sup-zero output normalization; `b` is shift-invariant.
    pub fn final_sup_normalized(&self, v: &ScalarField<T>) -> (ScalarField<T>, T) {
        let last = self.final_state();
        let mut out = v.clone();
        out.values_mut()
            .par_iter_mut()
            .zip(last.u.values().par_iter())
            .for_each(|(o, &x)| *o = *o + x);
        let sup = reduce::max(out.values());
        out.values_mut().par_iter_mut().for_each(|x| *x = *x - sup);
        (out, last.b)
    }
}

#[derive(Clone, Debug)]
pub struct FlowState<T> {
    pub time: T,
    pub u: ScalarField<T>,
    pub dt: T,
    /// Mean of the right hand side at the last step; the emerging constant.
    pub drift: T,
}

#[derive(Clone, Debug)]
pub struct FlowRun<T> {
    pub state: FlowState<T>,
    pub steps: usize,
    /// Final sitewise max of `|log_residual(u, drift)|`.
    pub residual_inf: T,
}

/// Relative spectrum of `chi + ∂∂̄ u` at every site (sorted descending) plus
/// the max over sites of the linearization coefficient sum, which drives the
/// flow stability bound. Fails on the first inadmissible site.
fn relative_spectrum<T: Real>(
    eq: &Equation<'_, T>,
    u: &ScalarField<T>,
) -> Result<(SpectrumField<T>, T), SolveError> {
    let grid = *eq.grid();
    let n = grid.dim();
    let uv = u.values();
    let chi = eq.chi;
    let metric = eq.metric;
    let p = eq.params;
    let mut spectra = SpectrumField::zeros(n, grid.site_count());
    let bad = std::sync::atomic::AtomicUsize::new(usize::MAX);
    let coeff_max = spectra
        .flat_mut()
        .par_chunks_mut(n)
        .enumerate()
        .map(|(idx, lam)| {
            let coords = grid.coords_of(idx);
            let m = chi.site(idx).add(&ddbar_site(uv, &grid, idx, &coords));
            let (vals, _) = metric.eig_rel(&m, false);
            if vals[n - 1] <= T::zero() {
                bad.fetch_min(idx, std::sync::atomic::Ordering::Relaxed);
                return T::zero();
            }
            lam.copy_from_slice(&vals[..n]);
            let mut c = [T::zero(); 4];
            symfunc::log_quotient_coeffs(&vals[..n], p, &mut c[..n]);
            c[..n].iter().fold(T::zero(), |a, &x| a + x)
        })
        .reduce(T::zero, |a, b| a.max(b));
    let bad = bad.load(std::sync::atomic::Ordering::Relaxed);
    if bad != usize::MAX {
        return Err(FieldError::InadmissibleSite {
            site: bad,
            coords: grid.coords_of(bad)[..grid.axes()].to_vec(),
        }
        .into());
    }
    Ok((spectra, coeff_max))
}

fn residual_from_spectrum<T: Real>(
    spectra: &SpectrumField<T>,
    psi: &[T],
    b: T,
    p: QuotientParams,
    grid: &TorusGrid<T>,
) -> ScalarField<T> {
    let n = p.n();
    let c = p.binomial::<T>();
    let values: Vec<T> = spectra
        .flat()
        .par_chunks(n)
        .zip(psi.par_iter())
        .map(|(lam, &psi_s)| {
            let f = symfunc::quotient_unchecked(lam, p);
            let m = T::from_usize(p.m()).unwrap();
            (c * f.powf(m)).ln() - psi_s.ln() - b
        })
        .collect();
    ScalarField::from_values(grid, values).expect("shape by construction")
}

/// Sitewise `log(quotient) - log(psi) - b`; the zero field exactly at a
/// solution of the normalized equation.
pub fn log_residual<T: Real>(
    eq: &Equation<'_, T>,
    u: &ScalarField<T>,
    b: T,
    psi: &ScalarField<T>,
) -> Result<ScalarField<T>, SolveError> {
    check_psi(psi)?;
    let (spectra, _) = relative_spectrum(eq, u)?;
    Ok(residual_from_spectrum(
        &spectra,
        psi.values(),
        b,
        eq.params,
        eq.grid(),
    ))
}

fn check_psi<T: Real>(psi: &ScalarField<T>) -> Result<(), SolveError> {
    for (site, &v) in psi.values().iter().enumerate() {
        if !(v > T::zero()) {
            return Err(SolveError::PsiNotPositive { site });
        }
    }
    Ok(())
}

/// The linearized operator at an admissible state: sitewise coefficient
/// matrices in the fixed frame plus the diagonal used by the preconditioner.
pub struct Linearization<T> {
    grid: TorusGrid<T>,
    dim: usize,
    /// Per site, row-major: `W[a][b] = sum_i c_i conj(v_i[a]) v_i[b]`.
    w: Vec<num_complex::Complex<T>>,
    diag: Vec<T>,
}

impl<T: Real> Linearization<T> {
    pub fn sites(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    /// `out = L xi`, the directional derivative of the log residual.
    pub fn apply(&self, xi: &[T], out: &mut [T]) {
        let grid = self.grid;
        let n = self.dim;
        let w = &self.w;
        out.par_iter_mut().enumerate().for_each(|(idx, o)| {
            let coords = grid.coords_of(idx);
            let d = ddbar_site(xi, &grid, idx, &coords);
            let base = idx * n * n;
            let mut acc = T::zero();
            for a in 0..n {
                acc += w[base + a * n + a].re * d.get(a, a).re;
                for bcol in (a + 1)..n {
                    let prod = d.get(a, bcol) * w[base + a * n + bcol];
                    acc += real::<T>(2.0) * prod.re;
                }
            }
            *o = acc;
        });
    }

    /// Bordered operator for the Newton step:
    /// `(xi, beta) -> (L xi - beta, mean xi)`.
    pub fn apply_saddle(&self, x: &[T], out: &mut [T]) {
        let m = self.sites();
        let (xi, beta) = x.split_at(m);
        let beta = beta[0];
        self.apply(xi, &mut out[..m]);
        out[..m].par_iter_mut().for_each(|o| *o = *o - beta);
        out[m] = reduce::mean(xi);
    }
}

/// Build the linearization at `u` (one full eigenvector pass).
pub fn linearize<T: Real>(
    eq: &Equation<'_, T>,
    u: &ScalarField<T>,
) -> Result<Linearization<T>, SolveError> {
    let grid = *eq.grid();
    let n = grid.dim();
    let sites = grid.site_count();
    let uv = u.values();
    let inv_h2 = T::one() / (grid.spacing() * grid.spacing());
    let p = eq.params;
    let zero = num_complex::Complex::new(T::zero(), T::zero());
    let mut w = vec![zero; sites * n * n];
    let mut diag = vec![T::zero(); sites];
    let bad = std::sync::atomic::AtomicUsize::new(usize::MAX);
    w.par_chunks_mut(n * n)
        .zip(diag.par_iter_mut())
        .enumerate()
        .for_each(|(idx, (wchunk, dout))| {
            let coords = grid.coords_of(idx);
            let m = eq.chi.site(idx).add(&ddbar_site(uv, &grid, idx, &coords));
            let (vals, vecs) = eq.metric.eig_rel(&m, true);
            if vals[n - 1] <= T::zero() {
                bad.fetch_min(idx, std::sync::atomic::Ordering::Relaxed);
                return;
            }
            let v = vecs.unwrap();
            let mut c = [T::zero(); 4];
            symfunc::log_quotient_coeffs(&vals[..n], p, &mut c[..n]);
            let mut trace = T::zero();
            for a in 0..n {
                for bcol in 0..n {
                    let mut acc = zero;
                    for i in 0..n {
                        acc = acc + v[a][i].conj() * v[bcol][i] * c[i];
                    }
                    wchunk[a * n + bcol] = acc;
                    if a == bcol {
                        trace += acc.re;
                    }
                }
            }
            *dout = -trace * inv_h2;
        });
    let bad = bad.load(std::sync::atomic::Ordering::Relaxed);
    if bad != usize::MAX {
        return Err(FieldError::InadmissibleSite {
            site: bad,
            coords: grid.coords_of(bad)[..grid.axes()].to_vec(),
        }
        .into());
    }
    Ok(Linearization {
        grid,
        dim: n,
        w,
        diag,
    })
}

/// Directional derivative of the log residual at `u` in direction `xi`.
pub fn linearized_apply<T: Real>(
    eq: &Equation<'_, T>,
    u: &ScalarField<T>,
    xi: &ScalarField<T>,
) -> Result<ScalarField<T>, SolveError> {
    let lin = linearize(eq, u)?;
    let mut out = ScalarField::zeros(eq.grid());
    let mut buf = vec![T::zero(); lin.sites()];
    lin.apply(xi.values(), &mut buf);
    out.values_mut().copy_from_slice(&buf);
    Ok(out)
}

/// Damped Newton iteration on the pair `(u, b)` with the mean-zero
/// constraint, solving the bordered linear system
/// `[L xi - beta = -r, mean(xi) = 0]` by preconditioned BiCGStab and
/// backtracking until the trial state is admissible and the residual norm
/// decreases.
pub fn newton_solve<T: Real>(
    eq: &Equation<'_, T>,
    psi: &ScalarField<T>,
    u0: &ScalarField<T>,
    cfg: &NewtonConfig<T>,
) -> Result<NewtonOutcome<T>, SolveError> {
    check_psi(psi)?;
    let mut u = u0.clone();
    u.remove_mean();
    let mut b = T::zero();
    let mut r = {
        let (spectra, _) = relative_spectrum(eq, &u)?;
        residual_from_spectrum(&spectra, psi.values(), b, eq.params, eq.grid())
    };
    let mut res = r.linf();
    let m = eq.grid().site_count();
    let mut linear_iters = 0usize;

    for iter in 0..=cfg.max_iters {
        if res <= cfg.tol_residual {
            return Ok(NewtonOutcome {
                u,
                b,
                iters: iter,
                residual_inf: res,
                linear_iters,
            });
        }
        if iter == cfg.max_iters {
            break;
        }
        let lin = linearize(eq, &u)?;
        let mut rhs = vec![T::zero(); m + 1];
        rhs[..m]
            .par_iter_mut()
            .zip(r.values().par_iter())
            .for_each(|(o, &ri)| *o = -ri);
        let mut inv_diag = vec![T::one(); m + 1];
        inv_diag[..m]
            .par_iter_mut()
            .zip(lin.diag().par_iter())
            .for_each(|(o, &d)| *o = T::one() / d);
        let (sol, stats): (Vec<T>, LinearStats<T>) = bicgstab(
            |x, out| lin.apply_saddle(x, out),
            &inv_diag,
            &rhs,
            cfg.linear_tol,
            cfg.linear_max_iters,
        );
        linear_iters += stats.iterations;
        let (xi, beta) = sol.split_at(m);
        let beta = beta[0];

        let mut step = T::one();
        let mut accepted = false;
        let mut last_inadmissible: Option<usize> = None;
        loop {
            let mut u_try = u.clone();
            u_try
                .values_mut()
                .par_iter_mut()
                .zip(xi.par_iter())
                .for_each(|(o, &x)| *o = *o + step * x);
            u_try.remove_mean();
            let b_try = b + step * beta;
            match relative_spectrum(eq, &u_try) {
                Ok((sp, _)) => {
                    let r_try =
                        residual_from_spectrum(&sp, psi.values(), b_try, eq.params, eq.grid());
                    let res_try = r_try.linf();
                    if res_try < res {
                        u = u_try;
                        b = b_try;
                        r = r_try;
                        res = res_try;
                        accepted = true;
                        break;
                    }
                    last_inadmissible = None;
                }
                Err(SolveError::Field(FieldError::InadmissibleSite { site, .. })) => {
                    last_inadmissible = Some(site);
                }
                Err(e) => return Err(e),
            }
            step = step * cfg.backtrack_factor;
            if step < cfg.min_step {
                break;
            }
        }
        if !accepted {
            if let Some(site) = last_inadmissible {
                return Err(SolveError::NonAdmissibleStep { site });
            }
            return Err(SolveError::NoConvergence {
                iters: iter,
                residual: res.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Err(SolveError::NoConvergence {
        iters: cfg.max_iters,
        residual: res.to_f64().unwrap_or(f64::NAN),
    })
}

/// March the continuity path `psi_t = psi^t psi_tilde^{1-t}` from the
/// supersolution background to the target, warm-starting each Newton solve
/// and halving the `t`-step (up to 10 consecutive times) on failure.
pub fn continuity_run<T: Real>(
    eq: &Equation<'_, T>,
    v: &ScalarField<T>,
    psi: &ScalarField<T>,
    steps: usize,
    cfg: &NewtonConfig<T>,
) -> Result<ContinuityRun<T>, SolveError> {
    assert!(steps >= 1);
    check_psi(psi)?;
    let grid = *eq.grid();
    let chi_v = assemble_gtilde(eq.chi, v)?;
    let eq_v = Equation::new(&chi_v, eq.metric, eq.params);
    // psi_tilde is the quotient of the background; inadmissible v fails here.
    let (spectra_v, _) = relative_spectrum(&eq_v, &ScalarField::zeros(&grid))?;
    let one_field = ScalarField::constant(&grid, T::one());
    let psi_tilde = {
        let r0 = residual_from_spectrum(&spectra_v, one_field.values(), T::zero(), eq.params, &grid);
        let mut f = ScalarField::zeros(&grid);
        f.values_mut()
            .par_iter_mut()
            .zip(r0.values().par_iter())
            .for_each(|(o, &lr)| *o = lr.exp());
        f
    };
    let violation = psi_tilde
        .values()
        .par_iter()
        .zip(psi.values().par_iter())
        .map(|(&pt, &p)| (pt - p).max(T::zero()))
        .reduce(T::zero, |a, b| a.max(b));

    let base_dt = T::one() / T::from_usize(steps).unwrap();
    let mut states: Vec<ContinuityState<T>> = Vec::new();
    let mut u_warm = ScalarField::zeros(&grid);
    let mut t = T::zero();
    let mut dt = base_dt;
    let mut halvings = 0usize;

    // t = 0 state: psi_0 = psi_tilde, solved exactly by u = 0, b = 0.
    let psi_t = blend_psi(psi, &psi_tilde, T::zero());
    let out0 = newton_solve(&eq_v, &psi_t, &u_warm, cfg)?;
    states.push(ContinuityState {
        t: T::zero(),
        u: out0.u.clone(),
        b: out0.b,
        newton_iters: out0.iters,
        residual_inf: out0.residual_inf,
    });
    u_warm = out0.u;

    while t < T::one() {
        let t_next = (t + dt).min(T::one());
        let psi_t = blend_psi(psi, &psi_tilde, t_next);
        match newton_solve(&eq_v, &psi_t, &u_warm, cfg) {
            Ok(out) => {
                states.push(ContinuityState {
                    t: t_next,
                    u: out.u.clone(),
                    b: out.b,
                    newton_iters: out.iters,
                    residual_inf: out.residual_inf,
                });
                u_warm = out.u;
                t = t_next;
                halvings = 0;
                // Regrow toward the base step after a halved stretch.
                dt = (dt + dt).min(base_dt);
            }
            Err(_) if halvings < 10 => {
                dt = dt * real(0.5);
                halvings += 1;
            }
            Err(_) => {
                return Err(SolveError::ContinuationStuck {
                    t: t.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
    }

    Ok(ContinuityRun {
        states,
        psi_tilde,
        supersolution_violation: violation,
    })
}

fn blend_psi<T: Real>(psi: &ScalarField<T>, psi_tilde: &ScalarField<T>, t: T) -> ScalarField<T> {
    let mut out = psi.clone();
    let one_minus = T::one() - t;
    out.values_mut()
        .par_iter_mut()
        .zip(psi_tilde.values().par_iter())
        .for_each(|(o, &pt)| {
            *o = o.powf(t) * pt.powf(one_minus);
        });
    out
}

/// Largest forward-Euler step the frozen-coefficient heat analogy allows at
/// the state `u`: `0.5 h^2 / (lambda_max(g^{-1}) * max_site sum_i c_i)`.
pub fn flow_stable_dt<T: Real>(
    eq: &Equation<'_, T>,
    u: &ScalarField<T>,
) -> Result<T, SolveError> {
    let (_, coeff_max) = relative_spectrum(eq, u)?;
    Ok(stable_dt_from(eq, coeff_max))
}

fn stable_dt_from<T: Real>(eq: &Equation<'_, T>, coeff_max: T) -> T {
    let h = eq.grid().spacing();
    real::<T>(0.5) * h * h / (eq.metric.inverse_spectral_sup() * coeff_max)
}

/// Forward-Euler flow `u <- u + dt (log_residual(u, 0) - mean)`, with the
/// running mean reported as the drift (the emerging constant `b`). The step
/// adapts to the stability bound and halves whenever the residual grows.
///
/// The observer sees `(step, time, u, drift, residual_inf)` before every
/// update and once at termination.
pub fn flow_run<T: Real>(
    eq: &Equation<'_, T>,
    u0: &ScalarField<T>,
    psi: &ScalarField<T>,
    dt: T,
    t_end: T,
    mut observer: impl FnMut(usize, T, &ScalarField<T>, T, T),
) -> Result<FlowRun<T>, SolveError> {
    check_psi(psi)?;
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(SolveError::FlowDtRejected {
            dt: dt.to_f64().unwrap_or(f64::NAN),
            bound: f64::NAN,
        });
    }
    let mut u = u0.clone();
    u.remove_mean();
    let map_blowup = |e: SolveError, time: T| match e {
        SolveError::Field(FieldError::InadmissibleSite { .. }) => SolveError::FlowBlowup {
            time: time.to_f64().unwrap_or(f64::NAN),
        },
        other => other,
    };
    let (mut spectra, mut coeff_max) = relative_spectrum(eq, &u)?;
    let bound0 = stable_dt_from(eq, coeff_max);
    if dt > bound0 * (T::one() + real(1e-12)) {
        return Err(SolveError::FlowDtRejected {
            dt: dt.to_f64().unwrap_or(f64::NAN),
            bound: bound0.to_f64().unwrap_or(f64::NAN),
        });
    }

    let tol = real::<T>(FLOW_TOL);
    let mut dt_cap = dt;
    let mut time = T::zero();
    let mut steps = 0usize;
    let mut prev_res = T::infinity();
    let (drift, res) = loop {
        let r = residual_from_spectrum(&spectra, psi.values(), T::zero(), eq.params, eq.grid());
        let drift = reduce::mean(r.values());
        let res = r
            .values()
            .par_iter()
            .map(|&x| (x - drift).abs())
            .reduce(T::zero, |a, b| a.max(b));
        observer(steps, time, &u, drift, res);
        if res <= tol || time >= t_end {
            break (drift, res);
        }
        if res > prev_res {
            dt_cap = dt_cap * real(0.5);
        }
        prev_res = res;
        let dt_step = dt_cap
            .min(stable_dt_from(eq, coeff_max))
            .min(t_end - time);
        u.values_mut()
            .par_iter_mut()
            .zip(r.values().par_iter())
            .for_each(|(o, &ri)| *o = *o + dt_step * (ri - drift));
        u.remove_mean();
        time += dt_step;
        steps += 1;
        match relative_spectrum(eq, &u) {
            Ok((sp, cm)) => {
                spectra = sp;
                coeff_max = cm;
            }
            Err(e) => return Err(map_blowup(e, time)),
        }
    };

    Ok(FlowRun {
        state: FlowState {
            time,
            u,
            dt: dt_cap,
            drift,
        },
        steps,
        residual_inf: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HermitianField;
    use crate::linalg::HermMat;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn setup(
        n: usize,
        points: usize,
    ) -> (TorusGrid<f64>, HermitianField<f64>, Metric<f64>) {
        let grid = TorusGrid::new(n, points, TAU).unwrap();
        let chi = HermitianField::constant(&grid, &HermMat::identity(n));
        let metric = Metric::identity_metric(n);
        (grid, chi, metric)
    }

    #[test]
    fn residual_examples() {
        let (grid, chi, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let one = ScalarField::constant(&grid, 1.0);
        let zero = ScalarField::zeros(&grid);
        let r = log_residual(&eq, &zero, 0.0, &one).unwrap();
        assert!(r.linf() <= 1e-14);
        let r = log_residual(&eq, &zero, 0.3, &one).unwrap();
        assert!((r.max() + 0.3).abs() <= 1e-14 && (r.min() + 0.3).abs() <= 1e-14);
        // Sitewise lambda = (1,2) via chi = diag(1,2): log(4/3).
        let chi2 = HermitianField::constant(&grid, &HermMat::diag(&[1.0, 2.0]));
        let eq2 = Equation::new(&chi2, &metric, p);
        let r = log_residual(&eq2, &zero, 0.0, &one).unwrap();
        assert_relative_eq!(r.max(), (4.0f64 / 3.0).ln(), max_relative = 1e-12);
    }

    #[test]
    fn linearized_poisson_case() {
        // n=1, m=1, u=0, chi=g=1: the operator is exactly Laplacian/4.
        let (grid, chi, metric) = setup(1, 16);
        let p = QuotientParams::new(1, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let zero = ScalarField::zeros(&grid);
        let xi = ScalarField::from_fn(&grid, |pos| pos[0].sin() + 0.3 * (2.0 * pos[1]).cos());
        let got = linearized_apply(&eq, &zero, &xi).unwrap();
        let h = grid.spacing();
        // Discrete Laplacian of xi over the two real axes, divided by 4.
        let want: Vec<f64> = (0..grid.site_count())
            .map(|idx| {
                let c = grid.coords_of(idx);
                let mut lap = 0.0;
                for a in 0..2 {
                    let up = grid.step_up(idx, c[a], a);
                    let dn = grid.step_down(idx, c[a], a);
                    lap += (xi.values()[up] + xi.values()[dn] - 2.0 * xi.values()[idx]) / (h * h);
                }
                0.25 * lap
            })
            .collect();
        for (g, w) in got.values().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
        // Constant direction is annihilated.
        let konst = ScalarField::constant(&grid, 2.5);
        let out = linearized_apply(&eq, &zero, &konst).unwrap();
        assert!(out.linf() <= 1e-13);
    }

    #[test]
    fn linearized_matches_finite_differences() {
        // The FD consistency oracle, run on random-ish smooth u and xi.
        let (grid, chi, metric) = setup(2, 8);
        let one = ScalarField::constant(&grid, 1.0);
        for &(n, m) in &[(2usize, 1usize), (2, 2)] {
            let p = QuotientParams::new(n, m).unwrap();
            let eq = Equation::new(&chi, &metric, p);
            let u = ScalarField::from_fn(&grid, |pos| {
                0.15 * pos[0].sin() * pos[3].cos() + 0.1 * (pos[1] + pos[2]).cos()
            });
            let xi = ScalarField::from_fn(&grid, |pos| {
                0.8 * pos[2].sin() + 0.5 * pos[0].cos() * pos[1].sin()
            });
            let lin_op = linearize(&eq, &u).unwrap();
            assert!(
                lin_op.diag().iter().all(|&d| d < 0.0),
                "ellipticity: the preconditioner diagonal must stay negative"
            );
            let lin = linearized_apply(&eq, &u, &xi).unwrap();
            let s = 1e-5;
            let mut up = u.clone();
            up.values_mut()
                .iter_mut()
                .zip(xi.values())
                .for_each(|(o, &x)| *o += s * x);
            let mut dn = u.clone();
            dn.values_mut()
                .iter_mut()
                .zip(xi.values())
                .for_each(|(o, &x)| *o -= s * x);
            let ru = log_residual(&eq, &up, 0.0, &one).unwrap();
            let rd = log_residual(&eq, &dn, 0.0, &one).unwrap();
            let mut worst = 0.0f64;
            let mut scale = 0.0f64;
            for ((&a, &b), &l) in ru.values().iter().zip(rd.values()).zip(lin.values()) {
                let fd = (a - b) / (2.0 * s);
                worst = worst.max((fd - l).abs());
                scale = scale.max(l.abs());
            }
            assert!(
                worst <= 1e-6 * scale.max(1.0),
                "FD mismatch {worst} at scale {scale} for m={m}"
            );
        }
    }

    #[test]
    fn newton_trivial_root() {
        for &(n, m) in &[(1usize, 1usize), (2, 1), (2, 2), (3, 2)] {
            let (grid, chi, metric) = setup(n, if n == 3 { 4 } else { 8 });
            let p = QuotientParams::new(n, m).unwrap();
            let eq = Equation::new(&chi, &metric, p);
            let one = ScalarField::constant(&grid, 1.0);
            let out = newton_solve(&eq, &one, &ScalarField::zeros(&grid), &Default::default())
                .unwrap();
            assert!(out.iters <= 1);
            assert!(out.u.linf() <= 1e-12 && out.b.abs() <= 1e-12);
        }
    }

    #[test]
    fn newton_constant_psi_one_step() {
        // psi a constant: u stays 0 and b = -log psi, resolved in one step.
        let (grid, chi, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let psi = ScalarField::constant(&grid, 1.7);
        let out = newton_solve(&eq, &psi, &ScalarField::zeros(&grid), &Default::default()).unwrap();
        assert!(out.iters <= 2);
        assert!(out.u.linf() <= 1e-9);
        assert_relative_eq!(out.b, -(1.7f64.ln()), max_relative = 1e-10);
    }

    #[test]
    fn newton_manufactured_small() {
        // Manufactured discrete solution: psi := quotient of u*, so u* less
        // its mean is an exact root.
        let (grid, chi, metric) = setup(2, 8);
        for &m in &[1usize, 2] {
            let p = QuotientParams::new(2, m).unwrap();
            let eq = Equation::new(&chi, &metric, p);
            let u_star = ScalarField::from_fn(&grid, |pos| 0.2 * pos[0].sin() * pos[3].cos());
            let gt = assemble_gtilde(&chi, &u_star).unwrap();
            let psi = crate::geometry::quotient_ratio(&gt, &metric, p).unwrap();
            let out =
                newton_solve(&eq, &psi, &ScalarField::zeros(&grid), &Default::default()).unwrap();
            assert!(out.residual_inf <= 1e-10);
            let mut want = u_star.clone();
            want.remove_mean();
            assert!(out.u.linf_diff(&want) <= 1e-8, "m={m}");
            assert!(out.b.abs() <= 1e-9);
        }
    }

    #[test]
    fn newton_manufactured_general_metric() {
        // Non-identity constant metric: a discrete manufactured root is
        // still recovered exactly.
        let grid = TorusGrid::new(2, 8, TAU).unwrap();
        let mut gm = HermMat::zeros(2);
        gm.set_diag(0, 2.0);
        gm.set_diag(1, 1.0);
        gm.set_pair(0, 1, num_complex::Complex64::new(0.3, 0.1));
        let metric = Metric::new(gm).unwrap();
        let chi = HermitianField::constant(&grid, &HermMat::diag(&[2.0, 2.0]));
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let u_star = ScalarField::from_fn(&grid, |pos| 0.15 * pos[0].sin() * pos[3].cos());
        let gt = assemble_gtilde(&chi, &u_star).unwrap();
        let psi = crate::geometry::quotient_ratio(&gt, &metric, p).unwrap();
        let out = newton_solve(&eq, &psi, &ScalarField::zeros(&grid), &Default::default()).unwrap();
        assert!(out.residual_inf <= 1e-10);
        let mut want = u_star.clone();
        want.remove_mean();
        assert!(out.u.linf_diff(&want) <= 1e-8);
        assert!(out.b.abs() <= 1e-9);
    }

    #[test]
    fn continuity_trivial_path() {
        let (grid, chi, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let one = ScalarField::constant(&grid, 1.0);
        let run = continuity_run(&eq, &ScalarField::zeros(&grid), &one, 5, &Default::default())
            .unwrap();
        assert_eq!(run.supersolution_violation, 0.0);
        for st in &run.states {
            assert!(st.u.linf() <= 1e-10);
            assert!(st.b.abs() <= 1e-10);
        }
        assert_relative_eq!(run.final_state().t, 1.0);
    }

    #[test]
    fn continuity_degenerate_path_with_background() {
        // psi set exactly to the quotient of chi_v: psi_tilde = psi, the path
        // is constant, every b_t = 0 and every u_t = 0 relative to the start.
        let (grid, chi, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let v = ScalarField::from_fn(&grid, |pos| 0.1 * pos[1].cos() * pos[2].sin());
        let chi_v = assemble_gtilde(&chi, &v).unwrap();
        let psi = crate::geometry::quotient_ratio(&chi_v, &metric, p).unwrap();
        let run = continuity_run(&eq, &v, &psi, 5, &Default::default()).unwrap();
        assert_eq!(run.supersolution_violation, 0.0);
        assert!(run.psi_tilde.linf_diff(&psi) <= 1e-13);
        for st in &run.states {
            assert!(st.u.linf() <= 1e-10);
            assert!(st.b.abs() <= 1e-10);
            assert!(st.u.mean().abs() <= 1e-12);
        }
    }

    #[test]
    fn continuity_matches_single_shot() {
        let (grid, chi, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let u_star = ScalarField::from_fn(&grid, |pos| 0.2 * pos[0].sin() * pos[3].cos());
        let gt = assemble_gtilde(&chi, &u_star).unwrap();
        let psi = crate::geometry::quotient_ratio(&gt, &metric, p).unwrap();
        let single =
            newton_solve(&eq, &psi, &ScalarField::zeros(&grid), &Default::default()).unwrap();
        let path = continuity_run(&eq, &ScalarField::zeros(&grid), &psi, 10, &Default::default())
            .unwrap();
        let last = path.final_state();
        assert!(last.u.linf_diff(&single.u) <= 1e-8);
        assert!((last.b - single.b).abs() <= 1e-8);
        for st in &path.states {
            assert!(st.u.mean().abs() <= 1e-12, "mean-zero normalization drifted");
        }
        // b_t bound holds whenever the recorded violation is zero... here the
        // violation is generally positive (manufactured psi dips below 1), so
        // only check when it holds.
        if path.supersolution_violation == 0.0 {
            for st in &path.states {
                assert!(st.b.exp() <= 1.0 + 1e-10);
            }
        }
    }

    #[test]
    fn flow_trivial_and_decay() {
        let (grid, chi, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let one = ScalarField::constant(&grid, 1.0);
        let zero = ScalarField::zeros(&grid);
        let dt = flow_stable_dt(&eq, &zero).unwrap();
        let run = flow_run(&eq, &zero, &one, dt, 10.0, |_, _, _, _, _| {}).unwrap();
        assert_eq!(run.steps, 0);
        assert!(run.state.u.linf() <= 1e-14 && run.state.drift.abs() <= 1e-14);

        // Small admissible perturbation decays monotonically.
        let u0 = ScalarField::from_fn(&grid, |pos| 0.05 * pos[0].cos());
        let dt = flow_stable_dt(&eq, &u0).unwrap() * 0.9;
        let mut residuals: Vec<f64> = Vec::new();
        let run = flow_run(&eq, &u0, &one, dt, 400.0, |_, _, _, _, res| {
            residuals.push(res);
        })
        .unwrap();
        assert!(run.residual_inf <= 1e-8);
        for w in residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "flow residual grew: {w:?}");
        }

        // Oversized step is rejected.
        let bad = flow_run(&eq, &u0, &one, dt * 10.0, 1.0, |_, _, _, _, _| {});
        assert!(matches!(bad, Err(SolveError::FlowDtRejected { .. })));
    }

    #[test]
    fn flow_halved_dt_agrees() {
        // Self-oracle: the run with dt/2 lands on the same state to 1e-6.
        let (grid, chi, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let psi = ScalarField::from_fn(&grid, |pos| 1.0 + 0.1 * pos[0].cos() * pos[3].cos());
        let u0 = ScalarField::zeros(&grid);
        let dt = flow_stable_dt(&eq, &u0).unwrap() * 0.8;
        let a = flow_run(&eq, &u0, &psi, dt, 300.0, |_, _, _, _, _| {}).unwrap();
        let b = flow_run(&eq, &u0, &psi, dt * 0.5, 300.0, |_, _, _, _, _| {}).unwrap();
        assert!(a.residual_inf <= 1e-8 && b.residual_inf <= 1e-8);
        assert!(a.state.u.linf_diff(&b.state.u) <= 1e-6);
        assert!((a.state.drift - b.state.drift).abs() <= 1e-6);
    }

    #[test]
    fn newton_error_paths() {
        let (grid, chi, metric) = setup(1, 8);
        let p = QuotientParams::new(1, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        // max_iters exhausted reports the final residual.
        let psi = ScalarField::constant(&grid, 2.0);
        let cfg = NewtonConfig {
            max_iters: 0,
            ..Default::default()
        };
        match newton_solve(&eq, &psi, &ScalarField::zeros(&grid), &cfg) {
            Err(SolveError::NoConvergence { iters: 0, residual }) => {
                assert!((residual - (2.0f64).ln()) < 1e-12)
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
        // A violent right hand side makes the full step inadmissible; with
        // the damping floor raised the backtracker cannot recover.
        let psi = ScalarField::from_fn(&grid, |pos| (-10.0 * pos[0].cos()).exp());
        let cfg = NewtonConfig {
            min_step: 0.9,
            ..Default::default()
        };
        match newton_solve(&eq, &psi, &ScalarField::zeros(&grid), &cfg) {
            Err(SolveError::NonAdmissibleStep { .. }) => {}
            other => panic!("expected NonAdmissibleStep, got {other:?}"),
        }
    }

    #[test]
    fn newton_rejects_nonpositive_psi() {
        let (grid, chi, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let eq = Equation::new(&chi, &metric, p);
        let psi = ScalarField::constant(&grid, -1.0);
        let err = newton_solve(&eq, &psi, &ScalarField::zeros(&grid), &Default::default());
        assert!(matches!(err, Err(SolveError::PsiNotPositive { .. })));
    }

    #[test]
    fn inadmissible_start_names_site() {
        let (grid, _, metric) = setup(2, 8);
        let p = QuotientParams::new(2, 1).unwrap();
        let chi = HermitianField::constant(&grid, &HermMat::diag(&[1.0, -0.2]));
        let eq = Equation::new(&chi, &metric, p);
        let one = ScalarField::constant(&grid, 1.0);
        match log_residual(&eq, &ScalarField::zeros(&grid), 0.0, &one) {
            Err(SolveError::Field(FieldError::InadmissibleSite { site, .. })) => {
                assert_eq!(site, 0)
            }
            other => panic!("expected inadmissible site, got {other:?}"),
        }
    }
}
