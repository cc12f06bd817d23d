//! Empirical monitoring of the a priori quantities along solver
//! trajectories: oscillation, L1 gap, gradient sup, largest real-Hessian
//! eigenvalue, spectrum bounds, the dichotomy census, and
//! manufactured-solution convergence sweeps.
//!
//! The bounds themselves are non-effective constants, so the probes assert
//! grid stability and positivity, never specific magnitudes.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::cone::{self, ConeCertificate, DichotomyBranch};
use crate::geometry::{
    assemble_gtilde, eigen_rel, estimate_quantities, HermitianField, Metric, ScalarField,
    TorusGrid,
};
use crate::solver::{newton_solve, Equation, NewtonConfig};
use crate::symfunc::{self, QuotientParams};
use crate::{Real, SolveError};

pub const CSV_HEADER: &str = "step,t,b_t,osc,l1_gap,grad_sup,lambda1_sup,spec_min,spec_max,branch1_frac,branch2_frac,small_frac,sum_Gii_min,newton_iters,residual_inf";

/// One fully populated monitoring record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRecord<T> {
    pub step: usize,
    pub t: T,
    pub b_t: T,
    pub osc: T,
    pub l1_gap: T,
    pub grad_sup: T,
    pub lambda1_sup: T,
    pub spec_min: T,
    pub spec_max: T,
    pub branch1_frac: T,
    pub branch2_frac: T,
    pub small_frac: T,
    pub sum_gii_min: T,
    pub newton_iters: usize,
    pub residual_inf: T,
}

impl<T: Real> EstimateRecord<T> {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.t,
            self.b_t,
            self.osc,
            self.l1_gap,
            self.grad_sup,
            self.lambda1_sup,
            self.spec_min,
            self.spec_max,
            self.branch1_frac,
            self.branch2_frac,
            self.small_frac,
            self.sum_gii_min,
            self.newton_iters,
            self.residual_inf
        )
    }
}

pub fn write_csv<T: Real>(
    records: &[EstimateRecord<T>],
    mut w: impl Write,
) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Step metadata the recorder cannot derive from the fields themselves.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo<T> {
    pub step: usize,
    pub t: T,
    pub b_t: T,
    pub newton_iters: usize,
    pub residual_inf: T,
}

/// Assemble one record from a solver state. Diagnostics never abort a solve:
/// an absent certificate files every site under the small-spectrum class.
pub fn record_step<T: Real>(
    info: StepInfo<T>,
    u: &ScalarField<T>,
    ubar: &ScalarField<T>,
    cert: Option<&ConeCertificate<T>>,
    eq: &Equation<'_, T>,
) -> Result<EstimateRecord<T>, SolveError> {
    let est = estimate_quantities(u, ubar, eq.metric)?;
    let p = eq.params;
    let n = p.n();

    let gtilde = assemble_gtilde(eq.chi, u)?;
    let spectra = eigen_rel(&gtilde, eq.metric);
    let gbar = assemble_gtilde(eq.chi, ubar)?;
    let mu = eigen_rel(&gbar, eq.metric);

    let sites = spectra.site_count();
    let mut spec_min = T::infinity();
    let mut spec_max = T::neg_infinity();
    for s in 0..sites {
        let lam = spectra.site(s);
        spec_min = spec_min.min(lam[n - 1]);
        spec_max = spec_max.max(lam[0]);
    }

    let sum_gii_min = (0..sites)
        .into_par_iter()
        .map(|s| {
            let mut gii = [T::zero(); 4];
            symfunc::inverse_operator_diag(spectra.site(s), p, &mut gii[..n])
                .map(|_| gii[..n].iter().fold(T::zero(), |a, &x| a + x))
                .unwrap_or(T::nan())
        })
        .reduce(T::infinity, |a, b| a.min(b));

    let (b1, b2, small) = match cert {
        Some(cert) => {
            let counts = (0..sites)
                .into_par_iter()
                .map(|s| {
                    let rep = cone::dichotomy_check(spectra.site(s), mu.site(s), cert, p, s)
                        .expect("admissible spectra");
                    match rep.branch {
                        DichotomyBranch::SubsolutionGap => (1usize, 0usize, 0usize),
                        DichotomyBranch::DominatedDiagonal => (0, 1, 0),
                        DichotomyBranch::SmallSpectrum => (0, 0, 1),
                    }
                })
                .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
            let total = T::from_usize(sites).unwrap();
            (
                T::from_usize(counts.0).unwrap() / total,
                T::from_usize(counts.1).unwrap() / total,
                T::from_usize(counts.2).unwrap() / total,
            )
        }
        None => (T::zero(), T::zero(), T::one()),
    };

    Ok(EstimateRecord {
        step: info.step,
        t: info.t,
        b_t: info.b_t,
        osc: est.osc,
        l1_gap: est.l1_gap,
        grad_sup: est.grad_sup,
        lambda1_sup: est.lambda1_sup,
        spec_min,
        spec_max,
        branch1_frac: b1,
        branch2_frac: b2,
        small_frac: small,
        sum_gii_min,
        newton_iters: info.newton_iters,
        residual_inf: info.residual_inf,
    })
}

/// A manufactured problem the sweep can instantiate at any grid size.
pub struct SweepProblem<'a, T> {
    pub params: QuotientParams,
    pub period: T,
    pub metric: &'a Metric<T>,
    pub chi: &'a (dyn Fn(&TorusGrid<T>) -> HermitianField<T> + Sync),
    pub psi: &'a (dyn Fn(&TorusGrid<T>) -> ScalarField<T> + Sync),
    pub u_star: &'a (dyn Fn(&TorusGrid<T>) -> ScalarField<T> + Sync),
    pub newton: NewtonConfig<T>,
}

#[derive(Clone, Debug)]
pub struct SweepRow<T> {
    pub points: usize,
    pub error_inf: Option<T>,
    pub observed_order: Option<T>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepTable<T> {
    pub rows: Vec<SweepRow<T>>,
}

impl<T: Real> SweepTable<T> {
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "N,error_inf,observed_order")?;
        for r in &self.rows {
            let err = match (&r.failure, r.error_inf) {
                (Some(msg), _) => format!("failed: {msg}"),
                (None, Some(e)) => format!("{e}"),
                (None, None) => String::new(),
            };
            let order = r
                .observed_order
                .map(|o| format!("{o}"))
                .unwrap_or_default();
            writeln!(w, "{},{},{}", r.points, err, order)?;
        }
        Ok(())
    }
}

/// Solve the problem at each grid size and report sup-norm errors against
/// the manufactured solution plus observed orders
/// `log2(error(N) / error(2N))`. A failed grid leaves a marked row and the
/// sweep continues.
pub fn convergence_sweep<T: Real>(problem: &SweepProblem<'_, T>, grids: &[usize]) -> SweepTable<T> {
    let mut rows: Vec<SweepRow<T>> = Vec::new();
    for &points in grids {
        let row = match run_one(problem, points) {
            Ok(err) => SweepRow {
                points,
                error_inf: Some(err),
                observed_order: None,
                failure: None,
            },
            Err(e) => SweepRow {
                points,
                error_inf: None,
                observed_order: None,
                failure: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    for i in 0..rows.len().saturating_sub(1) {
        if rows[i + 1].points == 2 * rows[i].points {
            if let (Some(a), Some(b)) = (rows[i].error_inf, rows[i + 1].error_inf) {
                rows[i].observed_order = Some((a / b).log2());
            }
        }
    }
    SweepTable { rows }
}

fn run_one<T: Real>(problem: &SweepProblem<'_, T>, points: usize) -> Result<T, SolveError> {
    let grid = TorusGrid::new(problem.params.n(), points, problem.period)?;
    let chi = (problem.chi)(&grid);
    let psi = (problem.psi)(&grid);
    let mut want = (problem.u_star)(&grid);
    want.remove_mean();
    let eq = Equation::new(&chi, problem.metric, problem.params);
    let out = newton_solve(&eq, &psi, &ScalarField::zeros(&grid), &problem.newton)?;
    Ok(out.u.linf_diff(&want))
}

/// Empirical dichotomy summary over a run: smallest margin seen outside the
/// small-spectrum class. Negative values are the red-flag diagnostic.
pub fn min_dichotomy_margin<T: Real>(
    u: &ScalarField<T>,
    ubar: &ScalarField<T>,
    cert: &ConeCertificate<T>,
    eq: &Equation<'_, T>,
) -> Result<T, SolveError> {
    let gtilde = assemble_gtilde(eq.chi, u)?;
    let spectra = eigen_rel(&gtilde, eq.metric);
    let gbar = assemble_gtilde(eq.chi, ubar)?;
    let mu = eigen_rel(&gbar, eq.metric);
    let p = eq.params;
    let m = (0..spectra.site_count())
        .into_par_iter()
        .map(|s| {
            let rep = cone::dichotomy_check(spectra.site(s), mu.site(s), cert, p, s)
                .expect("admissible spectra");
            if rep.branch == DichotomyBranch::SmallSpectrum {
                T::infinity()
            } else {
                rep.margin
            }
        })
        .reduce(T::infinity, |a, b| a.min(b));
    Ok(m)
}
