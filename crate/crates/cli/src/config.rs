//! Run configuration: a single JSON document describing the problem, the
//! method, and the output location. Everything a run needs is in the file so
//! runs are reproducible from one artifact.

use std::path::PathBuf;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use hessq::geometry::{HermitianField, Metric, ScalarField, TorusGrid};
use hessq::linalg::HermMat;
use hessq::solver::NewtonConfig;
use hessq::symfunc::QuotientParams;

use crate::expr::{self, Ast, PsiExpression};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N", default = "default_points")]
    pub points: usize,
    #[serde(rename = "L", default = "default_period")]
    pub period: f64,
    /// Constant Hermitian metric as rows of [re, im] pairs; identity when
    /// omitted.
    #[serde(default)]
    pub g: Option<MatrixSpec>,
    #[serde(default)]
    pub chi: Option<ChiSpec>,
    pub psi: PsiSpec,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub newton: NewtonSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub certify: CertifySpec,
    /// Expression for a manufactured exact solution; required by `sweep`.
    #[serde(default)]
    pub manufactured_u: Option<String>,
    #[serde(default = "default_sweep_grids")]
    pub sweep_grids: Vec<usize>,
    /// Flow probes record every k-th step.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_points() -> usize {
    16
}
fn default_period() -> f64 {
    std::f64::consts::TAU
}
fn default_steps() -> usize {
    20
}
fn default_sweep_grids() -> Vec<usize> {
    vec![8, 16, 32]
}
fn default_record_every() -> usize {
    10
}

pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ChiSpec {
    #[serde(rename = "constant")]
    Constant { base: MatrixSpec },
    #[serde(rename = "expression-perturbed")]
    ExpressionPerturbed {
        base: MatrixSpec,
        perturbations: Vec<PerturbationSpec>,
    },
}

/// One perturbed upper-triangle entry (1-based indices, i <= j); the mirror
/// entry is the conjugate. Diagonal entries take only a real part.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub i: usize,
    pub j: usize,
    #[serde(default)]
    pub re: Option<String>,
    #[serde(default)]
    pub im: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum PsiSpec {
    #[serde(rename = "constant")]
    Constant { value: f64 },
    #[serde(rename = "expression")]
    Expression { source: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Continuity,
    Flow,
    Both,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSpec {
    pub tol_residual: f64,
    pub max_iters: usize,
    pub backtrack_factor: f64,
    pub min_step: f64,
    pub linear_tol: f64,
    pub linear_max_iters: usize,
}

impl Default for NewtonSpec {
    fn default() -> Self {
        let d: NewtonConfig<f64> = Default::default();
        NewtonSpec {
            tol_residual: d.tol_residual,
            max_iters: d.max_iters,
            backtrack_factor: d.backtrack_factor,
            min_step: d.min_step,
            linear_tol: d.linear_tol,
            linear_max_iters: d.linear_max_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSpec {
    /// Cap on the flow step; the adaptive stability bound applies on top.
    pub dt_max: Option<f64>,
    pub t_end: f64,
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec {
            dt_max: None,
            t_end: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySpec {
    pub delta: f64,
    pub samples: usize,
}

impl Default for CertifySpec {
    fn default() -> Self {
        CertifySpec {
            delta: 0.1,
            samples: 20_000,
        }
    }
}

/// Memory guard on the total site count.
const MAX_SITES: usize = 1 << 24;

/// A validated, fully built problem instance.
#[derive(Debug)]
pub struct Setup {
    pub config: RunConfig,
    pub params: QuotientParams,
    pub grid: TorusGrid<f64>,
    pub metric: Metric<f64>,
    pub chi: HermitianField<f64>,
    pub psi: ScalarField<f64>,
    pub newton: NewtonConfig<f64>,
    chi_base: HermMat<f64>,
    chi_perturbations: Vec<(usize, usize, Option<PsiExpression>, Option<PsiExpression>)>,
    psi_expr: Option<PsiExpression>,
    psi_const: Option<f64>,
    pub manufactured: Option<PsiExpression>,
}

impl Setup {
    pub fn from_config(config: RunConfig) -> Result<Self, ConfigError> {
        let params = QuotientParams::new(config.n, config.m)
            .map_err(|e| invalid(format!("bad (n, m): {e}")))?;
        let axes = 2 * config.n;

        if config.points < 4 || config.points % 2 != 0 {
            return Err(invalid(format!(
                "N = {} must be even and at least 4",
                config.points
            )));
        }
        if config.n == 2 && ![8, 16, 32, 64].contains(&config.points) {
            return Err(invalid(format!(
                "for n = 2 the grid size N must be one of 8, 16, 32, 64 (got {})",
                config.points
            )));
        }
        let sites = (config.points as u128).pow(axes as u32);
        if sites > MAX_SITES as u128 {
            return Err(invalid(format!(
                "grid has {sites} sites, above the memory guard of {MAX_SITES}"
            )));
        }
        if !(config.period > 0.0) {
            return Err(invalid("period L must be positive"));
        }
        let grid = TorusGrid::new(config.n, config.points, config.period)
            .map_err(|e| invalid(e.to_string()))?;

        let g_mat = match &config.g {
            Some(spec) => parse_matrix(spec, config.n, "g")?,
            None => HermMat::identity(config.n),
        };
        let metric = Metric::new(g_mat)
            .map_err(|e| invalid(format!("metric g is not usable: {e}")))?;

        let (chi_base, chi_perturbations) = match &config.chi {
            None => (HermMat::identity(config.n), Vec::new()),
            Some(ChiSpec::Constant { base }) => (parse_matrix(base, config.n, "chi.base")?, Vec::new()),
            Some(ChiSpec::ExpressionPerturbed {
                base,
                perturbations,
            }) => {
                let base = parse_matrix(base, config.n, "chi.base")?;
                let mut parsed = Vec::new();
                for p in perturbations {
                    if p.i < 1 || p.j < 1 || p.i > config.n || p.j > config.n || p.i > p.j {
                        return Err(invalid(format!(
                            "chi perturbation indices ({}, {}) must satisfy 1 <= i <= j <= n",
                            p.i, p.j
                        )));
                    }
                    if p.i == p.j && p.im.is_some() {
                        return Err(invalid(format!(
                            "chi perturbation ({0}, {0}) is diagonal and cannot take an imaginary part",
                            p.i
                        )));
                    }
                    let re = parse_opt_expr(&p.re, axes, "chi perturbation re")?;
                    let im = parse_opt_expr(&p.im, axes, "chi perturbation im")?;
                    parsed.push((p.i - 1, p.j - 1, re, im));
                }
                (base, parsed)
            }
        };

        let (psi_expr, psi_const) = match &config.psi {
            PsiSpec::Constant { value } => (None, Some(*value)),
            PsiSpec::Expression { source } => {
                let e = expr::parse_expr(source)
                    .map_err(|e| invalid(format!("psi expression: {e}")))?;
                check_axes(&e, axes, "psi")?;
                (Some(e), None)
            }
        };

        let manufactured = match &config.manufactured_u {
            None => None,
            Some(src) => {
                let e = expr::parse_expr(src)
                    .map_err(|e| invalid(format!("manufactured_u expression: {e}")))?;
                check_axes(&e, axes, "manufactured_u")?;
                Some(e)
            }
        };

        for &k in &config.sweep_grids {
            if k < 4 || k % 2 != 0 {
                return Err(invalid(format!("sweep grid N = {k} must be even and >= 4")));
            }
        }
        if config.record_every == 0 {
            return Err(invalid("record_every must be at least 1"));
        }
        let ns = &config.newton;
        if !(ns.tol_residual > 0.0
            && ns.linear_tol > 0.0
            && ns.min_step > 0.0
            && ns.backtrack_factor > 0.0
            && ns.backtrack_factor < 1.0
            && ns.max_iters > 0
            && ns.linear_max_iters > 0)
        {
            return Err(invalid("newton parameters must all be positive (factor in (0,1))"));
        }
        if !(config.certify.delta > 0.0) || config.certify.samples == 0 {
            return Err(invalid("certify.delta must be positive and certify.samples at least 1"));
        }
        if let Some(dt) = config.flow.dt_max {
            if !(dt > 0.0) {
                return Err(invalid("flow.dt_max must be positive"));
            }
        }
        if !(config.flow.t_end > 0.0) {
            return Err(invalid("flow.t_end must be positive"));
        }
        if config.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }

        let newton = NewtonConfig {
            tol_residual: ns.tol_residual,
            max_iters: ns.max_iters,
            backtrack_factor: ns.backtrack_factor,
            min_step: ns.min_step,
            linear_tol: ns.linear_tol,
            linear_max_iters: ns.linear_max_iters,
        };

        let mut setup = Setup {
            params,
            grid,
            metric,
            chi: HermitianField::zeros(&grid),
            psi: ScalarField::zeros(&grid),
            newton,
            chi_base,
            chi_perturbations,
            psi_expr,
            psi_const,
            manufactured,
            config,
        };
        setup.chi = setup.build_chi(&grid);
        setup.psi = setup.build_psi(&grid)?;
        Ok(setup)
    }

    /// Background form at an arbitrary grid size.
    pub fn build_chi(&self, grid: &TorusGrid<f64>) -> HermitianField<f64> {
        if self.chi_perturbations.is_empty() {
            return HermitianField::constant(grid, &self.chi_base);
        }
        let base = self.chi_base;
        let perts = &self.chi_perturbations;
        HermitianField::from_fn(grid, move |pos| {
            let mut m = base;
            for (i, j, re, im) in perts.iter() {
                let dre = re.as_ref().map_or(0.0, |e| expr::eval(e.ast(), pos));
                let dim = im.as_ref().map_or(0.0, |e| expr::eval(e.ast(), pos));
                if i == j {
                    m.set_diag(*i, m.get(*i, *i).re + dre);
                } else {
                    m.set_pair(*i, *j, m.get(*i, *j) + Complex::new(dre, dim));
                }
            }
            m
        })
    }

    /// Right hand side at an arbitrary grid size, validated positive.
    pub fn build_psi(&self, grid: &TorusGrid<f64>) -> Result<ScalarField<f64>, ConfigError> {
        let field = match (&self.psi_expr, self.psi_const) {
            (Some(e), _) => ScalarField::from_fn(grid, |pos| expr::eval(e.ast(), pos)),
            (None, Some(v)) => ScalarField::constant(grid, v),
            (None, None) => unreachable!("psi spec always parsed"),
        };
        let min = field.min();
        if !(min > 0.0) || !min.is_finite() {
            return Err(invalid(format!(
                "psi must be positive on the whole grid (min value {min}); the equation requires psi >= c > 0"
            )));
        }
        Ok(field)
    }

    /// Manufactured solution at an arbitrary grid size.
    pub fn build_u_star(&self, grid: &TorusGrid<f64>) -> Option<ScalarField<f64>> {
        self.manufactured
            .as_ref()
            .map(|e| ScalarField::from_fn(grid, |pos| expr::eval(e.ast(), pos)))
    }

    /// Continuum right hand side consistent with the manufactured solution:
    /// `chi + ∂∂̄ u*` assembled from symbolic second derivatives, then the
    /// sitewise quotient (exact up to roundoff, so the discrete solve error
    /// is pure truncation).
    pub fn build_manufactured_psi(
        &self,
        grid: &TorusGrid<f64>,
    ) -> Result<ScalarField<f64>, ConfigError> {
        let u = self
            .manufactured
            .as_ref()
            .ok_or_else(|| invalid("manufactured_u is required for this operation"))?;
        let axes = 2 * self.params.n();
        let mut second: Vec<Vec<Ast>> = Vec::with_capacity(axes);
        for a in 0..axes {
            let da = expr::derivative(u.ast(), a as u8);
            let mut row = Vec::with_capacity(axes);
            for b in 0..axes {
                row.push(expr::derivative(&da, b as u8));
            }
            second.push(row);
        }
        let chi = self.build_chi(grid);
        let n = self.params.n();
        let p = self.params;
        let metric = &self.metric;
        let values: Vec<f64> = (0..grid.site_count())
            .map(|idx| {
                let coords = grid.coords_of(idx);
                let pos = grid.position(&coords);
                let pos = &pos[..axes];
                let mut m = chi.site(idx);
                for i in 0..n {
                    let (xi, yi) = (2 * i, 2 * i + 1);
                    let dxx = expr::eval(&second[xi][xi], pos);
                    let dyy = expr::eval(&second[yi][yi], pos);
                    m.set_diag(i, m.get(i, i).re + 0.25 * (dxx + dyy));
                    for j in (i + 1)..n {
                        let (xj, yj) = (2 * j, 2 * j + 1);
                        let re = 0.25
                            * (expr::eval(&second[xi][xj], pos)
                                + expr::eval(&second[yi][yj], pos));
                        let im = 0.25
                            * (expr::eval(&second[xi][yj], pos)
                                - expr::eval(&second[yi][xj], pos));
                        m.set_pair(i, j, m.get(i, j) + Complex::new(re, im));
                    }
                }
                let (vals, _) = metric.eig_rel(&m, false);
                if vals[n - 1] <= 0.0 {
                    return f64::NAN;
                }
                let f = hessq::symfunc::quotient_unchecked(&vals[..n], p);
                p.binomial::<f64>() * f.powi(p.m() as i32)
            })
            .collect();
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(invalid(
                "manufactured_u is not admissible against chi (the quotient degenerates)",
            ));
        }
        ScalarField::from_values(grid, values).map_err(|e| invalid(e.to_string()))
    }
}

fn parse_opt_expr(
    src: &Option<String>,
    axes: usize,
    what: &str,
) -> Result<Option<PsiExpression>, ConfigError> {
    match src {
        None => Ok(None),
        Some(s) => {
            let e = expr::parse_expr(s).map_err(|e| invalid(format!("{what}: {e}")))?;
            check_axes(&e, axes, what)?;
            Ok(Some(e))
        }
    }
}

fn check_axes(e: &PsiExpression, axes: usize, what: &str) -> Result<(), ConfigError> {
    if let Some(max) = expr::max_axis(e.ast()) {
        if max as usize >= axes {
            return Err(invalid(format!(
                "{what} references {} but the problem has only {} real axes",
                expr::var_name(max),
                axes
            )));
        }
    }
    Ok(())
}

fn parse_matrix(spec: &MatrixSpec, n: usize, what: &str) -> Result<HermMat<f64>, ConfigError> {
    if spec.len() != n || spec.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("{what} must be an {n} x {n} matrix")));
    }
    let rows: Vec<Vec<Complex<f64>>> = spec
        .iter()
        .map(|r| r.iter().map(|&[re, im]| Complex::new(re, im)).collect())
        .collect();
    HermMat::from_entries(n, &rows).map_err(|e| invalid(format!("{what}: {e}")))
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
