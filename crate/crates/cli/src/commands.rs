//! Subcommand drivers: build the problem from a config, run it, and emit the
//! artifacts (certificate, probe CSV, field dumps, summary).
//!
//! Exit codes: 0 success, 2 validation error, 3 solver failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use hessq::cone::{self, ConeCertificate, SamplingCfg};
use hessq::geometry::{self, eigen_rel, io as field_io, ScalarField};
use hessq::probes::{self, EstimateRecord, StepInfo, SweepProblem};
use hessq::solver::{continuity_run, flow_run, flow_stable_dt, Equation};

use crate::config::{self, Method, Setup};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Certify,
    Solve,
    Flow,
    Sweep,
}

#[derive(Serialize)]
struct Summary {
    b: Option<f64>,
    residual_inf: Option<f64>,
    wall_time_s: f64,
    exit_status: i32,
}

struct Reporter {
    quiet: bool,
}

impl Reporter {
    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("hessq: {msg}");
        }
    }
    fn warn(&self, msg: &str) {
        eprintln!("hessq: warning: {msg}");
    }
    fn error(&self, msg: &str) {
        eprintln!("hessq: error: {msg}");
    }
}

/// Entry point shared by the binary and the tests.
pub fn run(
    sub: Subcommand,
    config_path: &Path,
    output_override: Option<PathBuf>,
    quiet: bool,
) -> i32 {
    let log = Reporter { quiet };
    let started = Instant::now();
    let cfg = match config::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            log.error(&e.to_string());
            return EXIT_VALIDATION;
        }
    };
    let out_dir = output_override
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = fs::create_dir_all(&out_dir) {
        log.error(&format!("cannot create output dir: {e}"));
        return EXIT_VALIDATION;
    }
    let setup = match Setup::from_config(cfg) {
        Ok(s) => s,
        Err(e) => {
            log.error(&e.to_string());
            return EXIT_VALIDATION;
        }
    };
    // The default subsolution candidate is ubar = 0, i.e. chi itself must be
    // an admissible background.
    let chi_spectra = eigen_rel(&setup.chi, &setup.metric);
    let mut chi_spec_min = f64::INFINITY;
    for s in 0..chi_spectra.site_count() {
        chi_spec_min = chi_spec_min.min(chi_spectra.site(s)[setup.params.n() - 1]);
    }
    if !(chi_spec_min > 0.0) {
        log.error(&format!(
            "chi is not an admissible background (min relative eigenvalue {chi_spec_min}); \
             the default candidate ubar = 0 requires chi > 0"
        ));
        return EXIT_VALIDATION;
    }

    let code = match sub {
        Subcommand::Certify => cmd_certify(&setup, chi_spec_min, &out_dir, &log, started),
        Subcommand::Solve => cmd_solve(&setup, setup.config.method, chi_spec_min, &out_dir, &log, started),
        Subcommand::Flow => cmd_solve(&setup, Method::Flow, chi_spec_min, &out_dir, &log, started),
        Subcommand::Sweep => cmd_sweep(&setup, &out_dir, &log, started),
    };
    code
}

fn write_summary(
    out_dir: &Path,
    b: Option<f64>,
    residual_inf: Option<f64>,
    started: Instant,
    code: i32,
) {
    let summary = Summary {
        b,
        residual_inf,
        wall_time_s: started.elapsed().as_secs_f64(),
        exit_status: code,
    };
    if let Ok(text) = serde_json::to_string_pretty(&summary) {
        let _ = fs::write(out_dir.join("summary.json"), text);
    }
}

/// Level field h with psi = C(n,m) h^m.
fn level_field(setup: &Setup) -> ScalarField<f64> {
    let c: f64 = setup.params.binomial();
    let m = setup.params.m() as f64;
    let mut h = setup.psi.clone();
    h.values_mut()
        .iter_mut()
        .for_each(|v| *v = (*v / c).powf(1.0 / m));
    h
}

fn certify(setup: &Setup, chi_spec_min: f64, log: &Reporter) -> Result<ConeCertificate<f64>, cone::ConeError> {
    // Shrink delta when the background cannot absorb the requested shift.
    let mut delta = setup.config.certify.delta;
    let cap = 0.5 * chi_spec_min;
    if delta > cap {
        log.warn(&format!(
            "certify delta {delta} exceeds half the spectral margin of chi; shrinking to {cap}"
        ));
        delta = cap;
    }
    let mu = eigen_rel(&setup.chi, &setup.metric);
    let h = level_field(setup);
    cone::certify_field(
        &mu,
        h.values(),
        setup.params,
        delta,
        &SamplingCfg {
            samples: setup.config.certify.samples,
            seed: setup.config.seed,
        },
    )
}

fn cmd_certify(
    setup: &Setup,
    chi_spec_min: f64,
    out_dir: &Path,
    log: &Reporter,
    started: Instant,
) -> i32 {
    match certify(setup, chi_spec_min, log) {
        Ok(cert) => {
            let text = serde_json::to_string_pretty(&cert).expect("certificate serializes");
            if fs::write(out_dir.join("certificate.json"), text).is_err() {
                log.error("cannot write certificate.json");
                write_summary(out_dir, None, None, started, EXIT_VALIDATION);
                return EXIT_VALIDATION;
            }
            log.note(&format!(
                "certificate: delta={} R={} theta={} Theta={} kappa={} tau={}",
                cert.delta, cert.radius, cert.theta, cert.theta_cap, cert.kappa, cert.tau
            ));
            write_summary(out_dir, None, None, started, EXIT_OK);
            EXIT_OK
        }
        Err(e) => {
            log.error(&format!("certification failed: {e}"));
            write_summary(out_dir, None, None, started, EXIT_SOLVER);
            EXIT_SOLVER
        }
    }
}

fn cmd_solve(
    setup: &Setup,
    method: Method,
    chi_spec_min: f64,
    out_dir: &Path,
    log: &Reporter,
    started: Instant,
) -> i32 {
    let eq = Equation::new(&setup.chi, &setup.metric, setup.params);
    let cert = match certify(setup, chi_spec_min, log) {
        Ok(c) => Some(c),
        Err(e) => {
            log.warn(&format!(
                "certification failed ({e}); the dichotomy census is disabled for this run"
            ));
            None
        }
    };
    let ubar = ScalarField::zeros(&setup.grid);
    let mut records: Vec<EstimateRecord<f64>> = Vec::new();
    let mut final_u: Option<(ScalarField<f64>, f64, f64)> = None; // (u, b, residual)

    if matches!(method, Method::Continuity | Method::Both) {
        let v = ScalarField::zeros(&setup.grid);
        match continuity_run(&eq, &v, &setup.psi, setup.config.steps, &setup.newton) {
            Ok(run) => {
                if run.supersolution_violation > 0.0 {
                    log.warn(&format!(
                        "supersolution hypothesis fails by {:e}; the bound e^b_t <= 1 is not guaranteed",
                        run.supersolution_violation
                    ));
                }
                for (k, st) in run.states.iter().enumerate() {
                    match probes::record_step(
                        StepInfo {
                            step: records.len(),
                            t: st.t,
                            b_t: st.b,
                            newton_iters: st.newton_iters,
                            residual_inf: st.residual_inf,
                        },
                        &st.u,
                        &ubar,
                        cert.as_ref(),
                        &eq,
                    ) {
                        Ok(rec) => records.push(rec),
                        Err(e) => log.warn(&format!("probe failed at state {k}: {e}")),
                    }
                }
                let (u_out, b) = run.final_sup_normalized(&v);
                final_u = Some((u_out, b, run.final_state().residual_inf));
                log.note(&format!(
                    "continuity: {} states, b = {}, residual = {:e}",
                    run.states.len(),
                    run.final_state().b,
                    run.final_state().residual_inf
                ));
            }
            Err(e) => {
                log.error(&format!("continuity solve failed: {e}"));
                let _ = probes::write_csv(
                    &records,
                    fs::File::create(out_dir.join("probes.csv")).expect("create probes.csv"),
                );
                write_summary(out_dir, None, None, started, EXIT_SOLVER);
                return EXIT_SOLVER;
            }
        }
    }

    if matches!(method, Method::Flow | Method::Both) {
        let u0 = ScalarField::zeros(&setup.grid);
        let bound = match flow_stable_dt(&eq, &u0) {
            Ok(b) => b,
            Err(e) => {
                log.error(&format!("flow cannot start: {e}"));
                write_summary(out_dir, None, None, started, EXIT_SOLVER);
                return EXIT_SOLVER;
            }
        };
        let dt = setup
            .config
            .flow
            .dt_max
            .map_or(0.9 * bound, |cap| cap.min(0.9 * bound));
        let every = setup.config.record_every;
        let base_step = records.len();
        let mut flow_records: Vec<(usize, f64, ScalarField<f64>, f64, f64)> = Vec::new();
        let result = flow_run(
            &eq,
            &u0,
            &setup.psi,
            dt,
            setup.config.flow.t_end,
            |step, time, u, drift, res| {
                if step % every == 0 {
                    flow_records.push((step, time, u.clone(), drift, res));
                }
            },
        );
        match result {
            Ok(run) => {
                // Make sure the terminal state is recorded.
                if flow_records.last().map(|r| r.0) != Some(run.steps) {
                    flow_records.push((
                        run.steps,
                        run.state.time,
                        run.state.u.clone(),
                        run.state.drift,
                        run.residual_inf,
                    ));
                }
                for (k, (_, time, u, drift, res)) in flow_records.iter().enumerate() {
                    match probes::record_step(
                        StepInfo {
                            step: base_step + k,
                            t: *time,
                            b_t: *drift,
                            newton_iters: 0,
                            residual_inf: *res,
                        },
                        u,
                        &ubar,
                        cert.as_ref(),
                        &eq,
                    ) {
                        Ok(rec) => records.push(rec),
                        Err(e) => log.warn(&format!("flow probe failed: {e}")),
                    }
                }
                log.note(&format!(
                    "flow: {} steps to time {}, drift b = {}, residual = {:e}",
                    run.steps, run.state.time, run.state.drift, run.residual_inf
                ));
                if final_u.is_none() {
                    let mut u_out = run.state.u.clone();
                    let sup = u_out.max();
                    u_out.values_mut().iter_mut().for_each(|v| *v -= sup);
                    final_u = Some((u_out, run.state.drift, run.residual_inf));
                }
            }
            Err(e) => {
                log.error(&format!("flow failed: {e}"));
                let _ = probes::write_csv(
                    &records,
                    fs::File::create(out_dir.join("probes.csv")).expect("create probes.csv"),
                );
                write_summary(out_dir, None, None, started, EXIT_SOLVER);
                return EXIT_SOLVER;
            }
        }
    }

    match fs::File::create(out_dir.join("probes.csv")).map(|f| probes::write_csv(&records, f)) {
        Ok(Ok(())) => {}
        _ => {
            log.error("cannot write probes.csv");
            write_summary(out_dir, None, None, started, EXIT_VALIDATION);
            return EXIT_VALIDATION;
        }
    }

    let (u_out, b, residual) = final_u.expect("at least one method ran");
    if let Err(e) = field_io::write_scalar_field(&u_out, out_dir, "final_u") {
        log.error(&format!("cannot write final field: {e}"));
        write_summary(out_dir, Some(b), Some(residual), started, EXIT_VALIDATION);
        return EXIT_VALIDATION;
    }
    write_summary(out_dir, Some(b), Some(residual), started, EXIT_OK);
    EXIT_OK
}

fn cmd_sweep(setup: &Setup, out_dir: &Path, log: &Reporter, started: Instant) -> i32 {
    if setup.manufactured.is_none() {
        log.error("sweep requires `manufactured_u` in the config");
        write_summary(out_dir, None, None, started, EXIT_VALIDATION);
        return EXIT_VALIDATION;
    }
    let chi_builder = |g: &geometry::TorusGrid<f64>| setup.build_chi(g);
    let psi_builder = |g: &geometry::TorusGrid<f64>| {
        setup
            .build_manufactured_psi(g)
            .expect("validated at setup")
    };
    let ustar_builder = |g: &geometry::TorusGrid<f64>| setup.build_u_star(g).expect("present");
    // Validate admissibility of the manufactured data at the base grid once.
    if let Err(e) = setup.build_manufactured_psi(&setup.grid) {
        log.error(&e.to_string());
        write_summary(out_dir, None, None, started, EXIT_VALIDATION);
        return EXIT_VALIDATION;
    }
    let problem = SweepProblem {
        params: setup.params,
        period: setup.grid.period(),
        metric: &setup.metric,
        chi: &chi_builder,
        psi: &psi_builder,
        u_star: &ustar_builder,
        newton: setup.newton,
    };
    let table = probes::convergence_sweep(&problem, &setup.config.sweep_grids);
    let failed = table.rows.iter().any(|r| r.failure.is_some());
    match fs::File::create(out_dir.join("sweep.csv")).map(|f| table.write_csv(f)) {
        Ok(Ok(())) => {}
        _ => {
            log.error("cannot write sweep.csv");
            write_summary(out_dir, None, None, started, EXIT_VALIDATION);
            return EXIT_VALIDATION;
        }
    }
    for r in &table.rows {
        match (&r.failure, r.error_inf, r.observed_order) {
            (Some(msg), _, _) => log.note(&format!("N={}: failed: {msg}", r.points)),
            (None, Some(e), Some(o)) => {
                log.note(&format!("N={}: error={e:e} order={o:.3}", r.points))
            }
            (None, Some(e), None) => log.note(&format!("N={}: error={e:e}", r.points)),
            _ => {}
        }
    }
    let code = if failed { EXIT_SOLVER } else { EXIT_OK };
    write_summary(out_dir, None, None, started, code);
    code
}
