//! End-to-end runs through the command drivers: exit codes and artifacts.

use std::fs;

use hessq_cli::{run, Subcommand};

fn write_config(dir: &std::path::Path, value: serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

#[test]
fn trivial_solve_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "n": 2, "m": 1, "N": 8,
            "psi": {"kind": "constant", "value": 1.0},
            "steps": 4
        }),
    );
    let out = dir.path().join("out");
    let code = run(Subcommand::Solve, &cfg, Some(out.clone()), true);
    assert_eq!(code, 0);
    for name in ["probes.csv", "final_u.f64", "final_u.meta.json", "summary.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    // Final u is sup-normalized and essentially zero.
    let bytes = fs::read(out.join("final_u.f64")).unwrap();
    let max_abs = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()).abs())
        .fold(0.0f64, f64::max);
    assert!(max_abs <= 1e-9, "trivial final u not flat: {max_abs}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exit_status"], 0);
    assert!(summary["b"].as_f64().unwrap().abs() <= 1e-9);
}

#[test]
fn both_methods_share_probe_stream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "n": 2, "m": 1, "N": 8,
            "psi": {"kind": "constant", "value": 1.2},
            "method": "both",
            "steps": 3,
            "record_every": 50
        }),
    );
    let out = dir.path().join("out");
    let code = run(Subcommand::Solve, &cfg, Some(out.clone()), true);
    assert_eq!(code, 0);
    let probes = fs::read_to_string(out.join("probes.csv")).unwrap();
    let lines: Vec<&str> = probes.lines().collect();
    // Header + 4 continuity states + at least one flow record, with
    // contiguous step numbering.
    assert!(lines.len() >= 6, "{}", probes);
    for (k, line) in lines.iter().skip(1).enumerate() {
        assert!(line.starts_with(&format!("{k},")), "step column broken: {line}");
    }
}

#[test]
fn negative_psi_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "n": 2, "m": 1, "N": 8,
            "psi": {"kind": "expression", "source": "-1"}
        }),
    );
    let code = run(Subcommand::Solve, &cfg, Some(dir.path().join("out")), true);
    assert_eq!(code, 2);
}

#[test]
fn perturbed_chi_and_metric_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "n": 2, "m": 1, "N": 8,
            "psi": {"kind": "constant", "value": 1.0},
            "g": [[[2.0, 0.0], [0.3, 0.1]], [[0.3, -0.1], [1.0, 0.0]]],
            "chi": {
                "kind": "expression-perturbed",
                "base": [[[2.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [2.0, 0.0]]],
                "perturbations": [
                    {"i": 1, "j": 2, "re": "0.05*cos(x1)", "im": "0.05*sin(y2)"}
                ]
            },
            "steps": 4
        }),
    );
    let out = dir.path().join("out");
    let code = run(Subcommand::Solve, &cfg, Some(out.clone()), true);
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["residual_inf"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn missing_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(
        Subcommand::Solve,
        &dir.path().join("nope.json"),
        None,
        true,
    );
    assert_eq!(code, 2);
}

#[test]
fn certify_writes_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "n": 2, "m": 1, "N": 8,
            "psi": {"kind": "constant", "value": 1.0},
            "chi": {"kind": "constant",
                    "base": [[[2.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [2.0, 0.0]]]},
            "certify": {"delta": 0.1, "samples": 5000},
            "seed": 9
        }),
    );
    let out = dir.path().join("out");
    let code = run(Subcommand::Certify, &cfg, Some(out.clone()), true);
    assert_eq!(code, 0);
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    for key in ["delta", "radius", "theta", "theta_cap", "kappa", "tau", "seed"] {
        assert!(cert.get(key).is_some(), "certificate missing {key}");
    }
    assert!(cert["radius"].as_f64().unwrap() > 0.0);
    assert_eq!(cert["seed"].as_u64().unwrap(), 9);
    // mu = (2,2), h = 1: tau = 1/2 exactly.
    assert!((cert["tau"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn certify_failure_exits_three() {
    // chi admissible but not a subsolution for a large psi level: limits
    // along each direction equal 2 < h.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "n": 2, "m": 1, "N": 8,
            // psi = C(2,1) h with h = 10: limits of f at mu=(2,2) are 2 < 10.
            "psi": {"kind": "constant", "value": 20.0},
            "chi": {"kind": "constant",
                    "base": [[[2.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [2.0, 0.0]]]}
        }),
    );
    let code = run(Subcommand::Certify, &cfg, Some(dir.path().join("out")), true);
    assert_eq!(code, 3);
}

#[test]
fn sweep_without_manufactured_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "n": 1, "m": 1, "N": 8,
            "psi": {"kind": "constant", "value": 1.0}
        }),
    );
    let code = run(Subcommand::Sweep, &cfg, Some(dir.path().join("out")), true);
    assert_eq!(code, 2);
}

#[test]
fn sweep_writes_decreasing_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "n": 1, "m": 1, "N": 8,
            "psi": {"kind": "constant", "value": 1.0},
            "manufactured_u": "0.2*sin(x1)*cos(y1)",
            "sweep_grids": [8, 16, 32]
        }),
    );
    let out = dir.path().join("out");
    let code = run(Subcommand::Sweep, &cfg, Some(out.clone()), true);
    assert_eq!(code, 0);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut errors = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        errors.push(cols[1].parse::<f64>().unwrap());
    }
    assert_eq!(errors.len(), 3);
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}
