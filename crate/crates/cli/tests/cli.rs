use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mimax_cli::scenario::Scenario;
use mimax_cli::snapshot::{SnapshotError, Species};
use mimax_cli::{run_experiment, ExperimentKind, RunOptions, Snapshot};
use mimax_core::grid::{build_grid, GridSpec};
use proptest::prelude::*;
use serde_json::Value;

const BOX: &str = r#"
[grid]
cells = [3, 3, 3]
spacing = 0.25

[feedback]
k = 1.0

[partition]
gamma1 = ["+x"]
"#;

fn scenario_dir(text: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    fs::write(&path, text).unwrap();
    (dir, path)
}

fn run(verb: ExperimentKind, text: &str) -> (tempfile::TempDir, mimax_cli::RunOutcome) {
    let (dir, path) = scenario_dir(text);
    let opts = RunOptions {
        output: Some(dir.path().join("out")),
        ..RunOptions::default()
    };
    let out = run_experiment(verb, &path, &opts);
    (dir, out)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

#[test]
fn shipped_scenarios_parse() {
    for entry in fs::read_dir(shipped("")).unwrap() {
        let p = entry.unwrap().path();
        mimax_cli::load_scenario(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    let s = mimax_cli::load_scenario(&shipped("verify.toml")).unwrap();
    assert_eq!(s.grid.cells, [4, 4, 4]);
    assert_eq!(s.experiment.kind, Some(ExperimentKind::Verify));
    assert_eq!(s.partition.gamma1, vec!["+x".to_string()]);
}

#[test]
fn misspelled_key_is_named() {
    let text = BOX.replace("[feedback]", "[materials]\nepsilonn = 2.0\n\n[feedback]") + "[experiment]\n";
    let err = Scenario::parse(&text, "s.toml").unwrap_err().to_string();
    assert!(err.contains("epsilonn"), "{err}");
}

#[test]
fn nonpositive_dt_is_rejected() {
    for dt in ["0.0", "-0.1"] {
        let text = format!("{BOX}[experiment]\ndt = {dt}\n");
        let err = Scenario::parse(&text, "s.toml").unwrap_err().to_string();
        assert!(err.contains("experiment.dt"), "{err}");
    }
}

#[test]
fn other_schema_violations() {
    let bad = [
        format!("{BOX}[experiment]\ntol = 0.0\n"),
        format!("{BOX}[experiment]\nkind = \"spectra\"\n"),
        format!("{BOX}[experiment]\npatch = [\"+w\"]\n"),
        format!("{BOX}[experiment]\nx0 = \"snapshot\"\n"),
        BOX.replace("spacing = 0.25", "spacing = -1.0") + "[experiment]\n",
        BOX.replace("gamma1 = [\"+x\"]", "gamma1 = [\"x\"]") + "[experiment]\n",
    ];
    for t in &bad {
        assert!(Scenario::parse(t, "s.toml").is_err(), "accepted:\n{t}");
    }
}

#[test]
fn omega_grid() {
    let s = Scenario::parse(&format!("{BOX}[experiment]\nomega_min = 1.0\nomega_max = 2.0\nomega_count = 3\n"), "s").unwrap();
    assert_eq!(s.omegas(), vec![1.0, 1.5, 2.0]);
}

proptest! {
    #[test]
    fn snapshot_round_trip_is_bit_exact(bits in prop::collection::vec(any::<u64>(), 0..200), d in 1usize..5) {
        let snap = Snapshot {
            dims: [d, d + 1, 2],
            spacing: 0.125,
            species: Species::Face,
            values: bits.iter().map(|b| f64::from_bits(*b)).collect(),
        };
        let bytes = snap.to_bytes();
        let back = Snapshot::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        let back_bits: Vec<u64> = back.values.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(back_bits, bits);
    }
}

#[test]
fn snapshot_header_checks() {
    let dm = build_grid(&GridSpec::full_box([2, 2, 2], 0.5)).unwrap();
    let snap = Snapshot::new(&dm, Species::Edge, vec![1.0; dm.n_edges()]);
    let other = build_grid(&GridSpec::full_box([2, 2, 3], 0.5)).unwrap();
    assert!(matches!(snap.check(&other, Species::Edge), Err(SnapshotError::Mismatch(_))));
    assert!(matches!(snap.check(&dm, Species::Face), Err(SnapshotError::Mismatch(_))));
    snap.check(&dm, Species::Edge).unwrap();

    let bytes = snap.to_bytes();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Snapshot::from_bytes(&bad), Err(SnapshotError::Magic(_))));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(Snapshot::from_bytes(&bad), Err(SnapshotError::Version(9))));
    assert!(matches!(
        Snapshot::from_bytes(&bytes[..bytes.len() - 3]),
        Err(SnapshotError::Truncated { .. })
    ));
    assert!(matches!(Snapshot::from_bytes(&bytes[..10]), Err(SnapshotError::Truncated { .. })));
}

#[test]
fn verify_writes_passing_table() {
    let (dir, out) = run(ExperimentKind::Verify, &format!("{BOX}[experiment]\nprobes = 20\n"));
    assert!(out.error.is_none(), "{:?}", out.error);
    let table = fs::read_to_string(dir.path().join("out/verify.csv")).unwrap();
    assert!(table.starts_with("check,value,tolerance,pass\n"));
    assert!(table.lines().skip(1).all(|l| l.ends_with(",true")), "{table}");
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["partial"], false);
}

#[test]
fn undamped_spectrum_is_imaginary() {
    let text = r#"
[grid]
cells = [3, 3, 3]
spacing = 0.3333333333333333

[partition]
allow_undamped = true

[experiment]
kind = "spectrum"
"#;
    let (dir, out) = run(ExperimentKind::Spectrum, text);
    assert!(out.error.is_none(), "{:?}", out.error);
    let s = json(&dir.path().join("out/spectrum.json"));
    let eig = s["eigenvalues"].as_array().unwrap();
    assert!(!eig.is_empty());
    for l in eig {
        assert!(l["re"].as_f64().unwrap().abs() < 1e-9);
        assert!(l["im"].as_f64().unwrap().abs() > 1e-6);
    }
}

#[test]
fn zero_state_gives_flat_trajectory() {
    let (dir, out) = run(
        ExperimentKind::Simulate,
        &format!("{BOX}[experiment]\nx0 = \"zero\"\ndt = 0.1\nt_final = 1.0\n"),
    );
    assert!(out.error.is_none(), "{:?}", out.error);
    let text = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,energy,dissipation_rate,norm_h,div_residual_d,div_residual_b,dist_cohomology"
    );
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r[1..].iter().all(|v| *v == 0.0)));
}

/// Decompose writes snapshots that simulate accepts as initial data: the
/// equilibrium stays put and the dynamic part evolves.
#[test]
fn decompose_snapshots_feed_simulate() {
    let (dir, out) = run(ExperimentKind::Decompose, &format!("{BOX}[experiment]\nseed = 4\n"));
    assert!(out.error.is_none(), "{:?}", out.error);
    let d = dir.path().join("out");
    let report = json(&d.join("decompose.json"));
    assert!(report["residuals"]["gauss_e"].as_f64().unwrap() < 1e-10);

    for (e, h, moving) in [("e_dyn.mxw", "h_dyn.mxw", true), ("e_eq.mxw", "h_eq.mxw", false)] {
        let text = format!(
            "{BOX}[experiment]\nx0 = \"snapshot\"\nx0_e = \"{}\"\nx0_h = \"{}\"\ndt = 0.1\nt_final = 0.5\n",
            d.join(e).display(),
            d.join(h).display()
        );
        let (sdir, sout) = run(ExperimentKind::Simulate, &text);
        assert!(sout.error.is_none(), "{:?}", sout.error);
        let summary = json(&sdir.path().join("out/simulate.json"));
        let e0 = summary["initial_energy"].as_f64().unwrap();
        let enorm = report["norms"]["e_dynamic"].as_f64().unwrap();
        let hnorm = report["norms"]["h_dynamic"].as_f64().unwrap();
        if moving {
            let expect = 0.5 * (enorm * enorm + hnorm * hnorm);
            assert!((e0 - expect).abs() < 1e-8 * expect, "{e0} vs {expect}");
        } else {
            let scale = report["norms"]["e_equilibrium"].as_f64().unwrap().powi(2);
            assert!(e0 < 1e-16 * scale.max(1.0), "equilibrium carried dynamic energy {e0}");
        }
        let fin = mimax_cli::read_snapshot(&sdir.path().join("out/e_final.mxw")).unwrap();
        assert_eq!(fin.species, Species::Edge);
    }
}

#[test]
fn same_seed_same_reports() {
    let text = format!("{BOX}[experiment]\nx0 = \"random\"\nseed = 9\ndt = 0.1\nt_final = 0.5\n");
    let (_a, ra) = run(ExperimentKind::Simulate, &text);
    let (_b, rb) = run(ExperimentKind::Simulate, &text);
    assert!(ra.error.is_none());
    assert_eq!(ra.manifest.artifacts, rb.manifest.artifacts);
    assert_eq!(ra.manifest.scenario_sha256, rb.manifest.scenario_sha256);
    let text2 = text.replace("seed = 9", "seed = 10");
    let (_c, rc) = run(ExperimentKind::Simulate, &text2);
    assert_ne!(ra.manifest.artifacts, rc.manifest.artifacts);
}

#[test]
fn failures_are_reported() {
    let (dir, out) = run(ExperimentKind::Spectrum, &format!("{BOX}[experiment]\nkind = \"verify\"\n"));
    assert_eq!(out.exit_code(), 2);
    let f = json(&dir.path().join("out/failure.json"));
    assert_eq!(f["kind"], "scenario");
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["status"], "failed");

    // fails after the matrix export: partial output
    let text = format!("{BOX}[experiment]\nkind = \"resolvent\"\n[output]\nexport_matrices = true\n");
    let (dir, out) = run(ExperimentKind::Resolvent, &text);
    assert_eq!(out.exit_code(), 2);
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["partial"], true);
    assert!(fs::read_to_string(dir.path().join("out/matrices/C.csv")).unwrap().starts_with("row,col,value\n"));
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_mimax");
    let (dir, path) = scenario_dir(&format!("{BOX}[experiment]\nprobes = 5\n"));
    let ok = Command::new(exe)
        .args(["verify", "--scenario"])
        .arg(&path)
        .arg("--output")
        .arg(dir.path().join("o"))
        .args(["--seed", "3"])
        .status()
        .unwrap();
    assert!(ok.success());
    assert_eq!(json(&dir.path().join("o/manifest.json"))["seed"], 3);

    let (dir, path) = scenario_dir("[grid]\ncells = [2, 2, 2]\n");
    let bad = Command::new(exe)
        .args(["cohomology", "--scenario"])
        .arg(&path)
        .arg("--output")
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
}

#[test]
fn packed_tensor_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for _ in 0..27 {
        for v in [2.0f64, 1.5, 1.0, 0.3, 0.0, 0.2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(dir.path().join("eps.bin"), &bytes).unwrap();
    let text = BOX.replace("[feedback]", "[materials]\nepsilon_file = \"eps.bin\"\n\n[feedback]") + "[experiment]\nprobes = 5\n";
    let path = dir.path().join("s.toml");
    fs::write(&path, &text).unwrap();
    let opts = RunOptions {
        output: Some(dir.path().join("out")),
        ..RunOptions::default()
    };
    let out = run_experiment(ExperimentKind::Verify, &path, &opts);
    assert!(out.error.is_none(), "{:?}", out.error);

    // indefinite tensor is rejected as bad input
    let mut bad = bytes.clone();
    bad[..8].copy_from_slice(&(-1.0f64).to_le_bytes());
    fs::write(dir.path().join("eps.bin"), &bad).unwrap();
    let out = run_experiment(ExperimentKind::Verify, &path, &opts);
    assert_eq!(out.exit_code(), 2);
    fs::write(dir.path().join("eps.bin"), &bytes[..100]).unwrap();
    assert_eq!(run_experiment(ExperimentKind::Verify, &path, &opts).exit_code(), 2);
}

#[test]
fn resolvent_is_even_in_omega() {
    let text = format!("{BOX}[experiment]\nomegas = [-3.0, 0.0, 3.0]\n");
    let (dir, out) = run(ExperimentKind::Resolvent, &text);
    assert!(out.error.is_none(), "{:?}", out.error);
    let r = json(&dir.path().join("out/resolvent.json"));
    let p = r["points"].as_array().unwrap();
    let s: Vec<f64> = p.iter().map(|v| v["sigma_min"].as_f64().unwrap()).collect();
    assert!((s[0] - s[2]).abs() < 1e-10 * s[0]);
    assert!(s[1] > 0.0);
    let csv = fs::read_to_string(dir.path().join("out/resolvent.csv")).unwrap();
    assert!(csv.starts_with("omega,sigma_min,resolvent_norm\n"));
}
