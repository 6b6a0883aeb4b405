use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use plaplab::Error;
use plaplab_cli::{parse_config, run, seed_stream, ExperimentConfig};
use rand::Rng;

fn config(text: &str) -> ExperimentConfig {
    parse_config(text).unwrap()
}

fn files_in(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn solve_affine_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"kind": "solve", "mesh": {"rect": [0,1,0,1], "n": 8}, "sigma": "1", "p": 3, "f": "x1", "expect_energy": 1.0}"#);
    let m = run(&cfg, dir.path(), dir.path()).unwrap();
    assert!(m.passed());
    assert!((m.summary["energy"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(m.verdicts.len(), 2);
}

#[test]
fn mono_closed_form_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{"kind": "mono", "mesh": {"rect": [0,1,0,1], "n": 8}, "sigma": 2, "sigma2": 1, "p": 2,
            "dictionary": {"kind": "exprs", "entries": [["x1", "x1"]]}}"#,
    );
    let m = run(&cfg, dir.path(), dir.path()).unwrap();
    assert!(m.verdicts["sandwich"]);
    let csv = std::fs::read_to_string(dir.path().join("mono.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "x1");
    let vals: Vec<f64> = row[1..].iter().map(|s| s.parse().unwrap()).collect();
    for (v, e) in vals.iter().zip([0.5, 1.0, 1.0]) {
        assert!((v - e).abs() < 1e-10);
    }
}

#[test]
fn mono_ordering_violation_fails_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = config(r#"{"kind": "mono", "sigma": "1", "sigma2": "1 + chi(0,0.5,0,1)", "p": 2}"#);
    let e = run(&cfg, dir.path(), &out).unwrap_err();
    assert!(matches!(e, Error::PreconditionViolation(_)));
    assert!(files_in(&out).is_empty());
}

#[test]
fn manifest_lists_every_file() {
    for text in [
        r#"{"kind": "dn", "mesh": {"rect": [0,1,0,1], "n": 6}, "p": 3, "dictionary": {"kind": "default", "count": 3, "width": 0.3}}"#,
        r#"{"kind": "ucp", "mesh": {"rect": [0,1,0,1], "n": 8}, "p": 4, "sigma": "1 + 0.2*x1", "f": "x1 + x2^2"}"#,
        r#"{"kind": "detect", "mesh": {"rect": [0,1,0,1], "n": 8}, "sigma": "1 + chi(0.25,0.75,0.25,0.75)", "sigma2": 1, "p": 2}"#,
        r#"{"kind": "calibrate-eps", "mesh": {"rect": [0,1,0,1], "n": 6}, "p": 2, "ladder": [1.0, 0.1, 0.01]}"#,
    ] {
        let dir = tempfile::tempdir().unwrap();
        let m = run(&config(text), dir.path(), dir.path()).unwrap();
        let listed: BTreeSet<String> = m.outputs.iter().map(|o| o.path.clone()).collect();
        assert_eq!(listed, files_in(dir.path()), "{text}");
        assert!(m.passed(), "{text}: {:?}", m.verdicts);
    }
}

#[test]
fn runs_are_reproducible_for_a_seed() {
    let text = r#"{"kind": "perturb", "mesh": {"rect": [0,1,0,1], "n": 8}, "p": 2, "direction": {"random": 1.0}, "seed": 11}"#;
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run(&config(text), a.path(), a.path()).unwrap();
    let mb = run(&config(text), b.path(), b.path()).unwrap();
    assert_eq!(ma.config_hash, mb.config_hash);
    for o in &ma.outputs {
        if o.path == "manifest.json" {
            continue;
        }
        let x = std::fs::read(a.path().join(&o.path)).unwrap();
        let y = std::fs::read(b.path().join(&o.path)).unwrap();
        assert_eq!(x, y, "{}", o.path);
    }
    assert_eq!(ma.summary, mb.summary);

    let mut other = config(text);
    other.seed = 12;
    let mc = run(&other, c.path(), c.path()).unwrap();
    assert_ne!(ma.config_hash, mc.config_hash);
    assert_ne!(
        std::fs::read(a.path().join("perturb.csv")).unwrap(),
        std::fs::read(c.path().join("perturb.csv")).unwrap()
    );
}

#[test]
fn seed_streams_are_independent_by_name() {
    let x: f64 = seed_stream(5, "a").random();
    let y: f64 = seed_stream(5, "a").random();
    let z: f64 = seed_stream(5, "b").random();
    assert_eq!(x, y);
    assert_ne!(x, z);
}

#[test]
fn config_errors_are_located() {
    let e = parse_config("{\n  \"kind\": \"solve\",\n  \"p\": 2,\n  \"sgima\": 1\n}").unwrap_err();
    let s = e.to_string();
    assert!(s.contains("line 4"), "{s}");
    let e = config(r#"{"kind": "solve", "p": 0.5}"#).validate().unwrap_err();
    assert!(e.to_string().contains("'p'"));
    let e = config(r#"{"kind": "mono", "p": 2}"#).validate().unwrap_err();
    assert!(e.to_string().contains("sigma2"));
    let dir = tempfile::tempdir().unwrap();
    let e = run(&config(r#"{"kind": "solve", "p": 2, "sigma": "1 + "}"#), dir.path(), dir.path()).unwrap_err();
    assert!(e.to_string().contains("offset"), "{e}");
}

#[test]
fn mesh_and_field_files_resolve_relative_to_config() {
    use plaplab::io::{write_field, write_mesh, FieldData, FieldFile, Location};
    let dir = tempfile::tempdir().unwrap();
    let mesh = plaplab::build_structured_mesh(plaplab::Rect::unit_square(), 4).unwrap();
    write_mesh(&dir.path().join("m.txt"), &mesh).unwrap();
    let s = FieldFile {
        location: Location::Cell,
        data: FieldData::Scalar(vec![2.0; mesh.num_cells()]),
    };
    write_field(&dir.path().join("s.field"), &s).unwrap();
    let cfg = config(r#"{"kind": "solve", "mesh": {"file": "m.txt"}, "sigma": {"file": "s.field"}, "p": 2, "expect_energy": 2.0}"#);
    let out = dir.path().join("out");
    let m = run(&cfg, dir.path(), &out).unwrap();
    assert!(m.passed(), "{:?}", m.verdicts);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plaplab"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"mesh": {"rect": [0,1,0,1], "n": 4}, "p": 2, "expect_energy": 1.0}"#).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"mesh": {"rect": [0,1,0,1], "n": 4}, "p": 2, "expect_energy": 3.0}"#).unwrap();

    let st = bin().args(["solve", "--config"]).arg(&good).args(["--threads", "1", "--out"]).arg(dir.path().join("a")).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(String::from_utf8_lossy(&st.stdout).contains("PASS expected_energy"));

    let st = bin().args(["solve", "--config"]).arg(&bad).arg("--out").arg(dir.path().join("b")).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stdout).contains("FAIL expected_energy"));

    // kind in the file must match the subcommand
    let mono = dir.path().join("mono.json");
    std::fs::write(&mono, r#"{"kind": "mono", "sigma2": 1, "p": 2}"#).unwrap();
    let st = bin().args(["solve", "--config"]).arg(&mono).arg("--out").arg(dir.path().join("c")).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let st = bin().args(["solve", "--config"]).arg(&good).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("--out"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.json");
    std::fs::write(&cfg, r#"{"mesh": {"rect": [0,1,0,1], "n": 6}, "p": 2, "direction": {"random": 0.5}, "seed": 1}"#).unwrap();
    for (seed, out) in [("3", "x"), ("3", "y")] {
        let st = bin().args(["perturb", "--seed", seed, "--config"]).arg(&cfg).arg("--out").arg(dir.path().join(out)).output().unwrap();
        assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("x/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 3);
    assert_eq!(
        std::fs::read(dir.path().join("x/perturb.csv")).unwrap(),
        std::fs::read(dir.path().join("y/perturb.csv")).unwrap()
    );
}
