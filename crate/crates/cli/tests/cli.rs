use std::path::Path;
use std::process::{Command, Output};

use harmony_core::codes::{generate, CodeFamily, CodeSpec};
use harmony_core::model::parse_dem;

fn harmony(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmony")).args(args).current_dir(dir).env_remove("HARMONY_SEED").output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = harmony(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn column<'a>(csv: &'a str, name: &str) -> Vec<&'a str> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap()).collect()
}

#[test]
fn gen_writes_model_and_sidecar_with_construction_counts() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--family", "rotated_surface", "--d", "3", "--rounds", "3", "--p", "0.04", "--out", "s.dem"], dir.path());
    let h = parse_dem(&std::fs::read_to_string(dir.path().join("s.dem")).unwrap()).unwrap();
    let want = generate(&CodeSpec::new(CodeFamily::RotatedSurface, 3, 3, 0.04).unwrap()).unwrap();
    assert_eq!(h.num_detectors, want.num_detectors);
    assert_eq!(h.mechanisms.len(), want.mechanisms.len());
    let basis = std::fs::read_to_string(dir.path().join("s.dem.basis")).unwrap();
    assert_eq!(basis.lines().filter(|l| !l.starts_with('#')).count(), h.num_detectors);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| harmony(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["bench", "--help"]), 0);
    assert_eq!(code(&["gen", "--bogus"]), 1);
    assert_eq!(code(&["gen", "--d", "4"]), 1);
    assert_eq!(code(&["gen", "--out", "missing/x.dem"]), 1);
    assert_eq!(code(&["bench", "--alphas", "1,2", "--shots", "1"]), 1);
    assert_eq!(code(&["decode", "--model", "nope.dem", "--shots", "nope.txt"]), 2);
    std::fs::write(dir.path().join("bare.dem"), "error(0.1) D0 D1 L0\nerror(0.1) D0\n").unwrap();
    std::fs::write(dir.path().join("bare.txt"), "11 0\n").unwrap();
    let out = harmony(&["decode", "--model", "bare.dem", "--shots", "bare.txt", "--decoder", "correlated"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--infer-basis"));
    let out = ok(&["decode", "--model", "bare.dem", "--shots", "bare.txt", "--decoder", "exact_ml"], dir.path());
    assert_eq!(out, "1\n");
}

#[test]
fn sample_then_decode_agrees_with_bench() {
    let dir = tempfile::tempdir().unwrap();
    let code = ["--family", "repetition", "--d", "5", "--p", "0.05"];
    ok(&[&["gen"][..], &code, &["--out", "r.dem"]].concat(), dir.path());
    ok(&["sample", "--model", "r.dem", "--rounds", "5", "--shots", "500", "--seed", "3", "--out", "r.txt"], dir.path());
    let out = harmony(&["decode", "--model", "r.dem", "--shots", "r.txt", "--decoder", "mwpm", "--seed", "3"], dir.path());
    assert!(out.status.success());
    let predictions = String::from_utf8(out.stdout).unwrap();
    assert_eq!(predictions.lines().count(), 500);
    let stderr = String::from_utf8(out.stderr).unwrap();
    let failures: u64 = stderr.split_whitespace().nth(1).unwrap().parse().unwrap();
    let bench = ok(&[&["bench"][..], &code, &["--decoder", "mwpm", "--shots", "500", "--seed", "3"]].concat(), dir.path());
    assert_eq!(column(&bench, "failures"), [failures.to_string()]);
}

#[test]
fn unperturbed_single_member_equals_correlated() {
    let dir = tempfile::tempdir().unwrap();
    let csv = ok(
        &["bench", "--d", "3", "--p", "0.05", "--decoder", "correlated,ensemble", "--n", "1", "--pooling", "vote", "--alphas", "0,0,0", "--shots", "2000"],
        dir.path(),
    );
    let failures = column(&csv, "failures");
    assert_eq!(failures.len(), 2);
    assert_eq!(failures[0], failures[1]);
    assert_ne!(failures[0], "0");
}

#[test]
fn scan_chi_is_non_increasing_within_two_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let csv = ok(&["scan-chi", "--d", "3", "--p", "0.04", "--chis", "1,2,4,8,16", "--shots", "2000"], dir.path());
    let ler: Vec<f64> = column(&csv, "ler_shot").iter().map(|s| s.parse().unwrap()).collect();
    let se: Vec<f64> = column(&csv, "stderr").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(column(&csv, "chi"), ["1", "2", "4", "8", "16"]);
    for k in 1..ler.len() {
        let sigma = (se[k] * se[k] + se[k - 1] * se[k - 1]).sqrt();
        assert!(ler[k] <= ler[k - 1] + 2.0 * sigma, "{ler:?}");
    }
}

#[test]
fn layered_fills_improvement_and_json_mirrors_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["layered", "--family", "repetition", "--d", "3", "--p", "0.05", "--n1", "1,3", "--n2", "20", "--shots", "400"];
    let csv = ok(&args, dir.path());
    assert_eq!(column(&csv, "decoder"), ["correlated", "layered", "layered"]);
    let improvement = column(&csv, "improvement");
    assert!(improvement[0].is_empty() && !improvement[1].is_empty());
    ok(&[&args[..], &["--out", "l.json"]].concat(), dir.path());
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("l.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1]["failures"].to_string(), column(&csv, "failures")[1]);
    assert_eq!(rows[1]["alpha2"], 0.8);
}

#[test]
fn seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_harmony"))
            .args(["sample", "--family", "repetition", "--d", "3", "--p", "0.1", "--shots", "50"])
            .env("HARMONY_SEED", seed)
            .current_dir(dir.path())
            .output()
            .unwrap();
        out.stdout
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}
