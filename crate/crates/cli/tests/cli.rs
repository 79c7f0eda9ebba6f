use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gidag(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gidag"))
        .args(args)
        .current_dir(cwd)
        .env("GIDAG_THREADS", "2")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_fit_score_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let cwd = t.path();
    ok(&gidag(&["simulate", "--q", "10", "--k", "2", "--n", "100", "--seed", "7", "--out", "d"], cwd));
    ok(&gidag(
        &["fit", "--data", "d/data.csv", "--out", "r", "--iterations", "1500", "--burn-in", "500"],
        cwd,
    ));
    ok(&gidag(&["score-run", "--truth", "d/truth.json", "--run", "r"], cwd));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cwd.join("r/eval.json")).unwrap()).unwrap();
    assert_eq!(eval["shd"].as_array().unwrap().len(), 2);
    for name in ["ppi_1.csv", "ppi_2.csv", "targets.csv", "mpm_1.edges", "diff_2.csv", "manifest.json"] {
        assert!(cwd.join("r").join(name).is_file(), "{name}");
    }
    let ppi = fs::read_to_string(cwd.join("r/ppi_1.csv")).unwrap();
    assert_eq!(ppi.lines().count(), 10);
    assert!(ppi.lines().next().unwrap().split(',').all(|c| c.split('.').nth(1).unwrap().len() == 6));
}

#[test]
fn repeated_fits_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let cwd = t.path();
    ok(&gidag(&["simulate", "--q", "4", "--k", "3", "--n", "50,30,30", "--seed", "2", "--out", "d"], cwd));
    for out in ["a", "b"] {
        ok(&gidag(
            &[
                "fit", "--data", "d/data.csv", "--out", out, "--iterations", "800", "--burn-in",
                "200", "--chains", "3", "--thin", "5", "--seed", "11",
            ],
            cwd,
        ));
    }
    let (fa, fb) = (files(&cwd.join("a")), files(&cwd.join("b")));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn exact_compares_against_a_fit() {
    let t = tempfile::tempdir().unwrap();
    let cwd = t.path();
    ok(&gidag(&["simulate", "--q", "2", "--k", "2", "--n", "40", "--seed", "5", "--out", "d"], cwd));
    ok(&gidag(
        &[
            "fit", "--data", "d/data.csv", "--out", "r", "--iterations", "20000", "--burn-in",
            "1000", "--record-states",
        ],
        cwd,
    ));
    let out = gidag(&["exact", "--data", "d/data.csv", "--compare", "r", "--out", "e"], cwd);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["total_variation"].as_f64().unwrap() < 0.1, "{v}");
    let lines = fs::read_to_string(cwd.join("e/exact.jsonl")).unwrap();
    assert_eq!(lines.lines().count() as u64, v["states"].as_u64().unwrap());
    let too_small = gidag(&["exact", "--data", "d/data.csv", "--max-q", "1"], cwd);
    assert_eq!(too_small.status.code(), Some(1));
}

#[test]
fn summarize_detects_tampering() {
    let t = tempfile::tempdir().unwrap();
    let cwd = t.path();
    ok(&gidag(&["simulate", "--q", "3", "--k", "2", "--n", "30", "--out", "d"], cwd));
    ok(&gidag(
        &["fit", "--data", "d/data.csv", "--out", "r", "--iterations", "300", "--burn-in", "100", "--thin", "1"],
        cwd,
    ));
    ok(&gidag(&["summarize", "--run", "r"], cwd));
    let p = cwd.join("r/chain_1/samples.jsonl");
    let text = fs::read_to_string(&p).unwrap();
    let first = text.lines().next().unwrap().to_owned();
    fs::write(&p, format!("{first}\n{text}")).unwrap();
    let out = gidag(&["summarize", "--run", "r"], cwd);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn equiv_reports_class_and_sequence() {
    let t = tempfile::tempdir().unwrap();
    let cwd = t.path();
    let chain = r#"{"q":3,"dag":[[1,2],[2,3]],"interventions":{"K":1,"contexts":[{"k":1,"targets":[]}]}}"#;
    let rev = r#"{"q":3,"dag":[[2,1],[3,2]],"interventions":{"K":1,"contexts":[{"k":1,"targets":[]}]}}"#;
    fs::write(cwd.join("a.json"), chain).unwrap();
    fs::write(cwd.join("b.json"), rev).unwrap();
    let out = gidag(&["equiv", "--state", "a.json"], cwd);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["class_size"], 3);
    let out = gidag(&["equiv", "--state", "a.json", "--other", "b.json"], cwd);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["equivalent"], true);
    assert_eq!(v["semantic"], true);
    assert_eq!(v["sequence"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let cwd = t.path();
    assert_eq!(gidag(&["fit", "--nope"], cwd).status.code(), Some(1));
    assert_eq!(gidag(&["--help"], cwd).status.code(), Some(0));
    assert_eq!(gidag(&["fit", "--data", "missing.csv", "--out", "r"], cwd).status.code(), Some(2));
    fs::write(cwd.join("no_obs.csv"), "context,a\n2,1.0\n").unwrap();
    let out = gidag(&["fit", "--data", "no_obs.csv", "--out", "r"], cwd);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("context 1"));
    fs::write(cwd.join("ok.csv"), "context,a,b\n1,1.0,2.0\n1,0.5,0.1\n").unwrap();
    fs::write(cwd.join("bad.json"), r#"{"wishart_a": 0.5}"#).unwrap();
    let out = gidag(&["fit", "--data", "ok.csv", "--out", "r", "--config", "bad.json"], cwd);
    assert_eq!(out.status.code(), Some(1));
    // squares overflow, so the scatter matrix is not finite
    fs::write(cwd.join("huge.csv"), "context,a,b\n1,1e200,2e200\n1,3e200,1e200\n").unwrap();
    let out = gidag(&["fit", "--data", "huge.csv", "--out", "r", "--iterations", "5", "--burn-in", "1"], cwd);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn empty_context_is_a_warning() {
    let t = tempfile::tempdir().unwrap();
    let cwd = t.path();
    fs::write(cwd.join("d.csv"), "context,a,b\n1,1.0,2.0\n1,0.5,0.1\n1,-1,0.3\n3,0.2,0.2\n").unwrap();
    let out = gidag(&["fit", "--data", "d.csv", "--out", "r", "--iterations", "50", "--burn-in", "10"], cwd);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("context 2 has no rows"));
}
