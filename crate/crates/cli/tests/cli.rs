use std::path::Path;
use std::process::{Command, Output};

use pairprobit::gauss::{bvn_cdf, Rho};
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairprobit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_dataset_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--q", "10", "--k", "4", "--n", "300", "--zero-frac", "0.3", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 300);
    assert!(rows.iter().all(|r| r.split(',').count() == 10));
    let truth = json(&dir.path().join("data.csv.truth.json"));
    assert_eq!(truth["theta"].as_array().unwrap().len(), 45 + 30);
    assert_eq!(truth["labels"][0], "rho[1,2]");
    let zeros = truth["theta"].as_array().unwrap()[..45].iter().filter(|v| v.as_f64() == Some(0.0)).count();
    assert_eq!(zeros, 14);
    assert_eq!(truth["manifest"]["seed"], 7);
    assert!(dir.path().join("data.csv.manifest.json").exists());
}

#[test]
fn simulate_rejects_zero_observations_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--q", "10", "--k", "4", "--n", "0", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--n"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    let o = run(dir.path(), &["simulate", "--q", "3", "--k", "3", "--n", "5", "--thresholds", "1,0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--q", "4", "--k", "3", "--n", "50", "--seed", "3", "--out", "a.csv"];
    assert!(run(dir.path(), &args).status.success());
    let first = std::fs::read(dir.path().join("a.csv")).unwrap();
    let first_truth = std::fs::read(dir.path().join("a.csv.truth.json")).unwrap();
    assert!(run(dir.path(), &args).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("a.csv")).unwrap());
    assert_eq!(first_truth, std::fs::read(dir.path().join("a.csv.truth.json")).unwrap());
}

fn full_loglik(x: &[f64], table: &[[u64; 2]; 2]) -> f64 {
    let (rho, a, b) = (x[0], x[1], x[2]);
    if rho.abs() >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let r = Rho::new(rho).unwrap();
    let p11 = bvn_cdf(a, b, r);
    let pa = pairprobit::gauss::norm_cdf(a);
    let pb = pairprobit::gauss::norm_cdf(b);
    let p = [[p11, pa - p11], [pb - p11, 1.0 - pa - pb + p11]];
    let mut ll = 0.0;
    for l in 0..2 {
        for m in 0..2 {
            ll += table[l][m] as f64 * p[l][m].ln();
        }
    }
    ll
}

#[test]
fn fit_two_margins_matches_grid_oracle() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["simulate", "--q", "2", "--k", "2", "--n", "2000", "--seed", "11", "--thresholds", "0.3"])
        .status
        .success());
    let o = run(dir.path(), &["fit", "data.csv", "--level", "0.95"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&dir.path().join("fit.json"));
    assert_eq!(report["converged"], true);
    assert!((report["z"].as_f64().unwrap() - 1.959964).abs() < 1e-6);

    let mut table = [[0u64; 2]; 2];
    for line in std::fs::read_to_string(dir.path().join("data.csv")).unwrap().lines() {
        let v: Vec<usize> = line.split(',').map(|s| s.parse().unwrap()).collect();
        table[v[0] - 1][v[1] - 1] += 1;
    }
    // Coordinate grid search with shrinking spacing.
    let mut x = [0.0, 0.0, 0.0];
    let mut h = 0.25;
    while h > 1e-7 {
        let mut moved = false;
        for i in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut y = x;
                y[i] += dir * h;
                if full_loglik(&y, &table) > full_loglik(&x, &table) {
                    x = y;
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    let params = report["parameters"].as_array().unwrap();
    for (p, oracle) in params.iter().zip(x) {
        let est = p["estimate"].as_f64().unwrap();
        assert!((est - oracle).abs() < 1e-4, "{}: {est} vs {oracle}", p["label"]);
        assert!(p["lower"].as_f64().unwrap() <= est && est <= p["upper"].as_f64().unwrap());
    }
}

#[test]
fn fit_reports_line_of_corrupt_row() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "1,2,1\n2,2,1\n1,oops,2\n").unwrap();
    let o = run(dir.path(), &["fit", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!dir.path().join("fit.json").exists());

    std::fs::write(dir.path().join("ragged.csv"), "1,2\n2,2,1\n").unwrap();
    let o = run(dir.path(), &["fit", "ragged.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn fit_rejects_unobserved_category() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "1,1\n1,2\n1,3\n2,1\n2,3\n").unwrap();
    let o = run(dir.path(), &["fit", "d.csv", "--k", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("margin 1") && msg.contains("category 3") && msg.contains("not identifiable"), "{msg}");
}

#[test]
fn unconverged_fit_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["simulate", "--q", "4", "--k", "3", "--n", "200", "--seed", "5"]).status.success());
    let o = run(dir.path(), &["fit", "data.csv", "--max-iterations", "1", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("did not converge"));
    let report = json(&dir.path().join("r.json"));
    assert_eq!(report["converged"], false);
    assert_eq!(report["parameters"].as_array().unwrap().len(), 6 + 8);
}

const SMOKE: &str = r#"
q = 3
k = 3
sample_sizes = [150]
replicates = 1
level = 0.95
zero_fraction = 0.3
threshold_menu = [[-0.5, 0.5], [0.0, 1.0]]
seed = 9
"#;

#[test]
fn study_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), SMOKE).unwrap();
    let o = run(dir.path(), &["study", "s.toml", "--out", "a.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(run(dir.path(), &["study", "s.toml", "--out", "b.json", "--serial"]).status.success());
    let a = json(&dir.path().join("a.json"));
    let b = json(&dir.path().join("b.json"));
    assert_eq!(a["result"], b["result"]);
    assert_eq!(a["tables"], b["tables"]);
    for t in ["mse", "mean_std_error", "coverage"] {
        let rows = a["tables"][t]["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].as_array().unwrap().len(), 1 + 3 + 6);
    }
    for c in a["tables"]["coverage"]["rows"][0].as_array().unwrap()[1..].iter() {
        let c = c.as_f64().unwrap();
        assert!(c == 0.0 || c == 1.0);
    }
    let first = std::fs::read(dir.path().join("a.json")).unwrap();
    assert!(run(dir.path(), &["study", "s.toml", "--out", "a.json"]).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("a.json")).unwrap());

    std::fs::write(dir.path().join("bad.toml"), SMOKE.replace("replicates = 1", "replicates = 0")).unwrap();
    assert_eq!(run(dir.path(), &["study", "bad.toml"]).status.code(), Some(2));
}

#[test]
fn bench_grad_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bench-grad", "--q", "3,5,7", "--repetitions", "5", "--out", "b.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r[col("max_rel_discrepancy")] <= 1e-5);
        if r[col("q")] >= 5.0 {
            assert!(r[col("analytic_median_s")] < r[col("numeric_median_s")]);
        }
    }
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), SMOKE).unwrap();
    assert!(run(dir.path(), &["simulate", "--q", "3", "--k", "3", "--n", "120", "--seed", "4"]).status.success());
    assert!(run(dir.path(), &["fit", "data.csv", "--out", "f.json"]).status.success());
    assert!(run(dir.path(), &["study", "s.toml", "--out", "s.json"]).status.success());
    let before: Vec<Vec<u8>> = ["data.csv", "data.csv.truth.json", "f.json", "s.json"]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    for f in ["data.csv", "f.json", "s.json"] {
        std::fs::remove_file(dir.path().join(f)).unwrap();
    }
    assert!(run(dir.path(), &["replay", "data.csv.manifest.json"]).status.success());
    assert!(run(dir.path(), &["replay", "f.json.manifest.json"]).status.success());
    assert!(run(dir.path(), &["replay", "s.json.manifest.json"]).status.success());
    let after: Vec<Vec<u8>> = ["data.csv", "data.csv.truth.json", "f.json", "s.json"]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}
