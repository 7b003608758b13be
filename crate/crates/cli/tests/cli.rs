use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hrma_core::GridFunction;

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(name)
}

fn hrma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrma")).env_remove("HRMA_THREADS").args(args).output().expect("binary runs")
}

fn run_ray(spec_name: &str, out: &Path, extra: &[&str]) -> Output {
    let s = spec(spec_name);
    let mut args = extra.to_vec();
    args.extend(["ray", "--spec", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    hrma(&args)
}

fn energy(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("energy.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn huber_ray_writes_eleven_frames_and_energy_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ray("huber.toml", dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ray.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,value"));
    let mut ts: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    ts.dedup();
    assert_eq!(ts.len(), 11);
    let e = energy(dir.path());
    for key in ["slope", "intercept", "max_abs_residual", "predicted_slope"] {
        assert!(e[key].is_number(), "missing {key}");
    }
    let slope = e["slope"].as_f64().unwrap();
    assert!(e["max_abs_residual"].as_f64().unwrap() <= 1e-2 * slope.abs());
}

#[test]
fn trivial_curve_slope_is_lambda_c_times_mass() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_ray("trivial.toml", dir.path(), &[]).status.success());
    let e = energy(dir.path());
    let (slope, lc, mass) = (e["slope"].as_f64().unwrap(), e["lambda_c"].as_f64().unwrap(), e["mass"].as_f64().unwrap());
    assert_eq!(lc, 0.5);
    assert!((slope - lc * mass).abs() <= 1e-12 * mass, "{slope} vs {}", lc * mass);
}

#[test]
fn emitted_grid_function_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_ray("huber.toml", dir.path(), &[]).status.success());
    let text = std::fs::read_to_string(dir.path().join("head.txt")).unwrap();
    let f = GridFunction::from_text(&text).unwrap();
    assert_eq!(f.to_text(), text);
    let csv = std::fs::read_to_string(dir.path().join("ray.csv")).unwrap();
    let first: Vec<f64> = csv
        .lines()
        .skip(1)
        .take(f.grid().len())
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    for (a, b) in first.iter().zip(f.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn curve_file_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_ray("huber_curve.toml", &dir.path().join("a"), &[]).status.success());
    let problem = "kind = \"curve\"\n[curve]\nfile = \"a/curve.txt\"\n";
    let p = write(dir.path(), "again.toml", problem);
    let out = hrma(&["ray", "--spec", p.to_str().unwrap(), "--out", dir.path().join("b").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.path().join("a/ray.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/ray.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    for (name, threads) in [("one", "1"), ("many", "4")] {
        let out = run_ray("quadratic_2d.toml", &dir.path().join(name), &["--threads", threads]);
        assert!(out.status.success());
    }
    for file in ["ray.csv", "gap.csv", "linearity.csv", "energy.json"] {
        let a = std::fs::read(dir.path().join("one").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("many").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn weights01_gap_decreases_over_k() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("weights01.toml");
    let out = hrma(&["filtration", "--spec", s.to_str().unwrap(), "--k", "4,8,16,32", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let gaps: Vec<f64> = summary.as_array().unwrap().iter().map(|r| r["max_gap"].as_f64().unwrap()).collect();
    assert_eq!(gaps.len(), 4);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(summary.as_array().unwrap().iter().all(|r| r["within_bound"].as_bool().unwrap()));
    for k in [4, 8, 16, 32] {
        for stem in ["histogram", "concave_transform", "ps_ray"] {
            assert!(dir.path().join(format!("{stem}_k{k}.csv")).exists());
        }
    }
    let gap_csv = std::fs::read_to_string(dir.path().join("gap.csv")).unwrap();
    assert_eq!(gap_csv.lines().count(), 1 + 4 * 11);
}

#[test]
fn zero_weights_give_a_stationary_ray() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("zero_weights.toml");
    let out = hrma(&["filtration", "--spec", s.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("ps_ray_k8.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    let n = rows.iter().filter(|r| r[0] == 0.0).count();
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[2].to_bits(), rows[i % n][2].to_bits());
    }
}

#[test]
fn malformed_problem_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.toml", "kind = \"curve\"\n[primal]\nlower = [-1.0\n");
    let out = hrma(&["ray", "--spec", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let p = write(dir.path(), "expr.toml", "kind = \"curve\"\n[primal]\nlower = [-1.0]\nupper = [1.0]\nnodes = [9]\nphi = \"x^\"\n[curve]\neta = 0.0\n");
    let out = hrma(&["ray", "--spec", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonconvex_potential_exits_3_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "nc.toml", "kind = \"curve\"\n[primal]\nlower = [-1.0]\nupper = [1.0]\nnodes = [33]\nphi = \"-x^2\"\n[curve]\neta = 0.0\n");
    let out = hrma(&["ray", "--spec", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("node"));
}

#[test]
fn dual_box_not_covering_slopes_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "d.toml",
        "kind = \"dual_u\"\n[primal]\nlower = [-1.0]\nupper = [1.0]\nnodes = [33]\nphi = \"x^2\"\n[dual]\nlower = [-1.0]\nupper = [1.0]\n[u]\nexpr = \"0\"\n",
    );
    let out = hrma(&["ray", "--spec", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn degree_beyond_size_cap_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("weights01.toml");
    let out = hrma(&["filtration", "--spec", s.to_str().unwrap(), "--k", "4,2000000", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unknown_suite_exits_2() {
    assert_eq!(hrma(&["check", "--suite", "unknown"]).status.code(), Some(2));
}

#[test]
fn check_core_passes_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("core.json");
    let out = hrma(&["check", "--suite", "core", "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    let ids: Vec<u64> = v["checks"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    assert_eq!(v["pass"], serde_json::Value::Bool(true));
    assert!(v["checks"][0].get("seconds").is_none());
}

#[test]
fn tiny_tol_scale_makes_checks_fail() {
    let out = hrma(&["--tol-scale", "1e-9", "check", "--suite", "rays"]);
    assert_eq!(out.status.code(), Some(1));
}
