use std::fs;
use std::path::Path;
use std::process::Command;

use cwmeter::cli::output::read_csv;
use serde_json::Value;

const SMALL: &str = "[apparatus]\nn = 21\ng = 0.4\nbeta = 5.0\n";

fn cwmeter(scenario: &str, config: &str, out: &Path, extra: &[&str]) -> (i32, String) {
    let cfg = out.with_extension("toml");
    fs::write(&cfg, config).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cwmeter"))
        .arg(scenario)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn thresholds_report_one_regime() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let (code, err) = cwmeter("thresholds", "[apparatus]\nn = 161\ng = 0.1\nbeta = 5.0\n", &out, &[]);
    assert_eq!(code, 0, "{err}");
    let v = json(&out.join("thresholds.json"));
    assert_eq!(v["regime"], "one");
    assert_eq!(v["h_d"], 0.4);
    assert!(v["minima"].as_array().unwrap().len() >= 4);
    assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn landscape_csvs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l");
    assert_eq!(cwmeter("landscape", SMALL, &out, &[]).0, 0);
    let (header, rows) = read_csv(&fs::read_to_string(out.join("landscape_2d.csv")).unwrap()).unwrap();
    assert_eq!(header, ["m", "mp", "F_up", "F_down"]);
    assert_eq!(rows.len(), 22 * 22);
    assert_eq!((rows[0][0], rows[0][1]), (-1.0, -1.0));
    let (h1, r1) = read_csv(&fs::read_to_string(out.join("landscape_1d.csv")).unwrap()).unwrap();
    assert_eq!((h1.len(), r1.len()), (3, 22));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{SMALL}[spin]\nrx = 0.6\nrz = 0.8\n[povm]\nlambda = 0.5\nlambda_prime = 0.4\nsamples = 5000\n\
         [solver]\nt_end = 1.0\ndt_factor = 0.2\nsnapshot_times = [0.5]\n"
    );
    for scenario in ["dephase", "povm", "register"] {
        let (a, b) = (dir.path().join(format!("{scenario}_a")), dir.path().join(format!("{scenario}_b")));
        assert_eq!(cwmeter(scenario, &cfg, &a, &["--seed", "5"]).0, 0);
        assert_eq!(cwmeter(scenario, &cfg, &b, &["--seed", "5"]).0, 0);
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{scenario}/{n:?}");
        }
    }
    let c = dir.path().join("povm_c");
    cwmeter("povm", &cfg, &c, &["--seed", "6"]);
    assert_ne!(json(&c.join("counts.json"))["counts"], json(&dir.path().join("povm_a/counts.json"))["counts"]);
}

#[test]
fn register_emits_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let cfg = format!("{SMALL}[spin]\nrz = 1.0\n[solver]\nt_end = 2.0\ndt_factor = 0.2\nsnapshot_times = [0.0, 1.0]\n");
    let (code, err) = cwmeter("register", &cfg, &out, &[]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert!(text.starts_with("# cwmeter"));
    assert!(!text.contains('\r'));
    let (header, rows) = read_csv(&text).unwrap();
    assert_eq!(header, ["t", "m", "mp", "P", "Cu"]);
    assert_eq!(rows.len(), 3 * 22 * 22);
    let mass: f64 = rows.iter().filter(|r| r[0] == 2.0).map(|r| r[3]).sum();
    assert!((mass - 1.0).abs() < 1e-9);
    let s = json(&out.join("summary.json"));
    assert_eq!(s["status"], "ok");
    assert_eq!(s["snapshots"].as_array().unwrap().len(), 3);
    assert_eq!(s["snapshots"][1]["t_model"], 100.0);
    assert!(s["runtime_s"].is_null());
    assert_eq!(s["regime"]["regime"], "both");
}

#[test]
fn config_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let (code, err) = cwmeter("register", &format!("{SMALL}[solver]\nt_end = 1.0\ntypo = 3\n"), &out, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("line 7") && err.contains("typo"), "{err}");
    let (code, _) = cwmeter("povm", SMALL, &out, &[]);
    assert_eq!(code, 2);
    let (code, _) = cwmeter("nonsense", SMALL, &out, &[]);
    assert_eq!(code, 2);
    let (code, err) = cwmeter("landscape", "[apparatus]\nn = 21\ng = 0.1\nbeta = 5.0\nj2 = 4.0\n", &out, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn numerical_abort_exits_3_and_keeps_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let cfg = format!("{SMALL}[solver]\nt_end = 1.0\nsnapshot_times = [0.0]\nnorm_tol = 1e-300\n");
    let (code, err) = cwmeter("register", &cfg, &out, &[]);
    assert_eq!(code, 3, "{err}");
    let (_, rows) = read_csv(&fs::read_to_string(out.join("snapshots.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 22 * 22);
    let s = json(&out.join("summary.json"));
    assert_eq!(s["status"], "aborted");
    assert!(s["error"].as_str().unwrap().contains("normalization"));
}

#[test]
fn pipeline_chains_fit_model_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let cfg = "seed = 3\n[apparatus]\nn = 15\ng = 0.4\nbeta = 5.0\n[spin]\nrx = 0.6\nrz = 0.8\n\
               [solver]\nt_end = 30.0\ndt_factor = 0.25\n[povm]\nsamples = 20000\n";
    let (code, err) = cwmeter("pipeline", cfg, &out, &[]);
    assert_eq!(code, 0, "{err}");
    let s = json(&out.join("summary.json"));
    let fit = &s["response"];
    let (l, lp) = (fit["lambda"].as_f64().unwrap(), fit["lambda_prime"].as_f64().unwrap());
    assert!(l > 0.0 && l <= 1.0 && (l - lp).abs() < 1e-9);
    let gap = s["equivalence_gap"].as_f64().unwrap();
    assert!(gap <= fit["max_residual"].as_f64().unwrap() + 0.01);
    let m = json(&out.join("povm_model.json"));
    assert_eq!(m["effects_pauli"].as_array().unwrap().len(), 4);
    let e = &s["estimate"];
    assert!(e["z_rx"].as_f64().unwrap().abs() < 4.0 && e["z_rz"].as_f64().unwrap().abs() < 4.0);
}
