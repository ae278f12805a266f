use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pcsbp::export::read_matrix_market;
use pcsbp_core::sparse::Csr;

fn pcsbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcsbp")).args(args).output().expect("run pcsbp")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn build(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["build", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    pcsbp(&args)
}

const BOX_CIRCLE: &str = r#"{"geometry": {"kind": "box_circle", "resolution": 10}, "p": 2}"#;

fn skew_defect(a: &Csr) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows {
        for k in a.indptr[i]..a.indptr[i + 1] {
            let j = a.indices[k];
            worst = worst.max((a.values[k] + a.get(j, i)).abs());
        }
    }
    worst
}

#[test]
fn build_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BOX_CIRCLE);
    let out = dir.path().join("out");
    let o = build(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["m.csv", "Sx.mtx", "Sy.mtx", "A.mtx", "boundary.json", "report.json", "timings.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "feasible");
    let n = report["n_nodes"].as_u64().unwrap() as usize;
    let rows = csv::Reader::from_path(out.join("m.csv")).unwrap().records().count();
    assert_eq!(rows, n);
    for f in ["Sx.mtx", "Sy.mtx"] {
        let s = read_matrix_market(&fs::read_to_string(out.join(f)).unwrap()).unwrap();
        assert_eq!((s.nrows, s.ncols), (n, n));
        assert!(skew_defect(&s) < 1e-13, "{f} is not skew");
    }
    let boundary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("boundary.json")).unwrap()).unwrap();
    assert!(!boundary.as_array().unwrap().is_empty());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BOX_CIRCLE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(build(&cfg, &a, &[]).status.success());
    assert!(build(&cfg, &b, &["--threads", "2"]).status.success());
    for f in ["m.csv", "Sx.mtx", "Sy.mtx", "A.mtx", "boundary.json", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn seed_list_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"geometry": {"kind": "box", "resolution": 6}, "p": 1}"#);
    let out = dir.path().join("out");
    assert!(build(&cfg, &out, &["--seed", "3,4"]).status.success());
    let m3 = fs::read(out.join("seed-3/m.csv")).unwrap();
    let m4 = fs::read(out.join("seed-4/m.csv")).unwrap();
    assert_ne!(m3, m4);
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for text in [
        r#"{"geometry": {"kind": "box", "resolution": 6}, "p": 7}"#,
        r#"{"geometry": {"kind": "box", "resolution": 6}, "typo": 1}"#,
        r#"{"geometry": {"kind": "conic", "resolution": 6}}"#,
        r#"{"geometry": {"kind": "box", "resolution": [6, 6]}}"#,
        "not json",
    ] {
        let cfg = write_config(dir.path(), text);
        let o = build(&cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "{text}");
    }
    let cfg = write_config(dir.path(), BOX_CIRCLE);
    let o = pcsbp(&["study", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(pcsbp(&["build"]).status.code(), Some(2));
}

#[test]
fn infeasible_norm_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"geometry": {"kind": "conic", "resolution": 8,
             "conic": {"xi": 0.9771365970685786, "eta": 0.5229485267104997, "zeta": 1.0}},
            "p": 4, "tau": "small", "seeds": [2]}"#,
    );
    let out = dir.path().join("out");
    let o = build(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "infeasible");
    assert!(report["certificate"]["radius"].as_f64().unwrap() > 0.0);
}

#[test]
fn quad_accuracy_study_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"geometry": {"kind": "box_circle", "resolution": 10}, "study": "quad-accuracy",
            "degrees": [1], "resolutions": [10, 20], "seeds": [0, 1]}"#,
    );
    let out = dir.path().join("out");
    let o = pcsbp(&["study", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv::Reader::from_path(out.join("quad_accuracy.csv")).unwrap().records().count();
    assert_eq!(rows, 4);
    let mut rates = csv::Reader::from_path(out.join("quad_accuracy_rates.csv")).unwrap();
    let headers = rates.headers().unwrap().clone();
    let slope = headers.iter().position(|h| h == "slope").unwrap();
    let rec = rates.records().next().unwrap().unwrap();
    assert!(rec[slope].parse::<f64>().unwrap() > 1.0);
}
