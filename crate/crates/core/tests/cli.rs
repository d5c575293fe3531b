use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wdl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wdl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn wdl")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Simulated 40-row dataset and a short fit, shared by several tests.
fn fitted() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = wdl(
        d,
        &[
            "--quiet",
            "simulate",
            "--n-samples",
            "40",
            "--points",
            "100",
            "--seed",
            "2",
            "--out-x",
            "x.csv",
            "--out-q",
            "q.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = wdl(
        d,
        &[
            "--quiet",
            "fit",
            "--x",
            "x.csv",
            "--q",
            "q.csv",
            "--max-iters",
            "10",
            "--out-model",
            "m.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn evaluating_training_predictions_reproduces_the_final_loss() {
    let dir = fitted();
    let d = dir.path();
    assert!(wdl(
        d,
        &["--quiet", "predict", "--model", "m.json", "--x", "x.csv", "--out-q", "p.csv"]
    )
    .status
    .success());
    let o = wdl(
        d,
        &[
            "--quiet",
            "evaluate",
            "--observed",
            "q.csv",
            "--predicted",
            "p.csv",
            "--out",
            "e.csv",
            "--summary",
            "s.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    let trace = fs::read_to_string(d.join("m.json.trace.txt")).unwrap();
    let final_loss: f64 = trace
        .lines()
        .find_map(|l| l.strip_prefix("# final_loss "))
        .unwrap()
        .parse()
        .unwrap();
    let mean = summary["mean_loss"].as_f64().unwrap();
    assert!((mean - final_loss).abs() <= 1e-9, "{mean} vs {final_loss}");
    let rows = fs::read_to_string(d.join("e.csv")).unwrap();
    assert_eq!(rows.lines().count(), 41);
    assert!(rows.starts_with("row,w2\n"));
}

#[test]
fn quiet_suppresses_stdout() {
    let dir = fitted();
    let d = dir.path();
    let loud = wdl(d, &["predict", "--model", "m.json", "--x", "x.csv", "--out-q", "p.csv"]);
    assert!(!loud.stdout.is_empty());
    let quiet = wdl(
        d,
        &[
            "--quiet", "predict", "--model", "m.json", "--x", "x.csv", "--out-q", "p.csv",
        ],
    );
    assert!(quiet.stdout.is_empty());
}

#[test]
fn validation_failures_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        vec!["simulate", "--omega", "-1", "--out-x", "x.csv", "--out-q", "q.csv"],
        vec!["simulate", "--scenario", "nope", "--out-x", "x.csv", "--out-q", "q.csv"],
        vec!["simulate", "--out-x", "x.csv"],
        vec![
            "simulate", "--levels", "0.5,0.2", "--out-x", "x.csv", "--out-q", "q.csv",
        ],
        vec!["fit", "--x", "missing.csv", "--q", "q.csv", "--out-model", "m.json"],
        vec!["bogus-command"],
    ] {
        let o = wdl(d, &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn bad_cells_are_reported_with_file_and_line() {
    let dir = fitted();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "x1,x2,x3\n0.1,0.2,0.3\n0.1,NaN,0.3\n").unwrap();
    let o = wdl(
        d,
        &["predict", "--model", "m.json", "--x", "bad.csv", "--out-q", "p.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("bad.csv:3"), "{msg}");
    assert!(msg.contains("x2"), "{msg}");

    fs::write(d.join("q_bad.csv"), "q_0.25,q_0.5,q_0.75\n1,2,3\n1,0.5,3\n").unwrap();
    fs::write(d.join("x2.csv"), "x1,x2,x3\n0,0,0\n1,1,1\n").unwrap();
    let o = wdl(
        d,
        &["fit", "--x", "x2.csv", "--q", "q_bad.csv", "--out-model", "m2.json"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("q_bad.csv: data row 2"), "{}", stderr(&o));
}

#[test]
fn covariate_shape_must_match_the_model() {
    let dir = fitted();
    let d = dir.path();
    fs::write(d.join("two.csv"), "x1,x2\n0.1,0.2\n").unwrap();
    let o = wdl(
        d,
        &["predict", "--model", "m.json", "--x", "two.csv", "--out-q", "p.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model expects 3"));
}

#[test]
fn empty_covariates_give_empty_predictions() {
    let dir = fitted();
    let d = dir.path();
    fs::write(d.join("empty.csv"), "x1,x2,x3\n").unwrap();
    let o = wdl(
        d,
        &[
            "--quiet",
            "predict",
            "--model",
            "m.json",
            "--x",
            "empty.csv",
            "--out-q",
            "p.csv",
            "--levels",
            "3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(d.join("p.csv")).unwrap(), "q_0.25,q_0.5,q_0.75\n");
}

#[test]
fn unwritable_output_fails_cleanly() {
    let dir = fitted();
    let d = dir.path();
    let o = wdl(
        d,
        &[
            "predict",
            "--model",
            "m.json",
            "--x",
            "x.csv",
            "--out-q",
            "no/such/dir/p.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/dir/p.csv"));
}

#[test]
fn corrupted_model_is_a_decode_error() {
    let dir = fitted();
    let d = dir.path();
    let text = fs::read_to_string(d.join("m.json")).unwrap();
    fs::write(d.join("cut.json"), &text[..text.len() / 2]).unwrap();
    fs::write(
        d.join("v9.json"),
        text.replace("\"schema_version\": 1", "\"schema_version\": 9"),
    )
    .unwrap();
    for m in ["cut.json", "v9.json"] {
        let o = wdl(d, &["predict", "--model", m, "--x", "x.csv", "--out-q", "p.csv"]);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains(m), "{}", stderr(&o));
    }
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("sim.cfg"),
        "# small run\nn-samples = 12\npoints=30\nseed=5\nout_x = a.csv\nout-q=aq.csv\n",
    )
    .unwrap();
    assert!(wdl(d, &["--quiet", "--config", "sim.cfg", "simulate", "--seed", "6"])
        .status
        .success());
    assert!(wdl(
        d,
        &[
            "--quiet",
            "simulate",
            "--n-samples",
            "12",
            "--points",
            "30",
            "--seed",
            "6",
            "--out-x",
            "b.csv",
            "--out-q",
            "bq.csv"
        ]
    )
    .status
    .success());
    assert!(wdl(
        d,
        &[
            "--quiet",
            "simulate",
            "--n-samples",
            "12",
            "--points",
            "30",
            "--seed",
            "5",
            "--out-x",
            "c.csv",
            "--out-q",
            "cq.csv"
        ]
    )
    .status
    .success());
    let read = |f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("aq.csv"), read("bq.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    assert_eq!(String::from_utf8(read("a.csv")).unwrap().lines().count(), 13);

    fs::write(d.join("typo.cfg"), "n-sample=12\n").unwrap();
    let o = wdl(
        d,
        &[
            "--config", "typo.cfg", "simulate", "--out-x", "x.csv", "--out-q", "q.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n-sample"));
}

#[test]
fn raw_points_and_sparse_levels_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = wdl(
        d,
        &[
            "--quiet",
            "simulate",
            "--n-samples",
            "30",
            "--points",
            "80",
            "--levels",
            "9",
            "--out-x",
            "x.csv",
            "--out-q",
            "q9.csv",
            "--out-points",
            "pts.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let header = fs::read_to_string(d.join("q9.csv")).unwrap();
    assert!(header.starts_with("q_0.1,q_0.2,q_0.3,q_0.4,q_0.5,q_0.6,q_0.7,q_0.8,q_0.9\n"));
    let pts = fs::read_to_string(d.join("pts.csv")).unwrap();
    assert_eq!(pts.lines().count(), 1 + 30 * 80);

    let o = wdl(
        d,
        &[
            "--quiet",
            "fit",
            "--x",
            "x.csv",
            "--points",
            "pts.csv",
            "--max-iters",
            "3",
            "--out-model",
            "mp.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = wdl(
        d,
        &[
            "--quiet",
            "fit",
            "--x",
            "x.csv",
            "--q",
            "q9.csv",
            "--densify",
            "--max-iters",
            "3",
            "--out-model",
            "md.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("md.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["grid"].as_array().unwrap().len(), 99);

    let o = wdl(
        d,
        &[
            "--quiet",
            "predict",
            "--model",
            "md.json",
            "--x",
            "x.csv",
            "--levels",
            "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
            "--out-q",
            "p9.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = wdl(
        d,
        &[
            "--quiet",
            "evaluate",
            "--observed",
            "q9.csv",
            "--predicted",
            "p9.csv",
            "--summary",
            "s.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn pdp_modes_write_expected_shapes() {
    let dir = fitted();
    let d = dir.path();
    for (mode, rows, header) in [
        ("quantile", 5, "feature_value,value"),
        ("params", 5, "feature_value,pi_1,pi_2,mu_1,mu_2,sigma_1,sigma_2"),
        ("ice", 5 * 40, "row,feature_value,value"),
    ] {
        let out = format!("{mode}.csv");
        let o = wdl(
            d,
            &[
                "--quiet",
                "pdp",
                "--model",
                "m.json",
                "--x",
                "x.csv",
                "--feature",
                "2",
                "--mode",
                mode,
                "--grid-points",
                "5",
                "--out",
                &out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let text = fs::read_to_string(d.join(&out)).unwrap();
        assert_eq!(text.lines().next().unwrap(), header);
        assert_eq!(text.lines().count(), rows + 1);
    }
    let o = wdl(
        d,
        &[
            "pdp",
            "--model",
            "m.json",
            "--x",
            "x.csv",
            "--feature",
            "x9",
            "--out",
            "z.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = wdl(
        d,
        &[
            "pdp",
            "--model",
            "m.json",
            "--x",
            "x.csv",
            "--feature",
            "x1",
            "--rho",
            "1.5",
            "--out",
            "z.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_observations_still_report_a_loss() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("o.csv"), "q_0.25,q_0.5,q_0.75\n1,2,3\n1,2,3\n").unwrap();
    fs::write(d.join("p.csv"), "q_0.25,q_0.5,q_0.75\n1,2,3\n2,3,4\n").unwrap();
    let o = wdl(
        d,
        &[
            "--quiet",
            "evaluate",
            "--observed",
            "o.csv",
            "--predicted",
            "p.csv",
            "--summary",
            "s.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("undefined"));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert!(s["r_squared"].is_null());
    assert_eq!(s["mean_loss"].as_f64().unwrap(), 0.375);
}
