use std::path::Path;

use serde_json::Value;
use shootscale::cli::{self, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("shootscale").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/output.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[test]
fn trace_reports_shape_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let (code, stdout, _) = run(&[
        "trace",
        "--family",
        "perturbed_gelfand",
        "--epsilon",
        "0.22",
        "--n",
        "2",
        "--alpha-range",
        "1e-3:200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(stdout.lines().next(), Some("shape=S-shaped turning_points=2"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("alpha,lambda,outcome"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",zero")));

    let (code, stdout, _) = run(&["trace", "--epsilon", "0.245"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(stdout.trim(), "shape=monotone turning_points=0");
}

#[test]
fn trace_failures_map_to_exit_codes() {
    let (code, _, err) = run(&["trace", "--epsilon", "0.22", "--frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("Usage"));
    let (code, _, _) = run(&["trace", "--family", "nonsense"]);
    assert_eq!(code, EXIT_USAGE);
    // every height stalls below the cubic's first root, so nothing is traced
    let (code, _, err) = run(&["trace", "--family", "cubic", "--epsilon", "0.05", "--b", "1", "--c", "2.5", "--alpha-range", "0.2:0.9"]);
    assert_eq!(code, EXIT_FAILURE, "{err}");
}

#[test]
fn dump_profile_writes_r_u_du() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("profile.csv");
    let (code, _, err) = run(&["trace", "--quiet", "--dump-profile", p.to_str().unwrap(), "--at-alpha", "3"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().next(), Some("r,u,du"));
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!(last[1].abs() < 1e-8);
    let (code, _, _) = run(&["trace", "--dump-profile", p.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn quiet_suppresses_summary() {
    let (code, stdout, _) = run(&["trace", "--epsilon", "0.245", "--quiet"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.is_empty());
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# monotone regime\nfamily=perturbed_gelfand epsilon=0.245\nn=2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let (code, stdout, _) = run(&["trace", "--config", c]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.starts_with("shape=monotone"));
    let (code, stdout, _) = run(&["trace", "--config", c, "--epsilon", "0.22"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.starts_with("shape=S-shaped"));

    std::fs::write(&cfg, "epsilon=0.22\ncolour=blue\n").unwrap();
    let (code, _, err) = run(&["trace", "--config", c]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("colour"));
    let (code, _, _) = run(&["trace", "--config", dir.path().join("missing").to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn scan_table_and_edge_cases() {
    let (code, stdout, _) = run(&["scan", "--epsilons", "0.23:0.25:0.01"]);
    assert_eq!(code, EXIT_OK);
    let shapes: Vec<&str> = stdout.lines().map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(shapes, ["shape=S-shaped", "shape=S-shaped", "shape=monotone"]);

    let (code, _, _) = run(&["scan", "--epsilons", ""]);
    assert_eq!(code, EXIT_USAGE);

    let (_, single, _) = run(&["scan", "--epsilons", "0.22"]);
    let (_, traced, _) = run(&["trace", "--epsilon", "0.22"]);
    assert_eq!(single.trim(), format!("epsilon=0.22 {}", traced.lines().next().unwrap()));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan.csv");
    run(&["scan", "--epsilons", "0.22,0.245", "--out", out.to_str().unwrap(), "--quiet"]);
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv, "epsilon,shape,n_turns\n0.22,S-shaped,2\n0.245,monotone,0\n");
}

#[test]
fn find_eps0_contract() {
    let (code, stdout, _) = run(&["find-eps0", "--bracket", "0.22:0.25"]);
    assert_eq!(code, EXIT_OK);
    let eps0: f64 = stdout.split_whitespace().find_map(|t| t.strip_prefix("epsilon0=")).unwrap().parse().unwrap();
    assert!(eps0 > 0.24 && eps0 < 0.25);
    assert!(stdout.contains("width="));
    assert_eq!(run(&["find-eps0", "--bracket", "0.26:0.3"]).0, EXIT_FAILURE);
    assert_eq!(run(&["find-eps0", "--bracket", "0.25:0.22"]).0, EXIT_USAGE);
}

#[test]
fn verify_contract() {
    let (code, stdout, _) = run(&["verify", "--epsilon", "0.22"]);
    assert_eq!(code, EXIT_OK, "{stdout}");
    assert!(stdout.contains("all_pass=true"));
    assert_eq!(stdout.matches(" pass ").count(), 6);

    let (code, stdout, _) = run(&["verify", "--family", "constant", "--c0", "1"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(stdout.trim(), "no folds");

    let (code, _, err) = run(&["verify", "--epsilon", "0.22", "--at-alpha", "6"]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.contains("not near a critical point"));
}

#[test]
fn limiting_contract() {
    let (code, stdout, _) = run(&["limiting"]);
    assert_eq!(code, EXIT_OK);
    let eta0 = stdout.split_whitespace().find_map(|t| t.strip_prefix("eta0=")).unwrap();
    // six decimals
    assert_eq!(eta0.split('.').nth(1).unwrap().len(), 6);
    assert_eq!(run(&["limiting", "--n", "3"]).0, EXIT_USAGE);
}

#[test]
fn map42_contract() {
    let (code, stdout, err) = run(&["map42", "--epsilon", "0.5"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let disc: f64 = stdout
        .split_whitespace()
        .find_map(|t| t.strip_prefix("max_relative_discrepancy="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(disc < 1e-6);
    let (code, _, err) = run(&["map42", "--epsilon", "2.0"]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.contains("fold height"));
    let (code, _, err) = run(&["map42", "--epsilon", "1e-5"]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.contains("overflow"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mu.csv");
    run(&["map42", "--epsilon", "0.22", "--points", "4", "--out", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().next(), Some("w0,mu,source"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn cubic_contract() {
    let (code, stdout, err) = run(&["cubic", "--epsilon", "0.05", "--b", "1", "--c", "2.5"]);
    assert_eq!(code, EXIT_OK);
    assert!(err.is_empty());
    assert!(stdout.starts_with("shape=disconnected"));
    let segs: Vec<&str> = stdout.lines().filter(|l| l.starts_with("segment")).collect();
    assert_eq!(segs.len(), 2);
    assert!(segs[0].contains("shape=monotone turning_points=0"));
    assert!(segs[1].contains("turning_points=1"));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("turning_point kind=min")).count(), 1);

    let (code, _, err) = run(&["cubic", "--c", "1.8"]);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("warning"));
    assert_eq!(run(&["cubic", "--epsilon", "1.0"]).0, EXIT_USAGE);
}

#[test]
fn json_outputs_match_schema() {
    let v = schema();
    let cases: &[&[&str]] = &[
        &["trace", "--epsilon", "0.22"],
        &["cubic"],
        &["scan", "--epsilons", "0.22,0.245"],
        &["find-eps0", "--bracket", "0.24:0.25"],
        &["verify", "--epsilon", "0.22"],
        &["verify", "--family", "constant", "--c0", "1"],
        &["limiting"],
        &["map42", "--epsilon", "0.5", "--points", "5"],
    ];
    for args in cases {
        let mut a = args.to_vec();
        a.extend(["--format", "json"]);
        let (code, stdout, err) = run(&a);
        assert_eq!(code, EXIT_OK, "{args:?}: {err}");
        let doc: Value = serde_json::from_str(&stdout).unwrap();
        assert_eq!(doc["schema_version"], "1");
        let errors: Vec<String> = v.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:?}");
    }
    let mut bad: Value = serde_json::from_str(&run(&["find-eps0", "--bracket", "0.24:0.25", "--format", "json"]).1).unwrap();
    bad["surprise"] = Value::Bool(true);
    assert!(!v.is_valid(&bad));
}

#[test]
fn json_to_file_keeps_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let (code, stdout, _) = run(&["trace", "--epsilon", "0.245", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.starts_with("shape=monotone"));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["shape"]["kind"], "monotone");
}

#[test]
fn jobs_do_not_change_output() {
    let args = |j: &'static str| -> Vec<&'static str> { vec!["scan", "--epsilons", "0.2:0.25:0.01", "--format", "json", "--jobs", j] };
    let a = run(&args("1"));
    let b = run(&args("5"));
    assert_eq!(a.0, EXIT_OK);
    assert_eq!(a.1, b.1);
    assert_eq!(run(&["trace", "--jobs", "0"]).0, EXIT_USAGE);
}
