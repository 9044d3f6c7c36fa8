use std::fs;
use std::path::Path;
use std::process::Command;

use fracflow::flow::FlowTrace;
use fracflow::grid::GridSet;
use fracflow::kernel::WeightTable;
use fracflow_cli::{execute, parse_config, parse_config_for, read_snapshots, CliError, Mode, Report};

const BALL_FLOW: &str = "\
mode = flow
s = 0.5
h = 0.0009765625
grid = 96 96 0.041666666666666664
shape = ball 1
n_steps = 12
gamma = 6
stop_on_ball = false
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracflow"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn minimal_flow_config_parses() {
    let cfg = parse_config("mode = flow\ns = 0.5\nh = 0.01\nm = 3.1\ngrid = 64 64 0.0625\nshape = ball 1\nn_steps = 3\n")
        .unwrap();
    assert_eq!(cfg.mode, Mode::Flow);
    assert_eq!(cfg.m, Some(3.1));
    assert_eq!(cfg.grid.unwrap().nx, 64);
}

#[test]
fn range_errors() {
    let e = parse_config("mode = perim\ns = 1.2\ngrid = 8 8 0.5\nshape = ball 1\n").unwrap_err();
    assert!(matches!(e, CliError::Config(_)));
    assert!(e.to_string().contains("(0, 1)"));
    assert!(parse_config("mode = perim\ns = 0.5\ngrid = 8 8 -0.5\nshape = ball 1\n").is_err());
    assert!(parse_config("mode = limits\ns_list = 0.9, 0.8\n").is_err());
}

#[test]
fn duplicate_key_names_both_lines() {
    let e = parse_config("mode = perim\ns = 0.5\n# comment\ns = 0.6\n").unwrap_err().to_string();
    assert!(e.contains("`s`") && e.contains("2") && e.contains("4"), "{e}");
}

#[test]
fn unknown_keys_are_listed() {
    let e = parse_config("mode = perim\nfoo = 1\ns = 0.5\nbar = 2\n").unwrap_err().to_string();
    assert!(e.contains("foo") && e.contains("bar"), "{e}");
}

#[test]
fn missing_keys_and_mode_conflicts() {
    let e = parse_config("mode = flow\ns = 0.5\n").unwrap_err().to_string();
    assert!(e.contains("`h`"), "{e}");
    assert!(parse_config_for("mode = perim\ns = 0.5\n", Some(Mode::Flow)).is_err());
    assert!(parse_config("s = 0.5\n").is_err());
}

#[test]
fn stationary_ball_flow_exits_zero_and_files_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&format!("{BALL_FLOW}dump_weights = true\n")).unwrap();
    let out = execute(&cfg, dir.path()).unwrap();
    assert_eq!(out.exit_code(), 0, "{:?}", out.failure);

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let rows = FlowTrace::parse_csv(&trace).unwrap();
    assert_eq!(rows.len(), 13);
    assert_eq!(rows.last().unwrap().step, 12);

    let snaps = read_snapshots(&dir.path().join("snapshots"), 0.0009765625).unwrap();
    assert!(snaps.len() >= 3);
    let first = GridSet::read_pbm(dir.path().join("snapshots/step_000000.pbm")).unwrap();
    assert_eq!(first.count(), snaps[0].set.count());

    let report = Report::parse(&fs::read_to_string(dir.path().join("report.txt")).unwrap()).unwrap();
    assert_eq!(report, out.report);
    assert_eq!(report.get("config.shape"), Some("ball 1"));
    assert!(report.get("timing.flow_s").is_some());
    assert!(report.get("versions.fracflow").is_some());
    WeightTable::read(dir.path().join("weights.bin")).unwrap();
}

#[test]
fn flow_is_deterministic() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = parse_config(BALL_FLOW).unwrap();
    execute(&cfg, d1.path()).unwrap();
    execute(&cfg, d2.path()).unwrap();
    let read = |d: &Path| fs::read(d.join("trace.csv")).unwrap();
    assert_eq!(read(d1.path()), read(d2.path()));
}

#[test]
fn alexandrov_samples_are_seeded() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = parse_config("mode = alexandrov\ns = 0.5\nsamples = 3\nk_max = 5\nseed = 42\n").unwrap();
    execute(&cfg, d1.path()).unwrap();
    let a = fs::read_to_string(d1.path().join("alexandrov.csv")).unwrap();
    execute(&cfg, d2.path()).unwrap();
    assert_eq!(a, fs::read_to_string(d2.path().join("alexandrov.csv")).unwrap());
    cfg.seed = 43;
    execute(&cfg, d2.path()).unwrap();
    assert_ne!(a, fs::read_to_string(d2.path().join("alexandrov.csv")).unwrap());
    assert_eq!(a.lines().count(), 4);
}

#[test]
fn alexandrov_with_deformation_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "f.txt", "# k a_k b_k\n2 0.02 0\n");
    let cfg_path = write(
        dir.path(),
        "run.cfg",
        "s_list = 0.5, 0.9\ndelta = 0.15\ndeformation = f.txt\n",
    );
    let st = bin()
        .args(["alexandrov", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let report = Report::parse(&fs::read_to_string(dir.path().join("out/report.txt")).unwrap()).unwrap();
    assert!(report.get("alexandrov.s0.5.ratio").is_some());
    assert!(report.get("alexandrov.s0.9.scaled_ratio").is_some());
}

#[test]
fn perim_and_curvature_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "s = 0.5\ngrid = 96 96 0.03125\nshape = ball 1\n";
    let cfg = parse_config_for(text, Some(Mode::Perim)).unwrap();
    let out = execute(&cfg, dir.path()).unwrap();
    let rel: f64 = out.report.get("perimeter.relative_difference").unwrap().parse().unwrap();
    assert!(rel.abs() < 0.05);
    let cfg = parse_config_for(text, Some(Mode::Curvature)).unwrap();
    let out = execute(&cfg, dir.path()).unwrap();
    assert_eq!(out.exit_code(), 0);
    let csv = fs::read_to_string(dir.path().join("curvature.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("i,j,x,y,curvature"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 5);
        assert!(v[4].is_finite());
    }
}

#[test]
fn limits_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config("mode = limits\ns_list = 0.9, 0.95, 0.99\n").unwrap();
    let out = execute(&cfg, dir.path()).unwrap();
    assert_eq!(out.report.get("limits.perimeter_error_decreasing"), Some("true"));
    let csv = fs::read_to_string(dir.path().join("limits.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn holder_over_snapshot_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(BALL_FLOW).unwrap();
    execute(&cfg, &dir.path().join("run")).unwrap();
    let cfg_path = write(
        dir.path(),
        "holder.cfg",
        "s = 0.5\nh = 0.0009765625\nsnapshots = run/snapshots\n",
    );
    let out = bin()
        .args(["holder", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("h"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("C_emp = "));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.cfg", "s = 1.5\n");
    let st = bin().args(["perim", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin()
        .args(["perim", "--config"])
        .arg(dir.path().join("missing.cfg"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    assert_eq!(CliError::Assert(String::new()).exit_code(), 3);
    assert_eq!(CliError::Numerical(String::new()).exit_code(), 4);
}

#[test]
fn vanishing_flow_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config("mode = flow\ns = 0.5\nh = 0.05\ngrid = 24 24 0.125\nshape = ball 0.3\nn_steps = 40\n")
        .unwrap();
    let out = execute(&cfg, dir.path()).unwrap();
    assert_eq!(out.exit_code(), 4, "{:?}", out.report.get("status.result"));
    assert!(dir.path().join("trace.csv").exists());
}
