use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, spec: &str, envs: &[(&str, &str)]) -> Output {
    let file = dir.join("spec.toml");
    std::fs::write(&file, spec).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fkloop"));
    cmd.arg("run").arg(&file).current_dir(dir);
    cmd.env_remove("FKLOOP_WORKERS").env_remove("FKLOOP_OUTPUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn out_of_range_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "command = \"sample\"\n[sample]\nmodel = \"loop\"\ngraph = \"cycle:4\"\nx = 1.5\n",
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`x`"), "{}", stderr(&o));
}

#[test]
fn unknown_and_missing_fields_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "command = \"sample\"\nworkerz = 2\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("workerz"));
    let o = run(
        dir.path(),
        "command = \"experiment\"\n[experiment]\nname = \"uc_given_fa\"\nN = 8\nreplicas = 100\n",
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`p`"));
    let o = run(dir.path(), "command = \"report\"\n[sample]\nmodel = \"fk\"\ngraph = \"path:3\"\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), "command = \"oracle-check\"\n", &[("FKLOOP_WORKERS", "zero")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FKLOOP_WORKERS"));
}

#[test]
fn usage_errors_exit_two() {
    let o = Command::new(env!("CARGO_BIN_EXE_fkloop")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_fkloop")).args(["run", "/nonexistent/spec.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "command = \"oracle-check\"\noutput = \"table.csv\"\n", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert!(table.lines().count() > 100);
    assert!(!table.contains("FAIL"));
}

#[test]
fn zero_tolerance_reports_check_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "command = \"oracle-check\"\n[oracle-check]\nsuites = [\"current-trace\"]\nmax_edges = 6\ntolerance = 0.0\n",
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn samples_one_configuration_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let spec = "command = \"sample\"\nseed = 3\noutput = \"s.txt\"\n[sample]\nmodel = \"qflow\"\ngraph = \"grid:2x2\"\nq = 3\nx = 0.5\nlabels = [1, 0, 0, 2]\ncount = 25\n";
    let o = run(dir.path(), spec, &[("FKLOOP_OUTPUT_DIR", out.path().to_str().unwrap())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.path().join("s.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with('#') && lines[0].contains("seed=3"));
    assert_eq!(lines.len(), 26);
    assert!(lines[1..].iter().all(|l| l.split(' ').count() == 4));
}

#[test]
fn experiment_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = "command = \"experiment\"\nseed = 42\noutput = \"uc.csv\"\n[experiment]\nname = \"uc_given_fa\"\nd = 2\np = 0.8\nN = 8\nreplicas = 500\n";
    let read = || std::fs::read_to_string(dir.path().join("uc.csv")).unwrap();
    assert_eq!(run(dir.path(), spec, &[]).status.code(), Some(0));
    let first = read();
    assert_eq!(run(dir.path(), spec, &[]).status.code(), Some(0));
    assert_eq!(first, read());
    assert_eq!(run(dir.path(), spec, &[("FKLOOP_WORKERS", "3")]).status.code(), Some(0));
    assert_eq!(first, read());
    let header = first.lines().next().unwrap();
    assert_eq!(header, "experiment,d,p,N,sources,estimate,ci_lo,ci_hi,replicas,seed,runtime_ms");
    assert!(first.lines().nth(1).unwrap().ends_with(",500,42,0"));

    let report = run(dir.path(), "command = \"report\"\n[report]\ninput = \"uc.csv\"\n", &[]);
    assert_eq!(report.status.code(), Some(0));
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("uc_given_fa") && text.contains("1 row(s)"));
}
