use std::path::Path;
use std::process::{Command, Output};

fn conshad(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conshad"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CONSHAD_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "horizon = 12\n");
    let out = dir.path().join("out");
    let o = conshad(
        &["run", "--config", &config, "--out-dir", out.to_str().unwrap(), "--seed", "5", "--algorithm", "gibbs"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 13);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let row = summary.lines().nth(1).unwrap();
    assert!(row.starts_with("0,ok,gibbs,3,dynamic,5,12,"), "{row}");
}

#[test]
fn seed_flag_and_reruns_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "horizon = 15\n");
    let read = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = conshad(&["run", "--config", &config, "--out-dir", out.to_str().unwrap(), "--seed", seed], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("trace.csv")).unwrap()
    };
    assert_eq!(read("a", "3"), read("b", "3"));
    assert_ne!(read("c", "3"), read("d", "4"));
}

#[test]
fn out_dir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "horizon = 2\n");
    let target = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_conshad"))
        .args(["run", "--config", &config])
        .current_dir(dir.path())
        .env("CONSHAD_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("trace.csv").is_file());
    assert!(target.join("summary.csv").is_file());
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "horizon = 5\n");
    let out = dir.path().join("sweep");
    let o = conshad(
        &["sweep", "--config", &config, "--grid", "cluster_size=1..3;algorithm=onconshad,single", "--out-dir", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 7);
}

#[test]
fn bad_input_exits_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let o = conshad(&["run", "--out-dir", out, "--algorithm", "greedy"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("algorithm"), "{}", stderr(&o));

    let config = write_config(dir.path(), "[clustering]\nsize = 0\n");
    let o = conshad(&["run", "--config", &config, "--out-dir", out], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("clustering.size"), "{}", stderr(&o));

    let o = conshad(&["run", "--config", "does/not/exist.toml", "--out-dir", out], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("does/not/exist.toml"), "{}", stderr(&o));

    let o = conshad(&["sweep", "--grid", "colour=red", "--out-dir", out], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let o = conshad(&["run", "--seed", "abc"], dir.path());
    assert!(!o.status.success());
}
