use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sepset(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepset")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = sepset(
        &["run", "--env", "game", "--horizon", "300", "--runs", "3", "--seed", "1", "--policies", "ucb,is_ucb:direct_test", "--out", "res"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["regret.csv", "agg.csv", "discovery.csv", "arms.csv", "regret.svg"] {
        assert!(dir.path().join("res").join(f).exists(), "{f}");
    }
    let agg = fs::read_to_string(dir.path().join("res/agg.csv")).unwrap();
    assert!(agg.starts_with("policy,t,mean,stderr\n"));
    assert_eq!(agg.lines().count(), 1 + 2 * 300);

    let plot = sepset(&["plot", "res/agg.csv", "--out", "again.svg", "--title", "game"], dir.path());
    assert!(plot.status.success());
    assert_eq!(fs::read(dir.path().join("again.svg")).unwrap(), fs::read(dir.path().join("res/regret.svg")).unwrap());
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.cfg"),
        "name = small\nenv = game\nhorizon = 200\nruns = 2\npolicy.base.kind = ts\npolicy.shared.kind = is_ts\npolicy.shared.discovery = oracle_sepsets\n",
    )
    .unwrap();
    let out = sepset(&["run", "--config", "exp.cfg", "--runs", "1", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let regret = fs::read_to_string(dir.path().join("o/regret.csv")).unwrap();
    assert_eq!(regret.lines().count(), 1 + 2 * 200);
    assert!(regret.lines().nth(1).unwrap().starts_with("small,base,0,1,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_policy = sepset(&["run", "--policies", "is_ucb", "--out", "o"], dir.path());
    assert_eq!(bad_policy.status.code(), Some(2));
    let short = sepset(&["run", "--horizon", "5", "--policies", "ucb"], dir.path());
    assert_eq!(short.status.code(), Some(2));
    let unknown_env = sepset(&["run", "--env", "dag9"], dir.path());
    assert_eq!(unknown_env.status.code(), Some(2));
    let bad_flag = sepset(&["run", "--nope"], dir.path());
    assert_eq!(bad_flag.status.code(), Some(2));

    fs::write(dir.path().join("blocker"), "x").unwrap();
    let io = sepset(&["run", "--horizon", "100", "--runs", "1", "--policies", "ucb", "--out", "blocker/out"], dir.path());
    assert_eq!(io.status.code(), Some(3));
    let missing = sepset(&["plot", "missing.csv", "--out", "x.svg"], dir.path());
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn bench_and_diagnose_print_csv() {
    let dir = tempfile::tempdir().unwrap();
    let bench = sepset(&["discover-bench", "--runs", "2", "--sizes", "200,400"], dir.path());
    assert!(bench.status.success());
    let text = String::from_utf8(bench.stdout).unwrap();
    assert!(text.starts_with("run,n,method,sensitivity,fpr\n"));
    assert_eq!(text.lines().count(), 5);

    let diag = sepset(&["diagnose", "--set", "S", "--reps", "50"], dir.path());
    assert!(diag.status.success(), "{}", String::from_utf8_lossy(&diag.stderr));
    let text = String::from_utf8(diag.stdout).unwrap();
    assert!(text.starts_with("arm,s,alpha,term_between,term_within,alpha_star\n"));
    assert_eq!(text.lines().count(), 1 + 9 * 2);
}
