use std::path::Path;
use std::process::Command;

fn coordex(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_coordex"))
        .args(args)
        .current_dir(dir)
        .env_remove("COORDEX_C")
        .output()
        .expect("binary runs")
}

const SHORT: [&str; 14] = [
    "--preset", "desk", "--k", "1", "--n-hidden", "4", "--gibbs-steps", "3", "--episodes", "1600", "--ma-window", "100", "--seed", "3",
];

fn args<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(&SHORT);
    v.extend_from_slice(extra);
    v
}

#[test]
fn run_writes_identical_outputs_twice() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = coordex(&args("run", &["--algorithm", "alg1", "--c", "0.5", "--out", out]), dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let name = "metrics_alg1-k1-n4-t3-c0.5_seed3.csv";
    let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
    let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 1601);
    let params = dir.path().join("a/params_alg1-k1-n4-t3-c0.5_seed3.json");
    let snap: serde_json::Value = serde_json::from_slice(&std::fs::read(params).unwrap()).unwrap();
    assert!(snap["params"]["w_rec"].is_object());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        args("run", &["--algorithm", "ste", "--c", "0.5"]),
        args("run", &["--episodes", "1601"]),
        args("run", &["--algorithm", "nope"]),
        args("sweep", &["--axis", "c", "--values", ""]),
        vec!["oracle", "--rules", "bogus"],
    ];
    for a in bad {
        let o = coordex(&a, dir.path());
        assert_eq!(o.status.code(), Some(2), "{a:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = coordex(&["plot", "missing.csv", "-o", "x.svg"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("x.svg").exists());
}

#[test]
fn config_file_env_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.txt"), "# coordex-config v1\nalgorithm = alg2\nc = 0.1\nlambda = 0.5\n").unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_coordex"));
        cmd.args(args("run", extra)).current_dir(dir.path()).env_remove("COORDEX_C");
        if let Some(c) = env {
            cmd.env("COORDEX_C", c);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    assert!(run(&["--config", "cfg.txt", "--out", "o"], None).contains("alg2-k1-n4-t3-c0.1-l0.5"));
    assert!(run(&["--config", "cfg.txt", "--out", "o"], Some("0.2")).contains("-c0.2-"));
    assert!(run(&["--config", "cfg.txt", "--c", "0.3", "--out", "o"], Some("0.2")).contains("-c0.3-"));

    std::fs::write(dir.path().join("bad.txt"), "algorithm = alg2\n").unwrap();
    let o = coordex(&args("run", &["--config", "bad.txt"]), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_plot_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = coordex(
        &args("sweep", &["--algorithm", "alg2", "--axis", "c", "--values", "0,0.5", "--seeds", "2", "--log-every", "16", "--out", "sw"]),
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let agg = dir.path().join("sw/sweep_c_alg2-k1-n4-t3-c0.25-l0.25.csv");
    let windows = dir.path().join("sw/sweep_c_alg2-k1-n4-t3-c0.25-l0.25_windows.csv");
    assert_eq!(std::fs::read_to_string(&agg).unwrap().lines().count(), 1 + 2 * 100);
    assert!(std::fs::read_to_string(&windows).unwrap().contains("first-quarter"));

    let o = coordex(&["plot", agg.to_str().unwrap(), "-o", "sweep.svg"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let o = coordex(&args("run", &["--algorithm", "alg1", "--c", "0.5", "--out", "r"]), dir.path());
    assert!(o.status.success());
    let metrics = dir.path().join("r/metrics_alg1-k1-n4-t3-c0.5_seed3.csv");
    let o = coordex(&["report", metrics.to_str().unwrap(), "--windows", "all,0:400", "-o", "rep.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = std::fs::read_to_string(dir.path().join("rep.csv")).unwrap();
    assert!(rep.contains("single-seed-std"));
    let o = coordex(&["report", metrics.to_str().unwrap(), "--windows", "0:5000"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_report_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = coordex(&["oracle", "--rules", "reinforce,boltzmann", "--instances", "2", "--samples", "2000", "--out", "o.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("o.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("rule,instance,n_hidden,max_z"));
}
