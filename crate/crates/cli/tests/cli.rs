use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
    "name": "cli_smoke",
    "seed": 3,
    "phantom": {"h": 8, "w": 8, "layout": {"blocks": {"rows": 2, "cols": 2, "tissues": [[800, 60, 0], [1200, 100, 10]]}}},
    "dictionary": {"t1": "[600:200:1400]", "t2": "[40:20:120]", "b0": "[-10:10:10]", "L": 16},
    "operator": {"kind": "full"},
    "algorithms": ["tm", "coverblip"],
    "epsilons": [0.4]
}"#;

fn coverblip(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_coverblip"));
    cmd.args(args).env_remove("COVERBLIP_OUTPUT_ROOT").env_remove("COVERBLIP_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout: {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    stdout
}

#[test]
fn run_honours_output_root_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let root = dir.path().join("from_env");
    let stdout = ok(&coverblip(&["run", cfg.to_str().unwrap()], &[("COVERBLIP_OUTPUT_ROOT", &root)]));
    assert!(stdout.contains("coverblip_eps0.4"), "{stdout}");
    let run = root.join("cli_smoke");
    for f in ["summary.csv", "summary.json", "plotdata_cost_vs_nmse.csv", "trace_tm.csv", "trace_coverblip_eps0.4.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    for m in ["t1", "t2", "b0", "pd"] {
        assert!(run.join("maps_coverblip_eps0.4").join(format!("{m}.csv")).is_file());
    }

    // an explicit flag wins over the environment
    let flag = dir.path().join("from_flag");
    ok(&coverblip(
        &["run", cfg.to_str().unwrap(), "--output-root", flag.to_str().unwrap()],
        &[("COVERBLIP_OUTPUT_ROOT", &root.join("unused"))],
    ));
    assert!(flag.join("cli_smoke/summary.csv").is_file());
    assert!(!root.join("unused").exists());
}

#[test]
fn dict_and_tree_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dict = dir.path().join("d.bin");
    let tree = dir.path().join("t.bin");
    let grid = ["--t1", "[300:100:1500]", "--t2", "[30:10:120]", "--b0", "[-20:10:20]", "-L", "24"];
    let mut build = vec!["dict", "build", "-o", dict.to_str().unwrap()];
    build.extend(grid);
    let out = ok(&coverblip(&build, &[]));
    assert!(out.contains("of length 24"), "{out}");

    let inspect = ok(&coverblip(&["dict", "inspect", dict.to_str().unwrap(), "--rows", "2"], &[]));
    assert!(inspect.contains("length L: 24"), "{inspect}");
    assert!(inspect.contains("0,300,30,-20"), "{inspect}");

    ok(&coverblip(&["tree", "build", dict.to_str().unwrap(), "-o", tree.to_str().unwrap(), "--compress", "6"], &[]));
    let check = ok(&coverblip(&["tree", "check", tree.to_str().unwrap()], &[]));
    assert!(check.starts_with("ok:"), "{check}");
}

#[test]
fn tree_check_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"not a tree").unwrap();
    let out = coverblip(&["tree", "check", bad.to_str().unwrap()], &[]);
    assert!(!out.status.success());
}

#[test]
fn bench_anns_reports_each_epsilon() {
    let args = [
        "--threads", "1", "bench", "anns", "--t1", "[300:100:1500]", "--t2", "[30:10:120]", "--b0", "[-20:10:20]", "-L", "24",
        "--queries", "20", "--eps", "0,0.5",
    ];
    let out = ok(&coverblip(&args, &[]));
    assert!(out.lines().count() >= 3, "{out}");
}
