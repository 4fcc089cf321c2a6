use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rr_replay_cli::simulate::{cmd_simulate, resolve, SimulateArgs};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rr-replay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&[
        "simulate",
        "--preset",
        "fig3",
        "--sampler",
        "rrc",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let stats = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let mut lines = stats.lines();
    assert_eq!(
        lines.next(),
        Some("id,mean,std,min,max,oracle_mean,oracle_var,verdict")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r[4].parse::<u32>().unwrap() <= 6));
    assert!(!stats.contains('\r'));
    assert!(!dir.path().join("raw.csv").exists());

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["conservation"]["expected"], 364);
    assert_eq!(summary["conservation"]["ok"], true);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn raw_matrix_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let out = dir.path().join(name);
        let o = bin(&[
            "simulate",
            "--sampler",
            "wr",
            "--seeds",
            "1",
            "--raw",
            "--out",
            path(&out),
        ]);
        assert_eq!(code(&o), 0);
        fs::read_to_string(out.join("raw.csv")).unwrap()
    };
    let a = read("a");
    assert_eq!(a.lines().count(), 2);
    assert_eq!(a, read("b"));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        "# fig6 under RR-M\npreset = fig6\nsampler = rrc\nseeds = 5\n",
    )
    .unwrap();
    let args = SimulateArgs {
        config: Some(config.clone()),
        sampler: Some("rrm".parse().unwrap()),
        out: dir.path().join("out"),
        ..Default::default()
    };
    let resolved = resolve(&args).unwrap();
    assert_eq!(resolved.sampler.to_string(), "rrm");
    assert_eq!(resolved.seeds, 5);
    let outcome = cmd_simulate(&args).unwrap();
    assert_eq!(outcome.summary.conservation.expected, 3604);
    assert!(outcome.summary.conservation.ok);
    assert!(outcome.summary.oracle.is_none());
}

#[test]
fn bad_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "seeds = 3\ncapacity = -1\n").unwrap();
    let out = bin(&[
        "simulate",
        "--config",
        path(&config),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("capacity"), "{err}");

    let out = bin(&["simulate", "--preset", "fig9", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = bin(&["simulate", "--sampler", "bogus", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unreadable_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.cfg");
    let out = bin(&[
        "simulate",
        "--config",
        path(&missing),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, "").unwrap();
    let out = bin(&["simulate", "--seeds", "2", "--out", path(&file.join("sub"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_exit_codes() {
    let out = bin(&["verify", "rrc-bias-example"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("1.25") && text.contains("1.5"), "{text}");

    let out = bin(&["verify", "rrm-table3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&bin(&["verify", "no-such-suite"])), 2);
    assert_eq!(code(&bin(&["verify", "rrm-table3", "--seeds", "0"])), 2);
}

#[test]
fn bench_reports_json() {
    let out = bin(&[
        "bench",
        "--sizes",
        "1e2,1e3",
        "--sampler",
        "rrm",
        "--batch",
        "8",
        "--secs",
        "0.05",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"].as_array().unwrap().len(), 2);
    assert!(report["loglog_slope"].is_number());
    assert!(report["results"][0]["draws_per_sec"].as_f64().unwrap() > 0.0);
}

#[test]
fn bench_rejects_size_below_batch() {
    assert_eq!(
        code(&bin(&[
            "bench", "--sizes", "1e3,16", "--batch", "32", "--secs", "0.01"
        ])),
        2
    );
    assert_eq!(
        code(&bin(&["bench", "--sizes", "abc", "--secs", "0.01"])),
        2
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&bin(&[])), 2);
    assert_eq!(code(&bin(&["simulate"])), 2);
    assert_eq!(code(&bin(&["--help"])), 0);
}
