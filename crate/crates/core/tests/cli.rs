use std::path::Path;
use std::process::{Command, Output};

use grape_core::io::{read_numeric_csv, read_sweep, PulseTable, RunSummary};

fn grape(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grape"))
        .current_dir(dir)
        .env_remove("GRAPE_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUICK: &str = "[optimizer]\nmax_iterations = 6\nrestarts = 2\n";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn print_target_lists_the_swap_block() {
    let d = tempfile::tempdir().unwrap();
    let o = grape(d.path(), &["print-target"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with("ifredkin+ on (P, S1, S2)"));
    assert_eq!(s.matches(" i").count(), 2);
    let o = grape(d.path(), &["--problem", "ifredkin-", "print-target"]);
    assert_eq!(stdout(&o).matches("-i").count(), 2);
    let o = grape(d.path(), &["--problem", "iswap-baseline", "print-target"]);
    assert!(stdout(&o).starts_with("iswap on (S1, S2)"));
}

#[test]
fn usage_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let o = grape(d.path(), &["--gate-time", "10", "optimize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gate time"), "{}", stderr(&o));
    assert!(!d.path().join("out").exists());

    let o = grape(d.path(), &["--problem", "cnot", "optimize"]);
    assert_eq!(o.status.code(), Some(2));
    let o = grape(d.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(
        d.path(),
        "[schedule]\ngate_time_ns = 30.0\nfine_step = 0.1\n",
    );
    let o = grape(d.path(), &["--config", &cfg, "optimize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.toml:3:"), "{}", stderr(&o));

    let cfg = write_config(
        d.path(),
        "[device]\nbus_freq_ghz = 6.5\n\n[optimizer]\nrestarts = 0\n",
    );
    let o = grape(d.path(), &["--config", &cfg, "checkgrad"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("run.toml:4: [optimizer]"),
        "{}",
        stderr(&o)
    );

    let o = grape(d.path(), &["sweep", "--t-min", "30", "--t-max", "20"]);
    assert_eq!(o.status.code(), Some(2));
    let o = grape(d.path(), &["--config", "missing.toml", "optimize"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn checkgrad_passes_and_catches_a_broken_adjoint() {
    let d = tempfile::tempdir().unwrap();
    let o = grape(d.path(), &["--gate-time", "24", "checkgrad"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let err: f64 = stdout(&o)
        .split_whitespace()
        .nth(4)
        .and_then(|v| v.parse().ok())
        .expect("error printed");
    assert!(err < 1e-6);

    let cfg = write_config(
        d.path(),
        "[checkgrad]\ncorrupt_adjoint = true\nprobes = 30\n",
    );
    let o = grape(
        d.path(),
        &["--config", &cfg, "--gate-time", "24", "checkgrad"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn optimize_writes_artifacts_and_repeats_exactly() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), QUICK);
    let run = |out: &str| {
        grape(
            d.path(),
            &[
                "--config",
                &cfg,
                "--gate-time",
                "20",
                "--seed",
                "5",
                "--out",
                out,
                "optimize",
            ],
        )
    };
    let a = run("a");
    let b = run("b");
    // Six iterations cannot reach the target.
    assert_eq!(a.status.code(), Some(1), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(1));
    for f in [
        "pulse_coarse.csv",
        "pulse_fine.csv",
        "fidelity_trace.csv",
        "optimize.log",
    ] {
        let x = std::fs::read(d.path().join("a").join(f)).unwrap();
        let y = std::fs::read(d.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    let ra = RunSummary::read(&d.path().join("a/result.json")).unwrap();
    let rb = RunSummary::read(&d.path().join("b/result.json")).unwrap();
    assert_eq!(ra.schema, 1);
    assert_eq!(ra.seed, 5);
    assert_eq!(ra.gate_time_ns, 20.0);
    assert!(!ra.reached_target);
    assert_eq!(
        RunSummary {
            wall_time_s: 0.0,
            ..ra.clone()
        },
        RunSummary {
            wall_time_s: 0.0,
            ..rb
        }
    );

    let coarse = PulseTable::read(&d.path().join("a/pulse_coarse.csv")).unwrap();
    assert_eq!(coarse.times.len(), 20);
    assert_eq!(coarse.values[0][0], 1.0);
    assert_eq!(coarse.values[2][19], 2.0);
    let fine = PulseTable::read(&d.path().join("a/pulse_fine.csv")).unwrap();
    assert_eq!(fine.times.len(), 200);

    let (header, rows) = read_numeric_csv(&d.path().join("a/fidelity_trace.csv")).unwrap();
    assert_eq!(
        header,
        ["restart", "iteration", "fidelity", "step", "gradient_norm"]
    );
    let best = rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    assert_eq!(best, ra.fidelity);
    let log = std::fs::read_to_string(d.path().join("a/optimize.log")).unwrap();
    assert_eq!(log.lines().count(), rows.len());
}

#[test]
fn out_dir_comes_from_flag_then_env_then_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &format!("{QUICK}[run]\nout_dir = \"cfg\"\n"));
    let base = ["--config", cfg.as_str(), "--gate-time", "12", "optimize"];
    grape(d.path(), &base);
    assert!(d.path().join("cfg/result.json").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_grape"))
        .current_dir(d.path())
        .env("GRAPE_OUT_DIR", "env")
        .args(base)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(d.path().join("env/result.json").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_grape"))
        .current_dir(d.path())
        .env("GRAPE_OUT_DIR", "env2")
        .args(["--out", "flag"])
        .args(base)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(d.path().join("flag/result.json").exists());
    assert!(!d.path().join("env2").exists());
}

#[test]
fn trajectory_from_coarse_and_fine_pulses() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), QUICK);
    grape(
        d.path(),
        &[
            "--config",
            &cfg,
            "--gate-time",
            "16",
            "--out",
            "o",
            "optimize",
        ],
    );
    for pulse in ["o/pulse_coarse.csv", "o/pulse_fine.csv"] {
        let o = grape(
            d.path(),
            &[
                "--gate-time",
                "16",
                "--out",
                "t",
                "trajectory",
                "--pulse",
                pulse,
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let (header, rows) = read_numeric_csv(&d.path().join("t/trajectory.csv")).unwrap();
        assert_eq!(
            header,
            ["t_ns", "p_0_110", "p_0_101", "p_1_100", "p_leak", "p_other"]
        );
        assert_eq!(rows.len(), 161);
        assert_eq!(rows[0][1], 1.0);
        for r in &rows {
            assert!(r[1..].iter().sum::<f64>() <= 1.0 + 1e-9);
        }
    }
    for out in ["r1", "r2"] {
        grape(
            d.path(),
            &[
                "--gate-time",
                "16",
                "--out",
                out,
                "trajectory",
                "--pulse",
                "o/pulse_coarse.csv",
            ],
        );
    }
    assert_eq!(
        std::fs::read(d.path().join("r1/trajectory.csv")).unwrap(),
        std::fs::read(d.path().join("r2/trajectory.csv")).unwrap()
    );

    let o = grape(
        d.path(),
        &[
            "--gate-time",
            "16",
            "--out",
            "t",
            "trajectory",
            "--pulse",
            "o/pulse_coarse.csv",
            "--initial",
            "0|101",
            "--watch",
            "0|101,2|000,leak",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let (header, _) = read_numeric_csv(&d.path().join("t/trajectory.csv")).unwrap();
    assert_eq!(header, ["t_ns", "p_0_101", "p_2_000", "p_leak"]);

    let o = grape(
        d.path(),
        &[
            "--gate-time",
            "16",
            "trajectory",
            "--pulse",
            "o/pulse_coarse.csv",
            "--initial",
            "0|130",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = grape(
        d.path(),
        &[
            "--gate-time",
            "16",
            "trajectory",
            "--pulse",
            "o/pulse_coarse.csv",
            "--watch",
            "3|000",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = grape(
        d.path(),
        &[
            "--gate-time",
            "20",
            "trajectory",
            "--pulse",
            "o/pulse_coarse.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "grid mismatch");
    let o = grape(
        d.path(),
        &["--gate-time", "16", "trajectory", "--pulse", "nope.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn uncoupled_trajectory_is_constant() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "[device]\nqubits = [\n  { freq_ghz = 7.5, anharmonicity_ghz = -0.2, coupling_ghz = 1e-300 },\n  { freq_ghz = 8.0, anharmonicity_ghz = -0.3, coupling_ghz = 1e-300 },\n  { freq_ghz = 8.5, anharmonicity_ghz = -0.4, coupling_ghz = 1e-300 },\n]\n",
    );
    grape(
        d.path(),
        &[
            "--gate-time",
            "16",
            "--out",
            "o",
            "--config",
            &cfg,
            "optimize",
        ],
    );
    let o = grape(
        d.path(),
        &[
            "--config",
            &cfg,
            "--gate-time",
            "16",
            "--out",
            "o",
            "trajectory",
            "--pulse",
            "o/pulse_coarse.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (_, rows) = read_numeric_csv(&d.path().join("o/trajectory.csv")).unwrap();
    for r in rows {
        assert!((r[1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sweep_writes_rows_and_metadata() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), QUICK);
    let o = grape(
        d.path(),
        &[
            "--config", &cfg, "--out", "s", "sweep", "--t-min", "14", "--t-max", "14",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("none in range"));
    assert_eq!(read_sweep(&d.path().join("s/sweep.csv")).unwrap().len(), 1);

    let o = grape(
        d.path(),
        &[
            "--config",
            &cfg,
            "--problem",
            "iswap-baseline",
            "--out",
            "b",
            "sweep",
            "--t-min",
            "12",
            "--t-max",
            "14",
            "--t-step",
            "1",
        ],
    );
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    let rows = read_sweep(&d.path().join("b/sweep.csv")).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.t_g_ns).collect::<Vec<_>>(),
        [12.0, 13.0, 14.0]
    );
    assert!(!rows[0].warm_started && rows[1].warm_started);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("b/sweep.json")).unwrap())
            .unwrap();
    assert_eq!(meta["controls"], serde_json::json!(["S1", "S2"]));
    assert_eq!(meta["problem"], "iswap-baseline");
}
