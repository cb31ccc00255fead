use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mlgamp_cli::output::{read_run_table, RunRow};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mlgamp"));
    c.env_remove("MLGAMP_SEED");
    c
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn rows(out: &Path) -> Vec<RunRow> {
    read_run_table(&std::fs::read_to_string(out).unwrap()).unwrap()
}

fn se_rows(out: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let body = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    (header, body)
}

const TWO_LAYER: &str = r#"{
    "model": {
        "layers": [
            { "rows": 256, "cols": 256, "channel": { "snr_db": 20 } },
            { "rows": 256, "cols": 256, "channel": { "snr_db": 15, "bits": 2 } }
        ]
    },
    "run": { "trials": 3, "iters": 6, "seed": 4 }
}"#;

#[test]
fn run_writes_one_row_per_trial_and_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TWO_LAYER);
    let out = dir.path().join("run.csv");
    let o = run("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("trial,iter,nmse,nmse_db,ser,se_mse,se_mse_db\n"));
    assert!(text.ends_with('\n'));
    let rows = rows(&out);
    assert_eq!(rows.len(), 3 * 6);
    for t in 1..=6 {
        let at: Vec<&RunRow> = rows.iter().filter(|r| r.iter == t).collect();
        assert_eq!(at.len(), 3);
        assert!(at.iter().all(|r| r.se_mse == at[0].se_mse));
        assert!(at.iter().all(|r| r.ser.is_some_and(|s| (0.0..=1.0).contains(&s))));
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("final mean NMSE"), "{stdout}");
    assert!(mlgamp_cli::echo_path(&out).exists());
}

#[test]
fn seed_changes_trials_but_not_the_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TWO_LAYER);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(run("run", &cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run("run", &cfg, &b, &["--seed", "5"]).status.code(), Some(0));
    let (a, b) = (rows(&a), rows(&b));
    assert!(a.iter().zip(&b).all(|(x, y)| x.se_mse == y.se_mse));
    assert!(a.iter().zip(&b).any(|(x, y)| x.nmse != y.nmse));
}

#[test]
fn environment_seed_has_lowest_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = TWO_LAYER.replace(", \"seed\": 4", "");
    let cfg = write_config(dir.path(), "c.json", &no_seed);
    let with_seed = write_config(dir.path(), "s.json", TWO_LAYER);
    let out = |n: &str| dir.path().join(n);
    let go = |cfg: &Path, o: &Path, env: Option<&str>, extra: &[&str]| {
        let mut c = bin();
        c.arg("run").arg("--config").arg(cfg).arg("--out").arg(o).args(extra);
        if let Some(s) = env {
            c.env("MLGAMP_SEED", s);
        }
        assert_eq!(c.output().unwrap().status.code(), Some(0));
        rows(o)
    };
    let file = go(&with_seed, &out("file.csv"), None, &[]);
    let env = go(&cfg, &out("env.csv"), Some("4"), &[]);
    let file_beats_env = go(&with_seed, &out("fe.csv"), Some("99"), &[]);
    let flag_beats_env = go(&cfg, &out("fl.csv"), Some("99"), &["--seed", "4"]);
    assert_eq!(file, env);
    assert_eq!(file, file_beats_env);
    assert_eq!(file, flag_beats_env);
}

#[test]
fn output_does_not_depend_on_the_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TWO_LAYER);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(run("run", &cfg, &a, &["--jobs", "1"]).status.code(), Some(0));
    assert_eq!(run("run", &cfg, &b, &["--jobs", "3"]).status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TWO_LAYER);
    let first = dir.path().join("first.csv");
    assert_eq!(run("run", &cfg, &first, &["--trials", "2", "--iters", "4"]).status.code(), Some(0));
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(mlgamp_cli::echo_path(&first)).unwrap()).unwrap();
    assert_eq!(echo["status"], "ok");
    assert_eq!(echo["config"]["run"]["trials"], 2);
    assert!(echo["points"][0]["spec"]["layers"][1]["channel"]["step"].as_f64().unwrap() > 0.0);
    let replay = write_config(dir.path(), "replay.json", &echo["config"].to_string());
    let second = dir.path().join("second.csv");
    assert_eq!(run("run", &replay, &second, &[]).status.code(), Some(0));
    assert_eq!(rows(&first).len(), 8);
    assert_eq!(rows(&first), rows(&second));
}

#[test]
fn invalid_configs_exit_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("malformed.json", "{ \"model\": ", "EOF"),
        ("unknown.json", &*TWO_LAYER.replace("\"trials\"", "\"trails\""), "trails"),
        ("both.json", &*TWO_LAYER.replace("\"snr_db\": 20", "\"snr_db\": 20, \"sigma2\": 1"), "model.layers[0].channel"),
        ("bits.json", &*TWO_LAYER.replace("\"bits\": 2", "\"bits\": 0"), "model.layers[1].channel.bits"),
        (
            "chain.json",
            &*TWO_LAYER.replace("{ \"rows\": 256, \"cols\": 256, \"channel\": { \"snr_db\": 15", "{ \"rows\": 256, \"cols\": 255, \"channel\": { \"snr_db\": 15"),
            "dimension chain",
        ),
    ];
    for (name, text, needle) in cases {
        let cfg = write_config(dir.path(), name, text);
        let out = dir.path().join(format!("{name}.csv"));
        let o = run("run", &cfg, &out, &[]);
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(1), "{name}: {stderr}");
        assert!(stderr.contains(needle), "{name}: {stderr}");
        assert!(!out.exists() && !mlgamp_cli::echo_path(&out).exists(), "{name}");
    }
    let missing = run("run", &dir.path().join("absent.json"), &dir.path().join("x.csv"), &[]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn se_single_layer_reaches_the_scalar_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "model": {
            "prior": { "type": "gaussian", "variance": 1.0 },
            "layers": [{ "rows": 300, "cols": 200, "channel": { "sigma2": 0.2 } }]
        },
        "run": { "iters": 500 }
    }"#;
    let cfg = write_config(dir.path(), "slm.json", text);
    let out = dir.path().join("se.csv");
    assert_eq!(run("se", &cfg, &out, &[]).status.code(), Some(0));
    let (header, body) = se_rows(&out);
    assert_eq!(header.join(","), "iter,mse,mse_db,V1,q1,Sigma1,d1");
    let last = body.last().unwrap();
    let (alpha, noise, sigma) = (1.5, 0.2, last[5]);
    let eps = sigma / (1.0 + sigma);
    assert!((sigma - (noise + eps / alpha)).abs() <= 1e-9 * sigma, "{last:?}");
}

#[test]
fn se_without_information_stays_at_the_prior_power() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "model": { "layers": [{ "rows": 128, "cols": 128, "channel": { "sigma2": 1e300 } }] },
        "run": { "iters": 5 }
    }"#;
    let cfg = write_config(dir.path(), "flat.json", text);
    let out = dir.path().join("se.csv");
    assert_eq!(run("se", &cfg, &out, &[]).status.code(), Some(0));
    let (_, body) = se_rows(&out);
    assert!(!body.is_empty());
    // Sigma is capped by the variance floor, so the prior power is met to ~1e-12.
    assert!(body.iter().all(|r| (r[1] - 1.0).abs() <= 1e-9), "{body:?}");
}

#[test]
fn se_example_one_is_nonincreasing_for_every_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "model": {
            "layers": [
                { "rows": 1024, "cols": 1024, "channel": { "snr_db": 20 } },
                { "rows": 1024, "cols": 1024, "channel": { "snr_db": 15, "bits": null } }
            ]
        },
        "run": { "iters": 15 },
        "sweep": [{ "parameter": "bits", "layer": 1, "values": [1, 2, 3, 6, null] }]
    }"#;
    let cfg = write_config(dir.path(), "ex1.json", text);
    let out = dir.path().join("se.csv");
    assert_eq!(run("se", &cfg, &out, &[]).status.code(), Some(0));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    assert_eq!(&reader.headers().unwrap()[0], "point");
    let mut by_point: Vec<(String, Vec<f64>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        let mse: f64 = rec[2].parse().unwrap();
        match by_point.last_mut() {
            Some((p, v)) if *p == rec[0] => v.push(mse),
            _ => by_point.push((rec[0].to_string(), vec![mse])),
        }
    }
    assert_eq!(by_point.len(), 5);
    for (p, mse) in by_point {
        assert!(mse.windows(2).all(|w| w[1] <= w[0]), "{p}: {mse:?}");
    }
}

#[test]
fn compare_passes_at_desk_scale_and_fails_at_zero_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "model": {
            "layers": [
                { "rows": 1024, "cols": 1024, "channel": { "snr_db": 20 } },
                { "rows": 1024, "cols": 1024, "channel": { "snr_db": 15, "bits": 2 } }
            ]
        },
        "run": { "trials": 50, "iters": 15, "seed": 11 }
    }"#;
    let cfg = write_config(dir.path(), "ex1.json", text);
    let out = dir.path().join("cmp.csv");
    let o = run("compare", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let header = std::fs::read_to_string(&out).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "iter,trials,mean_nmse,mean_nmse_db,std_err,ser,se_mse,se_mse_db,gap_db");

    let small = write_config(dir.path(), "small.json", TWO_LAYER);
    let strict = run("compare", &small, &dir.path().join("strict.csv"), &["--threshold-db", "0"]);
    assert_eq!(strict.status.code(), Some(3));
    let echo = std::fs::read_to_string(mlgamp_cli::echo_path(&dir.path().join("strict.csv"))).unwrap();
    assert!(echo.contains("\"gap_exceeded\""));
}

#[test]
fn divergence_exits_2_with_a_partial_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "model": {
            "layers": [{ "rows": 32, "cols": 64, "channel": { "snr_db": 20 } }],
            "prior": { "type": "gaussian", "variance": 1 }
        },
        "run": { "trials": 2, "iters": 3000, "seed": 1, "onsager": false }
    }"#;
    let cfg = write_config(dir.path(), "plain.json", text);
    let out = dir.path().join("run.csv");
    let o = run("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("partial"));
    let rows = rows(&out);
    assert!(!rows.is_empty() && rows.len() < 2 * 3000);
    let echo = std::fs::read_to_string(mlgamp_cli::echo_path(&out)).unwrap();
    assert!(echo.contains("\"diverged\""));
}
