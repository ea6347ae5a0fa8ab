//! End-to-end checks of the `asd` binary: artifact layout, determinism,
//! validation exits, coverage tables, checkpoint eval.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn asd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asd"))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("asd_cli_{tag}_{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn fast_config(dir: &Path) -> PathBuf {
    let path = dir.join("fast.cfg");
    std::fs::write(
        &path,
        "[data]\n\
         source = synthetic\n\
         k = 3\n\
         per_class = 40\n\
         d = 8\n\
         separation = 8.0\n\
         seed = 7\n\
         [pipeline]\n\
         iterations = 120\n\
         n_t = 20\n\
         n_b = 20\n\
         batch_size = 32\n\
         seed = 1\n\
         [learner]\n\
         hidden_dim = 16\n\
         embed_dim = 8\n",
    )
    .unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_all_artifacts_and_smoke_metrics() {
    let dir = scratch_dir("run");
    let cfg = fast_config(&dir);
    let out_dir = dir.join("out");
    let out = asd()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--debug")
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    for file in [
        "metrics.json",
        "losses.csv",
        "noise_rate.csv",
        "phi_history.csv",
        "config.resolved",
        "checkpoint.json",
        "record.json",
    ] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    // The debug flag dumps alignment and transition matrices per refresh.
    for dumped in ["ctt_cprime_20.csv", "ot_cost_20.csv", "ot_plan_20.csv", "ot_soft_20.csv"] {
        assert!(out_dir.join("debug").join(dumped).exists(), "missing debug/{dumped}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    let acc = metrics["acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    // The resolved config echoes every default actually used.
    let resolved = std::fs::read_to_string(out_dir.join("config.resolved")).unwrap();
    for key in ["lambda", "tau", "n_l", "momentum", "strong_dropout"] {
        assert!(resolved.contains(key), "resolved config missing {key}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_config_and_seed_give_byte_identical_metrics() {
    let dir = scratch_dir("det");
    let cfg = fast_config(&dir);
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out_dir in [&a, &b] {
        let out = asd()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }
    let ma = std::fs::read(a.join("metrics.json")).unwrap();
    let mb = std::fs::read(b.join("metrics.json")).unwrap();
    assert_eq!(ma, mb, "metrics.json must be byte-identical");
    // Re-running into the same directory without --force is refused.
    let out = asd()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&a)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("--force"));
    let out = asd()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&a)
        .arg("--force")
        .output()
        .unwrap();
    assert!(out.status.success());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_override_changes_the_outcome() {
    let dir = scratch_dir("seed");
    let cfg = fast_config(&dir);
    let (a, b) = (dir.join("a"), dir.join("b"));
    for (out_dir, seed) in [(&a, "1"), (&b, "2")] {
        let out = asd()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }
    let ra = std::fs::read(a.join("record.json")).unwrap();
    let rb = std::fs::read(b.join("record.json")).unwrap();
    assert_ne!(ra, rb);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_config_exits_one_naming_the_key() {
    let dir = scratch_dir("badcfg");
    let path = dir.join("bad.cfg");
    std::fs::write(&path, "[data]\nk = 5\n[pipeline]\nn_l = 3\n").unwrap();
    let out = asd()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("n_l"), "stderr: {}", stderr_of(&out));

    std::fs::write(&path, "[pipeline]\nwibble = 3\n").unwrap();
    let out = asd()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("wibble"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn prob_emits_known_values() {
    let dir = scratch_dir("prob");
    let csv_path = dir.join("coverage.csv");
    let out = asd()
        .args([
            "prob", "--n", "6", "--k", "3", "--nl-from", "3", "--nl-to", "6", "--out",
        ])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n_l,p_all"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "3");
    assert!((row[1].parse::<f64>().unwrap() - 0.4).abs() < 1e-12);
    let last = csv.lines().last().unwrap();
    assert_eq!(last, "6,1");

    // Monte-Carlo columns appear on request and stay near the analytic value.
    let out = asd()
        .args([
            "prob",
            "--n",
            "4",
            "--k",
            "2",
            "--nl-from",
            "2",
            "--nl-to",
            "2",
            "--mc-trials",
            "20000",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    let p: f64 = row[1].parse().unwrap();
    let est: f64 = row[2].parse().unwrap();
    let se: f64 = row[3].parse().unwrap();
    assert!((p - 2.0 / 3.0).abs() < 1e-12);
    assert!((est - p).abs() < 3.0 * se);

    // k must divide n.
    let out = asd()
        .args(["prob", "--n", "10", "--k", "3", "--nl-from", "3", "--nl-to", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_roundtrips_checkpoint_metrics() {
    let dir = scratch_dir("eval");
    // Labeled fixture via a config-driven run keeps everything on the CLI path.
    let fixture = dir.join("data.csv");
    {
        let ds = asd_core::data::generate_gaussian_mixture(3, 40, 8, 8.0, 7).unwrap();
        asd_core::data::save_fixture(&ds, &fixture).unwrap();
    }
    let cfg_path = dir.join("fixture.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "[data]\n\
             source = fixture\n\
             fixture = {}\n\
             k = 3\n\
             [pipeline]\n\
             iterations = 120\n\
             n_t = 20\n\
             n_b = 20\n\
             batch_size = 32\n\
             [learner]\n\
             hidden_dim = 16\n\
             embed_dim = 8\n",
            fixture.display()
        ),
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = asd()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    // Same data through eval must reproduce the run's metrics exactly.
    let eval_json = dir.join("eval.json");
    let out = asd()
        .args(["eval", "--checkpoint"])
        .arg(out_dir.join("checkpoint.json"))
        .arg("--fixture")
        .arg(&fixture)
        .arg("--out")
        .arg(&eval_json)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let run_metrics = std::fs::read_to_string(out_dir.join("metrics.json")).unwrap();
    let eval_metrics = std::fs::read_to_string(&eval_json).unwrap();
    assert_eq!(run_metrics, eval_metrics);

    // Unlabeled fixture: histogram instead of accuracy.
    let unlabeled = dir.join("unlabeled.csv");
    {
        let mut ds = asd_core::data::generate_gaussian_mixture(3, 10, 8, 8.0, 9).unwrap();
        ds.labels = None;
        ds.k = 0;
        asd_core::data::save_fixture(&ds, &unlabeled).unwrap();
    }
    let out = asd()
        .args(["eval", "--checkpoint"])
        .arg(out_dir.join("checkpoint.json"))
        .arg("--fixture")
        .arg(&unlabeled)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("histogram"), "stdout: {stdout}");

    // Width mismatch names both sides.
    let narrow = dir.join("narrow.csv");
    {
        let ds = asd_core::data::generate_gaussian_mixture(3, 10, 4, 8.0, 9).unwrap();
        asd_core::data::save_fixture(&ds, &narrow).unwrap();
    }
    let out = asd()
        .args(["eval", "--checkpoint"])
        .arg(out_dir.join("checkpoint.json"))
        .arg("--fixture")
        .arg(&narrow)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("d = 4"));

    // Corrupted checkpoint: nonzero exit.
    let bad_ckpt = dir.join("bad.json");
    std::fs::write(&bad_ckpt, "{").unwrap();
    let out = asd()
        .args(["eval", "--checkpoint"])
        .arg(&bad_ckpt)
        .arg("--fixture")
        .arg(&fixture)
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_aggregates_axis_points() {
    let dir = scratch_dir("sweep");
    let cfg = fast_config(&dir);
    let out_dir = dir.join("out");
    let out = asd()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "n_l", "--values", "6,12", "--repeats", "2", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3, "summary: {summary}");
    assert!(lines[1].starts_with("n_l,6,2,0,"));
    assert!(lines[2].starts_with("n_l,12,2,0,"));
    let runs = std::fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);

    // Ablation axes parse and execute too.
    let miss_dir = dir.join("miss");
    let out = asd()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "n_miss", "--values", "0,1", "--repeats", "1", "--out"])
        .arg(&miss_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let summary = std::fs::read_to_string(miss_dir.join("summary.csv")).unwrap();
    assert!(summary.lines().count() == 3, "summary: {summary}");

    // A failing point is marked and the sweep keeps going: n_l = 200 exceeds
    // the 120-sample dataset.
    let fail_dir = dir.join("fail");
    let out = asd()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "n_l", "--values", "200,6", "--repeats", "1", "--out"])
        .arg(&fail_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let summary = std::fs::read_to_string(fail_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert!(lines[1].starts_with("n_l,200,1,1,"), "summary: {summary}");
    assert!(lines[2].starts_with("n_l,6,1,0,"), "summary: {summary}");
    let runs = std::fs::read_to_string(fail_dir.join("runs.csv")).unwrap();
    assert!(runs.contains("failed"), "runs: {runs}");
    std::fs::remove_dir_all(&dir).ok();
}
