//! `asd` — experiment runner and reporting front end.
//!
//! Subcommands: `run` a configured training loop, `sweep` an axis across
//! repeated runs, `prob` for class-coverage probability tables, `eval` a
//! checkpoint against a fixture.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use asd_core::config::ExperimentConfig;
use asd_core::data::load_fixture;
use asd_core::error::Error;
use asd_core::learner::{load_checkpoint, save_checkpoint};
use asd_core::metrics::evaluate;
use asd_core::pipeline::{run as run_pipeline, RunRecord, SamplerKind};
use asd_core::sampling::{coverage_probability, coverage_probability_mc};

#[derive(Parser)]
#[command(name = "asd", version, about = "Cold-start clustering adaptor experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one training run from a config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for run artifacts.
        #[arg(long)]
        out: PathBuf,
        /// Override the run seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite existing run artifacts.
        #[arg(long)]
        force: bool,
        /// Dump alignment and transition matrices under <out>/debug.
        #[arg(long)]
        debug: bool,
    },
    /// Repeat runs along one config axis and aggregate the metrics.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated axis values, e.g. `20,40,80` or `random,prototypes`.
        #[arg(long)]
        values: String,
        /// Repeats per axis value (seeds offset from the config seed).
        #[arg(long, default_value_t = 3)]
        repeats: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the all-class coverage probability over a range of subset sizes.
    Prob {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        nl_from: u64,
        #[arg(long)]
        nl_to: u64,
        #[arg(long, default_value_t = 1)]
        nl_step: u64,
        /// Also estimate each point by Monte-Carlo with this many trials.
        #[arg(long, default_value_t = 0)]
        mc_trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a fixture and report metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        fixture: PathBuf,
        /// Output metrics JSON path; stdout only when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepAxis {
    #[value(name = "n_l")]
    NL,
    #[value(name = "n_miss")]
    NMiss,
    #[value(name = "noise_ratio")]
    NoiseRatio,
    #[value(name = "sampler")]
    Sampler,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap already renders help/version requests as non-errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::InvalidParam { .. } | Error::Parse { .. } => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            seed,
            force,
            debug,
        } => cmd_run(&config, &out, seed, force, debug),
        Cmd::Sweep {
            config,
            axis,
            values,
            repeats,
            out,
        } => cmd_sweep(&config, axis, &values, repeats, &out),
        Cmd::Prob {
            n,
            k,
            nl_from,
            nl_to,
            nl_step,
            mc_trials,
            seed,
            out,
        } => cmd_prob(n, k, nl_from, nl_to, nl_step, mc_trials, seed, out.as_deref()),
        Cmd::Eval {
            checkpoint,
            fixture,
            out,
        } => cmd_eval(&checkpoint, &fixture, out.as_deref()),
    }
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>, force: bool, debug: bool) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    if debug {
        cfg.run.debug_dir = Some(out.join("debug"));
    }
    std::fs::create_dir_all(out)?;
    let metrics_path = out.join("metrics.json");
    if metrics_path.exists() && !force {
        return Err(Error::Config {
            key: "out".into(),
            msg: format!(
                "{} already holds a run record; pass --force to overwrite",
                out.display()
            ),
        });
    }

    let dataset = cfg.data.load()?;
    let (record, model) = run_pipeline(&cfg.run, &dataset)?;

    std::fs::write(out.join("config.resolved"), cfg.to_config_string())?;
    write_run_artifacts(out, &record)?;
    save_checkpoint(&model, out.join("checkpoint.json"))?;

    match &record.final_metrics {
        Some(m) => println!("acc={:.4} nmi={:.4} ari={:.4}", m.acc, m.nmi, m.ari),
        None => println!("no labels: cluster histogram {:?}", record.cluster_histogram),
    }
    Ok(())
}

fn write_run_artifacts(out: &Path, record: &RunRecord) -> Result<(), Error> {
    let metrics_json = match &record.final_metrics {
        Some(m) => serde_json::to_string_pretty(m)?,
        None => serde_json::to_string_pretty(&serde_json::json!({
            "clusters": record.cluster_histogram,
        }))?,
    };
    std::fs::write(out.join("metrics.json"), metrics_json)?;

    let mut losses = String::from("iteration,l_ins,l_sup,l_unsup,total,mask_rate\n");
    for r in &record.losses {
        let _ = writeln!(
            losses,
            "{},{},{},{},{},{}",
            r.iteration, r.l_ins, r.l_sup, r.l_unsup, r.total, r.mask_rate
        );
    }
    std::fs::write(out.join("losses.csv"), losses)?;

    let mut noise = String::from("iteration,rate\n");
    for r in &record.noise_rates {
        let _ = writeln!(noise, "{},{}", r.iteration, r.rate);
    }
    std::fs::write(out.join("noise_rate.csv"), noise)?;

    let mut phi = String::from("iteration,version,mapping\n");
    for r in &record.phi_history {
        let mapping: Vec<String> = r.mapping.iter().map(ToString::to_string).collect();
        let _ = writeln!(phi, "{},{},{}", r.iteration, r.version, mapping.join(" "));
    }
    std::fs::write(out.join("phi_history.csv"), phi)?;

    std::fs::write(out.join("record.json"), serde_json::to_string(record)?)?;
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    axis: SweepAxis,
    values: &str,
    repeats: u64,
    out: &Path,
) -> Result<(), Error> {
    let base = ExperimentConfig::from_file(config)?;
    if repeats == 0 {
        return Err(Error::invalid("repeats", "need repeats >= 1"));
    }
    std::fs::create_dir_all(out)?;

    let axis_name = match axis {
        SweepAxis::NL => "n_l",
        SweepAxis::NMiss => "n_miss",
        SweepAxis::NoiseRatio => "noise_ratio",
        SweepAxis::Sampler => "sampler",
    };
    let mut runs_csv = String::from("axis,value,repeat,seed,status,acc,nmi,ari\n");
    let mut summary_csv = String::from(
        "axis,value,repeats,failures,acc_mean,acc_std,nmi_mean,nmi_std,ari_mean,ari_std\n",
    );

    for raw in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let mut cfg = base.clone();
        apply_axis(&mut cfg, axis, raw)?;
        cfg.validate()?;

        let mut accs = Vec::new();
        let mut nmis = Vec::new();
        let mut aris = Vec::new();
        let mut failures = 0u64;
        for rep in 0..repeats {
            let mut cfg = cfg.clone();
            cfg.run.seed = base.run.seed.wrapping_add(rep);
            let dataset = cfg.data.load()?;
            match run_pipeline(&cfg.run, &dataset) {
                Ok((record, _)) => {
                    let m = record.final_metrics.ok_or_else(|| {
                        Error::invalid("sweep", "sweeps need labeled data for metrics")
                    })?;
                    let _ = writeln!(
                        runs_csv,
                        "{axis_name},{raw},{rep},{},ok,{},{},{}",
                        cfg.run.seed, m.acc, m.nmi, m.ari
                    );
                    accs.push(m.acc);
                    nmis.push(m.nmi);
                    aris.push(m.ari);
                }
                Err(e) => {
                    // Per-run failures are recorded; the sweep keeps going.
                    eprintln!("run failed ({axis_name} = {raw}, repeat {rep}): {e}");
                    let _ = writeln!(
                        runs_csv,
                        "{axis_name},{raw},{rep},{},failed,,,",
                        cfg.run.seed
                    );
                    failures += 1;
                }
            }
        }
        let (am, asd) = mean_std(&accs);
        let (nm, nsd) = mean_std(&nmis);
        let (rm, rsd) = mean_std(&aris);
        let _ = writeln!(
            summary_csv,
            "{axis_name},{raw},{repeats},{failures},{am},{asd},{nm},{nsd},{rm},{rsd}"
        );
        println!("{axis_name}={raw}: acc {am:.4} +- {asd:.4} ({failures} failures)");
    }

    std::fs::write(out.join("runs.csv"), runs_csv)?;
    std::fs::write(out.join("summary.csv"), summary_csv)?;
    Ok(())
}

fn apply_axis(cfg: &mut ExperimentConfig, axis: SweepAxis, raw: &str) -> Result<(), Error> {
    let bad = |msg: String| Error::Config {
        key: "values".into(),
        msg,
    };
    match axis {
        SweepAxis::NL => {
            cfg.run.n_l = Some(
                raw.parse()
                    .map_err(|_| bad(format!("`{raw}` is not a valid n_l")))?,
            )
        }
        SweepAxis::NMiss => {
            cfg.run.ablation.n_miss = raw
                .parse()
                .map_err(|_| bad(format!("`{raw}` is not a valid n_miss")))?
        }
        SweepAxis::NoiseRatio => {
            cfg.run.ablation.noise_ratio = raw
                .parse()
                .map_err(|_| bad(format!("`{raw}` is not a valid noise_ratio")))?
        }
        SweepAxis::Sampler => cfg.run.sampler = raw.parse::<SamplerKind>()?,
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

#[allow(clippy::too_many_arguments)]
fn cmd_prob(
    n: u64,
    k: u64,
    nl_from: u64,
    nl_to: u64,
    nl_step: u64,
    mc_trials: u64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), Error> {
    if nl_step == 0 {
        return Err(Error::invalid("nl_step", "need nl_step >= 1"));
    }
    if nl_to < nl_from {
        return Err(Error::invalid("nl_to", "need nl_to >= nl_from"));
    }
    let mut csv = if mc_trials > 0 {
        String::from("n_l,p_all,mc_estimate,std_error\n")
    } else {
        String::from("n_l,p_all\n")
    };
    let mut n_l = nl_from;
    while n_l <= nl_to {
        let p = coverage_probability(n_l, k, n)?;
        if mc_trials > 0 {
            let (est, se) = coverage_probability_mc(n_l, k, n, mc_trials, seed)?;
            let _ = writeln!(csv, "{n_l},{p},{est},{se}");
        } else {
            let _ = writeln!(csv, "{n_l},{p}");
        }
        n_l += nl_step;
    }
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, fixture: &Path, out: Option<&Path>) -> Result<(), Error> {
    let model = load_checkpoint(checkpoint)?;
    let dataset = load_fixture(fixture)?;
    if dataset.dim() != model.input_dim {
        return Err(Error::Config {
            key: "fixture".into(),
            msg: format!(
                "fixture has d = {}, checkpoint expects d = {}",
                dataset.dim(),
                model.input_dim
            ),
        });
    }
    let preds = model.predict_clusters(&dataset.features)?;
    let json = match &dataset.labels {
        Some(truth) => {
            let m = evaluate(&preds, truth)?;
            println!("acc={:.4} nmi={:.4} ari={:.4}", m.acc, m.nmi, m.ari);
            serde_json::to_string_pretty(&m)?
        }
        None => {
            let mut histogram = vec![0usize; model.k];
            for &p in &preds {
                histogram[p] += 1;
            }
            println!("no labels: cluster histogram {histogram:?}");
            serde_json::to_string_pretty(&serde_json::json!({ "clusters": histogram }))?
        }
    };
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, json)?;
    }
    Ok(())
}
