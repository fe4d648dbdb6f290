//! Command-line front end for the gate-racing experiments.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pnrace::harness::report::read_runs_csv;
use pnrace::harness::{
    condition_for_record, run_baseline_comparison, run_delay_sweep, run_table1, run_vrel_study,
    single_condition, AggregateReport, Batch, ExperimentConfig,
};
use pnrace::tuner::bo_campaign;
use pnrace::world::{write_trajectory_csv, LogRow};
use pnrace::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "pnrace",
    version,
    about = "Seeded gate-racing simulations and tuning"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed. For `run` and `replay`, the scenario seed itself.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One scenario from the `[scenario]` section, with its trajectory.
    Run,
    /// Success rate, time and accuracy for every motion and gate radius.
    Table1,
    /// Detection latency against gate radius.
    DelaySweep,
    /// Fixed relative-speed estimates against the true value.
    VrelStudy,
    /// Narrow camera angle and small gate at increasing gate speeds.
    Baseline,
    /// Bayesian optimization of the PN gain and the camera-angle bound.
    Tune,
    /// Re-simulate a run stored in `runs.csv` and write its trajectory.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// Per-run file to search, default `<out>/runs.csv`.
    #[arg(long, value_name = "PATH")]
    runs: Option<PathBuf>,
    /// Condition label, when several rows share the seed.
    #[arg(long)]
    condition: Option<String>,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_trajectory(dir: &Path, seed: u64, log: &[LogRow]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("traj_{seed}.csv"));
    write_trajectory_csv(log, create(&path)?)?;
    Ok(path)
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_report(out: &Path, report: &AggregateReport) -> Result<()> {
    report.write_report_csv(create(&out.join("report.csv"))?)?;
    report.write_runs_csv(create(&out.join("runs.csv"))?)?;
    Ok(())
}

fn print_summary(report: &AggregateReport) {
    for s in &report.summaries {
        let name = if s.condition == "total" {
            format!("{} total", s.group)
        } else {
            s.condition.clone()
        };
        println!(
            "{:<40} n={:<3} success={:.2} t={:.2} d={:.3} v_max={:.1}",
            name, s.runs, s.success_rate, s.mean_t_gate, s.mean_d_center, s.mean_top_speed
        );
    }
}

/// Write a batch. Runs of different conditions share seeds, so their
/// trajectories go into one subdirectory per condition.
fn finish_batch(cfg: &ExperimentConfig, batch: &Batch) -> Result<()> {
    let out = &cfg.output_dir;
    write_report(out, &batch.report)?;
    for (rec, log) in batch.report.runs.iter().zip(&batch.logs) {
        if !log.is_empty() {
            write_trajectory(&out.join("traj").join(slug(&rec.condition)), rec.seed, log)?;
        }
    }
    print_summary(&batch.report);
    Ok(())
}

fn cmd_run(cfg: &ExperimentConfig) -> Result<()> {
    let mut c = single_condition(cfg);
    c.sim.log = true;
    let (rec, log) = c.run_one(0, cfg.seed)?;
    let report = AggregateReport::from_runs(vec![rec.clone()]);
    write_report(&cfg.output_dir, &report)?;
    let path = write_trajectory(&cfg.output_dir, rec.seed, &log)?;
    println!(
        "{} seed={} outcome={} t={:.3} d={:.3} -> {}",
        rec.condition,
        rec.seed,
        rec.outcome.code(),
        rec.t_gate,
        rec.d_center,
        path.display()
    );
    Ok(())
}

fn cmd_tune(cfg: &ExperimentConfig) -> Result<()> {
    let t = &cfg.tune;
    let c = bo_campaign(
        &t.space(),
        &t.reward.config(),
        t.runs_per_motion,
        t.iterations,
        cfg.seed,
        cfg,
    )?;
    let out = &cfg.output_dir;
    let report = AggregateReport::from_runs(
        c.history
            .iter()
            .flat_map(|e| e.runs.iter().cloned())
            .collect(),
    );
    write_report(out, &report)?;
    c.write_history_csv(create(&out.join("history.csv"))?)?;
    let mut best = create(&out.join("best.csv"))?;
    writeln!(best, "k_pn,gamma_bar_deg,mean_reward")?;
    writeln!(
        best,
        "{},{},{}",
        c.best_k_pn, c.best_gamma_bar_deg, c.best_reward
    )?;
    best.flush()?;
    for e in &c.history {
        println!(
            "iter {:>3}  k_pn={:.3} gamma_bar={:.2} reward={:.3}",
            e.iteration, e.k_pn, e.gamma_bar_deg, e.mean_reward
        );
    }
    println!(
        "best k_pn={:.3} gamma_bar={:.2} reward={:.3}",
        c.best_k_pn, c.best_gamma_bar_deg, c.best_reward
    );
    Ok(())
}

fn cmd_replay(cfg: &ExperimentConfig, args: &ReplayArgs) -> Result<()> {
    let path = args
        .runs
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("runs.csv"));
    let file = File::open(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let records = read_runs_csv(file)?;
    let matching: Vec<_> = records
        .iter()
        .filter(|r| r.seed == cfg.seed)
        .filter(|r| args.condition.as_ref().is_none_or(|c| &r.condition == c))
        .collect();
    let rec = match matching.as_slice() {
        [] => {
            return Err(Error::Config(format!(
                "no run with seed {} in {}",
                cfg.seed,
                path.display()
            )))
        }
        [r] => *r,
        [r, ..] => {
            eprintln!(
                "{} runs share seed {}; replaying `{}` (use --condition)",
                matching.len(),
                cfg.seed,
                r.condition
            );
            *r
        }
    };
    let mut c = condition_for_record(rec, cfg);
    c.sim.log = true;
    let (again, log) = c.run_one(rec.run, rec.seed)?;
    if &again != rec {
        eprintln!("warning: replayed run differs from the stored record; is the config the same?");
    }
    let path = write_trajectory(&cfg.output_dir, rec.seed, &log)?;
    println!(
        "{} seed={} outcome={} t={:.3} d={:.3} -> {}",
        again.condition,
        again.seed,
        again.outcome.code(),
        again.t_gate,
        again.d_center,
        path.display()
    );
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    fs::create_dir_all(&cfg.output_dir)?;
    pool.install(|| match &cli.command {
        Command::Run => cmd_run(&cfg),
        Command::Table1 => finish_batch(&cfg, &run_table1(&cfg)?),
        Command::DelaySweep => finish_batch(&cfg, &run_delay_sweep(&cfg)?),
        Command::VrelStudy => finish_batch(&cfg, &run_vrel_study(&cfg)?),
        Command::Baseline => finish_batch(&cfg, &run_baseline_comparison(&cfg)?),
        Command::Tune => cmd_tune(&cfg),
        Command::Replay(args) => cmd_replay(&cfg, args),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
