use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dlra_harness::{compare, convergence_study, run, CompareMetric, HarnessError, RunConfig, ThetaRule};

#[derive(Parser)]
#[command(
    name = "dlra",
    version,
    about = "Rank-adaptive low-rank integrator runs, comparisons and convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write diagnostics and snapshots.
    Run(ConfigArgs),
    /// Run two configurations of the same problem and compare their snapshots.
    Compare(CompareArgs),
    /// Repeat a run over a list of step sizes and fit the error slope.
    Converge(ConvergeArgs),
}

/// Config file plus per-key overrides. Flags win over the file.
#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    theta_bar: Option<String>,
    #[arg(long)]
    theta_mode: Option<String>,
    #[arg(long)]
    c_reject: Option<String>,
    #[arg(long)]
    r_max: Option<String>,
    #[arg(long)]
    max_retries: Option<String>,
    #[arg(long)]
    substep_method: Option<String>,
    #[arg(long)]
    substep_count: Option<String>,
    #[arg(long)]
    eta_columns: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    nmoments: Option<String>,
    #[arg(long)]
    cfl: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    #[arg(long)]
    h: Option<String>,
    /// Comma-separated times, `t_end` or `none`.
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    initial_rank: Option<String>,
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    source_rank: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let overrides = [
            ("problem", &self.problem),
            ("integrator", &self.integrator),
            ("theta_bar", &self.theta_bar),
            ("theta_mode", &self.theta_mode),
            ("c_reject", &self.c_reject),
            ("r_max", &self.r_max),
            ("max_retries", &self.max_retries),
            ("substep_method", &self.substep_method),
            ("substep_count", &self.substep_count),
            ("eta_columns", &self.eta_columns),
            ("nx", &self.nx),
            ("nmoments", &self.nmoments),
            ("cfl", &self.cfl),
            ("t_end", &self.t_end),
            ("h", &self.h),
            ("snapshots", &self.snapshots),
            ("seed", &self.seed),
            ("output_dir", &self.output_dir),
            ("initial_rank", &self.initial_rank),
            ("size", &self.size),
            ("source_rank", &self.source_rank),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Config file of the first run.
    #[arg(long)]
    a: PathBuf,
    /// Config file of the second run.
    #[arg(long)]
    b: PathBuf,
    /// flux_l2_rel or dense_l2_rel.
    #[arg(long, default_value = "flux_l2_rel")]
    metric: String,
    /// `key=value` applied to both runs; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Report directory; runs go to its `a/` and `b/` subdirectories.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated, strictly decreasing step sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    h_list: Vec<f64>,
    /// fixed or h_squared.
    #[arg(long, default_value = "fixed")]
    theta_rule: String,
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let out = run(&cfg)?;
            let last = out.trajectory.records.last().expect("row 0 always exists");
            println!(
                "{} steps to t = {}, final rank {}, {:.3} s, output in {}",
                out.trajectory.step_count(),
                last.t,
                last.rank,
                out.wall_clock.as_secs_f64(),
                cfg.output_dir.display()
            );
        }
        Command::Compare(args) => {
            let mut a = RunConfig::from_file(&args.a)?;
            let mut b = RunConfig::from_file(&args.b)?;
            for kv in &args.set {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| HarnessError::config(kv, "expected KEY=VALUE"))?;
                a.set(k.trim(), v.trim())?;
                b.set(k.trim(), v.trim())?;
            }
            let metric: CompareMetric = args.metric.parse()?;
            let dir = args.output_dir.unwrap_or_else(|| a.output_dir.clone());
            let report = compare(&a, &b, metric, &dir)?;
            println!("{:>10} {:>12} {:>12} {:>12}", "time", "a_vs_b", "a_vs_ref", "b_vs_ref");
            for r in &report.rows {
                println!(
                    "{:>10.4} {:>12.4e} {:>12.4e} {:>12.4e}",
                    r.time, r.a_vs_b, r.a_vs_reference, r.b_vs_reference
                );
            }
        }
        Command::Converge(args) => {
            let cfg = args.config.resolve()?;
            let rule: ThetaRule = args.theta_rule.parse()?;
            let table = convergence_study(&cfg, &args.h_list, rule, &cfg.output_dir)?;
            println!("{:>12} {:>12} {:>12} {:>6}", "h", "theta", "error", "rank");
            for r in &table.rows {
                println!(
                    "{:>12.4e} {:>12.4e} {:>12.4e} {:>6}",
                    r.h, r.theta, r.error, r.final_rank
                );
            }
            match table.slope {
                Some(s) => println!("fitted slope {s:.3}"),
                None => println!("fitted slope: not enough rows"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
