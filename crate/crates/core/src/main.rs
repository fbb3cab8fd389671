use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tilecast::harness::{audit_results, oracle_check, run_experiment, Overrides, ScenarioConfig, Scheme, SweepParam};

#[derive(Parser)]
#[command(name = "tilecast", version, about = "Minimum-power multicast plans for tiled 360-degree video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and write the results CSV.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the allocation solver against exhaustive search.
    OracleCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of random instances.
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Write per-instance results here as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the trials of a results file and verify them.
    Audit {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Results CSV to verify.
        #[arg(long)]
        results: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Restrict to these schemes (repeatable).
    #[arg(long = "scheme", value_parser = parse_scheme)]
    schemes: Vec<Scheme>,
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<SweepParam>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: tilecast::Error| e.to_string())
}

fn parse_sweep(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: tilecast::Error| e.to_string())
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let text = fs::read_to_string(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        let cfg = ScenarioConfig::from_toml(&text).with_context(|| format!("parsing {}", self.config.display()))?;
        let ov = Overrides { seed: self.seed, trials: self.trials, schemes: self.schemes.clone(), sweep: self.sweep };
        Ok(cfg.apply(&ov)?)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { scenario, out } => {
            let cfg = scenario.load()?;
            let exp = run_experiment(&cfg)?;
            let csv = exp.to_csv();
            match out {
                Some(path) => fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
            let failed = exp.trials.iter().filter(|t| !t.is_feasible()).count();
            if failed > 0 {
                eprintln!("{failed} of {} trials produced no feasible plan", exp.trials.len());
            }
            Ok(true)
        }
        Command::OracleCheck { seed, trials, out } => {
            let cases = oracle_check(seed, trials)?;
            let worst = cases.iter().map(|c| c.relative_gap.abs()).fold(0.0, f64::max);
            let short = cases.iter().map(|c| c.demand_gap).fold(f64::NEG_INFINITY, f64::max);
            if let Some(path) = out {
                let mut csv = String::from("instance,messages,subcarriers,dual_power_w,oracle_power_w,relative_gap\n");
                for (i, c) in cases.iter().enumerate() {
                    csv.push_str(&format!("{i},{},{},{:e},{:e},{:e}\n", c.messages, c.subcarriers, c.dual_power_w, c.oracle_power_w, c.relative_gap));
                }
                fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            }
            let ok = worst <= 1e-3 && short <= 1e-6;
            println!("{} instances, worst relative gap {worst:.3e}, worst demand shortfall {short:.3e}: {}", cases.len(), if ok { "ok" } else { "FAILED" });
            Ok(ok)
        }
        Command::Audit { scenario, results } => {
            let cfg = scenario.load()?;
            let text = fs::read_to_string(&results).with_context(|| format!("reading {}", results.display()))?;
            let report = audit_results(&cfg, &text)?;
            for m in &report.mismatches {
                println!("{m}");
            }
            println!("{} rows checked, {} mismatches", report.rows, report.mismatches.len());
            Ok(report.passed())
        }
    }
}
