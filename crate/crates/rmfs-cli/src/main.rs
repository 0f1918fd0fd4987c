use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use rmfs_cli::{
    cmd_oracle, cmd_simulate, cmd_validate, run_plan, ExperimentPlan, Mode, PlanBudget,
    PlanOptions,
};

#[derive(Parser)]
#[command(name = "rmfs", about = "RMFS planning experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Experiment plans.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Exact Pareto front of a small scenario.
    Oracle {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a fixed assignment and emit its schedule artifacts.
    Simulate {
        scenario: PathBuf,
        /// JSON file: {"per_agv": [[task ids...], ...]}
        assignment: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Re-check a schedule bundle produced by `simulate`.
    Validate { schedule: PathBuf },
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Execute a JSON experiment plan.
    Run {
        plan: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Override the plan seed / select the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Budget per run: `<n>` evaluations or `<n>s` seconds.
    #[arg(long)]
    budget: Option<String>,
    /// Worker threads for plan execution.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory for report and run artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Priority mode for single-scenario commands.
    #[arg(long, value_parser = parse_mode, default_value = "energy")]
    mode: Mode,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "energy" => Ok(Mode::Energy),
        "earliest" => Ok(Mode::Earliest),
        other => Err(format!("unknown mode `{other}` (energy|earliest)")),
    }
}

fn parse_budget(s: &str) -> Result<PlanBudget> {
    if let Some(secs) = s.strip_suffix('s') {
        Ok(PlanBudget::Seconds(secs.parse()?))
    } else {
        Ok(PlanBudget::Evaluations(s.parse()?))
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Plan(PlanCommand::Run { plan, common }) => {
            let out_dir = match common.out_dir {
                Some(d) => d,
                None => bail!("plan run requires --out-dir"),
            };
            let plan: ExperimentPlan = serde_json::from_str(&std::fs::read_to_string(&plan)?)?;
            let opts = PlanOptions {
                out_dir,
                workers: common.workers,
                seed_override: common.seed,
                budget_override: common.budget.as_deref().map(parse_budget).transpose()?,
            };
            let report = run_plan(&plan, &opts)?;
            print!("{}", report.summary);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { scenario, common } => {
            let json = cmd_oracle(&scenario, common.mode, common.out_dir.as_deref())?;
            println!("{json}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            scenario,
            assignment,
            common,
        } => {
            let objectives =
                cmd_simulate(&scenario, &assignment, common.mode, common.out_dir.as_deref())?;
            println!("{objectives}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { schedule } => {
            let violations = cmd_validate(&schedule)?;
            if violations.is_empty() {
                println!("ok: 0 violations");
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    eprintln!("violation: {v}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
