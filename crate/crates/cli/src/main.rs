use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epifrost::harness::{self, ExperimentConfig, OutputConfig, OutputFormat};
use epifrost::OutbreakClass;
use serde_json::{json, Value};

/// Multitype randomized Reed–Frost epidemics: simulation and limit theory.
#[derive(Parser)]
#[command(name = "epifrost", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensemble and write final-size records
    Simulate(Common),
    /// Attack rate, survivor fraction and threshold parameter
    Solve(Common),
    /// Extinction probabilities and major-outbreak probability
    Extinction(Common),
    /// Gaussian final-size covariance
    Clt(Common),
    /// Compiled kernel moments and threshold
    Graph(Common),
    /// Simulate and check against theory; exit 1 if a check fails
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Records output path; format follows the extension (.jsonl or csv)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> epifrost::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        if let Some(path) = &self.out {
            let format = if path.extension().is_some_and(|e| e == "jsonl") {
                OutputFormat::Jsonl
            } else {
                OutputFormat::Csv
            };
            cfg.output = Some(OutputConfig { path: path.clone(), format });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cmd: &Command) -> epifrost::Result<(Value, bool)> {
    Ok(match cmd {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let (model, records) = harness::simulate(&cfg)?;
            let stats = harness::estimate_outbreak_statistics(&records, &model.population.pi)?;
            let majors = records.iter().filter(|r| r.outbreak_class == OutbreakClass::Major).count();
            (
                json!({
                    "replicates": records.len(),
                    "major": majors,
                    "records_path": cfg.output.map(|o| o.path),
                    "statistics": stats,
                }),
                true,
            )
        }
        Command::Solve(c) => {
            let model = c.load()?.compile()?;
            (serde_json::to_value(harness::solve_model(&model)?)?, true)
        }
        Command::Extinction(c) => {
            let model = c.load()?.compile()?;
            (serde_json::to_value(harness::extinction_for_model(&model)?)?, true)
        }
        Command::Clt(c) => {
            let model = c.load()?.compile()?;
            let sol = harness::solve_model(&model)?;
            (harness::clt_for_model(&model, &sol)?.to_json(), true)
        }
        Command::Graph(c) => {
            let model = c.load()?.compile()?;
            (harness::describe_kernel(&model)?, true)
        }
        Command::Validate(c) => {
            let report = harness::run_experiment(&c.load()?)?;
            let passed = report.passed;
            (serde_json::to_value(report)?, passed)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok((value, passed)) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("serializable report"));
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
