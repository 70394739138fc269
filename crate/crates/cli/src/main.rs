use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsdc::cli::{cmd_bench, cmd_eval, cmd_inspect, cmd_train, EvalRequest, RunConfig};
use fsdc::dataio::LabelMap;
use fsdc::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "fsdc", version, about = "Divide-and-conquer classification by feature-space decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: configured, else all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for model and reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> fsdc::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, evaluate it on the held-out data, write model and report.
    Train(RunArgs),
    /// Score a saved model on a labeled LIBSVM file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Raw label value mapped to +1 (all others to -1); sign convention otherwise.
        #[arg(long)]
        positive_label: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the pipeline against the configured baseline learner.
    Bench(RunArgs),
    /// Print decomposition spectra and block-diagonality residuals.
    Inspect(RunArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

fn run(cli: Cli) -> fsdc::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            let report = cmd_train(&cfg)?;
            print!("{}", report.to_table());
            println!("model: {}", cfg.model_path().display());
        }
        Command::Eval {
            model,
            test,
            positive_label,
            threads,
            out,
        } => {
            let threads = threads
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            if threads == 0 {
                return Err(Error::Config(vec!["threads must be ≥ 1".into()]));
            }
            let req = EvalRequest {
                model,
                test,
                label_map: positive_label.map_or(LabelMap::Sign, LabelMap::Positive),
                threads,
                out_dir: out,
            };
            print!("{}", cmd_eval(&req)?.to_table());
        }
        Command::Bench(args) => print!("{}", cmd_bench(&args.load()?)?.to_table()),
        Command::Inspect(args) => print!("{}", cmd_inspect(&args.load()?)?.to_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.root() {
                Error::Config(problems) if problems.len() > 1 => {
                    eprintln!("error: invalid configuration:");
                    for p in problems {
                        eprintln!("  - {p}");
                    }
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
