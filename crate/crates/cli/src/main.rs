use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crc_core::diagnostics::run_verify_suite;
use crc_core::harness::{
    decision_boundary_grid, emit_report, generate_blobs, generate_moons, read_records, run_experiment, write_csv_dataset,
    write_grid_csv, Bounds, Checkpoint, ExperimentConfig,
};
use crc_core::seed::{self, Stream};

/// Convergence-rate-control active learning experiments.
#[derive(Parser)]
#[command(name = "crc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config and write records, traces and models.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Summarise the run records in a directory as CSV.
    Report {
        dir: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a model's decision regions on a 2-D grid.
    Boundary {
        checkpoint: PathBuf,
        /// `x_min,x_max,y_min,y_max`
        #[arg(long, allow_hyphen_values = true, default_value = "-3.5,3.5,-2,2")]
        bounds: String,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the numerical self-check suite.
    Verify,
    /// Write a synthetic dataset as CSV.
    GenData(GenData),
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Moons,
    Blobs,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum, default_value_t = Generator::Moons)]
    dataset: Generator,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Moons: Gaussian noise on each coordinate.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 4)]
    arms: usize,
    #[arg(long)]
    binarize: bool,
    /// Blobs: `;`-separated centres, e.g. `0,0;3,0`.
    #[arg(long, allow_hyphen_values = true)]
    centers: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write an independently drawn test set of the same size.
    #[arg(long)]
    test_out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_centers(s: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|p| {
            p.split(',')
                .map(|c| c.trim().parse::<f64>().with_context(|| format!("bad centre coordinate `{c}`")))
                .collect()
        })
        .collect()
}

fn gen_data(g: &GenData) -> anyhow::Result<()> {
    let make = |seed: u64| -> anyhow::Result<crc_core::Pool> {
        Ok(match g.dataset {
            Generator::Moons => generate_moons(g.n, g.noise, g.arms, g.binarize, seed)?,
            Generator::Blobs => {
                let Some(c) = &g.centers else {
                    bail!(crc_core::Error::InvalidArgument("--centers is required for blobs".into()))
                };
                let centers = parse_centers(c)?;
                generate_blobs(g.n, centers.len(), &centers, g.sigma, seed)?
            }
        })
    };
    let train = make(seed::derive(g.seed, Stream::TrainData, 0))?;
    write_csv_dataset(train.features(), train.all_labels(), output(Some(&g.out))?)?;
    if let Some(t) = &g.test_out {
        let test = make(seed::derive(g.seed, Stream::TestData, 0))?;
        write_csv_dataset(test.features(), test.all_labels(), output(Some(t))?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let mut cfg = ExperimentConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let records = run_experiment(&cfg)?;
            for r in &records {
                let f = r.final_round();
                println!(
                    "{} seed={} labeled={} test_acc={:.4} test_loss={:.4}",
                    r.strategy, r.seed, f.labeled_size, f.test_acc, f.test_loss
                );
            }
            println!("records written to {}", cfg.output_dir.display());
        }
        Command::Report { dir, out } => {
            let records = read_records(&dir).with_context(|| format!("reading records from {}", dir.display()))?;
            emit_report(&records, output(out.as_deref())?)?;
        }
        Command::Boundary {
            checkpoint,
            bounds,
            resolution,
            out,
        } => {
            let ck = Checkpoint::read(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let bounds: Bounds = bounds.parse()?;
            let grid = decision_boundary_grid(&ck.params()?, &ck.spec, bounds, resolution)?;
            write_grid_csv(&grid, output(out.as_deref())?)?;
        }
        Command::Verify => {
            let results = run_verify_suite();
            let mut ok = true;
            for r in &results {
                println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            return Ok(ok);
        }
        Command::GenData(g) => gen_data(&g)?,
    }
    Ok(true)
}

fn category(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(c) = cause.downcast_ref::<crc_core::Error>() {
            return c.category();
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return "io";
        }
    }
    "internal"
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid usage").trim_start_matches("error: ");
            eprintln!("error[usage]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error[verify-failed]: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error[{}]: {}", category(&e), one_line(&format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}
