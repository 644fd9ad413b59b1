use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grftail::experiments::{
    read_config, run_and_write, run_figure, run_pvalue, run_rho, write_figure, ExperimentConfig, Figure, Mode,
    Overrides, RunError,
};

/// Tail probabilities of exponential integrals of Gaussian random fields.
#[derive(Parser, Debug)]
#[command(name = "grftail", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot.
    #[arg(long)]
    svg: bool,
    /// Overrides every replication count.
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Asymptotic approximation only.
    Approx(Common),
    /// Crude Monte Carlo only.
    Mc(Common),
    /// Importance sampling only.
    Is(Common),
    /// Approximation against Monte Carlo.
    Compare(Common),
    /// Reproduce a reference figure from the embedded presets.
    Figure {
        /// fig1 (one-dimensional) or fig2 (two-dimensional).
        which: Figure,
        #[command(flatten)]
        common: Common,
    },
    /// Report r(T), ρ(T) and whether the approximation is recommended.
    Rho(Common),
    /// One-sided p-value for an observed point count.
    Pvalue {
        #[command(flatten)]
        common: Common,
        /// Observed count; overrides `observed_count` in the config.
        #[arg(long)]
        observed: Option<u64>,
    },
}

fn overrides(c: &Common, observed: Option<u64>) -> Overrides {
    Overrides {
        seed: c.seed,
        n: c.n,
        out: c.out.clone(),
        svg: c.svg,
        observed,
    }
}

fn load(c: &Common, observed: Option<u64>) -> Result<ExperimentConfig, RunError> {
    let path = c.config.as_ref().ok_or_else(|| {
        RunError::Config(grftail::experiments::ConfigError {
            message: "--config is required".into(),
            line: None,
        })
    })?;
    let mut config = read_config(path)?;
    overrides(c, observed).apply(&mut config);
    Ok(config)
}

fn write_report(config: &ExperimentConfig, suffix: &str, csv: &str) -> Result<PathBuf, RunError> {
    std::fs::create_dir_all(&config.output.dir)?;
    let path = config.output.dir.join(format!("{}_{suffix}.csv", config.output.name));
    std::fs::write(&path, csv)?;
    Ok(path)
}

fn run(cli: Cli) -> Result<(), RunError> {
    let mode = |m: Mode, c: &Common| -> Result<(), RunError> {
        let config = load(c, None)?;
        let (_, path) = run_and_write(&config, m)?;
        println!("{}", path.display());
        Ok(())
    };
    match cli.command {
        Command::Approx(c) => mode(Mode::Approx, &c),
        Command::Mc(c) => mode(Mode::Mc, &c),
        Command::Is(c) => mode(Mode::Is, &c),
        Command::Compare(c) => mode(Mode::Compare, &c),
        Command::Figure { which, common } => {
            let panels = run_figure(which, &overrides(&common, None))?;
            for path in write_figure(which, &panels)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Rho(c) => {
            let config = load(&c, None)?;
            let report = run_rho(&config)?;
            println!("{report}");
            write_report(&config, "rho", &report.to_csv())?;
            Ok(())
        }
        Command::Pvalue { common, observed } => {
            let config = load(&common, observed)?;
            let report = run_pvalue(&config)?;
            println!("{report}");
            let csv = grftail::experiments::rows_to_csv(&[report.row()]);
            write_report(&config, "pvalue", &csv)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("GRFTAIL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("grftail: {e}");
            if let RunError::Numeric(grftail::Error::NoRoot { .. }) = e {
                eprintln!("observed count below asymptotic regime");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
