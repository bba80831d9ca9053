use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dropcurve::compare::{PLOT_FILE, SUMMARY_FILE};
use dropcurve::verify::{report_csv, schedule_for_verification};
use dropcurve::{
    compare_methods, emit_plot, parse_methods, run_experiment, summarize_runs, verify_curriculum, ExperimentError,
    Result, RunConfig, SummaryReport,
};
use dropcurve_core::dropout::RetainGroup;

#[derive(Parser)]
#[command(name = "dropcurve", version, about = "Train and compare dropout schedules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured method for every seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Train several methods on shared seeds and summarize them.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "none,constant,curriculum,anti,switch")]
        methods: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Summarize `<runs>/<method>/seed_<n>.csv` files.
    Summarize {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Where to write the JSON report (default `<runs>/summary.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a JSON summary as SVG.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact corruption-distribution analysis of a schedule.
    VerifyCurriculum {
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 21)]
        grid: usize,
        /// Config file whose schedule keys define the curve.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Retain group whose floor is used.
        #[arg(long, default_value = "hidden")]
        group: String,
        /// Number of equally likely base examples.
        #[arg(long, default_value_t = 4)]
        base: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, out: Option<PathBuf>, data_dir: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if data_dir.is_some() {
        cfg.data_dir = data_dir;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            data_dir,
        } => {
            let mut cfg = load_config(&config, out, data_dir)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            for path in run_experiment(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Compare {
            config,
            methods,
            out,
            data_dir,
            top_k,
        } => {
            let cfg = load_config(&config, out, data_dir)?;
            let report = compare_methods(&cfg, &parse_methods(&methods)?, top_k)?;
            print!("{report}");
            println!("wrote {} and {}", cfg.out_dir.join(SUMMARY_FILE).display(), cfg.out_dir.join(PLOT_FILE).display());
        }
        Command::Summarize { runs, top_k, out } => {
            let report = summarize_runs(&runs, top_k)?;
            report.save(&out.unwrap_or_else(|| runs.join(SUMMARY_FILE)))?;
            print!("{report}");
        }
        Command::Plot { summary, out } => {
            emit_plot(&SummaryReport::load(&summary)?, &out)?;
        }
        Command::VerifyCurriculum {
            d,
            grid,
            schedule,
            group,
            base,
            out,
        } => {
            let cfg = match schedule {
                Some(path) => RunConfig::from_file(path)?,
                None => RunConfig::default(),
            };
            let group: RetainGroup = group.parse()?;
            let report = verify_curriculum(&schedule_for_verification(&cfg, group)?, d, grid, base)?;
            let csv = report_csv(&report);
            match out {
                Some(path) => fs::write(&path, &csv).map_err(|e| ExperimentError::Io { path, source: e })?,
                None => print!("{csv}"),
            }
            if !report.passed() {
                return Err(ExperimentError::Verification("curriculum properties do not hold".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
