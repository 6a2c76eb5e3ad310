use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use eitconv_cli::config::{Engine, ScenarioConfig};
use eitconv_cli::engine::{run_scenario, write_result, Format, RunOptions};
use eitconv_cli::figures::{run_figure, FigureId, FigureOptions};
use eitconv_cli::pump::{run_pump, PumpFile};
use eitconv_cli::sweep::{run_sweep, write_sweep, SweepSpec};
use eitconv_cli::CliError;

#[derive(Parser)]
#[command(
    name = "eitconv",
    version,
    about = "EIT memory polarisation conversion: scenarios, figures, sweeps, pumping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Engines to run (comma separated); overrides the file.
    #[arg(long, value_enum, value_delimiter = ',')]
    engine: Vec<Engine>,
    /// Repeat each run on a doubled grid and fail above 1% change.
    #[arg(long)]
    grid_check: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Scenario {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the plot data of a reference figure.
    Figure {
        #[arg(value_enum)]
        id: FigureId,
        #[command(flatten)]
        common: Common,
    },
    /// Run a parameter sweep.
    Sweep {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate optical pumping.
    Pump {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn base_of(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scenario { file, common } => {
            let base = base_of(&file);
            let mut sc = ScenarioConfig::load(&file)
                .and_then(|c| c.validate(&base))
                .map_err(CliError::Validation)?;
            if !common.engine.is_empty() {
                sc.engines = common.engine.clone();
            }
            let out = common.out.or(sc.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let opts = RunOptions {
                grid_check: common.grid_check,
                keep_record: true,
            };
            let res = run_scenario(&sc, opts)?;
            write_result(&sc, &res, &out, common.format)?;
            for o in &res.outputs {
                println!(
                    "{:<9} xi_total={:.6} xi_relative={}",
                    o.engine.name(),
                    o.report.xi_total,
                    o.report.xi_relative.map_or("-".into(), |x| format!("{x:.6}"))
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Figure { id, common } => {
            let out = common
                .out
                .unwrap_or_else(|| PathBuf::from("out").join(format!("{id:?}").to_lowercase()));
            let opts = FigureOptions {
                out,
                engines: (!common.engine.is_empty()).then_some(common.engine),
                grid_check: common.grid_check,
            };
            for f in run_figure(id, &opts)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Sweep { file, common } => {
            let spec = SweepSpec::load(&file)?;
            let base = base_of(&file);
            let out = common
                .out
                .or_else(|| spec.output.as_ref().map(|o| base.join(o)))
                .unwrap_or_else(|| PathBuf::from("out/sweep"));
            let engines = (!common.engine.is_empty()).then_some(common.engine.as_slice());
            let opts = RunOptions {
                grid_check: common.grid_check,
                keep_record: false,
            };
            let outcome = run_sweep(&spec, &base, engines, opts)?;
            write_sweep(&spec, &outcome, &out, common.format)?;
            println!(
                "{} rows, {} failed points; wrote {}",
                outcome.rows.len(),
                outcome.failures.len(),
                out.display()
            );
            for f in &outcome.failures {
                eprintln!("point {} {:?}: {}", f.index, f.point, f.error);
            }
        }
        Command::Pump { file, common } => {
            let pump = PumpFile::load(&file)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("out/pump"));
            let outcome = run_pump(&pump, &out)?;
            println!(
                "final populations {:?}; trace drift {:.2e}",
                outcome.final_distribution.as_slice(),
                outcome.max_trace_drift
            );
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
