use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ghz_cli::{
    model_text, run_analyze, run_calibrate, run_fit, run_oracle, run_report, run_simulate, CliError, Format,
    RunOverrides,
};
use ghz_core::measurement::SettingId;
use ghz_core::sim::SamplingMode;

/// Sequential multiphoton GHZ generation: simulation and analysis.
#[derive(Parser)]
#[command(name = "ghzsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of qubits.
    #[arg(short, long)]
    m: Option<usize>,
    /// Trajectories per setting.
    #[arg(short = 'n', long)]
    trajectories: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement setting (eigen | mi:<i>); repeat for several.
    #[arg(long = "setting")]
    settings: Vec<SettingId>,
    /// Sampler (heralded | direct).
    #[arg(long)]
    mode: Option<SamplingMode>,
}

impl RunArgs {
    fn overrides(self) -> RunOverrides {
        RunOverrides {
            config: self.config,
            m: self.m,
            trajectories: self.trajectories,
            seed: self.seed,
            settings: self.settings,
            mode: self.mode,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate coincidence tables for each setting.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Table format (csv | json).
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Estimate the fidelity from coincidence tables.
    Analyze {
        /// One eigen table and the m superposition tables.
        #[arg(required = true)]
        tables: Vec<PathBuf>,
        /// Subtract expected afterpulse coincidences with this probability.
        #[arg(long)]
        afterpulse: Option<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fit the per-photon scaling of F_e and F_s across report files.
    Fit {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Phase-noise model used for the visibility factors.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file for the fit.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a phase sweep and fit the internal phase.
    Calibrate {
        #[command(flatten)]
        run: RunArgs,
        /// Number of set phases over one period.
        #[arg(long, default_value_t = 12)]
        points: usize,
        /// Hidden phase offset used by the simulation, degrees.
        #[arg(long, default_value_t = 30.0)]
        offset: f64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Exact outcome distributions by enumeration (m <= 4).
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: Format,
    },
    /// Model fidelity chain and rates for m = 1..max-m.
    Report {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 6)]
        max_m: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { run, out_dir, format } => {
            print!("{}", run_simulate(&run.overrides(), &out_dir, format)?.to_text());
        }
        Command::Analyze {
            tables,
            afterpulse,
            out_dir,
        } => {
            print!("{}", run_analyze(&tables, afterpulse, out_dir.as_deref())?.to_text());
        }
        Command::Fit { reports, config, out } => {
            let fit = run_fit(&reports, config.as_deref(), out.as_deref())?;
            println!("alpha    = {:.4}", fit.alpha);
            println!("beta_res = {:.4}", fit.beta_res);
        }
        Command::Calibrate {
            run,
            points,
            offset,
            out_dir,
        } => {
            let s = run_calibrate(&run.overrides(), points, offset, &out_dir)?;
            println!(
                "phi0 = {:.2} +- {:.2} deg (simulated offset {:.2} deg), amplitude {:.3}",
                s.calibration.phi0.to_degrees(),
                s.calibration.phi0_error.to_degrees(),
                s.true_offset.to_degrees(),
                s.calibration.amplitude
            );
        }
        Command::Oracle { run, out_dir, format } => {
            let s = run_oracle(&run.overrides(), out_dir.as_deref(), format)?;
            println!(
                "m = {}: F_e = {:.4}, F_s = {:.4}, F = {:.4}",
                s.m, s.fidelity.f_e, s.fidelity.f_s, s.fidelity.f
            );
            for set in &s.settings {
                println!(
                    "{} (coincidence probability {:.3e})",
                    set.setting, set.coincidence_probability
                );
                for o in &set.outcomes {
                    println!("  {}  {:.6}  {:.6}", o.outcome, o.emitted, o.detected);
                }
            }
        }
        Command::Report { run, max_m, out_dir } => {
            print!(
                "{}",
                model_text(&run_report(&run.overrides(), max_m, out_dir.as_deref())?)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ghzsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
