use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sgues_core::certifier::SweepObjective;
use sgues_core::cli::{self, CertifyArgs, SimulateArgs, SynthArgs};
use sgues_core::simulator::SignalStyle;

/// Strong exponential stability certification for switched impulsive
/// systems with mode-constrained switching.
#[derive(Parser)]
#[command(name = "sgues", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize per-mode Lyapunov data and write the synthesis report.
    Synth {
        /// System specification file (JSON).
        spec: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "runs/synth")]
        out: PathBuf,
    },
    /// Assemble stability certificates and write the certification report.
    Certify {
        spec: PathBuf,
        #[command(flatten)]
        options: CertifyOptions,
        #[arg(long, default_value = "runs/certify")]
        out: PathBuf,
    },
    /// Generate admissible signals, simulate trajectories and check bounds.
    Simulate {
        spec: PathBuf,
        /// Number of seeded runs.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Horizon in seconds (decimal literal).
        #[arg(long, default_value = "10")]
        horizon: String,
        /// Sampling step ceiling in seconds (defaults to 0.002, shrunk
        /// further when events are close together).
        #[arg(long)]
        step: Option<String>,
        #[arg(long, value_enum, default_value_t = StyleArg::Periodic)]
        style: StyleArg,
        /// Exogenous input for perturbed flows: `zero`, `constant:V` or
        /// `sine:AMP,FREQ`.
        #[arg(long, default_value = "zero", value_parser = cli::parse_input_signal)]
        input: sgues_core::simulator::InputSignal,
        /// Certification report to verify against (certifies inline when
        /// absent).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        options: CertifyOptions,
        #[arg(long, default_value = "runs/simulate")]
        out: PathBuf,
    },
    /// Re-verify an existing certification report on fresh signals.
    Verify {
        spec: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value = "10")]
        horizon: String,
        #[arg(long, default_value = "runs/verify")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CertifyOptions {
    /// Mode-sequence lengths, e.g. `--L 1,2,3`.
    #[arg(long = "L", value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    lengths: Vec<u64>,
    /// Switching balance coefficient `c_s`.
    #[arg(long = "cs")]
    c_switch: Option<f64>,
    /// Per-mode balance coefficient, repeatable: `--ci 1=0.8 --ci 2=2.3`.
    #[arg(long = "ci", value_parser = parse_mode_coefficient)]
    c_mode: Vec<(usize, f64)>,
    /// Scan coefficient grids instead of using explicit values.
    #[arg(long)]
    sweep: bool,
    /// Sweep objective.
    #[arg(long, value_enum, default_value_t = ObjectiveArg::MaxLambda)]
    objective: ObjectiveArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Periodic,
    Randomized,
}

impl From<StyleArg> for SignalStyle {
    fn from(value: StyleArg) -> Self {
        match value {
            StyleArg::Periodic => SignalStyle::Periodic,
            StyleArg::Randomized => SignalStyle::Randomized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    MaxLambda,
    MinK,
}

impl From<ObjectiveArg> for SweepObjective {
    fn from(value: ObjectiveArg) -> Self {
        match value {
            ObjectiveArg::MaxLambda => SweepObjective::MaxLambda,
            ObjectiveArg::MinK => SweepObjective::MinK,
        }
    }
}

fn parse_mode_coefficient(text: &str) -> Result<(usize, f64), String> {
    let (mode, value) = text
        .split_once('=')
        .ok_or_else(|| format!("expected mode=value, got `{text}`"))?;
    let mode: usize = mode.trim().parse().map_err(|_| format!("bad mode index `{mode}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("bad coefficient `{value}`"))?;
    Ok((mode, value))
}

fn certify_args(spec: &Path, options: &CertifyOptions, out: &Path) -> CertifyArgs {
    CertifyArgs {
        spec: spec.to_path_buf(),
        lengths: options.lengths.clone(),
        c_switch: options.c_switch,
        c_mode: options.c_mode.clone(),
        sweep: options.sweep,
        objective: options.objective.into(),
        out: out.to_path_buf(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { spec, out } => {
            cli::cmd_synth(&SynthArgs { spec: spec.clone(), out: out.clone() })
        }
        Command::Certify { spec, options, out } => {
            cli::cmd_certify(&certify_args(spec, options, out))
        }
        Command::Simulate { spec, seeds, horizon, step, style, input, report, options, out } => {
            cli::cmd_simulate(&SimulateArgs {
                spec: spec.clone(),
                seeds: *seeds,
                horizon: horizon.clone(),
                step: step.clone(),
                style: (*style).into(),
                input: *input,
                report: report.clone(),
                certify: certify_args(spec, options, out),
                out: out.clone(),
                summary_only: false,
            })
        }
        Command::Verify { spec, report, seeds, horizon, out } => {
            cli::cmd_simulate(&SimulateArgs {
                spec: spec.clone(),
                seeds: *seeds,
                horizon: horizon.clone(),
                step: None,
                style: SignalStyle::Randomized,
                input: sgues_core::simulator::InputSignal::Zero,
                report: Some(report.clone()),
                certify: certify_args(
                    spec,
                    &CertifyOptions {
                        lengths: vec![1, 2, 3],
                        c_switch: None,
                        c_mode: vec![],
                        sweep: false,
                        objective: ObjectiveArg::MaxLambda,
                    },
                    out,
                ),
                out: out.clone(),
                summary_only: true,
            })
        }
    };
    match result {
        Ok(exit) => ExitCode::from(exit.code() as u8),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(2)
        }
    }
}
