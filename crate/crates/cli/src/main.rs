//! `relief`: day-ahead clearing, AC congestion management with FACTS and
//! demand response, four-case comparison and wind uncertainty reports.

mod commands;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relief_core::dr::DrMode;
use relief_core::uncertainty::CurveShape;

#[derive(Parser)]
#[command(name = "relief", version, about)]
/// Two-stage congestion management: day-ahead clearing, then AC re-dispatch
/// with a TCSC, a STATCOM and demand response.
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Stage-1 clearing and the power-flow check of its schedule.
    Clear,
    /// Stage 1 followed by one congestion-management solve.
    Cmp,
    /// The four control cases on one stage-1 schedule.
    Compare,
    /// Two-point estimate of the wind-driven outputs, optionally sampled.
    Pem,
    /// Whole-day series: prices, losses, flows and load with and without DR.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Clear => "clear",
            Command::Cmp => "cmp",
            Command::Compare => "compare",
            Command::Pem => "pem",
            Command::Report => "report",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    pub fn on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Standard,
    PaperLiteral,
}

impl From<ModeArg> for DrMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Standard => DrMode::Standard,
            ModeArg::PaperLiteral => DrMode::PaperLiteral,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum CurveArg {
    Cubic,
    Linear,
}

impl From<CurveArg> for CurveShape {
    fn from(c: CurveArg) -> Self {
        match c {
            CurveArg::Cubic => CurveShape::Cubic,
            CurveArg::Linear => CurveShape::Linear,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct Options {
    /// Case file (JSON), or `rts24` for the built-in test system.
    #[arg(long, global = true, default_value = "rts24")]
    pub case: String,
    /// Hour of the day, 1 to 24.
    #[arg(long, global = true, default_value_t = 18)]
    pub hour: usize,
    #[arg(long, global = true, value_enum, default_value_t = Toggle::On)]
    pub facts: Toggle,
    #[arg(long, global = true, value_enum, default_value_t = Toggle::On)]
    pub dr: Toggle,
    /// Demand-response model form used for the load profiles.
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Standard)]
    pub mode: ModeArg,
    /// Stage-2 optimality tolerance.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    /// Monte-Carlo cross-check sample count.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Wind turbine power-curve shape between cut-in and rated speed.
    #[arg(long, global = true, value_enum, default_value_t = CurveArg::Cubic)]
    pub curve: CurveArg,
    /// Directory for CSV blocks, report.json and manifest.json.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Failure carrying its own exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub fn err(code: u8, message: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Exit {
            code,
            message: message.into(),
        })
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

/// 1 infeasible, 2 input error, 3 solver failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Exit>() {
        return e.code;
    }
    err.downcast_ref::<relief_core::Error>().map_or(2, core_code)
}

fn core_code(err: &relief_core::Error) -> u8 {
    use relief_core::Error::*;
    match err {
        Infeasible(_) | Unbounded(_) => 1,
        NonConvergence { .. } | SingularJacobian { .. } => 3,
        Scenario { source, .. } => core_code(source),
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let run = commands::run(cli.command.name(), &cli.opts).and_then(|report| {
        print!("{}", report.render()?);
        let elapsed = start.elapsed().as_secs_f64();
        if let Some(dir) = &cli.opts.out {
            report.write_dir(dir, elapsed)?;
        }
        eprintln!("relief: {} finished in {elapsed:.3} s", cli.command.name());
        Ok(())
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("relief: error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
