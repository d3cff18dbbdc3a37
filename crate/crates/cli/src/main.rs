// SPDX-License-Identifier: Apache-2.0

//! `sctkit` command-line pipeline: generate a target, analyze it, size a
//! trojan, insert it, simulate supply-current traces and attack them.
//!
//! Every command writes its artifacts to files and a run manifest next to
//! them. Diagnostics go to standard error.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_AMBIGUOUS: u8 = 4;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            msg: msg.into(),
        }
    }

    pub fn infeasible(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INFEASIBLE,
            msg: msg.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::validation(format!("{}: {e}", path.display()))
    }
}

impl From<sctkit::Error> for Failure {
    fn from(e: sctkit::Error) -> Self {
        use sctkit::Error::*;
        let code = match &e {
            InfeasibleProfile { .. }
            | NoFeasibleRo { .. }
            | InsufficientArea { .. }
            | CalibrationInfeasible(_) => EXIT_INFEASIBLE,
            TriggerNotFound => EXIT_AMBIGUOUS,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sctkit",
    version,
    about = "Side-channel trojan insertion and evaluation pipeline"
)]
struct Cli {
    /// Write the run manifest here instead of next to the main output.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Trace and process defaults, TOML or JSON (`.json`).
    #[arg(long, env = "SCTKIT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, env = "SCTKIT_JOBS")]
    pub jobs: Option<usize>,
    /// Overrides the measurement noise, µA.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Hint {
    Oracle,
    EdgeDetect,
}

impl From<Hint> for sctkit::attack::TriggerHint {
    fn from(h: Hint) -> Self {
        match h {
            Hint::Oracle => sctkit::attack::TriggerHint::Oracle,
            Hint::EdgeDetect => sctkit::attack::TriggerHint::EdgeDetect,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum KeyMode {
    Oracle,
    Heuristic,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FlavorArg {
    Hvt,
    Svt,
    Lvt,
}

impl From<FlavorArg> for sctkit::library::Flavor {
    fn from(f: FlavorArg) -> Self {
        match f {
            FlavorArg::Hvt => sctkit::library::Flavor::Hvt,
            FlavorArg::Svt => sctkit::library::Flavor::Svt,
            FlavorArg::Lvt => sctkit::library::Flavor::Lvt,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the built-in target presets.
    Presets {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a placed target design from a preset.
    Generate {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Extract the netlist, estimate the clock and report power.
    Analyze {
        design: PathBuf,
        /// Signal toggles per clock cycle; defaults to the preset's figure.
        #[arg(long)]
        toggles: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Size a trojan for an analysis report under a power budget.
    DesignSct {
        report: PathBuf,
        /// Budget as a share of leakage plus clock-tree power.
        #[arg(long, default_value_t = 0.10)]
        fraction: f64,
        #[arg(long, default_value_t = 2)]
        nleak: u32,
        /// Other leakage on the same supply, µW.
        #[arg(long, default_value_t = 0.0)]
        competing_leakage: f64,
        /// Area cap, µm².
        #[arg(long, conflicts_with = "area_cap_fraction")]
        area_cap: Option<f64>,
        /// Area cap as a share of the core area.
        #[arg(long)]
        area_cap_fraction: Option<f64>,
        #[arg(long, value_enum, default_value = "svt")]
        flavor: FlavorArg,
        /// Ring family group: `core` or `testchip`.
        #[arg(long, default_value = "core")]
        group: String,
        /// Calibration report whose families replace the built-in ones.
        #[arg(long)]
        families: Option<PathBuf>,
        /// Use the reference ring of the target class when nothing fits the budget.
        #[arg(long)]
        fallback_reference: bool,
        /// Controller timing margin, ps.
        #[arg(long, default_value_t = 20.0)]
        margin: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Place and route the trojan into filler gaps and sign off timing.
    Insert {
        design: PathBuf,
        sct: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        patch: PathBuf,
        #[arg(long, value_enum, default_value = "heuristic")]
        key_mode: KeyMode,
        /// Signoff margin, ps.
        #[arg(long, default_value_t = 20.0)]
        margin: f64,
        /// Scales the lower-layer pin blockage.
        #[arg(long, default_value_t = 1.0)]
        congestion: f64,
        /// Where to write the signoff report.
        #[arg(long)]
        signoff: Option<PathBuf>,
    },
    /// Simulate supply-current traces of a trojaned design.
    Simulate {
        trojaned: PathBuf,
        #[arg(long)]
        patch: PathBuf,
        /// Key, hexadecimal, most significant bit first.
        #[arg(long)]
        key: String,
        #[arg(long, default_value_t = 25)]
        dies: usize,
        /// Noisy captures per die.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        toggles: Option<f64>,
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Recover the key from a directory of traces.
    Attack {
        traces: PathBuf,
        #[arg(long, value_enum, default_value = "edge-detect")]
        hint: Hint,
        /// Minimum level spacing, µA; estimated from each trace when absent.
        #[arg(long)]
        resolution: Option<f64>,
        #[arg(long, env = "SCTKIT_JOBS")]
        jobs: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write CSV tables for a design, and for its trojaned version if given.
    Report {
        design: PathBuf,
        #[arg(long, requires = "patch")]
        trojaned: Option<PathBuf>,
        #[arg(long)]
        patch: Option<PathBuf>,
        /// Density map bin, µm.
        #[arg(long, default_value_t = 20.0)]
        bin_um: f64,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit ring-oscillator constants to measured anchors.
    Calibrate {
        /// `core`, `testchip`, or a JSON file of anchor rows.
        #[arg(long, default_value = "core")]
        anchors: String,
        #[arg(long, default_value_t = 0.10)]
        tolerance: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate, insert, simulate and attack a preset in one run.
    Campaign {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        dies: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Key, hexadecimal; random from `--key-seed` when absent.
        #[arg(long)]
        key: Option<String>,
        #[arg(long, default_value_t = 1)]
        key_seed: u64,
        #[arg(long, value_enum, default_value = "edge-detect")]
        hint: Hint,
        #[command(flatten)]
        common: Common,
        /// Per-run rows as CSV.
        #[arg(long)]
        rows: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Monte-Carlo static power of a design.
    Mc {
        design: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[command(flatten)]
        common: Common,
        /// Histogram as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn set_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::validation("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::validation(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let manifest = cli.manifest;
    use commands as c;
    match cli.command {
        Command::Presets { output } => c::presets(output.as_deref()),
        Command::Generate {
            preset,
            seed,
            output,
        } => c::generate(&preset, seed, &output, manifest),
        Command::Analyze {
            design,
            toggles,
            output,
        } => c::analyze(&design, toggles, &output, manifest),
        Command::DesignSct {
            report,
            fraction,
            nleak,
            competing_leakage,
            area_cap,
            area_cap_fraction,
            flavor,
            group,
            families,
            fallback_reference,
            margin,
            output,
        } => c::design_sct(
            &c::SctArgs {
                report,
                fraction,
                n_leak: nleak,
                competing_leakage,
                area_cap,
                area_cap_fraction,
                flavor: flavor.into(),
                group,
                families,
                fallback_reference,
                margin,
            },
            &output,
            manifest,
        ),
        Command::Insert {
            design,
            sct,
            output,
            patch,
            key_mode,
            margin,
            congestion,
            signoff,
        } => c::insert(
            &design,
            &sct,
            &output,
            &patch,
            key_mode,
            margin,
            congestion,
            signoff.as_deref(),
            manifest,
        ),
        Command::Simulate {
            trojaned,
            patch,
            key,
            dies,
            repeats,
            seed,
            toggles,
            common,
            output,
        } => {
            set_jobs(common.jobs)?;
            c::simulate(
                &trojaned, &patch, &key, dies, repeats, seed, toggles, &common, &output, manifest,
            )
        }
        Command::Attack {
            traces,
            hint,
            resolution,
            jobs,
            output,
        } => {
            set_jobs(jobs)?;
            c::attack(&traces, hint.into(), resolution, &output, manifest)
        }
        Command::Report {
            design,
            trojaned,
            patch,
            bin_um,
            bins,
            output,
        } => c::report(
            &design,
            trojaned.as_deref(),
            patch.as_deref(),
            bin_um,
            bins,
            &output,
            manifest,
        ),
        Command::Calibrate {
            anchors,
            tolerance,
            output,
        } => c::calibrate(&anchors, tolerance, &output, manifest),
        Command::Campaign {
            preset,
            seed,
            dies,
            repeats,
            key,
            key_seed,
            hint,
            common,
            rows,
            output,
        } => {
            set_jobs(common.jobs)?;
            c::campaign(
                &preset,
                seed,
                dies,
                repeats,
                key.as_deref(),
                key_seed,
                hint.into(),
                &common,
                rows.as_deref(),
                &output,
                manifest,
            )
        }
        Command::Mc {
            design,
            samples,
            seed,
            bins,
            common,
            csv,
            output,
        } => {
            set_jobs(common.jobs)?;
            c::mc(
                &design,
                samples,
                seed,
                bins,
                &common,
                csv.as_deref(),
                &output,
                manifest,
            )
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
