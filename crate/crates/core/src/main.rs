use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uwb_interference::cluster::ChipTime;
use uwb_interference::error::{Error, Result};
use uwb_interference::harness::{cmd_analyze, cmd_compare, cmd_simulate, cmd_sweep, TcRange};
use uwb_interference::oracle::OracleMode;
use uwb_interference::params::{load_params, ChannelParams, REFERENCE_PARAMS};
use uwb_interference::pdp::{GridSpec, PowerNormalization};

/// Interference-power statistics for IR-UWB links under the IEEE 802.15.4a
/// channel model.
#[derive(Debug, Parser)]
#[command(name = "uwb-interference", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Parameter file; the bundled 802.15.4a table is used when omitted.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Channel model block (cm1, cm2, cm3, cm4).
    #[arg(long, global = true, default_value = "cm1")]
    cm: String,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Power scaling of the analytic chain: unit-energy or literal.
    #[arg(long, global = true, default_value = "unit-energy")]
    normalization: PowerNormalization,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the analytic interference-power law.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Chip duration in ns.
        #[arg(long)]
        tc: f64,
        /// Evaluation grid `min:max:points`.
        #[arg(long)]
        grid: Option<GridSpec>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monte-Carlo samples of the interference power.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tc: f64,
        #[arg(long, default_value_t = 100_000)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Oracle fidelity: simplified or full.
        #[arg(long, default_value = "full")]
        mode: OracleMode,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the analytic law with Monte-Carlo simulation.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tc: f64,
        #[arg(long, default_value_t = 100_000)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "full")]
        mode: OracleMode,
        /// Cluster counts for the path-count sub-report.
        #[arg(long, value_delimiter = ',', default_value = "5")]
        path_clusters: Vec<u32>,
        /// Exit with code 4 when an analytic moment fails to upper-bound the simulation.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find the smallest chip time whose analytic mean interference meets a target.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Chip times `start:stop:step` in ns.
        #[arg(long)]
        tc_range: TcRange,
        /// Target mean interference power.
        #[arg(long)]
        target: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ChannelParams> {
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Validation(format!("cannot configure {threads} threads: {e}")))?;
    }
    let source = match &common.params {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::Load(format!("cannot read {}: {e}", path.display())))?,
        None => REFERENCE_PARAMS.to_string(),
    };
    load_params(&source, &common.cm)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?);
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze { common, tc, grid, out } => {
            let params = load(&common)?;
            let (_, summary) = cmd_analyze(&params, ChipTime::new(tc)?, grid, common.normalization, &out)?;
            println!(
                "{} tc={} ns: mean={} variance={} P(x=0)={} P(full power)={}",
                params.id, tc, summary.mean, summary.variance, summary.mass_at_zero, summary.full_power_mass
            );
            Ok(0)
        }
        Command::Simulate { common, tc, runs, seed, mode, out } => {
            let params = load(&common)?;
            let est = cmd_simulate(&params, mode, ChipTime::new(tc)?, runs, seed, &out)?;
            println!(
                "{} tc={} ns, {} runs ({} mode): mean={} variance={} stderr={}",
                params.id, tc, est.runs, mode, est.mean, est.variance, est.standard_error
            );
            Ok(0)
        }
        Command::Compare { common, tc, runs, seed, mode, path_clusters, strict, out } => {
            let params = load(&common)?;
            let report = cmd_compare(
                &params,
                mode,
                common.normalization,
                ChipTime::new(tc)?,
                runs,
                seed,
                &path_clusters,
                out.as_deref(),
            )?;
            print_json(&report)?;
            Ok(if strict { report.strict_exit_code() as u8 } else { 0 })
        }
        Command::Sweep { common, tc_range, target, out } => {
            let params = load(&common)?;
            let report = cmd_sweep(&params, common.normalization, &tc_range.values(), target, out.as_deref())?;
            print_json(&report)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
