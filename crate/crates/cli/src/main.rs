//! `rrdps`: leakage bounds, tolerable error rates, key-rate sweeps, decoy
//! analysis and attack verification for round-robin DPS QKD.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use rrdps_core::rates::RateVariant;
use rrdps_core::BoundMode;

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "rrdps", version, about, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Significant digits in CSV output.
    #[arg(long, default_value_t = 6)]
    precision: usize,
    /// Flat `key = value` file of defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Leakage bound for one packet length and photon number.
    #[command(args_override_self = true)]
    Bound(BoundArgs),
    /// Largest error rate with a positive key, per packet length.
    #[command(args_override_self = true)]
    Tolerance(ToleranceArgs),
    /// Optimized key rate against channel loss.
    #[command(args_override_self = true)]
    RateSweep(RateSweepArgs),
    /// Decoy-state estimation and key rates from measured yields.
    #[command(args_override_self = true)]
    Decoy(DecoyArgs),
    /// Check the single-photon bound against random explicit attacks.
    #[command(args_override_self = true)]
    OracleVerify(OracleArgs),
    /// Re-evaluate the published 65-pulse experiment under both bounds.
    #[command(name = "recompute-l65", args_override_self = true)]
    RecomputeL65(RecomputeArgs),
}

fn parse_mode(s: &str) -> Result<BoundMode, String> {
    s.parse().map_err(|e: rrdps_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<RateVariant, String> {
    s.parse().map_err(|e: rrdps_core::Error| e.to_string())
}

/// Channel losses in dB.
#[derive(Debug, Clone)]
struct LossGrid(Vec<f64>);

fn parse_loss_grid(s: &str) -> Result<LossGrid, String> {
    parse_losses(s).map(LossGrid)
}

/// `start:stop:step` (inclusive) or a comma-separated list.
fn parse_losses(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty loss grid".into());
    }
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("'{t}' is not a number"))
    };
    if let Some((start, rest)) = s.split_once(':') {
        let (stop, step) = rest
            .split_once(':')
            .ok_or("range must be start:stop:step")?;
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
            return Err(format!("bad range {s}"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|k| start + k as f64 * step).collect());
    }
    s.split(',').map(num).collect()
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long = "L")]
    l: usize,
    #[arg(long = "N")]
    n: usize,
    /// original, unconstrained or constrained.
    #[arg(long, value_parser = parse_mode)]
    mode: BoundMode,
    /// Observed bit error rate (constrained mode only).
    #[arg(long)]
    error: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct ToleranceArgs {
    /// Comma-separated packet lengths.
    #[arg(long = "L", value_delimiter = ',', action = ArgAction::Set, required = true)]
    l: Vec<usize>,
    #[arg(long = "N", default_value_t = 1)]
    n: usize,
    /// Restrict to one bound.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<BoundMode>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct RateSweepArgs {
    #[arg(long = "L", value_delimiter = ',', action = ArgAction::Set, required = true)]
    l: Vec<usize>,
    /// Channel losses in dB: `start:stop:step` or a list.
    #[arg(long, value_parser = parse_loss_grid)]
    loss: LossGrid,
    #[arg(long, default_value_t = 1e-6)]
    dark_rate: f64,
    #[arg(long, default_value_t = 0.015)]
    misalignment: f64,
    /// Any of original, proposed, monitored, bb84.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, value_parser = parse_variant,
          default_value = "original,proposed,bb84")]
    variants: Vec<RateVariant>,
    #[arg(long, default_value_t = 1.0)]
    ec_efficiency: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct DecoyArgs {
    /// CSV with columns Qs,Es,Qd,Ed,Qv.
    #[arg(long)]
    input: PathBuf,
    /// Per-pulse mean photon numbers.
    #[arg(long)]
    mu_signal: f64,
    #[arg(long)]
    mu_decoy: f64,
    #[arg(long)]
    mu_vacuum: f64,
    #[arg(long = "L")]
    l: usize,
    #[arg(long, default_value_t = 1.0)]
    ec_efficiency: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long = "L", value_delimiter = ',', action = ArgAction::Set, required = true)]
    l: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write every sampled (E, I) point here.
    #[arg(long)]
    scatter: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct RecomputeArgs {
    #[command(flatten)]
    out: OutputArgs,
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_grids() {
        assert_eq!(parse_losses("0:2:0.5").unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_losses("0:60:1").unwrap().len(), 61);
        assert_eq!(parse_losses("5, 10").unwrap(), vec![5.0, 10.0]);
        for bad in ["", "1:0:1", "0:1:0", "0:1", "a,b"] {
            assert!(parse_losses(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn later_flags_win() {
        let cli = Cli::try_parse_from(["rrdps", "bound", "--L", "5", "--N", "1", "--mode", "original", "--L", "7"])
            .unwrap();
        let Command::Bound(b) = cli.command else { panic!() };
        assert_eq!(b.l, 7);
    }
}
