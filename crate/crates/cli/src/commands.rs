use std::path::Path;

use rrdps_core::attack::{monte_carlo_reports, MonteCarloSummary};
use rrdps_core::decoy::{self, DecoyIntensities, DecoyObservations};
use rrdps_core::rates::{sweep, ChannelModel, LeakageTable, ProtocolConfig, RateVariant};
use rrdps_core::{leakage_bound, tolerant_error, BoundMode, BoundQuery, Error, SolverOptions};
use serde::Deserialize;

use crate::output::{emit, Cell, Table};
use crate::{
    BoundArgs, Command, DecoyArgs, OracleArgs, OutputArgs, RateSweepArgs, RecomputeArgs,
    ToleranceArgs,
};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or input; exit code 2.
    Usage(String),
    /// The computation itself failed; exit code 1.
    Compute(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Compute(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { .. }
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::PacketTooShort { .. } => Failure::Usage(e.to_string()),
            Error::NotConverged(_) | Error::Estimation(_) | Error::DegenerateAttack(_) => {
                Failure::Compute(e.to_string())
            }
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Bound(a) => bound(a),
        Command::Tolerance(a) => tolerance(a),
        Command::RateSweep(a) => rate_sweep(a),
        Command::Decoy(a) => decoy_rows(a),
        Command::OracleVerify(a) => oracle_verify(a),
        Command::RecomputeL65(a) => recompute_l65(a),
    }
}

fn write(table: &Table, out: &OutputArgs) -> Outcome {
    write_to(table, out, out.output.as_deref())
}

fn write_to(table: &Table, out: &OutputArgs, path: Option<&Path>) -> Outcome {
    emit(&table.render(out.format, out.precision), path)
        .map_err(|e| Failure::Usage(format!("cannot write output: {e}")))
}

fn bound(a: BoundArgs) -> Outcome {
    let query = BoundQuery::new(a.l, a.n, a.mode, a.error)?;
    let r = leakage_bound(&query, &SolverOptions::default())?;
    let mut t = Table::new(&["L", "N", "mode", "E", "iae", "argmax", "converged", "gap"]);
    t.push(vec![
        a.l.into(),
        a.n.into(),
        a.mode.name().into(),
        a.error.into(),
        r.iae.into(),
        r.argmax
            .as_ref()
            .map_or(Cell::Absent, |w| Cell::List(w.as_slice().to_vec())),
        r.converged.into(),
        r.objective_gap_estimate.into(),
    ]);
    write(&t, &a.out)?;
    if !r.converged {
        return Err(Failure::Compute(format!(
            "solver did not converge (gap estimate {:e})",
            r.objective_gap_estimate
        )));
    }
    Ok(())
}

fn tolerance(a: ToleranceArgs) -> Outcome {
    if let Some(&bad) = a.l.iter().find(|&&l| l < a.n + 2) {
        return Err(Failure::Usage(format!(
            "L = {bad} is too short: tolerable error rates need L >= N + 2 = {}",
            a.n + 2
        )));
    }
    let modes: Vec<BoundMode> = a.mode.map_or(BoundMode::ALL.to_vec(), |m| vec![m]);
    let mut headers = vec!["L"];
    headers.extend(modes.iter().map(|m| m.name()));
    let mut t = Table::new(&headers);
    for &l in &a.l {
        let mut row: Vec<Cell> = vec![l.into()];
        for &m in &modes {
            row.push(tolerant_error(l, a.n, m)?.into());
        }
        t.push(row);
    }
    write(&t, &a.out)
}

fn rate_sweep(a: RateSweepArgs) -> Outcome {
    let losses = &a.loss.0;
    if losses.is_empty() {
        return Err(Failure::Usage("empty loss grid".into()));
    }
    let channel = ChannelModel::new(losses[0], a.dark_rate, a.misalignment)?;
    let table = LeakageTable::new();
    let mut t = Table::new(&["loss_db", "variant", "L", "R", "mu_opt", "nu_th_opt", "Q", "E"]);
    for &l in &a.l {
        let template = ProtocolConfig::new(l, 0.1, 1, a.ec_efficiency)?;
        for row in sweep(&channel, &template, losses, &a.variants, &table)? {
            let p = row.point;
            t.push(vec![
                p.loss_db.into(),
                row.variant.name().into(),
                if row.variant == RateVariant::Bb84 {
                    Cell::Absent
                } else {
                    l.into()
                },
                p.key_rate.into(),
                p.optimal_mu.into(),
                p.optimal_nu_th.into(),
                p.gain.into(),
                p.error.into(),
            ]);
        }
    }
    write(&t, &a.out)
}

#[derive(Debug, Deserialize)]
struct ObservationRow {
    #[serde(rename = "Qs")]
    q_signal: f64,
    #[serde(rename = "Es")]
    e_signal: f64,
    #[serde(rename = "Qd")]
    q_decoy: f64,
    #[serde(rename = "Ed")]
    e_decoy: f64,
    #[serde(rename = "Qv")]
    q_vacuum: f64,
}

fn decoy_rows(a: DecoyArgs) -> Outcome {
    let intens = DecoyIntensities::new(a.mu_signal, a.mu_decoy, a.mu_vacuum, a.l)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.input)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.input.display())))?;
    let mut t = Table::new(&["row", "Y0", "Y1", "E1", "R1", "R2"]);
    for (k, rec) in reader.deserialize::<ObservationRow>().enumerate() {
        let r = rec.map_err(|e| Failure::Usage(format!("{}: {e}", a.input.display())))?;
        let obs = DecoyObservations::new(r.q_signal, r.e_signal, r.q_decoy, r.e_decoy, r.q_vacuum)?;
        if obs.is_suspicious() {
            eprintln!("warning: row {}: vacuum yield exceeds signal yield", k + 1);
        }
        let res = decoy::analyze(&intens, &obs, a.ec_efficiency)
            .map_err(|e| Failure::Compute(format!("row {}: {e}", k + 1)))?;
        t.push(vec![
            (k + 1).into(),
            res.estimates.y0.into(),
            res.estimates.y1.into(),
            res.estimates.e1.into(),
            res.rate_without_error.into(),
            res.rate_with_error.into(),
        ]);
    }
    write(&t, &a.out)
}

fn oracle_verify(a: OracleArgs) -> Outcome {
    if let Some(&bad) = a.l.iter().find(|&&l| l < 2) {
        return Err(Failure::Usage(format!("L = {bad} must be at least 2")));
    }
    let mut summary = Table::new(&["L", "trials", "violations", "min_slack", "max_info"]);
    let mut scatter = Table::new(&["L", "E", "I", "bound"]);
    let mut violations = 0;
    for &l in &a.l {
        let reports = monte_carlo_reports(l, a.trials, a.seed)?;
        let s = MonteCarloSummary::from_reports(l, &reports);
        violations += s.violations;
        summary.push(vec![
            l.into(),
            s.trials.into(),
            s.violations.into(),
            s.min_theorem_slack.is_finite().then_some(s.min_theorem_slack).into(),
            s.max_info.into(),
        ]);
        for r in &reports {
            scatter.push(vec![
                l.into(),
                r.metrics.aggregate_error.into(),
                r.metrics.aggregate_info.into(),
                r.bound.into(),
            ]);
        }
    }
    write(&summary, &a.out)?;
    if let Some(path) = &a.scatter {
        write_to(&scatter, &a.out, Some(path))?;
    }
    if violations > 0 {
        return Err(Failure::Compute(format!(
            "{violations} sampled attacks beat the bound"
        )));
    }
    Ok(())
}

fn recompute_l65(a: RecomputeArgs) -> Outcome {
    let r = decoy::recompute_l65()?;
    let mut t = Table::new(&["L", "nu_th", "iae", "e_src", "R1", "R2"]);
    t.push(vec![
        decoy::l65::L.into(),
        decoy::l65::NU_TH.into(),
        r.iae_tagged.into(),
        r.e_src.into(),
        r.rate_original.into(),
        r.rate_proposed.into(),
    ]);
    write(&t, &a.out)
}
