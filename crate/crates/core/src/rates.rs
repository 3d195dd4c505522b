//! Channel and detector models and asymptotic secret-key rates per pulse.
//!
//! Bob uses photon-number-resolving detectors with unit efficiency (detector
//! loss is folded into the channel). A packet is `L` weak coherent pulses of
//! mean photon number `mu` each, so a packet carries `Poisson(L mu)` photons.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::bound::{leakage, original_bound, BoundMode};
use crate::entropy::h2_checked;
use crate::error::{Error, Result};

/// Residual Poisson mass below which sums are truncated.
pub const POISSON_TAIL: f64 = 1e-12;

/// Default cap on the tagging threshold.
pub const MAX_NU_TH: usize = 40;

/// Mean photon number search interval per pulse.
pub const MU_RANGE: (f64, f64) = (1e-4, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    /// Total loss in dB, detector efficiency included.
    pub loss_db: f64,
    /// Dark-count probability per pulse and detector.
    pub dark_rate: f64,
    /// Probability that a photon clicks the wrong detector.
    pub misalignment: f64,
}

impl ChannelModel {
    pub fn new(loss_db: f64, dark_rate: f64, misalignment: f64) -> Result<Self> {
        if !(loss_db >= 0.0) || !loss_db.is_finite() {
            return Err(Error::Domain {
                name: "loss_db",
                value: loss_db,
                domain: "[0, inf)",
            });
        }
        if !(0.0..1.0).contains(&dark_rate) {
            return Err(Error::Domain {
                name: "dark_rate",
                value: dark_rate,
                domain: "[0, 1)",
            });
        }
        if !(0.0..=0.5).contains(&misalignment) {
            return Err(Error::Domain {
                name: "misalignment",
                value: misalignment,
                domain: "[0, 0.5]",
            });
        }
        Ok(ChannelModel {
            loss_db,
            dark_rate,
            misalignment,
        })
    }

    pub fn with_loss(self, loss_db: f64) -> Result<Self> {
        ChannelModel::new(loss_db, self.dark_rate, self.misalignment)
    }

    /// `eta = 10^(-loss / 10)`.
    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    /// Pulses per packet.
    pub l: usize,
    /// Mean photon number per pulse.
    pub mu: f64,
    /// Photon-number tagging threshold (no-monitoring rate only).
    pub nu_th: usize,
    /// Error-correction inefficiency multiplying `h2(E)`.
    pub ec_efficiency: f64,
}

impl ProtocolConfig {
    pub fn new(l: usize, mu: f64, nu_th: usize, ec_efficiency: f64) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidParameter(format!(
                "packet length L = {l} must be at least 2"
            )));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Domain {
                name: "mu",
                value: mu,
                domain: "(0, inf)",
            });
        }
        if nu_th < 1 || nu_th > MAX_NU_TH {
            return Err(Error::InvalidParameter(format!(
                "tagging threshold {nu_th} must lie in [1, {MAX_NU_TH}]"
            )));
        }
        if !(ec_efficiency >= 1.0) {
            return Err(Error::Domain {
                name: "ec_efficiency",
                value: ec_efficiency,
                domain: "[1, inf)",
            });
        }
        Ok(ProtocolConfig {
            l,
            mu,
            nu_th,
            ec_efficiency,
        })
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_nu_th(mut self, nu_th: usize) -> Self {
        self.nu_th = nu_th;
        self
    }
}

/// One point on a key-rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub loss_db: f64,
    /// Detection probability per packet.
    pub gain: f64,
    /// Bit error rate; `None` when nothing is detected.
    pub error: Option<f64>,
    /// Secret key per pulse, clamped at zero.
    pub key_rate: f64,
    pub optimal_mu: f64,
    pub optimal_nu_th: Option<usize>,
    /// Set when the unclamped rate was negative.
    pub clamped: bool,
}

/// Poisson probabilities `P(0..)` for mean `lambda`, stopping once the
/// remaining mass drops below `tail`. Returns the weights and that residual.
pub fn poisson_weights(lambda: f64, tail: f64) -> (Vec<f64>, f64) {
    let mut weights = Vec::new();
    let mut p = (-lambda).exp();
    loop {
        weights.push(p);
        let i = weights.len();
        let residual = poisson_upper_tail(lambda, i);
        if residual < tail || i > 10_000 {
            return (weights, residual);
        }
        p *= lambda / i as f64;
    }
}

/// `P(X >= k)` for `X ~ Poisson(lambda)`, summed directly to avoid
/// cancellation when the tail is small.
pub fn poisson_upper_tail(lambda: f64, k: usize) -> f64 {
    if lambda <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k as f64 <= lambda {
        // Head is the small part; complement it.
        let mut head = 0.0;
        let mut p = (-lambda).exp();
        for j in 0..k {
            head += p;
            p *= lambda / (j + 1) as f64;
        }
        return (1.0 - head).clamp(0.0, 1.0);
    }
    // log P(k), accumulated in log space to survive large k
    let log_p: f64 = (1..=k).fold(-lambda, |acc, j| acc + lambda.ln() - (j as f64).ln());
    let mut term = log_p.exp();
    let mut total = 0.0;
    let mut j = k;
    while term > 0.0 {
        total += term;
        j += 1;
        term *= lambda / j as f64;
        if term < total * 1e-18 {
            break;
        }
    }
    total.min(1.0)
}

fn window_factor(channel: &ChannelModel, l: usize, r: usize) -> (f64, f64) {
    let windows = (l - r) as f64;
    let d = channel.dark_rate;
    (windows, (1.0 - d).powf(2.0 * windows - 1.0))
}

fn check_delay(l: usize, r: usize) -> Result<()> {
    if r < 1 || r >= l {
        return Err(Error::InvalidParameter(format!(
            "delay r = {r} must lie in [1, {}]",
            l - 1
        )));
    }
    Ok(())
}

/// Probability of exactly one click among the `L - r` windows opened for
/// delay `r`.
pub fn counting_rate(channel: &ChannelModel, cfg: &ProtocolConfig, r: usize) -> Result<f64> {
    check_delay(cfg.l, r)?;
    let (windows, no_dark) = window_factor(channel, cfg.l, r);
    let arriving = windows * channel.transmittance() * cfg.mu;
    Ok(no_dark * (-arriving).exp() * (arriving + 2.0 * windows * channel.dark_rate))
}

/// Error-click probability at delay `r` (numerator of the error rate).
fn error_count(channel: &ChannelModel, cfg: &ProtocolConfig, r: usize) -> f64 {
    let (windows, no_dark) = window_factor(channel, cfg.l, r);
    let arriving = windows * channel.transmittance() * cfg.mu;
    no_dark
        * (-arriving).exp()
        * (arriving * channel.misalignment + windows * channel.dark_rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainError {
    pub gain: f64,
    pub error: Option<f64>,
}

/// Overall gain per packet and bit error rate, averaged over the `L - 1`
/// delays.
pub fn gain_and_error(channel: &ChannelModel, cfg: &ProtocolConfig) -> Result<GainError> {
    let delays = (cfg.l - 1) as f64;
    let mut gain = 0.0;
    let mut errors = 0.0;
    for r in 1..cfg.l {
        gain += counting_rate(channel, cfg, r)?;
        errors += error_count(channel, cfg, r);
    }
    gain /= delays;
    errors /= delays;
    let error = (gain > 0.0).then(|| (errors / gain).clamp(0.0, 1.0));
    Ok(GainError { gain, error })
}

/// Probability that a packet holds more than `nu_th` photons.
pub fn multiphoton_probability(cfg: &ProtocolConfig) -> f64 {
    poisson_upper_tail(cfg.l as f64 * cfg.mu, cfg.nu_th + 1)
}

fn finish(
    channel: &ChannelModel,
    ge: GainError,
    raw_per_pulse: f64,
    mu: f64,
    nu_th: Option<usize>,
) -> RatePoint {
    let clamped = raw_per_pulse < 0.0;
    RatePoint {
        loss_db: channel.loss_db,
        gain: ge.gain,
        error: ge.error,
        key_rate: raw_per_pulse.max(0.0),
        optimal_mu: mu,
        optimal_nu_th: nu_th,
        clamped,
    }
}

fn no_monitor_raw(ge: &GainError, cfg: &ProtocolConfig, e_src: f64, iae: f64) -> Result<f64> {
    let Some(e) = ge.error else {
        return Ok(0.0);
    };
    let q = ge.gain;
    let per_packet = q * (1.0 - cfg.ec_efficiency * h2_checked(e.min(0.5))?) - e_src - (q - e_src) * iae;
    Ok(per_packet / cfg.l as f64)
}

/// Key rate without error monitoring at fixed `mu` and `nu_th`. `iae` is the
/// leakage bound for an `nu_th`-photon packet.
pub fn key_rate_no_monitor(
    channel: &ChannelModel,
    cfg: &ProtocolConfig,
    iae: f64,
) -> Result<RatePoint> {
    let ge = gain_and_error(channel, cfg)?;
    let e_src = multiphoton_probability(cfg);
    let raw = no_monitor_raw(&ge, cfg, e_src, iae)?;
    Ok(finish(channel, ge, raw, cfg.mu, Some(cfg.nu_th)))
}

/// Memoized leakage bounds keyed by `(L, N, mode)`.
#[derive(Debug, Default)]
pub struct LeakageTable {
    cache: Mutex<HashMap<(usize, usize, BoundMode), f64>>,
}

impl LeakageTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Photon-number-indexed leakage without error constraint.
    pub fn get(&self, l: usize, n: usize, mode: BoundMode) -> Result<f64> {
        if mode == BoundMode::Constrained {
            return Err(Error::InvalidParameter(
                "the leakage table only caches error-independent bounds".into(),
            ));
        }
        if let Some(v) = self.cache.lock().unwrap().get(&(l, n, mode)) {
            return Ok(*v);
        }
        let v = match mode {
            BoundMode::Original => original_bound(l, n)?,
            _ if n + 1 > l => 1.0,
            _ => leakage(l, n, mode, None)?,
        };
        self.cache.lock().unwrap().insert((l, n, mode), v);
        Ok(v)
    }
}

/// Scalar maximizer on `log mu`: a log-spaced scan followed by golden-section
/// refinement around the best scan point.
pub fn maximize_over_mu<F>(range: (f64, f64), rel_tol: f64, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const SCAN: usize = 41;
    let (lo, hi) = (range.0.ln(), range.1.ln());
    let at = |i: usize| lo + (hi - lo) * i as f64 / (SCAN - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..SCAN {
        let v = f(at(i).exp())?;
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = at(best_i.saturating_sub(1));
    let mut b = at((best_i + 1).min(SCAN - 1));
    let mut best = (at(best_i).exp(), best_v);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c.exp())?;
    let mut fd = f(d.exp())?;
    // |b - a| on the log scale is the relative width in mu
    while (b - a).abs() > rel_tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d.exp())?;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x.exp(), v);
        }
    }
    Ok(best)
}

/// Relative tolerance of the `mu` search.
pub const MU_REL_TOL: f64 = 1e-6;

/// No-monitoring key rate with `mu` and `nu_th` optimized. `mode` selects the
/// leakage bound (original or unconstrained).
pub fn optimize_no_monitor(
    channel: &ChannelModel,
    template: &ProtocolConfig,
    mode: BoundMode,
    table: &LeakageTable,
) -> Result<RatePoint> {
    let max_nu = MAX_NU_TH.min(template.l - 1);
    let mut best: Option<RatePoint> = None;
    let mut best_raw = f64::NEG_INFINITY;
    for nu in 1..=max_nu {
        let iae = table.get(template.l, nu, mode)?;
        let base = template.with_nu_th(nu);
        let (mu, raw) = maximize_over_mu(MU_RANGE, MU_REL_TOL, |mu| {
            let cfg = base.with_mu(mu);
            let ge = gain_and_error(channel, &cfg)?;
            no_monitor_raw(&ge, &cfg, multiphoton_probability(&cfg), iae)
        })?;
        if raw > best_raw {
            best_raw = raw;
            best = Some(key_rate_no_monitor(channel, &base.with_mu(mu), iae)?);
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("no admissible tagging threshold".into()))
}

/// Per-photon-number yield and error rate `(Y_i, E_i)` with error monitoring.
pub fn photon_yield(channel: &ChannelModel, l: usize, i: usize) -> Result<(f64, Option<f64>)> {
    if l < 2 {
        return Err(Error::InvalidParameter(format!("L = {l} must be at least 2")));
    }
    let eta = channel.transmittance();
    let d = channel.dark_rate;
    let (mut y, mut ey) = (0.0, 0.0);
    for r in 1..l {
        let frac = (l - r) as f64 / l as f64;
        let miss = 1.0 - frac * eta;
        let (windows, no_dark) = window_factor(channel, l, r);
        // i = 0 reduces to the dark-count-only yield
        let lead = if i == 0 { 1.0 } else { miss.powi(i as i32 - 1) } * no_dark;
        let signal = frac * i as f64 * eta;
        let dark_factor = if i == 0 { 1.0 } else { miss };
        y += lead * (signal + dark_factor * 2.0 * windows * d);
        ey += lead * (signal * channel.misalignment + dark_factor * windows * d);
    }
    let delays = (l - 1) as f64;
    y /= delays;
    ey /= delays;
    let e = (y > 0.0).then(|| (ey / y).clamp(0.0, 1.0));
    Ok((y, e))
}

/// Per-photon leakage `I_i` for error-monitored rates: the constrained bound at
/// `E_i` for `i < L - 1`, one bit otherwise.
pub fn monitored_leakage(channel: &ChannelModel, l: usize) -> Result<Vec<f64>> {
    let upper = l.saturating_sub(2);
    (1..=upper)
        .into_par_iter()
        .map(|i| {
            let (_, e) = photon_yield(channel, l, i)?;
            let e = e.unwrap_or(0.5).min(0.5);
            leakage(l, i, BoundMode::Constrained, Some(e))
        })
        .collect()
}

fn monitored_raw(
    channel: &ChannelModel,
    cfg: &ProtocolConfig,
    ge: &GainError,
    per_photon: &[f64],
) -> Result<f64> {
    let Some(e) = ge.error else {
        return Ok(0.0);
    };
    let (weights, residual) = poisson_weights(cfg.l as f64 * cfg.mu, POISSON_TAIL);
    let mut leaked = 0.0;
    for (i, &p) in weights.iter().enumerate().skip(1) {
        let iae = per_photon.get(i - 1).copied().unwrap_or(1.0);
        let (y, _) = photon_yield(channel, cfg.l, i)?;
        leaked += p * y * iae;
    }
    // Tail counted as fully leaked with unit yield.
    leaked += residual;
    let per_packet = ge.gain * (1.0 - cfg.ec_efficiency * h2_checked(e.min(0.5))?) - leaked;
    Ok(per_packet / cfg.l as f64)
}

/// Error-monitored key rate with infinitely many decoy intensities, at fixed
/// `mu`. `per_photon[i - 1]` is the leakage of an `i`-photon packet; missing
/// entries count as one bit.
pub fn key_rate_infinite_decoy(
    channel: &ChannelModel,
    cfg: &ProtocolConfig,
    per_photon: &[f64],
) -> Result<RatePoint> {
    let ge = gain_and_error(channel, cfg)?;
    let raw = monitored_raw(channel, cfg, &ge, per_photon)?;
    Ok(finish(channel, ge, raw, cfg.mu, None))
}

/// [`key_rate_infinite_decoy`] with the proposed constrained leakage and `mu`
/// optimized.
pub fn optimize_infinite_decoy(
    channel: &ChannelModel,
    template: &ProtocolConfig,
) -> Result<RatePoint> {
    let per_photon = monitored_leakage(channel, template.l)?;
    let (mu, _) = maximize_over_mu(MU_RANGE, MU_REL_TOL, |mu| {
        let cfg = template.with_mu(mu);
        let ge = gain_and_error(channel, &cfg)?;
        monitored_raw(channel, &cfg, &ge, &per_photon)
    })?;
    key_rate_infinite_decoy(channel, &template.with_mu(mu), &per_photon)
}

/// BB84 yield and error rate for an `i`-photon pulse (`i = 0` gives the
/// dark-count yield `2d(1 - d)` with error rate 1/2).
pub fn bb84_photon_yield(channel: &ChannelModel, i: usize) -> (f64, f64) {
    let eta = channel.transmittance();
    let d = channel.dark_rate;
    let miss = 1.0 - 0.5 * eta;
    let (lead, dark_factor) = if i == 0 {
        (1.0 - d, 1.0)
    } else {
        (miss.powi(i as i32 - 1) * (1.0 - d), miss)
    };
    let signal = 0.5 * i as f64 * eta;
    let y = lead * (signal + dark_factor * 2.0 * d);
    let ey = lead * (signal * channel.misalignment + dark_factor * d);
    (y, if y > 0.0 { ey / y } else { 0.0 })
}

fn bb84_raw(channel: &ChannelModel, mu: f64) -> Result<(GainError, f64)> {
    let (weights, _) = poisson_weights(2.0 * mu, 1e-16);
    let (mut q, mut eq) = (0.0, 0.0);
    for (i, p) in weights.iter().enumerate() {
        let (y, e) = bb84_photon_yield(channel, i);
        q += p * y;
        eq += p * y * e;
    }
    let ge = GainError {
        gain: q,
        error: (q > 0.0).then(|| (eq / q).clamp(0.0, 1.0)),
    };
    let Some(e) = ge.error else {
        return Ok((ge, 0.0));
    };
    let (y1, e1) = bb84_photon_yield(channel, 1);
    let single = (-2.0 * mu).exp() * 2.0 * mu * y1 * (1.0 - h2_checked(e1.min(0.5))?);
    let raw = (-q * h2_checked(e.min(0.5))? + single) / 2.0;
    Ok((ge, raw))
}

/// Decoy-state BB84 key rate per pulse at fixed `mu`.
pub fn bb84_key_rate(channel: &ChannelModel, mu: f64) -> Result<RatePoint> {
    if !(mu > 0.0) {
        return Err(Error::Domain {
            name: "mu",
            value: mu,
            domain: "(0, inf)",
        });
    }
    let (ge, raw) = bb84_raw(channel, mu)?;
    Ok(finish(channel, ge, raw, mu, None))
}

pub fn optimize_bb84(channel: &ChannelModel) -> Result<RatePoint> {
    let (mu, _) = maximize_over_mu(MU_RANGE, MU_REL_TOL, |mu| Ok(bb84_raw(channel, mu)?.1))?;
    bb84_key_rate(channel, mu)
}

/// Curves that [`sweep`] can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateVariant {
    /// No monitoring, original bound.
    Original,
    /// No monitoring, proposed unconstrained bound.
    Proposed,
    /// Error monitoring with infinite decoys, constrained bound.
    Monitored,
    /// Decoy-state BB84 baseline.
    Bb84,
}

impl RateVariant {
    pub fn name(self) -> &'static str {
        match self {
            RateVariant::Original => "original",
            RateVariant::Proposed => "proposed",
            RateVariant::Monitored => "monitored",
            RateVariant::Bb84 => "bb84",
        }
    }
}

impl std::str::FromStr for RateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(RateVariant::Original),
            "proposed" => Ok(RateVariant::Proposed),
            "monitored" => Ok(RateVariant::Monitored),
            "bb84" => Ok(RateVariant::Bb84),
            other => Err(Error::InvalidParameter(format!(
                "unknown rate variant '{other}'"
            ))),
        }
    }
}

/// One optimized point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub variant: RateVariant,
    pub l: usize,
    pub point: RatePoint,
}

/// Evaluates one variant at one channel, optimizing `mu` (and `nu_th` where it
/// applies).
pub fn rate_for_variant(
    channel: &ChannelModel,
    template: &ProtocolConfig,
    variant: RateVariant,
    table: &LeakageTable,
) -> Result<RatePoint> {
    match variant {
        RateVariant::Original => optimize_no_monitor(channel, template, BoundMode::Original, table),
        RateVariant::Proposed => {
            optimize_no_monitor(channel, template, BoundMode::Unconstrained, table)
        }
        RateVariant::Monitored => optimize_infinite_decoy(channel, template),
        RateVariant::Bb84 => optimize_bb84(channel),
    }
}

/// All `(loss, variant)` combinations, in loss-major grid order.
pub fn sweep(
    channel: &ChannelModel,
    template: &ProtocolConfig,
    losses: &[f64],
    variants: &[RateVariant],
    table: &LeakageTable,
) -> Result<Vec<SweepRow>> {
    if losses.is_empty() {
        return Err(Error::InvalidParameter("empty loss grid".into()));
    }
    let jobs: Vec<(f64, RateVariant)> = losses
        .iter()
        .flat_map(|&loss| variants.iter().map(move |&v| (loss, v)))
        .collect();
    jobs.into_par_iter()
        .map(|(loss, variant)| {
            let ch = channel.with_loss(loss)?;
            Ok(SweepRow {
                variant,
                l: template.l,
                point: rate_for_variant(&ch, template, variant, table)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(l: usize, mu: f64) -> ProtocolConfig {
        ProtocolConfig::new(l, mu, 5, 1.0).unwrap()
    }

    #[test]
    fn counting_rate_examples() {
        let dark_free = ChannelModel::new(0.0, 0.0, 0.0).unwrap();
        // eta mu = 0.1 with the channel at 0 dB
        let q = counting_rate(&dark_free, &cfg(3, 0.1), 2).unwrap();
        assert!((q - (-0.1f64).exp() * 0.1).abs() < 1e-15);
        assert!((q - 0.090_483_7).abs() < 1e-7);

        let opaque = ChannelModel::new(400.0, 0.0, 0.0).unwrap();
        assert!(counting_rate(&opaque, &cfg(3, 0.1), 1).unwrap() < 1e-40);

        let dark = ChannelModel::new(400.0, 1e-6, 0.0).unwrap();
        for r in 1..8 {
            let q = counting_rate(&dark, &cfg(8, 1e-300), r).unwrap();
            let expected = 2.0 * (8 - r) as f64 * 1e-6;
            // first order in d
            assert!((q - expected).abs() < 1e-4 * expected);
        }
    }

    #[test]
    fn counting_rate_rejects_bad_delay() {
        let ch = ChannelModel::new(10.0, 1e-6, 0.01).unwrap();
        assert!(counting_rate(&ch, &cfg(4, 0.1), 0).is_err());
        assert!(counting_rate(&ch, &cfg(4, 0.1), 4).is_err());
    }

    #[test]
    fn error_equals_misalignment_without_dark_counts() {
        for &(loss, e_mis) in &[(3.0, 0.015), (20.0, 0.15), (0.0, 0.3)] {
            let ch = ChannelModel::new(loss, 0.0, e_mis).unwrap();
            let ge = gain_and_error(&ch, &cfg(16, 0.05)).unwrap();
            assert!((ge.error.unwrap() - e_mis).abs() < 1e-15);
        }
        let clean = ChannelModel::new(5.0, 0.0, 0.0).unwrap();
        assert_eq!(gain_and_error(&clean, &cfg(5, 0.2)).unwrap().error, Some(0.0));
    }

    #[test]
    fn no_detection_gives_absent_error_and_zero_rate() {
        let ch = ChannelModel::new(1e4, 0.0, 0.01).unwrap();
        let ge = gain_and_error(&ch, &cfg(4, 0.1)).unwrap();
        assert_eq!(ge.gain, 0.0);
        assert_eq!(ge.error, None);
        let p = key_rate_no_monitor(&ch, &cfg(4, 0.1), 0.3).unwrap();
        assert_eq!(p.key_rate, 0.0);
    }

    #[test]
    fn full_leakage_leaves_no_key() {
        let ch = ChannelModel::new(10.0, 1e-6, 0.015).unwrap();
        let p = key_rate_no_monitor(&ch, &cfg(16, 0.05), 1.0).unwrap();
        assert_eq!(p.key_rate, 0.0);
        assert!(p.clamped);
    }

    #[test]
    fn poisson_tail_matches_complement() {
        for &lambda in &[0.01, 0.5, 2.405, 10.0, 60.0] {
            let (w, residual) = poisson_weights(lambda, 1e-12);
            let total: f64 = w.iter().sum();
            assert!((total + residual - 1.0).abs() < 1e-12, "lambda={lambda}");
            assert!(residual < 1e-12);
            for k in [0usize, 1, 3, 11, 40] {
                let head: f64 = w.iter().take(k).sum();
                let tail = poisson_upper_tail(lambda, k);
                assert!((head + tail - 1.0).abs() < 1e-12, "lambda={lambda} k={k}");
            }
        }
    }

    #[test]
    fn single_photon_yield_collapses() {
        let ch = ChannelModel::new(7.0, 0.0, 0.0).unwrap();
        let eta = ch.transmittance();
        for l in [3usize, 8, 16] {
            let (y, e) = photon_yield(&ch, l, 1).unwrap();
            let expected: f64 =
                (1..l).map(|r| (l - r) as f64 * eta / l as f64).sum::<f64>() / (l - 1) as f64;
            assert!((y - expected).abs() < 1e-15);
            assert_eq!(e, Some(0.0));
        }
    }

    #[test]
    fn photon_mixture_reproduces_gain() {
        // Poisson-averaged per-photon yields equal the packet gain.
        let ch = ChannelModel::new(13.0, 1e-6, 0.015).unwrap();
        let c = cfg(16, 0.07);
        let ge = gain_and_error(&ch, &c).unwrap();
        let (w, _) = poisson_weights(16.0 * 0.07, 1e-16);
        let (mut q, mut eq) = (0.0, 0.0);
        for (i, p) in w.iter().enumerate() {
            let (y, e) = photon_yield(&ch, 16, i).unwrap();
            q += p * y;
            eq += p * y * e.unwrap();
        }
        assert!((q - ge.gain).abs() < 1e-14);
        assert!((eq / q - ge.error.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn bb84_limits() {
        let ch = ChannelModel::new(4.0, 0.0, 0.0).unwrap();
        let (y1, e1) = bb84_photon_yield(&ch, 1);
        assert!((y1 - ch.transmittance() / 2.0).abs() < 1e-15);
        assert_eq!(e1, 0.0);
        let dark = ChannelModel::new(4.0, 1e-6, 0.0).unwrap();
        let (y0, e0) = bb84_photon_yield(&dark, 0);
        assert!((y0 - 2e-6 * (1.0 - 1e-6)).abs() < 1e-20);
        assert_eq!(e0, 0.5);
    }

    #[test]
    fn bb84_dies_at_high_misalignment() {
        for loss in [0.0, 5.0, 20.0, 40.0] {
            let ch = ChannelModel::new(loss, 1e-6, 0.15).unwrap();
            assert_eq!(optimize_bb84(&ch).unwrap().key_rate, 0.0);
        }
    }

    #[test]
    fn bb84_positive_at_low_misalignment() {
        let ch = ChannelModel::new(20.0, 1e-6, 0.015).unwrap();
        assert!(optimize_bb84(&ch).unwrap().key_rate > 0.0);
    }

    #[test]
    fn infinite_decoy_limits() {
        let ch = ChannelModel::new(10.0, 0.0, 0.0).unwrap();
        let c = cfg(8, 0.1);
        // No leakage and no errors: R L = Q.
        let p = key_rate_infinite_decoy(&ch, &c, &vec![0.0; 100]).unwrap();
        let q = gain_and_error(&ch, &c).unwrap().gain;
        // The Poisson remainder is charged in full.
        assert!((p.key_rate * 8.0 - q).abs() < 2e-12);
        let tiny = key_rate_infinite_decoy(&ch, &c.with_mu(1e-12), &vec![0.0; 100]).unwrap();
        assert!(tiny.key_rate < 1e-11);
    }

    #[test]
    fn sweep_edge_cases() {
        let ch = ChannelModel::new(0.0, 1e-6, 0.015).unwrap();
        let table = LeakageTable::new();
        let c = cfg(16, 0.05);
        assert!(sweep(&ch, &c, &[], &[RateVariant::Proposed], &table).is_err());
        assert!(sweep(&ch, &c, &[10.0], &[], &table).unwrap().is_empty());
        let rows = sweep(&ch, &c, &[12.0], &[RateVariant::Proposed], &table).unwrap();
        let direct = rate_for_variant(
            &ch.with_loss(12.0).unwrap(),
            &c,
            RateVariant::Proposed,
            &table,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].point, direct);
    }

    #[test]
    fn model_validation() {
        assert!(ChannelModel::new(-1.0, 0.0, 0.0).is_err());
        assert!(ChannelModel::new(1.0, 1.0, 0.0).is_err());
        assert!(ChannelModel::new(1.0, 0.0, 0.6).is_err());
        assert!(ProtocolConfig::new(1, 0.1, 1, 1.0).is_err());
        assert!(ProtocolConfig::new(4, 0.0, 1, 1.0).is_err());
        assert!(ProtocolConfig::new(4, 0.1, 0, 1.0).is_err());
        assert!(ProtocolConfig::new(4, 0.1, 41, 1.0).is_err());
        assert!(ProtocolConfig::new(4, 0.1, 1, 0.9).is_err());
    }
}
