//! Three-intensity (signal, decoy, vacuum) estimation of the single-photon
//! yield and error rate, and the key rates of a finished experiment.
//!
//! Intensities are given per pulse; every exponent and product works on the
//! per-packet mean `L * intensity`.

use crate::bound::{leakage, original_bound, BoundMode};
use crate::entropy::h2_checked;
use crate::error::{Error, Result};
use crate::rates::poisson_upper_tail;

/// Mean photon numbers per pulse of the three intensity classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyIntensities {
    pub mu_signal: f64,
    pub mu_decoy: f64,
    pub mu_vacuum: f64,
    pub l: usize,
}

impl DecoyIntensities {
    pub fn new(mu_signal: f64, mu_decoy: f64, mu_vacuum: f64, l: usize) -> Result<Self> {
        if !(mu_signal > mu_decoy && mu_decoy > mu_vacuum && mu_vacuum >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "intensities must satisfy signal > decoy > vacuum >= 0, got {mu_signal}, {mu_decoy}, {mu_vacuum}"
            )));
        }
        if l < 2 {
            return Err(Error::InvalidParameter(format!("L = {l} must be at least 2")));
        }
        Ok(DecoyIntensities {
            mu_signal,
            mu_decoy,
            mu_vacuum,
            l,
        })
    }

    fn per_packet(&self) -> (f64, f64, f64) {
        let l = self.l as f64;
        (l * self.mu_signal, l * self.mu_decoy, l * self.mu_vacuum)
    }
}

/// Measured per-packet yields and bit error rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyObservations {
    pub q_signal: f64,
    pub e_signal: f64,
    pub q_decoy: f64,
    pub e_decoy: f64,
    pub q_vacuum: f64,
}

impl DecoyObservations {
    pub fn new(q_signal: f64, e_signal: f64, q_decoy: f64, e_decoy: f64, q_vacuum: f64) -> Result<Self> {
        for (name, v) in [
            ("Qs", q_signal),
            ("Es", e_signal),
            ("Qd", q_decoy),
            ("Ed", e_decoy),
            ("Qv", q_vacuum),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    domain: "[0, 1]",
                });
            }
        }
        Ok(DecoyObservations {
            q_signal,
            e_signal,
            q_decoy,
            e_decoy,
            q_vacuum,
        })
    }

    /// The vacuum class outdetecting the signal class points at bad data.
    pub fn is_suspicious(&self) -> bool {
        self.q_signal < self.q_vacuum
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyEstimates {
    /// Vacuum yield, clamped at zero.
    pub y0: f64,
    /// Lower estimate of the single-photon yield.
    pub y1: f64,
    /// Upper estimate of the single-photon error rate, clipped to `[0, 1/2]`.
    pub e1: f64,
    /// Set when `e1` had to be clipped.
    pub e1_clipped: bool,
}

/// Vacuum-plus-weak-decoy estimates of `Y0`, `Y1` and `E1`.
pub fn estimate_single_photon(
    intens: &DecoyIntensities,
    obs: &DecoyObservations,
) -> Result<DecoyEstimates> {
    let (s, d, v) = intens.per_packet();
    if !(d - v > 0.0) || !(s - d > 0.0) {
        return Err(Error::Estimation("degenerate intensity differences".into()));
    }
    let y0 = ((d * obs.q_vacuum * v.exp() - v * obs.q_decoy * d.exp()) / (d - v)).max(0.0);
    let denom = s * d - s * v - d * d + v * v;
    if denom == 0.0 {
        return Err(Error::Estimation("singular intensity combination".into()));
    }
    let y1 = s / denom
        * (obs.q_decoy * d.exp()
            - obs.q_vacuum * v.exp()
            - (d * d - v * v) / (s * s) * (obs.q_signal * s.exp() - y0));
    if !(y1 > 0.0) {
        return Err(Error::Estimation(format!(
            "single-photon yield estimate {y1:e} is not positive"
        )));
    }
    let e1_raw = (obs.e_signal * obs.q_signal * s.exp() - obs.e_decoy * obs.q_decoy * d.exp())
        / ((s - d) * y1);
    let e1 = e1_raw.clamp(0.0, 0.5);
    Ok(DecoyEstimates {
        y0,
        y1,
        e1,
        e1_clipped: e1 != e1_raw,
    })
}

/// Which leakage bound an experimental key rate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentRate {
    /// Bound without the error constraint.
    WithoutErrorRate,
    /// Bound constrained by the estimated single-photon error rate.
    WithErrorRate,
}

/// Single-photon key rate per pulse, `(s e^{-s} Y1 (1 - I) - f Qs h2(Es)) / L`
/// with `s` the per-packet signal mean. `None` when the rate is not positive.
pub fn experimental_key_rate(
    intens: &DecoyIntensities,
    obs: &DecoyObservations,
    est: &DecoyEstimates,
    which: ExperimentRate,
    ec_efficiency: f64,
) -> Result<Option<f64>> {
    if !(est.y1 > 0.0) {
        return Ok(None);
    }
    let iae = match which {
        ExperimentRate::WithoutErrorRate => leakage(intens.l, 1, BoundMode::Unconstrained, None)?,
        ExperimentRate::WithErrorRate => {
            leakage(intens.l, 1, BoundMode::Constrained, Some(est.e1))?
        }
    };
    let (s, _, _) = intens.per_packet();
    let single = s * (-s).exp() * est.y1 * (1.0 - iae);
    let cost = ec_efficiency * obs.q_signal * h2_checked(obs.e_signal.min(0.5))?;
    let r = (single - cost) / intens.l as f64;
    Ok((r > 0.0).then_some(r))
}

/// Estimates plus both key rates for one observation row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyAnalysis {
    pub estimates: DecoyEstimates,
    pub rate_without_error: Option<f64>,
    pub rate_with_error: Option<f64>,
}

pub fn analyze(
    intens: &DecoyIntensities,
    obs: &DecoyObservations,
    ec_efficiency: f64,
) -> Result<DecoyAnalysis> {
    let estimates = estimate_single_photon(intens, obs)?;
    Ok(DecoyAnalysis {
        estimates,
        rate_without_error: experimental_key_rate(
            intens,
            obs,
            &estimates,
            ExperimentRate::WithoutErrorRate,
            ec_efficiency,
        )?,
        rate_with_error: experimental_key_rate(
            intens,
            obs,
            &estimates,
            ExperimentRate::WithErrorRate,
            ec_efficiency,
        )?,
    })
}

/// Published observations of the 65-pulse experiment used by
/// [`recompute_l65`].
pub mod l65 {
    pub const L: usize = 65;
    pub const MU_SIGNAL: f64 = 0.037;
    pub const GAIN: f64 = 8.435e-4;
    pub const ERROR: f64 = 0.058;
    pub const NU_TH: usize = 10;
    pub const EC_EFFICIENCY: f64 = 1.1;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L65Recalculation {
    /// Rate with the original bound `h2(nu_th / (L - 1))`.
    pub rate_original: f64,
    /// Rate with the unconstrained bound.
    pub rate_proposed: f64,
    /// Unconstrained bound for a `nu_th`-photon packet.
    pub iae_tagged: f64,
    /// Probability of more than `nu_th` photons per packet.
    pub e_src: f64,
}

/// Re-evaluates the 65-pulse, 95 km experiment under both bounds.
pub fn recompute_l65() -> Result<L65Recalculation> {
    use l65::*;
    let lambda = L as f64 * MU_SIGNAL;
    let e_src = poisson_upper_tail(lambda, NU_TH + 1);
    let base = GAIN * (1.0 - EC_EFFICIENCY * h2_checked(ERROR)?) - e_src;
    let rate = |iae: f64| (base - (GAIN - e_src) * iae) / L as f64;
    let iae_original = original_bound(L, NU_TH)?;
    let iae_tagged = leakage(L, NU_TH, BoundMode::Unconstrained, None)?;
    Ok(L65Recalculation {
        rate_original: rate(iae_original),
        rate_proposed: rate(iae_tagged),
        iae_tagged,
        e_src,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2_intensities() -> DecoyIntensities {
        DecoyIntensities::new(0.13, 0.03, 0.0003, 3).unwrap()
    }

    // (Qs, Es, Qd, Ed, Qv, R1, R2) as published, 50 / 100 / 140 km.
    const TABLE: [(f64, f64, f64, f64, f64, Option<f64>, f64); 3] = [
        (3.24e-3, 0.0176, 7.52e-4, 0.0195, 1.12e-5, Some(8.14e-5), 3.60e-4),
        (3.28e-4, 0.0226, 7.86e-5, 0.0401, 4.50e-6, Some(4.98e-6), 3.15e-5),
        (5.52e-5, 0.0499, 1.56e-5, 0.1331, 3.87e-6, None, 1.45e-6),
    ];

    #[test]
    fn published_rows_reproduce() {
        for (qs, es, qd, ed, qv, r1, r2) in TABLE {
            let obs = DecoyObservations::new(qs, es, qd, ed, qv).unwrap();
            let a = analyze(&table2_intensities(), &obs, 1.0).unwrap();
            match (r1, a.rate_without_error) {
                (Some(want), Some(got)) => assert!((got / want - 1.0).abs() < 0.01, "{got}"),
                (None, None) => {}
                other => panic!("R1 mismatch {other:?}"),
            }
            let got = a.rate_with_error.unwrap();
            assert!((got / r2 - 1.0).abs() < 0.01, "{got} vs {r2}");
            assert!(got >= a.rate_without_error.unwrap_or(0.0));
            assert!(!a.estimates.e1_clipped);
        }
    }

    #[test]
    fn vacuum_yield_clamps_at_zero() {
        // A vacuum class much dimmer than the decoy drives Y0 negative.
        let obs = DecoyObservations::new(3e-3, 0.02, 8e-4, 0.02, 1e-9).unwrap();
        let est = estimate_single_photon(&table2_intensities(), &obs).unwrap();
        assert_eq!(est.y0, 0.0);
    }

    #[test]
    fn nonpositive_single_photon_yield_is_an_error() {
        let obs = DecoyObservations::new(3e-3, 0.02, 1e-5, 0.02, 1e-5).unwrap();
        assert!(matches!(
            estimate_single_photon(&table2_intensities(), &obs),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn zero_single_photon_yield_gives_no_rate() {
        let obs = DecoyObservations::new(3e-3, 0.02, 8e-4, 0.02, 1e-5).unwrap();
        let est = DecoyEstimates {
            y0: 0.0,
            y1: 0.0,
            e1: 0.0,
            e1_clipped: false,
        };
        let r = experimental_key_rate(
            &table2_intensities(),
            &obs,
            &est,
            ExperimentRate::WithErrorRate,
            1.0,
        )
        .unwrap();
        assert_eq!(r, None);
    }

    #[test]
    fn linear_in_observed_yields() {
        let (qs, es, qd, ed, qv, _, _) = TABLE[0];
        let obs = DecoyObservations::new(qs, es, qd, ed, qv).unwrap();
        let base = estimate_single_photon(&table2_intensities(), &obs).unwrap();
        for c in [0.1, 0.5, 3.0] {
            let scaled = DecoyObservations::new(
                obs.q_signal * c,
                obs.e_signal,
                obs.q_decoy * c,
                obs.e_decoy,
                obs.q_vacuum * c,
            )
            .unwrap();
            let est = estimate_single_photon(&table2_intensities(), &scaled).unwrap();
            assert!((est.y0 - c * base.y0).abs() < 1e-12 * base.y0.max(1e-12));
            assert!((est.y1 / (c * base.y1) - 1.0).abs() < 1e-12);
            assert!((est.e1 - base.e1).abs() < 1e-12);
        }
    }

    #[test]
    fn intensity_validation() {
        assert!(DecoyIntensities::new(0.03, 0.13, 0.0, 3).is_err());
        assert!(DecoyIntensities::new(0.13, 0.03, 0.03, 3).is_err());
        assert!(DecoyIntensities::new(0.13, 0.03, 0.0, 1).is_err());
        assert!(DecoyObservations::new(1.2, 0.0, 0.0, 0.0, 0.0).is_err());
        let odd = DecoyObservations::new(1e-6, 0.0, 0.0, 0.0, 1e-5).unwrap();
        assert!(odd.is_suspicious());
    }

    #[test]
    fn sixty_five_pulse_recalculation() {
        let r = recompute_l65().unwrap();
        assert!((r.iae_tagged - 0.513).abs() < 0.002);
        assert!((r.rate_proposed / 1.44e-6 - 1.0).abs() < 0.02, "{}", r.rate_proposed);
        assert!((r.rate_original / 5e-8 - 1.0).abs() < 0.2, "{}", r.rate_original);
    }
    #[test]
    fn estimates_bracket_the_forward_model() {
        use crate::rates::{gain_and_error, photon_yield, ChannelModel, ProtocolConfig};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let l = rng.random_range(3..12);
            let ch = ChannelModel::new(
                rng.random_range(5.0..35.0),
                10f64.powf(rng.random_range(-7.0..-5.0)),
                rng.random_range(0.005..0.05),
            )
            .unwrap();
            let (s, d, v) = (0.1, 0.02, 0.0002);
            let measure = |mu: f64| {
                let cfg = ProtocolConfig::new(l, mu, 1, 1.0).unwrap();
                gain_and_error(&ch, &cfg).unwrap()
            };
            let (gs, gd, gv) = (measure(s), measure(d), measure(v));
            let obs = DecoyObservations::new(
                gs.gain,
                gs.error.unwrap(),
                gd.gain,
                gd.error.unwrap(),
                gv.gain,
            )
            .unwrap();
            let intens = DecoyIntensities::new(s, d, v, l).unwrap();
            let est = estimate_single_photon(&intens, &obs).unwrap();
            let (y1, e1) = photon_yield(&ch, l, 1).unwrap();
            let e1 = e1.unwrap();
            assert!(est.y1 <= y1 * (1.0 + 1e-9), "Y1 {} > {}", est.y1, y1);
            assert!(est.y1 >= 0.8 * y1, "Y1 {} << {}", est.y1, y1);
            assert!(est.e1 >= e1 - 1e-9, "E1 {} < {}", est.e1, e1);
        }
    }
}
