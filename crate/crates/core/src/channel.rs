//! Shannon-rate wireless links under flat Rayleigh fading.
//!
//! A packet of `S` bits sent over a link with instantaneous power gain `C`
//! takes `S / (W log2(1 + snr * C))` seconds, where `snr = P d^-l / N²` is the
//! mean received SNR. The gain is exponentially distributed with unit mean
//! (Rayleigh amplitude). Under that law the transmission time has a `1/t`
//! tail and an infinite mean, so links carry a *fade floor* `g`: the gain is
//! drawn from the unit exponential conditioned on `C >= g`, i.e. transmissions
//! are only scheduled when the link is above the outage threshold. With
//! `g = 0` the pure law is recovered and [`expected_tx_time`] reports the
//! divergence.
//!
//! All closed forms work in the dimensionless time `x = t / t0` with
//! `t0 = S ln 2 / W`, which makes them invariant under `S -> kS, W -> kW`.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate, QuadratureError, QuadratureSettings};

/// Default outage threshold on the fading power gain (-20 dB).
pub const DEFAULT_FADE_FLOOR: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter {field} = {value}: {reason}")]
    InvalidParam {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("transmission time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error(
        "expected transmission time did not converge (partial estimate {partial_estimate_s} s, \
         error bound {abs_error_s} s); with a zero fade floor the mean is infinite"
    )]
    NonConvergent {
        partial_estimate_s: f64,
        abs_error_s: f64,
    },
    #[error("quadrature failed: {0}")]
    Quadrature(QuadratureError),
}

/// Physical-layer description of one wireless link, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    /// Total noise power over the band.
    pub noise_power_w: f64,
    pub distance_m: f64,
    pub path_loss_exp: f64,
    /// Outage threshold on the power gain; gains below it are never used.
    pub fade_floor: f64,
}

fn positive(field: &'static str, value: f64) -> Result<(), ChannelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ChannelError::InvalidParam {
            field,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}

impl ChannelParams {
    pub fn new(
        bandwidth_hz: f64,
        tx_power_w: f64,
        noise_power_w: f64,
        distance_m: f64,
        path_loss_exp: f64,
    ) -> Result<Self, ChannelError> {
        let ch = Self {
            bandwidth_hz,
            tx_power_w,
            noise_power_w,
            distance_m,
            path_loss_exp,
            fade_floor: DEFAULT_FADE_FLOOR,
        };
        ch.validate()?;
        Ok(ch)
    }

    /// A unit-distance link with the given bandwidth and mean SNR.
    pub fn with_mean_snr(bandwidth_hz: f64, mean_snr: f64) -> Result<Self, ChannelError> {
        Self::new(bandwidth_hz, mean_snr, 1.0, 1.0, 1.0)
    }

    pub fn with_fade_floor(mut self, floor: f64) -> Result<Self, ChannelError> {
        self.fade_floor = floor;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tx_power(mut self, watts: f64) -> Result<Self, ChannelError> {
        self.tx_power_w = watts;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("tx_power_w", self.tx_power_w)?;
        positive("noise_power_w", self.noise_power_w)?;
        positive("distance_m", self.distance_m)?;
        positive("path_loss_exp", self.path_loss_exp)?;
        if self.path_loss_exp < 1.0 {
            return Err(ChannelError::InvalidParam {
                field: "path_loss_exp",
                value: self.path_loss_exp,
                reason: "must be at least 1",
            });
        }
        if !(self.fade_floor.is_finite() && self.fade_floor >= 0.0) {
            return Err(ChannelError::InvalidParam {
                field: "fade_floor",
                value: self.fade_floor,
                reason: "must be finite and non-negative",
            });
        }
        let snr = self.mean_snr();
        if !(snr.is_finite() && snr > 0.0) {
            return Err(ChannelError::InvalidParam {
                field: "mean_snr",
                value: snr,
                reason: "must be finite and strictly positive",
            });
        }
        Ok(())
    }

    pub fn mean_snr(&self) -> f64 {
        self.tx_power_w * self.distance_m.powf(-self.path_loss_exp) / self.noise_power_w
    }

    /// Rate averaged over the fading law (ergodic capacity), by quadrature.
    pub fn ergodic_rate(&self, quad: &QuadratureSettings) -> Result<f64, ChannelError> {
        let g = self.fade_floor;
        let snr = self.mean_snr();
        // ∫_g^∞ log2(1 + snr c) e^{-(c-g)} dc with c = g + (1-u)/u
        let f = |u: f64| {
            let c = g + (1.0 - u) / u;
            (snr * c).ln_1p() / LN_2 * (-(c - g)).exp() / (u * u)
        };
        let est = integrate(f, 0.0, 1.0, quad).map_err(ChannelError::Quadrature)?;
        Ok(self.bandwidth_hz * est.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    pub size_bits: f64,
}

impl PacketSpec {
    pub fn new(size_bits: f64) -> Result<Self, ChannelError> {
        positive("size_bits", size_bits)?;
        Ok(Self { size_bits })
    }
}

pub fn shannon_rate(ch: &ChannelParams, gain: f64) -> f64 {
    ch.bandwidth_hz * (ch.mean_snr() * gain).ln_1p() / LN_2
}

/// Time unit `S ln 2 / W` of the dimensionless transmission time.
pub fn time_scale(ch: &ChannelParams, pkt: &PacketSpec) -> f64 {
    pkt.size_bits * LN_2 / ch.bandwidth_hz
}

pub fn tx_time_for_gain(ch: &ChannelParams, pkt: &PacketSpec, gain: f64) -> f64 {
    pkt.size_bits / shannon_rate(ch, gain)
}

/// Draws a power gain from the unit exponential restricted to `[floor, ∞)`.
pub fn sample_gain<R: Rng + ?Sized>(ch: &ChannelParams, rng: &mut R) -> f64 {
    loop {
        // Memorylessness: conditioning on C >= g is a shift by g.
        let draw: f64 = Exp1.sample(rng);
        let c = ch.fade_floor + draw;
        if c > 0.0 {
            return c;
        }
    }
}

pub fn sample_tx_time<R: Rng + ?Sized>(ch: &ChannelParams, pkt: &PacketSpec, rng: &mut R) -> f64 {
    tx_time_for_gain(ch, pkt, sample_gain(ch, rng))
}

/// Largest attainable transmission time, reached at the fade floor.
pub fn max_tx_time(ch: &ChannelParams, pkt: &PacketSpec) -> f64 {
    if ch.fade_floor == 0.0 {
        f64::INFINITY
    } else {
        tx_time_for_gain(ch, pkt, ch.fade_floor)
    }
}

// log of the unconditioned CDF at dimensionless time x: (1 - e^{1/x}) / snr
fn log_cdf_unfloored(x: f64, snr: f64) -> f64 {
    -(1.0 / x).exp_m1() / snr
}

fn cdf_dimensionless(x: f64, snr: f64, floor: f64) -> f64 {
    let log_f = floor + log_cdf_unfloored(x, snr);
    if log_f >= 0.0 {
        1.0
    } else {
        log_f.exp()
    }
}

fn pdf_dimensionless(x: f64, snr: f64, floor: f64, x_max: f64) -> f64 {
    if x <= 0.0 || x >= x_max {
        return 0.0;
    }
    let inv = 1.0 / x;
    let exponent = floor + inv + log_cdf_unfloored(x, snr);
    if exponent == f64::NEG_INFINITY {
        return 0.0;
    }
    exponent.exp() / (snr * x * x)
}

fn x_max(ch: &ChannelParams) -> f64 {
    if ch.fade_floor == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (ch.mean_snr() * ch.fade_floor).ln_1p()
    }
}

/// `P(T <= t)`; for a zero fade floor this is `exp((1 - e^{t0/t}) / snr)`.
pub fn tx_time_cdf(ch: &ChannelParams, pkt: &PacketSpec, t: f64) -> Result<f64, ChannelError> {
    if !(t > 0.0) {
        return Err(ChannelError::NonPositiveTime(t));
    }
    let x = t / time_scale(ch, pkt);
    Ok(cdf_dimensionless(x, ch.mean_snr(), ch.fade_floor))
}

pub fn tx_time_pdf(ch: &ChannelParams, pkt: &PacketSpec, t: f64) -> Result<f64, ChannelError> {
    if !(t > 0.0) {
        return Err(ChannelError::NonPositiveTime(t));
    }
    let scale = time_scale(ch, pkt);
    let x = t / scale;
    Ok(pdf_dimensionless(x, ch.mean_snr(), ch.fade_floor, x_max(ch)) / scale)
}

fn tx_time_moment(
    ch: &ChannelParams,
    pkt: &PacketSpec,
    power: i32,
    quad: &QuadratureSettings,
) -> Result<f64, ChannelError> {
    let snr = ch.mean_snr();
    let floor = ch.fade_floor;
    let upper = x_max(ch);
    let scale = time_scale(ch, pkt);
    // u = 1/(1+x) maps (0, x_max) onto (u_min, 1)
    let u_min = if upper.is_finite() { 1.0 / (1.0 + upper) } else { 0.0 };
    let integrand = |u: f64| {
        let x = (1.0 - u) / u;
        x.powi(power) * pdf_dimensionless(x, snr, floor, upper) / (u * u)
    };
    match integrate(integrand, u_min, 1.0, quad) {
        Ok(est) => Ok(est.value * scale.powi(power)),
        Err(QuadratureError::NotConverged {
            estimate,
            abs_error,
            ..
        }) => Err(ChannelError::NonConvergent {
            partial_estimate_s: estimate * scale.powi(power),
            abs_error_s: abs_error * scale.powi(power),
        }),
        Err(other) => Err(ChannelError::Quadrature(other)),
    }
}

/// `E[T] = ∫ t f(t) dt`, evaluated by adaptive quadrature on `u = 1/(1 + t/t0)`.
pub fn expected_tx_time(
    ch: &ChannelParams,
    pkt: &PacketSpec,
    quad: &QuadratureSettings,
) -> Result<f64, ChannelError> {
    tx_time_moment(ch, pkt, 1, quad)
}

/// `E[T²]`, used by the exact single-server reference formulas.
pub fn tx_time_second_moment(
    ch: &ChannelParams,
    pkt: &PacketSpec,
    quad: &QuadratureSettings,
) -> Result<f64, ChannelError> {
    tx_time_moment(ch, pkt, 2, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn unit_link() -> ChannelParams {
        ChannelParams::with_mean_snr(1.0, 1.0).unwrap()
    }

    #[test]
    fn shannon_rate_examples() {
        let ch = ChannelParams::with_mean_snr(100e3, 1.0).unwrap();
        assert!((shannon_rate(&ch, 1.0) - 100e3).abs() < 1e-9);
        let ch = ChannelParams::with_mean_snr(100e3, 3.0).unwrap();
        assert!((shannon_rate(&ch, 1.0) - 200e3).abs() < 1e-9);
        assert_eq!(shannon_rate(&ch, 0.0), 0.0);
    }

    #[test]
    fn table_rates_by_direct_evaluation() {
        // 100 kHz, -174 dBm/Hz over the band, 1 W, 3 km, exponent 3
        let noise = crate::units::dbm_to_watts(-174.0) * 100e3;
        let ch = ChannelParams::new(100e3, 1.0, noise, 3000.0, 3.0).unwrap();
        let snr = 3000f64.powi(-3) / noise;
        let expected = 100e3 * (1.0 + snr).log2();
        assert!((shannon_rate(&ch, 1.0) - expected).abs() < 1e-6);
        assert!((ch.mean_snr() - 93_032.830_796_650_8).abs() / 93_032.8 < 1e-12);
    }

    #[test]
    fn fixed_gain_unit_time() {
        let ch = unit_link();
        let pkt = PacketSpec::new(1.0).unwrap();
        assert!((tx_time_for_gain(&ch, &pkt, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let ch = unit_link();
        let pkt = PacketSpec::new(10.0).unwrap();
        let a = sample_tx_time(&ch, &pkt, &mut seed::rng(3));
        let b = sample_tx_time(&ch, &pkt, &mut seed::rng(3));
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a > 0.0 && a.is_finite());
    }

    #[test]
    fn samples_respect_fade_floor() {
        let ch = unit_link();
        let pkt = PacketSpec::new(1.0).unwrap();
        let bound = max_tx_time(&ch, &pkt);
        let mut rng = seed::rng(9);
        for _ in 0..10_000 {
            let t = sample_tx_time(&ch, &pkt, &mut rng);
            assert!(t <= bound);
        }
    }

    #[test]
    fn cdf_limits_and_domain() {
        let ch = unit_link().with_fade_floor(0.0).unwrap();
        let pkt = PacketSpec::new(1.0).unwrap();
        assert!(tx_time_cdf(&ch, &pkt, 1e-3).unwrap() == 0.0);
        let far = tx_time_cdf(&ch, &pkt, 1e9).unwrap();
        assert!(far < 1.0 && far > 1.0 - 1e-8);
        assert!(tx_time_cdf(&ch, &pkt, 0.0).is_err());
        assert!(tx_time_pdf(&ch, &pkt, -1.0).is_err());
    }

    #[test]
    fn pure_law_cdf_matches_closed_form() {
        let ch = ChannelParams::with_mean_snr(2.0, 5.0)
            .unwrap()
            .with_fade_floor(0.0)
            .unwrap();
        let pkt = PacketSpec::new(3.0).unwrap();
        for &t in &[0.5, 1.0, 2.0, 7.5] {
            let s = 3.0 * LN_2 / 2.0;
            let expected = ((1.0 - (s / t).exp()) / 5.0).exp();
            assert!((tx_time_cdf(&ch, &pkt, t).unwrap() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_floor_mean_diverges() {
        let ch = unit_link().with_fade_floor(0.0).unwrap();
        let pkt = PacketSpec::new(1.0).unwrap();
        let err = expected_tx_time(&ch, &pkt, &QuadratureSettings::default()).unwrap_err();
        assert!(matches!(err, ChannelError::NonConvergent { .. }));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ChannelParams::new(0.0, 1.0, 1.0, 1.0, 2.0).is_err());
        assert!(ChannelParams::new(1.0, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(unit_link().with_fade_floor(-1.0).is_err());
        assert!(PacketSpec::new(0.0).is_err());
    }

    #[test]
    fn ergodic_rate_is_below_rate_at_mean_gain() {
        let ch = ChannelParams::with_mean_snr(1e5, 100.0).unwrap();
        let r = ch.ergodic_rate(&QuadratureSettings::default()).unwrap();
        // Jensen: E[log(1 + snr C)] < log(1 + snr E[C]) with E[C] = 1 + floor
        assert!(r < shannon_rate(&ch, 1.0 + ch.fade_floor));
        assert!(r > 0.5 * shannon_rate(&ch, 1.0));
    }
}
