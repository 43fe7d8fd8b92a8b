//! Globally adaptive 7/15-point Gauss-Kronrod integration.
#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kronrod abscissae on [-1, 1], outermost first; the last entry is the centre.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the odd-indexed Kronrod nodes and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of bisections applied to any initial panel.
    pub max_depth: u32,
    pub initial_panels: usize,
    pub max_intervals: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_depth: 20,
            initial_panels: 16,
            max_intervals: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error(
        "integral did not converge: partial estimate {estimate} with error bound {abs_error} \
         after {evaluations} evaluations"
    )]
    NotConverged {
        estimate: f64,
        abs_error: f64,
        evaluations: usize,
    },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("invalid integration interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("invalid quadrature settings: {0}")]
    InvalidSettings(&'static str),
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn rescale_error(raw: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = raw.abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadratureError::NonFinite { x })
        }
    };

    let fc = eval(center)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut res_abs = kronrod.abs();
    let mut values = [(0.0, 0.0); 7];
    for (i, slot) in values.iter_mut().enumerate() {
        let dx = half * XGK[i];
        let (lo, hi) = (eval(center - dx)?, eval(center + dx)?);
        *slot = (lo, hi);
        kronrod += WGK[i] * (lo + hi);
        res_abs += WGK[i] * (lo.abs() + hi.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (lo + hi);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for (i, (lo, hi)) in values.iter().enumerate() {
        res_asc += WGK[i] * ((lo - mean).abs() + (hi - mean).abs());
    }
    let scale = half.abs();
    let err = rescale_error((kronrod - gauss) * half, res_abs * scale, res_asc * scale);
    Ok((kronrod * half, err))
}

/// Integrates `f` over the finite interval `[a, b]`.
///
/// Succeeds once the summed error estimate is below
/// `max(abs_tol, rel_tol * |value|)`. Fails with the partial estimate when the
/// worst segment cannot be bisected further.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    settings: &QuadratureSettings,
) -> Result<Estimate, QuadratureError> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(QuadratureError::InvalidInterval { a, b });
    }
    if settings.initial_panels == 0 {
        return Err(QuadratureError::InvalidSettings("initial_panels must be positive"));
    }
    if !(settings.abs_tol >= 0.0 && settings.rel_tol >= 0.0)
        || settings.abs_tol + settings.rel_tol <= 0.0
    {
        return Err(QuadratureError::InvalidSettings("tolerances must be positive"));
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }

    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let width = (b - a) / settings.initial_panels as f64;
    for i in 0..settings.initial_panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == settings.initial_panels { b } else { lo + width };
        let (value, error) = kronrod15(&f, lo, hi)?;
        evaluations += 15;
        heap.push(Segment {
            a: lo,
            b: hi,
            value,
            error,
            depth: 0,
        });
    }

    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= settings.abs_tol.max(settings.rel_tol * value.abs()) {
            return Ok(Estimate {
                value,
                abs_error: error,
                evaluations,
            });
        }
        let worst = heap.pop().expect("segment heap never empties");
        if worst.depth >= settings.max_depth || heap.len() + 2 > settings.max_intervals {
            return Err(QuadratureError::NotConverged {
                estimate: value,
                abs_error: error,
                evaluations,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (v, e) = kronrod15(&f, lo, hi)?;
            evaluations += 15;
            heap.push(Segment {
                a: lo,
                b: hi,
                value: v,
                error: e,
                depth: worst.depth + 1,
            });
        }
    }
}
