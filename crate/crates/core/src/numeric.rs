//! Word-length emulation: round-to-nearest-even fixed-point quantization
//! with saturation, plus single-precision rounding.
//!
//! Quality factors are computed in double precision and then projected onto
//! the configured format. This reproduces the representation loss a reduced
//! word length causes without modeling every hardware operator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericError {
    #[error("invalid fixed-point format: total {total} bits, {frac} fraction bits, signed: {signed}")]
    InvalidFormat { total: u32, frac: u32, signed: bool },
    #[error("unknown precision spec '{0}' (expected f64, f32, fixed:WL:F or fixed:WL)")]
    BadSpec(String),
}

/// Word-length / fraction-bit split for fixed-point emulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
    pub signed: bool,
}

impl FixedFormat {
    /// Total bits are capped at 53 so every representable value and bound is
    /// exact in an f64.
    pub fn new(total_bits: u32, frac_bits: u32, signed: bool) -> Result<Self, NumericError> {
        let sign_bits = if signed { 1 } else { 0 };
        let ok = (1..=53).contains(&total_bits)
            && frac_bits >= 1
            && frac_bits + sign_bits <= total_bits;
        if !ok {
            return Err(NumericError::InvalidFormat {
                total: total_bits,
                frac: frac_bits,
                signed,
            });
        }
        Ok(FixedFormat {
            total_bits,
            frac_bits,
            signed,
        })
    }

    pub fn unsigned(total_bits: u32, frac_bits: u32) -> Result<Self, NumericError> {
        Self::new(total_bits, frac_bits, false)
    }

    /// Format for quantities in [0, 1]: one integer bit, the rest fraction.
    pub fn unit_interval(total_bits: u32) -> Result<Self, NumericError> {
        Self::new(total_bits, total_bits.saturating_sub(1).max(1), false)
    }

    /// Format with `int_bits` integer bits for scores that can exceed 1
    /// (e.g. an exploration bonus on top of an empirical mean).
    pub fn with_integer_bits(total_bits: u32, int_bits: u32) -> Result<Self, NumericError> {
        Self::new(total_bits, total_bits.saturating_sub(int_bits).max(1), false)
    }

    fn raw_bounds(&self) -> (f64, f64) {
        if self.signed {
            let hi = 2f64.powi(self.total_bits as i32 - 1);
            (-hi, hi - 1.0)
        } else {
            (0.0, 2f64.powi(self.total_bits as i32) - 1.0)
        }
    }

    /// Round-to-nearest-even onto the 2^-F grid, saturating to the
    /// representable range; returns the dequantized real.
    ///
    /// Infinities saturate. Panics on NaN.
    pub fn quantize(&self, x: f64) -> f64 {
        assert!(!x.is_nan(), "quantize: NaN input");
        let scale = 2f64.powi(self.frac_bits as i32);
        let (lo, hi) = self.raw_bounds();
        let raw = (x * scale).round_ties_even().clamp(lo, hi);
        raw / scale
    }

    /// Round onto the 2^-F grid without range saturation.
    ///
    /// Used for stored accumulators (cumulative reward), whose magnitude in
    /// hardware carries enough integer bits for the horizon; only the
    /// fractional resolution is limited.
    pub fn quantize_resolution(&self, x: f64) -> f64 {
        assert!(!x.is_nan(), "quantize: NaN input");
        let scale = 2f64.powi(self.frac_bits as i32);
        (x * scale).round_ties_even() / scale
    }
}

/// Arithmetic precision a policy's quality factors are carried in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Precision {
    Float64,
    Float32,
    Fixed(FixedFormat),
}

impl Precision {
    pub fn quantize_scalar(&self, x: f64) -> f64 {
        match self {
            Precision::Float64 => x,
            Precision::Float32 => x as f32 as f64,
            Precision::Fixed(fmt) => fmt.quantize(x),
        }
    }

    /// Quantize a quality-factor vector in place. Identity for `Float64`.
    pub fn quantize_vector(&self, values: &mut [f64]) {
        match self {
            Precision::Float64 => {}
            Precision::Float32 => {
                for v in values.iter_mut() {
                    *v = *v as f32 as f64;
                }
            }
            Precision::Fixed(fmt) => {
                for v in values.iter_mut() {
                    *v = fmt.quantize(*v);
                }
            }
        }
    }

    /// Resolution-only quantization for stored accumulators.
    pub fn quantize_accumulator(&self, x: f64) -> f64 {
        match self {
            Precision::Float64 => x,
            Precision::Float32 => x as f32 as f64,
            Precision::Fixed(fmt) => fmt.quantize_resolution(x),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Precision::Float64)
    }
}

/// Precision as requested on the command line. `fixed:WL` leaves the
/// integer/fraction split to the policy family; `fixed:WL:F` pins it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrecisionSpec {
    Float64,
    Float32,
    FixedExplicit { total_bits: u32, frac_bits: u32 },
    FixedAuto { total_bits: u32 },
}

impl PrecisionSpec {
    pub fn parse(text: &str) -> Result<Self, NumericError> {
        let t = text.trim();
        match t {
            "f64" | "float64" | "double" => return Ok(PrecisionSpec::Float64),
            "f32" | "float32" | "single" | "sp-fp" => return Ok(PrecisionSpec::Float32),
            _ => {}
        }
        let parts: Vec<&str> = t.split(':').collect();
        let bad = || NumericError::BadSpec(text.to_string());
        match parts.as_slice() {
            ["fixed", wl] => Ok(PrecisionSpec::FixedAuto {
                total_bits: wl.parse().map_err(|_| bad())?,
            }),
            ["fixed", wl, f] => Ok(PrecisionSpec::FixedExplicit {
                total_bits: wl.parse().map_err(|_| bad())?,
                frac_bits: f.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }

    /// Resolve to a concrete precision; `unit_range` says whether the policy's
    /// scores stay within [0, 1] (Thompson-style) or need integer headroom
    /// (UCB-style bonus, 4 integer bits).
    pub fn resolve(&self, unit_range: bool) -> Result<Precision, NumericError> {
        match *self {
            PrecisionSpec::Float64 => Ok(Precision::Float64),
            PrecisionSpec::Float32 => Ok(Precision::Float32),
            PrecisionSpec::FixedExplicit {
                total_bits,
                frac_bits,
            } => Ok(Precision::Fixed(FixedFormat::unsigned(
                total_bits, frac_bits,
            )?)),
            PrecisionSpec::FixedAuto { total_bits } => {
                let fmt = if unit_range {
                    FixedFormat::unit_interval(total_bits)?
                } else {
                    FixedFormat::with_integer_bits(total_bits, 4)?
                };
                Ok(Precision::Fixed(fmt))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            PrecisionSpec::Float64 => "f64".to_string(),
            PrecisionSpec::Float32 => "f32".to_string(),
            PrecisionSpec::FixedExplicit {
                total_bits,
                frac_bits,
            } => format!("fixed:{total_bits}:{frac_bits}"),
            PrecisionSpec::FixedAuto { total_bits } => format!("fixed:{total_bits}"),
        }
    }
}
