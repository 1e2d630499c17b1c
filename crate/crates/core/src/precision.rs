//! Floating-point formats, binary16 emulation and the promotion lattice.
//!
//! Every binary16 value is exactly representable as a binary32 and binary64
//! value, so widening is always exact. Narrowing goes through
//! [`round_to_precision`], which rounds to nearest with ties to even.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// One of the three supported IEEE-754 binary formats.
///
/// The derived ordering is the promotion lattice: `Half < Single < Double`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Half,
    Single,
    Double,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Half, Precision::Single, Precision::Double];

    /// Radix of every supported format.
    pub const RADIX: u32 = 2;

    pub const fn bits(self) -> u32 {
        match self {
            Precision::Half => 16,
            Precision::Single => 32,
            Precision::Double => 64,
        }
    }

    pub const fn exponent_bits(self) -> u32 {
        match self {
            Precision::Half => 5,
            Precision::Single => 8,
            Precision::Double => 11,
        }
    }

    /// Stored fraction bits (the leading significand bit is implicit).
    pub const fn significand_bits(self) -> u32 {
        match self {
            Precision::Half => 10,
            Precision::Single => 23,
            Precision::Double => 52,
        }
    }

    /// Significand precision `t`, counting the implicit bit.
    pub const fn digits(self) -> u32 {
        self.significand_bits() + 1
    }

    pub const fn e_max(self) -> i32 {
        match self {
            Precision::Half => 15,
            Precision::Single => 127,
            Precision::Double => 1023,
        }
    }

    pub const fn e_min(self) -> i32 {
        1 - self.e_max()
    }

    /// Half the distance between 1 and the next representable value.
    pub fn unit_roundoff(self) -> f64 {
        0.5f64.powi(self.digits() as i32)
    }

    /// Largest finite value, `(2 - 2^-f) * 2^e_max`.
    pub fn max_finite(self) -> f64 {
        (2.0 - 0.5f64.powi(self.significand_bits() as i32)) * 2.0f64.powi(self.e_max())
    }

    /// Smallest positive normal value, `2^e_min`.
    pub fn min_positive_normal(self) -> f64 {
        2.0f64.powi(self.e_min())
    }

    /// Storage size of one element in bytes.
    pub const fn bytes(self) -> usize {
        (self.bits() / 8) as usize
    }

    /// Precision in which kernels for this storage format do their arithmetic.
    ///
    /// Half data is widened to single and accumulated there.
    pub const fn compute(self) -> Precision {
        match self {
            Precision::Half | Precision::Single => Precision::Single,
            Precision::Double => Precision::Double,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Precision::Half => "half",
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "half" => Ok(Precision::Half),
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            other => Err(Error::InvalidParam(format!(
                "unknown precision '{other}' (expected half, single or double)"
            ))),
        }
    }
}

/// Join of two precisions in the lattice `Half < Single < Double`.
pub fn promote(a: Precision, b: Precision) -> Precision {
    a.max(b)
}

/// Raw IEEE-754 binary16 bit pattern: 1 sign, 5 exponent, 10 fraction bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Half16Bits(pub u16);

impl Half16Bits {
    pub const ZERO: Half16Bits = Half16Bits(0x0000);
    pub const NEG_ZERO: Half16Bits = Half16Bits(0x8000);
    pub const ONE: Half16Bits = Half16Bits(0x3C00);
    pub const MAX: Half16Bits = Half16Bits(0x7BFF);
    pub const INFINITY: Half16Bits = Half16Bits(0x7C00);
    pub const NEG_INFINITY: Half16Bits = Half16Bits(0xFC00);
    /// The single quiet NaN every NaN input encodes to.
    pub const NAN: Half16Bits = Half16Bits(0x7E00);

    pub const fn to_bits(self) -> u16 {
        self.0
    }

    pub const fn is_nan(self) -> bool {
        (self.0 & 0x7C00) == 0x7C00 && (self.0 & 0x03FF) != 0
    }

    pub const fn is_finite(self) -> bool {
        (self.0 & 0x7C00) != 0x7C00
    }

    pub fn to_f64(self) -> f64 {
        decode_f16(self)
    }

    pub fn from_f64(x: f64) -> Self {
        encode_f16(x)
    }
}

/// Encodes a double as the nearest binary16 pattern (ties to even).
///
/// Overflow past the largest finite half gives a signed infinity, values at
/// or below half the smallest subnormal give a signed zero and every NaN maps
/// to [`Half16Bits::NAN`].
pub fn encode_f16(x: f64) -> Half16Bits {
    let bits = x.to_bits();
    let sign = ((bits >> 48) & 0x8000) as u16;
    let biased = ((bits >> 52) & 0x7FF) as i32;
    let fraction = bits & ((1u64 << 52) - 1);

    if biased == 0x7FF {
        return if fraction == 0 {
            Half16Bits(sign | 0x7C00)
        } else {
            Half16Bits::NAN
        };
    }
    // binary64 subnormals are far below 2^-25.
    if biased == 0 {
        return Half16Bits(sign);
    }

    let exp = biased - 1023;
    if exp > 15 {
        return Half16Bits(sign | 0x7C00);
    }
    if exp < -25 {
        return Half16Bits(sign);
    }

    let significand = fraction | (1u64 << 52);
    // Bits dropped to land on the binary16 grid: 42 for normals, more below 2^-14.
    let shift = 42 + (-14 - exp).max(0) as u32;
    let mut q = significand >> shift;
    let rem = significand & ((1u64 << shift) - 1);
    let halfway = 1u64 << (shift - 1);
    if rem > halfway || (rem == halfway && (q & 1) == 1) {
        q += 1;
    }

    if exp < -14 {
        // Subnormal; a carry into bit 10 lands exactly on the smallest normal.
        Half16Bits(sign | q as u16)
    } else {
        // q is in [1024, 2048]; a carry bumps the exponent field, up to infinity.
        let field = (((exp + 15) as u32) << 10) + (q as u32 - 1024);
        Half16Bits(sign | field as u16)
    }
}

/// Exact double value of a binary16 pattern.
pub fn decode_f16(h: Half16Bits) -> f64 {
    let b = h.0;
    let negative = b & 0x8000 != 0;
    let exp = ((b >> 10) & 0x1F) as i32;
    let frac = (b & 0x03FF) as f64;
    let magnitude = match exp {
        0 => frac * 2.0f64.powi(-24),
        31 if frac == 0.0 => f64::INFINITY,
        31 => return f64::NAN,
        _ => (1024.0 + frac) * 2.0f64.powi(exp - 25),
    };
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Rounds `x` to the nearest value representable in `p`.
pub fn round_to_precision(x: f64, p: Precision) -> f64 {
    match p {
        Precision::Half => decode_f16(encode_f16(x)),
        Precision::Single => x as f32 as f64,
        Precision::Double => x,
    }
}
