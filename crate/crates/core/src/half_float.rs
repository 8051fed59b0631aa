//! IEEE 754 binary16 conversions used for side information.

use half::f16;

use crate::error::{invalid, Result};

pub const F16_MAX: f64 = 65504.0;

/// Round-to-nearest-even binary16 encoding, big-endian. Finite values beyond
/// the binary16 range saturate to `±65504`.
pub fn encode_f16(value: f64) -> Result<[u8; 2]> {
    Ok(to_f16_nearest(value)?.to_be_bytes())
}

pub fn decode_f16(bytes: [u8; 2]) -> f64 {
    f16::from_be_bytes(bytes).to_f64()
}

fn to_f16_nearest(value: f64) -> Result<f16> {
    if value.is_nan() {
        return Err(invalid("NaN has no binary16 encoding"));
    }
    let h = f16::from_f64(value);
    Ok(if h.is_infinite() { f16::from_f64(value.signum() * F16_MAX) } else { h })
}

/// Nearest binary16 value (ties to even, saturating), as `f64`.
pub fn round_nearest_f16(value: f64) -> Result<f64> {
    Ok(to_f16_nearest(value)?.to_f64())
}

/// Smallest binary16 value `>= value`, for nonnegative finite input within
/// the binary16 range.
pub fn round_up_f16(value: f64) -> Result<f64> {
    if !(value >= 0.0 && value <= F16_MAX) {
        return Err(invalid(format!("{value} cannot be rounded up to a finite binary16")));
    }
    let h = f16::from_f64(value);
    if h.to_f64() >= value {
        return Ok(h.to_f64());
    }
    // Nonnegative binary16 values are ordered like their bit patterns.
    Ok(f16::from_bits(h.to_bits() + 1).to_f64())
}

/// True when `value` is exactly representable in binary16.
pub fn is_f16_exact(value: f64) -> bool {
    !value.is_nan() && f16::from_f64(value).to_f64() == value
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_encodings() {
        assert_eq!(encode_f16(1.0).unwrap(), [0x3C, 0x00]);
        assert_eq!(decode_f16([0x3C, 0x00]), 1.0);
        assert_eq!(encode_f16(0.5).unwrap(), [0x38, 0x00]);
        assert_eq!(decode_f16([0x38, 0x00]), 0.5);
        assert_eq!(encode_f16(-2.0).unwrap(), [0xC0, 0x00]);
    }

    #[test]
    fn saturates_instead_of_overflowing() {
        assert_eq!(decode_f16(encode_f16(65519.9).unwrap()), 65504.0);
        assert_eq!(decode_f16(encode_f16(1e9).unwrap()), 65504.0);
        assert_eq!(decode_f16(encode_f16(-1e9).unwrap()), -65504.0);
        assert!(encode_f16(f64::NAN).is_err());
    }

    #[test]
    fn nearest_rounding_ties_to_even() {
        // 1 + 2^-11 lies halfway between 1 and 1 + 2^-10.
        assert_eq!(round_nearest_f16(1.0 + 2f64.powi(-11)).unwrap(), 1.0);
        assert_eq!(round_nearest_f16(1.0 + 3.0 * 2f64.powi(-11)).unwrap(), 1.0 + 2.0 * 2f64.powi(-10));
    }

    #[test]
    fn round_up_examples() {
        assert_eq!(round_up_f16(0.8).unwrap(), 0.80029296875);
        assert_eq!(round_up_f16(0.5).unwrap(), 0.5);
        assert_eq!(round_up_f16(0.0).unwrap(), 0.0);
        assert_eq!(round_up_f16(0.1).unwrap(), 0.10003662109375);
        assert_eq!(round_up_f16(65504.0).unwrap(), 65504.0);
        assert!(round_up_f16(65505.0).is_err());
        assert!(round_up_f16(-1.0).is_err());
        // Subnormal range.
        assert_eq!(round_up_f16(1e-8).unwrap(), 2f64.powi(-24));
    }

    proptest! {
        #[test]
        fn round_up_is_tight(v in 0.0f64..65504.0) {
            let up = round_up_f16(v).unwrap();
            prop_assert!(up >= v);
            prop_assert!(is_f16_exact(up));
            let below = f16::from_f64(up).to_bits();
            if below > 0 {
                prop_assert!(f16::from_bits(below - 1).to_f64() < v);
            }
        }

        #[test]
        fn exact_values_round_trip(bits in 0u16..0x7C00, neg: bool) {
            let h = f16::from_bits(bits | if neg { 0x8000 } else { 0 });
            let v = h.to_f64();
            prop_assert_eq!(decode_f16(encode_f16(v).unwrap()), v);
        }
    }
}
