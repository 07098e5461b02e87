//! Signed fixed-point encoding of opinions into the Paillier plaintext space.
//!
//! Non-negative values map to `round(scale * x)`; negative values wrap to
//! `n - round(scale * |x|)`, so that homomorphic sums of mixed-sign opinions
//! stay meaningful as long as the total magnitude is below `n / 2`.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::PaillierError;

/// Two decimal places.
pub const DEFAULT_SCALE: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedFixedPoint {
    #[serde(with = "super::hex_biguint")]
    pub raw: BigUint,
    pub scale: u64,
}

impl SignedFixedPoint {
    pub fn encode(x: f64, scale: u64, n: &BigUint) -> Result<Self, PaillierError> {
        encode_signed(x, scale, n).map(|raw| SignedFixedPoint { raw, scale })
    }

    pub fn decode(&self, n: &BigUint) -> f64 {
        decode_signed(&self.raw, self.scale, n)
    }
}

pub fn encode_signed(x: f64, scale: u64, n: &BigUint) -> Result<BigUint, PaillierError> {
    let overflow = PaillierError::EncodingOverflow { value: x, scale };
    if scale == 0 || !x.is_finite() {
        return Err(overflow);
    }
    let magnitude = (x.abs() * scale as f64).round();
    if magnitude >= 2f64.powi(63) {
        return Err(overflow);
    }
    let magnitude = BigUint::from(magnitude as u64);
    if &magnitude * 2u32 >= *n {
        return Err(overflow);
    }
    if x < 0.0 && magnitude.bits() > 0 {
        Ok(n - magnitude)
    } else {
        Ok(magnitude)
    }
}

pub fn decode_signed(raw: &BigUint, scale: u64, n: &BigUint) -> f64 {
    let half = n / 2u32;
    let (negative, magnitude) = if raw > &half {
        (true, n - raw)
    } else {
        (false, raw.clone())
    };
    let value = magnitude.to_f64().unwrap_or(f64::INFINITY) / scale as f64;
    if negative {
        -value
    } else {
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n() -> BigUint {
        BigUint::from(1_000_003u64)
    }

    #[test]
    fn quoted_conversions() {
        assert_eq!(encode_signed(0.58, 100, &n()).unwrap(), BigUint::from(58u32));
        assert_eq!(decode_signed(&BigUint::from(52u32), 100, &n()), 0.52);
        assert_eq!(encode_signed(0.0, 100, &n()).unwrap(), BigUint::from(0u32));
        assert_eq!(encode_signed(-0.0, 7, &n()).unwrap(), BigUint::from(0u32));
        assert_eq!(decode_signed(&BigUint::from(0u32), 100, &n()), 0.0);
    }

    #[test]
    fn negative_values_wrap() {
        let raw = encode_signed(-0.25, 100, &n()).unwrap();
        assert_eq!(raw, n() - BigUint::from(25u32));
        assert_eq!(decode_signed(&raw, 100, &n()), -0.25);
    }

    #[test]
    fn grid_round_trip() {
        // Oracle: the grid point k/100 is exactly what decode must return.
        for k in -100i64..=100 {
            let x = k as f64 / 100.0;
            let raw = encode_signed(x, 100, &n()).unwrap();
            assert_eq!(decode_signed(&raw, 100, &n()), x, "k = {k}");
        }
    }

    #[test]
    fn grid_round_trip_on_toy_modulus_edge() {
        // n = 35 holds |raw| <= 17; the largest encodable magnitude is 0.17.
        let n = BigUint::from(35u32);
        for k in -17i64..=17 {
            let x = k as f64 / 100.0;
            let raw = encode_signed(x, 100, &n).unwrap();
            assert_eq!(decode_signed(&raw, 100, &n), x);
        }
        assert!(encode_signed(0.18, 100, &n).is_err());
        assert!(encode_signed(-0.18, 100, &n).is_err());
    }

    #[test]
    fn rejects_unrepresentable_values() {
        assert!(encode_signed(f64::NAN, 100, &n()).is_err());
        assert!(encode_signed(f64::INFINITY, 100, &n()).is_err());
        assert!(encode_signed(1e300, 100, &n()).is_err());
        assert!(encode_signed(0.5, 0, &n()).is_err());
    }

    #[test]
    fn sums_of_mixed_sign_values_decode() {
        let n = n();
        let parts = [0.6, -0.25, 0.11, -0.9];
        let sum = parts
            .iter()
            .map(|&x| encode_signed(x, 100, &n).unwrap())
            .fold(BigUint::from(0u32), |acc, r| (acc + r) % &n);
        assert_eq!(decode_signed(&sum, 100, &n), -0.44);
    }
}
