//! Probabilistic prime generation for Paillier moduli.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller-Rabin rounds. 40 rounds bound the error below 2^-80.
const MR_ROUNDS: usize = 40;

/// Uniform integer in `[0, bound)` by rejection sampling on whole bytes.
pub fn random_below<R: RngCore + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "empty sampling range");
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Uniform integer in `[low, high)`.
pub fn random_range<R: RngCore + ?Sized>(rng: &mut R, low: &BigUint, high: &BigUint) -> BigUint {
    low + random_below(rng, &(high - low))
}

pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }

    let one = BigUint::one();
    let n_minus_one = n - &one;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let odd = &n_minus_one >> shift;

    'witness: for _ in 0..MR_ROUNDS {
        let a = random_range(rng, &two, &n_minus_one);
        let mut x = a.modpow(&odd, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Draws a prime with exactly `bits` bits (top two bits set so products keep
/// their full length). Gives up after `max_candidates` odd candidates.
pub fn generate_prime<R: RngCore + ?Sized>(
    rng: &mut R,
    bits: u64,
    max_candidates: usize,
) -> Option<BigUint> {
    if bits < 3 {
        return None;
    }
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; bytes];
    for _ in 0..max_candidates {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let mut candidate = BigUint::from_bytes_be(&buf);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return Some(candidate);
        }
    }
    None
}

pub fn lcm(a: &BigUint, b: &BigUint) -> BigUint {
    a.lcm(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn agrees_with_trial_division_below_5000() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for n in 0u64..5000 {
            assert_eq!(
                is_probable_prime(&BigUint::from(n), &mut rng),
                trial_division(n),
                "n = {n}"
            );
        }
    }

    #[test]
    fn rejects_carmichael_numbers() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for n in [561u64, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265] {
            assert!(!is_probable_prime(&BigUint::from(n), &mut rng), "{n}");
        }
    }

    #[test]
    fn generated_prime_has_requested_length() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for bits in [8u64, 16, 64, 256] {
            let p = generate_prime(&mut rng, bits, 10_000).unwrap();
            assert_eq!(p.bits(), bits);
        }
    }

    #[test]
    fn random_below_stays_in_range() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let bound = BigUint::from(1000u32);
        for _ in 0..2000 {
            assert!(random_below(&mut rng, &bound) < bound);
        }
    }
}
