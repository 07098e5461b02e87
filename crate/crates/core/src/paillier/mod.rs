//! Paillier public-key encryption with additive homomorphism.
//!
//! The generator is fixed to `g = n + 1`, which turns `g^m mod n^2` into the
//! closed form `1 + m*n` and makes `mu = lambda^-1 mod n`. Keys and
//! ciphertexts serialize as big-endian hex strings.
//!
//! ```
//! use segtrust::paillier::Keypair;
//! use segtrust::BigUint;
//!
//! let keys = Keypair::from_primes(&BigUint::from(5u32), &BigUint::from(7u32)).unwrap();
//! let pk = &keys.public;
//! let a = pk.encrypt_with(&BigUint::from(2u32), &BigUint::from(3u32)).unwrap();
//! let b = pk.encrypt_with(&BigUint::from(3u32), &BigUint::from(4u32)).unwrap();
//! let sum = pk.add(&a, &b).unwrap();
//! assert_eq!(keys.private.decrypt(pk, &sum).unwrap(), BigUint::from(5u32));
//! ```

mod codec;
pub mod prime;

pub use codec::{decode_signed, encode_signed, SignedFixedPoint, DEFAULT_SCALE};

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Candidate draws per prime before key generation gives up.
const MAX_PRIME_CANDIDATES: usize = 100_000;
/// Whole keypair attempts (distinctness / gcd failures) before giving up.
const MAX_KEYGEN_ATTEMPTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaillierError {
    #[error("key generation failed: {0}")]
    Generation(String),
    #[error("invalid prime pair: {0}")]
    InvalidPrimes(&'static str),
    #[error("plaintext is outside Z_n")]
    PlaintextOutOfRange,
    #[error("randomness is not a unit modulo n")]
    BadRandomness,
    #[error("ciphertext bound to key {found}, expected {expected}")]
    KeyMismatch { expected: KeyId, found: KeyId },
    #[error("ciphertext is not an element of Z*_(n^2)")]
    MalformedCiphertext,
    #[error("value {value} does not fit the plaintext space at scale {scale}")]
    EncodingOverflow { value: f64, scale: u64 },
}

/// Fingerprint of a public modulus; binds ciphertexts to the key that made them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyId(pub u64);

impl KeyId {
    fn of_modulus(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        KeyId(u64::from_be_bytes(head))
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PublicKeyRepr", into = "PublicKeyRepr")]
pub struct PublicKey {
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
    key_id: KeyId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateKey {
    #[serde(with = "hex_biguint")]
    lambda: BigUint,
    #[serde(with = "hex_biguint")]
    mu: BigUint,
    key_id: KeyId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keypair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "hex_biguint")]
    value: BigUint,
    key_id: KeyId,
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn to_hex(&self) -> String {
        self.value.to_str_radix(16)
    }
}

impl Keypair {
    /// Generates a keypair whose modulus has exactly `bits` bits, drawing all
    /// randomness from a ChaCha20 stream seeded with `seed`.
    pub fn generate(bits: u64, seed: u64) -> Result<Self, PaillierError> {
        if bits < 16 {
            return Err(PaillierError::Generation(format!(
                "modulus of {bits} bits is below the 16-bit minimum"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p_bits = bits / 2;
        let q_bits = bits - p_bits;
        for _ in 0..MAX_KEYGEN_ATTEMPTS {
            let p = prime::generate_prime(&mut rng, p_bits, MAX_PRIME_CANDIDATES)
                .ok_or_else(|| PaillierError::Generation("no prime found".into()))?;
            let q = prime::generate_prime(&mut rng, q_bits, MAX_PRIME_CANDIDATES)
                .ok_or_else(|| PaillierError::Generation("no prime found".into()))?;
            match Self::from_primes(&p, &q) {
                Ok(keys) => return Ok(keys),
                Err(PaillierError::InvalidPrimes(reason)) => {
                    log::debug!("rejected prime pair: {reason}");
                }
                Err(other) => return Err(other),
            }
        }
        Err(PaillierError::Generation(format!(
            "no valid prime pair after {MAX_KEYGEN_ATTEMPTS} attempts"
        )))
    }

    /// Builds a keypair from caller-chosen primes. Small primes are accepted so
    /// that key material can be checked by hand.
    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<Self, PaillierError> {
        if p == q {
            return Err(PaillierError::InvalidPrimes("p and q must be distinct"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        if !prime::is_probable_prime(p, &mut rng) || !prime::is_probable_prime(q, &mut rng) {
            return Err(PaillierError::InvalidPrimes("p and q must both be prime"));
        }
        let one = BigUint::one();
        let n = p * q;
        let phi = (p - &one) * (q - &one);
        if !n.gcd(&phi).is_one() {
            return Err(PaillierError::InvalidPrimes("gcd(n, (p-1)(q-1)) must be 1"));
        }
        let lambda = prime::lcm(&(p - &one), &(q - &one));
        let public = PublicKey::from_modulus(n);
        let u = public.g.modpow(&lambda, &public.n_squared);
        let mu = public
            .l_function(&u)
            .modinv(&public.n)
            .ok_or(PaillierError::InvalidPrimes("L(g^lambda) is not invertible mod n"))?;
        let private = PrivateKey {
            lambda,
            mu,
            key_id: public.key_id,
        };
        Ok(Keypair { public, private })
    }
}

impl PublicKey {
    fn from_modulus(n: BigUint) -> Self {
        let g = &n + 1u32;
        let n_squared = &n * &n;
        let key_id = KeyId::of_modulus(&n);
        PublicKey {
            n,
            g,
            n_squared,
            key_id,
        }
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    fn l_function(&self, u: &BigUint) -> BigUint {
        (u - 1u32) / &self.n
    }

    /// Encrypts `m` with fresh randomness `r` drawn uniformly from Z*_n.
    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        let r = loop {
            let r = prime::random_below(rng, &self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                break r;
            }
        };
        self.encrypt_with(m, &r)
    }

    /// `c = g^m * r^n mod n^2` with caller-supplied randomness.
    pub fn encrypt_with(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext, PaillierError> {
        if m >= &self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        if r.is_zero() || r >= &self.n || !r.gcd(&self.n).is_one() {
            return Err(PaillierError::BadRandomness);
        }
        // (1 + n)^m = 1 + m*n (mod n^2)
        let g_m = (m * &self.n + 1u32) % &self.n_squared;
        let r_n = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext {
            value: (g_m * r_n) % &self.n_squared,
            key_id: self.key_id,
        })
    }

    /// Multiplies two ciphertexts; the product decrypts to the plaintext sum mod n.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        self.check(b)?;
        Ok(Ciphertext {
            value: (&a.value * &b.value) % &self.n_squared,
            key_id: self.key_id,
        })
    }

    /// Deterministic encryption of zero (`r = 1`), the identity for [`PublicKey::add`].
    pub fn zero(&self) -> Ciphertext {
        Ciphertext {
            value: BigUint::one(),
            key_id: self.key_id,
        }
    }

    /// Wraps a raw group element as a ciphertext under this key.
    pub fn ciphertext_from_value(&self, value: BigUint) -> Result<Ciphertext, PaillierError> {
        let c = Ciphertext {
            value,
            key_id: self.key_id,
        };
        self.check(&c)?;
        Ok(c)
    }

    fn check(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.key_id != self.key_id {
            return Err(PaillierError::KeyMismatch {
                expected: self.key_id,
                found: c.key_id,
            });
        }
        if c.value.is_zero() || c.value >= self.n_squared || !c.value.gcd(&self.n).is_one() {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(())
    }
}

impl PrivateKey {
    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    /// `m = L(c^lambda mod n^2) * mu mod n`
    pub fn decrypt(&self, pk: &PublicKey, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        if pk.key_id != self.key_id {
            return Err(PaillierError::KeyMismatch {
                expected: self.key_id,
                found: pk.key_id,
            });
        }
        pk.check(c)?;
        let u = c.value.modpow(&self.lambda, &pk.n_squared);
        Ok((pk.l_function(&u) * &self.mu) % &pk.n)
    }
}

#[derive(Serialize, Deserialize)]
struct PublicKeyRepr {
    #[serde(with = "hex_biguint")]
    n: BigUint,
    #[serde(with = "hex_biguint")]
    g: BigUint,
}

impl From<PublicKey> for PublicKeyRepr {
    fn from(pk: PublicKey) -> Self {
        PublicKeyRepr { n: pk.n, g: pk.g }
    }
}

impl TryFrom<PublicKeyRepr> for PublicKey {
    type Error = String;

    fn try_from(repr: PublicKeyRepr) -> Result<Self, Self::Error> {
        if repr.n < BigUint::from(6u32) {
            return Err("modulus too small".into());
        }
        let pk = PublicKey::from_modulus(repr.n);
        if pk.g != repr.g {
            return Err("generator must be n + 1".into());
        }
        Ok(pk)
    }
}

/// Serde adapter writing `BigUint` as a lowercase big-endian hex string.
pub mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&value.to_str_radix(16))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        BigUint::parse_bytes(text.as_bytes(), 16)
            .ok_or_else(|| D::Error::custom(format!("invalid hex integer {text:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn toy() -> Keypair {
        Keypair::from_primes(&big(5), &big(7)).unwrap()
    }

    #[test]
    fn toy_key_matches_hand_computation() {
        let keys = toy();
        assert_eq!(keys.public.n(), &big(35));
        assert_eq!(keys.public.g(), &big(36));
        assert_eq!(keys.public.n_squared(), &big(1225));
        assert_eq!(keys.private.lambda(), &big(12));
        assert_eq!(keys.private.mu(), &big(3));
        // mu * L(g^lambda mod n^2) = 1 (mod n)
        let u = big(36).modpow(&big(12), &big(1225));
        assert_eq!(u, big(1 + 12 * 35));
        assert_eq!((big(12) * big(3)) % big(35), big(1));
    }

    #[test]
    fn closed_form_generator_power_matches_modpow() {
        let keys = Keypair::generate(64, 9).unwrap();
        let pk = &keys.public;
        for m in [0u64, 1, 2, 1000, 123_456_789] {
            let m = big(m) % pk.n();
            let c = pk.encrypt_with(&m, &BigUint::one()).unwrap();
            assert_eq!(c.value(), &pk.g().modpow(&m, pk.n_squared()));
        }
    }

    #[test]
    fn toy_encryptions() {
        let keys = toy();
        let pk = &keys.public;
        assert_eq!(pk.encrypt_with(&big(0), &big(1)).unwrap().value(), &big(1));
        assert_eq!(pk.encrypt_with(&big(1), &big(1)).unwrap().value(), &big(36));
        let c = pk.encrypt_with(&big(17), &big(2)).unwrap();
        assert_eq!(keys.private.decrypt(pk, &c).unwrap(), big(17));
        assert_eq!(keys.private.decrypt(pk, &pk.zero()).unwrap(), big(0));
    }

    #[test]
    fn toy_homomorphic_sum() {
        let keys = toy();
        let pk = &keys.public;
        let c2 = pk.encrypt_with(&big(2), &big(3)).unwrap();
        let c3 = pk.encrypt_with(&big(3), &big(11)).unwrap();
        let sum = pk.add(&c2, &c3).unwrap();
        assert_eq!(keys.private.decrypt(pk, &sum).unwrap(), big(5));

        let same = pk.add(&c2, &pk.encrypt_with(&big(0), &big(4)).unwrap()).unwrap();
        assert_eq!(keys.private.decrypt(pk, &same).unwrap(), big(2));

        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut acc = pk.zero();
        let mut expected = 0u64;
        for _ in 0..10 {
            acc = pk.add(&acc, &pk.encrypt(&big(1), &mut rng).unwrap()).unwrap();
            expected += 1;
        }
        assert_eq!(keys.private.decrypt(pk, &acc).unwrap(), big(expected % 35));
    }

    #[test]
    fn rejects_equal_or_composite_primes() {
        assert_eq!(
            Keypair::from_primes(&big(7), &big(7)),
            Err(PaillierError::InvalidPrimes("p and q must be distinct"))
        );
        assert!(matches!(
            Keypair::from_primes(&big(9), &big(7)),
            Err(PaillierError::InvalidPrimes(_))
        ));
        // gcd(21, 2*6) = 3
        assert!(matches!(
            Keypair::from_primes(&big(3), &big(7)),
            Err(PaillierError::InvalidPrimes(_))
        ));
    }

    #[test]
    fn input_validation() {
        let keys = toy();
        let pk = &keys.public;
        assert_eq!(
            pk.encrypt_with(&big(35), &big(1)),
            Err(PaillierError::PlaintextOutOfRange)
        );
        assert_eq!(pk.encrypt_with(&big(1), &big(7)), Err(PaillierError::BadRandomness));
        assert_eq!(pk.encrypt_with(&big(1), &big(0)), Err(PaillierError::BadRandomness));
        assert_eq!(
            pk.ciphertext_from_value(big(5)),
            Err(PaillierError::MalformedCiphertext)
        );
        assert_eq!(
            pk.ciphertext_from_value(big(1225)),
            Err(PaillierError::MalformedCiphertext)
        );
    }

    #[test]
    fn key_mismatch_is_reported() {
        let a = toy();
        let b = Keypair::from_primes(&big(11), &big(13)).unwrap();
        let c = b.public.encrypt_with(&big(4), &big(2)).unwrap();
        assert!(matches!(
            a.private.decrypt(&a.public, &c),
            Err(PaillierError::KeyMismatch { .. })
        ));
        assert!(matches!(
            a.private.decrypt(&b.public, &c),
            Err(PaillierError::KeyMismatch { .. })
        ));
        assert!(matches!(
            a.public.add(&a.public.zero(), &c),
            Err(PaillierError::KeyMismatch { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Keypair::generate(512, 42).unwrap();
        let b = Keypair::generate(512, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.public.bits(), 512);
        assert_ne!(a.public, Keypair::generate(512, 43).unwrap().public);
        assert!(Keypair::generate(8, 1).is_err());
    }

    #[test]
    fn equal_plaintexts_encrypt_differently() {
        let keys = Keypair::generate(128, 5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let a = keys.public.encrypt(&big(58), &mut rng).unwrap();
        let b = keys.public.encrypt(&big(58), &mut rng).unwrap();
        assert_ne!(a, b);
        assert_eq!(keys.private.decrypt(&keys.public, &a).unwrap(), big(58));
        assert_eq!(keys.private.decrypt(&keys.public, &b).unwrap(), big(58));
    }

    #[test]
    fn serde_uses_hex() {
        let keys = toy();
        let json = serde_json::to_value(&keys.public).unwrap();
        assert_eq!(json["n"], "23");
        assert_eq!(json["g"], "24");
        let back: PublicKey = serde_json::from_value(json).unwrap();
        assert_eq!(back, keys.public);
        let c = keys.public.encrypt_with(&big(1), &big(1)).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"24\""));
        assert_eq!(serde_json::from_str::<Ciphertext>(&text).unwrap(), c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_and_homomorphism(seed in any::<u64>(), m1 in any::<u64>(), m2 in any::<u64>()) {
            let keys = Keypair::generate(128, 11).unwrap();
            let pk = &keys.public;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (m1, m2) = (big(m1) % pk.n(), big(m2) % pk.n());
            let c1 = pk.encrypt(&m1, &mut rng).unwrap();
            let c2 = pk.encrypt(&m2, &mut rng).unwrap();
            prop_assert_eq!(keys.private.decrypt(pk, &c1).unwrap(), m1.clone());
            let sum = keys.private.decrypt(pk, &pk.add(&c1, &c2).unwrap()).unwrap();
            prop_assert_eq!(sum, (m1 + m2) % pk.n());
        }
    }
}
