//! Hashing, the seeded PRF, OTP truncation, signatures and the mnemonic codec.
//!
//! Every derivation in the crate goes through [`hash`] (SHA-256).

mod mnemonic;
mod sign;

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use mnemonic::{mnemonic_decode, mnemonic_encode, wordlist, Mnemonic, MnemonicError};
pub use sign::{sign, verify, KeyPair, PublicKey, SecretKey, Signature};

pub const DIGEST_LEN: usize = 32;
pub const OTP_LEN: usize = 16;
pub const SEED_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("PRF index must be at least 1")]
    ZeroIndex,
}

/// Implements hex `Display`/`Debug` and hex-string serde for a byte newtype.
macro_rules! hex_bytes_newtype {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Option<Self> {
                let raw = hex::decode(s).ok()?;
                Some(Self(raw.try_into().ok()?))
            }
        }

        impl AsRef<[u8]> for $name {
            fn as_ref(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(self.0))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).ok_or_else(|| {
                    serde::de::Error::custom(concat!("invalid hex for ", stringify!($name)))
                })
            }
        }
    };
}
pub(crate) use hex_bytes_newtype;

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; DIGEST_LEN]);
hex_bytes_newtype!(Digest, DIGEST_LEN);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);
}

/// A 16-byte one-time password (or precursor).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OtpValue([u8; OTP_LEN]);
hex_bytes_newtype!(OtpValue, OTP_LEN);

/// The authenticator's secret seed `k`.
#[derive(Clone, PartialEq, Eq)]
pub struct Seed([u8; SEED_LEN]);

impl Seed {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; SEED_LEN];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub const fn from_bytes(bytes: [u8; SEED_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SEED_LEN] {
        &self.0
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Seed(..)")
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hashes the concatenation of `parts` without allocating.
pub fn hash_concat(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

/// `F_k(i) = h(k || be64(i))`, defined for `i >= 1`.
pub fn prf(seed: &Seed, index: u64) -> Result<Digest, CryptoError> {
    if index == 0 {
        return Err(CryptoError::ZeroIndex);
    }
    Ok(hash_concat(&[seed.as_bytes(), &index.to_be_bytes()]))
}

pub fn truncate_to_otp(digest: &Digest) -> OtpValue {
    let mut out = [0u8; OTP_LEN];
    out.copy_from_slice(&digest.0[..OTP_LEN]);
    OtpValue(out)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    use super::*;

    #[test]
    fn empty_hash_matches_published_vector() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn appending_a_zero_byte_changes_the_hash() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: [u8; 32] = rng.gen();
            let mut y = x.to_vec();
            y.push(0);
            assert_eq!(hash(&x), hash(&x));
            assert_ne!(hash(&x), hash(&y));
        }
    }

    #[test]
    fn prf_is_hash_of_seed_and_big_endian_index() {
        let seed = Seed::from_bytes([7; 32]);
        let mut buf = vec![7u8; 32];
        buf.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(prf(&seed, 1).unwrap(), hash(&buf));
    }

    #[test]
    fn prf_zero_seed_golden_vector() {
        // Computed with Python's hashlib.
        let d = prf(&Seed::from_bytes([0; 32]), 1).unwrap();
        assert_eq!(
            d.to_hex(),
            "08e00266fff0aacc64974f22a53622a7dc458ac1b5fd446ae7c99a4a99a564e6"
        );
    }

    #[test]
    fn prf_rejects_zero_index() {
        assert_eq!(
            prf(&Seed::from_bytes([0; 32]), 0),
            Err(CryptoError::ZeroIndex)
        );
    }

    #[test]
    fn prf_distinct_over_sampled_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let seed = Seed::generate(&mut rng);
        for _ in 0..10_000 {
            let i = rng.gen_range(1..u64::MAX);
            let j = rng.gen_range(1..u64::MAX);
            if i != j {
                assert_ne!(prf(&seed, i).unwrap(), prf(&seed, j).unwrap());
            }
        }
    }

    #[test]
    fn prf_no_collisions_over_many_seed_index_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let seeds: Vec<Seed> = (0..100).map(|_| Seed::generate(&mut rng)).collect();
        let mut seen = HashSet::with_capacity(100_000);
        for seed in &seeds {
            for i in 1..=1000u64 {
                assert!(seen.insert(prf(seed, i).unwrap()));
            }
        }
    }

    #[test]
    fn truncation_takes_the_prefix() {
        assert_eq!(
            truncate_to_otp(&Digest::ZERO),
            OtpValue::from_bytes([0; 16])
        );
        let mut seq = [0u8; 32];
        for (i, b) in seq.iter_mut().enumerate() {
            *b = i as u8 + 1;
        }
        let otp = truncate_to_otp(&Digest::from_bytes(seq));
        assert_eq!(otp.as_bytes()[..], seq[..16]);
        let d = hash(b"stable");
        assert_eq!(truncate_to_otp(&d), truncate_to_otp(&d));
    }

    #[test]
    fn hex_serde_round_trip() {
        let d = hash(b"x");
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, format!("\"{}\"", d.to_hex()));
        let back: Digest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<OtpValue>("\"abcd\"").is_err());
    }
}
