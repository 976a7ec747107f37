use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::hex_bytes_newtype;

/// Ed25519 verification key bytes. Not validated on construction; a
/// malformed key simply never verifies.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey([u8; 32]);
hex_bytes_newtype!(PublicKey, 32);

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature([u8; 64]);
hex_bytes_newtype!(Signature, 64);

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; 32]);

impl SecretKey {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    secret: SecretKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self::from_secret(SecretKey(bytes))
    }

    pub fn from_secret(secret: SecretKey) -> Self {
        let public = PublicKey(SigningKey::from_bytes(&secret.0).verifying_key().to_bytes());
        Self { secret, public }
    }

    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn secret_key(&self) -> &SecretKey {
        &self.secret
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        sign(&self.secret, msg)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

pub fn sign(sk: &SecretKey, msg: &[u8]) -> Signature {
    Signature(SigningKey::from_bytes(&sk.0).sign(msg).to_bytes())
}

pub fn verify(pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&pk.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    key.verify_strict(msg, &sig).is_ok()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn keys(n: usize) -> Vec<KeyPair> {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        (0..n).map(|_| KeyPair::generate(&mut rng)).collect()
    }

    #[test]
    fn round_trip_and_wrong_key() {
        let ks = keys(2);
        let sig = ks[0].sign(b"auth");
        assert!(verify(&ks[0].public_key(), b"auth", &sig));
        assert!(!verify(&ks[1].public_key(), b"auth", &sig));
        assert!(!verify(&ks[0].public_key(), b"auth!", &sig));
    }

    #[test]
    fn every_flipped_signature_byte_fails() {
        let k = &keys(1)[0];
        let sig = k.sign(b"auth");
        for pos in 0..64 {
            for bit in 0..8 {
                let mut bytes = *sig.as_bytes();
                bytes[pos] ^= 1 << bit;
                assert!(
                    !verify(&k.public_key(), b"auth", &Signature::from_bytes(bytes)),
                    "flip at byte {pos} bit {bit} verified"
                );
            }
        }
    }

    #[test]
    fn malformed_key_is_a_failure_not_a_panic() {
        let k = &keys(1)[0];
        let sig = k.sign(b"m");
        // y = 2 is not on the curve
        let mut bad = [0u8; 32];
        bad[0] = 2;
        assert!(!verify(&PublicKey::from_bytes(bad), b"m", &sig));
        assert!(!verify(&PublicKey::from_bytes([0xff; 32]), b"m", &sig));
    }

    #[test]
    fn signatures_from_other_keys_never_verify() {
        let ks = keys(20);
        for (i, signer) in ks.iter().enumerate() {
            let msg = format!("message {i}");
            let sig = signer.sign(msg.as_bytes());
            for (j, other) in ks.iter().enumerate() {
                assert_eq!(verify(&other.public_key(), msg.as_bytes(), &sig), i == j);
            }
        }
    }

    #[test]
    fn keypair_is_deterministic_from_secret() {
        let k = &keys(1)[0];
        let again = KeyPair::from_secret(k.secret_key().clone());
        assert_eq!(again.public_key(), k.public_key());
        assert_eq!(again.sign(b"x"), k.sign(b"x"));
    }
}
