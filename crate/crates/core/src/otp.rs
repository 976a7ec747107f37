//! Two-layer OTP scheme.
//!
//! The authenticator keeps only the seed `k`; precursor `i` is
//! `trunc16(F_k(i))` and `OTP_i = trunc16(h(precursor_i))`. The client wallet
//! keeps the OTPs and the full Merkle tree over them, and never sees the seed
//! after bootstrap.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{
    hash, mnemonic_decode, mnemonic_encode, prf, truncate_to_otp, KeyPair, Mnemonic, MnemonicError,
    OtpValue, PublicKey, SecretKey, Seed, OTP_LEN, SEED_LEN,
};
use crate::identity::{IdentityError, VerifiableCredential};
use crate::merkle::{MerkleError, MerkleProof, MerkleTree, RootHash};

pub const DEFAULT_CAPACITY: u64 = 1024;

const AUTHENTICATOR_MAGIC: [u8; 4] = *b"OTPA";
const WALLET_MAGIC: [u8; 4] = *b"OTPW";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OtpError {
    #[error("capacity {0} is not a power of two >= 2")]
    InvalidCapacity(u64),
    #[error("index {index} outside 1..={capacity}")]
    IndexOutOfRange { index: u64, capacity: u64 },
    #[error("all {capacity} OTPs are used; reinitialization required")]
    Exhausted { capacity: u64 },
    #[error("air-gapped transfer failed: {0}")]
    Transfer(#[from] MnemonicError),
    #[error("transferred seed has {0} bytes, expected 32")]
    SeedLength(usize),
    #[error("confirmed index {confirmed} but the wallet is at {expected}")]
    CounterMismatch { confirmed: u64, expected: u64 },
    #[error("persistence: {0}")]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error("wallet OTPs do not match its tree")]
    Inconsistent,
}

fn check_capacity(n: u64) -> Result<(), OtpError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(OtpError::InvalidCapacity(n));
    }
    Ok(())
}

pub fn precursor(seed: &Seed, index: u64) -> OtpValue {
    truncate_to_otp(&prf(seed, index).expect("callers check index >= 1"))
}

/// The half-factor relation: `OTP_i = trunc16(h(OTP'_i))`.
pub fn otp_from_precursor(precursor: &OtpValue) -> OtpValue {
    truncate_to_otp(&hash(precursor.as_bytes()))
}

/// OTPs for indices `1..=n`, returned 0-based (leaf `i - 1` holds `OTP_i`).
pub fn derive_all_otps(seed: &Seed, n: u64) -> Result<Vec<OtpValue>, OtpError> {
    check_capacity(n)?;
    Ok((1..=n)
        .map(|i| otp_from_precursor(&precursor(seed, i)))
        .collect())
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PrecursorReveal {
    pub index: u64,
    pub precursor: OtpValue,
    pub encoding: Mnemonic,
}

/// Air-gapped device state: the seed and the tree capacity, nothing else.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AuthenticatorState {
    seed: Seed,
    capacity: u64,
}

impl AuthenticatorState {
    pub fn new(seed: Seed, capacity: u64) -> Result<Self, OtpError> {
        check_capacity(capacity)?;
        Ok(Self { seed, capacity })
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R, capacity: u64) -> Result<Self, OtpError> {
        Self::new(Seed::generate(rng), capacity)
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// The seed as 24 words, for the one-time transfer to the client.
    pub fn seed_mnemonic(&self) -> Mnemonic {
        mnemonic_encode(self.seed.as_bytes()).expect("seed is 32 bytes")
    }

    /// Copy of the seed, as an adversary who steals the device would hold.
    pub fn export_seed(&self) -> Seed {
        self.seed.clone()
    }

    pub fn derive_precursor(&self, index: u64) -> Result<PrecursorReveal, OtpError> {
        if index == 0 || index > self.capacity {
            return Err(OtpError::IndexOutOfRange {
                index,
                capacity: self.capacity,
            });
        }
        let value = precursor(&self.seed, index);
        Ok(PrecursorReveal {
            index,
            precursor: value,
            encoding: mnemonic_encode(value.as_bytes()).expect("precursor is 16 bytes"),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&AUTHENTICATOR_MAGIC)
            .u8(FORMAT_VERSION)
            .raw(self.seed.as_bytes())
            .u64(self.capacity);
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, OtpError> {
        let mut r = Reader::new(data);
        r.magic(AUTHENTICATOR_MAGIC)?;
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(version).into());
        }
        let seed = Seed::from_bytes(r.array()?);
        let capacity = r.u64()?;
        r.finish()?;
        Self::new(seed, capacity)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct AuthMaterial {
    pub index: u64,
    pub otp: OtpValue,
    pub proof: MerkleProof,
}

/// Client-side secrets: signing key, OTPs, the full tree and the session
/// counter. There is deliberately no field from which a precursor follows.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ClientWallet {
    keypair: KeyPair,
    tree: MerkleTree,
    otps: Vec<OtpValue>,
    session_counter: u64,
    credential: Option<VerifiableCredential>,
}

impl ClientWallet {
    /// Decodes the transferred seed words, derives OTPs and the tree, and
    /// drops the seed and precursors before returning.
    pub fn bootstrap(transferred: &Mnemonic, n: u64, keypair: KeyPair) -> Result<Self, OtpError> {
        let raw = mnemonic_decode(transferred)?;
        let seed_bytes: [u8; SEED_LEN] = raw
            .as_slice()
            .try_into()
            .map_err(|_| OtpError::SeedLength(raw.len()))?;
        let otps = derive_all_otps(&Seed::from_bytes(seed_bytes), n)?;
        let tree = MerkleTree::build(&otps)?;
        Ok(Self {
            keypair,
            tree,
            otps,
            session_counter: 1,
            credential: None,
        })
    }

    pub fn set_credential(&mut self, credential: VerifiableCredential) {
        self.credential = Some(credential);
    }

    pub fn credential(&self) -> Option<&VerifiableCredential> {
        self.credential.as_ref()
    }

    pub fn keypair(&self) -> &KeyPair {
        &self.keypair
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public_key()
    }

    pub fn tree(&self) -> &MerkleTree {
        &self.tree
    }

    pub fn root(&self) -> RootHash {
        self.tree.root()
    }

    pub fn capacity(&self) -> u64 {
        self.otps.len() as u64
    }

    /// Next unused index, `1..=N + 1`.
    pub fn session_counter(&self) -> u64 {
        self.session_counter
    }

    /// `OTP_index` for `1 <= index <= N`.
    pub fn otp(&self, index: u64) -> Option<OtpValue> {
        let i = usize::try_from(index.checked_sub(1)?).ok()?;
        self.otps.get(i).copied()
    }

    pub fn otps(&self) -> &[OtpValue] {
        &self.otps
    }

    /// Material for the next session. Does not advance the counter.
    pub fn next_auth_material(&self) -> Result<AuthMaterial, OtpError> {
        let index = self.session_counter;
        let otp = self.otp(index).ok_or(OtpError::Exhausted {
            capacity: self.capacity(),
        })?;
        let proof = self.tree.prove((index - 1) as usize)?;
        Ok(AuthMaterial { index, otp, proof })
    }

    /// Advances the counter once the provider has granted session `index`.
    pub fn confirm_session(&mut self, index: u64) -> Result<(), OtpError> {
        if index != self.session_counter {
            return Err(OtpError::CounterMismatch {
                confirmed: index,
                expected: self.session_counter,
            });
        }
        self.session_counter += 1;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&WALLET_MAGIC)
            .u8(FORMAT_VERSION)
            .raw(self.keypair.secret_key().as_bytes())
            .u64(self.session_counter)
            .u64(self.otps.len() as u64);
        for otp in &self.otps {
            w.raw(otp.as_bytes());
        }
        w.bytes(&self.tree.to_bytes());
        match &self.credential {
            Some(vc) => w.u8(1).bytes(&vc.to_bytes()),
            None => w.u8(0),
        };
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, OtpError> {
        let mut r = Reader::new(data);
        r.magic(WALLET_MAGIC)?;
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(version).into());
        }
        let keypair = KeyPair::from_secret(SecretKey::from_bytes(r.array()?));
        let session_counter = r.u64()?;
        let n = r.u64()?;
        check_capacity(n)?;
        let otps = (0..n)
            .map(|_| r.array::<OTP_LEN>().map(OtpValue::from_bytes))
            .collect::<Result<Vec<_>, _>>()?;
        let tree = MerkleTree::from_bytes(r.bytes()?)?;
        let credential = match r.u8()? {
            0 => None,
            1 => Some(VerifiableCredential::from_bytes(r.bytes()?)?),
            _ => return Err(CodecError::Invalid("credential flag").into()),
        };
        r.finish()?;
        let leaves_match = tree.leaf_count() as u64 == n
            && otps
                .iter()
                .enumerate()
                .all(|(i, otp)| tree.leaf_node(i) == Some(&hash(otp.as_bytes())));
        if !leaves_match || session_counter == 0 || session_counter > n + 1 {
            return Err(OtpError::Inconsistent);
        }
        Ok(Self {
            keypair,
            tree,
            otps,
            session_counter,
            credential,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::merkle::{build_tree, verify_proof};

    fn pair(n: u64, rng_seed: u64) -> (AuthenticatorState, ClientWallet) {
        let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
        let auth = AuthenticatorState::generate(&mut rng, n).unwrap();
        let wallet =
            ClientWallet::bootstrap(&auth.seed_mnemonic(), n, KeyPair::generate(&mut rng)).unwrap();
        (auth, wallet)
    }

    #[test]
    fn zero_seed_precursor_golden_vector() {
        let auth = AuthenticatorState::new(Seed::from_bytes([0; 32]), 16).unwrap();
        let reveal = auth.derive_precursor(1).unwrap();
        assert_eq!(
            reveal.precursor.to_hex(),
            "08e00266fff0aacc64974f22a53622a7"
        );
        assert_eq!(reveal.encoding.len(), 12);
        assert_eq!(
            mnemonic_decode(&reveal.encoding).unwrap(),
            reveal.precursor.as_bytes()
        );
        assert_eq!(auth.derive_precursor(1).unwrap(), reveal);
    }

    #[test]
    fn two_otps_golden_vectors() {
        // seed = 0x00..0x1f; values computed with Python's hashlib
        let mut bytes = [0u8; 32];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = i as u8;
        }
        let otps = derive_all_otps(&Seed::from_bytes(bytes), 2).unwrap();
        assert_eq!(otps[0].to_hex(), "d70c8a786a6c976f348b111e5411c9fb");
        assert_eq!(otps[1].to_hex(), "748402289b628050fa2cc2a59244a0f5");
        assert_eq!(
            build_tree(&otps).unwrap().root().0.to_hex(),
            "9e9495b1b0929a96d94eb4ef8912eb9a525992e92e4789718f144f302694ad36"
        );
    }

    #[test]
    fn precursor_index_bounds() {
        let (auth, _) = pair(4, 1);
        for bad in [0u64, 5] {
            assert_eq!(
                auth.derive_precursor(bad).unwrap_err(),
                OtpError::IndexOutOfRange {
                    index: bad,
                    capacity: 4
                }
            );
        }
        assert!(AuthenticatorState::generate(&mut ChaCha20Rng::seed_from_u64(0), 6).is_err());
        assert_eq!(
            derive_all_otps(&Seed::from_bytes([0; 32]), 3),
            Err(OtpError::InvalidCapacity(3))
        );
    }

    #[test]
    fn precursors_hash_to_wallet_otps() {
        let (auth, wallet) = pair(16, 2);
        for i in 1..=16 {
            let reveal = auth.derive_precursor(i).unwrap();
            assert_eq!(
                otp_from_precursor(&reveal.precursor),
                wallet.otp(i).unwrap()
            );
        }
    }

    #[test]
    fn otps_are_distinct_at_1024() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let otps = derive_all_otps(&Seed::generate(&mut rng), 1024).unwrap();
        assert_eq!(otps.iter().collect::<HashSet<_>>().len(), 1024);
    }

    #[test]
    fn changing_seed_changes_every_otp() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let base = derive_all_otps(&Seed::generate(&mut rng), 8).unwrap();
        for _ in 0..100 {
            let other = derive_all_otps(&Seed::generate(&mut rng), 8).unwrap();
            for (a, b) in base.iter().zip(&other) {
                let differing_bits: u32 = a
                    .as_bytes()
                    .iter()
                    .zip(b.as_bytes())
                    .map(|(x, y)| (x ^ y).count_ones())
                    .sum();
                assert!(differing_bits > 20, "suspiciously close OTPs");
            }
        }
    }

    #[test]
    fn wallet_root_matches_direct_derivation() {
        let (auth, wallet) = pair(16, 5);
        let direct = build_tree(&derive_all_otps(&auth.export_seed(), 16).unwrap()).unwrap();
        assert_eq!(wallet.root(), direct.root());
        assert_eq!(wallet.session_counter(), 1);
        let material = wallet.next_auth_material().unwrap();
        assert_eq!(material.index, 1);
        assert_eq!(material.proof.leaf_index, 0);
        assert!(verify_proof(
            &wallet.root(),
            material.otp.as_bytes(),
            &material.proof
        ));
    }

    #[test]
    fn counter_advances_only_on_confirmation_and_exhausts() {
        let (_, mut wallet) = pair(2, 6);
        assert_eq!(wallet.next_auth_material().unwrap().index, 1);
        assert_eq!(wallet.next_auth_material().unwrap().index, 1);
        assert_eq!(
            wallet.confirm_session(2),
            Err(OtpError::CounterMismatch {
                confirmed: 2,
                expected: 1
            })
        );
        wallet.confirm_session(1).unwrap();
        assert_eq!(wallet.next_auth_material().unwrap().index, 2);
        wallet.confirm_session(2).unwrap();
        assert_eq!(wallet.session_counter(), 3);
        assert_eq!(
            wallet.next_auth_material(),
            Err(OtpError::Exhausted { capacity: 2 })
        );
    }

    #[test]
    fn corrupted_transfer_aborts_bootstrap() {
        let (auth, _) = pair(4, 7);
        let words = auth.seed_mnemonic();
        let key = KeyPair::generate(&mut ChaCha20Rng::seed_from_u64(0));
        let unknown = words.with_word(0, "zzzz");
        assert!(matches!(
            ClientWallet::bootstrap(&unknown, 4, key.clone()),
            Err(OtpError::Transfer(MnemonicError::UnknownWord { .. }))
        ));
        // a 12-word phrase decodes to 16 bytes, which is not a seed
        let short = mnemonic_encode(&[1u8; 16]).unwrap();
        assert_eq!(
            ClientWallet::bootstrap(&short, 4, key),
            Err(OtpError::SeedLength(16))
        );
    }

    #[test]
    fn persistence_round_trips() {
        let (auth, mut wallet) = pair(8, 8);
        wallet.confirm_session(1).unwrap();
        let copy = ClientWallet::from_bytes(&wallet.to_bytes()).unwrap();
        assert_eq!(copy, wallet);
        assert_eq!(
            AuthenticatorState::from_bytes(&auth.to_bytes()).unwrap(),
            auth
        );

        let mut bytes = wallet.to_bytes();
        // corrupt one stored OTP (after magic, version, key, counter, n)
        bytes[4 + 1 + 32 + 8 + 8] ^= 1;
        assert_eq!(
            ClientWallet::from_bytes(&bytes),
            Err(OtpError::Inconsistent)
        );
    }

    #[test]
    fn wallet_bytes_do_not_contain_seed_or_precursors() {
        let (auth, wallet) = pair(8, 9);
        let bytes = wallet.to_bytes();
        let contains = |needle: &[u8]| bytes.windows(needle.len()).any(|w| w == needle);
        assert!(!contains(auth.export_seed().as_bytes()));
        for i in 1..=8 {
            assert!(!contains(
                auth.derive_precursor(i).unwrap().precursor.as_bytes()
            ));
        }
    }
}
