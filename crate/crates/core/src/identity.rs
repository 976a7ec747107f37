//! Decentralized identifiers, identity providers and verifiable credentials.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{hash, hash_concat, verify, Digest, KeyPair, PublicKey, Signature};

const CREDENTIAL_VERSION: u8 = 1;
const CREDENTIAL_TAG: &str = "chainotp/credential/v1";

pub type Claims = BTreeMap<String, String>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("DID {0} is not registered")]
    UnknownDid(Did),
    #[error("identity vetting rejected {0}")]
    VettingRejected(Did),
    #[error("credential {0} was never issued by this provider")]
    UnknownCredential(Digest),
    #[error("malformed DID string {0:?}")]
    MalformedDid(String),
    #[error("credential encoding: {0}")]
    Codec(#[from] CodecError),
}

/// `did:<scheme>:<address>`. The scheme may itself contain colons
/// (`<ledger>:<chain>`); the address is the last segment.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Did {
    scheme: String,
    address: String,
}

impl Did {
    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    pub fn address(&self) -> &str {
        &self.address
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{}:{}", self.scheme, self.address)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({self})")
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || IdentityError::MalformedDid(s.to_owned());
        let rest = s.strip_prefix("did:").ok_or_else(malformed)?;
        let (scheme, address) = rest.rsplit_once(':').ok_or_else(malformed)?;
        if scheme.is_empty() || address.is_empty() || address.contains(char::is_whitespace) {
            return Err(malformed());
        }
        Ok(Did {
            scheme: scheme.to_owned(),
            address: address.to_owned(),
        })
    }
}

impl TryFrom<String> for Did {
    type Error = IdentityError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Did> for String {
    fn from(d: Did) -> String {
        d.to_string()
    }
}

/// The identity-oriented ledger's DID table. Registration never refuses.
#[derive(Debug, Default, Clone)]
pub struct DidRegistry {
    dids: BTreeSet<Did>,
    counter: u64,
}

impl DidRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Addresses are derived from a registration counter only, so a DID
    /// carries nothing about its holder.
    pub fn create_did(&mut self, scheme: &str) -> Did {
        self.counter += 1;
        let digest = hash_concat(&[scheme.as_bytes(), &self.counter.to_be_bytes()]);
        let did = Did {
            scheme: scheme.to_owned(),
            address: hex::encode(&digest.as_bytes()[..20]),
        };
        self.dids.insert(did.clone());
        did
    }

    pub fn contains(&self, did: &Did) -> bool {
        self.dids.contains(did)
    }

    pub fn len(&self) -> usize {
        self.dids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dids.is_empty()
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct VerifiableCredential {
    pub did: Did,
    pub user_public_key: PublicKey,
    pub claims: Claims,
    pub issuer_did: Did,
    pub issuer_signature: Signature,
}

impl VerifiableCredential {
    /// Canonical bytes covered by the issuer signature.
    pub fn signing_payload(&self) -> Vec<u8> {
        signing_payload(
            &self.did,
            &self.user_public_key,
            &self.claims,
            &self.issuer_did,
        )
    }

    /// Identifier used for issuance logs and revocation.
    pub fn digest(&self) -> Digest {
        hash(&self.to_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(CREDENTIAL_VERSION);
        write_body(
            &mut w,
            &self.did,
            &self.user_public_key,
            &self.claims,
            &self.issuer_did,
        );
        w.raw(self.issuer_signature.as_bytes());
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, IdentityError> {
        let mut r = Reader::new(data);
        let version = r.u8()?;
        if version != CREDENTIAL_VERSION {
            return Err(CodecError::UnsupportedVersion(version).into());
        }
        let did = r.string()?.parse()?;
        let user_public_key = PublicKey::from_bytes(
            r.bytes()?
                .try_into()
                .map_err(|_| CodecError::Invalid("public key length"))?,
        );
        let count = r.u32()?;
        let mut claims = Claims::new();
        for _ in 0..count {
            let k = r.string()?;
            let v = r.string()?;
            claims.insert(k, v);
        }
        let issuer_did = r.string()?.parse()?;
        let issuer_signature = Signature::from_bytes(r.array()?);
        r.finish()?;
        Ok(Self {
            did,
            user_public_key,
            claims,
            issuer_did,
            issuer_signature,
        })
    }
}

fn write_body(w: &mut Writer, did: &Did, pk: &PublicKey, claims: &Claims, issuer: &Did) {
    w.str(&did.to_string()).bytes(pk.as_bytes());
    w.u32(claims.len() as u32);
    for (k, v) in claims {
        w.str(k).str(v);
    }
    w.str(&issuer.to_string());
}

fn signing_payload(did: &Did, pk: &PublicKey, claims: &Claims, issuer: &Did) -> Vec<u8> {
    let mut w = Writer::tagged(CREDENTIAL_TAG);
    write_body(&mut w, did, pk, claims, issuer);
    w.finish()
}

/// Hook for the out-of-band document check an issuer performs before signing.
pub trait VettingPolicy {
    fn approve(&self, did: &Did, claims: &Claims) -> bool;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ApproveAll;

impl VettingPolicy for ApproveAll {
    fn approve(&self, _: &Did, _: &Claims) -> bool {
        true
    }
}

impl<F: Fn(&Did, &Claims) -> bool> VettingPolicy for F {
    fn approve(&self, did: &Did, claims: &Claims) -> bool {
        self(did, claims)
    }
}

pub struct IdentityProvider {
    did: Did,
    keypair: KeyPair,
    issued_log: Vec<Digest>,
    revocations: BTreeSet<Digest>,
    policy: Box<dyn VettingPolicy + Send + Sync>,
}

impl fmt::Debug for IdentityProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IdentityProvider")
            .field("did", &self.did)
            .field("issued", &self.issued_log.len())
            .field("revoked", &self.revocations.len())
            .finish()
    }
}

impl IdentityProvider {
    pub fn new<R: RngCore + ?Sized>(registry: &mut DidRegistry, scheme: &str, rng: &mut R) -> Self {
        Self {
            did: registry.create_did(scheme),
            keypair: KeyPair::generate(rng),
            issued_log: Vec::new(),
            revocations: BTreeSet::new(),
            policy: Box::new(ApproveAll),
        }
    }

    pub fn with_policy(mut self, policy: impl VettingPolicy + Send + Sync + 'static) -> Self {
        self.policy = Box::new(policy);
        self
    }

    pub fn did(&self) -> &Did {
        &self.did
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public_key()
    }

    pub fn issued_log(&self) -> &[Digest] {
        &self.issued_log
    }

    pub fn revocations(&self) -> &BTreeSet<Digest> {
        &self.revocations
    }

    pub fn issue_credential(
        &mut self,
        registry: &DidRegistry,
        did: &Did,
        user_public_key: PublicKey,
        claims: Claims,
    ) -> Result<VerifiableCredential, IdentityError> {
        if !registry.contains(did) {
            return Err(IdentityError::UnknownDid(did.clone()));
        }
        if !self.policy.approve(did, &claims) {
            return Err(IdentityError::VettingRejected(did.clone()));
        }
        let payload = signing_payload(did, &user_public_key, &claims, &self.did);
        let credential = VerifiableCredential {
            did: did.clone(),
            user_public_key,
            claims,
            issuer_did: self.did.clone(),
            issuer_signature: self.keypair.sign(&payload),
        };
        self.issued_log.push(credential.digest());
        Ok(credential)
    }

    /// Idempotent for already-revoked credentials.
    pub fn revoke_credential(&mut self, cred_digest: Digest) -> Result<(), IdentityError> {
        if !self.issued_log.contains(&cred_digest) {
            return Err(IdentityError::UnknownCredential(cred_digest));
        }
        self.revocations.insert(cred_digest);
        Ok(())
    }
}

pub fn verify_credential(
    cred: &VerifiableCredential,
    issuer_pk: &PublicKey,
    revocations: &BTreeSet<Digest>,
) -> bool {
    verify(issuer_pk, &cred.signing_payload(), &cred.issuer_signature)
        && !revocations.contains(&cred.digest())
}
