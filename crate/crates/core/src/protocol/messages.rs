//! Message schemas exchanged over the client/provider channel.
//!
//! Signatures cover a canonical body: a per-message domain tag, then the
//! session context (user DID and the provider's contract), then the message
//! fields, all length-prefixed.

use serde::{Deserialize, Serialize};

use crate::codec::Writer;
use crate::crypto::{verify, KeyPair, OtpValue, PublicKey, Signature};
use crate::identity::{Did, VerifiableCredential};
use crate::ledger::{ContractAddress, InclusionProof, LedgerTx};
use crate::merkle::{MerkleProof, RootHash};

use super::{Failure, MisuseEvidence};

/// What a signature is bound to besides the message itself.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SessionContext {
    pub did: Did,
    pub contract: ContractAddress,
}

impl SessionContext {
    fn writer(&self, tag: &str) -> Writer {
        let mut w = Writer::tagged(tag);
        w.str(&self.did.to_string()).str(&self.contract.0);
        w
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct RegistrationRequest {
    pub credential: VerifiableCredential,
    pub merkle_root: RootHash,
    pub signature: Signature,
}

impl RegistrationRequest {
    pub fn body(
        ctx: &SessionContext,
        credential: &VerifiableCredential,
        root: &RootHash,
    ) -> Vec<u8> {
        let mut w = ctx.writer("chainotp/register/v1");
        w.bytes(&credential.to_bytes()).raw(root.0.as_bytes());
        w.finish()
    }

    pub fn new(
        ctx: &SessionContext,
        credential: VerifiableCredential,
        merkle_root: RootHash,
        signer: &KeyPair,
    ) -> Self {
        let signature = signer.sign(&Self::body(ctx, &credential, &merkle_root));
        Self {
            credential,
            merkle_root,
            signature,
        }
    }

    pub fn verify(&self, ctx: &SessionContext) -> bool {
        verify(
            &self.credential.user_public_key,
            &Self::body(ctx, &self.credential, &self.merkle_root),
            &self.signature,
        )
    }
}

/// Registers a new key and tree without the identity provider: the old key
/// endorses the new one, and the new key signs the whole request.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct RekeyRequest {
    pub new_public_key: PublicKey,
    pub merkle_root: RootHash,
    pub endorsement: Signature,
    pub signature: Signature,
}

impl RekeyRequest {
    pub fn endorsement_body(ctx: &SessionContext, new_pk: &PublicKey, root: &RootHash) -> Vec<u8> {
        let mut w = ctx.writer("chainotp/rekey-endorse/v1");
        w.raw(new_pk.as_bytes()).raw(root.0.as_bytes());
        w.finish()
    }

    fn body(&self, ctx: &SessionContext) -> Vec<u8> {
        let mut w = ctx.writer("chainotp/rekey/v1");
        w.raw(self.new_public_key.as_bytes())
            .raw(self.merkle_root.0.as_bytes())
            .raw(self.endorsement.as_bytes());
        w.finish()
    }

    pub fn new(ctx: &SessionContext, old: &KeyPair, new: &KeyPair, merkle_root: RootHash) -> Self {
        let new_public_key = new.public_key();
        let endorsement = old.sign(&Self::endorsement_body(ctx, &new_public_key, &merkle_root));
        let mut req = Self {
            new_public_key,
            merkle_root,
            endorsement,
            signature: endorsement,
        };
        req.signature = new.sign(&req.body(ctx));
        req
    }

    pub fn verify(&self, ctx: &SessionContext, old_pk: &PublicKey) -> bool {
        verify(
            old_pk,
            &Self::endorsement_body(ctx, &self.new_public_key, &self.merkle_root),
            &self.endorsement,
        ) && verify(&self.new_public_key, &self.body(ctx), &self.signature)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct AuthRequest1 {
    pub index: u64,
    pub otp: OtpValue,
    pub proof: MerkleProof,
    pub signature: Signature,
}

impl AuthRequest1 {
    fn body(ctx: &SessionContext, index: u64, otp: &OtpValue, proof: &MerkleProof) -> Vec<u8> {
        let mut w = ctx.writer("chainotp/auth1/v1");
        w.u64(index).raw(otp.as_bytes());
        proof.encode_into(&mut w);
        w.finish()
    }

    pub fn new(
        ctx: &SessionContext,
        index: u64,
        otp: OtpValue,
        proof: MerkleProof,
        signer: &KeyPair,
    ) -> Self {
        let signature = signer.sign(&Self::body(ctx, index, &otp, &proof));
        Self {
            index,
            otp,
            proof,
            signature,
        }
    }

    pub fn verify(&self, ctx: &SessionContext, pk: &PublicKey) -> bool {
        verify(
            pk,
            &Self::body(ctx, self.index, &self.otp, &self.proof),
            &self.signature,
        )
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct AuthRequest2 {
    pub tx: LedgerTx,
    pub inclusion: InclusionProof,
    pub precursor: OtpValue,
    pub signature: Signature,
}

impl AuthRequest2 {
    fn body(
        ctx: &SessionContext,
        tx: &LedgerTx,
        inclusion: &InclusionProof,
        precursor: &OtpValue,
    ) -> Vec<u8> {
        let mut w = ctx.writer("chainotp/auth2/v1");
        w.raw(tx.tx_id.as_bytes()).u64(inclusion.block_height);
        inclusion.merkle_proof.encode_into(&mut w);
        w.raw(precursor.as_bytes());
        w.finish()
    }

    pub fn new(
        ctx: &SessionContext,
        tx: LedgerTx,
        inclusion: InclusionProof,
        precursor: OtpValue,
        signer: &KeyPair,
    ) -> Self {
        let signature = signer.sign(&Self::body(ctx, &tx, &inclusion, &precursor));
        Self {
            tx,
            inclusion,
            precursor,
            signature,
        }
    }

    pub fn verify(&self, ctx: &SessionContext, pk: &PublicKey) -> bool {
        verify(
            pk,
            &Self::body(ctx, &self.tx, &self.inclusion, &self.precursor),
            &self.signature,
        )
    }
}

/// Everything that crosses the channel, in its wire form.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Register(RegistrationRequest),
    Rekey(RekeyRequest),
    Auth1(AuthRequest1),
    Auth2(AuthRequest2),
    Ack {
        contract: ContractAddress,
    },
    Receipt {
        otp: OtpValue,
        tx: LedgerTx,
    },
    Alert {
        step: u8,
        evidence: Option<MisuseEvidence>,
    },
    Grant {
        index: u64,
    },
    Reject {
        failure: Failure,
    },
}

impl WireMessage {
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("wire messages serialize")
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        serde_json::from_slice(bytes).ok()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Register(_) => "register",
            WireMessage::Rekey(_) => "rekey",
            WireMessage::Auth1(_) => "auth1",
            WireMessage::Auth2(_) => "auth2",
            WireMessage::Ack { .. } => "ack",
            WireMessage::Receipt { .. } => "receipt",
            WireMessage::Alert { .. } => "alert",
            WireMessage::Grant { .. } => "grant",
            WireMessage::Reject { .. } => "reject",
        }
    }
}
