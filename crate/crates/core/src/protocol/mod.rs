//! Actors and flows: bootstrapping, the 17-step authentication, misuse
//! checks and reinitialization.
//!
//! Every actor is a plain state machine driven by the functions in this
//! module. The ledger, the provider-to-ledger relay and the transcript live in
//! [`Network`]; a [`World`] adds the DID registry, the identity provider and
//! the harness RNG.

mod channel;
mod flows;
mod messages;
mod network;
mod provider;

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, OtpValue};
use crate::ledger::EventKind;

pub use channel::{
    Actor, ChannelRecord, Endpoint, Phase, SecureChannel, Transcript, TranscriptEntry,
};
pub use flows::{
    check_misuse, drive_authentication, reinitialize, run_authentication, run_bootstrap,
    run_bootstrap_with, BootstrapError, ClientOverrides, ClientSide, Enrollment, PrecursorSource,
    ReinitMode, SessionReport,
};
pub use messages::{
    AuthRequest1, AuthRequest2, RegistrationRequest, RekeyRequest, SessionContext, WireMessage,
};
pub use network::{Network, Ticket, World, DID_SCHEME};
pub use provider::{
    ProviderAlert, ProviderUserRecord, ServiceProvider, SessionState, DEFAULT_ABANDON_AFTER_BLOCKS,
};

/// On-chain artifact showing that one of a user's OTPs was published by
/// someone else.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct MisuseEvidence {
    pub tx_id: Digest,
    /// Block height, or `None` while the transaction is still pending.
    pub height: Option<u64>,
    pub otp: OtpValue,
    pub kind: EventKind,
    /// Session index of `otp`, when the reporting party knows it.
    pub index: Option<u64>,
}

/// Why a run stopped short of a grant. Each variant names one protocol step.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Failure {
    #[error("step {step}: undecodable message")]
    Malformed { step: u8 },
    #[error("step 2: no record for this user")]
    UnknownUser,
    #[error("step {step}: signature does not verify")]
    BadSignature { step: u8 },
    #[error("step 3: OTP is not a leaf under the registered root")]
    NotAMember,
    #[error("step 4: session index out of sequence")]
    SessionMismatch,
    #[error("step 6: contract rejected the previous OTP")]
    ContractStateFault,
    #[error("step 6: transaction not sealed in time; session abandoned")]
    Abandoned,
    #[error("step 9: receipt does not match the request")]
    ReceiptMismatch,
    #[error("step 9: transaction inclusion not verified")]
    InclusionUnverified,
    #[error("step 10: no precursor available")]
    PrecursorUnavailable,
    #[error("step 11: precursor transfer failed")]
    TransferFailed,
    #[error("step 14: no matching open session")]
    NoOpenSession,
    #[error("step 15: precursor does not hash to the session OTP")]
    PrecursorMismatch,
    #[error("step 16: transaction or inclusion proof rejected")]
    TxUnverified,
    #[error("step 9: credential or registration signature rejected")]
    RegistrationRejected,
    #[error("step 9: rekey endorsement rejected")]
    RekeyRejected,
}

impl Failure {
    pub fn step(&self) -> u8 {
        match *self {
            Failure::Malformed { step } | Failure::BadSignature { step } => step,
            Failure::UnknownUser => 2,
            Failure::NotAMember => 3,
            Failure::SessionMismatch => 4,
            Failure::ContractStateFault | Failure::Abandoned => 6,
            Failure::ReceiptMismatch | Failure::InclusionUnverified => 9,
            Failure::PrecursorUnavailable => 10,
            Failure::TransferFailed => 11,
            Failure::NoOpenSession => 14,
            Failure::PrecursorMismatch => 15,
            Failure::TxUnverified => 16,
            Failure::RegistrationRejected | Failure::RekeyRejected => 9,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolOutcome {
    Granted { index: u64 },
    AbortedMisuse { step: u8, evidence: MisuseEvidence },
    AbortedInvalid { step: u8, failure: Failure },
    Exhaustion,
}

impl ProtocolOutcome {
    pub fn invalid(failure: Failure) -> Self {
        ProtocolOutcome::AbortedInvalid {
            step: failure.step(),
            failure,
        }
    }

    pub fn is_granted(&self) -> bool {
        matches!(self, ProtocolOutcome::Granted { .. })
    }

    pub fn evidence(&self) -> Option<&MisuseEvidence> {
        match self {
            ProtocolOutcome::AbortedMisuse { evidence, .. } => Some(evidence),
            _ => None,
        }
    }
}
