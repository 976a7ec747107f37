use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Digest};
use crate::identity::Did;

use super::WireMessage;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Bootstrap,
    Authentication,
    Reinitialization,
    Attack,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Client,
    Authenticator,
    IdentityProvider,
    ServiceProvider,
    Ledger,
    Adversary,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub phase: Phase,
    pub user: String,
    pub step: u8,
    pub actor: Actor,
    /// Hash of the wire bytes, for steps that send a message.
    pub message: Option<Digest>,
    pub outcome: String,
}

/// Ordered log of protocol steps across all users.
#[derive(Clone, Debug)]
pub struct Transcript {
    phase: Phase,
    entries: Vec<TranscriptEntry>,
}

impl Default for Transcript {
    fn default() -> Self {
        Self {
            phase: Phase::Bootstrap,
            entries: Vec::new(),
        }
    }
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Returns the previous phase.
    pub fn set_phase(&mut self, phase: Phase) -> Phase {
        std::mem::replace(&mut self.phase, phase)
    }

    pub fn record(
        &mut self,
        user: &Did,
        step: u8,
        actor: Actor,
        message: Option<&[u8]>,
        outcome: impl Into<String>,
    ) {
        self.entries.push(TranscriptEntry {
            seq: self.entries.len() as u64,
            phase: self.phase,
            user: user.to_string(),
            step,
            actor,
            message: message.map(hash),
            outcome: outcome.into(),
        });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("transcript serializes")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Client,
    Provider,
}

/// One delivered message. An observer outside the channel sees only the
/// metadata and opaque bytes, which it can copy but not alter meaningfully.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChannelRecord {
    pub seq: u64,
    pub from: Endpoint,
    pub step: u8,
    bytes: Vec<u8>,
}

impl ChannelRecord {
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// Authenticated, ordered, confidential link between one client and one
/// provider. Endpoints are fixed at open time.
#[derive(Clone, Debug)]
pub struct SecureChannel {
    client: Did,
    provider: String,
    records: Vec<ChannelRecord>,
}

impl SecureChannel {
    pub fn open(client: Did, provider: &str) -> Self {
        Self {
            client,
            provider: provider.to_owned(),
            records: Vec::new(),
        }
    }

    pub fn client(&self) -> &Did {
        &self.client
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    /// Encodes and logs `msg`, returning the bytes handed to the peer.
    pub fn send(&mut self, from: Endpoint, step: u8, msg: &WireMessage) -> Vec<u8> {
        let bytes = msg.encode();
        self.records.push(ChannelRecord {
            seq: self.records.len() as u64,
            from,
            step,
            bytes: bytes.clone(),
        });
        bytes
    }

    pub fn records(&self) -> &[ChannelRecord] {
        &self.records
    }

    /// The most recent record sent at `step`.
    pub fn last_at_step(&self, step: u8) -> Option<&ChannelRecord> {
        self.records.iter().rev().find(|r| r.step == step)
    }
}
