use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, OtpValue, PublicKey};
use crate::identity::{verify_credential, Did};
use crate::ledger::{ContractAddress, EventKind, LedgerError, LedgerTx, LightClient, TxStatus};
use crate::merkle::{verify_proof, RootHash};
use crate::otp::otp_from_precursor;

use super::{Actor, Failure, MisuseEvidence, Network, SessionContext, WireMessage};

pub const DEFAULT_ABANDON_AFTER_BLOCKS: u64 = 10;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "state", content = "index", rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Initiated(u64),
    Invalidated(u64),
}

#[derive(Clone, PartialEq, Eq, Debug)]
struct OpenSession {
    index: u64,
    otp: OtpValue,
    tx: Option<LedgerTx>,
    opened_at: u64,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProviderUserRecord {
    pub did: Did,
    pub user_public_key: PublicKey,
    pub merkle_root: RootHash,
    pub last_submitted_otp: Option<OtpValue>,
    /// Transaction that published `last_submitted_otp`.
    pub last_tx: Option<Digest>,
    /// Last granted index within the current epoch; 0 before the first grant.
    pub session_id: u64,
    pub session_state: SessionState,
    /// Bumped by every re-registration; session ids restart per epoch.
    pub epoch: u32,
    open: Option<OpenSession>,
}

impl ProviderUserRecord {
    fn close_session(&mut self) {
        self.open = None;
        self.session_state = SessionState::Idle;
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ProviderAlert {
    pub did: Did,
    pub step: u8,
    pub evidence: MisuseEvidence,
}

/// A relying party with its own registry contract.
#[derive(Clone, Debug)]
pub struct ServiceProvider {
    name: String,
    contract: ContractAddress,
    trusted_issuers: Vec<PublicKey>,
    records: BTreeMap<Did, ProviderUserRecord>,
    alerts: Vec<ProviderAlert>,
    abandon_after_blocks: u64,
    light_client: LightClient,
}

impl ServiceProvider {
    /// Deploys the provider's registry. The deployment is sealed with the
    /// next block.
    pub fn deploy(net: &mut Network, name: &str) -> Result<Self, LedgerError> {
        let (contract, _) = net.ledger.deploy_registry(name)?;
        Ok(Self {
            name: name.to_owned(),
            contract,
            trusted_issuers: Vec::new(),
            records: BTreeMap::new(),
            alerts: Vec::new(),
            abandon_after_blocks: DEFAULT_ABANDON_AFTER_BLOCKS,
            light_client: LightClient::new(),
        })
    }

    pub fn trust_issuer(&mut self, issuer: PublicKey) {
        if !self.trusted_issuers.contains(&issuer) {
            self.trusted_issuers.push(issuer);
        }
    }

    pub fn with_abandon_after(mut self, blocks: u64) -> Self {
        self.abandon_after_blocks = blocks;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contract(&self) -> &ContractAddress {
        &self.contract
    }

    pub fn abandon_after_blocks(&self) -> u64 {
        self.abandon_after_blocks
    }

    pub fn record(&self, did: &Did) -> Option<&ProviderUserRecord> {
        self.records.get(did)
    }

    pub fn records(&self) -> impl Iterator<Item = &ProviderUserRecord> {
        self.records.values()
    }

    pub fn alerts(&self) -> &[ProviderAlert] {
        &self.alerts
    }

    pub fn context(&self, did: &Did) -> SessionContext {
        SessionContext {
            did: did.clone(),
            contract: self.contract.clone(),
        }
    }

    /// Bootstrap steps 9-11.
    pub fn handle_registration(
        &mut self,
        did: &Did,
        bytes: &[u8],
        revocations: &BTreeSet<Digest>,
        net: &mut Network,
    ) -> WireMessage {
        let Some(WireMessage::Register(req)) = WireMessage::decode(bytes) else {
            return reject(net, did, Failure::Malformed { step: 9 });
        };
        let ctx = self.context(did);
        let credential_ok = req.credential.did == *did
            && self
                .trusted_issuers
                .iter()
                .any(|pk| verify_credential(&req.credential, pk, revocations));
        if !credential_ok || !req.verify(&ctx) {
            return reject(net, did, Failure::RegistrationRejected);
        }
        net.transcript
            .record(did, 9, Actor::ServiceProvider, None, "credential verified");

        let previous = self.records.remove(did);
        let record = ProviderUserRecord {
            did: did.clone(),
            user_public_key: req.credential.user_public_key,
            merkle_root: req.merkle_root,
            last_submitted_otp: previous.as_ref().and_then(|r| r.last_submitted_otp),
            last_tx: previous.as_ref().and_then(|r| r.last_tx),
            session_id: 0,
            session_state: SessionState::Idle,
            epoch: previous.map_or(0, |r| r.epoch + 1),
            open: None,
        };
        self.records.insert(did.clone(), record);
        net.transcript
            .record(did, 10, Actor::ServiceProvider, None, "record stored");
        WireMessage::Ack {
            contract: self.contract.clone(),
        }
    }

    /// Replaces key and root on the strength of the old key's endorsement.
    pub fn handle_rekey(&mut self, did: &Did, bytes: &[u8], net: &mut Network) -> WireMessage {
        let Some(WireMessage::Rekey(req)) = WireMessage::decode(bytes) else {
            return reject(net, did, Failure::Malformed { step: 9 });
        };
        let ctx = self.context(did);
        let Some(record) = self.records.get_mut(did) else {
            return reject(net, did, Failure::UnknownUser);
        };
        if !req.verify(&ctx, &record.user_public_key) {
            return reject(net, did, Failure::RekeyRejected);
        }
        net.transcript.record(
            did,
            9,
            Actor::ServiceProvider,
            None,
            "endorsement by old key verified",
        );
        record.user_public_key = req.new_public_key;
        record.merkle_root = req.merkle_root;
        record.session_id = 0;
        record.epoch += 1;
        record.close_session();
        net.transcript
            .record(did, 10, Actor::ServiceProvider, None, "record rekeyed");
        WireMessage::Ack {
            contract: self.contract.clone(),
        }
    }

    /// Authentication steps 2-8.
    pub fn handle_auth1(&mut self, did: &Did, bytes: &[u8], net: &mut Network) -> WireMessage {
        let Some(WireMessage::Auth1(req)) = WireMessage::decode(bytes) else {
            return reject(net, did, Failure::Malformed { step: 2 });
        };
        let ctx = self.context(did);
        let threshold = self.abandon_after_blocks;
        let contract = self.contract.clone();
        let Some(record) = self.records.get_mut(did) else {
            return reject(net, did, Failure::UnknownUser);
        };

        // Step 2.
        if !req.verify(&ctx, &record.user_public_key) {
            return reject(net, did, Failure::BadSignature { step: 2 });
        }
        net.transcript
            .record(did, 2, Actor::ServiceProvider, None, "signature verified");

        // Step 3. The session index is the proof's leaf position.
        let index = req.proof.leaf_index as u64 + 1;
        if req.index != index || !verify_proof(&record.merkle_root, req.otp.as_bytes(), &req.proof)
        {
            return reject(net, did, Failure::NotAMember);
        }
        net.transcript.record(
            did,
            3,
            Actor::ServiceProvider,
            None,
            "merkle membership verified",
        );

        // Step 4.
        if let Some(open) = &record.open {
            if net.ledger.height().saturating_sub(open.opened_at) > threshold {
                record.close_session();
                net.transcript.record(
                    did,
                    4,
                    Actor::ServiceProvider,
                    None,
                    "stale session abandoned",
                );
            }
        }
        if record.open.is_some() || index != record.session_id + 1 {
            let evidence = record.last_tx.and_then(|id| {
                let (height, tx) = net.ledger.transaction(&id)?;
                Some(MisuseEvidence {
                    tx_id: id,
                    height: Some(height),
                    otp: tx.inserted_otp()?,
                    kind: EventKind::OtpInserted,
                    index: None,
                })
            });
            return match evidence {
                Some(evidence) => self.alert(net, did, 4, evidence),
                None => reject(net, did, Failure::SessionMismatch),
            };
        }
        net.transcript.record(
            did,
            4,
            Actor::ServiceProvider,
            None,
            format!("session {index} expected"),
        );

        // Step 5.
        let opened_at = net.ledger.height();
        record.open = Some(OpenSession {
            index,
            otp: req.otp,
            tx: None,
            opened_at,
        });
        record.session_state = SessionState::Initiated(index);
        let ticket = net.submit_insert_otp(&contract, req.otp, record.last_submitted_otp);
        net.transcript
            .record(did, 5, Actor::ServiceProvider, None, "insert_otp submitted");

        // Wait for the call to be executed and sealed. Only a submission
        // still held back after `threshold` seals is abandoned; once executed
        // it is sealed in due course.
        let mut seals = 0u64;
        let tx = loop {
            match net.delivered(ticket) {
                Some(Ok(tx)) if net.ledger.is_sealed(&tx.tx_id) => break Ok(tx.clone()),
                Some(Ok(_)) => {}
                Some(Err(_)) => break Err(()),
                None if seals >= threshold => {
                    net.cancel(ticket);
                    record.close_session();
                    return reject(net, did, Failure::Abandoned);
                }
                None => {}
            }
            net.seal();
            seals += 1;
        };
        let Ok(tx) = tx else {
            record.close_session();
            return reject(net, did, Failure::ContractStateFault);
        };
        let height = net.ledger.transaction(&tx.tx_id).map(|(h, _)| h);
        net.transcript.record(
            did,
            6,
            Actor::Ledger,
            None,
            format!("{:?} at height {}", tx.status, height.unwrap_or(0)),
        );

        // Step 6.
        match tx.status {
            TxStatus::RejectedReuse => {
                record.close_session();
                let evidence = MisuseEvidence {
                    tx_id: tx.tx_id,
                    height,
                    otp: req.otp,
                    kind: EventKind::MisuseAttempt,
                    index: Some(index),
                };
                return self.alert(net, did, 6, evidence);
            }
            TxStatus::RejectedState => {
                record.close_session();
                return reject(net, did, Failure::ContractStateFault);
            }
            TxStatus::Success => {}
        }

        // Step 7.
        record.last_submitted_otp = Some(req.otp);
        record.last_tx = Some(tx.tx_id);
        if let Some(open) = record.open.as_mut() {
            open.tx = Some(tx.clone());
        }
        net.transcript
            .record(did, 7, Actor::ServiceProvider, None, "record updated");

        WireMessage::Receipt { otp: req.otp, tx }
    }

    /// Authentication steps 13-17.
    pub fn handle_auth2(&mut self, did: &Did, bytes: &[u8], net: &mut Network) -> WireMessage {
        let Some(WireMessage::Auth2(req)) = WireMessage::decode(bytes) else {
            return reject(net, did, Failure::Malformed { step: 13 });
        };
        let ctx = self.context(did);
        if self.light_client.sync(&net.ledger).is_err() {
            return reject(net, did, Failure::TxUnverified);
        }
        let Some(record) = self.records.get_mut(did) else {
            return reject(net, did, Failure::UnknownUser);
        };

        // Step 13.
        if !req.verify(&ctx, &record.user_public_key) {
            return reject(net, did, Failure::BadSignature { step: 13 });
        }
        net.transcript
            .record(did, 13, Actor::ServiceProvider, None, "signature verified");

        // Step 14.
        let open = match &record.open {
            Some(open) if open.tx.as_ref() == Some(&req.tx) => open.clone(),
            _ => return reject(net, did, Failure::NoOpenSession),
        };
        net.transcript.record(
            did,
            14,
            Actor::ServiceProvider,
            None,
            format!("session {} open", open.index),
        );

        // Step 15.
        if otp_from_precursor(&req.precursor) != open.otp {
            record.close_session();
            return reject(net, did, Failure::PrecursorMismatch);
        }
        net.transcript
            .record(did, 15, Actor::ServiceProvider, None, "precursor verified");

        // Step 16.
        if req.tx.inserted_otp() != Some(open.otp)
            || !self.light_client.verify(&req.tx, &req.inclusion)
        {
            record.close_session();
            return reject(net, did, Failure::TxUnverified);
        }
        net.transcript
            .record(did, 16, Actor::ServiceProvider, None, "inclusion verified");

        // Step 17.
        record.session_id = open.index;
        record.open = None;
        record.session_state = SessionState::Invalidated(open.index);
        net.transcript.record(
            did,
            17,
            Actor::ServiceProvider,
            None,
            format!("granted session {}", open.index),
        );
        WireMessage::Grant { index: open.index }
    }

    fn alert(
        &mut self,
        net: &mut Network,
        did: &Did,
        step: u8,
        evidence: MisuseEvidence,
    ) -> WireMessage {
        net.transcript.record(
            did,
            step,
            Actor::ServiceProvider,
            None,
            format!("misuse alert, evidence tx {}", evidence.tx_id),
        );
        self.alerts.push(ProviderAlert {
            did: did.clone(),
            step,
            evidence,
        });
        WireMessage::Alert {
            step,
            evidence: Some(evidence),
        }
    }
}

fn reject(net: &mut Network, did: &Did, failure: Failure) -> WireMessage {
    net.transcript.record(
        did,
        failure.step(),
        Actor::ServiceProvider,
        None,
        format!("rejected: {failure}"),
    );
    WireMessage::Reject { failure }
}
