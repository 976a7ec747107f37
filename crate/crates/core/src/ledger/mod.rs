//! Single-writer simulated chain: per-provider OTP registries, FIFO block
//! sealing under a gas limit, transaction inclusion proofs and a header-only
//! light client.
//!
//! Contract calls execute when submitted; the resulting transaction (success
//! or rejection, gas charged either way) waits in the pending queue until a
//! block seals it. Events become visible once their transaction is sealed.

mod gas;
mod registry;

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Writer;
use crate::crypto::{hash, hash_concat, Digest, OtpValue};
use crate::merkle::{verify_proof, MerkleProof, MerkleTree, RootHash};

pub use gas::{
    max_auth_per_second, state_storage_bytes, ChainProfile, CONSORTIUM_INVOCATIONS_PER_SECOND,
    CONSORTIUM_REFERENCE_GAS, DEPLOY_GAS, INSERT_OTP_GAS,
};
pub use registry::{ContractAddress, RegistryContract, TxStatus};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("no registry deployed at {0}")]
    UnknownContract(ContractAddress),
    #[error("transaction {0} is unknown")]
    UnknownTx(Digest),
    #[error("transaction {0} is not sealed yet")]
    TxPending(Digest),
    #[error("transaction needs {gas} gas but blocks hold at most {limit}")]
    ExceedsBlockGasLimit { gas: u64, limit: u64 },
    #[error("chain integrity violated at height {0}")]
    Integrity(u64),
    #[error("malformed chain dump line {line}: {message}")]
    Dump { line: usize, message: String },
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TxPayload {
    DeployRegistry {
        owner: String,
    },
    InsertOtp {
        new_otp: OtpValue,
        prev_otp: Option<OtpValue>,
    },
}

impl TxPayload {
    fn encode_into(&self, w: &mut Writer) {
        match self {
            TxPayload::DeployRegistry { owner } => {
                w.u8(0).str(owner);
            }
            TxPayload::InsertOtp { new_otp, prev_otp } => {
                w.u8(1).raw(new_otp.as_bytes());
                match prev_otp {
                    Some(prev) => w.u8(1).raw(prev.as_bytes()),
                    None => w.u8(0),
                };
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct LedgerTx {
    pub tx_id: Digest,
    /// Submission sequence number; salts the id so identical calls differ.
    pub nonce: u64,
    pub contract: ContractAddress,
    pub payload: TxPayload,
    pub gas_used: u64,
    pub status: TxStatus,
}

impl LedgerTx {
    fn compute_id(
        nonce: u64,
        contract: &ContractAddress,
        payload: &TxPayload,
        gas_used: u64,
        status: TxStatus,
    ) -> Digest {
        let mut w = Writer::tagged("chainotp/tx/v1");
        w.str(&contract.0);
        payload.encode_into(&mut w);
        w.u64(gas_used).u8(status as u8).u64(nonce);
        hash(&w.finish())
    }

    /// The id commits to every other field.
    pub fn id_is_consistent(&self) -> bool {
        self.tx_id
            == Self::compute_id(
                self.nonce,
                &self.contract,
                &self.payload,
                self.gas_used,
                self.status,
            )
    }

    pub fn inserted_otp(&self) -> Option<OtpValue> {
        match self.payload {
            TxPayload::InsertOtp { new_otp, .. } => Some(new_otp),
            TxPayload::DeployRegistry { .. } => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    pub parent_hash: Digest,
    pub tx_root: RootHash,
}

impl BlockHeader {
    pub fn hash(&self) -> Digest {
        hash_concat(&[
            b"chainotp/header/v1",
            &self.height.to_le_bytes(),
            self.parent_hash.as_bytes(),
            self.tx_root.0.as_bytes(),
        ])
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct LedgerBlock {
    pub height: u64,
    pub parent_hash: Digest,
    pub tx_root: RootHash,
    pub txs: Vec<LedgerTx>,
}

impl LedgerBlock {
    pub fn header(&self) -> BlockHeader {
        BlockHeader {
            height: self.height,
            parent_hash: self.parent_hash,
            tx_root: self.tx_root,
        }
    }

    pub fn gas_used(&self) -> u64 {
        self.txs.iter().map(|t| t.gas_used).sum()
    }
}

/// Merkle tree over tx ids, padded to a power of two (at least 2) by
/// repeating the last id.
fn tx_tree(txs: &[LedgerTx]) -> Option<MerkleTree> {
    let last = txs.last()?;
    let width = txs.len().next_power_of_two().max(2);
    let mut leaves: Vec<Digest> = txs.iter().map(|t| t.tx_id).collect();
    leaves.resize(width, last.tx_id);
    Some(MerkleTree::build(&leaves).expect("padded to a power of two"))
}

fn tx_root(txs: &[LedgerTx]) -> RootHash {
    tx_tree(txs).map_or(RootHash(Digest::ZERO), |t| t.root())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RegistryDeployed,
    OtpInserted,
    MisuseAttempt,
    StateFault,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub height: u64,
    pub kind: EventKind,
    pub contract: ContractAddress,
    pub otp: Option<OtpValue>,
    pub tx_id: Digest,
}

impl LedgerEvent {
    fn from_tx(height: u64, tx: &LedgerTx) -> Self {
        let kind = match (&tx.payload, tx.status) {
            (TxPayload::DeployRegistry { .. }, _) => EventKind::RegistryDeployed,
            (_, TxStatus::Success) => EventKind::OtpInserted,
            (_, TxStatus::RejectedReuse) => EventKind::MisuseAttempt,
            (_, TxStatus::RejectedState) => EventKind::StateFault,
        };
        Self {
            height,
            kind,
            contract: tx.contract.clone(),
            otp: tx.inserted_otp(),
            tx_id: tx.tx_id,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct InclusionProof {
    pub block_height: u64,
    pub merkle_proof: MerkleProof,
}

#[derive(Clone, Debug)]
pub struct Ledger {
    profile: ChainProfile,
    blocks: Vec<LedgerBlock>,
    pending: VecDeque<LedgerTx>,
    registries: BTreeMap<ContractAddress, RegistryContract>,
    /// tx id -> (height, position in block)
    sealed_index: HashMap<Digest, (u64, usize)>,
    events: Vec<LedgerEvent>,
    next_nonce: u64,
}

impl Ledger {
    pub fn new(profile: ChainProfile) -> Self {
        Self {
            profile,
            blocks: Vec::new(),
            pending: VecDeque::new(),
            registries: BTreeMap::new(),
            sealed_index: HashMap::new(),
            events: Vec::new(),
            next_nonce: 0,
        }
    }

    pub fn profile(&self) -> &ChainProfile {
        &self.profile
    }

    /// Applies to blocks sealed from now on.
    pub fn set_profile(&mut self, profile: ChainProfile) {
        self.profile = profile;
    }

    /// Height of the last sealed block; 0 before the first seal.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn blocks(&self) -> &[LedgerBlock] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&LedgerBlock> {
        height
            .checked_sub(1)
            .and_then(|i| self.blocks.get(usize::try_from(i).ok()?))
    }

    pub fn headers(&self) -> Vec<BlockHeader> {
        self.blocks.iter().map(LedgerBlock::header).collect()
    }

    pub fn pending(&self) -> impl Iterator<Item = &LedgerTx> {
        self.pending.iter()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn registry(&self, address: &ContractAddress) -> Option<&RegistryContract> {
        self.registries.get(address)
    }

    fn push_tx(
        &mut self,
        contract: ContractAddress,
        payload: TxPayload,
        gas_used: u64,
        status: TxStatus,
    ) -> LedgerTx {
        let nonce = self.next_nonce;
        self.next_nonce += 1;
        let tx = LedgerTx {
            tx_id: LedgerTx::compute_id(nonce, &contract, &payload, gas_used, status),
            nonce,
            contract,
            payload,
            gas_used,
            status,
        };
        self.pending.push_back(tx.clone());
        tx
    }

    fn check_gas(&self, gas: u64) -> Result<(), LedgerError> {
        if gas > self.profile.block_gas_limit {
            return Err(LedgerError::ExceedsBlockGasLimit {
                gas,
                limit: self.profile.block_gas_limit,
            });
        }
        Ok(())
    }

    /// Deploys a fresh, empty registry owned by `owner`. The contract is
    /// usable immediately; its deployment transaction is sealed with the next
    /// block.
    pub fn deploy_registry(
        &mut self,
        owner: &str,
    ) -> Result<(ContractAddress, LedgerTx), LedgerError> {
        self.check_gas(DEPLOY_GAS)?;
        let seed = hash_concat(&[
            b"registry",
            owner.as_bytes(),
            &self.next_nonce.to_le_bytes(),
        ]);
        let address = ContractAddress(format!("0x{}", hex::encode(&seed.as_bytes()[..20])));
        self.registries
            .insert(address.clone(), RegistryContract::new(address.clone()));
        let tx = self.push_tx(
            address.clone(),
            TxPayload::DeployRegistry {
                owner: owner.to_owned(),
            },
            DEPLOY_GAS,
            TxStatus::Success,
        );
        Ok((address, tx))
    }

    /// Calls `insert_otp` on the registry at `contract`. Rejected calls are
    /// still recorded and charged.
    pub fn submit_insert_otp(
        &mut self,
        contract: &ContractAddress,
        new_otp: OtpValue,
        prev_otp: Option<OtpValue>,
    ) -> Result<LedgerTx, LedgerError> {
        self.check_gas(INSERT_OTP_GAS)?;
        let registry = self
            .registries
            .get_mut(contract)
            .ok_or_else(|| LedgerError::UnknownContract(contract.clone()))?;
        let status = registry.insert_otp(new_otp, prev_otp);
        Ok(self.push_tx(
            contract.clone(),
            TxPayload::InsertOtp { new_otp, prev_otp },
            INSERT_OTP_GAS,
            status,
        ))
    }

    /// Seals pending transactions in FIFO order until the next one would
    /// exceed the block gas limit; the rest wait for later blocks.
    pub fn seal_block(&mut self) -> &LedgerBlock {
        let limit = self.profile.block_gas_limit;
        let mut gas = 0u64;
        let mut txs = Vec::new();
        while let Some(next) = self.pending.front() {
            if gas + next.gas_used > limit {
                break;
            }
            gas += next.gas_used;
            txs.push(self.pending.pop_front().expect("front exists"));
        }
        let height = self.height() + 1;
        let parent_hash = self
            .blocks
            .last()
            .map_or(Digest::ZERO, |b| b.header().hash());
        for (pos, tx) in txs.iter().enumerate() {
            self.sealed_index.insert(tx.tx_id, (height, pos));
            self.events.push(LedgerEvent::from_tx(height, tx));
        }
        self.blocks.push(LedgerBlock {
            height,
            parent_hash,
            tx_root: tx_root(&txs),
            txs,
        });
        self.blocks.last().expect("just pushed")
    }

    pub fn is_sealed(&self, tx_id: &Digest) -> bool {
        self.sealed_index.contains_key(tx_id)
    }

    /// Sealed transaction and its height.
    pub fn transaction(&self, tx_id: &Digest) -> Option<(u64, &LedgerTx)> {
        let &(height, pos) = self.sealed_index.get(tx_id)?;
        Some((height, &self.block(height)?.txs[pos]))
    }

    pub fn inclusion_proof(&self, tx_id: &Digest) -> Result<InclusionProof, LedgerError> {
        let Some(&(height, pos)) = self.sealed_index.get(tx_id) else {
            if self.pending.iter().any(|t| &t.tx_id == tx_id) {
                return Err(LedgerError::TxPending(*tx_id));
            }
            return Err(LedgerError::UnknownTx(*tx_id));
        };
        let block = self.block(height).expect("indexed block exists");
        let tree = tx_tree(&block.txs).expect("indexed block is non-empty");
        Ok(InclusionProof {
            block_height: height,
            merkle_proof: tree.prove(pos).expect("position within block"),
        })
    }

    pub fn verify_chain(&self) -> Result<(), LedgerError> {
        verify_blocks(&self.blocks)
    }

    /// One JSON object per block, in height order.
    pub fn dump(&self) -> String {
        self.blocks
            .iter()
            .map(|b| serde_json::to_string(b).expect("blocks serialize") + "\n")
            .collect()
    }
}

/// Recomputes every `tx_root` and `parent_hash`, and checks each tx id.
pub fn verify_blocks(blocks: &[LedgerBlock]) -> Result<(), LedgerError> {
    let mut parent = Digest::ZERO;
    for (i, block) in blocks.iter().enumerate() {
        let ok = block.height == i as u64 + 1
            && block.parent_hash == parent
            && block.tx_root == tx_root(&block.txs)
            && block.txs.iter().all(LedgerTx::id_is_consistent);
        if !ok {
            return Err(LedgerError::Integrity(block.height));
        }
        parent = block.header().hash();
    }
    Ok(())
}

pub fn parse_dump(text: &str) -> Result<Vec<LedgerBlock>, LedgerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LedgerError::Dump {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Checks that `tx` sits under the `tx_root` of the stored header at the
/// proof's height. Unknown heights and tampered transactions fail.
pub fn light_verify(headers: &[BlockHeader], tx: &LedgerTx, proof: &InclusionProof) -> bool {
    let Some(header) = headers.iter().find(|h| h.height == proof.block_height) else {
        return false;
    };
    tx.id_is_consistent() && verify_proof(&header.tx_root, tx.tx_id.as_bytes(), &proof.merkle_proof)
}

/// Header-only view of the chain.
#[derive(Clone, Debug, Default)]
pub struct LightClient {
    headers: Vec<BlockHeader>,
}

impl LightClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    /// Pulls headers past the local tip, checking that each links to its
    /// parent. Returns how many were added.
    pub fn sync(&mut self, ledger: &Ledger) -> Result<usize, LedgerError> {
        let start = self.headers.len() as u64;
        let mut added = 0;
        for height in start + 1..=ledger.height() {
            let header = ledger.block(height).expect("height in range").header();
            let parent = self.headers.last().map_or(Digest::ZERO, BlockHeader::hash);
            if header.parent_hash != parent || header.height != height {
                return Err(LedgerError::Integrity(height));
            }
            self.headers.push(header);
            added += 1;
        }
        Ok(added)
    }

    pub fn verify(&self, tx: &LedgerTx, proof: &InclusionProof) -> bool {
        light_verify(&self.headers, tx, proof)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn otp(b: u8) -> OtpValue {
        OtpValue::from_bytes([b; 16])
    }

    fn chain_with_registry() -> (Ledger, ContractAddress) {
        let mut ledger = Ledger::new(ChainProfile::mainnet_like());
        let (addr, _) = ledger.deploy_registry("provider-a").unwrap();
        ledger.seal_block();
        (ledger, addr)
    }

    #[test]
    fn deploy_costs_292k_and_is_sealed_next() {
        let mut ledger = Ledger::new(ChainProfile::mainnet_like());
        let (addr, tx) = ledger.deploy_registry("p").unwrap();
        assert_eq!(tx.gas_used, 292_000);
        assert_eq!(ledger.registry(&addr).unwrap().len(), 0);
        assert!(!ledger.is_sealed(&tx.tx_id));
        let block = ledger.seal_block();
        assert_eq!(block.height, 1);
        assert_eq!(block.txs, vec![tx.clone()]);
        assert!(ledger.is_sealed(&tx.tx_id));
        assert_eq!(ledger.events()[0].kind, EventKind::RegistryDeployed);
    }

    #[test]
    fn providers_get_independent_registries() {
        let mut ledger = Ledger::new(ChainProfile::mainnet_like());
        let (a, _) = ledger.deploy_registry("a").unwrap();
        let (b, _) = ledger.deploy_registry("b").unwrap();
        assert_ne!(a, b);
        ledger.submit_insert_otp(&a, otp(1), None).unwrap();
        assert_eq!(ledger.registry(&a).unwrap().len(), 1);
        assert_eq!(ledger.registry(&b).unwrap().len(), 0);
    }

    #[test]
    fn insert_reuse_and_replace() {
        let (mut ledger, addr) = chain_with_registry();
        let tx = ledger.submit_insert_otp(&addr, otp(1), None).unwrap();
        assert_eq!((tx.status, tx.gas_used), (TxStatus::Success, 48_000));
        assert_eq!(ledger.registry(&addr).unwrap().len(), 1);

        let reuse = ledger.submit_insert_otp(&addr, otp(1), None).unwrap();
        assert_eq!(reuse.status, TxStatus::RejectedReuse);
        assert_eq!(reuse.gas_used, 48_000);
        assert_eq!(ledger.registry(&addr).unwrap().len(), 1);

        ledger
            .submit_insert_otp(&addr, otp(2), Some(otp(1)))
            .unwrap();
        let reg = ledger.registry(&addr).unwrap();
        assert!(reg.contains(&otp(2)) && !reg.contains(&otp(1)));
        assert_eq!(reg.len(), 1);

        let fault = ledger
            .submit_insert_otp(&addr, otp(3), Some(otp(7)))
            .unwrap();
        assert_eq!(fault.status, TxStatus::RejectedState);

        let block = ledger.seal_block().clone();
        assert_eq!(block.txs.len(), 4);
        let kinds: Vec<_> = ledger.events()[1..].iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [
                EventKind::OtpInserted,
                EventKind::MisuseAttempt,
                EventKind::OtpInserted,
                EventKind::StateFault
            ]
        );
        assert_eq!(ledger.events()[2].tx_id, reuse.tx_id);
        assert_eq!(ledger.events()[2].height, 2);
    }

    #[test]
    fn unknown_contract_is_an_error() {
        let mut ledger = Ledger::new(ChainProfile::mainnet_like());
        let bogus = ContractAddress("0xdead".into());
        assert_eq!(
            ledger.submit_insert_otp(&bogus, otp(1), None),
            Err(LedgerError::UnknownContract(bogus))
        );
    }

    #[test]
    fn gas_limit_spills_to_next_block() {
        let (mut ledger, addr) = chain_with_registry();
        ledger.set_profile(ChainProfile::new("tight", 100_000, 1.0).unwrap());
        for b in 1..=3 {
            ledger.submit_insert_otp(&addr, otp(b), None).unwrap();
        }
        assert_eq!(ledger.seal_block().txs.len(), 2);
        assert_eq!(ledger.seal_block().txs.len(), 1);
        assert_eq!(ledger.seal_block().txs.len(), 0);
        assert!(ledger.blocks()[1..].iter().all(|b| b.gas_used() <= 100_000));
        assert_eq!(
            ledger.deploy_registry("x").unwrap_err(),
            LedgerError::ExceedsBlockGasLimit {
                gas: 292_000,
                limit: 100_000
            }
        );
    }

    #[test]
    fn blocks_chain_and_roots_recompute() {
        let (mut ledger, addr) = chain_with_registry();
        ledger.submit_insert_otp(&addr, otp(1), None).unwrap();
        ledger
            .submit_insert_otp(&addr, otp(2), Some(otp(1)))
            .unwrap();
        let b = ledger.seal_block().clone();
        assert_eq!(b.height, 2);
        assert_eq!(b.parent_hash, ledger.block(1).unwrap().header().hash());
        ledger.seal_block();
        ledger.verify_chain().unwrap();

        let mut blocks = ledger.blocks().to_vec();
        blocks[1].txs.swap(0, 1);
        assert_eq!(verify_blocks(&blocks), Err(LedgerError::Integrity(2)));
        let mut blocks = ledger.blocks().to_vec();
        blocks[0].parent_hash = hash(b"x");
        assert_eq!(verify_blocks(&blocks), Err(LedgerError::Integrity(1)));
    }

    #[test]
    fn inclusion_proofs_bind_to_their_tx() {
        let (mut ledger, addr) = chain_with_registry();
        let txs: Vec<LedgerTx> = (1..=4)
            .map(|b| ledger.submit_insert_otp(&addr, otp(b), None).unwrap())
            .collect();
        assert_eq!(
            ledger.inclusion_proof(&txs[0].tx_id),
            Err(LedgerError::TxPending(txs[0].tx_id))
        );
        ledger.seal_block();
        let mut light = LightClient::new();
        assert_eq!(light.sync(&ledger).unwrap(), 2);
        for (i, tx) in txs.iter().enumerate() {
            let proof = ledger.inclusion_proof(&tx.tx_id).unwrap();
            assert_eq!(proof.block_height, 2);
            for (j, other) in txs.iter().enumerate() {
                assert_eq!(light.verify(other, &proof), i == j);
            }
        }
        let unknown = hash(b"nope");
        assert_eq!(
            ledger.inclusion_proof(&unknown),
            Err(LedgerError::UnknownTx(unknown))
        );
    }

    #[test]
    fn light_verify_rejects_missing_headers_and_tampered_txs() {
        let (mut ledger, addr) = chain_with_registry();
        let tx = ledger.submit_insert_otp(&addr, otp(1), None).unwrap();
        ledger.seal_block();
        let proof = ledger.inclusion_proof(&tx.tx_id).unwrap();
        let headers = ledger.headers();
        assert!(light_verify(&headers, &tx, &proof));
        assert!(!light_verify(&headers[..1], &tx, &proof));
        let mut forged = tx.clone();
        forged.status = TxStatus::RejectedReuse;
        assert!(!light_verify(&headers, &forged, &proof));
    }

    #[test]
    fn single_tx_block_is_padded() {
        let (mut ledger, addr) = chain_with_registry();
        let tx = ledger.submit_insert_otp(&addr, otp(1), None).unwrap();
        ledger.seal_block();
        let proof = ledger.inclusion_proof(&tx.tx_id).unwrap();
        assert_eq!(proof.merkle_proof.depth(), 1);
        assert!(light_verify(&ledger.headers(), &tx, &proof));
    }

    #[test]
    fn dump_round_trips_and_verifies() {
        let (mut ledger, addr) = chain_with_registry();
        ledger.submit_insert_otp(&addr, otp(1), None).unwrap();
        ledger.seal_block();
        ledger.seal_block();
        let text = ledger.dump();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.starts_with("{\"height\":")));
        let parsed = parse_dump(&text).unwrap();
        assert_eq!(parsed, ledger.blocks());
        verify_blocks(&parsed).unwrap();
        assert!(matches!(
            parse_dump("{\"height\":1}\n"),
            Err(LedgerError::Dump { line: 1, .. })
        ));
    }

    #[test]
    fn registry_payloads_carry_only_otps() {
        let (mut ledger, addr) = chain_with_registry();
        let tx = ledger
            .submit_insert_otp(&addr, otp(1), Some(otp(2)))
            .unwrap();
        let json = serde_json::to_value(&tx.payload).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["new_otp", "op", "prev_otp"]);
    }
}
