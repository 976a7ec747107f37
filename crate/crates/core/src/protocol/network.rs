use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::OtpValue;
use crate::identity::{DidRegistry, IdentityProvider};
use crate::ledger::{ChainProfile, ContractAddress, Ledger, LedgerError, LedgerTx};

use super::Transcript;

pub const DID_SCHEME: &str = "chainotp";

/// Handle for one provider submission passing through the relay.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Ticket(u64);

#[derive(Clone, Debug)]
struct Held {
    ticket: Ticket,
    contract: ContractAddress,
    new_otp: OtpValue,
    prev_otp: Option<OtpValue>,
    remaining: u64,
}

/// Path from providers to the ledger. A delay adversary sitting on it can
/// hold submissions back for a number of sealed blocks.
#[derive(Clone, Debug, Default)]
struct Relay {
    delay_blocks: u64,
    next_ticket: u64,
    held: Vec<Held>,
    delivered: BTreeMap<Ticket, Result<LedgerTx, LedgerError>>,
}

/// The ledger plus everything between it and the actors.
#[derive(Clone, Debug)]
pub struct Network {
    pub ledger: Ledger,
    pub transcript: Transcript,
    relay: Relay,
}

impl Network {
    pub fn new(profile: ChainProfile) -> Self {
        Self {
            ledger: Ledger::new(profile),
            transcript: Transcript::new(),
            relay: Relay::default(),
        }
    }

    /// Holds every later submission for `blocks` seals before it reaches the
    /// ledger.
    pub fn set_relay_delay(&mut self, blocks: u64) {
        self.relay.delay_blocks = blocks;
    }

    pub fn relay_delay(&self) -> u64 {
        self.relay.delay_blocks
    }

    pub fn held_submissions(&self) -> usize {
        self.relay.held.len()
    }

    pub fn submit_insert_otp(
        &mut self,
        contract: &ContractAddress,
        new_otp: OtpValue,
        prev_otp: Option<OtpValue>,
    ) -> Ticket {
        let ticket = Ticket(self.relay.next_ticket);
        self.relay.next_ticket += 1;
        if self.relay.delay_blocks == 0 {
            let res = self.ledger.submit_insert_otp(contract, new_otp, prev_otp);
            self.relay.delivered.insert(ticket, res);
        } else {
            self.relay.held.push(Held {
                ticket,
                contract: contract.clone(),
                new_otp,
                prev_otp,
                remaining: self.relay.delay_blocks,
            });
        }
        ticket
    }

    /// Seals one block, then releases held submissions whose delay ran out;
    /// those are included from the next block on. Returns the new height.
    pub fn seal(&mut self) -> u64 {
        let height = self.ledger.seal_block().height;
        let mut still_held = Vec::new();
        for mut h in std::mem::take(&mut self.relay.held) {
            h.remaining -= 1;
            if h.remaining == 0 {
                let res = self
                    .ledger
                    .submit_insert_otp(&h.contract, h.new_otp, h.prev_otp);
                self.relay.delivered.insert(h.ticket, res);
            } else {
                still_held.push(h);
            }
        }
        self.relay.held = still_held;
        height
    }

    /// Execution result once the submission has reached the ledger.
    pub fn delivered(&self, ticket: Ticket) -> Option<&Result<LedgerTx, LedgerError>> {
        self.relay.delivered.get(&ticket)
    }

    /// Withdraws a submission that has not reached the ledger yet. Returns
    /// whether anything was withdrawn.
    pub fn cancel(&mut self, ticket: Ticket) -> bool {
        let before = self.relay.held.len();
        self.relay.held.retain(|h| h.ticket != ticket);
        self.relay.held.len() != before
    }
}

/// Shared environment for a simulation run.
#[derive(Debug)]
pub struct World {
    pub rng: ChaCha20Rng,
    pub dids: DidRegistry,
    pub issuer: IdentityProvider,
    pub net: Network,
}

impl World {
    pub fn new(seed: u64, profile: ChainProfile) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut dids = DidRegistry::new();
        let issuer = IdentityProvider::new(&mut dids, DID_SCHEME, &mut rng);
        Self {
            rng,
            dids,
            issuer,
            net: Network::new(profile),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn otp(b: u8) -> OtpValue {
        OtpValue::from_bytes([b; 16])
    }

    fn net_with_contract() -> (Network, ContractAddress) {
        let mut net = Network::new(ChainProfile::mainnet_like());
        let (addr, _) = net.ledger.deploy_registry("p").unwrap();
        net.seal();
        (net, addr)
    }

    #[test]
    fn undelayed_submission_executes_at_once() {
        let (mut net, addr) = net_with_contract();
        let t = net.submit_insert_otp(&addr, otp(1), None);
        assert!(net.delivered(t).unwrap().is_ok());
        assert!(net.ledger.registry(&addr).unwrap().contains(&otp(1)));
    }

    #[test]
    fn delayed_submission_waits_for_seals() {
        let (mut net, addr) = net_with_contract();
        net.set_relay_delay(2);
        let t = net.submit_insert_otp(&addr, otp(1), None);
        assert!(net.delivered(t).is_none());
        net.seal();
        assert!(net.delivered(t).is_none());
        net.seal();
        let tx = net.delivered(t).unwrap().clone().unwrap();
        assert!(!net.ledger.is_sealed(&tx.tx_id));
        net.seal();
        assert!(net.ledger.is_sealed(&tx.tx_id));
    }

    #[test]
    fn cancelled_submission_never_lands() {
        let (mut net, addr) = net_with_contract();
        net.set_relay_delay(3);
        let t = net.submit_insert_otp(&addr, otp(1), None);
        net.seal();
        assert!(net.cancel(t));
        for _ in 0..5 {
            net.seal();
        }
        assert!(net.delivered(t).is_none());
        assert!(net.ledger.registry(&addr).unwrap().is_empty());
        assert!(!net.cancel(t));
    }
}
