//! Adversaries run against the protocol actors.
//!
//! Each attack works through the same provider entry points and ledger as an
//! honest client, so whatever it manages to do leaves the same traces.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, KeyPair, OtpValue};
use crate::identity::Did;
use crate::ledger::{EventKind, LightClient};
use crate::otp::{AuthenticatorState, ClientWallet};
use crate::protocol::{
    check_misuse, drive_authentication, Actor, ChannelRecord, ClientOverrides, ClientSide,
    Endpoint, Enrollment, Failure, MisuseEvidence, Phase, PrecursorSource, ProtocolOutcome,
    SecureChannel, ServiceProvider, WireMessage, World,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPosition {
    None,
    Observe,
    Delay,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct AdversaryCapability {
    /// Secret key, OTPs and tree, as copied off the client.
    pub has_client_secrets: bool,
    /// The seed, as copied off the authenticator.
    pub has_authenticator: bool,
    pub channel_position: ChannelPosition,
}

impl AdversaryCapability {
    /// Every combination short of full compromise.
    pub fn enumerate() -> Vec<Self> {
        let mut out = Vec::new();
        for has_client_secrets in [false, true] {
            for has_authenticator in [false, true] {
                for channel_position in [
                    ChannelPosition::None,
                    ChannelPosition::Observe,
                    ChannelPosition::Delay,
                ] {
                    let cap = Self {
                        has_client_secrets,
                        has_authenticator,
                        channel_position,
                    };
                    if !cap.is_full_compromise() {
                        out.push(cap);
                    }
                }
            }
        }
        out
    }

    pub fn is_full_compromise(&self) -> bool {
        self.has_client_secrets && self.has_authenticator
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub authenticated: bool,
    pub detected: bool,
    pub evidence: Option<Digest>,
    pub steps_reached: u8,
}

/// On-chain artifacts at the provider's contract since `from_event`.
fn new_artifact(world: &World, provider: &ServiceProvider, from_event: usize) -> Option<Digest> {
    let sealed = world.net.ledger.events()[from_event..]
        .iter()
        .find(|ev| {
            &ev.contract == provider.contract()
                && matches!(ev.kind, EventKind::OtpInserted | EventKind::MisuseAttempt)
        })
        .map(|ev| ev.tx_id);
    sealed.or_else(|| {
        world
            .net
            .ledger
            .pending()
            .find(|tx| &tx.contract == provider.contract() && tx.inserted_otp().is_some())
            .map(|tx| tx.tx_id)
    })
}

fn random_otp(world: &mut World) -> OtpValue {
    let mut b = [0u8; 16];
    world.rng.fill_bytes(&mut b);
    OtpValue::from_bytes(b)
}

/// Adversary with a byte-exact copy of the victim's wallet and no
/// authenticator. It can start a session but has to guess the precursor.
pub fn attack_stolen_client_secrets(
    world: &mut World,
    victim: &Did,
    wallet_bytes: &[u8],
    provider: &mut ServiceProvider,
) -> AttackOutcome {
    let Ok(mut wallet) = ClientWallet::from_bytes(wallet_bytes) else {
        return AttackOutcome {
            authenticated: false,
            detected: false,
            evidence: None,
            steps_reached: 0,
        };
    };
    world.net.transcript.set_phase(Phase::Attack);
    let from_event = world.net.ledger.events().len();
    let guess = random_otp(world);
    let mut light_client = LightClient::new();
    let mut channel = SecureChannel::open(victim.clone(), provider.name());
    let report = drive_authentication(
        world,
        ClientSide {
            wallet: &mut wallet,
            precursor: PrecursorSource::Guess(guess),
            light_client: &mut light_client,
            overrides: ClientOverrides::default(),
            actor: Actor::Adversary,
        },
        victim,
        &mut channel,
        provider,
    );
    let evidence = new_artifact(world, provider, from_event);
    AttackOutcome {
        authenticated: report.outcome.is_granted(),
        detected: evidence.is_some(),
        evidence,
        steps_reached: report.steps_reached,
    }
}

/// Adversary holding the victim's authenticator but not the client secrets.
/// It can rebuild every OTP and the tree, but must sign with a key of its
/// own.
pub fn attack_stolen_authenticator(
    world: &mut World,
    victim: &Did,
    device: &AuthenticatorState,
    provider: &mut ServiceProvider,
) -> AttackOutcome {
    world.net.transcript.set_phase(Phase::Attack);
    let from_event = world.net.ledger.events().len();
    let own_key = KeyPair::generate(&mut world.rng);
    let mut wallet =
        ClientWallet::bootstrap(&device.seed_mnemonic(), device.capacity(), own_key.clone())
            .expect("device state is consistent");
    let mut light_client = LightClient::new();
    let mut channel = SecureChannel::open(victim.clone(), provider.name());
    let report = drive_authentication(
        world,
        ClientSide {
            wallet: &mut wallet,
            precursor: PrecursorSource::Authenticator(device),
            light_client: &mut light_client,
            overrides: ClientOverrides::default(),
            actor: Actor::Adversary,
        },
        victim,
        &mut channel,
        provider,
    );
    let evidence = new_artifact(world, provider, from_event);
    AttackOutcome {
        authenticated: report.outcome.is_granted(),
        detected: evidence.is_some(),
        evidence,
        steps_reached: report.steps_reached,
    }
}

fn outcome_of(reply: &WireMessage) -> ProtocolOutcome {
    match reply {
        WireMessage::Grant { index } => ProtocolOutcome::Granted { index: *index },
        WireMessage::Alert {
            step,
            evidence: Some(evidence),
        } => ProtocolOutcome::AbortedMisuse {
            step: *step,
            evidence: *evidence,
        },
        WireMessage::Reject { failure } => ProtocolOutcome::invalid(*failure),
        _ => ProtocolOutcome::invalid(Failure::Malformed { step: 0 }),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ReplayOutcome {
    pub attack: AttackOutcome,
    /// Provider's answer to the replayed step-1 and step-12 messages.
    pub step1: Option<ProtocolOutcome>,
    pub step12: Option<ProtocolOutcome>,
}

/// Passive observer of the victim's channel that re-sends the most recent
/// step-1 and step-12 records verbatim.
pub fn attack_replay_eavesdropper(
    world: &mut World,
    victim: &Did,
    observed: &[ChannelRecord],
    provider: &mut ServiceProvider,
) -> ReplayOutcome {
    world.net.transcript.set_phase(Phase::Attack);
    let from_event = world.net.ledger.events().len();
    let last_client = |step: u8| {
        observed
            .iter()
            .rev()
            .find(|r| r.from == Endpoint::Client && r.step == step)
    };
    let mut steps_reached = 0;
    let step1 = last_client(1).map(|rec| {
        world.net.transcript.record(
            victim,
            1,
            Actor::Adversary,
            Some(rec.bytes()),
            "replayed request 1",
        );
        let reply = provider.handle_auth1(victim, rec.bytes(), &mut world.net);
        if matches!(reply, WireMessage::Receipt { .. }) {
            steps_reached = steps_reached.max(8);
        }
        match reply {
            WireMessage::Receipt { tx, .. } => {
                // Publication succeeded but nothing more can be done without
                // the precursor.
                ProtocolOutcome::invalid(if tx.inserted_otp().is_some() {
                    Failure::PrecursorUnavailable
                } else {
                    Failure::ReceiptMismatch
                })
            }
            other => outcome_of(&other),
        }
    });
    let step12 = last_client(12).map(|rec| {
        world.net.transcript.record(
            victim,
            12,
            Actor::Adversary,
            Some(rec.bytes()),
            "replayed request 2",
        );
        outcome_of(&provider.handle_auth2(victim, rec.bytes(), &mut world.net))
    });
    for o in [step1, step12].into_iter().flatten() {
        let reached = match o {
            ProtocolOutcome::Granted { .. } => 17,
            ProtocolOutcome::AbortedMisuse { step, .. }
            | ProtocolOutcome::AbortedInvalid { step, .. } => match step {
                2 | 13 => 0,
                s => s - 1,
            },
            ProtocolOutcome::Exhaustion => 0,
        };
        steps_reached = steps_reached.max(reached);
    }
    let authenticated = [step1, step12]
        .iter()
        .flatten()
        .any(ProtocolOutcome::is_granted);
    let evidence = step1
        .as_ref()
        .and_then(ProtocolOutcome::evidence)
        .map(|e| e.tx_id)
        .or_else(|| new_artifact(world, provider, from_event));
    ReplayOutcome {
        attack: AttackOutcome {
            authenticated,
            detected: evidence.is_some(),
            evidence,
            steps_reached,
        },
        step1,
        step12,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DelayOutcome {
    pub outcome: ProtocolOutcome,
    /// Blocks sealed during the session.
    pub seals: u64,
    /// What the victim's own misuse check reports afterwards.
    pub misuse: Option<MisuseEvidence>,
}

/// Runs one honest session while the provider-to-ledger path holds every
/// submission for `delay_blocks` seals.
pub fn attack_ledger_delay(
    world: &mut World,
    enrollment: &mut Enrollment,
    provider: &mut ServiceProvider,
    delay_blocks: u64,
) -> DelayOutcome {
    let previous = world.net.relay_delay();
    world.net.set_relay_delay(delay_blocks);
    let start = world.net.ledger.height();
    let outcome = crate::protocol::run_authentication(world, enrollment, provider);
    world.net.set_relay_delay(previous);
    DelayOutcome {
        outcome,
        seals: world.net.ledger.height() - start,
        misuse: check_misuse(&enrollment.wallet, &world.net.ledger, provider.contract()),
    }
}

/// Runs the adversary matching `cap` against `victim`. Full compromise is
/// out of scope and yields `None`.
pub fn run_adversary(
    world: &mut World,
    victim: &mut Enrollment,
    provider: &mut ServiceProvider,
    cap: AdversaryCapability,
) -> Option<AttackOutcome> {
    if cap.is_full_compromise() {
        return None;
    }
    let did = victim.did.clone();
    let mut outcomes = Vec::new();
    if cap.has_client_secrets {
        let bytes = victim.wallet.to_bytes();
        outcomes.push(attack_stolen_client_secrets(world, &did, &bytes, provider));
    }
    if cap.has_authenticator {
        let device = victim.authenticator.clone();
        outcomes.push(attack_stolen_authenticator(world, &did, &device, provider));
    }
    match cap.channel_position {
        ChannelPosition::Observe => {
            let records = victim.channel.records().to_vec();
            outcomes.push(attack_replay_eavesdropper(world, &did, &records, provider).attack);
        }
        ChannelPosition::Delay => {
            // The delay adversary only affects honest traffic; it gains
            // nothing by itself.
            let d = attack_ledger_delay(world, victim, provider, 1);
            outcomes.push(AttackOutcome {
                authenticated: false,
                detected: d.misuse.is_some(),
                evidence: d.misuse.map(|e| e.tx_id),
                steps_reached: 0,
            });
        }
        ChannelPosition::None => {}
    }
    if outcomes.is_empty() {
        // Nothing but public knowledge: forge the whole request from an
        // unrelated device.
        let device = AuthenticatorState::generate(&mut world.rng, victim.wallet.capacity())
            .expect("capacity is valid");
        outcomes.push(attack_stolen_authenticator(world, &did, &device, provider));
    }
    Some(outcomes.into_iter().fold(
        AttackOutcome {
            authenticated: false,
            detected: false,
            evidence: None,
            steps_reached: 0,
        },
        |acc, o| AttackOutcome {
            authenticated: acc.authenticated || o.authenticated,
            detected: acc.detected || o.detected,
            evidence: acc.evidence.or(o.evidence),
            steps_reached: acc.steps_reached.max(o.steps_reached),
        },
    ))
}

/// Narrative run of malware inside the victim's client: it intercepts the
/// precursor the victim types in and uses it for its own session, so the
/// victim's fresh session is the one that gets dropped. Not a pass/fail
/// property; authentication cannot defend against this adversary.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MalwareDemo {
    pub malware: ProtocolOutcome,
    /// The victim's next attempt after the hijack.
    pub victim_next: ProtocolOutcome,
}

pub fn demo_malware_in_client(
    world: &mut World,
    victim: &mut Enrollment,
    provider: &mut ServiceProvider,
) -> MalwareDemo {
    world.net.transcript.set_phase(Phase::Attack);
    let did = victim.did.clone();
    // The malware works on its own copy of the wallet; the victim's view
    // never sees the grant.
    let mut shadow = victim.wallet.clone();
    let mut light_client = LightClient::new();
    let mut channel = SecureChannel::open(did.clone(), provider.name());
    let malware = drive_authentication(
        world,
        ClientSide {
            wallet: &mut shadow,
            precursor: PrecursorSource::Authenticator(&victim.authenticator),
            light_client: &mut light_client,
            overrides: ClientOverrides::default(),
            actor: Actor::Adversary,
        },
        &did,
        &mut channel,
        provider,
    )
    .outcome;
    let victim_next = crate::protocol::run_authentication(world, victim, provider);
    MalwareDemo {
        malware,
        victim_next,
    }
}
