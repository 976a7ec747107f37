use std::collections::HashMap;

use crate::crypto::{mnemonic_decode, mnemonic_encode, KeyPair, Mnemonic, OtpValue};
use crate::identity::{Claims, Did, IdentityError};
use crate::ledger::{ContractAddress, EventKind, Ledger, LightClient, TxStatus};
use crate::merkle::MerkleProof;
use crate::otp::{AuthenticatorState, ClientWallet, OtpError};

use super::{
    Actor, AuthRequest1, AuthRequest2, Endpoint, Failure, MisuseEvidence, Phase, ProtocolOutcome,
    RegistrationRequest, RekeyRequest, SecureChannel, ServiceProvider, WireMessage, World,
    DID_SCHEME,
};

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error("credential issuance failed: {0}")]
    Identity(#[from] IdentityError),
    #[error("seed transfer failed: {0}")]
    Transfer(#[source] OtpError),
    #[error(transparent)]
    Otp(#[from] OtpError),
    #[error("provider rejected the registration: {0}")]
    Rejected(Failure),
    #[error("user is not enrolled at this provider")]
    NotEnrolled,
}

/// Everything one user holds after enrolling at one provider.
#[derive(Clone, Debug)]
pub struct Enrollment {
    pub did: Did,
    pub wallet: ClientWallet,
    pub authenticator: AuthenticatorState,
    pub channel: SecureChannel,
    pub light_client: LightClient,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReinitMode {
    /// Repeat bootstrapping, including a new credential from the identity
    /// provider. The DID is kept.
    FreshIdentity,
    /// New key and tree endorsed by the old key; the identity provider is not
    /// involved.
    RekeySignedByOld,
}

/// Bootstraps a new user at `provider` with an `n`-leaf tree.
pub fn run_bootstrap(
    world: &mut World,
    provider: &mut ServiceProvider,
    n: u64,
) -> Result<Enrollment, BootstrapError> {
    run_bootstrap_with(world, provider, n, Mnemonic::clone)
}

/// As [`run_bootstrap`], with `transfer` standing in for the person copying
/// the seed words from the authenticator to the client.
pub fn run_bootstrap_with(
    world: &mut World,
    provider: &mut ServiceProvider,
    n: u64,
    transfer: impl FnOnce(&Mnemonic) -> Mnemonic,
) -> Result<Enrollment, BootstrapError> {
    world.net.transcript.set_phase(Phase::Bootstrap);
    let did = world.dids.create_did(DID_SCHEME);
    let channel = SecureChannel::open(did.clone(), provider.name());
    bootstrap_steps(world, provider, n, did, channel, transfer)
}

fn bootstrap_steps(
    world: &mut World,
    provider: &mut ServiceProvider,
    n: u64,
    did: Did,
    mut channel: SecureChannel,
    transfer: impl FnOnce(&Mnemonic) -> Mnemonic,
) -> Result<Enrollment, BootstrapError> {
    let t = &mut world.net.transcript;

    let keypair = KeyPair::generate(&mut world.rng);
    t.record(&did, 1, Actor::Client, None, "keypair generated");

    let credential =
        world
            .issuer
            .issue_credential(&world.dids, &did, keypair.public_key(), Claims::new())?;
    t.record(
        &did,
        2,
        Actor::IdentityProvider,
        Some(&credential.to_bytes()),
        "credential issued",
    );

    let authenticator = AuthenticatorState::generate(&mut world.rng, n)?;
    t.record(&did, 3, Actor::Authenticator, None, "seed generated");

    let words = transfer(&authenticator.seed_mnemonic());
    t.record(
        &did,
        4,
        Actor::Authenticator,
        None,
        "seed shown as 24 words",
    );

    let mut wallet =
        ClientWallet::bootstrap(&words, n, keypair).map_err(BootstrapError::Transfer)?;
    t.record(
        &did,
        5,
        Actor::Client,
        None,
        format!("derived {n} OTPs and root"),
    );
    t.record(&did, 6, Actor::Client, None, "tree nodes stored");
    t.record(
        &did,
        7,
        Actor::Client,
        None,
        "seed and precursors discarded",
    );

    let ctx = provider.context(&did);
    let req = RegistrationRequest::new(&ctx, credential.clone(), wallet.root(), wallet.keypair());
    let bytes = channel.send(Endpoint::Client, 8, &WireMessage::Register(req));
    t.record(
        &did,
        8,
        Actor::Client,
        Some(&bytes),
        "credential and root sent",
    );

    let reply =
        provider.handle_registration(&did, &bytes, world.issuer.revocations(), &mut world.net);
    finish_registration(world, &did, &mut channel, reply)?;

    wallet.set_credential(credential);
    Ok(Enrollment {
        did,
        wallet,
        authenticator,
        channel,
        light_client: LightClient::new(),
    })
}

fn finish_registration(
    world: &mut World,
    did: &Did,
    channel: &mut SecureChannel,
    reply: WireMessage,
) -> Result<(), BootstrapError> {
    let bytes = channel.send(Endpoint::Provider, 11, &reply);
    world.net.transcript.record(
        did,
        11,
        Actor::ServiceProvider,
        Some(&bytes),
        format!("reply: {}", reply.kind()),
    );
    match reply {
        WireMessage::Ack { .. } => Ok(()),
        WireMessage::Reject { failure } => Err(BootstrapError::Rejected(failure)),
        _ => Err(BootstrapError::Rejected(Failure::Malformed { step: 11 })),
    }
}

/// Replaces the user's key, seed and tree. On error the enrollment and the
/// provider record are unchanged.
pub fn reinitialize(
    world: &mut World,
    enrollment: &mut Enrollment,
    provider: &mut ServiceProvider,
    mode: ReinitMode,
) -> Result<(), BootstrapError> {
    if provider.record(&enrollment.did).is_none() {
        return Err(BootstrapError::NotEnrolled);
    }
    world.net.transcript.set_phase(Phase::Reinitialization);
    let n = enrollment.wallet.capacity();
    match mode {
        ReinitMode::FreshIdentity => {
            let fresh = bootstrap_steps(
                world,
                provider,
                n,
                enrollment.did.clone(),
                enrollment.channel.clone(),
                Mnemonic::clone,
            )?;
            enrollment.wallet = fresh.wallet;
            enrollment.authenticator = fresh.authenticator;
            enrollment.channel = fresh.channel;
        }
        ReinitMode::RekeySignedByOld => {
            let did = enrollment.did.clone();
            let t = &mut world.net.transcript;
            let keypair = KeyPair::generate(&mut world.rng);
            t.record(&did, 1, Actor::Client, None, "new keypair generated");
            let authenticator = AuthenticatorState::generate(&mut world.rng, n)?;
            t.record(&did, 3, Actor::Authenticator, None, "seed generated");
            let words = authenticator.seed_mnemonic();
            t.record(
                &did,
                4,
                Actor::Authenticator,
                None,
                "seed shown as 24 words",
            );
            let mut wallet =
                ClientWallet::bootstrap(&words, n, keypair).map_err(BootstrapError::Transfer)?;
            t.record(
                &did,
                5,
                Actor::Client,
                None,
                format!("derived {n} OTPs and root"),
            );
            t.record(&did, 6, Actor::Client, None, "tree nodes stored");
            t.record(
                &did,
                7,
                Actor::Client,
                None,
                "seed and precursors discarded",
            );

            let ctx = provider.context(&did);
            let req = RekeyRequest::new(
                &ctx,
                enrollment.wallet.keypair(),
                wallet.keypair(),
                wallet.root(),
            );
            let mut channel = enrollment.channel.clone();
            let bytes = channel.send(Endpoint::Client, 8, &WireMessage::Rekey(req));
            t.record(&did, 8, Actor::Client, Some(&bytes), "rekey request sent");
            let reply = provider.handle_rekey(&did, &bytes, &mut world.net);
            finish_registration(world, &did, &mut channel, reply)?;

            if let Some(credential) = enrollment.wallet.credential() {
                wallet.set_credential(credential.clone());
            }
            enrollment.wallet = wallet;
            enrollment.authenticator = authenticator;
            enrollment.channel = channel;
        }
    }
    Ok(())
}

/// Where step 10's precursor comes from.
#[derive(Clone, Copy, Debug)]
pub enum PrecursorSource<'a> {
    Authenticator(&'a AuthenticatorState),
    /// An adversary without the device has to guess.
    Guess(OtpValue),
    Unavailable,
}

/// Departures from the honest client, used for ablations and attacks.
#[derive(Clone, Debug, Default)]
pub struct ClientOverrides {
    pub signer: Option<KeyPair>,
    pub index: Option<u64>,
    pub otp: Option<OtpValue>,
    pub proof: Option<MerkleProof>,
    pub precursor: Option<OtpValue>,
}

/// The party running the client side of a session.
#[derive(Debug)]
pub struct ClientSide<'a> {
    pub wallet: &'a mut ClientWallet,
    pub precursor: PrecursorSource<'a>,
    pub light_client: &'a mut LightClient,
    pub overrides: ClientOverrides,
    /// How the client's steps are attributed in the transcript.
    pub actor: Actor,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SessionReport {
    pub outcome: ProtocolOutcome,
    /// Highest step completed: a rejection at step `s` means `s - 1`, except
    /// that a signature rejection also voids the request it checked.
    pub steps_reached: u8,
}

fn reached_before(step: u8) -> u8 {
    match step {
        2 => 0,
        13 => 11,
        s => s.saturating_sub(1),
    }
}

/// One honest authentication attempt.
pub fn run_authentication(
    world: &mut World,
    enrollment: &mut Enrollment,
    provider: &mut ServiceProvider,
) -> ProtocolOutcome {
    world.net.transcript.set_phase(Phase::Authentication);
    let Enrollment {
        did,
        wallet,
        authenticator,
        channel,
        light_client,
    } = enrollment;
    let side = ClientSide {
        wallet,
        precursor: PrecursorSource::Authenticator(authenticator),
        light_client,
        overrides: ClientOverrides::default(),
        actor: Actor::Client,
    };
    drive_authentication(world, side, did, channel, provider).outcome
}

/// Runs steps 1-17 with an arbitrary client side.
pub fn drive_authentication(
    world: &mut World,
    side: ClientSide<'_>,
    did: &Did,
    channel: &mut SecureChannel,
    provider: &mut ServiceProvider,
) -> SessionReport {
    let ClientSide {
        wallet,
        precursor: source,
        light_client,
        overrides,
        actor,
    } = side;
    let ctx = provider.context(did);
    let net = &mut world.net;
    let stop = |outcome: ProtocolOutcome, steps_reached: u8| SessionReport {
        outcome,
        steps_reached,
    };
    let invalid = |failure: Failure, steps_reached: u8| SessionReport {
        outcome: ProtocolOutcome::invalid(failure),
        steps_reached,
    };

    // Step 1.
    let material = match wallet.next_auth_material() {
        Ok(m) => m,
        Err(_) => {
            net.transcript.record(
                did,
                1,
                actor,
                None,
                "all OTPs used; reinitialization required",
            );
            return stop(ProtocolOutcome::Exhaustion, 0);
        }
    };
    let index = overrides.index.unwrap_or(material.index);
    let otp = overrides.otp.unwrap_or(material.otp);
    let proof = overrides.proof.unwrap_or(material.proof);
    let signer = overrides
        .signer
        .as_ref()
        .unwrap_or(wallet.keypair())
        .clone();
    let req1 = AuthRequest1::new(&ctx, index, otp, proof, &signer);
    let bytes = channel.send(Endpoint::Client, 1, &WireMessage::Auth1(req1));
    net.transcript.record(
        did,
        1,
        actor,
        Some(&bytes),
        format!("request for session {index}"),
    );

    // Steps 2-8.
    let reply = provider.handle_auth1(did, &bytes, net);
    let reply_step = match &reply {
        WireMessage::Alert { step, .. } => *step,
        WireMessage::Reject { failure } => failure.step(),
        _ => 8,
    };
    let reply_bytes = channel.send(Endpoint::Provider, reply_step, &reply);
    net.transcript.record(
        did,
        reply_step,
        Actor::ServiceProvider,
        Some(&reply_bytes),
        format!("reply: {}", reply.kind()),
    );
    let tx = match reply {
        WireMessage::Receipt { otp: echoed, tx } if echoed == otp => tx,
        WireMessage::Receipt { .. } => return invalid(Failure::ReceiptMismatch, 8),
        WireMessage::Alert {
            step,
            evidence: Some(evidence),
        } => {
            return stop(
                ProtocolOutcome::AbortedMisuse { step, evidence },
                reached_before(step),
            )
        }
        WireMessage::Reject { failure } => return invalid(failure, reached_before(failure.step())),
        _ => return invalid(Failure::Malformed { step: 8 }, 7),
    };

    // Step 9.
    if tx.inserted_otp() != Some(otp)
        || tx.status != TxStatus::Success
        || tx.contract != ctx.contract
    {
        return invalid(Failure::ReceiptMismatch, 8);
    }
    let inclusion = match net.ledger.inclusion_proof(&tx.tx_id) {
        Ok(p) if light_client.sync(&net.ledger).is_ok() && light_client.verify(&tx, &p) => p,
        _ => return invalid(Failure::InclusionUnverified, 8),
    };
    net.transcript.record(
        did,
        9,
        actor,
        None,
        format!("tx included at height {}", inclusion.block_height),
    );

    // Step 10.
    let words = match source {
        PrecursorSource::Authenticator(device) => match device.derive_precursor(index) {
            Ok(reveal) => {
                net.transcript
                    .record(did, 10, Actor::Authenticator, None, "precursor displayed");
                reveal.encoding
            }
            Err(_) => return invalid(Failure::PrecursorUnavailable, 9),
        },
        PrecursorSource::Guess(value) => {
            net.transcript
                .record(did, 10, actor, None, "precursor guessed");
            mnemonic_encode(value.as_bytes()).expect("16-byte payload")
        }
        PrecursorSource::Unavailable => return invalid(Failure::PrecursorUnavailable, 9),
    };

    // Step 11.
    let decoded = mnemonic_decode(&words)
        .ok()
        .and_then(|raw| <[u8; 16]>::try_from(raw.as_slice()).ok());
    let Some(decoded) = decoded else {
        return invalid(Failure::TransferFailed, 10);
    };
    let precursor = overrides.precursor.unwrap_or(OtpValue::from_bytes(decoded));
    net.transcript
        .record(did, 11, actor, None, "precursor entered");

    // Step 12.
    let req2 = AuthRequest2::new(&ctx, tx, inclusion, precursor, &signer);
    let bytes = channel.send(Endpoint::Client, 12, &WireMessage::Auth2(req2));
    net.transcript
        .record(did, 12, actor, Some(&bytes), "precursor, tx and proof sent");

    // Steps 13-17.
    let reply = provider.handle_auth2(did, &bytes, net);
    let reply_step = match &reply {
        WireMessage::Reject { failure } => failure.step(),
        _ => 17,
    };
    let reply_bytes = channel.send(Endpoint::Provider, reply_step, &reply);
    net.transcript.record(
        did,
        reply_step,
        Actor::ServiceProvider,
        Some(&reply_bytes),
        format!("reply: {}", reply.kind()),
    );
    match reply {
        WireMessage::Grant { index: granted } => {
            if granted == material.index {
                wallet
                    .confirm_session(granted)
                    .expect("granted index is the wallet's next index");
            }
            stop(ProtocolOutcome::Granted { index: granted }, 17)
        }
        WireMessage::Reject { failure } => invalid(failure, reached_before(failure.step())),
        _ => invalid(Failure::Malformed { step: 17 }, 16),
    }
}

/// Looks for any not-yet-used OTP of `wallet` on the ledger, sealed or
/// pending, at `contract`.
pub fn check_misuse(
    wallet: &ClientWallet,
    ledger: &Ledger,
    contract: &ContractAddress,
) -> Option<MisuseEvidence> {
    let unused: HashMap<OtpValue, u64> = (wallet.session_counter()..=wallet.capacity())
        .filter_map(|i| wallet.otp(i).map(|otp| (otp, i)))
        .collect();
    let sealed = ledger
        .events()
        .iter()
        .filter(|ev| &ev.contract == contract)
        .filter(|ev| matches!(ev.kind, EventKind::OtpInserted | EventKind::MisuseAttempt))
        .find_map(|ev| {
            let otp = ev.otp?;
            Some(MisuseEvidence {
                tx_id: ev.tx_id,
                height: Some(ev.height),
                otp,
                kind: ev.kind,
                index: Some(*unused.get(&otp)?),
            })
        });
    sealed.or_else(|| {
        ledger
            .pending()
            .filter(|tx| &tx.contract == contract)
            .find_map(|tx| {
                let otp = tx.inserted_otp()?;
                let kind = match tx.status {
                    TxStatus::Success => EventKind::OtpInserted,
                    TxStatus::RejectedReuse => EventKind::MisuseAttempt,
                    TxStatus::RejectedState => return None,
                };
                Some(MisuseEvidence {
                    tx_id: tx.tx_id,
                    height: None,
                    otp,
                    kind,
                    index: Some(*unused.get(&otp)?),
                })
            })
    })
}
