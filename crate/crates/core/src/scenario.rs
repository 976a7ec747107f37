//! Scenario files: a versioned header of settings followed by a schedule of
//! actions, run deterministically against a fresh world.
//!
//! ```text
//! version = 1
//! name = honest-3-sessions
//! rng_seed = 7
//! n_otps = 4
//! users = 1
//! chain_profile = mainnet-like
//!
//! [schedule]
//! bootstrap u0
//! auth u0
//! attack stolen-client u0
//! check u0 expect=evidence
//! reinit u0 rekey
//! seal 2
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attack::{
    attack_ledger_delay, attack_replay_eavesdropper, attack_stolen_authenticator,
    attack_stolen_client_secrets, demo_malware_in_client, AttackOutcome,
};
use crate::crypto::Digest;
use crate::ledger::ChainProfile;
use crate::protocol::{
    check_misuse, reinitialize, run_authentication, run_bootstrap, Enrollment, Failure,
    MisuseEvidence, ProtocolOutcome, ReinitMode, ServiceProvider, TranscriptEntry, World,
    DEFAULT_ABANDON_AFTER_BLOCKS,
};
use crate::report::{emit_cost_report, CostReport};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthExpect {
    Granted,
    Misuse,
    Invalid,
    Exhaustion,
}

impl AuthExpect {
    fn matches(self, outcome: &ProtocolOutcome) -> bool {
        matches!(
            (self, outcome),
            (AuthExpect::Granted, ProtocolOutcome::Granted { .. })
                | (AuthExpect::Misuse, ProtocolOutcome::AbortedMisuse { .. })
                | (AuthExpect::Invalid, ProtocolOutcome::AbortedInvalid { .. })
                | (AuthExpect::Exhaustion, ProtocolOutcome::Exhaustion)
        )
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    StolenClient,
    StolenAuthenticator,
    Replay,
    Delay { blocks: u64 },
    Malware,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Bootstrap { user: usize },
    Auth { user: usize, expect: AuthExpect },
    Attack { user: usize, attack: AttackKind },
    Reinit { user: usize, mode: ReinitModeName },
    Seal { blocks: u64 },
    Check { user: usize, expect_evidence: bool },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReinitModeName {
    Fresh,
    Rekey,
}

impl From<ReinitModeName> for ReinitMode {
    fn from(m: ReinitModeName) -> Self {
        match m {
            ReinitModeName::Fresh => ReinitMode::FreshIdentity,
            ReinitModeName::Rekey => ReinitMode::RekeySignedByOld,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ScheduledAction {
    pub line: usize,
    pub text: String,
    pub action: Action,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub rng_seed: u64,
    pub n_otps: u64,
    pub users: usize,
    pub chain_profile: String,
    pub abandon_after_blocks: u64,
    pub schedule: Vec<ScheduledAction>,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ParseError> {
    v.parse().map_err(|_| {
        err(
            line,
            format!("{key}: expected a non-negative integer, got {v:?}"),
        )
    })
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut header: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        let mut schedule_lines = Vec::new();
        let mut in_schedule = false;
        let mut saw_version = false;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if !saw_version {
                let Some(("version", v)) =
                    content.split_once('=').map(|(k, v)| (k.trim(), v.trim()))
                else {
                    return Err(err(line, "first setting must be `version = 1`"));
                };
                let v: u32 = parse_num(line, "version", v)?;
                if v != SCENARIO_VERSION {
                    return Err(err(line, format!("unsupported version {v}")));
                }
                saw_version = true;
                continue;
            }
            if content == "[schedule]" {
                if in_schedule {
                    return Err(err(line, "duplicate [schedule] section"));
                }
                in_schedule = true;
                continue;
            }
            if in_schedule {
                schedule_lines.push((line, content));
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(err(
                    line,
                    format!("expected `key = value`, got {content:?}"),
                ));
            };
            let (k, v) = (k.trim(), v.trim());
            if header.insert(k, (line, v)).is_some() {
                return Err(err(line, format!("duplicate setting {k:?}")));
            }
        }
        if !saw_version {
            return Err(err(1, "empty scenario; expected `version = 1`"));
        }
        let end = text.lines().count().max(1);

        let mut take = |key: &str| header.remove(key);
        fn required<'a>(
            v: Option<(usize, &'a str)>,
            key: &str,
            end: usize,
        ) -> Result<(usize, &'a str), ParseError> {
            v.ok_or_else(|| err(end, format!("missing setting {key:?}")))
        }
        let (l, v) = required(take("rng_seed"), "rng_seed", end)?;
        let rng_seed: u64 = parse_num(l, "rng_seed", v)?;
        let (l, v) = required(take("n_otps"), "n_otps", end)?;
        let n_otps: u64 = parse_num(l, "n_otps", v)?;
        if n_otps < 2 || !n_otps.is_power_of_two() {
            return Err(err(
                l,
                format!("n_otps must be a power of two >= 2, got {n_otps}"),
            ));
        }
        let (l, v) = required(take("users"), "users", end)?;
        let users: usize = parse_num(l, "users", v)?;
        if users == 0 {
            return Err(err(l, "users must be at least 1"));
        }
        let (l, v) = required(take("chain_profile"), "chain_profile", end)?;
        if ChainProfile::by_name(v).is_none() {
            let known: Vec<String> = ChainProfile::builtin()
                .into_iter()
                .map(|p| p.name)
                .collect();
            return Err(err(
                l,
                format!("unknown chain_profile {v:?}; known: {}", known.join(", ")),
            ));
        }
        let chain_profile = v.to_owned();
        let abandon_after_blocks = match take("abandon_after") {
            Some((l, v)) => parse_num(l, "abandon_after", v)?,
            None => DEFAULT_ABANDON_AFTER_BLOCKS,
        };
        let name = take("name").map_or_else(|| "unnamed".to_owned(), |(_, v)| v.to_owned());
        if let Some((k, (l, _))) = header.into_iter().next() {
            return Err(err(l, format!("unknown setting {k:?}")));
        }

        let mut bootstrapped = vec![false; users];
        let mut schedule = Vec::new();
        for (line, content) in schedule_lines {
            let action = parse_action(line, content, users, &mut bootstrapped)?;
            schedule.push(ScheduledAction {
                line,
                text: content.to_owned(),
                action,
            });
        }
        Ok(Self {
            name,
            rng_seed,
            n_otps,
            users,
            chain_profile,
            abandon_after_blocks,
            schedule,
        })
    }
}

fn parse_action(
    line: usize,
    content: &str,
    users: usize,
    bootstrapped: &mut [bool],
) -> Result<Action, ParseError> {
    let mut positional = Vec::new();
    let mut options = BTreeMap::new();
    for tok in content.split_whitespace() {
        match tok.split_once('=') {
            Some((k, v)) => {
                if options.insert(k, v).is_some() {
                    return Err(err(line, format!("duplicate option {k:?}")));
                }
            }
            None => positional.push(tok),
        }
    }
    let user = |tok: Option<&&str>| -> Result<usize, ParseError> {
        let tok = tok.ok_or_else(|| err(line, "missing user"))?;
        let idx = tok
            .strip_prefix('u')
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| {
                err(
                    line,
                    format!("users are named u0..u{}, got {tok:?}", users - 1),
                )
            })?;
        if idx >= users {
            return Err(err(
                line,
                format!("user {tok} is not declared (users = {users})"),
            ));
        }
        Ok(idx)
    };
    let enrolled = |u: usize, bootstrapped: &[bool]| {
        if bootstrapped[u] {
            Ok(())
        } else {
            Err(err(
                line,
                format!("user u{u} is used before `bootstrap u{u}`"),
            ))
        }
    };
    let mut take_opt = |k: &str| options.remove(k);

    let (verb, args) = positional
        .split_first()
        .ok_or_else(|| err(line, "empty action"))?;
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(err(
                line,
                format!("`{verb}` takes {n} argument(s), got {}", args.len()),
            ))
        }
    };
    let action = match *verb {
        "bootstrap" => {
            arity(1)?;
            let u = user(args.first())?;
            if bootstrapped[u] {
                return Err(err(line, format!("user u{u} is already bootstrapped")));
            }
            bootstrapped[u] = true;
            Action::Bootstrap { user: u }
        }
        "auth" => {
            arity(1)?;
            let u = user(args.first())?;
            enrolled(u, bootstrapped)?;
            let expect = match take_opt("expect") {
                None | Some("granted") => AuthExpect::Granted,
                Some("misuse") => AuthExpect::Misuse,
                Some("invalid") => AuthExpect::Invalid,
                Some("exhaustion") => AuthExpect::Exhaustion,
                Some(other) => {
                    return Err(err(line, format!("unknown auth expectation {other:?}")))
                }
            };
            Action::Auth { user: u, expect }
        }
        "attack" => {
            arity(2)?;
            let u = user(args.get(1))?;
            enrolled(u, bootstrapped)?;
            let attack = match args[0] {
                "stolen-client" => AttackKind::StolenClient,
                "stolen-authenticator" => AttackKind::StolenAuthenticator,
                "replay" => AttackKind::Replay,
                "delay" => AttackKind::Delay {
                    blocks: match take_opt("blocks") {
                        Some(v) => parse_num(line, "blocks", v)?,
                        None => 1,
                    },
                },
                "malware" => AttackKind::Malware,
                other => return Err(err(line, format!("unknown attack {other:?}"))),
            };
            Action::Attack { user: u, attack }
        }
        "reinit" => {
            arity(2)?;
            let u = user(args.first())?;
            enrolled(u, bootstrapped)?;
            let mode = match args[1] {
                "fresh" => ReinitModeName::Fresh,
                "rekey" => ReinitModeName::Rekey,
                other => return Err(err(line, format!("unknown reinit mode {other:?}"))),
            };
            Action::Reinit { user: u, mode }
        }
        "seal" => {
            if args.len() > 1 {
                return Err(err(line, "`seal` takes at most 1 argument"));
            }
            let blocks = match args.first() {
                Some(v) => parse_num(line, "seal", v)?,
                None => 1,
            };
            Action::Seal { blocks }
        }
        "check" => {
            arity(1)?;
            let u = user(args.first())?;
            enrolled(u, bootstrapped)?;
            let expect_evidence = match take_opt("expect") {
                None | Some("clean") => false,
                Some("evidence") => true,
                Some(other) => {
                    return Err(err(line, format!("unknown check expectation {other:?}")))
                }
            };
            Action::Check {
                user: u,
                expect_evidence,
            }
        }
        other => return Err(err(line, format!("unknown action {other:?}"))),
    };
    if let Some(k) = options.keys().next() {
        return Err(err(line, format!("unexpected option {k:?}")));
    }
    Ok(action)
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ActionResult {
    Bootstrapped {
        did: String,
    },
    BootstrapFailed {
        error: String,
    },
    Auth {
        outcome: ProtocolOutcome,
    },
    Attack {
        outcome: AttackOutcome,
    },
    Delay {
        outcome: ProtocolOutcome,
        seals: u64,
        misuse: Option<MisuseEvidence>,
    },
    Malware {
        malware: ProtocolOutcome,
        victim_next: ProtocolOutcome,
    },
    Reinitialized {
        mode: ReinitModeName,
    },
    ReinitFailed {
        error: String,
    },
    Sealed {
        height: u64,
    },
    Check {
        evidence: Option<MisuseEvidence>,
    },
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ActionRecord {
    pub line: usize,
    pub text: String,
    pub result: ActionResult,
    /// Whether the result meets the action's expectation.
    pub ok: bool,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FinalState {
    pub height: u64,
    pub registry_size: usize,
    pub alerts: usize,
    pub chain_valid: bool,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub scenario: String,
    pub rng_seed: u64,
    pub chain_profile: String,
    pub users: BTreeMap<String, String>,
    pub actions: Vec<ActionRecord>,
    pub transcript: Vec<TranscriptEntry>,
    pub final_state: FinalState,
    pub cost_report: CostReport,
    pub violations: usize,
    pub exit_status: i32,
    /// Line-delimited block dump of the final chain.
    #[serde(skip)]
    pub chain_dump: String,
}

pub fn run_scenario(config: &ScenarioConfig) -> ScenarioRun {
    let profile = ChainProfile::by_name(&config.chain_profile).expect("validated at parse time");
    let mut world = World::new(config.rng_seed, profile);
    let mut provider = ServiceProvider::deploy(&mut world.net, "provider")
        .expect("deployment fits in a block")
        .with_abandon_after(config.abandon_after_blocks);
    provider.trust_issuer(world.issuer.public_key());
    world.net.seal();

    let mut users: Vec<Option<Enrollment>> = vec![None; config.users];
    let mut actions = Vec::new();
    for sched in &config.schedule {
        let (result, ok) = execute(&mut world, &mut provider, &mut users, config, &sched.action);
        actions.push(ActionRecord {
            line: sched.line,
            text: sched.text.clone(),
            result,
            ok,
        });
    }

    let names: BTreeMap<String, String> = users
        .iter()
        .enumerate()
        .filter_map(|(i, e)| Some((format!("u{i}"), e.as_ref()?.did.to_string())))
        .collect();
    let violations = actions.iter().filter(|a| !a.ok).count();
    ScenarioRun {
        scenario: config.name.clone(),
        rng_seed: config.rng_seed,
        chain_profile: config.chain_profile.clone(),
        users: names,
        actions,
        transcript: world.net.transcript.entries().to_vec(),
        final_state: FinalState {
            height: world.net.ledger.height(),
            registry_size: world
                .net
                .ledger
                .registry(provider.contract())
                .map_or(0, |r| r.len()),
            alerts: provider.alerts().len(),
            chain_valid: world.net.ledger.verify_chain().is_ok(),
        },
        cost_report: emit_cost_report(config.users as u64),
        violations,
        exit_status: i32::from(violations > 0),
        chain_dump: world.net.ledger.dump(),
    }
}

fn execute(
    world: &mut World,
    provider: &mut ServiceProvider,
    users: &mut [Option<Enrollment>],
    config: &ScenarioConfig,
    action: &Action,
) -> (ActionResult, bool) {
    match *action {
        Action::Bootstrap { user } => match run_bootstrap(world, provider, config.n_otps) {
            Ok(e) => {
                let did = e.did.to_string();
                users[user] = Some(e);
                (ActionResult::Bootstrapped { did }, true)
            }
            Err(e) => (
                ActionResult::BootstrapFailed {
                    error: e.to_string(),
                },
                false,
            ),
        },
        Action::Auth { user, expect } => {
            let e = users[user].as_mut().expect("bootstrapped at parse time");
            let outcome = run_authentication(world, e, provider);
            (ActionResult::Auth { outcome }, expect.matches(&outcome))
        }
        Action::Attack { user, attack } => {
            let e = users[user].as_mut().expect("bootstrapped at parse time");
            run_attack(world, provider, e, attack)
        }
        Action::Reinit { user, mode } => {
            let e = users[user].as_mut().expect("bootstrapped at parse time");
            match reinitialize(world, e, provider, mode.into()) {
                Ok(()) => (ActionResult::Reinitialized { mode }, true),
                Err(err) => (
                    ActionResult::ReinitFailed {
                        error: err.to_string(),
                    },
                    false,
                ),
            }
        }
        Action::Seal { blocks } => {
            for _ in 0..blocks {
                world.net.seal();
            }
            (
                ActionResult::Sealed {
                    height: world.net.ledger.height(),
                },
                true,
            )
        }
        Action::Check {
            user,
            expect_evidence,
        } => {
            let e = users[user].as_ref().expect("bootstrapped at parse time");
            let evidence = check_misuse(&e.wallet, &world.net.ledger, provider.contract());
            (
                ActionResult::Check { evidence },
                evidence.is_some() == expect_evidence,
            )
        }
    }
}

fn run_attack(
    world: &mut World,
    provider: &mut ServiceProvider,
    victim: &mut Enrollment,
    attack: AttackKind,
) -> (ActionResult, bool) {
    let did = victim.did.clone();
    match attack {
        AttackKind::StolenClient => {
            let bytes = victim.wallet.to_bytes();
            let outcome = attack_stolen_client_secrets(world, &did, &bytes, provider);
            let detected_by_victim =
                check_misuse(&victim.wallet, &world.net.ledger, provider.contract()).is_some();
            let ok = !outcome.authenticated && outcome.detected && detected_by_victim;
            (ActionResult::Attack { outcome }, ok)
        }
        AttackKind::StolenAuthenticator => {
            let device = victim.authenticator.clone();
            let outcome = attack_stolen_authenticator(world, &did, &device, provider);
            let ok = !outcome.authenticated && !outcome.detected && outcome.steps_reached == 0;
            (ActionResult::Attack { outcome }, ok)
        }
        AttackKind::Replay => {
            let records = victim.channel.records().to_vec();
            let outcome = attack_replay_eavesdropper(world, &did, &records, provider).attack;
            (ActionResult::Attack { outcome }, !outcome.authenticated)
        }
        AttackKind::Delay { blocks } => {
            let d = attack_ledger_delay(world, victim, provider, blocks);
            let expected_grant = blocks <= provider.abandon_after_blocks();
            let ok = d.misuse.is_none()
                && if expected_grant {
                    d.outcome.is_granted()
                } else {
                    d.outcome == ProtocolOutcome::invalid(Failure::Abandoned)
                };
            (
                ActionResult::Delay {
                    outcome: d.outcome,
                    seals: d.seals,
                    misuse: d.misuse,
                },
                ok,
            )
        }
        AttackKind::Malware => {
            let demo = demo_malware_in_client(world, victim, provider);
            (
                ActionResult::Malware {
                    malware: demo.malware,
                    victim_next: demo.victim_next,
                },
                true,
            )
        }
    }
}

fn short(d: &Digest) -> String {
    d.to_hex()[..12].to_owned()
}

fn describe_outcome(o: &ProtocolOutcome) -> String {
    match o {
        ProtocolOutcome::Granted { index } => format!("granted session {index}"),
        ProtocolOutcome::AbortedMisuse { step, evidence } => format!(
            "aborted (misuse) at step {step}, evidence tx {}",
            evidence.tx_id
        ),
        ProtocolOutcome::AbortedInvalid { step, failure } => {
            format!("aborted at step {step}: {failure}")
        }
        ProtocolOutcome::Exhaustion => "exhausted; reinitialization required".to_owned(),
    }
}

fn describe(result: &ActionResult) -> String {
    match result {
        ActionResult::Bootstrapped { did } => format!("enrolled as {did}"),
        ActionResult::BootstrapFailed { error } => format!("bootstrap failed: {error}"),
        ActionResult::Auth { outcome } => describe_outcome(outcome),
        ActionResult::Attack { outcome } => format!(
            "authenticated={} detected={} steps_reached={}{}",
            outcome.authenticated,
            outcome.detected,
            outcome.steps_reached,
            outcome
                .evidence
                .map(|e| format!(" evidence tx {e}"))
                .unwrap_or_default()
        ),
        ActionResult::Delay {
            outcome,
            seals,
            misuse,
        } => format!(
            "{} after {seals} sealed block(s); misuse evidence: {}",
            describe_outcome(outcome),
            if misuse.is_some() { "yes" } else { "none" }
        ),
        ActionResult::Malware {
            malware,
            victim_next,
        } => format!(
            "malware: {}; victim next: {}",
            describe_outcome(malware),
            describe_outcome(victim_next)
        ),
        ActionResult::Reinitialized { mode } => format!("reinitialized ({mode:?})"),
        ActionResult::ReinitFailed { error } => format!("reinitialization failed: {error}"),
        ActionResult::Sealed { height } => format!("height {height}"),
        ActionResult::Check { evidence } => match evidence {
            Some(e) => format!(
                "misuse evidence: tx {} ({:?}) OTP index {}",
                e.tx_id,
                e.kind,
                e.index.map_or("?".to_owned(), |i| i.to_string())
            ),
            None => "no misuse evidence".to_owned(),
        },
    }
}

impl ScenarioRun {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run serializes") + "\n"
    }

    /// Step-numbered transcript followed by the action summary.
    pub fn render_text(&self, with_transcript: bool) -> String {
        let label: BTreeMap<&str, &str> = self
            .users
            .iter()
            .map(|(name, did)| (did.as_str(), name.as_str()))
            .collect();
        let mut out = String::new();
        writeln!(
            out,
            "scenario {} (seed {}, {})",
            self.scenario, self.rng_seed, self.chain_profile
        )
        .unwrap();
        if with_transcript {
            writeln!(out, "\ntranscript").unwrap();
            for e in &self.transcript {
                let user = label
                    .get(e.user.as_str())
                    .copied()
                    .unwrap_or(e.user.as_str());
                let phase = serde_json::to_value(e.phase).unwrap();
                let actor = serde_json::to_value(e.actor).unwrap();
                writeln!(
                    out,
                    "  {:>4} {:<16} {:<4} step {:>2}  {:<17} {}{}",
                    e.seq,
                    phase.as_str().unwrap_or(""),
                    user,
                    e.step,
                    actor.as_str().unwrap_or(""),
                    e.outcome,
                    e.message
                        .map(|m| format!("  [msg {}]", short(&m)))
                        .unwrap_or_default()
                )
                .unwrap();
            }
        }
        writeln!(out, "\nactions").unwrap();
        for a in &self.actions {
            writeln!(
                out,
                "  {} line {:>3}  {:<32} {}",
                if a.ok { "ok  " } else { "FAIL" },
                a.line,
                a.text,
                describe(&a.result)
            )
            .unwrap();
        }
        writeln!(
            out,
            "\nfinal: height {}, registry size {}, provider alerts {}, chain {}",
            self.final_state.height,
            self.final_state.registry_size,
            self.final_state.alerts,
            if self.final_state.chain_valid {
                "valid"
            } else {
                "INVALID"
            }
        )
        .unwrap();
        writeln!(
            out,
            "{} expectation(s) violated; exit status {}",
            self.violations, self.exit_status
        )
        .unwrap();
        out
    }
}

/// Scenarios shipped with the library, by name.
pub fn bundled() -> &'static [(&'static str, &'static str)] {
    &[
        (
            "honest-3-sessions",
            include_str!("../scenarios/honest-3-sessions.scn"),
        ),
        (
            "stolen-client",
            include_str!("../scenarios/stolen-client.scn"),
        ),
        (
            "stolen-authenticator",
            include_str!("../scenarios/stolen-authenticator.scn"),
        ),
        ("replay", include_str!("../scenarios/replay.scn")),
        (
            "ledger-delay",
            include_str!("../scenarios/ledger-delay.scn"),
        ),
        ("reinit", include_str!("../scenarios/reinit.scn")),
        ("exhaustion", include_str!("../scenarios/exhaustion.scn")),
        (
            "malware-demo",
            include_str!("../scenarios/malware-demo.scn"),
        ),
    ]
}

pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    bundled().iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "version = 1\nrng_seed = 1\nn_otps = 4\nusers = 1\nchain_profile = mainnet-like\n[schedule]\nbootstrap u0\nauth u0\n";

    #[test]
    fn parses_minimal() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.rng_seed, 1);
        assert_eq!(c.schedule.len(), 2);
        assert_eq!(c.schedule[1].line, 8);
        assert_eq!(
            c.schedule[1].action,
            Action::Auth {
                user: 0,
                expect: AuthExpect::Granted
            }
        );
        assert_eq!(c.abandon_after_blocks, DEFAULT_ABANDON_AFTER_BLOCKS);
    }

    fn line_of(text: &str) -> usize {
        ScenarioConfig::parse(text).unwrap_err().line
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of("rng_seed = 1\n"), 1);
        assert_eq!(line_of("# c\n\nversion = 2\n"), 3);
        assert_eq!(line_of(&MINIMAL.replace("n_otps = 4", "n_otps = 6")), 3);
        assert_eq!(line_of(&MINIMAL.replace("auth u0", "auth u1")), 8);
        assert_eq!(line_of(&MINIMAL.replace("auth u0", "frobnicate u0")), 8);
        assert_eq!(
            line_of(&MINIMAL.replace("auth u0", "auth u0 expect=maybe")),
            8
        );
        assert_eq!(line_of(&MINIMAL.replace("bootstrap u0", "auth u0")), 7);
        assert_eq!(line_of(&MINIMAL.replace("mainnet-like", "moonnet")), 5);
        assert_eq!(
            line_of(&MINIMAL.replace("users = 1", "users = 1\ncolour = blue")),
            5
        );
        assert_eq!(
            line_of(&MINIMAL.replace("rng_seed = 1", "rng_seed = -1")),
            2
        );
    }

    #[test]
    fn missing_setting_is_reported() {
        let e = ScenarioConfig::parse("version = 1\nn_otps = 4\n").unwrap_err();
        assert!(e.message.contains("rng_seed"), "{e}");
    }

    #[test]
    fn all_bundled_scenarios_parse_and_pass() {
        for (name, text) in bundled() {
            let config = ScenarioConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(config.name, *name);
            let run = run_scenario(&config);
            assert_eq!(run.exit_status, 0, "{name}:\n{}", run.render_text(false));
            assert!(run.final_state.chain_valid);
        }
    }

    #[test]
    fn failed_expectation_sets_exit_status() {
        let text = MINIMAL.replace("auth u0", "auth u0 expect=misuse");
        let run = run_scenario(&ScenarioConfig::parse(&text).unwrap());
        assert_eq!(run.violations, 1);
        assert_eq!(run.exit_status, 1);
    }
}
