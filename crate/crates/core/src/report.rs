//! Cost, throughput and storage figures, computed through the ledger.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crypto::OtpValue;
use crate::ledger::{max_auth_per_second, state_storage_bytes, ChainProfile, Ledger};

/// Width of one registry entry.
pub const OTP_WIDTH_BYTES: u64 = 16;

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ProfileRow {
    pub profile: String,
    pub block_gas_limit: u64,
    pub block_interval_seconds: f64,
    pub max_auth_per_second: u64,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct StorageRow {
    pub users: u64,
    pub otp_width_bytes: u64,
    pub state_bytes: u64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct CostReport {
    pub deploy_gas: u64,
    pub auth_gas: u64,
    pub profiles: Vec<ProfileRow>,
    pub storage: Vec<StorageRow>,
}

/// Gas as charged by a scratch ledger for one deployment and one
/// `insert_otp` call.
fn measured_gas() -> (u64, u64) {
    let mut ledger = Ledger::new(ChainProfile::mainnet_like());
    let (contract, deploy) = ledger
        .deploy_registry("cost-probe")
        .expect("deploy fits in a block");
    let insert = ledger
        .submit_insert_otp(&contract, OtpValue::from_bytes([0; 16]), None)
        .expect("insert fits in a block");
    (deploy.gas_used, insert.gas_used)
}

/// Report for `users` registered users, plus the one-million-user reference
/// row.
pub fn emit_cost_report(users: u64) -> CostReport {
    let (deploy_gas, auth_gas) = measured_gas();
    let profiles = ChainProfile::builtin()
        .into_iter()
        .map(|p| ProfileRow {
            max_auth_per_second: max_auth_per_second(&p, auth_gas),
            profile: p.name,
            block_gas_limit: p.block_gas_limit,
            block_interval_seconds: p.block_interval_seconds,
        })
        .collect();
    let mut counts = vec![users];
    if users != 1_000_000 {
        counts.push(1_000_000);
    }
    let storage = counts
        .into_iter()
        .map(|users| StorageRow {
            users,
            otp_width_bytes: OTP_WIDTH_BYTES,
            state_bytes: state_storage_bytes(users, OTP_WIDTH_BYTES),
        })
        .collect();
    CostReport {
        deploy_gas,
        auth_gas,
        profiles,
        storage,
    }
}

impl CostReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "gas").unwrap();
        writeln!(out, "  deploy registry   {:>12}", self.deploy_gas).unwrap();
        writeln!(out, "  insert_otp (auth) {:>12}", self.auth_gas).unwrap();
        writeln!(out, "throughput").unwrap();
        writeln!(
            out,
            "  {:<16} {:>12} {:>10} {:>10}",
            "profile", "gas/block", "interval", "auth/s"
        )
        .unwrap();
        for row in &self.profiles {
            writeln!(
                out,
                "  {:<16} {:>12} {:>9}s {:>10}",
                row.profile,
                row.block_gas_limit,
                row.block_interval_seconds,
                row.max_auth_per_second
            )
            .unwrap();
        }
        writeln!(out, "storage").unwrap();
        writeln!(
            out,
            "  {:>10} {:>8} {:>14}",
            "users", "bytes/u", "state bytes"
        )
        .unwrap();
        for row in &self.storage {
            writeln!(
                out,
                "  {:>10} {:>8} {:>14}",
                row.users, row.otp_width_bytes, row.state_bytes
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_figures() {
        let r = emit_cost_report(3);
        assert_eq!(r.deploy_gas, 292_000);
        assert_eq!(r.auth_gas, 48_000);
        let rate = |name: &str| {
            r.profiles
                .iter()
                .find(|p| p.profile == name)
                .unwrap()
                .max_auth_per_second
        };
        assert_eq!(rate("mainnet-like"), 52);
        assert_eq!(rate("consortium-like"), 562);
        assert_eq!(rate("sidechain-like"), 208);
        assert_eq!(r.storage[0].state_bytes, 48);
        assert_eq!(r.storage[1].users, 1_000_000);
        assert_eq!(r.storage[1].state_bytes, 16_000_000);
    }

    #[test]
    fn million_users_row_is_not_duplicated() {
        assert_eq!(emit_cost_report(1_000_000).storage.len(), 1);
    }

    #[test]
    fn report_is_a_pure_function_of_its_input() {
        assert_eq!(emit_cost_report(7), emit_cost_report(7));
        let text = emit_cost_report(7).render_text();
        assert!(text.contains("292000") && text.contains("48000"));
        assert!(text.contains("16000000"));
    }
}
