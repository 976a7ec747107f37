//! Gas constants, chain profiles and the throughput/storage arithmetic.

use serde::{Deserialize, Serialize};

/// Gas for deploying one provider's registry contract.
pub const DEPLOY_GAS: u64 = 292_000;
/// Gas for one `insert_otp` call.
pub const INSERT_OTP_GAS: u64 = 48_000;

/// Reference figures for the consortium profile: a measured invocation rate
/// on a 45k-gas benchmark call.
pub const CONSORTIUM_INVOCATIONS_PER_SECOND: u64 = 600;
pub const CONSORTIUM_REFERENCE_GAS: u64 = 45_000;

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ChainProfile {
    pub name: String,
    pub block_gas_limit: u64,
    pub block_interval_seconds: f64,
}

impl ChainProfile {
    pub fn new(name: &str, block_gas_limit: u64, block_interval_seconds: f64) -> Option<Self> {
        (block_gas_limit > 0 && block_interval_seconds > 0.0).then(|| Self {
            name: name.to_owned(),
            block_gas_limit,
            block_interval_seconds,
        })
    }

    pub fn mainnet_like() -> Self {
        Self::new("mainnet-like", 30_000_000, 12.0).unwrap()
    }

    pub fn sidechain_like() -> Self {
        Self::new("sidechain-like", 20_000_000, 2.0).unwrap()
    }

    /// Throughput-capped chain, expressed as one block per second whose gas
    /// budget is the measured invocation rate times the benchmark call's gas.
    pub fn consortium_like() -> Self {
        Self::new(
            "consortium-like",
            CONSORTIUM_INVOCATIONS_PER_SECOND * CONSORTIUM_REFERENCE_GAS,
            1.0,
        )
        .unwrap()
    }

    pub fn builtin() -> [ChainProfile; 3] {
        [
            Self::mainnet_like(),
            Self::sidechain_like(),
            Self::consortium_like(),
        ]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::builtin().into_iter().find(|p| p.name == name)
    }
}

/// `floor(block_gas_limit / gas_per_auth / block_interval_seconds)`.
pub fn max_auth_per_second(profile: &ChainProfile, gas_per_auth: u64) -> u64 {
    assert!(gas_per_auth > 0, "gas per authentication must be positive");
    let per_block = profile.block_gas_limit as f64 / gas_per_auth as f64;
    (per_block / profile.block_interval_seconds).floor() as u64
}

/// Contract state held for `num_users` users, one OTP each.
pub fn state_storage_bytes(num_users: u64, otp_width: u64) -> u64 {
    num_users * otp_width
}
