use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::gas::DEPLOY_GAS;
use crate::crypto::OtpValue;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractAddress(pub String);

impl fmt::Display for ContractAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ContractAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContractAddress({})", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Success,
    /// The submitted OTP is already in the registry: attempted misuse.
    RejectedReuse,
    /// The previous OTP named by the provider is not in the registry.
    RejectedState,
}

/// A provider's registry of each user's last used OTP. Entries are bare OTP
/// values with no link to the user they belong to.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RegistryContract {
    address: ContractAddress,
    last_used: BTreeSet<OtpValue>,
}

impl RegistryContract {
    pub(crate) fn new(address: ContractAddress) -> Self {
        Self {
            address,
            last_used: BTreeSet::new(),
        }
    }

    pub fn address(&self) -> &ContractAddress {
        &self.address
    }

    pub fn deploy_gas(&self) -> u64 {
        DEPLOY_GAS
    }

    pub fn len(&self) -> usize {
        self.last_used.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_used.is_empty()
    }

    pub fn contains(&self, otp: &OtpValue) -> bool {
        self.last_used.contains(otp)
    }

    pub fn last_used(&self) -> &BTreeSet<OtpValue> {
        &self.last_used
    }

    /// Reuse is checked first; the registry is only mutated on success.
    pub(crate) fn insert_otp(&mut self, new_otp: OtpValue, prev_otp: Option<OtpValue>) -> TxStatus {
        if self.last_used.contains(&new_otp) {
            return TxStatus::RejectedReuse;
        }
        if let Some(prev) = prev_otp {
            if !self.last_used.remove(&prev) {
                return TxStatus::RejectedState;
            }
        }
        self.last_used.insert(new_otp);
        TxStatus::Success
    }
}
