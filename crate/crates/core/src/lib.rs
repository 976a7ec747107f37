//! Blockchain-backed two-and-a-half-factor OTP authentication with on-chain
//! credential misuse detection, run against a simulated ledger.

pub mod attack;
pub mod codec;
pub mod crypto;
pub mod identity;
pub mod ledger;
pub mod merkle;
pub mod otp;
pub mod protocol;
pub mod report;
pub mod scenario;
