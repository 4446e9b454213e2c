//! Dealer-free cloud identity management.
//!
//! The authority is a set of `k` parties that jointly generate an RSA
//! modulus without any of them learning its factors, hold additive shares
//! of the private exponent, and gate release of per-credential key shares
//! on attribute policies. Everything runs on a deterministic in-memory
//! network so protocols can be replayed bit for bit.

pub mod abe;
pub mod arith;
pub mod bundle;
pub mod canonical;
pub mod cipher;
pub mod dkg;
pub mod idm;
pub mod net;
pub mod rng;
pub mod share;
