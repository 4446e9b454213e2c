//! Dealer-free shared RSA keys and threshold decryption / signing.
//!
//! Parties hold additive fragments of both primes; the modulus is computed
//! with a BGW product, screened by trial division and a distributed
//! biprimality test, and the private exponent is derived without ever
//! reconstructing the factorization.

mod biprime;
mod config;
mod exponent;
mod keygen;
mod threshold;

use num_bigint::BigUint;
use thiserror::Error;

use crate::net::{NetError, PartyId};
use crate::share::{BgwError, ShareError};

pub use biprime::{
    biprimality_test, biprimality_value, combine_biprimality, generate_candidate_shares, phi_share,
    sample_base, trial_division_public, BiprimalityOutcome, BiprimalityRound,
};
pub use config::KeygenConfig;
pub use exponent::{
    compute_shared_private_exponent, exponent_share, find_correction, ExponentDerivation, TRIAL_MESSAGE,
};
pub use keygen::{run_distributed_keygen, DistributedKey, KeygenParty, PartyKey};
pub use threshold::{
    combine_partials, partial_decrypt, recover_absent_partial, recover_exponent_share, replicate_share,
    threshold_sign, BackupScheme, PartialValue, PrivateShare, RsaPublicKey, ShareBackup,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DkgError {
    #[error("invalid keygen config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error("network: {0}")]
    Net(String),
    #[error("sampled base shares factor {factor} with the modulus")]
    GcdLeak { factor: BigUint },
    #[error("public exponent is not invertible modulo phi")]
    NotInvertible,
    #[error("no correction in range reproduces the trial message")]
    CorrectionNotFound,
    #[error("ciphertext not invertible modulo N")]
    NonInvertibleCiphertext,
    #[error("value must lie in (0, N)")]
    CiphertextOutOfRange,
    #[error("no contribution from party {0}")]
    MissingParty(PartyId),
    #[error("conflicting partials from party {0}")]
    DuplicatePartyPartial(PartyId),
    #[error("no acceptable modulus after {attempts} candidates")]
    MaxAttemptsExceeded { attempts: u64 },
}

impl From<NetError> for DkgError {
    fn from(e: NetError) -> Self {
        DkgError::Net(e.to_string())
    }
}

impl From<BgwError> for DkgError {
    fn from(e: BgwError) -> Self {
        match e {
            BgwError::Share(s) => DkgError::Share(s),
            BgwError::Net(n) => n.into(),
        }
    }
}
