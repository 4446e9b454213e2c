//! Identity management over the authority parties: enrollment, credential
//! bundles, attribute keys, authorization, revocation, SSO tokens and group
//! authentication.
//!
//! Participation is a Shamir threshold `t` on each credential's session key,
//! picked by the owner's rank. The additive RSA key (all `k` fragments, with
//! backups for absent parties) protects enrollment and signs tokens.

mod credential;
mod group;
mod party;
mod protocol;
mod rank;
mod record;
mod system;
mod token;

use thiserror::Error;

use crate::abe::{AbeError, UserId};
use crate::bundle::BundleError;
use crate::dkg::DkgError;
use crate::net::{NetError, PartyId};
use crate::share::ShareError;

pub use credential::{
    field_secret, recover_session_key, sharing_field, split_session_key, CredentialCiphertext, CredentialShares,
    SealedShare, SessionKey,
};
pub use group::{group_authenticate, group_setup, GroupAuthState, GroupSetup};
pub use party::{AuthorityParty, PublicParams};
pub use rank::RankPolicy;
pub use record::IdentityRecord;
pub use system::{Authority, Authorization, BundlePolicy, Grant, TokenRequest};
pub use token::{pseudonym, token_digest_residue, verify_sso_token, SsoToken, TokenBody, TokenVerdict};
pub use protocol::{EnrollSubmit, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdmError {
    #[error(transparent)]
    Dkg(#[from] DkgError),
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("network: {0}")]
    Net(String),
    #[error("invalid rank policy: {0}")]
    InvalidRankPolicy(String),
    #[error("unknown rank {0:?}")]
    UnknownRank(String),
    #[error("user {0} is not enrolled")]
    UnknownUser(UserId),
    #[error("party {0} did not respond")]
    MissingParty(PartyId),
    #[error("invalid identity record: {0}")]
    InvalidRecord(String),
    #[error("integrity check failed")]
    IntegrityFailure,
    #[error("policy denied")]
    PolicyDenied,
    #[error("access revoked")]
    Revoked,
    #[error("context outside the policy's time window")]
    Expired,
    #[error("revocation replica is stale")]
    StaleRevocationList,
    #[error("no labels requested")]
    NoLabels,
    #[error("label {0:?} not in bundle")]
    LabelUnknown(String),
    #[error("no authorized session for this request")]
    NoSession,
    #[error("group state is for epoch {expected}, got {got}")]
    EpochMismatch { expected: u64, got: u64 },
    #[error("group state already consumed")]
    Consumed,
    #[error("token lifetime must be positive")]
    InvalidLifetime,
}

impl From<NetError> for IdmError {
    fn from(e: NetError) -> Self {
        IdmError::Net(e.to_string())
    }
}

impl From<crate::cipher::CipherError> for IdmError {
    fn from(_: crate::cipher::CipherError) -> Self {
        IdmError::IntegrityFailure
    }
}
