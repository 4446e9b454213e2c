use serde_json::{json, Value};
use thiserror::Error;

use cloudidm::abe::AbeError;
use cloudidm::bundle::BundleError;
use cloudidm::dkg::DkgError;
use cloudidm::idm::IdmError;
use cloudidm::share::ShareError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input files.
    #[error("{0}")]
    Usage(String),
    /// A protocol verdict against the request; the value goes to stdout.
    #[error("{}", .0)]
    Denied(Value),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Denied(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn verdict(name: &str) -> Self {
        CliError::Denied(json!({ "verdict": name }))
    }
}

impl From<IdmError> for CliError {
    fn from(e: IdmError) -> Self {
        match e {
            IdmError::PolicyDenied => CliError::verdict("PolicyDenied"),
            IdmError::Revoked => CliError::verdict("Revoked"),
            IdmError::Expired => CliError::verdict("Expired"),
            IdmError::StaleRevocationList => CliError::verdict("Stale"),
            IdmError::IntegrityFailure => CliError::verdict("IntegrityFailure"),
            IdmError::NoSession => CliError::verdict("NoSession"),
            IdmError::Consumed => CliError::verdict("Consumed"),
            IdmError::EpochMismatch { expected, got } => {
                CliError::Denied(json!({ "verdict": "EpochMismatch", "expected": expected, "got": got }))
            }
            IdmError::MissingParty(p) => CliError::Denied(json!({ "verdict": "Unavailable", "party": p.0 })),
            IdmError::Share(ShareError::InsufficientShares { needed, got }) => {
                CliError::Denied(json!({ "verdict": "InsufficientShares", "needed": needed, "got": got }))
            }
            IdmError::Abe(AbeError::NotMaintainer(p)) => {
                CliError::Denied(json!({ "verdict": "NotMaintainer", "party": p.0 }))
            }
            IdmError::Abe(AbeError::Unsatisfied) => CliError::verdict("PolicyDenied"),
            IdmError::Dkg(e) => e.into(),
            IdmError::Net(m) => CliError::Internal(format!("network: {m}")),
            IdmError::Bundle(e) => e.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<DkgError> for CliError {
    fn from(e: DkgError) -> Self {
        match e {
            DkgError::InvalidConfig(m) => CliError::Usage(format!("invalid keygen config: {m}")),
            DkgError::MissingParty(p) => CliError::Denied(json!({ "verdict": "Unavailable", "party": p.0 })),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::IntegrityFailure => CliError::verdict("IntegrityFailure"),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<AbeError> for CliError {
    fn from(e: AbeError) -> Self {
        IdmError::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
