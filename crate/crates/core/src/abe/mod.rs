//! Access-tree policies, attribute tags, delegation and revocation.
//!
//! There are no pairings here. A policy is enforced by splitting a secret
//! down the tree with Shamir sharing and having each authority party
//! release a leaf's share only after checking the requester's tag for that
//! leaf's attribute.

mod attribute;
mod revocation;
mod tree;

use thiserror::Error;

use crate::net::PartyId;
use crate::share::ShareError;

pub use attribute::{delegate, issue_tag, verify_attribute_tag, AttributeKey, AttributeTag, MasterSecret, UserId};
pub use revocation::{RevocationList, RevocationTarget};
pub use tree::{
    distribute_tree_shares, reconstruct_from_leaves, satisfies, AccessTree, AttributeId, EvaluationContext, NodePath,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbeError {
    #[error("invalid access tree: {0}")]
    InvalidTree(String),
    #[error("invalid attribute {0:?}: expected namespace/name")]
    InvalidAttribute(String),
    #[error("invalid user id {0:?}")]
    InvalidUser(String),
    #[error("field modulus does not exceed the largest gate fan-out")]
    FieldTooSmall,
    #[error("available leaves do not satisfy the policy")]
    Unsatisfied,
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error("delegated attributes are not a subset of the parent's")]
    NotASubset,
    #[error("cannot delegate to {0}, already on the chain")]
    SelfDelegation(UserId),
    #[error("revocation replica at version {replica}, maintainer at {current}")]
    StaleRevocationList { replica: u64, current: u64 },
    #[error("party {0} does not maintain the revocation list")]
    NotMaintainer(PartyId),
}
