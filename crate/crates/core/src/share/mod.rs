//! Prime fields, Shamir and additive sharing, and the BGW product.

mod additive;
mod bgw;
mod field;
mod shamir;

use thiserror::Error;

pub use additive::{additive_reconstruct, additive_share, AdditiveShareVector, INTEGER_MASK_BITS};
pub use bgw::{
    bgw_deal, bgw_local_point, bgw_open, bgw_shared_product, bgw_shared_product_on, input_degree, BgwDeal,
    BgwError, BgwParty, BgwRun,
};
pub use field::{PrimeField, SharePoint, ShareSet};
pub use shamir::{dedup_shares, lagrange_at_zero, shamir_reconstruct, shamir_share, zero_share};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShareError {
    #[error("threshold {t} out of range for {n} shares")]
    ThresholdOutOfRange { t: usize, n: usize },
    #[error("secret is not a field element")]
    SecretOutOfField,
    #[error("field modulus too small")]
    FieldTooSmall,
    #[error("need {needed} distinct shares, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("conflicting shares at index {index}")]
    IndexCollision { index: u64 },
    #[error("too few parties: {k}")]
    PartyCountTooSmall { k: usize },
    #[error("{0} is not an odd prime")]
    NotPrime(String),
    #[error("share index 0 is reserved for the secret")]
    ZeroIndex,
    #[error("share {index} is not a field element")]
    ValueOutOfField { index: u64 },
}
