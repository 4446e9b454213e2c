use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::IdmError;
use crate::canonical::{self, biguint, bytes32};
use crate::rng::RandomSource;
use crate::share::{dedup_shares, shamir_reconstruct, shamir_share, PrimeField, ShareError, SharePoint};

/// Verifier-side record of one group epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GroupAuthState {
    pub group_id: String,
    pub epoch: u64,
    #[serde(with = "bytes32")]
    pub commitment: [u8; 32],
    pub member_shares: BTreeMap<String, SharePoint>,
    pub threshold: usize,
    pub members: usize,
    pub field: PrimeField,
    pub consumed: bool,
}

/// Setup output: the state plus what each member is handed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSetup {
    pub state: GroupAuthState,
    pub deliveries: Vec<(String, SharePoint)>,
}

fn commitment(secret: &BigUint, epoch: u64) -> [u8; 32] {
    #[derive(Serialize)]
    struct Bound<'a>(#[serde(with = "biguint")] &'a BigUint, u64);
    canonical::digest(&Bound(secret, epoch))
}

/// Samples a fresh group secret and deals it `t`-of-`n`; member `j` (in
/// the given order) gets index `j + 1`.
pub fn group_setup(
    group_id: &str,
    members: &[String],
    t: usize,
    field: &PrimeField,
    epoch: u64,
    rng: &mut dyn RandomSource,
) -> Result<GroupSetup, IdmError> {
    let n = members.len();
    if t < 2 || t > n {
        return Err(ShareError::ThresholdOutOfRange { t, n }.into());
    }
    let secret = field.random(rng);
    let set = shamir_share(&secret, t, n, field, rng)?;
    let deliveries: Vec<(String, SharePoint)> = members.iter().cloned().zip(set.points).collect();
    let state = GroupAuthState {
        group_id: group_id.to_string(),
        epoch,
        commitment: commitment(&secret, epoch),
        member_shares: deliveries.iter().cloned().collect(),
        threshold: t,
        members: n,
        field: field.clone(),
        consumed: false,
    };
    Ok(GroupSetup { state, deliveries })
}

/// Accepts when at least `t` distinct submissions reconstruct the committed
/// secret. A successful check consumes the state.
pub fn group_authenticate(state: &mut GroupAuthState, submitted: &[SharePoint], epoch: u64) -> Result<bool, IdmError> {
    if state.consumed {
        return Err(IdmError::Consumed);
    }
    if epoch != state.epoch {
        return Err(IdmError::EpochMismatch { expected: state.epoch, got: epoch });
    }
    let distinct = match dedup_shares(submitted, &state.field) {
        Ok(d) => d,
        Err(ShareError::IndexCollision { .. }) => return Ok(false),
        Err(e) => return Err(e.into()),
    };
    if distinct.len() < state.threshold {
        return Err(ShareError::InsufficientShares { needed: state.threshold, got: distinct.len() }.into());
    }
    let candidate = match shamir_reconstruct(&distinct, state.threshold, &state.field) {
        Ok(v) => v,
        Err(ShareError::ValueOutOfField { .. } | ShareError::ZeroIndex) => return Ok(false),
        Err(e) => return Err(e.into()),
    };
    let ok = commitment(&candidate, epoch) == state.commitment;
    if ok {
        state.consumed = true;
    }
    Ok(ok)
}
