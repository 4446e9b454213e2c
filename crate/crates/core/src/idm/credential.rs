use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::IdmError;
use crate::abe::{distribute_tree_shares, reconstruct_from_leaves, AccessTree, EvaluationContext, NodePath};
use crate::canonical::{self, bytes, bytes32};
use crate::cipher::{self, NONCE_LEN};
use crate::net::PartyId;
use crate::rng::RandomSource;
use crate::share::{shamir_reconstruct, shamir_share, PrimeField, SharePoint};

/// A credential's 32-byte symmetric key. Only the requester ever holds it.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey(pub [u8; 32]);

impl SessionKey {
    pub fn random(rng: &mut dyn RandomSource) -> Self {
        Self(rng.bytes32())
    }

    pub fn bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

/// The field over the smallest prime above `2^61`.
pub fn sharing_field() -> PrimeField {
    static FIELD: OnceLock<PrimeField> = OnceLock::new();
    FIELD
        .get_or_init(|| PrimeField::smallest_above(&(BigUint::from(1u32) << 61)))
        .clone()
}

/// First 8 bytes of the key, big-endian, reduced into the field.
pub fn field_secret(key: &SessionKey, field: &PrimeField) -> BigUint {
    let head: [u8; 8] = key.0[..8].try_into().expect("key is 32 bytes");
    field.reduce(&BigUint::from(u64::from_be_bytes(head)))
}

fn mask_for(secret: &BigUint) -> [u8; 32] {
    canonical::sha256(canonical::encode_uint(secret).as_bytes())
}

fn xor32(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    std::array::from_fn(|i| a[i] ^ b[i])
}

/// Plaintext shares of one session key before sealing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CredentialShares {
    /// Point `i` goes to roster party `i`.
    pub roster: Vec<SharePoint>,
    /// Policy-tree leaf shares, replicated to every roster party.
    pub leaves: BTreeMap<NodePath, SharePoint>,
    pub key_mask: [u8; 32],
}

/// Splits the field image `x` of `key` as `x = r + s`: `r` is Shamir
/// `t`-of-`k` over the roster, `s` goes down the policy tree.
pub fn split_session_key(
    key: &SessionKey,
    tree: &AccessTree,
    t: usize,
    k: usize,
    field: &PrimeField,
    rng: &mut dyn RandomSource,
) -> Result<CredentialShares, IdmError> {
    let x = field_secret(key, field);
    let r = field.random(rng);
    let s = field.sub(&x, &r);
    let roster = shamir_share(&r, t, k, field, rng)?.points;
    let leaves = distribute_tree_shares(tree, &s, field, rng)?;
    Ok(CredentialShares { roster, leaves, key_mask: xor32(&key.0, &mask_for(&x)) })
}

/// Inverse of [`split_session_key`]. Fewer than `t` distinct roster points
/// gives `InsufficientShares`; leaves that miss the policy give
/// `Unsatisfied`.
pub fn recover_session_key(
    roster: &[SharePoint],
    leaves: &BTreeMap<NodePath, SharePoint>,
    tree: &AccessTree,
    t: usize,
    ctx: &EvaluationContext,
    field: &PrimeField,
    key_mask: &[u8; 32],
) -> Result<SessionKey, IdmError> {
    let r = shamir_reconstruct(roster, t, field)?;
    let s = reconstruct_from_leaves(tree, leaves, ctx, field)?;
    let x = field.add(&r, &s);
    Ok(SessionKey(xor32(key_mask, &mask_for(&x))))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SealedShare {
    pub party: PartyId,
    #[serde(with = "bytes")]
    pub blob: Vec<u8>,
}

/// Everything needed to reopen a credential except the session key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CredentialCiphertext {
    pub sealed_shares: Vec<SealedShare>,
    pub access_tree: AccessTree,
    pub threshold: usize,
    pub roster: Vec<PartyId>,
    #[serde(with = "bytes32")]
    pub nonce: [u8; 32],
    /// `K xor SHA-256(canon(x))`.
    #[serde(with = "bytes32")]
    pub key_mask: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(crate) struct LeafShare {
    pub path: NodePath,
    pub point: SharePoint,
}

/// What a party's sealed blob holds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(crate) struct SealedPayload {
    #[serde(with = "bytes32")]
    pub binding: [u8; 32],
    pub roster_point: SharePoint,
    pub leaves: Vec<LeafShare>,
}

/// Digest tying sealed shares to one credential's policy and roster.
pub(crate) fn credential_binding(nonce: &[u8; 32], threshold: usize, tree: &AccessTree, roster: &[PartyId]) -> [u8; 32] {
    #[derive(Serialize)]
    #[serde(rename_all = "camelCase")]
    struct Binding<'a> {
        #[serde(with = "bytes32")]
        nonce: &'a [u8; 32],
        threshold: usize,
        #[serde(with = "bytes32")]
        tree_digest: [u8; 32],
        roster: &'a [PartyId],
    }
    canonical::digest(&Binding { nonce, threshold, tree_digest: tree.digest(), roster })
}

pub(crate) fn seal_nonce(nonce: &[u8; 32], party: PartyId) -> [u8; NONCE_LEN] {
    cipher::derive_nonce(&[nonce, b"seal", &party.0.to_be_bytes()])
}

pub(crate) fn item_nonce(nonce: &[u8; 32], label: &str) -> [u8; NONCE_LEN] {
    cipher::derive_nonce(&[nonce, b"item", label.as_bytes()])
}

pub(crate) fn seal_payload(seal_key: &[u8; 32], nonce: &[u8; 32], party: PartyId, payload: &SealedPayload) -> Vec<u8> {
    cipher::seal(seal_key, &seal_nonce(nonce, party), &canonical::to_canonical_bytes(payload))
}

pub(crate) fn open_payload(seal_key: &[u8; 32], blob: &[u8], binding: &[u8; 32]) -> Result<SealedPayload, IdmError> {
    let plain = cipher::open(seal_key, blob)?;
    let payload: SealedPayload = canonical::from_canonical_slice(&plain).map_err(|_| IdmError::IntegrityFailure)?;
    if &payload.binding != binding {
        return Err(IdmError::IntegrityFailure);
    }
    Ok(payload)
}

impl CredentialCiphertext {
    pub fn binding(&self) -> [u8; 32] {
        credential_binding(&self.nonce, self.threshold, &self.access_tree, &self.roster)
    }

    pub fn sealed_for(&self, party: PartyId) -> Option<&SealedShare> {
        self.sealed_shares.iter().find(|s| s.party == party)
    }

    pub fn validate(&self) -> Result<(), IdmError> {
        let k = self.roster.len();
        let parties: Vec<PartyId> = self.sealed_shares.iter().map(|s| s.party).collect();
        if parties != self.roster || self.threshold < 2 || self.threshold > k {
            return Err(IdmError::IntegrityFailure);
        }
        Ok(())
    }
}
