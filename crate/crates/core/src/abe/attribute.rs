use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AbeError, AttributeId, RevocationList};
use crate::canonical::{self, bytes32};
use crate::net::PartyId;
use crate::rng::RandomSource;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub fn new(s: &str) -> Result<Self, AbeError> {
        if s.is_empty() {
            return Err(AbeError::InvalidUser(s.to_string()));
        }
        Ok(Self(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for UserId {
    type Error = AbeError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        UserId::new(&s)
    }
}

impl From<UserId> for String {
    fn from(u: UserId) -> Self {
        u.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One authority party's 32-byte share of the master key.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MasterSecret(#[serde(with = "bytes32")] pub [u8; 32]);

impl MasterSecret {
    pub fn random(rng: &mut dyn RandomSource) -> Self {
        Self(rng.bytes32())
    }
}

impl fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterSecret(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeTag(#[serde(with = "bytes32")] pub [u8; 32]);

fn fold_link(tag: &AttributeTag, child: &UserId) -> AttributeTag {
    AttributeTag(canonical::sha256_concat(&[&tag.0, b"dlg", &canonical::to_canonical_bytes(child)]))
}

/// `SHA-256(mk || canon(root) || canon(attr))`, then one fold
/// `SHA-256(tag || "dlg" || canon(child))` per delegation link.
pub fn issue_tag(mk: &MasterSecret, root: &UserId, attr: &AttributeId, descendants: &[UserId]) -> AttributeTag {
    let base = AttributeTag(canonical::sha256_concat(&[
        &mk.0,
        &canonical::to_canonical_bytes(root),
        &canonical::to_canonical_bytes(attr),
    ]));
    descendants.iter().fold(base, |t, c| fold_link(&t, c))
}

/// A user's attribute credential: one tag per attribute per authority
/// party (entry `i - 1` is party `i`'s).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AttributeKey {
    pub user: UserId,
    pub attributes: BTreeSet<AttributeId>,
    pub rank: String,
    pub epoch: u64,
    pub tags: BTreeMap<AttributeId, Vec<AttributeTag>>,
    /// Ancestors, root grantee first. Empty for keys issued directly.
    pub delegation_chain: Vec<UserId>,
}

impl AttributeKey {
    /// Root grantee followed by every delegate down to this key's user.
    pub fn identity_path(&self) -> Vec<UserId> {
        let mut path = self.delegation_chain.clone();
        path.push(self.user.clone());
        path
    }

    pub fn tag(&self, party: PartyId, attr: &AttributeId) -> Option<&AttributeTag> {
        self.tags.get(attr).and_then(|v| v.get(party.index()))
    }
}

/// Derives a key for `child` over `subset` from `parent` alone.
pub fn delegate(parent: &AttributeKey, child: &UserId, subset: &BTreeSet<AttributeId>) -> Result<AttributeKey, AbeError> {
    if !subset.is_subset(&parent.attributes) {
        return Err(AbeError::NotASubset);
    }
    if parent.identity_path().contains(child) {
        return Err(AbeError::SelfDelegation(child.clone()));
    }
    let tags = subset
        .iter()
        .map(|a| (a.clone(), parent.tags[a].iter().map(|t| fold_link(t, child)).collect()))
        .collect();
    Ok(AttributeKey {
        user: child.clone(),
        attributes: subset.clone(),
        rank: parent.rank.clone(),
        epoch: parent.epoch,
        tags,
        delegation_chain: parent.identity_path(),
    })
}

/// Party-side check of one attribute on a presented key. Fails closed when
/// the local revocation replica is older than `current_version`.
pub fn verify_attribute_tag(
    party: PartyId,
    mk: &MasterSecret,
    key: &AttributeKey,
    attr: &AttributeId,
    replica: &RevocationList,
    current_version: u64,
) -> Result<bool, AbeError> {
    if replica.version() < current_version {
        return Err(AbeError::StaleRevocationList { replica: replica.version(), current: current_version });
    }
    if !key.attributes.contains(attr) {
        return Ok(false);
    }
    let path = key.identity_path();
    let Some(presented) = key.tag(party, attr) else {
        return Ok(false);
    };
    let expected = issue_tag(mk, &path[0], attr, &path[1..]);
    Ok(*presented == expected && !replica.revokes(&path, attr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abe::RevocationTarget;
    use crate::rng::DeterministicRng;

    fn attr(s: &str) -> AttributeId {
        format!("lab/{s}").parse().unwrap()
    }

    fn user(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    fn secrets(k: usize) -> Vec<MasterSecret> {
        let mut rng = DeterministicRng::from_u64(31);
        (0..k).map(|_| MasterSecret::random(&mut rng)).collect()
    }

    fn issue(mks: &[MasterSecret], who: &str, attrs: &[&str]) -> AttributeKey {
        let u = user(who);
        let attributes: BTreeSet<AttributeId> = attrs.iter().map(|a| attr(a)).collect();
        let tags = attributes
            .iter()
            .map(|a| (a.clone(), mks.iter().map(|mk| issue_tag(mk, &u, a, &[])).collect()))
            .collect();
        AttributeKey { user: u, attributes, rank: "senior".into(), epoch: 0, tags, delegation_chain: vec![] }
    }

    fn alice(mks: &[MasterSecret]) -> AttributeKey {
        issue(mks, "alice", &["head of security lab", "lecturer", "member of security lab"])
    }

    fn bob_subset() -> BTreeSet<AttributeId> {
        [attr("lecturer"), attr("member of security lab")].into_iter().collect()
    }

    #[test]
    fn tag_folding_definition() {
        let mks = secrets(2);
        let a = attr("lecturer");
        let root = issue_tag(&mks[0], &user("alice"), &a, &[]);
        let expected = canonical::sha256_concat(&[
            &mks[0].0,
            br#""alice""#,
            br#""lab/lecturer""#,
        ]);
        assert_eq!(root.0, expected);
        let folded = issue_tag(&mks[0], &user("alice"), &a, &[user("bob")]);
        assert_eq!(folded.0, canonical::sha256_concat(&[&root.0, b"dlg", br#""bob""#]));
        assert_eq!(folded, issue_tag(&mks[0], &user("alice"), &a, &[user("bob")]));
        assert_ne!(root, issue_tag(&mks[1], &user("alice"), &a, &[]));
    }

    #[test]
    fn alice_delegates_to_bob() {
        let mks = secrets(3);
        let list = RevocationList::new(PartyId(1));
        let alice = alice(&mks);
        let bob = delegate(&alice, &user("bob"), &bob_subset()).unwrap();
        assert_eq!(bob.delegation_chain, vec![user("alice")]);
        assert_eq!(bob.rank, alice.rank);
        for (i, mk) in mks.iter().enumerate() {
            let p = PartyId::from_index(i);
            assert!(verify_attribute_tag(p, mk, &bob, &attr("lecturer"), &list, 0).unwrap());
            assert!(!verify_attribute_tag(p, mk, &bob, &attr("head of security lab"), &list, 0).unwrap());
            assert!(verify_attribute_tag(p, mk, &alice, &attr("head of security lab"), &list, 0).unwrap());
        }
        let superset: BTreeSet<AttributeId> = [attr("lecturer"), attr("dean")].into_iter().collect();
        assert_eq!(delegate(&alice, &user("bob"), &superset), Err(AbeError::NotASubset));
        assert_eq!(
            delegate(&alice, &user("alice"), &bob_subset()),
            Err(AbeError::SelfDelegation(user("alice")))
        );
        assert_eq!(delegate(&bob, &user("alice"), &bob_subset()), Err(AbeError::SelfDelegation(user("alice"))));
    }

    #[test]
    fn forged_tag_rejected() {
        let mks = secrets(3);
        let list = RevocationList::new(PartyId(1));
        let mut key = alice(&mks);
        key.tags.get_mut(&attr("lecturer")).unwrap()[1].0[0] ^= 1;
        assert!(!verify_attribute_tag(PartyId(2), &mks[1], &key, &attr("lecturer"), &list, 0).unwrap());
        assert!(verify_attribute_tag(PartyId(1), &mks[0], &key, &attr("lecturer"), &list, 0).unwrap());
        let mut attached = alice(&mks);
        attached.attributes.insert(attr("dean"));
        assert!(!verify_attribute_tag(PartyId(1), &mks[0], &attached, &attr("dean"), &list, 0).unwrap());
    }

    #[test]
    fn revocation_cascades() {
        let mks = secrets(3);
        let alice = alice(&mks);
        let bob = delegate(&alice, &user("bob"), &bob_subset()).unwrap();
        let carol = delegate(&bob, &user("carol"), &[attr("lecturer")].into_iter().collect()).unwrap();
        let mut list = RevocationList::new(PartyId(1));
        list.revoke(PartyId(1), RevocationTarget::Grant(user("alice"), attr("member of security lab"))).unwrap();
        let check = |k: &AttributeKey, a: &str, l: &RevocationList| {
            verify_attribute_tag(PartyId(3), &mks[2], k, &attr(a), l, l.version()).unwrap()
        };
        assert!(!check(&bob, "member of security lab", &list));
        assert!(check(&bob, "lecturer", &list));
        list.revoke(PartyId(1), RevocationTarget::User(user("bob"))).unwrap();
        assert!(!check(&bob, "lecturer", &list));
        assert!(!check(&carol, "lecturer", &list));
        assert!(check(&alice, "lecturer", &list));
        let stale = RevocationList::new(PartyId(1));
        assert_eq!(
            verify_attribute_tag(PartyId(3), &mks[2], &alice, &attr("lecturer"), &stale, 2),
            Err(AbeError::StaleRevocationList { replica: 0, current: 2 })
        );
    }

    #[test]
    fn keys_round_trip_through_json() {
        let key = alice(&secrets(3));
        let text = canonical::to_canonical_string(&key);
        assert_eq!(serde_json::from_str::<AttributeKey>(&text).unwrap(), key);
        assert!(serde_json::from_str::<UserId>(r#""""#).is_err());
    }
}
