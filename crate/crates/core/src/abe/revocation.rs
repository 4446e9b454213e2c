use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AbeError, AttributeId, UserId};
use crate::net::PartyId;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RevokedGrant {
    pub user: UserId,
    pub attribute: AttributeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RevocationTarget {
    User(UserId),
    Grant(UserId, AttributeId),
}

/// Versioned revocation list with a single writer. Entries are never
/// removed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RevocationList {
    version: u64,
    revoked_users: BTreeSet<UserId>,
    revoked_grants: BTreeSet<RevokedGrant>,
    maintainer: PartyId,
}

impl RevocationList {
    pub fn new(maintainer: PartyId) -> Self {
        Self { version: 0, revoked_users: BTreeSet::new(), revoked_grants: BTreeSet::new(), maintainer }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn maintainer(&self) -> PartyId {
        self.maintainer
    }

    pub fn revoked_users(&self) -> &BTreeSet<UserId> {
        &self.revoked_users
    }

    /// Adds `target` and bumps the version, even when already present.
    pub fn revoke(&mut self, caller: PartyId, target: RevocationTarget) -> Result<u64, AbeError> {
        if caller != self.maintainer {
            return Err(AbeError::NotMaintainer(caller));
        }
        match target {
            RevocationTarget::User(u) => {
                self.revoked_users.insert(u);
            }
            RevocationTarget::Grant(user, attribute) => {
                self.revoked_grants.insert(RevokedGrant { user, attribute });
            }
        }
        self.version += 1;
        Ok(self.version)
    }

    /// Replaces a read-only replica with a newer copy from the same
    /// maintainer. Older or foreign copies are ignored.
    pub fn apply_update(&mut self, newer: &RevocationList) -> bool {
        if newer.maintainer != self.maintainer || newer.version <= self.version {
            return false;
        }
        *self = newer.clone();
        true
    }

    /// True when any member of `path` is revoked outright or for `attr`.
    pub fn revokes(&self, path: &[UserId], attr: &AttributeId) -> bool {
        path.iter().any(|u| {
            self.revoked_users.contains(u)
                || self.revoked_grants.contains(&RevokedGrant { user: u.clone(), attribute: attr.clone() })
        })
    }

    /// True when some member of `path` is revoked outright.
    pub fn revokes_user(&self, path: &[UserId]) -> bool {
        path.iter().any(|u| self.revoked_users.contains(u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn user(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    #[test]
    fn only_maintainer_writes() {
        let mut l = RevocationList::new(PartyId(1));
        assert_eq!(l.revoke(PartyId(2), RevocationTarget::User(user("bob"))), Err(AbeError::NotMaintainer(PartyId(2))));
        assert_eq!(l.version(), 0);
        assert_eq!(l.revoke(PartyId(1), RevocationTarget::User(user("bob"))), Ok(1));
        assert_eq!(l.revoke(PartyId(1), RevocationTarget::User(user("bob"))), Ok(2));
        assert!(l.revokes_user(&[user("alice"), user("bob")]));
    }

    #[test]
    fn replicas_only_move_forward() {
        let mut master = RevocationList::new(PartyId(1));
        let mut replica = master.clone();
        master.revoke(PartyId(1), RevocationTarget::User(user("bob"))).unwrap();
        assert!(replica.apply_update(&master));
        assert!(!replica.apply_update(&RevocationList::new(PartyId(1))));
        assert!(!replica.apply_update(&master));
        assert_eq!(replica, master);
        let foreign = RevocationList { version: 9, ..RevocationList::new(PartyId(2)) };
        assert!(!replica.apply_update(&foreign));
    }

    proptest! {
        #[test]
        fn version_strictly_increases(ops in proptest::collection::vec((0u8..4, any::<bool>()), 1..30)) {
            let mut l = RevocationList::new(PartyId(1));
            let names = ["alice", "bob", "carol", "dave"];
            let attr: AttributeId = "lab/lecturer".parse().unwrap();
            let mut seen = Vec::new();
            for (who, grant) in ops {
                let before = l.version();
                let u = user(names[who as usize]);
                let target = if grant { RevocationTarget::Grant(u.clone(), attr.clone()) } else { RevocationTarget::User(u.clone()) };
                l.revoke(PartyId(1), target).unwrap();
                prop_assert!(l.version() > before);
                seen.push((u, grant));
                for (u, grant) in &seen {
                    prop_assert!(l.revokes(std::slice::from_ref(u), &attr));
                    if !grant {
                        prop_assert!(l.revokes_user(std::slice::from_ref(u)));
                    }
                }
            }
        }
    }
}
