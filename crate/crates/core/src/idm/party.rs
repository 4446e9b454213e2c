use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{IdentityRecord, RankPolicy};
use crate::abe::{AttributeId, MasterSecret, RevocationList, UserId};
use crate::canonical::bytes32;
use crate::dkg::{BackupScheme, PartyKey, RsaPublicKey};
use crate::net::PartyId;
use crate::share::PrimeField;

/// Everything published after setup.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PublicParams {
    pub rsa: RsaPublicKey,
    pub parties: usize,
    /// Public term added to the exponent fragments when combining.
    pub correction: u32,
    pub sharing_field: PrimeField,
    pub backup: BackupScheme,
    pub rank_policy: RankPolicy,
    pub maintainer: PartyId,
}

/// Attributes party-side records as granted to a user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IssuedGrant {
    pub attributes: Vec<AttributeId>,
    pub rank: String,
}

/// An authorization this party approved and may later sign a token for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Approval {
    pub user: UserId,
    pub epoch: u64,
}

/// One authority party's whole local state.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AuthorityParty {
    pub id: PartyId,
    pub key: PartyKey,
    pub master: MasterSecret,
    #[serde(with = "bytes32")]
    pub seal_key: [u8; 32],
    pub arl: RevocationList,
    pub records: BTreeMap<UserId, IdentityRecord>,
    pub issued: BTreeMap<UserId, IssuedGrant>,
    /// Session id (hex) to the user it was approved for.
    pub approvals: BTreeMap<String, Approval>,
    /// Pseudonymous token subjects back to users.
    pub pseudonyms: BTreeMap<String, UserId>,
}

impl fmt::Debug for AuthorityParty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuthorityParty")
            .field("id", &self.id)
            .field("arl_version", &self.arl.version())
            .field("records", &self.records.len())
            .finish_non_exhaustive()
    }
}

impl AuthorityParty {
    pub fn new(key: PartyKey, master: MasterSecret, seal_key: [u8; 32], maintainer: PartyId) -> Self {
        Self {
            id: key.share.party,
            key,
            master,
            seal_key,
            arl: RevocationList::new(maintainer),
            records: BTreeMap::new(),
            issued: BTreeMap::new(),
            approvals: BTreeMap::new(),
            pseudonyms: BTreeMap::new(),
        }
    }
}
