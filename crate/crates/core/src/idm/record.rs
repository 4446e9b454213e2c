use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IdmError;
use crate::abe::UserId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IdentityRecord {
    pub user_id: UserId,
    pub claims: BTreeMap<String, String>,
    pub rank: String,
}

impl IdentityRecord {
    pub fn new(user: &str, rank: &str, claims: &[(&str, &str)]) -> Result<Self, IdmError> {
        let record = Self {
            user_id: UserId::new(user)?,
            claims: claims.iter().map(|(l, v)| (l.to_string(), v.to_string())).collect(),
            rank: rank.to_string(),
        };
        if record.claims.len() != claims.len() {
            return Err(IdmError::InvalidRecord("duplicate claim label".into()));
        }
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), IdmError> {
        if self.claims.keys().any(|l| l.is_empty()) {
            return Err(IdmError::InvalidRecord("empty claim label".into()));
        }
        if self.rank.is_empty() {
            return Err(IdmError::InvalidRecord("empty rank".into()));
        }
        Ok(())
    }
}
