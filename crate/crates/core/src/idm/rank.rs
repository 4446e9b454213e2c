use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IdmError;

/// Rank label to credential threshold. `ordering` lists ranks from least to
/// most privileged.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RankPolicy {
    pub thresholds: BTreeMap<String, usize>,
    pub ordering: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_rank: Option<String>,
}

impl RankPolicy {
    /// `{regular: 2, senior: k - 1}`.
    pub fn default_for(k: usize) -> Self {
        let thresholds = BTreeMap::from([("regular".to_string(), 2), ("senior".to_string(), k.saturating_sub(1))]);
        Self { thresholds, ordering: vec!["regular".into(), "senior".into()], default_rank: None }
    }

    pub fn new(pairs: &[(&str, usize)], default_rank: Option<&str>) -> Self {
        Self {
            thresholds: pairs.iter().map(|(r, t)| (r.to_string(), *t)).collect(),
            ordering: pairs.iter().map(|(r, _)| r.to_string()).collect(),
            default_rank: default_rank.map(str::to_string),
        }
    }

    pub fn validate(&self, k: usize) -> Result<(), IdmError> {
        let bad = |m: String| Err(IdmError::InvalidRankPolicy(m));
        if self.thresholds.is_empty() {
            return bad("no ranks".into());
        }
        for (rank, &t) in &self.thresholds {
            if t < 2 || t > k {
                return bad(format!("rank {rank:?} needs {t} participants, allowed 2..={k}"));
            }
        }
        let mut listed = self.ordering.clone();
        listed.sort();
        listed.dedup();
        if listed.len() != self.ordering.len() || !listed.iter().eq(self.thresholds.keys()) {
            return bad("ordering must list every rank exactly once".into());
        }
        for w in self.ordering.windows(2) {
            if self.thresholds[&w[0]] > self.thresholds[&w[1]] {
                return bad(format!("{:?} outranks {:?} but needs fewer participants", w[1], w[0]));
            }
        }
        if let Some(d) = &self.default_rank {
            if !self.thresholds.contains_key(d) {
                return bad(format!("default rank {d:?} is not defined"));
            }
        }
        Ok(())
    }

    /// Threshold for `rank`, falling back to the default rank.
    pub fn threshold_for(&self, rank: &str) -> Result<usize, IdmError> {
        self.thresholds
            .get(rank)
            .or_else(|| self.default_rank.as_ref().and_then(|d| self.thresholds.get(d)))
            .copied()
            .ok_or_else(|| IdmError::UnknownRank(rank.to_string()))
    }

    /// Position in the ordering; unknown ranks sort lowest.
    pub fn position(&self, rank: &str) -> Option<usize> {
        self.ordering.iter().position(|r| r == rank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        let p = RankPolicy::new(&[("regular", 2), ("senior", 4)], None);
        p.validate(5).unwrap();
        assert_eq!(p.threshold_for("senior"), Ok(4));
        assert_eq!(p.threshold_for("regular"), Ok(2));
        assert_eq!(p.threshold_for("guest"), Err(IdmError::UnknownRank("guest".into())));
        let with_default = RankPolicy::new(&[("regular", 2), ("senior", 4)], Some("regular"));
        assert_eq!(with_default.threshold_for("guest"), Ok(2));
    }

    #[test]
    fn rejects_bad_policies() {
        assert!(RankPolicy::new(&[("senior", 5)], None).validate(3).is_err());
        assert!(RankPolicy::new(&[("solo", 1)], None).validate(3).is_err());
        assert!(RankPolicy::new(&[("senior", 3), ("regular", 2)], None).validate(3).is_err());
        assert!(RankPolicy::new(&[("regular", 2)], Some("boss")).validate(3).is_err());
        let mut missing = RankPolicy::default_for(3);
        missing.ordering.pop();
        assert!(missing.validate(3).is_err());
    }

    #[test]
    fn default_policy() {
        let p = RankPolicy::default_for(5);
        p.validate(5).unwrap();
        assert_eq!(p.threshold_for("senior"), Ok(4));
        RankPolicy::default_for(3).validate(3).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<RankPolicy>(&json).unwrap(), p);
        assert!(serde_json::from_str::<RankPolicy>(r#"{"thresholds":{},"ordering":[],"extra":1}"#).is_err());
    }
}
