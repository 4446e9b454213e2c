//! Active bundles: encrypted claim items plus the policy and thresholds a
//! host-side runtime enforces on arrival.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abe::AccessTree;
use crate::canonical::{self, bytes, bytes32};
use crate::idm::CredentialCiphertext;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("apoptosis threshold {apoptosis} exceeds evaporation threshold {evaporation}")]
    ThresholdOrder { apoptosis: String, evaporation: String },
    #[error("value {0} is outside [0, 1]")]
    OutOfUnitRange(String),
    #[error("trust {trust} is outside the evaporation band")]
    ThresholdViolation { trust: String },
    #[error("bundle digest mismatch")]
    IntegrityFailure,
    #[error("duplicate item label {0:?}")]
    DuplicateLabel(String),
    #[error("label {0:?} not in bundle")]
    LabelUnknown(String),
}

fn unit(v: f64) -> Result<f64, BundleError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(BundleError::OutOfUnitRange(v.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BundleItem {
    pub label: String,
    pub sensitivity: f64,
    #[serde(with = "bytes")]
    pub ciphertext: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct HostProfile {
    pub host_id: String,
    pub trust_level: f64,
}

impl HostProfile {
    pub fn new(host_id: &str, trust_level: f64) -> Result<Self, BundleError> {
        Ok(Self { host_id: host_id.to_string(), trust_level: unit(trust_level)? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision")]
pub enum Decision {
    Apoptosis,
    Evaporate { retained: Vec<String> },
    Full,
}

/// Fields covered by the digest, in the same shape as the file form.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Body<'a> {
    bundle_id: &'a str,
    items: &'a [BundleItem],
    access_tree: &'a AccessTree,
    apoptosis_threshold: f64,
    evaporation_threshold: f64,
    creation_epoch: u64,
    credential: &'a Option<CredentialCiphertext>,
    tombstone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ActiveBundle {
    bundle_id: String,
    items: Vec<BundleItem>,
    access_tree: AccessTree,
    apoptosis_threshold: f64,
    evaporation_threshold: f64,
    creation_epoch: u64,
    credential: Option<CredentialCiphertext>,
    tombstone: bool,
    #[serde(with = "bytes32")]
    integrity_digest: [u8; 32],
}

impl ActiveBundle {
    /// Items are sorted by label; labels must be unique.
    pub fn new(
        bundle_id: &str,
        mut items: Vec<BundleItem>,
        access_tree: AccessTree,
        apoptosis_threshold: f64,
        evaporation_threshold: f64,
        creation_epoch: u64,
        credential: Option<CredentialCiphertext>,
    ) -> Result<Self, BundleError> {
        unit(apoptosis_threshold)?;
        unit(evaporation_threshold)?;
        if apoptosis_threshold > evaporation_threshold {
            return Err(BundleError::ThresholdOrder {
                apoptosis: apoptosis_threshold.to_string(),
                evaporation: evaporation_threshold.to_string(),
            });
        }
        for item in &items {
            unit(item.sensitivity)?;
        }
        items.sort_by(|a, b| a.label.cmp(&b.label));
        if let Some(w) = items.windows(2).find(|w| w[0].label == w[1].label) {
            return Err(BundleError::DuplicateLabel(w[0].label.clone()));
        }
        let mut ab = Self {
            bundle_id: bundle_id.to_string(),
            items,
            access_tree,
            apoptosis_threshold,
            evaporation_threshold,
            creation_epoch,
            credential,
            tombstone: false,
            integrity_digest: [0; 32],
        };
        ab.reseal();
        Ok(ab)
    }

    fn body(&self) -> Body<'_> {
        Body {
            bundle_id: &self.bundle_id,
            items: &self.items,
            access_tree: &self.access_tree,
            apoptosis_threshold: self.apoptosis_threshold,
            evaporation_threshold: self.evaporation_threshold,
            creation_epoch: self.creation_epoch,
            credential: &self.credential,
            tombstone: self.tombstone,
        }
    }

    fn compute_digest(&self) -> [u8; 32] {
        canonical::digest(&self.body())
    }

    fn reseal(&mut self) {
        self.integrity_digest = self.compute_digest();
    }

    pub fn bundle_id(&self) -> &str {
        &self.bundle_id
    }

    pub fn items(&self) -> &[BundleItem] {
        &self.items
    }

    pub fn item(&self, label: &str) -> Option<&BundleItem> {
        self.items.iter().find(|i| i.label == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.items.iter().map(|i| i.label.clone()).collect()
    }

    pub fn access_tree(&self) -> &AccessTree {
        &self.access_tree
    }

    pub fn thresholds(&self) -> (f64, f64) {
        (self.apoptosis_threshold, self.evaporation_threshold)
    }

    pub fn creation_epoch(&self) -> u64 {
        self.creation_epoch
    }

    pub fn credential(&self) -> Option<&CredentialCiphertext> {
        self.credential.as_ref()
    }

    pub fn is_tombstone(&self) -> bool {
        self.tombstone
    }

    pub fn integrity_digest(&self) -> &[u8; 32] {
        &self.integrity_digest
    }

    pub fn verify_integrity(&self) -> bool {
        self.compute_digest() == self.integrity_digest
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self)
    }

    /// Parses the file form without checking the digest.
    pub fn from_canonical_slice(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

pub fn verify_integrity(ab: &ActiveBundle) -> bool {
    ab.verify_integrity()
}

/// What a host with `host`'s trust level gets to keep.
pub fn evaluate_arrival(ab: &ActiveBundle, host: &HostProfile) -> Result<Decision, BundleError> {
    if !ab.verify_integrity() {
        return Err(BundleError::IntegrityFailure);
    }
    let tau = host.trust_level;
    Ok(if tau < ab.apoptosis_threshold {
        Decision::Apoptosis
    } else if tau < ab.evaporation_threshold {
        let retained = ab.items.iter().filter(|i| i.sensitivity <= tau).map(|i| i.label.clone()).collect();
        Decision::Evaporate { retained }
    } else {
        Decision::Full
    })
}

/// Applies the arrival decision. A digest mismatch is treated as
/// apoptosis.
pub fn process_arrival(ab: &ActiveBundle, host: &HostProfile) -> (Decision, ActiveBundle) {
    match evaluate_arrival(ab, host) {
        Ok(Decision::Apoptosis) => (Decision::Apoptosis, apoptose(ab)),
        Ok(Decision::Evaporate { retained }) => {
            let kept = evaporate(ab, host.trust_level).expect("trust inside the evaporation band");
            (Decision::Evaporate { retained }, kept)
        }
        Ok(Decision::Full) => (Decision::Full, ab.clone()),
        Err(_) => {
            log::warn!("bundle {} failed integrity on {}, apoptosing", ab.bundle_id, host.host_id);
            (Decision::Apoptosis, apoptose(ab))
        }
    }
}

/// Wipes and drops every item and the credential.
pub fn apoptose(ab: &ActiveBundle) -> ActiveBundle {
    if ab.tombstone && ab.verify_integrity() {
        return ab.clone();
    }
    let mut dead = ab.clone();
    for item in dead.items.iter_mut() {
        item.ciphertext.iter_mut().for_each(|b| *b = 0);
    }
    dead.items.clear();
    dead.credential = None;
    dead.tombstone = true;
    dead.reseal();
    dead
}

/// Drops items more sensitive than `trust`.
pub fn evaporate(ab: &ActiveBundle, trust: f64) -> Result<ActiveBundle, BundleError> {
    if !(ab.apoptosis_threshold <= trust && trust < ab.evaporation_threshold) {
        return Err(BundleError::ThresholdViolation { trust: trust.to_string() });
    }
    let mut kept = ab.clone();
    for item in kept.items.iter_mut().filter(|i| i.sensitivity > trust) {
        item.ciphertext.iter_mut().for_each(|b| *b = 0);
    }
    kept.items.retain(|i| i.sensitivity <= trust);
    kept.reseal();
    Ok(kept)
}
