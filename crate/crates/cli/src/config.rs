use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use cloudidm::dkg::KeygenConfig;
use cloudidm::idm::{BundlePolicy, RankPolicy};

use crate::error::CliError;

/// Optional overrides for the keygen defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KeygenParams {
    pub prime_share_bits: Option<u32>,
    pub trial_division_bound: Option<u64>,
    pub biprimality_rounds: Option<u32>,
    pub public_exponent: Option<u64>,
    pub max_attempts: Option<u64>,
    pub batch_size: Option<u32>,
    pub backup_threshold: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CliConfig {
    pub state_dir: Option<PathBuf>,
    pub parties: Option<u32>,
    pub seed: Option<u64>,
    pub rank_policy: Option<RankPolicy>,
    #[serde(default)]
    pub keygen: KeygenParams,
    #[serde(default)]
    pub sensitivities: BTreeMap<String, f64>,
    pub default_sensitivity: Option<f64>,
    pub apoptosis_threshold: Option<f64>,
    pub evaporation_threshold: Option<f64>,
}

pub const DEFAULT_PARTIES: u32 = 3;
pub const DEFAULT_SHARE_BITS: u32 = 16;

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let cfg: CliConfig =
            serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CliError::usage(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        for (label, s) in &self.sensitivities {
            unit(&format!("sensitivity of {label:?}"), *s)?;
        }
        if let Some(s) = self.default_sensitivity {
            unit("defaultSensitivity", s)?;
        }
        if let Some(t) = self.apoptosis_threshold {
            unit("apoptosisThreshold", t)?;
        }
        if let Some(t) = self.evaporation_threshold {
            unit("evaporationThreshold", t)?;
        }
        if let Some(k) = self.parties {
            self.keygen_config(k, None).validate()?;
            if let Some(rp) = &self.rank_policy {
                rp.validate(k as usize)?;
            }
        }
        Ok(())
    }

    pub fn keygen_config(&self, parties: u32, bits: Option<u32>) -> KeygenConfig {
        let p = &self.keygen;
        let bits = bits.or(p.prime_share_bits).unwrap_or(DEFAULT_SHARE_BITS);
        let mut cfg = KeygenConfig::new(parties, bits);
        if let Some(b) = p.trial_division_bound {
            cfg = cfg.with_trial_division_bound(b);
        }
        if let Some(s) = p.biprimality_rounds {
            cfg = cfg.with_rounds(s);
        }
        if let Some(e) = p.public_exponent {
            cfg = cfg.with_exponent(e);
        }
        if let Some(n) = p.max_attempts {
            cfg = cfg.with_max_attempts(n);
        }
        if let Some(n) = p.batch_size {
            cfg = cfg.with_batch_size(n);
        }
        if let Some(t) = p.backup_threshold {
            cfg = cfg.with_backup_threshold(t);
        }
        cfg
    }

    pub fn bundle_policy(&self) -> BundlePolicy {
        let mut policy = BundlePolicy { sensitivities: self.sensitivities.clone(), ..BundlePolicy::default() };
        if let Some(s) = self.default_sensitivity {
            policy.default_sensitivity = s;
        }
        if let Some(t) = self.apoptosis_threshold {
            policy.apoptosis_threshold = t;
        }
        if let Some(t) = self.evaporation_threshold {
            policy.evaporation_threshold = t;
        }
        policy
    }
}
