use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::DkgError;
use crate::arith;
use crate::canonical::biguint;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KeygenConfig {
    pub parties: u32,
    pub prime_share_bits: u32,
    pub trial_division_bound: u64,
    pub biprimality_rounds: u32,
    pub public_exponent: u64,
    #[serde(with = "biguint")]
    pub bgw_prime: BigUint,
    pub max_attempts: u64,
    pub batch_size: u32,
    /// Holders needed to rebuild an absent party's exponent share.
    pub backup_threshold: u32,
}

fn ceil_log2(k: u32) -> u32 {
    32 - k.saturating_sub(1).leading_zeros()
}

impl KeygenConfig {
    /// Defaults: 40 biprimality rounds, e = 65537, B = 1000, no batching,
    /// and the smallest admissible BGW prime.
    pub fn new(parties: u32, prime_share_bits: u32) -> Self {
        Self {
            parties,
            prime_share_bits,
            trial_division_bound: 1000,
            biprimality_rounds: 40,
            public_exponent: 65537,
            bgw_prime: Self::default_bgw_prime(parties, prime_share_bits),
            max_attempts: 100_000,
            batch_size: 1,
            backup_threshold: (parties.saturating_sub(1)) / 2 + 1,
        }
    }

    /// Smallest prime above `2^(2 (bits + ceil(log2 k)))`, which bounds
    /// every possible modulus.
    pub fn default_bgw_prime(parties: u32, prime_share_bits: u32) -> BigUint {
        let exp = 2 * (prime_share_bits + ceil_log2(parties.max(1)));
        arith::next_prime_above(&(BigUint::from(1u32) << exp))
    }

    pub fn with_trial_division_bound(mut self, b: u64) -> Self {
        self.trial_division_bound = b;
        self
    }

    pub fn with_rounds(mut self, s: u32) -> Self {
        self.biprimality_rounds = s;
        self
    }

    pub fn with_exponent(mut self, e: u64) -> Self {
        self.public_exponent = e;
        self
    }

    pub fn with_max_attempts(mut self, n: u64) -> Self {
        self.max_attempts = n;
        self
    }

    pub fn with_batch_size(mut self, n: u32) -> Self {
        self.batch_size = n;
        self
    }

    pub fn with_backup_threshold(mut self, t: u32) -> Self {
        self.backup_threshold = t;
        self
    }

    pub fn validate(&self) -> Result<(), DkgError> {
        let bad = |m: String| Err(DkgError::InvalidConfig(m));
        let k = self.parties;
        if k < 3 {
            return bad(format!("need at least 3 parties, got {k}"));
        }
        if self.prime_share_bits < 4 {
            return bad("prime share bits must be at least 4".into());
        }
        let e = self.public_exponent;
        if e < 3 || !arith::is_prime_u64(e) {
            return bad(format!("public exponent {e} is not an odd prime"));
        }
        if self.biprimality_rounds < 1 {
            return bad("need at least one biprimality round".into());
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1".into());
        }
        if self.max_attempts < 1 {
            return bad("max attempts must be at least 1".into());
        }
        let exp = 2 * (self.prime_share_bits + ceil_log2(k));
        if self.bgw_prime <= (BigUint::from(1u32) << exp) || !arith::is_prime(&self.bgw_prime) {
            return bad(format!("BGW modulus must be a prime above 2^{exp}"));
        }
        let smallest_factor = BigUint::from(k) << (self.prime_share_bits - 1);
        if BigUint::from(self.trial_division_bound) >= smallest_factor {
            return bad(format!(
                "trial division bound {} reaches the smallest possible factor {smallest_factor}",
                self.trial_division_bound
            ));
        }
        if self.backup_threshold < 2 || self.backup_threshold > k {
            return bad(format!("backup threshold must lie in [2, {k}]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = KeygenConfig::new(3, 16);
        cfg.validate().unwrap();
        assert_eq!(cfg.biprimality_rounds, 40);
        assert_eq!(cfg.public_exponent, 65537);
        assert_eq!(cfg.backup_threshold, 2);
        assert!(cfg.bgw_prime > BigUint::from(1u64 << 36));
        assert_eq!(KeygenConfig::new(5, 16).backup_threshold, 3);
    }

    #[test]
    fn invariants_enforced() {
        assert!(KeygenConfig::new(2, 16).validate().is_err());
        assert!(KeygenConfig::new(3, 16).with_exponent(4).validate().is_err());
        assert!(KeygenConfig::new(3, 16).with_rounds(0).validate().is_err());
        assert!(KeygenConfig::new(3, 16).with_batch_size(0).validate().is_err());
        let mut cfg = KeygenConfig::new(3, 16);
        cfg.bgw_prime = BigUint::from(1009u32);
        assert!(cfg.validate().is_err());
        assert!(KeygenConfig::new(3, 4).with_trial_division_bound(24).validate().is_err());
        assert!(KeygenConfig::new(3, 4).with_trial_division_bound(23).validate().is_ok());
    }

    #[test]
    fn unknown_fields_rejected() {
        let cfg = KeygenConfig::new(3, 16);
        let mut v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(serde_json::from_value::<KeygenConfig>(v.clone()).unwrap(), cfg);
        v["surprise"] = 1.into();
        assert!(serde_json::from_value::<KeygenConfig>(v).is_err());
    }
}
