use num_bigint::{BigInt, BigUint};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::ShareError;
use crate::arith;
use crate::canonical::bigint;
use crate::rng::RandomSource;

/// Statistical hiding margin, in bits, for sharing over the integers.
pub const INTEGER_MASK_BITS: u64 = 64;

/// Values whose sum (optionally reduced mod `modulus`) is the secret.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveShareVector {
    #[serde(with = "bigint_list")]
    pub values: Vec<BigInt>,
    #[serde(default, with = "opt_biguint", skip_serializing_if = "Option::is_none")]
    pub modulus: Option<BigUint>,
}

impl AdditiveShareVector {
    pub fn parties(&self) -> usize {
        self.values.len()
    }
}

/// Splits `secret` into `k` additive fragments. Fragments `1..k-1` are
/// uniform (over `[0, modulus)`, or over `[0, 2^(bits(secret)+64))` when
/// sharing over the integers); the last is the residual.
pub fn additive_share(
    secret: &BigInt,
    k: usize,
    modulus: Option<&BigUint>,
    rng: &mut dyn RandomSource,
) -> Result<AdditiveShareVector, ShareError> {
    if k < 2 {
        return Err(ShareError::PartyCountTooSmall { k });
    }
    let bound = match modulus {
        Some(m) => m.clone(),
        None => BigUint::from(1u32) << (secret.bits().max(1) + INTEGER_MASK_BITS),
    };
    let mut values: Vec<BigInt> = (1..k).map(|_| BigInt::from(rng.below(&bound))).collect();
    let partial: BigInt = values.iter().sum();
    let last = secret - partial;
    values.push(match modulus {
        Some(m) => BigInt::from(arith::residue(&last, m)),
        None => last,
    });
    Ok(AdditiveShareVector { values, modulus: modulus.cloned() })
}

pub fn additive_reconstruct(v: &AdditiveShareVector) -> BigInt {
    let sum: BigInt = v.values.iter().fold(BigInt::zero(), |acc, x| acc + x);
    match &v.modulus {
        Some(m) => BigInt::from(arith::residue(&sum, m)),
        None => sum,
    }
}

mod bigint_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Item(#[serde(with = "bigint")] BigInt);

    pub fn serialize<S: Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
        let items: Vec<Item> = v.iter().cloned().map(Item).collect();
        items.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigInt>, D::Error> {
        Ok(Vec::<Item>::deserialize(d)?.into_iter().map(|i| i.0).collect())
    }
}

mod opt_biguint {
    use super::*;
    use crate::canonical::biguint;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Item(#[serde(with = "biguint")] BigUint);

    pub fn serialize<S: Serializer>(v: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
        v.clone().map(Item).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigUint>, D::Error> {
        Ok(Option::<Item>::deserialize(d)?.map(|i| i.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{DeterministicRng, ScriptedRng};
    use proptest::prelude::*;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn scripted_residual() {
        let mut rng = ScriptedRng::new([11u32, 4]);
        let v = additive_share(&BigInt::from(19), 3, None, &mut rng).unwrap();
        assert_eq!(v.values, ints(&[11, 4, 4]));
        assert_eq!(additive_reconstruct(&v), BigInt::from(19));
    }

    #[test]
    fn zero_secret_mod_eleven() {
        let m = BigUint::from(11u32);
        let mut rng = DeterministicRng::from_u64(4);
        let v = additive_share(&BigInt::zero(), 2, Some(&m), &mut rng).unwrap();
        assert_eq!(v.parties(), 2);
        assert_eq!(additive_reconstruct(&v), BigInt::zero());
        assert!(v.values.iter().all(|x| x >= &BigInt::zero() && x < &BigInt::from(11)));
    }

    #[test]
    fn one_party_rejected() {
        let mut rng = DeterministicRng::from_u64(4);
        assert_eq!(
            additive_share(&BigInt::from(7), 1, None, &mut rng),
            Err(ShareError::PartyCountTooSmall { k: 1 })
        );
    }

    #[test]
    fn reconstruct_examples() {
        let plain = |v: &[i64]| AdditiveShareVector { values: ints(v), modulus: None };
        assert_eq!(additive_reconstruct(&plain(&[11, 4, 4])), BigInt::from(19));
        assert_eq!(additive_reconstruct(&plain(&[412, -8, -8])), BigInt::from(396));
        let modular = AdditiveShareVector { values: ints(&[5, 6]), modulus: Some(11u32.into()) };
        assert_eq!(additive_reconstruct(&modular), BigInt::zero());
    }

    proptest! {
        #[test]
        fn sums_back(secret in -1_000_000i64..1_000_000, k in 2usize..7, seed: u64, modular: bool) {
            let mut rng = DeterministicRng::from_u64(seed);
            let m = BigUint::from(1_000_003u32);
            let modulus = modular.then_some(&m);
            let v = additive_share(&BigInt::from(secret), k, modulus, &mut rng).unwrap();
            let expected = match modulus {
                Some(m) => BigInt::from(arith::residue(&BigInt::from(secret), m)),
                None => BigInt::from(secret),
            };
            prop_assert_eq!(additive_reconstruct(&v), expected);
            let back: AdditiveShareVector = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
