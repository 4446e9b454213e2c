use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::ShareError;
use crate::arith;
use crate::canonical::{self, biguint};
use crate::rng::RandomSource;

/// The integers modulo a prime greater than 2.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawField", into = "RawField")]
pub struct PrimeField {
    modulus: BigUint,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    #[serde(with = "biguint")]
    modulus: BigUint,
}

impl TryFrom<RawField> for PrimeField {
    type Error = ShareError;
    fn try_from(raw: RawField) -> Result<Self, Self::Error> {
        PrimeField::new(raw.modulus)
    }
}

impl From<PrimeField> for RawField {
    fn from(f: PrimeField) -> Self {
        RawField { modulus: f.modulus }
    }
}

impl PrimeField {
    pub fn new(modulus: impl Into<BigUint>) -> Result<Self, ShareError> {
        let modulus = modulus.into();
        if modulus <= BigUint::from(2u32) || !arith::is_prime(&modulus) {
            return Err(ShareError::NotPrime(modulus.to_string()));
        }
        Ok(Self { modulus })
    }

    /// Field over the smallest prime strictly above `bound`.
    pub fn smallest_above(bound: &BigUint) -> Self {
        let floor = BigUint::from(2u32);
        let modulus = arith::next_prime_above(if bound < &floor { &floor } else { bound });
        Self { modulus }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn contains(&self, v: &BigUint) -> bool {
        v < &self.modulus
    }

    pub fn reduce(&self, v: &BigUint) -> BigUint {
        v % &self.modulus
    }

    pub fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + b) % &self.modulus
    }

    pub fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        ((a + &self.modulus) - (b % &self.modulus)) % &self.modulus
    }

    pub fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.modulus
    }

    pub fn neg(&self, a: &BigUint) -> BigUint {
        self.sub(&BigUint::zero(), a)
    }

    pub fn inv(&self, a: &BigUint) -> Option<BigUint> {
        if (a % &self.modulus).is_zero() {
            return None;
        }
        Some(a.modpow(&(&self.modulus - 2u32), &self.modulus))
    }

    pub fn random(&self, rng: &mut dyn RandomSource) -> BigUint {
        rng.below(&self.modulus)
    }

    /// Evaluates `coeffs[0] + coeffs[1] x + ...` at `x` (Horner).
    pub fn eval_poly(&self, coeffs: &[BigUint], x: u64) -> BigUint {
        let x = BigUint::from(x);
        coeffs
            .iter()
            .rev()
            .fold(BigUint::zero(), |acc, c| self.add(&self.mul(&acc, &x), c))
    }

    pub fn one(&self) -> BigUint {
        BigUint::one()
    }
}

/// One evaluation `(index, f(index))` of a sharing polynomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharePoint {
    pub index: u64,
    #[serde(with = "biguint")]
    pub value: BigUint,
}

impl SharePoint {
    pub fn new(index: u64, value: impl Into<BigUint>) -> Self {
        Self { index, value: value.into() }
    }

    /// Checks `index != 0` and `value < modulus`.
    pub fn validate(&self, field: &PrimeField) -> Result<(), ShareError> {
        if self.index == 0 {
            return Err(ShareError::ZeroIndex);
        }
        if !field.contains(&self.value) {
            return Err(ShareError::ValueOutOfField { index: self.index });
        }
        Ok(())
    }

    /// SHA-256 over the canonical encoding of `(index, value, modulus)`.
    pub fn digest(&self, field: &PrimeField) -> [u8; 32] {
        #[derive(Serialize)]
        struct Encoded<'a> {
            index: u64,
            #[serde(with = "biguint")]
            value: &'a BigUint,
            #[serde(with = "biguint")]
            modulus: &'a BigUint,
        }
        canonical::digest(&Encoded {
            index: self.index,
            value: &self.value,
            modulus: field.modulus(),
        })
    }
}

/// A full `t`-of-`n` sharing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareSet {
    pub threshold: usize,
    pub count: usize,
    pub points: Vec<SharePoint>,
    pub field: PrimeField,
}

impl ShareSet {
    pub fn point(&self, index: u64) -> Option<&SharePoint> {
        self.points.iter().find(|p| p.index == index)
    }
}
