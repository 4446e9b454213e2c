use num_bigint::{BigInt, BigUint};
use num_traits::Zero;

use super::DkgError;
use crate::arith;

/// Fixed plaintext used to pin down the public correction term.
pub const TRIAL_MESSAGE: u32 = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExponentDerivation {
    /// `phi(N) mod e`, the only value revealed about `phi`.
    pub zeta: BigUint,
    /// `-zeta^-1 mod e`.
    pub multiplier: BigUint,
    pub shares: Vec<BigInt>,
    pub correction: u32,
}

/// `floor(T * phi_i / e)`.
pub fn exponent_share(multiplier: &BigUint, phi_i: &BigInt, e: &BigUint) -> BigInt {
    arith::floor_div(&(BigInt::from(multiplier.clone()) * phi_i), &BigInt::from(e.clone()))
}

/// Multiplier `-zeta^-1 mod e`, or `NotInvertible` when `zeta == 0`.
pub fn exponent_multiplier(zeta: &BigUint, e: &BigUint) -> Result<BigUint, DkgError> {
    if zeta.is_zero() {
        return Err(DkgError::NotInvertible);
    }
    let inv = arith::mod_inverse(zeta, e).ok_or(DkgError::NotInvertible)?;
    Ok((e - inv) % e)
}

/// Smallest `c` in `[0, k+1]` such that `(m^e)^(sum d + c) = m (mod N)` for
/// `m = 2`, given the combined product `(m^e)^(sum d)`.
pub fn find_correction(combined: &BigUint, e: &BigUint, n: &BigUint, k: usize) -> Result<u32, DkgError> {
    let m = BigUint::from(TRIAL_MESSAGE);
    let ct = m.modpow(e, n);
    let mut acc = combined % n;
    for c in 0..=(k as u32 + 1) {
        if acc == m {
            return Ok(c);
        }
        acc = (acc * &ct) % n;
    }
    Err(DkgError::CorrectionNotFound)
}

/// Whole derivation from all `phi_i` at once (the networked protocol reveals
/// `zeta` through additive pieces mod `e` and combines trial partials
/// instead).
pub fn compute_shared_private_exponent(
    e: &BigUint,
    n: &BigUint,
    phi_shares: &[BigInt],
) -> Result<ExponentDerivation, DkgError> {
    let sum: BigInt = phi_shares.iter().sum();
    let zeta = arith::residue(&sum, e);
    let multiplier = exponent_multiplier(&zeta, e)?;
    let shares: Vec<BigInt> = phi_shares.iter().map(|phi| exponent_share(&multiplier, phi, e)).collect();
    let ct = BigUint::from(TRIAL_MESSAGE).modpow(e, n);
    let mut combined = BigUint::from(1u32) % n;
    for d in &shares {
        let part = arith::mod_pow_signed(&ct, d, n).ok_or(DkgError::NonInvertibleCiphertext)?;
        combined = (combined * part) % n;
    }
    let correction = find_correction(&combined, e, n, phi_shares.len())?;
    Ok(ExponentDerivation { zeta, multiplier, shares, correction })
}
