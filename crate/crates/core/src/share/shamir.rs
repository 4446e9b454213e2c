use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::Zero;

use super::{PrimeField, ShareError, SharePoint, ShareSet};
use crate::rng::RandomSource;

/// Splits `secret` into `n` points of a random degree-`t-1` polynomial.
///
/// Coefficients `a_1 .. a_{t-1}` are drawn from `rng` in that order.
pub fn shamir_share(
    secret: &BigUint,
    t: usize,
    n: usize,
    field: &PrimeField,
    rng: &mut dyn RandomSource,
) -> Result<ShareSet, ShareError> {
    if t < 1 || t > n {
        return Err(ShareError::ThresholdOutOfRange { t, n });
    }
    if !field.contains(secret) {
        return Err(ShareError::SecretOutOfField);
    }
    if BigUint::from(n) >= *field.modulus() {
        return Err(ShareError::FieldTooSmall);
    }
    let mut coeffs = Vec::with_capacity(t);
    coeffs.push(secret.clone());
    for _ in 1..t {
        coeffs.push(field.random(rng));
    }
    Ok(evaluate(&coeffs, t, n, field))
}

/// Points of a random degree-`degree` polynomial with a zero constant term.
pub fn zero_share(
    degree: usize,
    n: usize,
    field: &PrimeField,
    rng: &mut dyn RandomSource,
) -> Result<ShareSet, ShareError> {
    if degree < 1 || n <= degree {
        return Err(ShareError::ThresholdOutOfRange { t: degree + 1, n });
    }
    if BigUint::from(n) >= *field.modulus() {
        return Err(ShareError::FieldTooSmall);
    }
    let mut coeffs = Vec::with_capacity(degree + 1);
    coeffs.push(BigUint::zero());
    for _ in 0..degree {
        coeffs.push(field.random(rng));
    }
    Ok(evaluate(&coeffs, degree + 1, n, field))
}

fn evaluate(coeffs: &[BigUint], t: usize, n: usize, field: &PrimeField) -> ShareSet {
    let points = (1..=n as u64)
        .map(|x| SharePoint::new(x, field.eval_poly(coeffs, x)))
        .collect();
    ShareSet { threshold: t, count: n, points, field: field.clone() }
}

/// Removes exact duplicates (first occurrence kept) by hashing each point;
/// two points with the same index but different values are a collision.
pub fn dedup_shares(points: &[SharePoint], field: &PrimeField) -> Result<Vec<SharePoint>, ShareError> {
    let mut seen: BTreeMap<u64, [u8; 32]> = BTreeMap::new();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let h = p.digest(field);
        match seen.get(&p.index) {
            Some(prev) if *prev == h => continue,
            Some(_) => return Err(ShareError::IndexCollision { index: p.index }),
            None => {
                seen.insert(p.index, h);
                out.push(p.clone());
            }
        }
    }
    Ok(out)
}

/// Interpolates at zero from the `t` smallest-index distinct points.
pub fn shamir_reconstruct(
    points: &[SharePoint],
    t: usize,
    field: &PrimeField,
) -> Result<BigUint, ShareError> {
    let mut distinct = dedup_shares(points, field)?;
    for p in &distinct {
        p.validate(field)?;
    }
    if t == 0 || distinct.len() < t {
        return Err(ShareError::InsufficientShares { needed: t, got: distinct.len() });
    }
    distinct.sort_by_key(|p| p.index);
    distinct.truncate(t);
    Ok(lagrange_at_zero(&distinct, field))
}

/// Lagrange interpolation at `x = 0`. Indices must be distinct and non-zero.
pub fn lagrange_at_zero(points: &[SharePoint], field: &PrimeField) -> BigUint {
    let q = field.modulus();
    let mut acc = BigUint::zero();
    for (j, pj) in points.iter().enumerate() {
        let xj = BigUint::from(pj.index) % q;
        let mut num = field.one();
        let mut den = field.one();
        for (m, pm) in points.iter().enumerate() {
            if m == j {
                continue;
            }
            let xm = BigUint::from(pm.index) % q;
            num = field.mul(&num, &xm);
            den = field.mul(&den, &field.sub(&xm, &xj));
        }
        let coeff = field.mul(&num, &field.inv(&den).expect("distinct indices"));
        acc = field.add(&acc, &field.mul(&pj.value, &coeff));
    }
    acc
}
