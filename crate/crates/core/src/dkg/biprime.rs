use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::One;
use serde::{Deserialize, Serialize};

use super::DkgError;
use crate::arith;
use crate::canonical::{biguint, biguint_vec};
use crate::net::PartyId;
use crate::rng::RandomSource;

/// One `(p_i, q_i)` pair in `[2^(bits-1), 2^bits)`. Party 1's values are
/// 3 mod 4, everyone else's 0 mod 4, so both sums are 3 mod 4.
pub fn generate_candidate_shares(bits: u32, party: PartyId, rng: &mut dyn RandomSource) -> (BigUint, BigUint) {
    let half = BigUint::one() << (bits - 1);
    let mut draw = || {
        let raw = &half + rng.below(&half);
        let cleared = (raw >> 2u32) << 2u32;
        if party == PartyId(1) {
            cleared + 3u32
        } else {
            cleared
        }
    };
    let p = draw();
    let q = draw();
    (p, q)
}

/// Rejects `n` when it has a prime factor `<= bound`.
pub fn trial_division_public(n: &BigUint, bound: u64) -> bool {
    arith::gcd(n, &arith::primorial(bound)).is_one()
}

/// Party `i`'s additive share of `phi(N)`.
pub fn phi_share(party: PartyId, n: &BigUint, p: &BigUint, q: &BigUint) -> BigInt {
    let sum = BigInt::from(p + q);
    if party == PartyId(1) {
        BigInt::from(n + 1u32) - sum
    } else {
        -sum
    }
}

/// Party `i`'s contribution for base `g`: party 1 raises to
/// `(N - p_1 - q_1 + 1)/4`, others to `(p_i + q_i)/4`.
pub fn biprimality_value(party: PartyId, n: &BigUint, p: &BigUint, q: &BigUint, g: &BigUint) -> BigUint {
    let exp = if party == PartyId(1) {
        (n + 1u32 - p - q) >> 2u32
    } else {
        (p + q) >> 2u32
    };
    g.modpow(&exp, n)
}

/// Accepts iff `v_1 = +-prod_{i>=2} v_i (mod N)`.
pub fn combine_biprimality(values: &[BigUint], n: &BigUint) -> bool {
    let Some((first, rest)) = values.split_first() else {
        return false;
    };
    let prod = rest.iter().fold(BigUint::one() % n, |acc, v| (acc * v) % n);
    *first == prod || *first == (n - &prod) % n
}

/// Samples `g` in `[2, N-1)` until the Jacobi symbol is `+1`; a base sharing
/// a factor with `N` aborts the candidate.
pub fn sample_base(n: &BigUint, rng: &mut dyn RandomSource) -> Result<BigUint, DkgError> {
    let span = n - 3u32;
    loop {
        let g = rng.below(&span) + 2u32;
        let d = arith::gcd(&g, n);
        if !d.is_one() {
            return Err(DkgError::GcdLeak { factor: d });
        }
        if arith::jacobi(&g, n) == 1 {
            return Ok(g);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiprimalityRound {
    #[serde(with = "biguint")]
    pub g: BigUint,
    #[serde(with = "biguint_vec")]
    pub values: Vec<BigUint>,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiprimalityOutcome {
    pub accepted: bool,
    pub rounds: Vec<BiprimalityRound>,
}

/// Runs up to `s` rounds over the parties' `(p_i, q_i)`, stopping at the
/// first rejecting round.
pub fn biprimality_test(
    n: &BigUint,
    shares: &[(BigUint, BigUint)],
    s: u32,
    rng: &mut dyn RandomSource,
) -> Result<BiprimalityOutcome, DkgError> {
    if n <= &BigUint::from(3u32) || (n % 4u32) != BigUint::one() {
        return Ok(BiprimalityOutcome { accepted: false, rounds: Vec::new() });
    }
    let mut rounds = Vec::with_capacity(s as usize);
    for _ in 0..s {
        let g = sample_base(n, rng)?;
        let values: Vec<BigUint> = shares
            .iter()
            .enumerate()
            .map(|(i, (p, q))| biprimality_value(PartyId::from_index(i), n, p, q, &g))
            .collect();
        let accepted = combine_biprimality(&values, n);
        rounds.push(BiprimalityRound { g, values, accepted });
        if !accepted {
            return Ok(BiprimalityOutcome { accepted: false, rounds });
        }
    }
    Ok(BiprimalityOutcome { accepted: true, rounds })
}

/// True when `n` is odd and `n mod 4 == 1`.
pub(crate) fn is_blum_shape(n: &BigUint) -> bool {
    n.is_odd() && (n % 4u32) == BigUint::one()
}
