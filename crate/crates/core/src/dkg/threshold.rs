use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::DkgError;
use crate::arith;
use crate::canonical::{bigint, biguint};
use crate::net::PartyId;
use crate::rng::RandomSource;
use crate::share::{shamir_reconstruct, shamir_share, PrimeField, ShareError, SharePoint};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsaPublicKey {
    #[serde(rename = "n", with = "biguint")]
    pub modulus: BigUint,
    #[serde(rename = "e", with = "biguint")]
    pub exponent: BigUint,
}

impl RsaPublicKey {
    pub fn new(modulus: BigUint, exponent: impl Into<BigUint>) -> Self {
        Self { modulus, exponent: exponent.into() }
    }

    pub fn encrypt(&self, m: &BigUint) -> BigUint {
        m.modpow(&self.exponent, &self.modulus)
    }

    /// `sig^e == h (mod N)`.
    pub fn verify(&self, h: &BigUint, sig: &BigUint) -> bool {
        sig < &self.modulus && self.encrypt(sig) == h % &self.modulus
    }
}

/// One party's fragments of the shared key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PrivateShare {
    pub party: PartyId,
    #[serde(with = "biguint")]
    pub p: BigUint,
    #[serde(with = "biguint")]
    pub q: BigUint,
    #[serde(with = "bigint")]
    pub phi: BigInt,
    #[serde(with = "bigint")]
    pub d: BigInt,
    /// Public term added to `sum d_i`; identical at every party.
    pub correction: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialValue {
    pub party: PartyId,
    #[serde(with = "biguint")]
    pub value: BigUint,
}

/// `c^(d_i) mod N`; negative shares go through `c^-1`.
pub fn partial_decrypt(c: &BigUint, d_i: &BigInt, n: &BigUint) -> Result<BigUint, DkgError> {
    if c.is_zero() || c >= n {
        return Err(DkgError::CiphertextOutOfRange);
    }
    arith::mod_pow_signed(c, d_i, n).ok_or(DkgError::NonInvertibleCiphertext)
}

/// Multiplies one partial per party `1..=k` and applies the public
/// correction. Identical repeats collapse; conflicting ones are an error.
pub fn combine_partials(
    partials: &[PartialValue],
    k: usize,
    correction: u32,
    ciphertext: &BigUint,
    n: &BigUint,
) -> Result<BigUint, DkgError> {
    let mut by_party: BTreeMap<PartyId, &BigUint> = BTreeMap::new();
    for p in partials {
        match by_party.get(&p.party) {
            Some(prev) if *prev == &p.value => {}
            Some(_) => return Err(DkgError::DuplicatePartyPartial(p.party)),
            None => {
                by_party.insert(p.party, &p.value);
            }
        }
    }
    for i in 0..k {
        let id = PartyId::from_index(i);
        if !by_party.contains_key(&id) {
            return Err(DkgError::MissingParty(id));
        }
    }
    if let Some((extra, _)) = by_party.iter().find(|(id, _)| id.is_client() || id.0 as usize > k) {
        return Err(DkgError::DuplicatePartyPartial(*extra));
    }
    let prod = by_party.values().fold(BigUint::one() % n, |acc, v| (acc * *v) % n);
    Ok((prod * ciphertext.modpow(&BigUint::from(correction), n)) % n)
}

/// `h^(sum d_i + c) mod N` from every party's share.
pub fn threshold_sign(
    h: &BigUint,
    shares: &[PrivateShare],
    k: usize,
    public: &RsaPublicKey,
) -> Result<BigUint, DkgError> {
    let n = &public.modulus;
    let partials = shares
        .iter()
        .map(|s| Ok(PartialValue { party: s.party, value: partial_decrypt(h, &s.d, n)? }))
        .collect::<Result<Vec<_>, DkgError>>()?;
    let correction = shares.first().map_or(0, |s| s.correction);
    combine_partials(&partials, k, correction, h, n)
}

/// How exponent shares are replicated: `threshold`-of-`parties` Shamir over
/// a prime field larger than the offset range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackupScheme {
    pub threshold: usize,
    pub parties: usize,
    pub field: PrimeField,
    #[serde(with = "biguint")]
    pub offset: BigUint,
}

impl BackupScheme {
    /// Field over the smallest prime above `2 k N`; offset `k N`.
    pub fn for_modulus(threshold: usize, parties: usize, n: &BigUint) -> Self {
        let offset = n * parties;
        let field = PrimeField::smallest_above(&(&offset * 2u32));
        Self { threshold, parties, field, offset }
    }

    pub fn with_field(threshold: usize, parties: usize, n: &BigUint, field: PrimeField) -> Result<Self, DkgError> {
        let offset = n * parties;
        if field.modulus() <= &offset {
            return Err(ShareError::FieldTooSmall.into());
        }
        Ok(Self { threshold, parties, field, offset })
    }

    fn embed(&self, d: &BigInt) -> Result<BigUint, DkgError> {
        let shifted = d + BigInt::from(self.offset.clone());
        match shifted.to_biguint() {
            Some(v) if self.field.contains(&v) => Ok(v),
            _ => Err(ShareError::FieldTooSmall.into()),
        }
    }

    fn unembed(&self, v: &BigUint) -> BigInt {
        BigInt::from(v.clone()) - BigInt::from(self.offset.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ShareBackup {
    pub owner: PartyId,
    pub holder: PartyId,
    pub sub_share: SharePoint,
}

/// Shamir-shares `d_i + kN` among all parties; holder `j` gets index `j`.
pub fn replicate_share(
    owner: PartyId,
    d_i: &BigInt,
    scheme: &BackupScheme,
    rng: &mut dyn RandomSource,
) -> Result<Vec<ShareBackup>, DkgError> {
    let secret = scheme.embed(d_i)?;
    let set = shamir_share(&secret, scheme.threshold, scheme.parties, &scheme.field, rng)?;
    Ok(set
        .points
        .into_iter()
        .map(|pt| ShareBackup { owner, holder: PartyId(pt.index as u32), sub_share: pt })
        .collect())
}

/// Rebuilds `d_owner` from backups (other owners' entries are ignored).
pub fn recover_exponent_share(
    owner: PartyId,
    backups: &[ShareBackup],
    scheme: &BackupScheme,
) -> Result<BigInt, DkgError> {
    let points: Vec<SharePoint> = backups
        .iter()
        .filter(|b| b.owner == owner)
        .map(|b| b.sub_share.clone())
        .collect();
    let v = shamir_reconstruct(&points, scheme.threshold, &scheme.field)?;
    Ok(scheme.unembed(&v))
}

/// The partial an absent party would have produced for `ciphertext`.
pub fn recover_absent_partial(
    absent: PartyId,
    backups: &[ShareBackup],
    scheme: &BackupScheme,
    ciphertext: &BigUint,
    n: &BigUint,
) -> Result<BigUint, DkgError> {
    let d = recover_exponent_share(absent, backups, scheme)?;
    log::info!("recovered partial for absent party {absent}");
    partial_decrypt(ciphertext, &d, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DeterministicRng;

    fn u(x: u64) -> BigUint {
        BigUint::from(x)
    }

    fn worked_shares() -> Vec<PrivateShare> {
        let parts = [(11u64, 15u64, 412i64, 329i64), (4, 4, -8, -7), (4, 4, -8, -7)];
        parts
            .iter()
            .enumerate()
            .map(|(i, &(p, q, phi, d))| PrivateShare {
                party: PartyId::from_index(i),
                p: u(p),
                q: u(q),
                phi: phi.into(),
                d: d.into(),
                correction: 2,
            })
            .collect()
    }

    fn worked_partials(c: u64) -> Vec<PartialValue> {
        worked_shares()
            .iter()
            .map(|s| PartialValue { party: s.party, value: partial_decrypt(&u(c), &s.d, &u(437)).unwrap() })
            .collect()
    }

    #[test]
    fn worked_partials_match_oracle() {
        let n = u(437);
        assert_eq!(partial_decrypt(&u(32), &329.into(), &n).unwrap(), u(432));
        assert_eq!(partial_decrypt(&u(32), &(-7).into(), &n).unwrap(), u(420));
        assert_eq!(partial_decrypt(&u(1), &(-7).into(), &n).unwrap(), u(1));
        assert_eq!(partial_decrypt(&u(19), &(-7).into(), &n), Err(DkgError::NonInvertibleCiphertext));
        assert_eq!(partial_decrypt(&u(437), &1.into(), &n), Err(DkgError::CiphertextOutOfRange));
        assert_eq!(combine_partials(&worked_partials(32), 3, 2, &u(32), &n).unwrap(), u(2));
        assert_eq!(combine_partials(&worked_partials(1), 3, 2, &u(1), &n).unwrap(), u(1));
    }

    #[test]
    fn combine_requires_every_party_once() {
        let n = u(437);
        let mut partials = worked_partials(32);
        partials.pop();
        assert_eq!(combine_partials(&partials, 3, 2, &u(32), &n), Err(DkgError::MissingParty(PartyId(3))));
        let mut dup = worked_partials(32);
        dup.push(dup[0].clone());
        assert_eq!(combine_partials(&dup, 3, 2, &u(32), &n).unwrap(), u(2));
        dup.push(PartialValue { party: PartyId(1), value: u(5) });
        assert_eq!(combine_partials(&dup, 3, 2, &u(32), &n), Err(DkgError::DuplicatePartyPartial(PartyId(1))));
    }

    #[test]
    fn worked_signature() {
        let pk = RsaPublicKey::new(u(437), 5u32);
        let sig = threshold_sign(&u(2), &worked_shares(), 3, &pk).unwrap();
        assert_eq!(sig, u(167));
        assert_eq!(sig, u(2).modpow(&u(317), &u(437)));
        assert!(pk.verify(&u(2), &sig));
        assert_eq!(threshold_sign(&u(1), &worked_shares(), 3, &pk).unwrap(), u(1));
        let mut missing = worked_shares();
        missing.remove(2);
        assert_eq!(threshold_sign(&u(2), &missing, 3, &pk), Err(DkgError::MissingParty(PartyId(3))));
    }

    #[test]
    fn backup_offset_round_trip() {
        let n = u(437);
        let field = PrimeField::new(4099u32).unwrap();
        let scheme = BackupScheme::with_field(2, 3, &n, field).unwrap();
        assert_eq!(scheme.embed(&(-7).into()).unwrap(), u(1304));
        assert_eq!(scheme.embed(&0.into()).unwrap(), u(1311));
        let mut rng = DeterministicRng::from_u64(8);
        let backups = replicate_share(PartyId(3), &(-7).into(), &scheme, &mut rng).unwrap();
        assert_eq!(backups.len(), 3);
        let held: Vec<ShareBackup> = backups.iter().filter(|b| b.holder != PartyId(3)).cloned().collect();
        assert_eq!(recover_exponent_share(PartyId(3), &held, &scheme).unwrap(), BigInt::from(-7));
        let partial = recover_absent_partial(PartyId(3), &held, &scheme, &u(32), &n).unwrap();
        assert_eq!(partial, partial_decrypt(&u(32), &(-7).into(), &n).unwrap());
        assert_eq!(
            BackupScheme::with_field(2, 3, &n, PrimeField::new(1009u32).unwrap()),
            Err(DkgError::Share(ShareError::FieldTooSmall))
        );
        assert_eq!(BackupScheme::for_modulus(2, 3, &n).field.modulus(), &u(2633));
    }

    #[test]
    fn recovery_needs_threshold_distinct_holders() {
        let n = u(437);
        let scheme = BackupScheme::for_modulus(2, 3, &n);
        let mut rng = DeterministicRng::from_u64(1);
        let backups = replicate_share(PartyId(3), &(-7).into(), &scheme, &mut rng).unwrap();
        assert_eq!(
            recover_absent_partial(PartyId(3), &[], &scheme, &u(32), &n),
            Err(DkgError::Share(ShareError::InsufficientShares { needed: 2, got: 0 }))
        );
        let dup = vec![backups[0].clone(), backups[0].clone()];
        assert_eq!(
            recover_absent_partial(PartyId(3), &dup, &scheme, &u(32), &n),
            Err(DkgError::Share(ShareError::InsufficientShares { needed: 2, got: 1 }))
        );
    }
}
