//! Semi-honest BGW multiplication of two additively shared values.
//!
//! Each party Shamir-shares its two inputs with degree `floor((k-1)/2)`
//! polynomials and a zero-sharing mask of degree `k-1`. Party `j` sums what
//! it receives, multiplies, adds the mask and broadcasts the result; the
//! broadcasts lie on a degree `k-1` polynomial whose constant term is the
//! product of the input sums.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{shamir_share, zero_share, PrimeField, ShareError, SharePoint};
use crate::canonical::biguint;
use crate::net::{AdversaryConfig, Machine, NetError, Network, PartyId, RoundIo, Step, Transcript};
use crate::rng::{DeterministicRng, RandomSource};

#[derive(Debug, PartialEq, Eq, Error)]
pub enum BgwError {
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// What party `i` sends to party `j`: its input polynomials and mask at `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BgwDeal {
    #[serde(with = "biguint")]
    pub a: BigUint,
    #[serde(with = "biguint")]
    pub b: BigUint,
    #[serde(with = "biguint")]
    pub mask: BigUint,
}

/// Input polynomial degree for `k` parties.
pub fn input_degree(k: usize) -> usize {
    (k - 1) / 2
}

/// Deals one party's inputs to all `k` parties; entry `j-1` is for party `j`.
pub fn bgw_deal(
    a: &BigUint,
    b: &BigUint,
    k: usize,
    field: &PrimeField,
    rng: &mut dyn RandomSource,
) -> Result<Vec<BgwDeal>, ShareError> {
    if k < 3 {
        return Err(ShareError::PartyCountTooSmall { k });
    }
    let t = input_degree(k) + 1;
    let fa = shamir_share(&field.reduce(a), t, k, field, rng)?;
    let fb = shamir_share(&field.reduce(b), t, k, field, rng)?;
    let h = zero_share(k - 1, k, field, rng)?;
    Ok((0..k)
        .map(|j| BgwDeal {
            a: fa.points[j].value.clone(),
            b: fb.points[j].value.clone(),
            mask: h.points[j].value.clone(),
        })
        .collect())
}

/// `(sum a)(sum b) + sum mask` over everything dealt to one party.
pub fn bgw_local_point(received: &[BgwDeal], field: &PrimeField) -> BigUint {
    let zero = BigUint::default();
    let (mut a, mut b, mut m) = (zero.clone(), zero.clone(), zero);
    for d in received {
        a = field.add(&a, &d.a);
        b = field.add(&b, &d.b);
        m = field.add(&m, &d.mask);
    }
    field.add(&field.mul(&a, &b), &m)
}

/// Interpolates the product from all `k` broadcast points.
pub fn bgw_open(points: &[SharePoint], k: usize, field: &PrimeField) -> Result<BigUint, ShareError> {
    super::shamir_reconstruct(points, k, field)
}

#[derive(Serialize, Deserialize)]
struct PointMsg {
    #[serde(with = "biguint")]
    point: BigUint,
}

/// One party of the standalone three-round BGW product.
pub struct BgwParty {
    id: PartyId,
    k: usize,
    field: PrimeField,
    a: BigUint,
    b: BigUint,
    rng: DeterministicRng,
    own_deal: Option<BgwDeal>,
    own_point: Option<BigUint>,
}

impl BgwParty {
    pub fn new(id: PartyId, k: usize, field: PrimeField, a: BigUint, b: BigUint, rng: DeterministicRng) -> Self {
        Self { id, k, field, a, b, rng, own_deal: None, own_point: None }
    }
}

impl Machine for BgwParty {
    type Output = Result<BigUint, ShareError>;

    fn id(&self) -> PartyId {
        self.id
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        match io.round() {
            0 => match bgw_deal(&self.a, &self.b, self.k, &self.field, &mut self.rng) {
                Ok(deals) => {
                    for (j, deal) in deals.into_iter().enumerate() {
                        let to = PartyId::from_index(j);
                        if to == self.id {
                            self.own_deal = Some(deal);
                        } else {
                            io.send(to, "bgw.deal", &deal);
                        }
                    }
                    Step::Continue
                }
                Err(e) => Step::Done(Err(e)),
            },
            1 => {
                let mut deals: Vec<BgwDeal> = io.received::<BgwDeal>("bgw.deal").into_iter().map(|(_, d)| d).collect();
                deals.extend(self.own_deal.take());
                let point = bgw_local_point(&deals, &self.field);
                io.broadcast("bgw.point", &PointMsg { point: point.clone() });
                self.own_point = Some(point);
                Step::Continue
            }
            _ => {
                let mut points: Vec<SharePoint> = io
                    .received::<PointMsg>("bgw.point")
                    .into_iter()
                    .map(|(from, m)| SharePoint::new(from.0 as u64, m.point))
                    .collect();
                if let Some(own) = self.own_point.take() {
                    points.push(SharePoint::new(self.id.0 as u64, own));
                }
                Step::Done(bgw_open(&points, self.k, &self.field))
            }
        }
    }
}

pub struct BgwRun {
    pub product: BigUint,
    pub transcript: Transcript,
}

/// Checks the simulator-side preconditions: at least three parties and a
/// field larger than the true product.
fn check_inputs(a: &[BigUint], b: &[BigUint], field: &PrimeField) -> Result<(), ShareError> {
    let k = a.len();
    if k < 3 || b.len() != k {
        return Err(ShareError::PartyCountTooSmall { k: k.min(b.len()) });
    }
    let product: BigUint = a.iter().sum::<BigUint>() * b.iter().sum::<BigUint>();
    if *field.modulus() <= product {
        return Err(ShareError::FieldTooSmall);
    }
    Ok(())
}

/// Runs the product on an existing network whose roster matches the input
/// length. Every live party must agree on the result.
pub fn bgw_shared_product_on(
    net: &mut Network,
    a: &[BigUint],
    b: &[BigUint],
    field: &PrimeField,
) -> Result<BigUint, BgwError> {
    check_inputs(a, b, field)?;
    let k = a.len();
    let machines: Vec<BgwParty> = (0..k)
        .map(|i| {
            let id = PartyId::from_index(i);
            BgwParty::new(id, k, field.clone(), a[i].clone(), b[i].clone(), net.party_rng(id, "bgw"))
        })
        .collect();
    let report = net.run(machines)?;
    let mut result: Option<BigUint> = None;
    for out in report.outputs.into_values() {
        let v = out?;
        match &result {
            Some(prev) => assert_eq!(prev, &v, "honest parties disagree on the product"),
            None => result = Some(v),
        }
    }
    result.ok_or(BgwError::Share(ShareError::InsufficientShares { needed: k, got: 0 }))
}

/// Standalone product over a fresh honest network seeded with `seed`.
pub fn bgw_shared_product(a: &[BigUint], b: &[BigUint], field: &PrimeField, seed: u64) -> Result<BgwRun, BgwError> {
    check_inputs(a, b, field)?;
    let mut net = Network::new(a.len() as u32, AdversaryConfig::honest(), seed)?;
    let product = bgw_shared_product_on(&mut net, a, b, field)?;
    Ok(BgwRun { product, transcript: net.transcript().clone() })
}
