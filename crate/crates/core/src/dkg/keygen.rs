//! Networked key generation. All parties move through the same phases in
//! lockstep; every branch decision depends only on public values, so no
//! coordination messages beyond the protocol's own are needed.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::Zero;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::biprime::is_blum_shape;
use super::exponent::exponent_multiplier;
use super::{
    biprimality_value, combine_biprimality, exponent_share, find_correction, generate_candidate_shares,
    partial_decrypt, phi_share, replicate_share, sample_base, trial_division_public, BackupScheme, DkgError,
    KeygenConfig, PrivateShare, RsaPublicKey, ShareBackup, TRIAL_MESSAGE,
};
use crate::arith;
use crate::canonical::{biguint, biguint_vec};
use crate::net::{Machine, Metrics, Network, PartyId, RoundIo, Step};
use crate::rng::DeterministicRng;
use crate::share::{additive_share, bgw_deal, bgw_local_point, bgw_open, BgwDeal, PrimeField, SharePoint};

/// What one party walks away with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PartyKey {
    pub public: RsaPublicKey,
    pub share: PrivateShare,
    /// Backups of every party's exponent share addressed to this holder.
    pub held_backups: Vec<ShareBackup>,
    pub backup: BackupScheme,
}

#[derive(Clone, Debug)]
pub struct DistributedKey {
    pub public: RsaPublicKey,
    pub parties: Vec<PartyKey>,
    pub metrics: Metrics,
}

impl DistributedKey {
    pub fn shares(&self) -> Vec<PrivateShare> {
        self.parties.iter().map(|p| p.share.clone()).collect()
    }

    pub fn scheme(&self) -> &BackupScheme {
        &self.parties[0].backup
    }

    /// Every stored backup of `owner`'s share, across all holders.
    pub fn backups_of(&self, owner: PartyId) -> Vec<ShareBackup> {
        self.parties
            .iter()
            .flat_map(|p| p.held_backups.iter().filter(|b| b.owner == owner).cloned())
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Points(#[serde(with = "biguint_vec")] Vec<BigUint>);

#[derive(Clone, Serialize, Deserialize)]
struct BaseSet {
    slot: usize,
    #[serde(with = "biguint_vec")]
    bases: Vec<BigUint>,
}

#[derive(Serialize, Deserialize)]
struct SlotValues {
    slot: usize,
    #[serde(with = "biguint_vec")]
    values: Vec<BigUint>,
}

#[derive(Clone, Serialize, Deserialize)]
struct SlotPiece {
    slot: usize,
    #[serde(with = "biguint")]
    piece: BigUint,
}

#[derive(Serialize, Deserialize)]
struct Partial(#[serde(with = "biguint")] BigUint);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Deal,
    Points,
    Open,
    AwaitBases,
    Verdict,
    ZetaSum,
    ZetaOpen,
    Correction,
    Collect,
}

#[derive(Default)]
struct Candidate {
    p: BigUint,
    q: BigUint,
    own_deal: Option<BgwDeal>,
    own_point: BigUint,
    modulus: BigUint,
    phi: BigInt,
    own_piece: BigUint,
    own_sum: BigUint,
}

pub struct KeygenParty {
    id: PartyId,
    cfg: KeygenConfig,
    k: usize,
    field: PrimeField,
    candidate_rng: DeterministicRng,
    rng: DeterministicRng,
    attempts: u64,
    phase: Phase,
    batch: Vec<Candidate>,
    bases: Vec<BaseSet>,
    own_values: Vec<SlotValues>,
    accepted: Vec<usize>,
    chosen: Option<(usize, BigInt)>,
    own_partial: BigUint,
    own_backup: Option<ShareBackup>,
    key: Option<PartyKey>,
}

impl KeygenParty {
    pub fn new(id: PartyId, cfg: KeygenConfig, candidate_rng: DeterministicRng, rng: DeterministicRng) -> Self {
        let field = PrimeField::new(cfg.bgw_prime.clone()).expect("validated config");
        Self {
            id,
            k: cfg.parties as usize,
            cfg,
            field,
            candidate_rng,
            rng,
            attempts: 0,
            phase: Phase::Deal,
            batch: Vec::new(),
            bases: Vec::new(),
            own_values: Vec::new(),
            accepted: Vec::new(),
            chosen: None,
            own_partial: BigUint::zero(),
            own_backup: None,
            key: None,
        }
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    fn e(&self) -> BigUint {
        BigUint::from(self.cfg.public_exponent)
    }

    /// Decodes one `kind` message from every other party, in party order.
    fn from_all<T: DeserializeOwned>(&self, io: &RoundIo, kind: &str) -> Result<BTreeMap<PartyId, T>, DkgError> {
        let got: BTreeMap<PartyId, T> = io.received(kind).into_iter().collect();
        for i in 0..self.k {
            let p = PartyId::from_index(i);
            if p != self.id && !got.contains_key(&p) {
                return Err(DkgError::MissingParty(p));
            }
        }
        Ok(got)
    }

    fn start_batch(&mut self, io: &mut RoundIo) -> Result<(), DkgError> {
        if self.attempts >= self.cfg.max_attempts {
            return Err(DkgError::MaxAttemptsExceeded { attempts: self.attempts });
        }
        let size = (self.cfg.batch_size as u64).min(self.cfg.max_attempts - self.attempts);
        self.attempts += size;
        self.batch.clear();
        let mut outgoing: Vec<Vec<BgwDeal>> = vec![Vec::new(); self.k];
        for _ in 0..size {
            let (p, q) = generate_candidate_shares(self.cfg.prime_share_bits, self.id, &mut self.candidate_rng);
            let deals = bgw_deal(&p, &q, self.k, &self.field, &mut self.rng)?;
            let mut cand = Candidate { p, q, ..Default::default() };
            for (j, d) in deals.into_iter().enumerate() {
                if PartyId::from_index(j) == self.id {
                    cand.own_deal = Some(d);
                } else {
                    outgoing[j].push(d);
                }
            }
            self.batch.push(cand);
        }
        for (j, deals) in outgoing.into_iter().enumerate() {
            let to = PartyId::from_index(j);
            if to != self.id {
                io.send(to, "keygen.deal", &deals);
            }
        }
        self.phase = Phase::Points;
        Ok(())
    }

    fn advance(&mut self, io: &mut RoundIo) -> Result<Option<PartyKey>, DkgError> {
        match self.phase {
            Phase::Deal => self.start_batch(io)?,
            Phase::Points => {
                let recv: BTreeMap<PartyId, Vec<BgwDeal>> = self.from_all(io, "keygen.deal")?;
                let mut points = Vec::with_capacity(self.batch.len());
                for (s, cand) in self.batch.iter_mut().enumerate() {
                    let mut deals: Vec<BgwDeal> = recv.values().filter_map(|v| v.get(s).cloned()).collect();
                    deals.extend(cand.own_deal.take());
                    cand.own_point = bgw_local_point(&deals, &self.field);
                    points.push(cand.own_point.clone());
                }
                io.broadcast("keygen.point", &Points(points));
                self.phase = Phase::Open;
            }
            Phase::Open => {
                let recv: BTreeMap<PartyId, Points> = self.from_all(io, "keygen.point")?;
                let mut passing = Vec::new();
                for (s, cand) in self.batch.iter_mut().enumerate() {
                    let mut pts: Vec<SharePoint> = recv
                        .iter()
                        .filter_map(|(from, v)| v.0.get(s).map(|x| SharePoint::new(from.0 as u64, x.clone())))
                        .collect();
                    pts.push(SharePoint::new(self.id.0 as u64, cand.own_point.clone()));
                    cand.modulus = bgw_open(&pts, self.k, &self.field)?;
                    if is_blum_shape(&cand.modulus) && trial_division_public(&cand.modulus, self.cfg.trial_division_bound)
                    {
                        passing.push(s);
                    }
                }
                log::debug!("{} batch passing trial division: {passing:?}", self.id);
                if passing.is_empty() {
                    return self.start_batch(io).map(|_| None);
                }
                if self.id == PartyId(1) {
                    self.bases.clear();
                    'slot: for s in passing {
                        let n = self.batch[s].modulus.clone();
                        let mut bases = Vec::with_capacity(self.cfg.biprimality_rounds as usize);
                        for _ in 0..self.cfg.biprimality_rounds {
                            match sample_base(&n, &mut self.rng) {
                                Ok(g) => bases.push(g),
                                Err(DkgError::GcdLeak { .. }) => continue 'slot,
                                Err(e) => return Err(e),
                            }
                        }
                        self.bases.push(BaseSet { slot: s, bases });
                    }
                    io.broadcast("keygen.bases", &self.bases);
                }
                self.phase = Phase::AwaitBases;
            }
            Phase::AwaitBases => {
                if self.id != PartyId(1) {
                    let leader: Vec<(PartyId, Vec<BaseSet>)> = io.received("keygen.bases");
                    let (_, sets) = leader
                        .into_iter()
                        .find(|(from, _)| *from == PartyId(1))
                        .ok_or(DkgError::MissingParty(PartyId(1)))?;
                    self.bases = sets;
                }
                if self.bases.is_empty() {
                    return self.start_batch(io).map(|_| None);
                }
                self.own_values = self
                    .bases
                    .iter()
                    .map(|set| {
                        let c = &self.batch[set.slot];
                        let values =
                            set.bases.iter().map(|g| biprimality_value(self.id, &c.modulus, &c.p, &c.q, g)).collect();
                        SlotValues { slot: set.slot, values }
                    })
                    .collect();
                io.broadcast("keygen.biprime", &self.own_values);
                self.phase = Phase::Verdict;
            }
            Phase::Verdict => {
                let recv: BTreeMap<PartyId, Vec<SlotValues>> = self.from_all(io, "keygen.biprime")?;
                self.accepted.clear();
                for (idx, set) in self.bases.iter().enumerate() {
                    let n = &self.batch[set.slot].modulus;
                    let ok = (0..set.bases.len()).all(|r| {
                        let values: Vec<BigUint> = (0..self.k)
                            .map(|i| {
                                let p = PartyId::from_index(i);
                                let src = if p == self.id { &self.own_values } else { &recv[&p] };
                                src.get(idx).and_then(|sv| sv.values.get(r)).cloned().unwrap_or_default()
                            })
                            .collect();
                        combine_biprimality(&values, n)
                    });
                    if ok {
                        self.accepted.push(set.slot);
                    }
                }
                log::debug!("{} biprimality accepted slots {:?}", self.id, self.accepted);
                if self.accepted.is_empty() {
                    return self.start_batch(io).map(|_| None);
                }
                let e = self.e();
                let mut outgoing: Vec<Vec<SlotPiece>> = vec![Vec::new(); self.k];
                for &s in &self.accepted {
                    let c = &mut self.batch[s];
                    c.phi = phi_share(self.id, &c.modulus, &c.p, &c.q);
                    let residue = BigInt::from(arith::residue(&c.phi, &e));
                    let pieces = additive_share(&residue, self.k, Some(&e), &mut self.rng)?;
                    for (j, v) in pieces.values.iter().enumerate() {
                        let piece = v.to_biguint().expect("reduced pieces are non-negative");
                        if PartyId::from_index(j) == self.id {
                            c.own_piece = piece;
                        } else {
                            outgoing[j].push(SlotPiece { slot: s, piece });
                        }
                    }
                }
                for (j, pieces) in outgoing.into_iter().enumerate() {
                    let to = PartyId::from_index(j);
                    if to != self.id {
                        io.send(to, "keygen.zeta-piece", &pieces);
                    }
                }
                self.phase = Phase::ZetaSum;
            }
            Phase::ZetaSum => {
                let recv: BTreeMap<PartyId, Vec<SlotPiece>> = self.from_all(io, "keygen.zeta-piece")?;
                let e = self.e();
                let mut sums = Vec::new();
                for (idx, &s) in self.accepted.iter().enumerate() {
                    let c = &mut self.batch[s];
                    let mut acc = c.own_piece.clone();
                    for pieces in recv.values() {
                        if let Some(p) = pieces.get(idx) {
                            acc += &p.piece;
                        }
                    }
                    c.own_sum = acc % &e;
                    sums.push(SlotPiece { slot: s, piece: c.own_sum.clone() });
                }
                io.broadcast("keygen.zeta-sum", &sums);
                self.phase = Phase::ZetaOpen;
            }
            Phase::ZetaOpen => {
                let recv: BTreeMap<PartyId, Vec<SlotPiece>> = self.from_all(io, "keygen.zeta-sum")?;
                let e = self.e();
                self.chosen = None;
                for (idx, &s) in self.accepted.iter().enumerate() {
                    let mut zeta = self.batch[s].own_sum.clone();
                    for sums in recv.values() {
                        if let Some(p) = sums.get(idx) {
                            zeta += &p.piece;
                        }
                    }
                    let zeta = zeta % &e;
                    if let Ok(multiplier) = exponent_multiplier(&zeta, &e) {
                        self.chosen = Some((s, multiplier.into()));
                        break;
                    }
                    log::debug!("{} slot {s} has e | phi, skipping", self.id);
                }
                let Some((s, multiplier)) = self.chosen.clone() else {
                    return self.start_batch(io).map(|_| None);
                };
                let c = &self.batch[s];
                let d = exponent_share(&multiplier.to_biguint().expect("positive"), &c.phi, &e);
                let trial = BigUint::from(TRIAL_MESSAGE).modpow(&e, &c.modulus);
                self.own_partial = partial_decrypt(&trial, &d, &c.modulus)?;
                self.chosen = Some((s, d));
                io.broadcast("keygen.trial", &Partial(self.own_partial.clone()));
                self.phase = Phase::Correction;
            }
            Phase::Correction => {
                let recv: BTreeMap<PartyId, Partial> = self.from_all(io, "keygen.trial")?;
                let (s, d) = self.chosen.clone().expect("chosen before correction");
                let c = &self.batch[s];
                let n = c.modulus.clone();
                let combined = recv.values().fold(self.own_partial.clone(), |acc, p| (acc * &p.0) % &n);
                let correction = find_correction(&combined, &self.e(), &n, self.k)?;
                let scheme = BackupScheme::for_modulus(self.cfg.backup_threshold as usize, self.k, &n);
                let backups = replicate_share(self.id, &d, &scheme, &mut self.rng)?;
                for b in backups {
                    if b.holder == self.id {
                        self.own_backup = Some(b);
                    } else {
                        io.send(b.holder, "keygen.backup", &b);
                    }
                }
                self.key = Some(PartyKey {
                    public: RsaPublicKey::new(n, self.e()),
                    share: PrivateShare {
                        party: self.id,
                        p: c.p.clone(),
                        q: c.q.clone(),
                        phi: c.phi.clone(),
                        d,
                        correction,
                    },
                    held_backups: Vec::new(),
                    backup: scheme,
                });
                self.phase = Phase::Collect;
            }
            Phase::Collect => {
                let recv: BTreeMap<PartyId, ShareBackup> = self.from_all(io, "keygen.backup")?;
                let mut key = self.key.take().expect("key assembled before collection");
                let mut held: Vec<ShareBackup> = recv.into_values().filter(|b| b.holder == self.id).collect();
                held.extend(self.own_backup.take());
                held.sort_by_key(|b| b.owner);
                key.held_backups = held;
                return Ok(Some(key));
            }
        }
        Ok(None)
    }
}

impl Machine for KeygenParty {
    type Output = Result<PartyKey, DkgError>;

    fn id(&self) -> PartyId {
        self.id
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        match self.advance(io) {
            Ok(Some(key)) => Step::Done(Ok(key)),
            Ok(None) => Step::Continue,
            Err(e) => Step::Done(Err(e)),
        }
    }
}

/// Runs key generation among all parties of `net`. The network's roster
/// size must equal `cfg.parties` and every party must be live.
pub fn run_distributed_keygen(cfg: &KeygenConfig, net: &mut Network) -> Result<DistributedKey, DkgError> {
    cfg.validate()?;
    if net.k() != cfg.parties {
        return Err(DkgError::InvalidConfig(format!(
            "network has {} parties, config expects {}",
            net.k(),
            cfg.parties
        )));
    }
    if let Some(down) = net.parties().find(|p| !net.is_live(*p)) {
        return Err(DkgError::MissingParty(down));
    }
    let machines: Vec<KeygenParty> = net
        .parties()
        .map(|id| {
            KeygenParty::new(
                id,
                cfg.clone(),
                net.party_rng(id, "keygen.candidates"),
                net.party_rng(id, "keygen.protocol"),
            )
        })
        .collect();
    let report = net.run(machines)?;
    let attempts = report.machines.iter().map(|m| m.attempts()).max().unwrap_or(0);
    net.metrics_mut().candidate_attempts += attempts;
    let mut metrics = report.metrics;
    metrics.candidate_attempts = attempts;
    let mut parties = Vec::with_capacity(cfg.parties as usize);
    for id in net.parties() {
        match report.outputs.get(&id) {
            Some(Ok(key)) => parties.push(key.clone()),
            Some(Err(e)) => return Err(e.clone()),
            None => return Err(DkgError::MissingParty(id)),
        }
    }
    let public = parties[0].public.clone();
    assert!(parties.iter().all(|p| p.public == public), "parties disagree on the public key");
    Ok(DistributedKey { public, parties, metrics })
}
