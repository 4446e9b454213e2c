//! Round-by-round state machines for the authority protocols. Parties hold
//! a borrow of their own state only; the requester is party id 0.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::credential::{open_payload, seal_payload, LeafShare, SealedPayload};
use super::party::{Approval, AuthorityParty, IssuedGrant, PublicParams};
use super::token::{pseudonym, token_digest_residue, TokenBody};
use super::{CredentialCiphertext, IdentityRecord, IdmError};
use crate::abe::{
    issue_tag, satisfies, verify_attribute_tag, AccessTree, AttributeId, AttributeKey, AttributeTag,
    EvaluationContext, RevocationList, RevocationTarget, UserId,
};
use crate::canonical::{self, biguint, bytes, bytes32};
use crate::cipher;
use crate::dkg::{combine_partials, partial_decrypt, recover_absent_partial, DkgError, PartialValue, ShareBackup};
use crate::net::{Machine, PartyId, RoundIo, Step};
use crate::share::SharePoint;

/// A party's answer to an authorization request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Granted,
    PolicyDenied,
    Revoked,
    Expired,
    IntegrityFailure,
    Stale,
}

impl Verdict {
    pub fn into_error(self) -> Option<IdmError> {
        match self {
            Verdict::Granted => None,
            Verdict::PolicyDenied => Some(IdmError::PolicyDenied),
            Verdict::Revoked => Some(IdmError::Revoked),
            Verdict::Expired => Some(IdmError::Expired),
            Verdict::IntegrityFailure => Some(IdmError::IntegrityFailure),
            Verdict::Stale => Some(IdmError::StaleRevocationList),
        }
    }
}

/// Either the requester or an authority party in one run.
pub(crate) enum Role<C, P> {
    Client(C),
    Party(P),
}

impl<C: Machine, P: Machine> Machine for Role<C, P> {
    type Output = Role<C::Output, P::Output>;

    fn id(&self) -> PartyId {
        match self {
            Role::Client(c) => c.id(),
            Role::Party(p) => p.id(),
        }
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        match self {
            Role::Client(c) => match c.step(io) {
                Step::Done(o) => Step::Done(Role::Client(o)),
                Step::Continue => Step::Continue,
            },
            Role::Party(p) => match p.step(io) {
                Step::Done(o) => Step::Done(Role::Party(o)),
                Step::Continue => Step::Continue,
            },
        }
    }
}

const PARTIAL: &str = "power.partial";
const BACKUP: &str = "power.backup";
const RECOVERED: &str = "power.recovered";
const FAILED: &str = "power.failed";

#[derive(Serialize, Deserialize)]
struct PowerPartial {
    #[serde(with = "biguint")]
    value: BigUint,
}

#[derive(Serialize, Deserialize)]
struct PowerFailed {
    missing: PartyId,
}

enum PowerPhase {
    AwaitPartials,
    AwaitBackups,
    AwaitRecovered,
}

pub(crate) enum Poll {
    Pending,
    Finished(Result<BigUint, DkgError>),
}

/// Joint `c^(sum d_i + correction)`: every live party broadcasts its
/// partial; the lowest live party rebuilds absent parties' partials from
/// backups sent to it privately and broadcasts them.
pub(crate) struct JointPower {
    base: BigUint,
    partials: BTreeMap<PartyId, BigUint>,
    missing: Vec<PartyId>,
    coordinator: PartyId,
    phase: PowerPhase,
    pub recovered: u64,
}

impl JointPower {
    pub fn start(io: &mut RoundIo, party: &AuthorityParty, params: &PublicParams, base: &BigUint) -> Result<Self, DkgError> {
        let value = partial_decrypt(base, &party.key.share.d, &params.rsa.modulus)?;
        io.broadcast(PARTIAL, &PowerPartial { value: value.clone() });
        Ok(Self {
            base: base.clone(),
            partials: BTreeMap::from([(party.id, value)]),
            missing: Vec::new(),
            coordinator: party.id,
            phase: PowerPhase::AwaitPartials,
            recovered: 0,
        })
    }

    fn combine(&self, params: &PublicParams) -> Result<BigUint, DkgError> {
        let partials: Vec<PartialValue> =
            self.partials.iter().map(|(p, v)| PartialValue { party: *p, value: v.clone() }).collect();
        combine_partials(&partials, params.parties, params.correction, &self.base, &params.rsa.modulus)
    }

    fn fail(&self, io: &mut RoundIo) -> Poll {
        let missing = self.missing[0];
        io.broadcast(FAILED, &PowerFailed { missing });
        Poll::Finished(Err(DkgError::MissingParty(missing)))
    }

    pub fn poll(&mut self, io: &mut RoundIo, party: &AuthorityParty, params: &PublicParams) -> Poll {
        let me = party.id;
        match self.phase {
            PowerPhase::AwaitPartials => {
                for (from, msg) in io.received::<PowerPartial>(PARTIAL) {
                    if !from.is_client() {
                        self.partials.insert(from, msg.value);
                    }
                }
                self.missing = (1..=params.parties as u32).map(PartyId).filter(|p| !self.partials.contains_key(p)).collect();
                if self.missing.is_empty() {
                    return Poll::Finished(self.combine(params));
                }
                self.coordinator = *self.partials.keys().next().expect("own partial present");
                if me != self.coordinator {
                    let backups: Vec<&ShareBackup> =
                        party.key.held_backups.iter().filter(|b| self.missing.contains(&b.owner)).collect();
                    io.send(self.coordinator, BACKUP, &backups);
                    self.phase = PowerPhase::AwaitRecovered;
                    return Poll::Pending;
                }
                if self.partials.len() < params.backup.threshold {
                    return self.fail(io);
                }
                self.phase = PowerPhase::AwaitBackups;
                Poll::Pending
            }
            PowerPhase::AwaitBackups => {
                let mut backups: Vec<ShareBackup> =
                    party.key.held_backups.iter().filter(|b| self.missing.contains(&b.owner)).cloned().collect();
                for (from, list) in io.received::<Vec<ShareBackup>>(BACKUP) {
                    backups.extend(list.into_iter().filter(|b| b.holder == from));
                }
                let mut rebuilt = Vec::with_capacity(self.missing.len());
                for &absent in &self.missing {
                    match recover_absent_partial(absent, &backups, &params.backup, &self.base, &params.rsa.modulus) {
                        Ok(value) => rebuilt.push(PartialValue { party: absent, value }),
                        Err(_) => return self.fail(io),
                    }
                }
                io.broadcast(RECOVERED, &rebuilt);
                self.recovered += rebuilt.len() as u64;
                for pv in rebuilt {
                    self.partials.insert(pv.party, pv.value);
                }
                Poll::Finished(self.combine(params))
            }
            PowerPhase::AwaitRecovered => {
                if let Some((_, f)) = io.received::<PowerFailed>(FAILED).into_iter().next() {
                    return Poll::Finished(Err(DkgError::MissingParty(f.missing)));
                }
                let from_coordinator = io
                    .received::<Vec<PartialValue>>(RECOVERED)
                    .into_iter()
                    .find(|(from, _)| *from == self.coordinator);
                match from_coordinator {
                    Some((_, list)) => {
                        for pv in list {
                            self.partials.insert(pv.party, pv.value);
                        }
                        Poll::Finished(self.combine(params))
                    }
                    None => Poll::Pending,
                }
            }
        }
    }
}

/// Requester-side view of a joint power: assembles the result from the
/// broadcast partials.
struct PowerObserver {
    base: BigUint,
    partials: BTreeMap<PartyId, BigUint>,
}

impl PowerObserver {
    fn observe(&mut self, io: &RoundIo, params: &PublicParams) -> Option<Result<BigUint, DkgError>> {
        if let Some((_, f)) = io.received::<PowerFailed>(FAILED).into_iter().next() {
            return Some(Err(DkgError::MissingParty(f.missing)));
        }
        for (from, msg) in io.received::<PowerPartial>(PARTIAL) {
            self.partials.insert(from, msg.value);
        }
        for (_, list) in io.received::<Vec<PartialValue>>(RECOVERED) {
            for pv in list {
                self.partials.insert(pv.party, pv.value);
            }
        }
        if self.partials.len() < params.parties {
            return None;
        }
        let partials: Vec<PartialValue> =
            self.partials.iter().map(|(p, v)| PartialValue { party: *p, value: v.clone() }).collect();
        Some(combine_partials(&partials, params.parties, params.correction, &self.base, &params.rsa.modulus))
    }
}

// Enrollment.

const ENROLL_SUBMIT: &str = "enroll.submit";
const ENROLL_ACK: &str = "enroll.ack";

/// The requester's enrollment message: `K_e^e mod N` and the record sealed
/// under a key derived from `K_e`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EnrollSubmit {
    #[serde(with = "biguint")]
    pub wrapped_key: BigUint,
    #[serde(with = "bytes")]
    pub sealed_record: Vec<u8>,
}

pub(crate) fn enrollment_key(session: &BigUint) -> [u8; 32] {
    canonical::sha256_concat(&[b"enroll", canonical::encode_uint(session).as_bytes()])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EnrollAck {
    error: Option<String>,
}

pub(crate) struct EnrollClient {
    pub submit: EnrollSubmit,
    live: BTreeSet<PartyId>,
    acks: BTreeMap<PartyId, Option<String>>,
}

impl EnrollClient {
    pub fn new(submit: EnrollSubmit) -> Self {
        Self { submit, live: BTreeSet::new(), acks: BTreeMap::new() }
    }
}

impl Machine for EnrollClient {
    type Output = BTreeMap<PartyId, Option<String>>;

    fn id(&self) -> PartyId {
        PartyId::CLIENT
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        if io.round() == 0 {
            io.broadcast(ENROLL_SUBMIT, &self.submit);
            return Step::Continue;
        }
        self.live.extend(io.of_kind(PARTIAL).map(|m| m.from));
        for (from, ack) in io.received::<EnrollAck>(ENROLL_ACK) {
            self.acks.insert(from, ack.error);
        }
        if !self.acks.is_empty() && self.live.iter().all(|p| self.acks.contains_key(p)) {
            Step::Done(std::mem::take(&mut self.acks))
        } else {
            Step::Continue
        }
    }
}

pub(crate) struct EnrollParty<'a> {
    pub party: &'a mut AuthorityParty,
    params: &'a PublicParams,
    pending: Option<(EnrollSubmit, JointPower)>,
}

impl<'a> EnrollParty<'a> {
    pub fn new(party: &'a mut AuthorityParty, params: &'a PublicParams) -> Self {
        Self { party, params, pending: None }
    }

    fn finish(&mut self, io: &mut RoundIo, outcome: Result<UserId, IdmError>) -> Step<(Result<UserId, IdmError>, u64)> {
        let recovered = self.pending.as_ref().map_or(0, |(_, p)| p.recovered);
        io.send(PartyId::CLIENT, ENROLL_ACK, &EnrollAck { error: outcome.as_ref().err().map(|e| format!("{e:?}")) });
        Step::Done((outcome, recovered))
    }

    fn store(&mut self, submit: &EnrollSubmit, session: &BigUint) -> Result<UserId, IdmError> {
        let plain = cipher::open(&enrollment_key(session), &submit.sealed_record)?;
        let record: IdentityRecord = canonical::from_canonical_slice(&plain).map_err(|_| IdmError::IntegrityFailure)?;
        record.validate()?;
        let user = record.user_id.clone();
        self.party.records.insert(user.clone(), record);
        Ok(user)
    }
}

impl Machine for EnrollParty<'_> {
    type Output = (Result<UserId, IdmError>, u64);

    fn id(&self) -> PartyId {
        self.party.id
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        if self.pending.is_none() {
            let Some((_, submit)) = io.received::<EnrollSubmit>(ENROLL_SUBMIT).into_iter().find(|(f, _)| f.is_client())
            else {
                return Step::Continue;
            };
            return match JointPower::start(io, self.party, self.params, &submit.wrapped_key) {
                Ok(power) => {
                    self.pending = Some((submit, power));
                    Step::Continue
                }
                Err(e) => self.finish(io, Err(e.into())),
            };
        }
        let (submit, mut power) = self.pending.take().expect("checked above");
        let poll = power.poll(io, self.party, self.params);
        let outcome = match poll {
            Poll::Pending => {
                self.pending = Some((submit, power));
                return Step::Continue;
            }
            Poll::Finished(Ok(session)) => self.store(&submit, &session),
            Poll::Finished(Err(e)) => Err(e.into()),
        };
        self.pending = Some((submit, power));
        self.finish(io, outcome)
    }
}

// Attribute key issuance.

const KEY_REQUEST: &str = "keygen.request";
const KEY_REPLY: &str = "keygen.tags";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct KeyRequest {
    pub user: UserId,
    pub attributes: Vec<AttributeId>,
    pub rank: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct KeyReply {
    pub tags: Option<Vec<AttributeTag>>,
}

pub(crate) struct KeyClient {
    pub request: KeyRequest,
}

impl Machine for KeyClient {
    type Output = BTreeMap<PartyId, KeyReply>;

    fn id(&self) -> PartyId {
        PartyId::CLIENT
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        if io.round() == 0 {
            io.broadcast(KEY_REQUEST, &self.request);
            return Step::Continue;
        }
        let replies: BTreeMap<PartyId, KeyReply> = io.received(KEY_REPLY).into_iter().collect();
        if replies.is_empty() {
            Step::Continue
        } else {
            Step::Done(replies)
        }
    }
}

pub(crate) struct KeyParty<'a> {
    pub party: &'a mut AuthorityParty,
}

impl Machine for KeyParty<'_> {
    type Output = ();

    fn id(&self) -> PartyId {
        self.party.id
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<()> {
        let Some((_, req)) = io.received::<KeyRequest>(KEY_REQUEST).into_iter().find(|(f, _)| f.is_client()) else {
            return Step::Continue;
        };
        let tags = self.party.records.contains_key(&req.user).then(|| {
            req.attributes.iter().map(|a| issue_tag(&self.party.master, &req.user, a, &[])).collect()
        });
        if tags.is_some() {
            self.party
                .issued
                .insert(req.user.clone(), IssuedGrant { attributes: req.attributes.clone(), rank: req.rank.clone() });
        }
        io.send(PartyId::CLIENT, KEY_REPLY, &KeyReply { tags });
        Step::Done(())
    }
}

// Credential sealing.

const DEPOSIT: &str = "encrypt.share";
const SEALED: &str = "encrypt.sealed";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct Deposit {
    #[serde(with = "bytes32")]
    pub nonce: [u8; 32],
    pub payload: SealedPayload,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct SealedReply {
    #[serde(with = "bytes")]
    pub blob: Vec<u8>,
}

pub(crate) struct SealClient {
    pub deposits: Vec<(PartyId, Deposit)>,
}

impl Machine for SealClient {
    type Output = BTreeMap<PartyId, Vec<u8>>;

    fn id(&self) -> PartyId {
        PartyId::CLIENT
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        if io.round() == 0 {
            for (to, d) in &self.deposits {
                io.send(*to, DEPOSIT, d);
            }
            return Step::Continue;
        }
        let replies: BTreeMap<PartyId, Vec<u8>> =
            io.received::<SealedReply>(SEALED).into_iter().map(|(p, r)| (p, r.blob)).collect();
        if replies.is_empty() {
            Step::Continue
        } else {
            Step::Done(replies)
        }
    }
}

pub(crate) struct SealParty<'a> {
    pub party: &'a AuthorityParty,
}

impl Machine for SealParty<'_> {
    type Output = ();

    fn id(&self) -> PartyId {
        self.party.id
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<()> {
        let Some((_, d)) = io.received::<Deposit>(DEPOSIT).into_iter().find(|(f, _)| f.is_client()) else {
            return Step::Continue;
        };
        let blob = seal_payload(&self.party.seal_key, &d.nonce, self.party.id, &d.payload);
        io.send(PartyId::CLIENT, SEALED, &SealedReply { blob });
        Step::Done(())
    }
}

// Authorization.

const AUTHZ_REQUEST: &str = "authz.request";
const ARL_VERSION: &str = "arl.version";
const AUTHZ_RELEASE: &str = "authz.release";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct AuthzRequest {
    pub session: String,
    pub credential: CredentialCiphertext,
    pub key: AttributeKey,
    pub ctx: EvaluationContext,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct VersionNotice {
    version: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct Release {
    pub verdict: Verdict,
    pub roster_point: Option<SharePoint>,
    pub leaves: Vec<LeafShare>,
}

pub(crate) struct AuthzClient {
    pub request: AuthzRequest,
}

impl Machine for AuthzClient {
    type Output = BTreeMap<PartyId, Release>;

    fn id(&self) -> PartyId {
        PartyId::CLIENT
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        if io.round() == 0 {
            io.broadcast(AUTHZ_REQUEST, &self.request);
            return Step::Continue;
        }
        let releases: BTreeMap<PartyId, Release> = io.received(AUTHZ_RELEASE).into_iter().collect();
        if releases.is_empty() {
            Step::Continue
        } else {
            Step::Done(releases)
        }
    }
}

pub(crate) struct AuthzParty<'a> {
    pub party: &'a mut AuthorityParty,
    request: Option<AuthzRequest>,
}

impl<'a> AuthzParty<'a> {
    pub fn new(party: &'a mut AuthorityParty) -> Self {
        Self { party, request: None }
    }
}

/// Time leaves replaced by an always-open window.
fn without_time(tree: &AccessTree) -> AccessTree {
    match tree {
        AccessTree::Time { .. } => AccessTree::Time { start: 0, end: u64::MAX },
        AccessTree::Gate { threshold, children } => {
            AccessTree::Gate { threshold: *threshold, children: children.iter().map(without_time).collect() }
        }
        leaf => leaf.clone(),
    }
}

fn context_leaf_holds(leaf: &AccessTree, ctx: &EvaluationContext) -> bool {
    satisfies(leaf, &BTreeSet::new(), ctx)
}

/// The party-side decision: tags, revocation, policy, then unsealing.
pub(crate) fn evaluate_request(
    party: &AuthorityParty,
    req: &AuthzRequest,
    maintainer_version: Option<u64>,
) -> Release {
    let deny = |verdict| Release { verdict, roster_point: None, leaves: Vec::new() };
    let cred = &req.credential;
    let Some(sealed) = cred.sealed_for(party.id) else {
        return deny(Verdict::PolicyDenied);
    };
    if cred.validate().is_err() {
        return deny(Verdict::IntegrityFailure);
    }
    let current = maintainer_version.unwrap_or(party.arl.version());
    if party.arl.version() < current {
        return deny(Verdict::Stale);
    }
    let path = req.key.identity_path();
    if party.arl.revokes_user(&path) {
        return deny(Verdict::Revoked);
    }
    let tree = &cred.access_tree;
    let unrevoked = RevocationList::new(party.arl.maintainer());
    let mut verified = BTreeSet::new();
    let mut revoked = BTreeSet::new();
    for attr in tree.attributes() {
        match verify_attribute_tag(party.id, &party.master, &req.key, &attr, &party.arl, current) {
            Ok(true) => {
                verified.insert(attr);
            }
            Ok(false) => {
                if verify_attribute_tag(party.id, &party.master, &req.key, &attr, &unrevoked, 0) == Ok(true) {
                    revoked.insert(attr);
                }
            }
            Err(_) => return deny(Verdict::Stale),
        }
    }
    if !satisfies(tree, &verified, &req.ctx) {
        let with_revoked: BTreeSet<AttributeId> = verified.union(&revoked).cloned().collect();
        let verdict = if satisfies(tree, &with_revoked, &req.ctx) {
            Verdict::Revoked
        } else if satisfies(&without_time(tree), &verified, &req.ctx) {
            Verdict::Expired
        } else {
            Verdict::PolicyDenied
        };
        return deny(verdict);
    }
    let payload = match open_payload(&party.seal_key, &sealed.blob, &cred.binding()) {
        Ok(p) => p,
        Err(_) => return deny(Verdict::IntegrityFailure),
    };
    let releasable: BTreeSet<_> = tree
        .leaves()
        .into_iter()
        .filter(|(_, leaf)| match leaf {
            AccessTree::Attr(a) => verified.contains(a),
            other => context_leaf_holds(other, &req.ctx),
        })
        .map(|(p, _)| p)
        .collect();
    let leaves = payload.leaves.into_iter().filter(|l| releasable.contains(&l.path)).collect();
    Release { verdict: Verdict::Granted, roster_point: Some(payload.roster_point), leaves }
}

impl Machine for AuthzParty<'_> {
    type Output = Verdict;

    fn id(&self) -> PartyId {
        self.party.id
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Verdict> {
        let Some(req) = self.request.take() else {
            if let Some((_, req)) = io.received::<AuthzRequest>(AUTHZ_REQUEST).into_iter().find(|(f, _)| f.is_client()) {
                io.broadcast(ARL_VERSION, &VersionNotice { version: self.party.arl.version() });
                self.request = Some(req);
            }
            return Step::Continue;
        };
        let maintainer = self.party.arl.maintainer();
        let announced = if maintainer == self.party.id {
            Some(self.party.arl.version())
        } else {
            io.received::<VersionNotice>(ARL_VERSION)
                .into_iter()
                .find(|(f, _)| *f == maintainer)
                .map(|(_, n)| n.version)
        };
        let release = evaluate_request(self.party, &req, announced);
        if release.verdict == Verdict::Granted {
            self.party
                .approvals
                .insert(req.session.clone(), Approval { user: req.key.user.clone(), epoch: req.ctx.now_epoch });
        }
        let verdict = release.verdict;
        io.send(PartyId::CLIENT, AUTHZ_RELEASE, &release);
        Step::Done(verdict)
    }
}

// Token signing.

const SIGN_REQUEST: &str = "sign.request";
const SIGN_DENY: &str = "sign.deny";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct SignRequest {
    pub session: String,
    pub body: TokenBody,
    pub anonymous: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SignDeny {
    reason: String,
}

pub(crate) struct SignClient<'a> {
    pub request: SignRequest,
    params: &'a PublicParams,
    observer: PowerObserver,
}

impl<'a> SignClient<'a> {
    pub fn new(request: SignRequest, params: &'a PublicParams) -> Self {
        let base = token_digest_residue(&request.body, &params.rsa.modulus);
        Self { request, params, observer: PowerObserver { base, partials: BTreeMap::new() } }
    }
}

impl Machine for SignClient<'_> {
    type Output = Result<BigUint, IdmError>;

    fn id(&self) -> PartyId {
        PartyId::CLIENT
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        if io.round() == 0 {
            io.broadcast(SIGN_REQUEST, &self.request);
            return Step::Continue;
        }
        if io.of_kind(SIGN_DENY).next().is_some() {
            return Step::Done(Err(IdmError::NoSession));
        }
        match self.observer.observe(io, self.params) {
            Some(r) => Step::Done(r.map_err(IdmError::from)),
            None => Step::Continue,
        }
    }
}

pub(crate) struct SignParty<'a> {
    pub party: &'a mut AuthorityParty,
    params: &'a PublicParams,
    power: Option<JointPower>,
}

impl<'a> SignParty<'a> {
    pub fn new(party: &'a mut AuthorityParty, params: &'a PublicParams) -> Self {
        Self { party, params, power: None }
    }

    fn check(&self, req: &SignRequest) -> Result<(), String> {
        let approval = self.party.approvals.get(&req.session).ok_or("unknown session")?;
        let b = &req.body;
        let expected_subject = if req.anonymous {
            pseudonym(&approval.user, &b.nonce)
        } else {
            approval.user.as_str().to_string()
        };
        if b.subject != expected_subject {
            return Err("subject mismatch".into());
        }
        if b.issued_epoch != approval.epoch || b.expiry_epoch <= b.issued_epoch {
            return Err("bad lifetime".into());
        }
        Ok(())
    }
}

impl Machine for SignParty<'_> {
    type Output = (Result<(), IdmError>, u64);

    fn id(&self) -> PartyId {
        self.party.id
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        let Some(power) = self.power.as_mut() else {
            let Some((_, req)) = io.received::<SignRequest>(SIGN_REQUEST).into_iter().find(|(f, _)| f.is_client())
            else {
                return Step::Continue;
            };
            if let Err(reason) = self.check(&req) {
                io.broadcast(SIGN_DENY, &SignDeny { reason });
                return Step::Done((Err(IdmError::NoSession), 0));
            }
            if req.anonymous {
                let user = self.party.approvals[&req.session].user.clone();
                self.party.pseudonyms.insert(req.body.subject.clone(), user);
            }
            let base = token_digest_residue(&req.body, &self.params.rsa.modulus);
            return match JointPower::start(io, self.party, self.params, &base) {
                Ok(p) => {
                    self.power = Some(p);
                    Step::Continue
                }
                Err(e) => {
                    io.broadcast(SIGN_DENY, &SignDeny { reason: e.to_string() });
                    Step::Done((Err(e.into()), 0))
                }
            };
        };
        if io.of_kind(SIGN_DENY).next().is_some() {
            return Step::Done((Err(IdmError::NoSession), 0));
        }
        match power.poll(io, self.party, self.params) {
            Poll::Pending => Step::Continue,
            Poll::Finished(r) => Step::Done((r.map(|_| ()).map_err(IdmError::from), power.recovered)),
        }
    }
}

// Revocation list distribution.

const ARL_UPDATE: &str = "arl.update";

pub(crate) struct RevokeParty<'a> {
    pub party: &'a mut AuthorityParty,
    pub target: Option<RevocationTarget>,
}

impl Machine for RevokeParty<'_> {
    type Output = Result<u64, IdmError>;

    fn id(&self) -> PartyId {
        self.party.id
    }

    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output> {
        if let Some(target) = self.target.take() {
            let result = self.party.arl.revoke(self.party.id, target).map_err(IdmError::from);
            if result.is_ok() {
                io.broadcast(ARL_UPDATE, &self.party.arl);
            }
            return Step::Done(result);
        }
        let maintainer = self.party.arl.maintainer();
        match io.received::<RevocationList>(ARL_UPDATE).into_iter().find(|(f, _)| *f == maintainer) {
            Some((_, list)) => {
                self.party.arl.apply_update(&list);
                Step::Done(Ok(self.party.arl.version()))
            }
            None => Step::Continue,
        }
    }
}

