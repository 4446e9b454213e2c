use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use super::credential::{credential_binding, item_nonce, LeafShare, SealedPayload};
use super::party::{AuthorityParty, PublicParams};
use super::protocol::{
    enrollment_key, AuthzClient, AuthzParty, AuthzRequest, Deposit, EnrollClient, EnrollParty, EnrollSubmit,
    KeyClient, KeyParty, KeyRequest, Release, RevokeParty, Role, SealClient, SealParty, SignClient, SignParty,
    SignRequest,
};
use super::token::{pseudonym, token_digest_residue, SsoToken, TokenBody};
use super::{
    group_setup, recover_session_key, sharing_field, split_session_key, CredentialCiphertext, GroupSetup,
    IdentityRecord, IdmError, RankPolicy, SealedShare, SessionKey, Verdict,
};
use crate::abe::{AccessTree, AbeError, AttributeId, AttributeKey, EvaluationContext, MasterSecret, NodePath, RevocationTarget, UserId};
use crate::arith;
use crate::bundle::{ActiveBundle, BundleItem};
use crate::canonical;
use crate::cipher;
use crate::dkg::{run_distributed_keygen, DistributedKey, DkgError, KeygenConfig};
use crate::net::{Network, PartyId};
use crate::rng::RandomSource;
use crate::share::{dedup_shares, ShareError, SharePoint};

/// Bundle thresholds and per-label sensitivities used by `encrypt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BundlePolicy {
    pub apoptosis_threshold: f64,
    pub evaporation_threshold: f64,
    #[serde(default)]
    pub sensitivities: BTreeMap<String, f64>,
    /// For labels missing from `sensitivities`.
    #[serde(default = "most_sensitive")]
    pub default_sensitivity: f64,
}

fn most_sensitive() -> f64 {
    1.0
}

impl Default for BundlePolicy {
    fn default() -> Self {
        Self {
            apoptosis_threshold: 0.3,
            evaporation_threshold: 0.8,
            sensitivities: BTreeMap::new(),
            default_sensitivity: most_sensitive(),
        }
    }
}

/// What a successful authorization leaves with the requester.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Authorization {
    pub user: UserId,
    pub session: String,
    pub epoch: u64,
    pub claims: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TokenRequest {
    pub audiences: Vec<String>,
    pub ttl_epochs: u64,
    #[serde(default)]
    pub anonymous: bool,
}

/// Claims plus the token from one full authentication.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Grant {
    pub claims: BTreeMap<String, String>,
    pub token: SsoToken,
}

/// The authority parties, their published parameters and the network they
/// talk over.
#[derive(Clone, Debug)]
pub struct Authority {
    pub params: PublicParams,
    pub parties: Vec<AuthorityParty>,
    pub net: Network,
}

fn denial(releases: &BTreeMap<PartyId, Release>) -> IdmError {
    let verdicts: BTreeSet<Verdict> = releases.values().map(|r| r.verdict).collect();
    for v in [Verdict::Revoked, Verdict::IntegrityFailure, Verdict::Expired, Verdict::Stale] {
        if verdicts.contains(&v) {
            return v.into_error().expect("denial verdict");
        }
    }
    IdmError::PolicyDenied
}

impl Authority {
    /// Runs key generation and has every party sample its master secret
    /// and sealing key locally.
    pub fn setup(cfg: &KeygenConfig, rank_policy: RankPolicy, net: Network) -> Result<Self, IdmError> {
        rank_policy.validate(cfg.parties as usize)?;
        let mut net = net;
        let key = run_distributed_keygen(cfg, &mut net)?;
        Self::from_key(key, rank_policy, net)
    }

    /// Wraps existing key material. Party 1 maintains the revocation list.
    pub fn from_key(key: DistributedKey, rank_policy: RankPolicy, net: Network) -> Result<Self, IdmError> {
        let k = key.parties.len();
        if k < 3 || net.k() as usize != k {
            return Err(DkgError::InvalidConfig(format!("need k >= 3 parties matching the network, got {k}")).into());
        }
        rank_policy.validate(k)?;
        let maintainer = PartyId(1);
        let params = PublicParams {
            rsa: key.public.clone(),
            parties: k,
            correction: key.parties[0].share.correction,
            sharing_field: sharing_field(),
            backup: key.scheme().clone(),
            rank_policy,
            maintainer,
        };
        let parties = key
            .parties
            .into_iter()
            .map(|pk| {
                let mut rng = net.party_rng(pk.share.party, "idm.setup");
                let master = MasterSecret::random(&mut rng);
                let seal_key = rng.bytes32();
                AuthorityParty::new(pk, master, seal_key, maintainer)
            })
            .collect();
        Ok(Self { params, parties, net })
    }

    pub fn k(&self) -> usize {
        self.params.parties
    }

    pub fn crash(&mut self, party: PartyId) -> Result<(), IdmError> {
        Ok(self.net.crash_now(party)?)
    }

    fn live(&self, id: PartyId) -> bool {
        self.net.is_live(id)
    }

    fn client_rng(&self, label: &str) -> crate::rng::DeterministicRng {
        self.net.party_rng(PartyId::CLIENT, label)
    }

    /// Builds the enrollment message for `record` under session value
    /// `session` in `[2, N)`.
    pub fn prepare_enrollment(&self, record: &IdentityRecord, session: &BigUint) -> Result<EnrollSubmit, IdmError> {
        record.validate()?;
        let n = &self.params.rsa.modulus;
        if session < &BigUint::from(2u32) || session >= n {
            return Err(DkgError::CiphertextOutOfRange.into());
        }
        let wrapped_key = self.params.rsa.encrypt(session);
        if !arith::gcd(&wrapped_key, n).is_one() {
            return Err(DkgError::NonInvertibleCiphertext.into());
        }
        let nonce = cipher::derive_nonce(&[b"enroll", record.user_id.as_str().as_bytes()]);
        let sealed_record = cipher::seal(&enrollment_key(session), &nonce, &canonical::to_canonical_bytes(record));
        Ok(EnrollSubmit { wrapped_key, sealed_record })
    }

    /// Enrolls `record` under a freshly sampled session value.
    pub fn enroll(&mut self, record: &IdentityRecord) -> Result<(), IdmError> {
        let mut rng = self.client_rng("enroll");
        let n = &self.params.rsa.modulus;
        let session = loop {
            let candidate = rng.below(&(n - 2u32)) + 2u32;
            if arith::gcd(&candidate, n).is_one() {
                break candidate;
            }
        };
        let submit = self.prepare_enrollment(record, &session)?;
        self.submit_enrollment(submit)
    }

    /// Sends a prepared enrollment and waits for every live party's
    /// acknowledgement.
    pub fn submit_enrollment(&mut self, submit: EnrollSubmit) -> Result<(), IdmError> {
        let params = &self.params;
        let mut machines = vec![Role::Client(EnrollClient::new(submit))];
        let live: Vec<bool> = self.parties.iter().map(|p| self.net.is_live(p.id)).collect();
        machines.extend(
            self.parties
                .iter_mut()
                .zip(live)
                .filter(|(_, l)| *l)
                .map(|(p, _)| Role::Party(EnrollParty::new(p, params))),
        );
        let report = self.net.run(machines)?;
        let mut recovered = 0;
        let mut acks = BTreeMap::new();
        let mut first_error = None;
        for (id, out) in report.outputs {
            match out {
                Role::Client(a) => acks = a,
                Role::Party((result, r)) => {
                    recovered = recovered.max(r);
                    if let (Err(e), None) = (result, &first_error) {
                        log::warn!("enrollment rejected by {id}: {e}");
                        first_error = Some(e);
                    }
                }
            }
        }
        self.net.metrics_mut().recoveries += recovered;
        if let Some(e) = first_error {
            return Err(e);
        }
        if acks.is_empty() {
            return Err(IdmError::MissingParty(PartyId(1)));
        }
        Ok(())
    }

    /// Each party tags every requested attribute with its own master
    /// secret.
    pub fn key_gen(&mut self, user: &UserId, attributes: &[AttributeId], rank: &str, epoch: u64) -> Result<AttributeKey, IdmError> {
        let mut attributes = attributes.to_vec();
        attributes.sort();
        attributes.dedup();
        if let Some(down) = self.parties.iter().map(|p| p.id).find(|p| !self.live(*p)) {
            return Err(IdmError::MissingParty(down));
        }
        let request = KeyRequest { user: user.clone(), attributes: attributes.clone(), rank: rank.to_string() };
        let mut machines = vec![Role::Client(KeyClient { request })];
        machines.extend(self.parties.iter_mut().map(|p| Role::Party(KeyParty { party: p })));
        let report = self.net.run(machines)?;
        let replies = report
            .outputs
            .into_values()
            .find_map(|o| match o {
                Role::Client(r) => Some(r),
                Role::Party(()) => None,
            })
            .unwrap_or_default();
        let mut per_party = Vec::with_capacity(self.k());
        for id in (1..=self.k() as u32).map(PartyId) {
            match replies.get(&id) {
                Some(r) => match &r.tags {
                    Some(tags) => per_party.push(tags.clone()),
                    None => return Err(IdmError::UnknownUser(user.clone())),
                },
                None => return Err(IdmError::MissingParty(id)),
            }
        }
        let tags = attributes
            .iter()
            .enumerate()
            .map(|(j, a)| (a.clone(), per_party.iter().map(|t| t[j]).collect()))
            .collect();
        Ok(AttributeKey {
            user: user.clone(),
            attributes: attributes.into_iter().collect(),
            rank: rank.to_string(),
            epoch,
            tags,
            delegation_chain: Vec::new(),
        })
    }

    /// Seals the record's claims into an active bundle guarded by `tree`.
    pub fn encrypt(
        &mut self,
        record: &IdentityRecord,
        tree: &AccessTree,
        policy: &BundlePolicy,
        epoch: u64,
    ) -> Result<ActiveBundle, IdmError> {
        record.validate()?;
        tree.validate()?;
        let t = self.params.rank_policy.threshold_for(&record.rank)?;
        let k = self.k();
        let field = self.params.sharing_field.clone();
        let mut rng = self.client_rng("encrypt");
        let key = SessionKey::random(&mut rng);
        let nonce = rng.bytes32();
        let shares = split_session_key(&key, tree, t, k, &field, &mut rng)?;
        let roster: Vec<PartyId> = (1..=k as u32).map(PartyId).collect();
        if let Some(down) = roster.iter().find(|p| !self.live(**p)) {
            return Err(IdmError::MissingParty(*down));
        }
        let binding = credential_binding(&nonce, t, tree, &roster);
        let leaves: Vec<LeafShare> =
            shares.leaves.iter().map(|(path, point)| LeafShare { path: path.clone(), point: point.clone() }).collect();
        let deposits = roster
            .iter()
            .zip(&shares.roster)
            .map(|(id, pt)| {
                let payload = SealedPayload { binding, roster_point: pt.clone(), leaves: leaves.clone() };
                (*id, Deposit { nonce, payload })
            })
            .collect();
        let mut machines = vec![Role::Client(SealClient { deposits })];
        machines.extend(self.parties.iter().map(|p| Role::Party(SealParty { party: p })));
        let report = self.net.run(machines)?;
        let blobs = report
            .outputs
            .into_values()
            .find_map(|o| match o {
                Role::Client(b) => Some(b),
                Role::Party(()) => None,
            })
            .unwrap_or_default();
        let mut sealed_shares = Vec::with_capacity(k);
        for id in &roster {
            let blob = blobs.get(id).ok_or(IdmError::MissingParty(*id))?;
            sealed_shares.push(SealedShare { party: *id, blob: blob.clone() });
        }
        let credential = CredentialCiphertext {
            sealed_shares,
            access_tree: tree.clone(),
            threshold: t,
            roster,
            nonce,
            key_mask: shares.key_mask,
        };
        let items = record
            .claims
            .iter()
            .map(|(label, value)| BundleItem {
                label: label.clone(),
                sensitivity: policy.sensitivities.get(label).copied().unwrap_or(policy.default_sensitivity),
                ciphertext: cipher::seal(key.bytes(), &item_nonce(&nonce, label), value.as_bytes()),
            })
            .collect();
        let bundle_id = format!("{}-{}", record.user_id, hex::encode(&nonce[..6]));
        Ok(ActiveBundle::new(
            &bundle_id,
            items,
            tree.clone(),
            policy.apoptosis_threshold,
            policy.evaporation_threshold,
            epoch,
            Some(credential),
        )?)
    }

    /// Presents `key` and `ctx` to every roster party, reassembles the
    /// session key from what they release and opens only `labels`.
    pub fn authorize(
        &mut self,
        bundle: &ActiveBundle,
        key: &AttributeKey,
        ctx: &EvaluationContext,
        labels: &[String],
    ) -> Result<Authorization, IdmError> {
        if labels.is_empty() {
            return Err(IdmError::NoLabels);
        }
        if !bundle.verify_integrity() {
            return Err(IdmError::IntegrityFailure);
        }
        if let Some(missing) = labels.iter().find(|l| bundle.item(l).is_none()) {
            return Err(IdmError::LabelUnknown(missing.clone()));
        }
        let credential = bundle.credential().ok_or(IdmError::IntegrityFailure)?.clone();
        if credential.access_tree != *bundle.access_tree() {
            return Err(IdmError::IntegrityFailure);
        }
        let session = hex::encode(self.client_rng("authorize").bytes32());
        let request = AuthzRequest { session: session.clone(), credential: credential.clone(), key: key.clone(), ctx: ctx.clone() };
        let releases = self.collect_releases(request)?;
        let field = &self.params.sharing_field;
        let granted: Vec<&Release> = releases.values().filter(|r| r.verdict == Verdict::Granted).collect();
        if granted.len() < credential.threshold {
            return Err(denial(&releases));
        }
        let roster: Vec<SharePoint> = granted.iter().filter_map(|r| r.roster_point.clone()).collect();
        let mut by_path: BTreeMap<NodePath, Vec<SharePoint>> = BTreeMap::new();
        for r in &granted {
            for l in &r.leaves {
                by_path.entry(l.path.clone()).or_default().push(l.point.clone());
            }
        }
        let mut leaves = BTreeMap::new();
        for (path, points) in by_path {
            match dedup_shares(&points, field)?.as_slice() {
                [one] => {
                    leaves.insert(path, one.clone());
                }
                _ => return Err(IdmError::IntegrityFailure),
            }
        }
        let session_key = match recover_session_key(
            &roster,
            &leaves,
            &credential.access_tree,
            credential.threshold,
            ctx,
            field,
            &credential.key_mask,
        ) {
            Ok(k) => k,
            Err(IdmError::Share(ShareError::InsufficientShares { .. }) | IdmError::Abe(AbeError::Unsatisfied)) => {
                return Err(IdmError::PolicyDenied)
            }
            Err(IdmError::Share(ShareError::IndexCollision { .. })) => return Err(IdmError::IntegrityFailure),
            Err(e) => return Err(e),
        };
        let mut claims = BTreeMap::new();
        for label in labels {
            let item = bundle.item(label).expect("checked above");
            let plain = cipher::open(session_key.bytes(), &item.ciphertext)?;
            claims.insert(label.clone(), String::from_utf8(plain).map_err(|_| IdmError::IntegrityFailure)?);
        }
        Ok(Authorization { user: key.user.clone(), session, epoch: ctx.now_epoch, claims })
    }

    fn collect_releases(&mut self, request: AuthzRequest) -> Result<BTreeMap<PartyId, Release>, IdmError> {
        let live: Vec<bool> = self.parties.iter().map(|p| self.net.is_live(p.id)).collect();
        if !live.iter().any(|l| *l) {
            return Ok(BTreeMap::new());
        }
        let mut machines = vec![Role::Client(AuthzClient { request })];
        machines.extend(
            self.parties
                .iter_mut()
                .zip(live)
                .filter(|(_, l)| *l)
                .map(|(p, _)| Role::Party(AuthzParty::new(p))),
        );
        let report = self.net.run(machines)?;
        Ok(report
            .outputs
            .into_values()
            .find_map(|o| match o {
                Role::Client(r) => Some(r),
                Role::Party(_) => None,
            })
            .unwrap_or_default())
    }

    /// Has the parties jointly sign a token for an authorized session.
    pub fn issue_sso_token(&mut self, auth: &Authorization, request: &TokenRequest) -> Result<SsoToken, IdmError> {
        if request.ttl_epochs == 0 {
            return Err(IdmError::InvalidLifetime);
        }
        let mut rng = self.client_rng("token");
        let n = &self.params.rsa.modulus;
        // Redraw the nonce until the digest residue is a unit mod N.
        let body = loop {
            let nonce = rng.bytes32();
            let subject = if request.anonymous { pseudonym(&auth.user, &nonce) } else { auth.user.to_string() };
            let body = TokenBody {
                subject,
                audiences: request.audiences.clone(),
                issued_epoch: auth.epoch,
                expiry_epoch: auth.epoch + request.ttl_epochs,
                nonce,
            };
            if arith::gcd(&token_digest_residue(&body, n), n).is_one() {
                break body;
            }
        };
        let sign = SignRequest { session: auth.session.clone(), body: body.clone(), anonymous: request.anonymous };
        let params = &self.params;
        let live: Vec<bool> = self.parties.iter().map(|p| self.net.is_live(p.id)).collect();
        let mut machines = vec![Role::Client(SignClient::new(sign, params))];
        machines.extend(
            self.parties
                .iter_mut()
                .zip(live)
                .filter(|(_, l)| *l)
                .map(|(p, _)| Role::Party(SignParty::new(p, params))),
        );
        let report = self.net.run(machines)?;
        let mut signature = None;
        let mut recovered = 0;
        for out in report.outputs.into_values() {
            match out {
                Role::Client(s) => signature = Some(s),
                Role::Party((_, r)) => recovered = recovered.max(r),
            }
        }
        self.net.metrics_mut().recoveries += recovered;
        let signature = signature.ok_or(IdmError::MissingParty(PartyId(1)))??;
        let residue = token_digest_residue(&body, &self.params.rsa.modulus);
        if !self.params.rsa.verify(&residue, &signature) {
            return Err(IdmError::IntegrityFailure);
        }
        Ok(SsoToken::new(body, signature))
    }

    /// Authorization followed by token issuance.
    pub fn authenticate(
        &mut self,
        bundle: &ActiveBundle,
        key: &AttributeKey,
        ctx: &EvaluationContext,
        labels: &[String],
        token: &TokenRequest,
    ) -> Result<Grant, IdmError> {
        let auth = self.authorize(bundle, key, ctx, labels)?;
        let token = self.issue_sso_token(&auth, token)?;
        Ok(Grant { claims: auth.claims, token })
    }

    /// Releases one item's plaintext.
    pub fn disclose_item(
        &mut self,
        bundle: &ActiveBundle,
        label: &str,
        key: &AttributeKey,
        ctx: &EvaluationContext,
    ) -> Result<String, IdmError> {
        let mut auth = self.authorize(bundle, key, ctx, &[label.to_string()])?;
        Ok(auth.claims.remove(label).expect("requested label decrypted"))
    }

    /// Revokes on the maintainer and pushes the new list to every replica.
    pub fn revoke(&mut self, caller: PartyId, target: RevocationTarget) -> Result<u64, IdmError> {
        let maintainer = self.params.maintainer;
        if caller != maintainer {
            return Err(AbeError::NotMaintainer(caller).into());
        }
        if !self.live(maintainer) {
            return Err(IdmError::MissingParty(maintainer));
        }
        let live: Vec<bool> = self.parties.iter().map(|p| self.net.is_live(p.id)).collect();
        let machines: Vec<RevokeParty> = self
            .parties
            .iter_mut()
            .zip(live)
            .filter(|(_, l)| *l)
            .map(|(p, _)| {
                let target = (p.id == maintainer).then(|| target.clone());
                RevokeParty { party: p, target }
            })
            .collect();
        let report = self.net.run(machines)?;
        report.outputs.get(&maintainer).cloned().unwrap_or(Err(IdmError::MissingParty(maintainer)))
    }

    /// Deals a fresh group secret from the lowest live party.
    pub fn group_setup(&mut self, group_id: &str, members: &[String], t: usize, epoch: u64) -> Result<GroupSetup, IdmError> {
        let dealer = self.net.live_parties().into_iter().next().ok_or(IdmError::MissingParty(PartyId(1)))?;
        let mut rng = self.net.party_rng(dealer, &format!("group/{group_id}/{epoch}"));
        group_setup(group_id, members, t, &self.params.sharing_field, epoch, &mut rng)
    }

    pub fn party(&self, id: PartyId) -> Option<&AuthorityParty> {
        self.parties.iter().find(|p| p.id == id)
    }
}
