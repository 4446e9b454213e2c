use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use cloudidm::abe::{delegate, AccessTree, AttributeId, AttributeKey, EvaluationContext, RevocationTarget, UserId};
use cloudidm::bundle::{process_arrival, ActiveBundle, HostProfile};
use cloudidm::canonical;
use cloudidm::dkg::run_distributed_keygen;
use cloudidm::idm::{
    group_authenticate, verify_sso_token, Authority, Authorization, GroupAuthState, IdentityRecord, RankPolicy,
    SsoToken, TokenRequest,
};
use cloudidm::net::{AdversaryConfig, Network, PartyId};
use cloudidm::share::SharePoint;

use crate::config::{CliConfig, DEFAULT_PARTIES};
use crate::error::CliError;
use crate::state::{file_stem, party_file, read_json_file, write_file, write_json_file, StateDir};

pub struct TokenOptions {
    pub audiences: Vec<String>,
    pub ttl: u64,
    pub anonymous: bool,
}

impl TokenOptions {
    fn request(&self) -> TokenRequest {
        TokenRequest { audiences: self.audiences.clone(), ttl_epochs: self.ttl, anonymous: self.anonymous }
    }
}

/// Everything one invocation needs besides its subcommand arguments.
pub struct Context {
    state: StateDir,
    config: CliConfig,
    seed: u64,
    epoch: u64,
    parallel: bool,
    crash: Vec<PartyId>,
    transcript: Option<PathBuf>,
}

fn parse_user(s: &str) -> Result<UserId, CliError> {
    UserId::new(s).map_err(|e| CliError::usage(e.to_string()))
}

fn parse_attrs(list: &[String]) -> Result<Vec<AttributeId>, CliError> {
    list.iter()
        .map(|a| a.parse::<AttributeId>().map_err(|e| CliError::usage(format!("attribute {a:?}: {e}"))))
        .collect()
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

/// `a..b` (inclusive) or `a,b,c`.
fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::usage(format!("bad seed list {s:?}"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

impl Context {
    pub fn new(
        state: PathBuf,
        config: CliConfig,
        seed: u64,
        epoch: u64,
        parallel: bool,
        crash: Vec<u32>,
        transcript: Option<PathBuf>,
    ) -> Self {
        Self {
            state: StateDir::new(state),
            config,
            seed,
            epoch,
            parallel,
            crash: crash.into_iter().map(PartyId).collect(),
            transcript,
        }
    }

    /// Seed for this invocation: the base seed mixed with the state snapshot
    /// and the command, so successive commands draw fresh randomness while a
    /// repeated command on the same snapshot replays exactly.
    fn network_seed(&self, command: &str) -> Result<u64, CliError> {
        let snapshot = self.state.snapshot_digest()?;
        let d = canonical::sha256_concat(&[b"cloudidm.cli", &self.seed.to_be_bytes(), &snapshot, command.as_bytes()]);
        Ok(u64::from_be_bytes(d[..8].try_into().expect("8 bytes")))
    }

    fn network(&self, k: u32, command: &str) -> Result<Network, CliError> {
        let seed = self.network_seed(command)?;
        let mut net = Network::new(k, AdversaryConfig::honest(), seed)
            .map_err(|e| CliError::usage(e.to_string()))?
            .with_parallel(self.parallel);
        for p in &self.crash {
            net.crash_now(*p).map_err(|e| CliError::usage(format!("--crash: {e}")))?;
        }
        Ok(net)
    }

    fn load_authority(&self, command: &str) -> Result<Authority, CliError> {
        let params = self.state.load_params()?;
        let parties = self.state.load_parties(&params)?;
        let net = self.network(params.parties as u32, command)?;
        Ok(Authority { params, parties, net })
    }

    fn write_transcript(&self, net: &Network) -> Result<(), CliError> {
        if let Some(path) = &self.transcript {
            write_file(path, net.transcript().to_json_lines().as_bytes())?;
        }
        Ok(())
    }

    /// Persists party state and the transcript, whether or not the
    /// command itself succeeded.
    fn finish<T>(&self, authority: &Authority, result: Result<T, CliError>) -> Result<T, CliError> {
        self.state.save_authority(authority)?;
        self.write_transcript(&authority.net)?;
        result
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(self.state.root()).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }

    pub fn setup(&mut self, parties: Option<u32>, bits: Option<u32>) -> Result<Value, CliError> {
        if self.state.is_initialized() {
            return Err(CliError::usage(format!("{} is already initialized", self.state.root().display())));
        }
        let k = parties.or(self.config.parties).unwrap_or(DEFAULT_PARTIES);
        let cfg = self.config.keygen_config(k, bits);
        cfg.validate()?;
        let rank_policy = self.config.rank_policy.clone().unwrap_or_else(|| RankPolicy::default_for(k as usize));
        rank_policy.validate(k as usize)?;
        let net = self.network(k, "setup")?;
        let authority = Authority::setup(&cfg, rank_policy, net)?;
        let metrics = authority.net.metrics().clone();
        self.finish(&authority, Ok(()))?;
        log::info!("initialized {} parties in {}", k, self.state.root().display());
        Ok(json!({
            "publicKey": to_value(&authority.params.rsa),
            "parties": k,
            "maintainer": authority.params.maintainer,
            "rankPolicy": to_value(&authority.params.rank_policy),
            "candidateAttempts": metrics.candidate_attempts,
            "rounds": metrics.rounds,
            "totalBytes": metrics.total_bytes,
        }))
    }

    pub fn enroll(&mut self, record: &Path) -> Result<Value, CliError> {
        let record: IdentityRecord = read_json_file(record)?;
        record.validate()?;
        let mut authority = self.load_authority("enroll")?;
        let result = authority.enroll(&record).map_err(CliError::from);
        let recoveries = authority.net.metrics().recoveries;
        self.finish(&authority, result)?;
        // Client-side copy so `encrypt --user` can find it.
        self.state.write(&format!("records/{}.json", file_stem(record.user_id.as_str())), &record)?;
        Ok(json!({ "enrolled": record.user_id, "rank": record.rank, "recoveries": recoveries }))
    }

    pub fn keygen_user(&mut self, user: &str, attrs: &[String], rank: &str) -> Result<Value, CliError> {
        let user = parse_user(user)?;
        let attrs = parse_attrs(attrs)?;
        let mut authority = self.load_authority("keygen-user")?;
        let result = authority.key_gen(&user, &attrs, rank, self.epoch).map_err(CliError::from);
        let key = self.finish(&authority, result)?;
        let rel = format!("keys/{}.json", file_stem(user.as_str()));
        self.state.write(&rel, &key)?;
        Ok(json!({ "user": user, "attributes": to_value(&key.attributes), "rank": key.rank, "keyFile": rel }))
    }

    pub fn encrypt(&mut self, user: Option<&str>, record: Option<&Path>, tree: &Path) -> Result<Value, CliError> {
        let record: IdentityRecord = match (user, record) {
            (_, Some(path)) => read_json_file(path)?,
            (Some(u), None) => self.state.read(&format!("records/{}.json", file_stem(u)))?,
            (None, None) => return Err(CliError::usage("encrypt needs --user or --record")),
        };
        let tree: AccessTree = read_json_file(tree)?;
        let policy = self.config.bundle_policy();
        let mut authority = self.load_authority("encrypt")?;
        let result = authority.encrypt(&record, &tree, &policy, self.epoch).map_err(CliError::from);
        let bundle = self.finish(&authority, result)?;
        let rel = format!("bundles/{}.ab.json", file_stem(bundle.bundle_id()));
        write_file(&self.state.path(&rel), &bundle.to_canonical_bytes())?;
        Ok(json!({
            "bundleId": bundle.bundle_id(),
            "bundleFile": rel,
            "labels": bundle.labels(),
            "threshold": bundle.credential().map(|c| c.threshold),
        }))
    }

    fn read_bundle(path: &Path) -> Result<ActiveBundle, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        ActiveBundle::from_canonical_slice(&bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn authn(
        &mut self,
        bundle: &Path,
        key: &Path,
        labels: &[String],
        loc: &str,
        token: &TokenOptions,
    ) -> Result<Value, CliError> {
        let bundle = Self::read_bundle(bundle)?;
        let key: AttributeKey = read_json_file(key)?;
        let ctx = EvaluationContext::new(self.epoch, loc);
        let mut authority = self.load_authority("authn")?;
        let result = authority.authorize(&bundle, &key, &ctx, labels).map_err(CliError::from);
        let auth = match result {
            Ok(a) => a,
            Err(e) => return self.finish(&authority, Err(e)),
        };
        let session_rel = format!("sessions/{}.json", auth.session);
        self.state.write(&session_rel, &auth)?;
        let mut out = json!({
            "verdict": "Granted",
            "user": auth.user,
            "session": auth.session,
            "sessionFile": session_rel,
            "claims": to_value(&auth.claims),
        });
        if !token.audiences.is_empty() {
            let result = authority.issue_sso_token(&auth, &token.request()).map_err(CliError::from);
            let signed = self.finish(&authority, result)?;
            let token_rel = self.save_token(&signed)?;
            out["token"] = to_value(&signed);
            out["tokenFile"] = Value::String(token_rel);
        } else {
            self.finish(&authority, Ok(()))?;
        }
        Ok(out)
    }

    fn save_token(&self, token: &SsoToken) -> Result<String, CliError> {
        let rel = format!("tokens/{}.json", hex::encode(&token.nonce[..8]));
        self.state.write(&rel, token)?;
        Ok(rel)
    }

    pub fn delegate(
        &mut self,
        parent: &Path,
        child: &str,
        attrs: &[String],
        out: Option<&Path>,
    ) -> Result<Value, CliError> {
        let parent: AttributeKey = read_json_file(parent)?;
        let child = parse_user(child)?;
        let subset = parse_attrs(attrs)?.into_iter().collect();
        let key = delegate(&parent, &child, &subset)?;
        let path = match out {
            Some(p) => p.to_path_buf(),
            None => self.state.path(&format!("keys/{}.json", file_stem(child.as_str()))),
        };
        write_json_file(&path, &key)?;
        Ok(json!({
            "user": key.user,
            "attributes": to_value(&key.attributes),
            "delegationChain": to_value(&key.delegation_chain),
            "keyFile": self.rel(&path),
        }))
    }

    pub fn revoke(&mut self, user: &str, attr: Option<&str>, acting: Option<u32>) -> Result<Value, CliError> {
        let user = parse_user(user)?;
        let target = match attr {
            Some(a) => {
                let a = a.parse::<AttributeId>().map_err(|e| CliError::usage(format!("attribute {a:?}: {e}")))?;
                RevocationTarget::Grant(user, a)
            }
            None => RevocationTarget::User(user),
        };
        let mut authority = self.load_authority("revoke")?;
        let caller = acting.map(PartyId).unwrap_or(authority.params.maintainer);
        let result = authority.revoke(caller, target.clone()).map_err(CliError::from);
        let version = self.finish(&authority, result)?;
        Ok(json!({ "revoked": to_value(&target), "version": version }))
    }

    pub fn sso_issue(&mut self, session: &Path, token: &TokenOptions) -> Result<Value, CliError> {
        let auth: Authorization = read_json_file(session)?;
        let mut authority = self.load_authority("sso-issue")?;
        let result = authority.issue_sso_token(&auth, &token.request()).map_err(CliError::from);
        let signed = self.finish(&authority, result)?;
        let rel = self.save_token(&signed)?;
        Ok(json!({ "token": to_value(&signed), "tokenFile": rel }))
    }

    pub fn sso_verify(&mut self, token: &Path, audience: &str) -> Result<Value, CliError> {
        let params = self.state.load_params()?;
        let token: SsoToken = read_json_file(token)?;
        let verdict = verify_sso_token(&token, &params.rsa, audience, self.epoch);
        let out = json!({ "verdict": to_value(&verdict), "subject": token.subject });
        if verdict.accepted() {
            Ok(out)
        } else {
            Err(CliError::Denied(out))
        }
    }

    fn group_rel(group: &str) -> String {
        format!("groups/{}.json", file_stem(group))
    }

    pub fn group_setup(&mut self, group: &str, members: &[String], threshold: usize) -> Result<Value, CliError> {
        let mut authority = self.load_authority("group-setup")?;
        let setup = authority.group_setup(group, members, threshold, self.epoch)?;
        self.write_transcript(&authority.net)?;
        let rel = Self::group_rel(group);
        if self.state.path(&rel).exists() {
            log::warn!("replacing existing state for group {group}");
        }
        self.state.write(&rel, &setup.state)?;
        let shares: serde_json::Map<String, Value> =
            setup.deliveries.iter().map(|(m, p)| (m.clone(), to_value(p))).collect();
        Ok(json!({ "group": group, "epoch": self.epoch, "threshold": threshold, "shares": shares }))
    }

    pub fn group_auth(&mut self, group: &str, shares: &Path) -> Result<Value, CliError> {
        let rel = Self::group_rel(group);
        let mut state: GroupAuthState = self.state.read(&rel)?;
        let submitted: Vec<SharePoint> = read_json_file(shares)?;
        let result = group_authenticate(&mut state, &submitted, self.epoch);
        self.state.write(&rel, &state)?;
        match result? {
            true => Ok(json!({ "group": group, "accepted": true })),
            false => Err(CliError::Denied(json!({ "group": group, "accepted": false }))),
        }
    }

    pub fn bundle_send(&mut self, bundle: &Path, host: &str, trust: f64, out: Option<&Path>) -> Result<Value, CliError> {
        let bundle = Self::read_bundle(bundle)?;
        let host = HostProfile::new(host, trust)?;
        let (decision, after) = process_arrival(&bundle, &host);
        if let Some(path) = out {
            write_file(path, &after.to_canonical_bytes())?;
        }
        Ok(to_value(&decision))
    }

    pub fn bench_dkg(
        &mut self,
        seeds: &str,
        bits: Option<u32>,
        parties: Option<u32>,
        timing: bool,
    ) -> Result<Value, CliError> {
        let seeds = parse_seeds(seeds)?;
        let k = parties.or(self.config.parties).unwrap_or(DEFAULT_PARTIES);
        let cfg = self.config.keygen_config(k, bits);
        cfg.validate()?;
        let mut runs = Vec::with_capacity(seeds.len());
        let mut attempts = Vec::with_capacity(seeds.len());
        let started = Instant::now();
        for seed in &seeds {
            let mut net = Network::new(k, AdversaryConfig::honest(), *seed)
                .map_err(|e| CliError::usage(e.to_string()))?
                .with_parallel(self.parallel);
            let t0 = Instant::now();
            let key = run_distributed_keygen(&cfg, &mut net)?;
            let secs = t0.elapsed().as_secs_f64();
            log::info!("seed {seed}: {} attempts in {secs:.3}s", key.metrics.candidate_attempts);
            attempts.push(key.metrics.candidate_attempts);
            let mut run = json!({
                "seed": seed,
                "publicKey": to_value(&key.public),
                "candidateAttempts": key.metrics.candidate_attempts,
                "rounds": key.metrics.rounds,
                "totalBytes": key.metrics.total_bytes,
            });
            if timing {
                run["wallClockSeconds"] = json!(secs);
            }
            runs.push(run);
        }
        let total: u64 = attempts.iter().sum();
        let mut out = json!({
            "parties": k,
            "primeShareBits": cfg.prime_share_bits,
            "biprimalityRounds": cfg.biprimality_rounds,
            "runs": runs,
            "meanAttempts": total as f64 / attempts.len().max(1) as f64,
            "maxAttempts": attempts.iter().max().copied().unwrap_or(0),
        });
        if timing {
            out["totalWallClockSeconds"] = json!(started.elapsed().as_secs_f64());
        }
        Ok(out)
    }

    pub fn export_party_secret(&mut self, party: u32, confirm: bool) -> Result<Value, CliError> {
        if !confirm {
            return Err(CliError::usage("export-party-secret prints secret key material; pass --confirm"));
        }
        let params = self.state.load_params()?;
        if party == 0 || party as usize > params.parties {
            return Err(CliError::usage(format!("no party {party}")));
        }
        let value: Value = self.state.read(&party_file(party))?;
        eprintln!("WARNING: stdout carries the full secret state of party {party}");
        Ok(json!({ "party": party, "secret": value }))
    }
}
