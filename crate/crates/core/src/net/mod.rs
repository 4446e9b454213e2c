//! Deterministic in-memory multi-party network.
//!
//! Protocols run in synchronous rounds: messages emitted in round `r` are
//! delivered at round `r + 1`, in canonical `(from, to, kind)` order. Each
//! party is a [`Machine`]; the simulator owns them for the duration of a run
//! and hands them back afterwards so long-lived state survives between runs.
//!
//! Party id 0 is reserved for the off-roster client (user / requester).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{self, to_canonical_bytes};
use crate::rng::DeterministicRng;

/// Hard cap on rounds per run; reaching it is reported as a deadlock.
pub const MAX_ROUNDS_PER_RUN: u64 = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("{corrupted} corrupted parties exceed the honest-majority bound {bound}")]
    HonestMajority { corrupted: usize, bound: usize },
    #[error("party {0} already crashed")]
    AlreadyCrashed(PartyId),
    #[error("unknown party {0}")]
    UnknownParty(PartyId),
    #[error("party {0} is listed twice")]
    DuplicateParty(PartyId),
    #[error("no party progressed in round {round}")]
    Deadlock { round: u64 },
    #[error("network needs at least one party")]
    NoParties,
    #[error("malformed {kind} message from {from}: {reason}")]
    Malformed { from: PartyId, kind: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub u32);

impl PartyId {
    pub const CLIENT: PartyId = PartyId(0);

    pub fn is_client(self) -> bool {
        self.0 == 0
    }

    /// Zero-based position of an authority party.
    pub fn index(self) -> usize {
        debug_assert!(!self.is_client());
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        PartyId(i as u32 + 1)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_client() {
            f.write_str("client")
        } else {
            write!(f, "P{}", self.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Recipient {
    Party(PartyId),
    Broadcast,
}

impl Serialize for Recipient {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Recipient::Party(p) => p.serialize(s),
            Recipient::Broadcast => s.serialize_str("broadcast"),
        }
    }
}

impl<'de> Deserialize<'de> for Recipient {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "broadcast" => Ok(Recipient::Broadcast),
            serde_json::Value::Number(n) => n
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .map(|v| Recipient::Party(PartyId(v)))
                .ok_or_else(|| serde::de::Error::custom("bad party id")),
            other => Err(serde::de::Error::custom(format!("bad recipient {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub round: u64,
    pub from: PartyId,
    pub to: Recipient,
    pub kind: String,
    #[serde(rename = "bodyHex", with = "canonical::bytes")]
    pub body: Vec<u8>,
}

impl Message {
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, NetError> {
        serde_json::from_slice(&self.body).map_err(|e| NetError::Malformed {
            from: self.from,
            kind: self.kind.clone(),
            reason: e.to_string(),
        })
    }

    /// Whether `party` sends, receives, or observes this message.
    pub fn visible_to(&self, party: PartyId) -> bool {
        self.from == party || self.to == Recipient::Party(party) || self.to == Recipient::Broadcast
    }

    fn delivered_to(&self, party: PartyId) -> bool {
        match self.to {
            Recipient::Party(p) => p == party,
            Recipient::Broadcast => self.from != party,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    messages: Vec<Message>,
}

impl Transcript {
    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.body.len() as u64).sum()
    }

    /// Everything party `p` sent, received, or saw broadcast.
    pub fn view_of(&self, p: PartyId) -> Vec<&Message> {
        self.messages.iter().filter(|m| m.visible_to(p)).collect()
    }

    /// One canonical JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&canonical::to_canonical_string(m));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self, serde_json::Error> {
        let messages = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { messages })
    }

    /// True if `needle` appears as a JSON token in any message body.
    pub fn any_body_contains(&self, needle: &[u8]) -> bool {
        self.messages.iter().any(|m| canonical::contains_json_token(&m.body, needle))
    }

    fn extend(&mut self, msgs: impl IntoIterator<Item = Message>) {
        self.messages.extend(msgs);
    }
}

/// Passive corruptions and crash faults for one network.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AdversaryConfig {
    corrupted_parties: BTreeSet<PartyId>,
    crash_schedule: BTreeMap<PartyId, u64>,
}

impl AdversaryConfig {
    pub fn new(
        k: u32,
        corrupted: impl IntoIterator<Item = PartyId>,
        crashes: impl IntoIterator<Item = (PartyId, u64)>,
    ) -> Result<Self, NetError> {
        let cfg = Self {
            corrupted_parties: corrupted.into_iter().collect(),
            crash_schedule: crashes.into_iter().collect(),
        };
        cfg.validate(k)?;
        Ok(cfg)
    }

    pub fn honest() -> Self {
        Self::default()
    }

    /// Largest tolerated passive coalition, `floor((k-1)/2)`.
    pub fn corruption_bound(k: u32) -> usize {
        (k.saturating_sub(1) / 2) as usize
    }

    pub fn validate(&self, k: u32) -> Result<(), NetError> {
        for p in self.corrupted_parties.iter().chain(self.crash_schedule.keys()) {
            if p.is_client() || p.0 > k {
                return Err(NetError::UnknownParty(*p));
            }
        }
        let bound = Self::corruption_bound(k);
        if self.corrupted_parties.len() > bound {
            return Err(NetError::HonestMajority { corrupted: self.corrupted_parties.len(), bound });
        }
        Ok(())
    }

    pub fn corrupted(&self) -> &BTreeSet<PartyId> {
        &self.corrupted_parties
    }

    pub fn crash_schedule(&self) -> &BTreeMap<PartyId, u64> {
        &self.crash_schedule
    }

    fn crashed_at(&self, p: PartyId, round: u64) -> bool {
        self.crash_schedule.get(&p).is_some_and(|r| round >= *r)
    }
}

/// Messages sent by, sent to, or broadcast past any corrupted party.
pub fn corrupt_view(transcript: &Transcript, adversary: &AdversaryConfig) -> Vec<Message> {
    let c = adversary.corrupted();
    if c.is_empty() {
        return Vec::new();
    }
    transcript
        .messages()
        .iter()
        .filter(|m| {
            c.contains(&m.from)
                || m.to == Recipient::Broadcast
                || matches!(m.to, Recipient::Party(p) if c.contains(&p))
        })
        .cloned()
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub rounds: u64,
    pub total_bytes: u64,
    pub candidate_attempts: u64,
    pub recoveries: u64,
    pub wall_clock_seconds: f64,
}

impl Metrics {
    pub fn absorb(&mut self, other: &Metrics) {
        self.rounds += other.rounds;
        self.total_bytes += other.total_bytes;
        self.candidate_attempts += other.candidate_attempts;
        self.recoveries += other.recoveries;
        self.wall_clock_seconds += other.wall_clock_seconds;
    }
}

pub enum Step<O> {
    Continue,
    Done(O),
}

/// A party's protocol logic for one run.
pub trait Machine: Send {
    type Output: Send;

    fn id(&self) -> PartyId;

    /// Called once per round with the messages delivered this round.
    fn step(&mut self, io: &mut RoundIo) -> Step<Self::Output>;
}

/// Per-round mailbox handed to [`Machine::step`].
pub struct RoundIo {
    me: PartyId,
    round: u64,
    inbox: Vec<Message>,
    outbox: Vec<Message>,
}

impl RoundIo {
    /// Round number relative to the start of the run.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn me(&self) -> PartyId {
        self.me
    }

    pub fn inbox(&self) -> &[Message] {
        &self.inbox
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Message> + 'a {
        self.inbox.iter().filter(move |m| m.kind == kind)
    }

    /// Decodes every delivered message of `kind`; malformed bodies are dropped.
    pub fn received<T: DeserializeOwned>(&self, kind: &str) -> Vec<(PartyId, T)> {
        self.of_kind(kind)
            .filter_map(|m| match m.decode() {
                Ok(v) => Some((m.from, v)),
                Err(e) => {
                    log::warn!("{} dropping message: {e}", self.me);
                    None
                }
            })
            .collect()
    }

    pub fn send<T: Serialize + ?Sized>(&mut self, to: PartyId, kind: &str, body: &T) {
        self.push(Recipient::Party(to), kind, body);
    }

    pub fn broadcast<T: Serialize + ?Sized>(&mut self, kind: &str, body: &T) {
        self.push(Recipient::Broadcast, kind, body);
    }

    fn push<T: Serialize + ?Sized>(&mut self, to: Recipient, kind: &str, body: &T) {
        self.outbox.push(Message {
            round: 0,
            from: self.me,
            to,
            kind: kind.to_string(),
            body: to_canonical_bytes(body),
        });
    }
}

pub struct RunReport<M: Machine> {
    pub outputs: BTreeMap<PartyId, M::Output>,
    pub machines: Vec<M>,
    pub metrics: Metrics,
}

struct Slot<M: Machine> {
    machine: M,
    done: bool,
    finished_now: bool,
    output: Option<M::Output>,
    inbox: Vec<Message>,
    outbox: Vec<Message>,
}

/// Session-level simulator: owns the clock, crash state and transcript.
#[derive(Clone, Debug)]
pub struct Network {
    k: u32,
    adversary: AdversaryConfig,
    seed: u64,
    parallel: bool,
    clock: u64,
    runs: u64,
    transcript: Transcript,
    metrics: Metrics,
}

impl Network {
    pub fn new(k: u32, adversary: AdversaryConfig, seed: u64) -> Result<Self, NetError> {
        if k == 0 {
            return Err(NetError::NoParties);
        }
        adversary.validate(k)?;
        Ok(Self {
            k,
            adversary,
            seed,
            parallel: false,
            clock: 0,
            runs: 0,
            transcript: Transcript::default(),
            metrics: Metrics::default(),
        })
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn adversary(&self) -> &AdversaryConfig {
        &self.adversary
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn metrics_mut(&mut self) -> &mut Metrics {
        &mut self.metrics
    }

    pub fn parties(&self) -> impl Iterator<Item = PartyId> {
        (1..=self.k).map(PartyId)
    }

    /// Silences `party` from global round `round` on. Crashed parties never
    /// come back.
    pub fn crash_party(&mut self, party: PartyId, round: u64) -> Result<(), NetError> {
        if party.is_client() || party.0 > self.k {
            return Err(NetError::UnknownParty(party));
        }
        if self.adversary.crash_schedule.contains_key(&party) {
            return Err(NetError::AlreadyCrashed(party));
        }
        self.adversary.crash_schedule.insert(party, round);
        Ok(())
    }

    /// Crashes `party` at the current clock.
    pub fn crash_now(&mut self, party: PartyId) -> Result<(), NetError> {
        self.crash_party(party, self.clock)
    }

    pub fn is_live(&self, party: PartyId) -> bool {
        party.is_client() || !self.adversary.crashed_at(party, self.clock)
    }

    pub fn live_parties(&self) -> Vec<PartyId> {
        self.parties().filter(|p| self.is_live(*p)).collect()
    }

    /// Rng for `party` in the next run: SHA-256 over seed, run counter,
    /// label and party id.
    pub fn party_rng(&self, party: PartyId, label: &str) -> DeterministicRng {
        DeterministicRng::derive(&[
            b"party-rng",
            &self.seed.to_be_bytes(),
            &self.runs.to_be_bytes(),
            label.as_bytes(),
            &party.0.to_be_bytes(),
        ])
    }

    /// Runs `machines` to completion. Crashed machines are returned untouched
    /// and have no output.
    pub fn run<M: Machine>(&mut self, mut machines: Vec<M>) -> Result<RunReport<M>, NetError> {
        machines.sort_by_key(|m| m.id());
        for w in machines.windows(2) {
            if w[0].id() == w[1].id() {
                return Err(NetError::DuplicateParty(w[0].id()));
            }
        }
        if let Some(m) = machines.iter().find(|m| m.id().0 > self.k) {
            return Err(NetError::UnknownParty(m.id()));
        }
        let started = Instant::now();
        let mut run_metrics = Metrics::default();
        let mut slots: Vec<Slot<M>> = machines
            .into_iter()
            .map(|machine| Slot {
                machine,
                done: false,
                finished_now: false,
                output: None,
                inbox: Vec::new(),
                outbox: Vec::new(),
            })
            .collect();
        let mut pending: Vec<Message> = Vec::new();
        let mut local = 0u64;
        loop {
            let global = self.clock;
            let adversary = &self.adversary;
            let active = |s: &Slot<M>| !s.done && !adversary.crashed_at(s.machine.id(), global);
            if !slots.iter().any(active) {
                break;
            }
            if local >= MAX_ROUNDS_PER_RUN {
                return Err(NetError::Deadlock { round: global });
            }
            for slot in slots.iter_mut().filter(|s| active(s)) {
                let me = slot.machine.id();
                slot.inbox = pending.iter().filter(|m| m.delivered_to(me)).cloned().collect();
            }
            let step_one = |slot: &mut Slot<M>| {
                if !active(slot) {
                    return;
                }
                let mut io = RoundIo {
                    me: slot.machine.id(),
                    round: local,
                    inbox: std::mem::take(&mut slot.inbox),
                    outbox: Vec::new(),
                };
                if let Step::Done(out) = slot.machine.step(&mut io) {
                    slot.done = true;
                    slot.finished_now = true;
                    slot.output = Some(out);
                }
                slot.outbox = io.outbox;
            };
            if self.parallel {
                slots.par_iter_mut().for_each(step_one);
            } else {
                slots.iter_mut().for_each(step_one);
            }
            let mut sent: Vec<Message> = Vec::new();
            let mut progressed = false;
            for slot in slots.iter_mut() {
                progressed |= std::mem::take(&mut slot.finished_now);
                sent.append(&mut slot.outbox);
            }
            sent.sort_by(|a, b| (a.from, a.to, &a.kind).cmp(&(b.from, b.to, &b.kind)));
            for m in sent.iter_mut() {
                m.round = global;
            }
            if sent.is_empty() && !progressed {
                return Err(NetError::Deadlock { round: global });
            }
            run_metrics.total_bytes += sent.iter().map(|m| m.body.len() as u64).sum::<u64>();
            run_metrics.rounds += 1;
            self.transcript.extend(sent.iter().cloned());
            pending = sent;
            self.clock += 1;
            local += 1;
        }
        self.runs += 1;
        run_metrics.wall_clock_seconds = started.elapsed().as_secs_f64();
        self.metrics.absorb(&run_metrics);
        let mut outputs = BTreeMap::new();
        let mut machines = Vec::with_capacity(slots.len());
        for slot in slots {
            if let Some(out) = slot.output {
                outputs.insert(slot.machine.id(), out);
            }
            machines.push(slot.machine);
        }
        Ok(RunReport { outputs, machines, metrics: run_metrics })
    }
}

/// Builds a fresh network, instantiates parties `1..=k` from `factory`,
/// and runs them.
pub fn run_protocol<M, F>(
    mut factory: F,
    k: u32,
    adversary: AdversaryConfig,
    seed: u64,
) -> Result<(BTreeMap<PartyId, M::Output>, Transcript, Metrics), NetError>
where
    M: Machine,
    F: FnMut(PartyId, DeterministicRng) -> M,
{
    let mut net = Network::new(k, adversary, seed)?;
    let machines = net.parties().map(|p| factory(p, net.party_rng(p, "protocol"))).collect();
    let report = net.run(machines)?;
    Ok((report.outputs, net.transcript, report.metrics))
}
