//! Deterministic discrete-event kernel.
//!
//! Virtual time is an integer count of microseconds. Events are dispatched in
//! `(at, seq)` order where `seq` is a single global insertion counter, so two
//! events scheduled for the same instant run in the order they were scheduled.
//! Every component draws randomness from its own stream derived from the
//! master seed and the component name.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Simulated time (or duration) in microseconds since epoch 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !s.is_finite() || s <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn saturating_add(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        self.saturating_add(rhs)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        self.saturating_sub(rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// Name of the component an event is addressed to, e.g. `agent:rover-A`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub String);

impl ComponentId {
    pub fn new(name: impl Into<String>) -> Self {
        ComponentId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        ComponentId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub at: SimTime,
    pub seq: u64,
    pub target: ComponentId,
    pub payload: P,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot schedule at {at} while now is {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub dispatched: u64,
    pub final_time: SimTime,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.at, self.0.seq) == (other.0.at, other.0.seq)
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // Reversed so the max-heap pops the smallest (at, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.at, other.0.seq).cmp(&(self.0.at, self.0.seq))
    }
}

/// Single-threaded event engine. Independent engines are `Send` and can run
/// on different threads.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Enqueues a payload for dispatch at `at`, returning its sequence number.
    pub fn schedule(
        &mut self,
        at: SimTime,
        target: impl Into<ComponentId>,
        payload: P,
    ) -> Result<u64, SimError> {
        if at < self.now {
            return Err(SimError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            at,
            seq,
            target: target.into(),
            payload,
        }));
        Ok(seq)
    }

    pub fn schedule_in(
        &mut self,
        delay: SimTime,
        target: impl Into<ComponentId>,
        payload: P,
    ) -> u64 {
        let at = self.now + delay;
        self.schedule(at, target, payload)
            .expect("now + delay is never in the past")
    }

    /// Dispatches every event with `at <= t_end` in order. `now` equals the
    /// event's time during its dispatch and `t_end` afterwards.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut dispatch: F) -> RunReport
    where
        F: FnMut(&mut Self, Event<P>),
    {
        let mut dispatched = 0;
        while let Some(head) = self.queue.peek() {
            if head.0.at > t_end {
                break;
            }
            let Queued(event) = self.queue.pop().expect("peeked");
            self.now = event.at;
            dispatched += 1;
            dispatch(self, event);
        }
        if t_end > self.now {
            self.now = t_end;
        }
        RunReport {
            dispatched,
            final_time: self.now,
        }
    }
}

// FNV-1a 64 over the component name.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Seed of the stream owned by `component`: `splitmix64(master ^ fnv1a64(name))`.
    pub fn derive(self, component: &str) -> u64 {
        splitmix64(self.0 ^ fnv1a64(component.as_bytes()))
    }

    pub fn component_rng(self, component: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(component))
    }
}

/// Keys every record carries ahead of its fields.
const RESERVED: [&str; 4] = ["t", "seq", "target", "kind"];

/// One line of the JSON-Lines trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: SimTime,
    pub seq: u64,
    pub target: String,
    pub kind: String,
    pub fields: Map<String, Value>,
}

impl TraceRecord {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn str_field(&self, key: &str) -> Option<&str> {
        self.fields.get(key).and_then(Value::as_str)
    }

    pub fn f64_field(&self, key: &str) -> Option<f64> {
        self.fields.get(key).and_then(Value::as_f64)
    }

    pub fn u64_field(&self, key: &str) -> Option<u64> {
        self.fields.get(key).and_then(Value::as_u64)
    }

    /// `{"t":…,"seq":…,"target":…,"kind":…}` followed by the remaining
    /// fields in key order.
    pub fn to_json_line(&self) -> String {
        let mut out = String::with_capacity(96);
        out.push_str("{\"t\":");
        out.push_str(&self.t.micros().to_string());
        out.push_str(",\"seq\":");
        out.push_str(&self.seq.to_string());
        out.push_str(",\"target\":");
        out.push_str(&Value::String(self.target.clone()).to_string());
        out.push_str(",\"kind\":");
        out.push_str(&Value::String(self.kind.clone()).to_string());
        for (k, v) in &self.fields {
            out.push(',');
            out.push_str(&Value::String(k.clone()).to_string());
            out.push(':');
            out.push_str(&v.to_string());
        }
        out.push('}');
        out
    }

    pub fn from_json_line(line: &str) -> Result<Self, TraceParseError> {
        let value: Value = serde_json::from_str(line)?;
        let Value::Object(mut map) = value else {
            return Err(TraceParseError::Shape("record is not an object"));
        };
        let t = map
            .remove("t")
            .and_then(|v| v.as_u64())
            .ok_or(TraceParseError::Shape("missing t"))?;
        let seq = map
            .remove("seq")
            .and_then(|v| v.as_u64())
            .ok_or(TraceParseError::Shape("missing seq"))?;
        let target = match map.remove("target") {
            Some(Value::String(s)) => s,
            _ => return Err(TraceParseError::Shape("missing target")),
        };
        let kind = match map.remove("kind") {
            Some(Value::String(s)) => s,
            _ => return Err(TraceParseError::Shape("missing kind")),
        };
        Ok(TraceRecord {
            t: SimTime(t),
            seq,
            target,
            kind,
            fields: map,
        })
    }
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed trace record: {0}")]
    Shape(&'static str),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<TraceParseError>,
    },
}

/// In-memory trace sink.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn emit(
        &mut self,
        t: SimTime,
        seq: u64,
        target: &str,
        kind: &str,
        fields: Value,
    ) {
        let fields = match fields {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        debug_assert!(
            RESERVED.iter().all(|k| !fields.contains_key(*k)),
            "trace fields shadow a reserved key in {kind}"
        );
        self.records.push(TraceRecord {
            t,
            seq,
            target: target.to_owned(),
            kind: kind.to_owned(),
            fields,
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceParseError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = TraceRecord::from_json_line(line).map_err(|e| TraceParseError::Line {
                line: i + 1,
                source: Box::new(e),
            })?;
            records.push(rec);
        }
        Ok(Trace { records })
    }
}

impl From<Vec<TraceRecord>> for Trace {
    fn from(records: Vec<TraceRecord>) -> Self {
        Trace { records }
    }
}
