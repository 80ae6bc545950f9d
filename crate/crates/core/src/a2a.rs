//! Agent-to-agent semantic messages.
//!
//! Messages are encoded as canonical JSON: object keys sorted, no whitespace,
//! shortest round-trip float formatting. Three compression tiers trade detail
//! for size:
//!
//! * `FULL` carries the whole 64-value state vector and every body field.
//! * `SUMMARY` replaces the vector with eight statistics
//!   (min, max, mean and the samples at indices 0, 16, 32, 48, 63).
//! * `CRITICAL` drops the vector and every non-critical body field. Alert
//!   bodies are critical in their entirety.
//!
//! Encoded messages ride the RAN control channel split into MTU-sized frames
//! with a 16-byte header: message id (u64), frame index (u16), frame count
//! (u16) and a CRC-32 over header and payload, all big-endian.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::radio::{ClassShares, ConnectivityRegime, NodeId, Priority};
use crate::ric::TelemetrySample;

pub const VECTOR_LEN: usize = 64;
pub const MAX_TAGS: usize = 16;
pub const MAX_TAG_LEN: usize = 32;
pub const SUMMARY_LEN: usize = 8;
pub const SUMMARY_SAMPLE_INDICES: [usize; 5] = [0, 16, 32, 48, 63];
pub const FRAME_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Alert,
    StateUpdate,
    PolicyUpdate,
    Coordination,
    RelayOffer,
    SituationReport,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Alert => "ALERT",
            MessageKind::StateUpdate => "STATE_UPDATE",
            MessageKind::PolicyUpdate => "POLICY_UPDATE",
            MessageKind::Coordination => "COORDINATION",
            MessageKind::RelayOffer => "RELAY_OFFER",
            MessageKind::SituationReport => "SITUATION_REPORT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ALERT" => MessageKind::Alert,
            "STATE_UPDATE" => MessageKind::StateUpdate,
            "POLICY_UPDATE" => MessageKind::PolicyUpdate,
            "COORDINATION" => MessageKind::Coordination,
            "RELAY_OFFER" => MessageKind::RelayOffer,
            "SITUATION_REPORT" => MessageKind::SituationReport,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CompressionTier {
    Full,
    Summary,
    Critical,
}

impl CompressionTier {
    pub const ALL: [CompressionTier; 3] =
        [CompressionTier::Full, CompressionTier::Summary, CompressionTier::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            CompressionTier::Full => "FULL",
            CompressionTier::Summary => "SUMMARY",
            CompressionTier::Critical => "CRITICAL",
        }
    }
}

/// HIGH → FULL, MODERATE → SUMMARY, POOR → CRITICAL.
pub fn select_tier(_available_bandwidth_bps: u64, regime: ConnectivityRegime) -> CompressionTier {
    match regime {
        ConnectivityRegime::High => CompressionTier::Full,
        ConnectivityRegime::Moderate => CompressionTier::Summary,
        ConnectivityRegime::Poor => CompressionTier::Critical,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnomalyClass {
    BiometricDegraded,
    Unresponsive,
    EquipmentFault,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Location {
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertBody {
    pub anomaly_class: AnomalyClass,
    pub location: Location,
    pub uncertainty_radius_m: f64,
    pub assistance_level: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBody {
    pub regime: ConnectivityRegime,
    pub mode: String,
    pub radio_quality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_load: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyBody {
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_shares: Option<ClassShares>,
    #[serde(default)]
    pub approved: Vec<u64>,
    /// Creation time of the report this policy answers, in microseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinationBody {
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident: Option<String>,
    #[serde(default)]
    pub links: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<Priority>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayOfferBody {
    pub relay: NodeId,
    pub capacity_bps: u64,
    pub predicted_quality: f64,
    pub interval: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBody {
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident: Option<String>,
    #[serde(default)]
    pub telemetry: Vec<TelemetrySample>,
    #[serde(default)]
    pub pending_decisions: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Alert(AlertBody),
    StateUpdate(StateBody),
    PolicyUpdate(PolicyBody),
    Coordination(CoordinationBody),
    RelayOffer(RelayOfferBody),
    SituationReport(ReportBody),
}

impl MessageBody {
    pub fn kind(&self) -> MessageKind {
        match self {
            MessageBody::Alert(_) => MessageKind::Alert,
            MessageBody::StateUpdate(_) => MessageKind::StateUpdate,
            MessageBody::PolicyUpdate(_) => MessageKind::PolicyUpdate,
            MessageBody::Coordination(_) => MessageKind::Coordination,
            MessageBody::RelayOffer(_) => MessageKind::RelayOffer,
            MessageBody::SituationReport(_) => MessageKind::SituationReport,
        }
    }

    /// Copy keeping only the fields that survive the CRITICAL tier.
    pub fn critical(&self) -> MessageBody {
        match self {
            MessageBody::Alert(a) => MessageBody::Alert(*a),
            MessageBody::StateUpdate(s) => MessageBody::StateUpdate(StateBody {
                system_load: None,
                note: None,
                ..s.clone()
            }),
            MessageBody::PolicyUpdate(p) => {
                MessageBody::PolicyUpdate(PolicyBody { rationale: None, ..p.clone() })
            }
            MessageBody::Coordination(c) => {
                MessageBody::Coordination(CoordinationBody { detail: None, ..c.clone() })
            }
            MessageBody::RelayOffer(r) => {
                MessageBody::RelayOffer(RelayOfferBody { note: None, ..r.clone() })
            }
            MessageBody::SituationReport(r) => {
                MessageBody::SituationReport(ReportBody { narrative: None, ..r.clone() })
            }
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            MessageBody::Alert(b) => serde_json::to_value(b),
            MessageBody::StateUpdate(b) => serde_json::to_value(b),
            MessageBody::PolicyUpdate(b) => serde_json::to_value(b),
            MessageBody::Coordination(b) => serde_json::to_value(b),
            MessageBody::RelayOffer(b) => serde_json::to_value(b),
            MessageBody::SituationReport(b) => serde_json::to_value(b),
        };
        v.expect("message bodies always serialize")
    }

    fn from_value(kind: MessageKind, v: Value) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            MessageKind::Alert => MessageBody::Alert(serde_json::from_value(v)?),
            MessageKind::StateUpdate => MessageBody::StateUpdate(serde_json::from_value(v)?),
            MessageKind::PolicyUpdate => MessageBody::PolicyUpdate(serde_json::from_value(v)?),
            MessageKind::Coordination => MessageBody::Coordination(serde_json::from_value(v)?),
            MessageKind::RelayOffer => MessageBody::RelayOffer(serde_json::from_value(v)?),
            MessageKind::SituationReport => {
                MessageBody::SituationReport(serde_json::from_value(v)?)
            }
        })
    }

    fn validate(&self) -> Result<(), A2aError> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(A2aError::InvalidMessage(format!("{what} is not finite")))
            }
        };
        match self {
            MessageBody::Alert(a) => {
                finite(a.location.x_m, "location.x_m")?;
                finite(a.location.y_m, "location.y_m")?;
                finite(a.uncertainty_radius_m, "uncertainty_radius_m")?;
                if a.uncertainty_radius_m < 0.0 {
                    return Err(A2aError::InvalidMessage("negative uncertainty radius".into()));
                }
                if !(1..=5).contains(&a.assistance_level) {
                    return Err(A2aError::InvalidMessage("assistance level outside 1..=5".into()));
                }
            }
            MessageBody::StateUpdate(s) => {
                finite(s.radio_quality, "radio_quality")?;
                if let Some(l) = s.system_load {
                    finite(l, "system_load")?;
                }
            }
            MessageBody::PolicyUpdate(p) => {
                if let Some(cs) = p.class_shares {
                    for x in [cs.emergency, cs.operational, cs.bulk] {
                        finite(x, "class share")?;
                    }
                }
            }
            MessageBody::Coordination(_) => {}
            MessageBody::RelayOffer(r) => {
                finite(r.predicted_quality, "predicted_quality")?;
                finite(r.interval, "interval")?;
            }
            MessageBody::SituationReport(r) => {
                for s in &r.telemetry {
                    finite(s.radio_quality, "telemetry.radio_quality")?;
                    finite(s.system_load, "telemetry.system_load")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VectorPayload {
    Full(Vec<f64>),
    Summary([f64; SUMMARY_LEN]),
    Absent,
}

/// The eight SUMMARY statistics of a full vector.
pub fn summarize(values: &[f64]) -> [f64; SUMMARY_LEN] {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut out = [min, max, mean, 0.0, 0.0, 0.0, 0.0, 0.0];
    for (slot, &i) in SUMMARY_SAMPLE_INDICES.iter().enumerate() {
        out[3 + slot] = values[i];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMessage {
    pub sender: NodeId,
    pub seq: u64,
    pub confidence: f64,
    pub tier: CompressionTier,
    pub vector: VectorPayload,
    pub tags: Vec<String>,
    pub body: MessageBody,
}

impl SemanticMessage {
    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }

    /// Message id used for framing: sender hash in the high bits, seq low.
    pub fn frame_id(&self) -> u64 {
        let mut h: u32 = 0x811c_9dc5;
        for b in self.sender.as_str().bytes() {
            h ^= u32::from(b);
            h = h.wrapping_mul(0x0100_0193);
        }
        (u64::from(h) << 32) | (self.seq & 0xffff_ffff)
    }

    pub fn validate(&self) -> Result<(), A2aError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(A2aError::InvalidMessage("confidence outside [0,1]".into()));
        }
        if self.tags.len() > MAX_TAGS {
            return Err(A2aError::InvalidMessage(format!("more than {MAX_TAGS} tags")));
        }
        if self.tags.iter().any(|t| t.is_empty() || t.len() > MAX_TAG_LEN) {
            return Err(A2aError::InvalidMessage("tag empty or too long".into()));
        }
        match &self.vector {
            VectorPayload::Full(v) => {
                if v.len() != VECTOR_LEN {
                    return Err(A2aError::InvalidMessage(format!(
                        "state vector has {} values, expected {VECTOR_LEN}",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(A2aError::InvalidMessage("state vector has non-finite values".into()));
                }
            }
            VectorPayload::Summary(s) => {
                if s.iter().any(|x| !x.is_finite()) {
                    return Err(A2aError::InvalidMessage("summary has non-finite values".into()));
                }
            }
            VectorPayload::Absent => {}
        }
        self.body.validate()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum A2aError {
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("unknown message kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    body: Value,
    confidence: f64,
    kind: String,
    sender: NodeId,
    seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summary: Option<[f64; SUMMARY_LEN]>,
    tags: Vec<String>,
    tier: CompressionTier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector: Option<Vec<f64>>,
}

/// Writes `v` with object keys sorted at every level and no whitespace.
pub fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push('{');
            for (i, (k, val)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(val, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn canonical_json(v: &Value) -> Vec<u8> {
    let mut s = String::new();
    write_canonical(v, &mut s);
    s.into_bytes()
}

/// Canonical encoding of `msg` reduced to `tier`.
pub fn encode(msg: &SemanticMessage, tier: CompressionTier) -> Result<Vec<u8>, A2aError> {
    msg.validate()?;
    let (vector, summary, body) = match tier {
        CompressionTier::Full => match &msg.vector {
            VectorPayload::Full(v) => (Some(v.clone()), None, msg.body.clone()),
            _ => {
                return Err(A2aError::InvalidMessage(
                    "FULL tier needs the full state vector".into(),
                ))
            }
        },
        CompressionTier::Summary => match &msg.vector {
            VectorPayload::Full(v) => (None, Some(summarize(v)), msg.body.clone()),
            VectorPayload::Summary(s) => (None, Some(*s), msg.body.clone()),
            VectorPayload::Absent => {
                return Err(A2aError::InvalidMessage(
                    "SUMMARY tier needs a state vector or its summary".into(),
                ))
            }
        },
        CompressionTier::Critical => (None, None, msg.body.critical()),
    };
    let wire = Wire {
        body: body.to_value(),
        confidence: msg.confidence,
        kind: msg.kind().as_str().to_owned(),
        sender: msg.sender.clone(),
        seq: msg.seq,
        summary,
        tags: msg.tags.clone(),
        tier,
        vector,
    };
    let value = serde_json::to_value(&wire).map_err(|e| A2aError::InvalidMessage(e.to_string()))?;
    Ok(canonical_json(&value))
}

pub fn decode(bytes: &[u8]) -> Result<SemanticMessage, A2aError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| A2aError::MalformedPayload(e.to_string()))?;
    let kind_str = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| A2aError::MalformedPayload("missing kind".into()))?;
    let kind = MessageKind::parse(kind_str).ok_or_else(|| A2aError::UnknownKind(kind_str.to_owned()))?;
    let wire: Wire =
        serde_json::from_value(value).map_err(|e| A2aError::MalformedPayload(e.to_string()))?;
    let body = MessageBody::from_value(kind, wire.body)
        .map_err(|e| A2aError::MalformedPayload(format!("body: {e}")))?;
    let vector = match (wire.tier, wire.vector, wire.summary) {
        (CompressionTier::Full, Some(v), None) => VectorPayload::Full(v),
        (CompressionTier::Summary, None, Some(s)) => VectorPayload::Summary(s),
        (CompressionTier::Critical, None, None) => VectorPayload::Absent,
        _ => return Err(A2aError::MalformedPayload("vector fields do not match tier".into())),
    };
    let msg = SemanticMessage {
        sender: wire.sender,
        seq: wire.seq,
        confidence: wire.confidence,
        tier: wire.tier,
        vector,
        tags: wire.tags,
        body,
    };
    msg.validate()
        .map_err(|e| A2aError::MalformedPayload(e.to_string()))?;
    Ok(msg)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("mtu {0} leaves no room after the {FRAME_HEADER_LEN}-byte header")]
    MtuTooSmall(usize),
    #[error("payload needs more than 65535 frames")]
    TooManyFrames,
    #[error("frame shorter than its header")]
    Truncated,
    #[error("checksum mismatch in frame {index}")]
    ChecksumMismatch { index: u16 },
    #[error("frames belong to different messages")]
    Inconsistent,
    #[error("frame {0} missing")]
    MissingFrame(u16),
    #[error("frame {0} received twice")]
    DuplicateFrame(u16),
    #[error("no frames")]
    Empty,
}

fn frame_checksum(msg_id: u64, index: u16, count: u16, payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&msg_id.to_be_bytes());
    h.update(&index.to_be_bytes());
    h.update(&count.to_be_bytes());
    h.update(payload);
    h.finalize()
}

/// Splits `bytes` into frames of at most `mtu` bytes each.
pub fn frame_for_control_channel(bytes: &[u8], mtu: usize, msg_id: u64) -> Result<Vec<Vec<u8>>, FrameError> {
    if mtu <= FRAME_HEADER_LEN {
        return Err(FrameError::MtuTooSmall(mtu));
    }
    let room = mtu - FRAME_HEADER_LEN;
    let count = bytes.len().div_ceil(room).max(1);
    let count = u16::try_from(count).map_err(|_| FrameError::TooManyFrames)?;
    let mut frames = Vec::with_capacity(usize::from(count));
    for index in 0..count {
        let start = usize::from(index) * room;
        let chunk = &bytes[start..(start + room).min(bytes.len())];
        let mut f = Vec::with_capacity(FRAME_HEADER_LEN + chunk.len());
        f.extend_from_slice(&msg_id.to_be_bytes());
        f.extend_from_slice(&index.to_be_bytes());
        f.extend_from_slice(&count.to_be_bytes());
        f.extend_from_slice(&frame_checksum(msg_id, index, count, chunk).to_be_bytes());
        f.extend_from_slice(chunk);
        frames.push(f);
    }
    Ok(frames)
}

/// Reassembles frames received in any order.
pub fn reassemble<F: AsRef<[u8]>>(frames: &[F]) -> Result<Vec<u8>, FrameError> {
    if frames.is_empty() {
        return Err(FrameError::Empty);
    }
    let mut parts: BTreeMap<u16, &[u8]> = BTreeMap::new();
    let mut ident: Option<(u64, u16)> = None;
    for f in frames {
        let f = f.as_ref();
        if f.len() < FRAME_HEADER_LEN {
            return Err(FrameError::Truncated);
        }
        let msg_id = u64::from_be_bytes(f[0..8].try_into().expect("8 bytes"));
        let index = u16::from_be_bytes([f[8], f[9]]);
        let count = u16::from_be_bytes([f[10], f[11]]);
        let sum = u32::from_be_bytes(f[12..16].try_into().expect("4 bytes"));
        let payload = &f[FRAME_HEADER_LEN..];
        if frame_checksum(msg_id, index, count, payload) != sum {
            return Err(FrameError::ChecksumMismatch { index });
        }
        match ident {
            None => ident = Some((msg_id, count)),
            Some(id) if id != (msg_id, count) => return Err(FrameError::Inconsistent),
            Some(_) => {}
        }
        if index >= count {
            return Err(FrameError::Inconsistent);
        }
        if parts.insert(index, payload).is_some() {
            return Err(FrameError::DuplicateFrame(index));
        }
    }
    let (_, count) = ident.expect("at least one frame");
    let mut out = Vec::new();
    for i in 0..count {
        out.extend_from_slice(parts.get(&i).ok_or(FrameError::MissingFrame(i))?);
    }
    Ok(out)
}
