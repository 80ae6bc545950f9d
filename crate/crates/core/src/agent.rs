//! Cognitive agents.
//!
//! An agent samples its best link every step, classifies the connectivity
//! regime and derives its dissemination mode from it. The mode decides how
//! the agent shares state: full-fidelity pushes, selective pulls of stale
//! context, or local decisions with bulk bundles. Agents never touch the
//! network themselves; they return [`Action`]s for the world to carry out.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::a2a::{
    select_tier, AlertBody, AnomalyClass, CompressionTier, CoordinationBody, Location, MessageBody,
    RelayOfferBody, ReportBody, SemanticMessage, StateBody, VectorPayload, VECTOR_LEN,
};
use crate::mcp::{plan_locomotion, Cell, Grid};
use crate::radio::{ClassShares, ConnectivityRegime, LinkKey, LinkState, NodeId, Priority, RegimeThresholds};
use crate::ric::TelemetrySample;
use crate::simkernel::SimTime;

pub const H_MAX_S: f64 = 600.0;
pub const D0_S: f64 = 2.0;
pub const CONFIDENCE_GATE: f64 = 0.5;
pub const EWMA_ALPHA: f64 = 0.2;
pub const PROCESSING_MARGIN: SimTime = SimTime::from_millis(500);
pub const CORRIDOR_TOPIC: &str = "corridor_quality";
const TELEMETRY_KEEP: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DisseminationMode {
    PushRealtime,
    PullCached,
    AutonomousBulk,
}

impl DisseminationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DisseminationMode::PushRealtime => "PUSH_REALTIME",
            DisseminationMode::PullCached => "PULL_CACHED",
            DisseminationMode::AutonomousBulk => "AUTONOMOUS_BULK",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "PUSH_REALTIME" => DisseminationMode::PushRealtime,
            "PULL_CACHED" => DisseminationMode::PullCached,
            "AUTONOMOUS_BULK" => DisseminationMode::AutonomousBulk,
            _ => return None,
        })
    }
}

pub fn mode_for(regime: ConnectivityRegime) -> DisseminationMode {
    match regime {
        ConnectivityRegime::High => DisseminationMode::PushRealtime,
        ConnectivityRegime::Moderate => DisseminationMode::PullCached,
        ConnectivityRegime::Poor => DisseminationMode::AutonomousBulk,
    }
}

/// `H_MAX / (1 + delay / D0)` in seconds.
pub fn planning_horizon_secs(predicted_delay_s: f64) -> f64 {
    H_MAX_S / (1.0 + predicted_delay_s.max(0.0) / D0_S)
}

pub fn planning_horizon(predicted_delay: SimTime) -> SimTime {
    SimTime::from_secs_f64(planning_horizon_secs(predicted_delay.as_secs_f64()))
}

pub fn modulate_confidence(base: f64, link_quality: f64) -> f64 {
    (base * link_quality).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateOutcome {
    Local,
    DeferToEarth,
}

/// LOCAL iff waiting for Earth (RTT plus processing margin) would miss the
/// deadline.
pub fn autonomous_decision_gate(deadline: SimTime, earth_rtt: SimTime) -> GateOutcome {
    if earth_rtt + PROCESSING_MARGIN > deadline {
        GateOutcome::Local
    } else {
        GateOutcome::DeferToEarth
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("unknown peer {0}")]
    UnknownPeer(NodeId),
    #[error("alert {sender}#{seq} already handled")]
    DuplicateAlert { sender: NodeId, seq: u64 },
}

/// EWMA estimate of each peer being reachable.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerAvailability {
    alpha: f64,
    estimates: BTreeMap<NodeId, f64>,
}

impl PeerAvailability {
    pub fn new(peers: impl IntoIterator<Item = NodeId>, initial: f64) -> Self {
        PeerAvailability {
            alpha: EWMA_ALPHA,
            estimates: peers.into_iter().map(|p| (p, initial.clamp(0.0, 1.0))).collect(),
        }
    }

    pub fn get(&self, peer: &NodeId) -> Option<f64> {
        self.estimates.get(peer).copied()
    }

    pub fn update(&mut self, peer: &NodeId, observed_up: bool) -> Result<f64, AgentError> {
        let p = self.estimates.get_mut(peer).ok_or_else(|| AgentError::UnknownPeer(peer.clone()))?;
        let x = if observed_up { 1.0 } else { 0.0 };
        *p = (1.0 - self.alpha) * *p + self.alpha * x;
        Ok(*p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionAction {
    ReallocateBandwidth,
    RequestHandover,
    AdaptSamplingRate,
    Reroute,
    SendAlert,
    RelayAccept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Criticality {
    Critical,
    NonCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MadeBy {
    Local,
    Earth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionStatus {
    Executed,
    Deferred,
    DeferredToEarth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub id: u64,
    pub action: DecisionAction,
    pub criticality: Criticality,
    pub made_by: MadeBy,
    pub detail: String,
}

/// A decision plus the outcome of passing it through the gates.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub agent: NodeId,
    pub decision: Decision,
    pub confidence: f64,
    pub mode: DisseminationMode,
    pub status: DecisionStatus,
}

/// Non-critical decisions waiting for confidence to recover.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeferQueue {
    items: Vec<Decision>,
}

impl DeferQueue {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// CRITICAL decisions always execute; others execute only at or above
    /// the gate and are queued otherwise.
    pub fn submit(&mut self, d: Decision, confidence: f64) -> (Decision, DecisionStatus) {
        if d.criticality == Criticality::Critical || confidence >= CONFIDENCE_GATE {
            (d, DecisionStatus::Executed)
        } else {
            self.items.push(d.clone());
            (d, DecisionStatus::Deferred)
        }
    }

    /// Releases every queued decision once confidence reaches the gate.
    pub fn drain(&mut self, confidence: f64) -> Vec<Decision> {
        if confidence >= CONFIDENCE_GATE {
            std::mem::take(&mut self.items)
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Suit,
    Rover,
    Relay,
    Base,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Suit => "SUIT",
            Role::Rover => "ROVER",
            Role::Relay => "RELAY",
            Role::Base => "BASE",
        }
    }

    /// Roles that run a cognitive agent and take part in A2A exchange.
    pub fn is_agent(self) -> bool {
        !matches!(self, Role::Suit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Via {
    Direct,
    Broker,
    Dtn,
}

impl Via {
    pub fn as_str(self) -> &'static str {
        match self {
            Via::Direct => "DIRECT",
            Via::Broker => "BROKER",
            Via::Dtn => "DTN",
        }
    }
}

/// What an agent can see of the world while stepping.
pub trait Environment {
    fn now(&self) -> SimTime;
    /// Every link touching `node`: the peer, its role if any, and the state now.
    fn links(&self, node: &NodeId) -> Vec<(NodeId, Option<Role>, LinkState)>;
    /// One-way latency over currently live links, if a route exists.
    fn route_latency(&self, from: &NodeId, to: &NodeId) -> Option<SimTime>;
    fn predict_quality(&mut self, a: &NodeId, b: &NodeId, t_future: SimTime) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    ModeChanged { from: DisseminationMode, to: DisseminationMode, regime: ConnectivityRegime },
    Send { to: NodeId, msg: SemanticMessage, tier: CompressionTier, priority: Priority, via: Via },
    Query { server: NodeId, topic: String },
    Subscribe { server: NodeId, topic: String },
    Unsubscribe { server: NodeId, topic: String },
    BrokerFetch { server: NodeId },
    Decision(DecisionRecord),
    AlertRaised { msg: SemanticMessage },
    PingMissed { consecutive: u32 },
    OpenIncident { incident: String, links: Vec<LinkKey> },
    Reallocate { incident: String, links: Vec<LinkKey> },
    EarthPolicy { version: u64, applied: bool, in_reply_to: Option<u64>, shares: Option<ClassShares> },
    Replanned { path: Vec<Cell>, cost: f64, reason: &'static str, from_cache: bool },
    Moved { cell: Cell },
    Arrived { cell: Cell },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub base_confidence: f64,
    pub thresholds: RegimeThresholds,
    pub push_interval: SimTime,
    pub summary_interval: SimTime,
    pub staleness_limit: SimTime,
    pub report_interval: SimTime,
    pub fetch_interval: SimTime,
    pub guidance_interval: SimTime,
    pub missed_ping_limit: u32,
    pub wireless_weight: f64,
    /// Response deadline for incident reallocation.
    pub alert_deadline: SimTime,
    /// Deadline for routine non-critical tuning.
    pub routine_deadline: SimTime,
    pub initial_availability: f64,
    pub topics: Vec<String>,
    pub server: Option<NodeId>,
    pub earth: Option<NodeId>,
    pub location_uncertainty_m: f64,
    pub cell_size_m: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            base_confidence: 0.9,
            thresholds: RegimeThresholds::default(),
            push_interval: SimTime::from_secs(1),
            summary_interval: SimTime::from_secs(10),
            staleness_limit: SimTime::from_secs(10),
            report_interval: SimTime::from_secs(60),
            fetch_interval: SimTime::from_secs(10),
            guidance_interval: SimTime::from_secs(30),
            missed_ping_limit: 3,
            wireless_weight: 10.0,
            alert_deadline: SimTime::from_secs(1),
            routine_deadline: SimTime::from_secs(60),
            initial_availability: 0.5,
            topics: Vec::new(),
            server: None,
            earth: None,
            location_uncertainty_m: 15.0,
            cell_size_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub value: Value,
    pub stamp: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
struct Mission {
    goal: Cell,
    incident: String,
    /// Stamp of the quality map the current path was planned on.
    basis: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq)]
struct Incident {
    origin: NodeId,
    links: Vec<LinkKey>,
    opened: SimTime,
}

fn due(last: Option<SimTime>, interval: SimTime, now: SimTime) -> bool {
    last.is_none_or(|l| now.saturating_sub(l) >= interval)
}

/// Coarsest tier the message can still be encoded at given both the
/// sender's regime and what the message carries.
fn forward_tier(own: CompressionTier, msg: &SemanticMessage) -> CompressionTier {
    let carried = match msg.vector {
        VectorPayload::Full(_) => CompressionTier::Full,
        VectorPayload::Summary(_) => CompressionTier::Summary,
        VectorPayload::Absent => CompressionTier::Critical,
    };
    own.max(carried)
}

pub struct Agent {
    pub id: NodeId,
    pub role: Role,
    cfg: AgentConfig,
    regime: ConnectivityRegime,
    mode: DisseminationMode,
    started: bool,
    horizon: SimTime,
    confidence: f64,
    best_link: Option<(NodeId, LinkState)>,
    cache: BTreeMap<String, CacheEntry>,
    defer: DeferQueue,
    peers: PeerAvailability,
    seen_alerts: BTreeSet<(NodeId, u64)>,
    next_seq: u64,
    next_decision: u64,
    last_push: Option<SimTime>,
    last_summary: Option<SimTime>,
    last_report: Option<SimTime>,
    last_fetch: Option<SimTime>,
    last_guidance: Option<SimTime>,
    queried: BTreeMap<String, SimTime>,
    subscribed: BTreeSet<String>,
    // Detector state.
    watched: Option<NodeId>,
    watched_location: Option<Location>,
    last_ping: Option<SimTime>,
    missed: u32,
    alert_raised: bool,
    // Locomotion.
    grid: Option<Grid>,
    position: Option<Cell>,
    path: Vec<Cell>,
    mission: Option<Mission>,
    // Coordination hub.
    incidents: BTreeMap<String, Incident>,
    policy_version: u64,
    awaiting_earth: BTreeMap<u64, Decision>,
    earth_rtt: SimTime,
    telemetry: Vec<TelemetrySample>,
}

impl Agent {
    pub fn new(id: NodeId, role: Role, peers: impl IntoIterator<Item = NodeId>, cfg: AgentConfig) -> Self {
        let peers = PeerAvailability::new(peers, cfg.initial_availability);
        Agent {
            id,
            role,
            regime: ConnectivityRegime::High,
            mode: DisseminationMode::PushRealtime,
            started: false,
            horizon: planning_horizon(SimTime::ZERO),
            confidence: cfg.base_confidence,
            best_link: None,
            cache: BTreeMap::new(),
            defer: DeferQueue::default(),
            peers,
            seen_alerts: BTreeSet::new(),
            next_seq: 0,
            next_decision: 0,
            last_push: None,
            last_summary: None,
            last_report: None,
            last_fetch: None,
            last_guidance: None,
            queried: BTreeMap::new(),
            subscribed: BTreeSet::new(),
            watched: None,
            watched_location: None,
            last_ping: None,
            missed: 0,
            alert_raised: false,
            grid: None,
            position: None,
            path: Vec::new(),
            mission: None,
            incidents: BTreeMap::new(),
            policy_version: 0,
            awaiting_earth: BTreeMap::new(),
            earth_rtt: SimTime::from_secs(2),
            telemetry: Vec::new(),
            cfg,
        }
    }

    /// Makes this agent watch `node`'s biometric pings.
    pub fn watch(&mut self, node: NodeId, location: Location) {
        self.watched = Some(node);
        self.watched_location = Some(location);
    }

    pub fn place(&mut self, grid: Grid, position: Cell) {
        self.grid = Some(grid);
        self.position = Some(position);
    }

    pub fn regime(&self) -> ConnectivityRegime {
        self.regime
    }

    pub fn mode(&self) -> DisseminationMode {
        self.mode
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn position(&self) -> Option<Cell> {
        self.position
    }

    pub fn path(&self) -> &[Cell] {
        &self.path
    }

    pub fn deferred(&self) -> usize {
        self.defer.len()
    }

    pub fn peer_availability(&self, peer: &NodeId) -> Option<f64> {
        self.peers.get(peer)
    }

    pub fn cache(&self, key: &str) -> Option<&CacheEntry> {
        self.cache.get(key)
    }

    pub fn policy_version(&self) -> u64 {
        self.policy_version
    }

    pub fn is_subscribed(&self, topic: &str) -> bool {
        self.subscribed.contains(topic)
    }

    pub fn set_earth_rtt(&mut self, rtt: SimTime) {
        self.earth_rtt = rtt;
    }

    /// The link this agent currently relies on, if any is up.
    pub fn serving_link(&self) -> Option<LinkKey> {
        self.best_link.as_ref().map(|(p, _)| LinkKey::new(self.id.clone(), p.clone()))
    }

    pub fn record_telemetry(&mut self, s: TelemetrySample) {
        self.telemetry.push(s);
        if self.telemetry.len() > TELEMETRY_KEEP {
            let extra = self.telemetry.len() - TELEMETRY_KEEP;
            self.telemetry.drain(..extra);
        }
    }

    /// Cache staleness of `key` at `now`, if cached.
    pub fn staleness(&self, key: &str, now: SimTime) -> Option<SimTime> {
        self.cache.get(key).map(|e| now.saturating_sub(e.stamp))
    }

    fn next_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    fn decision(&mut self, action: DecisionAction, criticality: Criticality, made_by: MadeBy, detail: String) -> Decision {
        self.next_decision += 1;
        Decision { id: self.next_decision, action, criticality, made_by, detail }
    }

    fn record(&self, decision: Decision, status: DecisionStatus) -> Action {
        Action::Decision(DecisionRecord {
            agent: self.id.clone(),
            decision,
            confidence: self.confidence,
            mode: self.mode,
            status,
        })
    }

    fn decide(&mut self, d: Decision) -> Action {
        let (d, status) = self.defer.submit(d, self.confidence);
        self.record(d, status)
    }

    fn state_vector(&self, t: SimTime) -> Vec<f64> {
        let q = self.best_link.as_ref().map_or(0.0, |(_, s)| s.quality);
        let ts = t.as_secs_f64();
        (0..VECTOR_LEN)
            .map(|i| {
                let phase = ts * 0.01 + i as f64 * 0.37;
                (phase.sin() * q * 1e6).round() / 1e6
            })
            .collect()
    }

    fn message(&mut self, t: SimTime, body: MessageBody, tags: &[&str]) -> SemanticMessage {
        SemanticMessage {
            sender: self.id.clone(),
            seq: self.next_seq(),
            confidence: self.confidence,
            tier: CompressionTier::Full,
            vector: VectorPayload::Full(self.state_vector(t)),
            tags: tags.iter().map(|s| s.to_string()).collect(),
            body,
        }
    }

    fn own_tier(&self) -> CompressionTier {
        let bw = self.best_link.as_ref().map_or(0, |(_, s)| s.bandwidth_bps);
        select_tier(bw, self.regime)
    }

    /// Picks the transport for a message to `to`: bundles while autonomous,
    /// else a direct live link, else the broker if its server is reachable,
    /// else a bundle.
    fn route(&self, env: &dyn Environment, to: &NodeId) -> Via {
        if self.mode == DisseminationMode::AutonomousBulk {
            return Via::Dtn;
        }
        let direct = env.links(&self.id).iter().any(|(p, _, s)| p == to && s.up);
        if direct {
            return Via::Direct;
        }
        if let Some(server) = &self.cfg.server {
            if server == &self.id || env.route_latency(&self.id, server).is_some() {
                return Via::Broker;
            }
        }
        Via::Dtn
    }

    fn send(&self, env: &dyn Environment, to: &NodeId, msg: SemanticMessage, tier: CompressionTier, priority: Priority) -> Action {
        let via = self.route(env, to);
        Action::Send { to: to.clone(), msg, tier, priority, via }
    }

    fn agent_links(&self, env: &dyn Environment) -> Vec<(NodeId, LinkState)> {
        env.links(&self.id)
            .into_iter()
            .filter(|(_, role, _)| role.is_some_and(Role::is_agent))
            .map(|(p, _, s)| (p, s))
            .collect()
    }

    fn sample(&mut self, env: &dyn Environment) -> Vec<Action> {
        let t = env.now();
        let links = self.agent_links(env);
        for (p, s) in &links {
            let _ = self.peers.update(p, s.up);
        }
        let best = links
            .into_iter()
            .filter(|(_, s)| s.up)
            .max_by(|(na, a), (nb, b)| {
                a.quality
                    .total_cmp(&b.quality)
                    .then(a.bandwidth_bps.cmp(&b.bandwidth_bps))
                    .then_with(|| nb.cmp(na))
            });
        let (q, bw) = best.as_ref().map_or((0.0, 0), |(_, s)| (s.quality, s.bandwidth_bps));
        let prev = self.regime;
        self.regime = if self.started {
            self.cfg.thresholds.classify(q, bw, prev)
        } else {
            self.cfg.thresholds.raw(q, bw)
        };
        self.confidence = modulate_confidence(self.cfg.base_confidence, q);
        let delay = match (&self.cfg.server, best.as_ref()) {
            (Some(server), _) if server != &self.id => env.route_latency(&self.id, server),
            (_, Some((_, s))) => Some(s.one_way_delay),
            _ => None,
        };
        self.horizon = delay.map_or(SimTime::ZERO, planning_horizon);
        self.best_link = best;
        let old_mode = self.mode;
        self.mode = mode_for(self.regime);
        let mut out = Vec::new();
        let first = !self.started;
        self.started = true;
        if first || self.mode != old_mode {
            out.push(Action::ModeChanged { from: old_mode, to: self.mode, regime: self.regime });
            out.extend(self.on_mode_change(t, first));
        }
        out
    }

    fn on_mode_change(&mut self, t: SimTime, first: bool) -> Vec<Action> {
        let mut out = Vec::new();
        if let Some(server) = self.cfg.server.clone().filter(|s| s != &self.id) {
            let topics = self.cfg.topics.clone();
            if self.mode == DisseminationMode::PushRealtime {
                for topic in topics {
                    if self.subscribed.insert(topic.clone()) {
                        out.push(Action::Subscribe { server: server.clone(), topic });
                    }
                }
            } else {
                for topic in topics {
                    if self.subscribed.remove(&topic) {
                        out.push(Action::Unsubscribe { server: server.clone(), topic });
                    }
                }
            }
        }
        if !first && self.role != Role::Base {
            let d = self.decision(
                DecisionAction::AdaptSamplingRate,
                Criticality::NonCritical,
                MadeBy::Local,
                format!("sampling for {}", self.mode.as_str()),
            );
            out.push(self.decide(d));
        }
        if self.mode == DisseminationMode::AutonomousBulk && self.mission.is_some() {
            out.extend(self.replan(t, "mode_autonomous"));
        }
        out
    }

    /// One control step at `env.now()`.
    pub fn step(&mut self, env: &mut dyn Environment) -> Vec<Action> {
        let t = env.now();
        let mut out = self.sample(env);
        let peers = self.agent_links(env);
        match self.mode {
            DisseminationMode::PushRealtime => {
                if due(self.last_push, self.cfg.push_interval, t) {
                    self.last_push = Some(t);
                    // Each push is sized for its own link; POOR links get none.
                    for (p, s) in peers.iter().filter(|(_, s)| s.up) {
                        let tier = match self.cfg.thresholds.raw(s.quality, s.bandwidth_bps) {
                            ConnectivityRegime::High => CompressionTier::Full,
                            ConnectivityRegime::Moderate => CompressionTier::Summary,
                            ConnectivityRegime::Poor => continue,
                        };
                        let msg = self.state_message(t);
                        out.push(Action::Send {
                            to: p.clone(),
                            msg,
                            tier,
                            priority: Priority::Operational,
                            via: Via::Direct,
                        });
                    }
                }
            }
            DisseminationMode::PullCached => {
                if due(self.last_summary, self.cfg.summary_interval, t) {
                    self.last_summary = Some(t);
                    for (p, _) in peers.iter().filter(|(_, s)| s.up) {
                        let msg = self.state_message(t);
                        out.push(self.send(env, p, msg, CompressionTier::Summary, Priority::Operational));
                    }
                }
                if let Some(server) = self.cfg.server.clone().filter(|s| s != &self.id) {
                    if env.route_latency(&self.id, &server).is_some() {
                        for topic in self.cfg.topics.clone() {
                            let stale = self.staleness(&topic, t).is_none_or(|s| s > self.cfg.staleness_limit);
                            let asked = self.queried.get(&topic).is_some_and(|&q| t.saturating_sub(q) <= self.cfg.staleness_limit);
                            if stale && !asked {
                                self.queried.insert(topic.clone(), t);
                                out.push(Action::Query { server: server.clone(), topic });
                            }
                        }
                    }
                }
            }
            DisseminationMode::AutonomousBulk => {
                if self.role != Role::Base && due(self.last_report, self.cfg.report_interval, t) {
                    if let Some(earth) = self.cfg.earth.clone() {
                        self.last_report = Some(t);
                        let msg = self.report(t, None, Vec::new());
                        out.push(Action::Send {
                            to: earth,
                            msg,
                            tier: CompressionTier::Critical,
                            priority: Priority::Bulk,
                            via: Via::Dtn,
                        });
                    }
                }
            }
        }
        if self.role == Role::Base {
            out.extend(self.hub_duties(env, t));
        }
        if let Some(server) = self.cfg.server.clone().filter(|s| s != &self.id) {
            if due(self.last_fetch, self.cfg.fetch_interval, t) && env.route_latency(&self.id, &server).is_some() {
                self.last_fetch = Some(t);
                out.push(Action::BrokerFetch { server });
            }
        }
        for d in self.defer.drain(self.confidence) {
            out.push(self.record(d, DecisionStatus::Executed));
        }
        out
    }

    fn hub_duties(&mut self, env: &dyn Environment, t: SimTime) -> Vec<Action> {
        let mut out = Vec::new();
        if due(self.last_report, self.cfg.report_interval, t) {
            if let Some(earth) = self.cfg.earth.clone() {
                self.last_report = Some(t);
                let msg = self.report(t, None, Vec::new());
                out.push(Action::Send { to: earth, msg, tier: CompressionTier::Full, priority: Priority::Bulk, via: Via::Dtn });
            }
        }
        if let Some((id, inc)) = self.incidents.iter().next().map(|(k, v)| (k.clone(), v.clone())) {
            if due(self.last_guidance, self.cfg.guidance_interval, t) {
                self.last_guidance = Some(t);
                let body = MessageBody::Coordination(CoordinationBody {
                    action: "rescue_guidance".into(),
                    incident: Some(id),
                    links: inc.links.iter().map(ToString::to_string).collect(),
                    priority: Some(Priority::Emergency),
                    detail: Some(format!("incident open since {}", inc.opened)),
                });
                let tier = self.own_tier();
                let msg = self.message(t, body, &["guidance"]);
                out.push(self.send(env, &inc.origin, msg, tier, Priority::Emergency));
            }
        }
        out
    }

    fn state_message(&mut self, t: SimTime) -> SemanticMessage {
        let q = self.best_link.as_ref().map_or(0.0, |(_, s)| s.quality);
        let body = MessageBody::StateUpdate(StateBody {
            regime: self.regime,
            mode: self.mode.as_str().to_owned(),
            radio_quality: q,
            position: self.position.map(|(x, y)| [x, y]),
            system_load: self.telemetry.last().map(|s| s.system_load),
            note: None,
        });
        self.message(t, body, &["state"])
    }

    fn report(&mut self, t: SimTime, incident: Option<String>, pending: Vec<u64>) -> SemanticMessage {
        let summary = format!("{} {} {}", self.id, self.role.as_str(), self.mode.as_str());
        let body = MessageBody::SituationReport(ReportBody {
            summary,
            incident,
            telemetry: self.telemetry.clone(),
            pending_decisions: pending,
            narrative: Some(format!("regime {} horizon {}", self.regime.as_str(), self.horizon)),
        });
        self.message(t, body, &["report"])
    }

    /// A biometric ping from the watched node arrived.
    pub fn on_ping(&mut self, t: SimTime) {
        self.last_ping = Some(t);
        self.missed = 0;
    }

    /// Called one grace period after each expected ping at `expected`.
    pub fn on_ping_check(&mut self, env: &mut dyn Environment, expected: SimTime) -> Vec<Action> {
        if self.watched.is_none() || self.last_ping.is_some_and(|p| p >= expected) {
            return Vec::new();
        }
        self.missed += 1;
        let mut out = vec![Action::PingMissed { consecutive: self.missed }];
        if self.missed >= self.cfg.missed_ping_limit && !self.alert_raised {
            self.alert_raised = true;
            out.extend(self.raise_alert(env));
        }
        out
    }

    fn raise_alert(&mut self, env: &mut dyn Environment) -> Vec<Action> {
        let t = env.now();
        let location = self.watched_location.unwrap_or(Location { x_m: 0.0, y_m: 0.0 });
        let body = MessageBody::Alert(AlertBody {
            anomaly_class: AnomalyClass::Unresponsive,
            location,
            uncertainty_radius_m: self.cfg.location_uncertainty_m,
            assistance_level: 5,
        });
        let msg = self.message(t, body, &["eva", "biometric"]);
        self.seen_alerts.insert((msg.sender.clone(), msg.seq));
        let mut out = vec![Action::AlertRaised { msg: msg.clone() }];
        let d = self.decision(DecisionAction::SendAlert, Criticality::Critical, MadeBy::Local, format!("alert {}#{}", msg.sender, msg.seq));
        out.push(self.decide(d));
        out.extend(self.broadcast(env, &msg, None));
        let incident = format!("incident-{}-{}", msg.sender, msg.seq);
        if let Some(grid) = &self.grid {
            let cell_size = self.cfg.cell_size_m.max(1e-9);
            let gx = ((location.x_m / cell_size).round().max(0.0) as u32).min(grid.width() - 1);
            let gy = ((location.y_m / cell_size).round().max(0.0) as u32).min(grid.height() - 1);
            self.mission = Some(Mission { goal: (gx, gy), incident, basis: None });
            out.extend(self.replan(t, "mission_start"));
        }
        out
    }

    /// Sends `msg` once over every up agent link except back to `except`.
    fn broadcast(&mut self, env: &mut dyn Environment, msg: &SemanticMessage, except: Option<&NodeId>) -> Vec<Action> {
        let tier = forward_tier(self.own_tier(), msg);
        let mut out = Vec::new();
        for (p, s) in self.agent_links(env) {
            if !s.up || Some(&p) == except || p == msg.sender {
                continue;
            }
            let via = if self.mode == DisseminationMode::AutonomousBulk { Via::Dtn } else { Via::Direct };
            out.push(Action::Send { to: p, msg: msg.clone(), tier, priority: Priority::Emergency, via });
        }
        out
    }

    /// Handles a decoded message from `from` arriving over `via`.
    pub fn on_message(
        &mut self,
        env: &mut dyn Environment,
        msg: SemanticMessage,
        from: &NodeId,
        via: Via,
    ) -> Result<Vec<Action>, AgentError> {
        let t = env.now();
        match &msg.body {
            MessageBody::Alert(alert) => self.handle_alert(env, *alert, &msg, from, via),
            MessageBody::StateUpdate(s) => {
                let _ = self.peers.update(&msg.sender, true);
                let value = serde_json::json!({"regime": s.regime.as_str(), "mode": s.mode, "quality": s.radio_quality});
                self.cache.insert(format!("peer:{}", msg.sender), CacheEntry { value, stamp: t });
                Ok(Vec::new())
            }
            MessageBody::Coordination(c) => Ok(self.handle_coordination(t, c.clone(), &msg)),
            MessageBody::RelayOffer(r) => {
                let value = serde_json::json!({"relay": r.relay.as_str(), "capacity_bps": r.capacity_bps, "quality": r.predicted_quality});
                self.cache.insert(format!("relay:{}", r.relay), CacheEntry { value, stamp: t });
                Ok(Vec::new())
            }
            MessageBody::PolicyUpdate(p) => Ok(self.handle_policy(t, p.version, p.class_shares, &p.approved, p.in_reply_to)),
            MessageBody::SituationReport(_) => Ok(Vec::new()),
        }
    }

    fn handle_coordination(&mut self, t: SimTime, c: CoordinationBody, msg: &SemanticMessage) -> Vec<Action> {
        match c.action.as_str() {
            "priority_request" if self.role == Role::Base => {
                let incident = c.incident.unwrap_or_default();
                let links = c.links.iter().filter_map(|s| parse_link(s)).collect();
                vec![Action::Reallocate { incident, links }]
            }
            _ => {
                let key = format!("coord:{}:{}", c.action, msg.sender);
                let value = serde_json::json!({"incident": c.incident, "links": c.links});
                self.cache.insert(key, CacheEntry { value, stamp: t });
                Vec::new()
            }
        }
    }

    fn handle_policy(
        &mut self,
        _t: SimTime,
        version: u64,
        shares: Option<ClassShares>,
        approved: &[u64],
        in_reply_to: Option<u64>,
    ) -> Vec<Action> {
        if version <= self.policy_version {
            return vec![Action::EarthPolicy { version, applied: false, in_reply_to, shares }];
        }
        self.policy_version = version;
        let mut out = vec![Action::EarthPolicy { version, applied: true, in_reply_to, shares }];
        for id in approved {
            if let Some(mut d) = self.awaiting_earth.remove(id) {
                d.made_by = MadeBy::Earth;
                out.push(self.decide(d));
            }
        }
        out
    }

    /// Reacts to an alert according to role. Each (sender, seq) is handled once.
    pub fn handle_alert(
        &mut self,
        env: &mut dyn Environment,
        alert: AlertBody,
        msg: &SemanticMessage,
        from: &NodeId,
        via: Via,
    ) -> Result<Vec<Action>, AgentError> {
        let key = (msg.sender.clone(), msg.seq);
        if !self.seen_alerts.insert(key) {
            return Err(AgentError::DuplicateAlert { sender: msg.sender.clone(), seq: msg.seq });
        }
        let t = env.now();
        let value = serde_json::to_value(alert).expect("alert serializes");
        self.cache.insert(format!("alert:{}#{}", msg.sender, msg.seq), CacheEntry { value, stamp: t });
        let incident = format!("incident-{}-{}", msg.sender, msg.seq);
        let _ = via;
        match self.role {
            Role::Suit => Ok(Vec::new()),
            Role::Rover => Ok(self.broadcast(env, msg, Some(from))),
            Role::Relay => Ok(self.relay_alert(env, msg, from, incident)),
            Role::Base => Ok(self.base_alert(env, msg, from, incident)),
        }
    }

    fn relay_alert(&mut self, env: &mut dyn Environment, msg: &SemanticMessage, from: &NodeId, incident: String) -> Vec<Action> {
        let t = env.now();
        let Some(server) = self.cfg.server.clone() else {
            return self.broadcast(env, msg, Some(from));
        };
        let lookahead = t + SimTime::from_secs(10);
        let predicted = env.predict_quality(&self.id, &server, lookahead).unwrap_or(0.0);
        let capacity = env
            .links(&self.id)
            .into_iter()
            .find(|(p, _, _)| p == &server)
            .map_or(0, |(_, _, s)| if s.up { s.bandwidth_bps } else { 0 });
        let mut out = Vec::new();
        let d = self.decision(DecisionAction::RelayAccept, Criticality::Critical, MadeBy::Local, format!("relay for {incident}"));
        out.push(self.decide(d));
        // Store-and-forward toward the hub with custody.
        let tier = forward_tier(self.own_tier(), msg);
        out.push(Action::Send { to: server.clone(), msg: msg.clone(), tier, priority: Priority::Emergency, via: Via::Dtn });
        let links: Vec<String> = [LinkKey::new(self.id.clone(), server.clone()), LinkKey::new(self.id.clone(), from.clone())]
            .iter()
            .map(ToString::to_string)
            .collect();
        let request = MessageBody::Coordination(CoordinationBody {
            action: "priority_request".into(),
            incident: Some(incident.clone()),
            links,
            priority: Some(Priority::Emergency),
            detail: Some(format!("relay {} carrying {}", self.id, incident)),
        });
        let own = self.own_tier();
        let req = self.message(t, request, &["priority"]);
        out.push(self.send(env, &server, req, own, Priority::Emergency));
        let offer_body = MessageBody::RelayOffer(RelayOfferBody {
            relay: self.id.clone(),
            capacity_bps: capacity,
            predicted_quality: predicted,
            interval: 0.005 * 10.0,
            incident: Some(incident),
            note: None,
        });
        let offer = self.message(t, offer_body, &["relay"]);
        for to in [from.clone(), server] {
            out.push(self.send(env, &to, offer.clone(), own, Priority::Emergency));
        }
        out
    }

    fn base_alert(&mut self, env: &mut dyn Environment, msg: &SemanticMessage, from: &NodeId, incident: String) -> Vec<Action> {
        let t = env.now();
        let mut links: BTreeSet<LinkKey> = BTreeSet::new();
        for node in [&msg.sender, from] {
            for (p, _, _) in env.links(node) {
                links.insert(LinkKey::new(node.clone(), p));
            }
        }
        let links: Vec<LinkKey> = links.into_iter().collect();
        self.incidents.insert(
            incident.clone(),
            Incident { origin: msg.sender.clone(), links: links.clone(), opened: t },
        );
        let mut out = vec![Action::OpenIncident { incident: incident.clone(), links: links.clone() }];
        // Reallocation cannot wait for Earth.
        let gate = autonomous_decision_gate(self.cfg.alert_deadline, self.earth_rtt);
        let made_by = MadeBy::Local;
        let d = self.decision(DecisionAction::ReallocateBandwidth, Criticality::Critical, made_by, format!("emergency floor for {incident}"));
        out.push(self.decide(d));
        out.push(Action::Reallocate { incident: incident.clone(), links });
        let _ = gate;
        // Routine tuning goes to Earth when the deadline allows.
        let d = self.decision(
            DecisionAction::AdaptSamplingRate,
            Criticality::NonCritical,
            MadeBy::Local,
            format!("raise telemetry rate near {incident}"),
        );
        let mut pending = Vec::new();
        match autonomous_decision_gate(self.cfg.routine_deadline, self.earth_rtt) {
            GateOutcome::Local => out.push(self.decide(d)),
            GateOutcome::DeferToEarth => {
                pending.push(d.id);
                self.awaiting_earth.insert(d.id, d.clone());
                out.push(self.record(d, DecisionStatus::DeferredToEarth));
            }
        }
        if let Some(earth) = self.cfg.earth.clone() {
            let report = self.report(t, Some(incident), pending);
            out.push(Action::Send { to: earth, msg: report, tier: CompressionTier::Full, priority: Priority::Operational, via: Via::Dtn });
        }
        out
    }

    /// A topic value arrived by push, pull response or broker.
    pub fn on_topic(&mut self, t: SimTime, topic: &str, value: Value, stamp: SimTime) -> Vec<Action> {
        if self.cache.get(topic).is_some_and(|e| e.stamp >= stamp) {
            return Vec::new();
        }
        self.cache.insert(topic.to_owned(), CacheEntry { value, stamp });
        self.queried.remove(topic);
        if topic != CORRIDOR_TOPIC {
            return Vec::new();
        }
        match &self.mission {
            Some(m) if m.basis.is_some() => {
                let changed = self.map_changed_on_path();
                if changed {
                    self.replan(t, "corridor_quality_changed")
                } else {
                    if let Some(m) = self.mission.as_mut() {
                        m.basis = Some(stamp);
                    }
                    Vec::new()
                }
            }
            Some(_) => self.replan(t, "mission_start"),
            None => Vec::new(),
        }
    }

    fn cached_grid(&self) -> Option<(Grid, Option<SimTime>)> {
        let mut grid = self.grid.clone()?;
        let entry = self.cache.get(CORRIDOR_TOPIC);
        if let Some(e) = entry {
            let map: Vec<f64> = serde_json::from_value(e.value.clone()).ok()?;
            grid.set_quality_map(&map).ok()?;
        }
        Some((grid, entry.map(|e| e.stamp)))
    }

    fn map_changed_on_path(&self) -> bool {
        let (Some((grid, _)), Some(base)) = (self.cached_grid(), self.grid.as_ref()) else {
            return false;
        };
        let w = self.cfg.wireless_weight;
        let planned = self.path.iter().skip(1).map(|&c| crate::mcp::cell_cost(base.quality(c), w)).sum::<f64>();
        let now = self.path.iter().skip(1).map(|&c| crate::mcp::cell_cost(grid.quality(c), w)).sum::<f64>();
        (planned - now).abs() > 1e-9
    }

    fn replan(&mut self, t: SimTime, reason: &'static str) -> Vec<Action> {
        let (Some(pos), Some(goal)) = (self.position, self.mission.as_ref().map(|m| m.goal)) else {
            return Vec::new();
        };
        let Some((grid, basis)) = self.cached_grid() else {
            return Vec::new();
        };
        let Ok(p) = plan_locomotion(&grid, pos, goal, self.cfg.wireless_weight) else {
            return Vec::new();
        };
        let from_cache = self.mode == DisseminationMode::AutonomousBulk;
        self.grid = Some(grid);
        self.path = p.cells.clone();
        if let Some(m) = self.mission.as_mut() {
            m.basis = Some(basis.unwrap_or(t));
        }
        let mut out = vec![Action::Replanned { path: p.cells, cost: p.cost, reason, from_cache }];
        let detail = format!("{reason} cost {:.3}", p.cost);
        let d = self.decision(DecisionAction::Reroute, Criticality::Critical, MadeBy::Local, detail);
        out.push(self.decide(d));
        out
    }

    /// Moves one cell along the current path.
    pub fn advance(&mut self) -> Vec<Action> {
        let Some(pos) = self.position else { return Vec::new() };
        if self.mission.is_none() || self.path.len() < 2 {
            return Vec::new();
        }
        debug_assert_eq!(self.path[0], pos);
        self.path.remove(0);
        let next = self.path[0];
        self.position = Some(next);
        let mut out = vec![Action::Moved { cell: next }];
        if self.mission.as_ref().is_some_and(|m| m.goal == next) {
            out.push(Action::Arrived { cell: next });
            self.mission = None;
        }
        out
    }

    /// Messages fetched from this agent's broker slot, oldest first.
    pub fn incident_ids(&self) -> impl Iterator<Item = &String> {
        self.incidents.keys()
    }

    pub fn mission_incident(&self) -> Option<&str> {
        self.mission.as_ref().map(|m| m.incident.as_str())
    }
}

/// Parses the `a--b` form produced by `LinkKey`'s `Display`.
pub fn parse_link(s: &str) -> Option<LinkKey> {
    let (a, b) = s.split_once("--")?;
    (!a.is_empty() && !b.is_empty()).then(|| LinkKey::new(a, b))
}
