//! In-simulation context servers.
//!
//! A server exposes a fixed set of capabilities as request/response calls,
//! publishes topic updates to push subscribers and holds per-recipient broker
//! slots for agents that cannot be reached directly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::a2a::canonical_json;
use crate::radio::{LinkKey, NodeId, Priority, Radio};
use crate::simkernel::SimTime;

pub const DEFAULT_SLOT_CAPACITY: usize = 256;
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    LocomotionPlanning,
    SignalQualityEstimation,
    EnergyPrediction,
}

impl Capability {
    pub const ALL: [Capability; 3] = [
        Capability::LocomotionPlanning,
        Capability::SignalQualityEstimation,
        Capability::EnergyPrediction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Capability::LocomotionPlanning => "locomotion_planning",
            Capability::SignalQualityEstimation => "signal_quality_estimation",
            Capability::EnergyPrediction => "energy_prediction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Capability::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McpError {
    #[error("server does not offer {0}")]
    UnknownCapability(String),
    #[error("server unreachable")]
    Unreachable,
    #[error("unknown topic {0}")]
    UnknownTopic(String),
    #[error("{requester} may not fetch the slot of {recipient}")]
    NotRecipient { requester: NodeId, recipient: NodeId },
    #[error("no path")]
    NoPath,
    #[error("cell ({0}, {1}) is outside the grid or blocked")]
    BadCell(u32, u32),
    #[error("bad request: {0}")]
    BadRequest(String),
}

pub type Cell = (u32, u32);

/// Rectangular 4-connected grid with per-cell predicted link quality.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: u32,
    height: u32,
    blocked: BTreeSet<Cell>,
    quality: Vec<f64>,
}

impl Grid {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "grid must be non-empty");
        Grid { width, height, blocked: BTreeSet::new(), quality: vec![1.0; (width * height) as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.0 < self.width && c.1 < self.height
    }

    pub fn block(&mut self, c: Cell) {
        self.blocked.insert(c);
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.contains(c) && !self.blocked.contains(&c)
    }

    fn idx(&self, c: Cell) -> usize {
        (c.1 * self.width + c.0) as usize
    }

    pub fn quality(&self, c: Cell) -> f64 {
        self.quality[self.idx(c)]
    }

    pub fn set_quality(&mut self, c: Cell, q: f64) {
        let i = self.idx(c);
        self.quality[i] = q.clamp(0.0, 1.0);
    }

    /// Row-major quality map, `y * width + x`.
    pub fn quality_map(&self) -> &[f64] {
        &self.quality
    }

    pub fn set_quality_map(&mut self, map: &[f64]) -> Result<(), McpError> {
        if map.len() != self.quality.len() {
            return Err(McpError::BadRequest(format!(
                "quality map has {} cells, grid has {}",
                map.len(),
                self.quality.len()
            )));
        }
        for (slot, q) in self.quality.iter_mut().zip(map) {
            *slot = q.clamp(0.0, 1.0);
        }
        Ok(())
    }

    /// Free 4-neighbours in (x, y) order.
    pub fn neighbors(&self, c: Cell) -> Vec<Cell> {
        let (x, y) = (c.0 as i64, c.1 as i64);
        let mut out: Vec<Cell> = [(x - 1, y), (x, y - 1), (x, y + 1), (x + 1, y)]
            .into_iter()
            .filter(|&(a, b)| a >= 0 && b >= 0)
            .map(|(a, b)| (a as u32, b as u32))
            .filter(|&n| self.is_free(n))
            .collect();
        out.sort();
        out
    }
}

/// Cost of entering a cell.
pub fn cell_cost(quality: f64, wireless_weight: f64) -> f64 {
    1.0 + wireless_weight * (1.0 - quality)
}

/// Sum of entry costs over every cell after the first.
pub fn path_cost(grid: &Grid, path: &[Cell], wireless_weight: f64) -> f64 {
    path.iter().skip(1).map(|&c| cell_cost(grid.quality(c), wireless_weight)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub cells: Vec<Cell>,
    pub cost: f64,
}

#[derive(PartialEq)]
struct Frontier(f64, Cell);

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Minimum-cost path from `start` to `goal`. Among equal-cost continuations
/// the next cell with the lower (x, y) wins.
pub fn plan_locomotion(grid: &Grid, start: Cell, goal: Cell, wireless_weight: f64) -> Result<PlannedPath, McpError> {
    for c in [start, goal] {
        if !grid.is_free(c) {
            return Err(McpError::BadCell(c.0, c.1));
        }
    }
    // Cost-to-go from every cell, searched backwards from the goal.
    let mut to_go: BTreeMap<Cell, f64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    to_go.insert(goal, 0.0);
    heap.push(Frontier(0.0, goal));
    while let Some(Frontier(d, v)) = heap.pop() {
        if d > to_go[&v] {
            continue;
        }
        let step = cell_cost(grid.quality(v), wireless_weight);
        for u in grid.neighbors(v) {
            let nd = d + step;
            if to_go.get(&u).is_none_or(|&old| nd < old) {
                to_go.insert(u, nd);
                heap.push(Frontier(nd, u));
            }
        }
    }
    let Some(&total) = to_go.get(&start) else {
        return Err(McpError::NoPath);
    };
    let mut cells = vec![start];
    let mut cur = start;
    while cur != goal {
        let mut best: Option<(f64, Cell)> = None;
        for n in grid.neighbors(cur) {
            let Some(&rest) = to_go.get(&n) else { continue };
            let via = cell_cost(grid.quality(n), wireless_weight) + rest;
            // Neighbours arrive in (x, y) order, so keep the first within tolerance.
            if best.is_none_or(|(b, _)| via < b - TIE_EPS) {
                best = Some((via, n));
            }
        }
        let (_, next) = best.expect("a finite cost-to-go has a successor");
        cells.push(next);
        cur = next;
    }
    Ok(PlannedPath { cost: total, cells })
}

/// Linear power model in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub idle_w: f64,
    pub drive_w: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { idle_w: 50.0, drive_w: 200.0 }
    }
}

impl EnergyModel {
    /// Joules over `horizon_s` with `drive_s` of it spent driving.
    pub fn predict(&self, horizon_s: f64, drive_s: f64) -> f64 {
        self.idle_w * horizon_s + (self.drive_w - self.idle_w) * drive_s.clamp(0.0, horizon_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "capability", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapabilityRequest {
    LocomotionPlanning { start: Cell, goal: Cell, wireless_weight: f64 },
    SignalQualityEstimation { link: [NodeId; 2], t_future: SimTime },
    EnergyPrediction { horizon_s: f64, planned_drive_s: f64 },
}

impl CapabilityRequest {
    pub fn capability(&self) -> Capability {
        match self {
            CapabilityRequest::LocomotionPlanning { .. } => Capability::LocomotionPlanning,
            CapabilityRequest::SignalQualityEstimation { .. } => Capability::SignalQualityEstimation,
            CapabilityRequest::EnergyPrediction { .. } => Capability::EnergyPrediction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapabilityResponse {
    Path { cells: Vec<Cell>, cost: f64 },
    Quality { estimate: f64, interval: f64 },
    Energy { joules: f64 },
}

/// Canonical bytes for any request or response.
pub fn encode_canonical<T: Serialize>(v: &T) -> Vec<u8> {
    canonical_json(&serde_json::to_value(v).expect("capability types serialize"))
}

/// World state a query is evaluated against.
pub struct QueryContext<'a> {
    pub now: SimTime,
    pub radio: &'a mut Radio,
    pub grid: &'a Grid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub subscriber: NodeId,
    pub topic: String,
    pub min_interval: SimTime,
    last_sent: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrokeredMessage {
    pub priority: Priority,
    /// Short label for traces, e.g. the message kind.
    pub label: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Overflow {
    /// The oldest eligible message was evicted to make room.
    DroppedOldest(BrokeredMessage),
    /// The incoming message was refused.
    RejectedIncoming,
}

/// FIFO mailbox for one recipient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrokerSlot {
    pub recipient: NodeId,
    pub capacity: usize,
    queue: VecDeque<BrokeredMessage>,
}

impl BrokerSlot {
    pub fn new(recipient: NodeId, capacity: usize) -> Self {
        BrokerSlot { recipient, capacity: capacity.max(1), queue: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// At capacity the oldest non-EMERGENCY message is evicted. When only
    /// EMERGENCY messages are held, a non-EMERGENCY newcomer is refused and an
    /// EMERGENCY newcomer evicts the oldest EMERGENCY message.
    pub fn put(&mut self, msg: BrokeredMessage) -> Option<Overflow> {
        let mut overflow = None;
        if self.queue.len() >= self.capacity {
            let victim = self.queue.iter().position(|m| m.priority != Priority::Emergency);
            match victim {
                Some(i) => {
                    overflow = Some(Overflow::DroppedOldest(self.queue.remove(i).expect("index in range")));
                }
                None if msg.priority != Priority::Emergency => return Some(Overflow::RejectedIncoming),
                None => {
                    overflow = Some(Overflow::DroppedOldest(self.queue.pop_front().expect("full slot")));
                }
            }
        }
        self.queue.push_back(msg);
        overflow
    }

    pub fn drain(&mut self) -> Vec<BrokeredMessage> {
        self.queue.drain(..).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PublishOutcome {
    pub notified: Vec<NodeId>,
    pub brokered: Vec<NodeId>,
    pub suppressed: Vec<NodeId>,
    pub overflows: Vec<(NodeId, Overflow)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicUpdate {
    pub topic: String,
    pub stamp: SimTime,
    pub value: Value,
}

impl TopicUpdate {
    pub fn encode(&self) -> Vec<u8> {
        encode_canonical(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, McpError> {
        serde_json::from_slice(bytes).map_err(|e| McpError::BadRequest(e.to_string()))
    }
}

pub const TOPIC_LABEL: &str = "TOPIC_UPDATE";

pub struct McpServer {
    pub id: NodeId,
    capabilities: BTreeSet<Capability>,
    topics: BTreeMap<String, Option<TopicUpdate>>,
    subscriptions: BTreeMap<(NodeId, String), Subscription>,
    slots: BTreeMap<NodeId, BrokerSlot>,
    slot_capacity: usize,
    pub energy: EnergyModel,
}

impl McpServer {
    pub fn new(id: NodeId, capabilities: impl IntoIterator<Item = Capability>, topics: impl IntoIterator<Item = String>) -> Self {
        McpServer {
            id,
            capabilities: capabilities.into_iter().collect(),
            topics: topics.into_iter().map(|t| (t, None)).collect(),
            subscriptions: BTreeMap::new(),
            slots: BTreeMap::new(),
            slot_capacity: DEFAULT_SLOT_CAPACITY,
            energy: EnergyModel::default(),
        }
    }

    pub fn with_slot_capacity(mut self, capacity: usize) -> Self {
        self.slot_capacity = capacity.max(1);
        self
    }

    pub fn offers(&self, c: Capability) -> bool {
        self.capabilities.contains(&c)
    }

    pub fn capabilities(&self) -> impl Iterator<Item = Capability> + '_ {
        self.capabilities.iter().copied()
    }

    pub fn has_topic(&self, topic: &str) -> bool {
        self.topics.contains_key(topic)
    }

    /// Evaluates a capability. `reachable` says whether the requester has a
    /// live route to this server.
    pub fn query(
        &self,
        ctx: &mut QueryContext<'_>,
        reachable: bool,
        request: &CapabilityRequest,
    ) -> Result<CapabilityResponse, McpError> {
        let cap = request.capability();
        if !self.offers(cap) {
            return Err(McpError::UnknownCapability(cap.name().to_owned()));
        }
        if !reachable {
            return Err(McpError::Unreachable);
        }
        match request {
            CapabilityRequest::LocomotionPlanning { start, goal, wireless_weight } => {
                let p = plan_locomotion(ctx.grid, *start, *goal, *wireless_weight)?;
                Ok(CapabilityResponse::Path { cells: p.cells, cost: p.cost })
            }
            CapabilityRequest::SignalQualityEstimation { link, t_future } => {
                if *t_future < ctx.now {
                    return Err(McpError::BadRequest("t_future is in the past".into()));
                }
                let key = LinkKey::new(link[0].clone(), link[1].clone());
                let f = ctx
                    .radio
                    .predict_quality(&key, ctx.now, *t_future)
                    .map_err(|e| McpError::BadRequest(e.to_string()))?;
                Ok(CapabilityResponse::Quality { estimate: f.estimate, interval: f.interval })
            }
            CapabilityRequest::EnergyPrediction { horizon_s, planned_drive_s } => {
                if !(horizon_s.is_finite() && planned_drive_s.is_finite()) || *horizon_s < 0.0 {
                    return Err(McpError::BadRequest("non-finite or negative duration".into()));
                }
                Ok(CapabilityResponse::Energy { joules: self.energy.predict(*horizon_s, *planned_drive_s) })
            }
        }
    }

    /// Adds or replaces the subscription for `(subscriber, topic)`.
    pub fn subscribe(&mut self, subscriber: NodeId, topic: &str, min_interval: SimTime) -> Result<(), McpError> {
        if !self.has_topic(topic) {
            return Err(McpError::UnknownTopic(topic.to_owned()));
        }
        let key = (subscriber.clone(), topic.to_owned());
        let last_sent = self.subscriptions.get(&key).and_then(|s| s.last_sent);
        self.subscriptions.insert(
            key,
            Subscription { subscriber, topic: topic.to_owned(), min_interval, last_sent },
        );
        Ok(())
    }

    pub fn unsubscribe(&mut self, subscriber: &NodeId, topic: &str) -> bool {
        self.subscriptions.remove(&(subscriber.clone(), topic.to_owned())).is_some()
    }

    pub fn subscribers(&self, topic: &str) -> Vec<&Subscription> {
        self.subscriptions.values().filter(|s| s.topic == topic).collect()
    }

    /// Most recent published update of `topic`; pull queries read this.
    pub fn read_topic(&self, topic: &str) -> Result<Option<&TopicUpdate>, McpError> {
        self.topics
            .get(topic)
            .map(Option::as_ref)
            .ok_or_else(|| McpError::UnknownTopic(topic.to_owned()))
    }

    /// Records `update` as the topic's latest value and pushes it. Reachable
    /// subscribers are notified; unreachable ones get it in their broker slot.
    /// A subscriber notified less than `min_interval` ago is skipped.
    pub fn publish(
        &mut self,
        update: TopicUpdate,
        reachable: impl Fn(&NodeId) -> bool,
    ) -> Result<PublishOutcome, McpError> {
        let t = update.stamp;
        let slot = self
            .topics
            .get_mut(&update.topic)
            .ok_or_else(|| McpError::UnknownTopic(update.topic.clone()))?;
        *slot = Some(update.clone());
        let mut out = PublishOutcome::default();
        let mut to_broker = Vec::new();
        for sub in self.subscriptions.values_mut().filter(|s| s.topic == update.topic) {
            if sub.last_sent.is_some_and(|last| t.saturating_sub(last) < sub.min_interval) {
                out.suppressed.push(sub.subscriber.clone());
                continue;
            }
            sub.last_sent = Some(t);
            if reachable(&sub.subscriber) {
                out.notified.push(sub.subscriber.clone());
            } else {
                out.brokered.push(sub.subscriber.clone());
                to_broker.push(sub.subscriber.clone());
            }
        }
        let bytes = update.encode();
        for who in to_broker {
            let msg = BrokeredMessage { priority: Priority::Operational, label: TOPIC_LABEL.into(), bytes: bytes.clone() };
            if let Some(o) = self.broker_put(&who, msg) {
                out.overflows.push((who, o));
            }
        }
        Ok(out)
    }

    pub fn broker_put(&mut self, recipient: &NodeId, msg: BrokeredMessage) -> Option<Overflow> {
        let cap = self.slot_capacity;
        self.slots
            .entry(recipient.clone())
            .or_insert_with(|| BrokerSlot::new(recipient.clone(), cap))
            .put(msg)
    }

    /// Drains the recipient's slot in FIFO order.
    pub fn broker_fetch(&mut self, requester: &NodeId, recipient: &NodeId) -> Result<Vec<BrokeredMessage>, McpError> {
        if requester != recipient {
            return Err(McpError::NotRecipient { requester: requester.clone(), recipient: recipient.clone() });
        }
        Ok(self.slots.get_mut(recipient).map(BrokerSlot::drain).unwrap_or_default())
    }

    pub fn slot_len(&self, recipient: &NodeId) -> usize {
        self.slots.get(recipient).map_or(0, BrokerSlot::len)
    }
}
