//! The scenario world: one engine driving radio, bundles, MCP, RIC and agents.
//!
//! Every observable step is written to the trace; metrics are computed from
//! the trace afterwards, never from world state.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{cell_of, compute_metrics, EventSpec, MetricsReport, PingStatus, ScenarioSpec};
use crate::a2a::{
    decode, encode, frame_for_control_channel, reassemble, CompressionTier, MessageBody, PolicyBody, SemanticMessage,
    VectorPayload,
};
use crate::agent::{Action, Agent, DecisionRecord, Environment, Role, Via, CORRIDOR_TOPIC};
use crate::dtn::{ArrivalOutcome, BundleId, DtnLayer, ForwardOutcome, Transmission, TtlDefaults};
use crate::mcp::{
    BrokeredMessage, Capability, CapabilityRequest, CapabilityResponse, Grid, McpServer, Overflow, QueryContext,
    TopicUpdate, TOPIC_LABEL,
};
use crate::radio::{ClassShares, ContactPlan, LinkKey, LinkState, NodeId, Priority, Radio, Tier, Window};
use crate::ric::{nearrt_relay_switch, sapp_monitor, PolicyChange, SpectrumPolicy, TwinState, RELAY_LOOKAHEAD, STEERING_BONUS};
use crate::simkernel::{Engine, RngSeed, SimTime, Trace};

pub const LINK_TOPIC: &str = "link_quality";
const TICK: SimTime = SimTime::from_secs(1);
const A2A_LABEL: &str = "A2A#";

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
enum Ev {
    Tick,
    Ping { slot: SimTime },
    PingArrive { status: PingStatus },
    PingCheck { expected: SimTime },
    Move,
    Deliver { send: u64, from: NodeId, to: NodeId, frames: Vec<Vec<u8>>, via: Via },
    BrokerPut { send: u64, to: NodeId, priority: Priority, kind: &'static str, bytes: Vec<u8> },
    Topic { to: NodeId, update: TopicUpdate, how: &'static str },
    Bundle(Transmission),
    Contact(LinkKey),
    Sync,
    RttProbe,
    RttReflect { sent_at: SimTime },
    RttBack { sent_at: SimTime },
    Corridor { x: [u32; 2], y: [u32; 2], quality: f64 },
    Halt(NodeId),
}

/// Shortest one-way latency over links up at `t`, avoiding halted nodes.
pub fn route_latency(
    plan: &ContactPlan,
    halted: &BTreeSet<NodeId>,
    from: &NodeId,
    to: &NodeId,
    t: SimTime,
) -> Option<SimTime> {
    if halted.contains(from) || halted.contains(to) {
        return None;
    }
    let mut best: BTreeMap<NodeId, SimTime> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    best.insert(from.clone(), SimTime::ZERO);
    heap.push(Reverse((SimTime::ZERO, from.clone())));
    while let Some(Reverse((d, n))) = heap.pop() {
        if &n == to {
            return Some(d);
        }
        if best.get(&n).is_some_and(|&b| b < d) {
            continue;
        }
        for (key, other) in plan.neighbors(&n) {
            if halted.contains(other) {
                continue;
            }
            let Ok(s) = plan.link_at(key, t) else { continue };
            if !s.up {
                continue;
            }
            let nd = d + s.one_way_delay;
            if best.get(other).is_none_or(|&b| nd < b) {
                best.insert(other.clone(), nd);
                heap.push(Reverse((nd, other.clone())));
            }
        }
    }
    None
}

/// What an agent sees while the world lends it the radio.
struct View<'a> {
    now: SimTime,
    radio: &'a mut Radio,
    roles: &'a BTreeMap<NodeId, Role>,
    halted: &'a BTreeSet<NodeId>,
    mcp: Option<&'a McpServer>,
    grid: &'a Grid,
    /// Capability queries made while the agent ran, for the trace.
    queries: Vec<Value>,
    asker: NodeId,
}

impl Environment for View<'_> {
    fn now(&self) -> SimTime {
        self.now
    }

    fn links(&self, node: &NodeId) -> Vec<(NodeId, Option<Role>, LinkState)> {
        let keys: Vec<(LinkKey, NodeId)> =
            self.radio.plan().neighbors(node).map(|(k, o)| (k.clone(), o.clone())).collect();
        keys.into_iter()
            .filter_map(|(k, other)| {
                let mut s = self.radio.link_state(&k, self.now).ok()?;
                if self.halted.contains(&other) {
                    s.up = false;
                    s.quality = 0.0;
                }
                let role = self.roles.get(&other).copied();
                Some((other, role, s))
            })
            .collect()
    }

    fn route_latency(&self, from: &NodeId, to: &NodeId) -> Option<SimTime> {
        route_latency(self.radio.plan(), self.halted, from, to, self.now)
    }

    fn predict_quality(&mut self, a: &NodeId, b: &NodeId, t_future: SimTime) -> Option<f64> {
        let link = LinkKey::new(a.clone(), b.clone());
        if let Some(server) = self.mcp {
            let reachable = self.asker == server.id
                || route_latency(self.radio.plan(), self.halted, &self.asker, &server.id, self.now).is_some();
            let req = CapabilityRequest::SignalQualityEstimation { link: [a.clone(), b.clone()], t_future };
            let mut ctx = QueryContext { now: self.now, radio: self.radio, grid: self.grid };
            let res = server.query(&mut ctx, reachable, &req);
            let estimate = match &res {
                Ok(CapabilityResponse::Quality { estimate, .. }) => Some(*estimate),
                _ => None,
            };
            self.queries.push(json!({
                "agent": self.asker.as_str(),
                "server": server.id.as_str(),
                "capability": Capability::SignalQualityEstimation.name(),
                "link": link.to_string(),
                "ok": estimate.is_some(),
            }));
            if estimate.is_some() {
                return estimate;
            }
        }
        self.radio.predict_quality(&link, self.now, t_future).ok().map(|f| f.estimate)
    }
}

struct Bio {
    suit: NodeId,
    watcher: NodeId,
    interval: SimTime,
    grace: SimTime,
    bytes: usize,
}

struct World {
    duration: SimTime,
    radio: Radio,
    dtn: DtnLayer,
    mcp: Option<McpServer>,
    publish_interval: SimTime,
    last_publish: Option<SimTime>,
    policy: SpectrumPolicy,
    twin: TwinState,
    earth: Option<NodeId>,
    earth_shares: Option<ClassShares>,
    sync_interval: SimTime,
    rtt_interval: SimTime,
    agents: BTreeMap<NodeId, Agent>,
    roles: BTreeMap<NodeId, Role>,
    nodes: Vec<NodeId>,
    grid: Grid,
    trace: Trace,
    next_send: u64,
    in_flight: BTreeSet<u64>,
    bundle_sends: BTreeMap<BundleId, u64>,
    relays: BTreeMap<NodeId, NodeId>,
    loads: BTreeMap<NodeId, ChaCha8Rng>,
    bio: Option<Bio>,
    ping_windows: Vec<(Window, PingStatus)>,
    rescuer: Option<(NodeId, SimTime)>,
    moving: bool,
    halted: BTreeSet<NodeId>,
    control_mtu: usize,
}

fn target(n: &NodeId) -> String {
    format!("node:{n}")
}

impl World {
    fn hub(&self) -> Option<NodeId> {
        self.mcp.as_ref().map(|m| m.id.clone())
    }

    fn emit(&mut self, t: SimTime, seq: u64, target: &str, kind: &str, fields: Value) {
        self.trace.emit(t, seq, target, kind, fields);
    }

    fn mode_str(&self, n: &NodeId) -> Value {
        self.agents.get(n).map_or(Value::Null, |a| Value::from(a.mode().as_str()))
    }

    fn fail(&mut self, t: SimTime, seq: u64, send: u64, reason: &str) {
        if self.in_flight.remove(&send) {
            self.emit(t, seq, "world", "a2a_failed", json!({"send": send, "reason": reason}));
        }
    }

    fn record_policy(&mut self, t: SimTime, seq: u64, changes: Vec<PolicyChange>, source: &str, incident: Option<&str>) {
        for c in changes {
            self.radio.set_class_shares(c.link.clone(), c.shares);
            let bw = self.radio.link_state(&c.link, t).map_or(0, |s| s.bandwidth_bps);
            self.emit(
                t,
                seq,
                "ric",
                "policy_reallocated",
                json!({
                    "link": c.link.to_string(),
                    "emergency": c.shares.emergency,
                    "operational": c.shares.operational,
                    "bulk": c.shares.bulk,
                    "bandwidth_bps": bw,
                    "incident_active": c.incident_active,
                    "incident": incident,
                    "source": source,
                }),
            );
        }
    }

    // ---- agents -------------------------------------------------------

    /// Lends the world to agent `id` for one call and applies what it returns.
    fn with_agent<F>(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, id: &NodeId, f: F)
    where
        F: FnOnce(&mut Agent, &mut View<'_>) -> Vec<Action>,
    {
        if self.halted.contains(id) {
            return;
        }
        let Some(mut agent) = self.agents.remove(id) else { return };
        let (actions, queries) = {
            let mut view = View {
                now: t,
                radio: &mut self.radio,
                roles: &self.roles,
                halted: &self.halted,
                mcp: self.mcp.as_ref(),
                grid: &self.grid,
                queries: Vec::new(),
                asker: id.clone(),
            };
            let actions = f(&mut agent, &mut view);
            (actions, view.queries)
        };
        self.agents.insert(id.clone(), agent);
        for q in queries {
            self.emit(t, seq, &target(id), "mcp_query", q);
        }
        for a in actions {
            self.apply(eng, t, seq, id, a);
        }
    }

    fn apply(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, id: &NodeId, action: Action) {
        let tg = target(id);
        match action {
            Action::ModeChanged { from, to, regime } => self.emit(
                t,
                seq,
                &tg,
                "mode_changed",
                json!({"agent": id.as_str(), "from": from.as_str(), "to": to.as_str(), "regime": regime.as_str()}),
            ),
            Action::Send { to, msg, tier, priority, via } => self.send(eng, t, seq, id, &to, msg, tier, priority, via),
            Action::Query { server, topic } => self.pull(eng, t, seq, id, &server, &topic),
            Action::Subscribe { server, topic } => {
                let interval = self.publish_interval;
                let ok = self.mcp.as_mut().is_some_and(|m| m.subscribe(id.clone(), &topic, interval).is_ok());
                self.emit(t, seq, &tg, "mcp_subscribe", json!({"agent": id.as_str(), "server": server.as_str(), "topic": topic, "ok": ok}));
            }
            Action::Unsubscribe { server, topic } => {
                let ok = self.mcp.as_mut().is_some_and(|m| m.unsubscribe(id, &topic));
                self.emit(t, seq, &tg, "mcp_unsubscribe", json!({"agent": id.as_str(), "server": server.as_str(), "topic": topic, "ok": ok}));
            }
            Action::BrokerFetch { server } => self.fetch(eng, t, seq, id, &server),
            Action::Decision(rec) => self.record_decision(t, seq, rec),
            Action::AlertRaised { msg } => {
                let MessageBody::Alert(a) = &msg.body else { return };
                let fields = json!({
                    "agent": id.as_str(),
                    "sender": msg.sender.as_str(),
                    "msg_seq": msg.seq,
                    "anomaly_class": a.anomaly_class,
                    "x_m": a.location.x_m,
                    "y_m": a.location.y_m,
                    "uncertainty_m": a.uncertainty_radius_m,
                    "assistance_level": a.assistance_level,
                });
                self.emit(t, seq, &tg, "alert_created", fields);
            }
            Action::PingMissed { consecutive } => {
                self.emit(t, seq, &tg, "ping_missed", json!({"agent": id.as_str(), "consecutive": consecutive}));
            }
            Action::OpenIncident { incident, links } => self.open_incident(t, seq, &incident, links),
            Action::Reallocate { incident, links } => {
                let links: Vec<LinkKey> = links.into_iter().filter(|l| self.radio.plan().has_link(l)).collect();
                if !self.policy.is_active(&incident) {
                    self.open_incident(t, seq, &incident, links.clone());
                }
                match self.policy.nearrt_reallocate(&incident, &links) {
                    Ok(changes) => self.record_policy(t, seq, changes, "nearrt", Some(&incident)),
                    Err(e) => self.emit(t, seq, "ric", "policy_rejected", json!({"incident": incident, "reason": e.to_string()})),
                }
            }
            Action::EarthPolicy { version, applied, in_reply_to, shares } => {
                self.emit(
                    t,
                    seq,
                    &tg,
                    "earth_policy_received",
                    json!({"agent": id.as_str(), "version": version, "applied": applied, "in_reply_to": in_reply_to}),
                );
                if !applied {
                    self.emit(t, seq, "ric", "policy_rejected", json!({"version": version, "reason": "stale version"}));
                } else if let Some(s) = shares {
                    let changes = self.policy.apply_baseline(s);
                    self.record_policy(t, seq, changes, "nonrt", None);
                }
            }
            Action::Replanned { path, cost, reason, from_cache } => {
                self.emit(
                    t,
                    seq,
                    &tg,
                    "locomotion_replanned",
                    json!({
                        "agent": id.as_str(),
                        "reason": reason,
                        "cost": cost,
                        "path_len": path.len(),
                        "from_cache": from_cache,
                        "next": path.get(1).map(|c| [c.0, c.1]),
                    }),
                );
                if let Some((rover, interval)) = self.rescuer.clone() {
                    if &rover == id && !self.moving {
                        self.moving = true;
                        eng.schedule(t + interval, tg.as_str(), Ev::Move).expect("future");
                    }
                }
            }
            Action::Moved { cell } => {
                self.emit(t, seq, &tg, "rover_moved", json!({"agent": id.as_str(), "x": cell.0, "y": cell.1}));
            }
            Action::Arrived { cell } => {
                self.emit(t, seq, &tg, "rescue_arrived", json!({"agent": id.as_str(), "x": cell.0, "y": cell.1}));
                let open: Vec<String> = self.policy.incidents().cloned().collect();
                for inc in open {
                    self.policy.close_incident(&inc);
                    self.emit(t, seq, "ric", "incident_closed", json!({"incident": inc}));
                }
                let baseline = self.policy.baseline();
                let changes = self.policy.apply_baseline(baseline);
                self.record_policy(t, seq, changes, "nearrt", None);
            }
        }
    }

    fn record_decision(&mut self, t: SimTime, seq: u64, rec: DecisionRecord) {
        let d = &rec.decision;
        let fields = json!({
            "agent": rec.agent.as_str(),
            "id": d.id,
            "decision": d.action,
            "criticality": d.criticality,
            "confidence": rec.confidence,
            "mode": rec.mode.as_str(),
            "made_by": d.made_by,
            "status": rec.status,
            "detail": d.detail,
        });
        self.emit(t, seq, &target(&rec.agent), "decision", fields);
    }

    fn open_incident(&mut self, t: SimTime, seq: u64, incident: &str, links: Vec<LinkKey>) {
        let names: Vec<String> = links.iter().map(ToString::to_string).collect();
        self.policy.open_incident(incident, links);
        self.emit(t, seq, "ric", "incident_opened", json!({"incident": incident, "links": names}));
    }

    // ---- A2A transport ------------------------------------------------

    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        eng: &mut Engine<Ev>,
        t: SimTime,
        seq: u64,
        from: &NodeId,
        to: &NodeId,
        msg: SemanticMessage,
        tier: CompressionTier,
        priority: Priority,
        via: Via,
    ) {
        let bytes = match encode(&msg, tier) {
            Ok(b) => b,
            Err(e) => {
                self.emit(t, seq, &target(from), "a2a_encode_failed", json!({"msg": msg.kind().as_str(), "reason": e.to_string()}));
                return;
            }
        };
        let send = self.next_send;
        self.next_send += 1;
        self.in_flight.insert(send);
        let frames = frame_for_control_channel(&bytes, self.control_mtu, send).unwrap_or_default();
        let kind = msg.kind().as_str();
        let fields = json!({
            "send": send,
            "from": from.as_str(),
            "to": to.as_str(),
            "msg": kind,
            "tier": tier.as_str(),
            "bytes": bytes.len(),
            "frames": frames.len(),
            "class": priority.as_str(),
            "mode": self.mode_str(from),
            "via": via.as_str(),
            "sender": msg.sender.as_str(),
            "msg_seq": msg.seq,
        });
        self.emit(t, seq, &target(from), "a2a_sent", fields);
        match via {
            Via::Direct => {
                let total: usize = frames.iter().map(Vec::len).sum();
                match self.radio.transmit_class(from, to, total, t, priority) {
                    Ok(rx) => {
                        let ev = Ev::Deliver { send, from: from.clone(), to: to.clone(), frames, via };
                        eng.schedule(rx.arrival, target(to).as_str(), ev).expect("arrival after now");
                    }
                    Err(e) => self.fail(t, seq, send, &e.to_string()),
                }
            }
            Via::Broker => {
                let Some(server) = self.hub() else {
                    return self.fail(t, seq, send, "no broker");
                };
                let ev = Ev::BrokerPut { send, to: to.clone(), priority, kind, bytes };
                if &server == from {
                    eng.schedule(t, target(&server).as_str(), ev).expect("now");
                } else {
                    match route_latency(self.radio.plan(), &self.halted, from, &server, t) {
                        Some(l) => {
                            eng.schedule(t + l, target(&server).as_str(), ev).expect("future");
                        }
                        None => self.fail(t, seq, send, "broker unreachable"),
                    }
                }
            }
            Via::Dtn => {
                let custody = priority == Priority::Emergency;
                let b = self.dtn.make_bundle(from.clone(), to.clone(), priority, t, custody, bytes);
                let id = b.id;
                self.bundle_sends.insert(id, send);
                self.emit(
                    t,
                    seq,
                    "dtn",
                    "bundle_created",
                    json!({"bundle": id.0, "src": from.as_str(), "dst": to.as_str(), "priority": priority.as_str(),
                           "size": b.size(), "custody": custody, "send": send}),
                );
                match self.dtn.enqueue(from, b, t) {
                    Ok(()) if self.dtn.delivered_at(id).is_some() => self.bundle_delivered(eng, t, seq, id, from, to, None),
                    Ok(()) => {
                        let out = self.dtn.forward_from(&mut self.radio, from, t);
                        self.record_forward(eng, t, seq, out);
                    }
                    Err(e) => self.fail(t, seq, send, &e.to_string()),
                }
            }
        }
    }

    fn record_forward(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, out: ForwardOutcome) {
        for b in out.expired {
            self.bundle_gone(t, seq, b.id, "bundle_expired");
        }
        for tx in out.sent {
            self.emit(
                t,
                seq,
                "dtn",
                "bundle_forwarded",
                json!({"bundle": tx.bundle.id.0, "from": tx.from.as_str(), "to": tx.to.as_str(), "arrival": tx.arrival.0}),
            );
            let at = tx.arrival;
            let tg = target(&tx.to);
            eng.schedule(at, tg.as_str(), Ev::Bundle(tx)).expect("arrival after departure");
        }
    }

    fn bundle_gone(&mut self, t: SimTime, seq: u64, id: BundleId, kind: &str) {
        self.emit(t, seq, "dtn", kind, json!({"bundle": id.0}));
        if let Some(send) = self.bundle_sends.remove(&id) {
            self.fail(t, seq, send, kind);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn bundle_delivered(
        &mut self,
        eng: &mut Engine<Ev>,
        t: SimTime,
        seq: u64,
        id: BundleId,
        from: &NodeId,
        to: &NodeId,
        payload: Option<&[u8]>,
    ) {
        self.emit(t, seq, "dtn", "bundle_delivered", json!({"bundle": id.0, "at": to.as_str()}));
        let Some(send) = self.bundle_sends.remove(&id) else { return };
        let Some(bytes) = payload else {
            return self.fail(t, seq, send, "bundle addressed to its source");
        };
        match decode(bytes) {
            Ok(msg) => self.deliver(eng, t, seq, send, from, to, msg, Via::Dtn),
            Err(e) => self.fail(t, seq, send, &e.to_string()),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn deliver(
        &mut self,
        eng: &mut Engine<Ev>,
        t: SimTime,
        seq: u64,
        send: u64,
        from: &NodeId,
        to: &NodeId,
        msg: SemanticMessage,
        via: Via,
    ) {
        if self.halted.contains(to) {
            return self.fail(t, seq, send, "receiver halted");
        }
        self.in_flight.remove(&send);
        let tg = target(to);
        self.emit(
            t,
            seq,
            &tg,
            "a2a_received",
            json!({"send": send, "from": from.as_str(), "to": to.as_str(), "msg": msg.kind().as_str(),
                   "tier": msg.tier.as_str(), "via": via.as_str(), "sender": msg.sender.as_str(), "msg_seq": msg.seq}),
        );
        if Some(to) == self.earth.as_ref() {
            return self.earth_receive(eng, t, seq, to, msg);
        }
        let Some(role) = self.roles.get(to).copied() else { return };
        if !role.is_agent() {
            return;
        }
        if msg.kind() == crate::a2a::MessageKind::Alert {
            self.emit(
                t,
                seq,
                &tg,
                "alert_received",
                json!({"agent": to.as_str(), "role": role.as_str(), "sender": msg.sender.as_str(), "msg_seq": msg.seq,
                       "from": from.as_str(), "via": via.as_str()}),
            );
        }
        let from = from.clone();
        let mut dup = None;
        self.with_agent(eng, t, seq, to, |agent, view| match agent.on_message(view, msg, &from, via) {
            Ok(actions) => actions,
            Err(e) => {
                dup = Some(e.to_string());
                Vec::new()
            }
        });
        if let Some(reason) = dup {
            self.emit(t, seq, &tg, "alert_duplicate", json!({"agent": to.as_str(), "reason": reason}));
        }
    }

    fn earth_receive(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, earth: &NodeId, msg: SemanticMessage) {
        let MessageBody::SituationReport(report) = &msg.body else { return };
        let delta = self.twin.nonrt_sync(&report.telemetry, t);
        self.emit(
            t,
            seq,
            "earth",
            "twin_synced",
            json!({"from": msg.sender.as_str(), "updated": delta.updated, "ignored": delta.ignored,
                   "max_staleness_s": delta.max_staleness.as_secs_f64()}),
        );
        if Some(&msg.sender) != self.hub().as_ref() {
            return;
        }
        let version = self.twin.next_policy_version();
        let body = PolicyBody {
            version,
            class_shares: self.earth_shares,
            approved: report.pending_decisions.clone(),
            in_reply_to: Some(msg.seq),
            rationale: Some(format!("twin holds {} nodes", self.twin.entries().count())),
        };
        let reply = SemanticMessage {
            sender: earth.clone(),
            seq: version,
            confidence: 1.0,
            tier: CompressionTier::Critical,
            vector: VectorPayload::Absent,
            tags: vec!["nonrt".into()],
            body: MessageBody::PolicyUpdate(body),
        };
        self.emit(
            t,
            seq,
            "earth",
            "earth_policy_sent",
            json!({"version": version, "to": msg.sender.as_str(), "approved": report.pending_decisions, "in_reply_to": msg.seq}),
        );
        let to = msg.sender.clone();
        self.send(eng, t, seq, earth, &to, reply, CompressionTier::Critical, Priority::Operational, Via::Dtn);
    }

    // ---- MCP ----------------------------------------------------------

    fn pull(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, id: &NodeId, server: &NodeId, topic: &str) {
        let latency = route_latency(self.radio.plan(), &self.halted, id, server, t);
        let update = self.mcp.as_ref().and_then(|m| m.read_topic(topic).ok().flatten().cloned());
        let ok = latency.is_some() && update.is_some();
        self.emit(t, seq, &target(id), "mcp_query", json!({"agent": id.as_str(), "server": server.as_str(), "topic": topic, "ok": ok}));
        if let (Some(l), Some(update)) = (latency, update) {
            let ev = Ev::Topic { to: id.clone(), update, how: "pull" };
            eng.schedule(t + l + l, target(id).as_str(), ev).expect("future");
        }
    }

    fn fetch(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, id: &NodeId, server: &NodeId) {
        let Some(l) = route_latency(self.radio.plan(), &self.halted, id, server, t) else { return };
        let Some(mcp) = self.mcp.as_mut() else { return };
        let msgs = mcp.broker_fetch(id, id).unwrap_or_default();
        self.emit(t, seq, &target(id), "broker_fetch", json!({"agent": id.as_str(), "count": msgs.len()}));
        let at = t + l + l;
        for m in msgs {
            if m.label == TOPIC_LABEL {
                if let Ok(update) = TopicUpdate::decode(&m.bytes) {
                    eng.schedule(at, target(id).as_str(), Ev::Topic { to: id.clone(), update, how: "broker" }).expect("future");
                }
            } else if let Some(send) = m.label.strip_prefix(A2A_LABEL).and_then(|s| s.parse::<u64>().ok()) {
                let frames = frame_for_control_channel(&m.bytes, self.control_mtu, send).unwrap_or_default();
                let ev = Ev::Deliver { send, from: server.clone(), to: id.clone(), frames, via: Via::Broker };
                eng.schedule(at, target(id).as_str(), ev).expect("future");
            }
        }
    }

    fn publish(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64) {
        let Some(server) = self.hub() else { return };
        if self.halted.contains(&server) {
            return;
        }
        let mut links = serde_json::Map::new();
        for k in self.radio.plan().links() {
            let q = self.radio.plan().link_at(k, t).map_or(0.0, |s| s.quality);
            links.insert(k.to_string(), json!(q));
        }
        let updates = [
            TopicUpdate { topic: CORRIDOR_TOPIC.into(), stamp: t, value: json!(self.grid.quality_map()) },
            TopicUpdate { topic: LINK_TOPIC.into(), stamp: t, value: Value::Object(links) },
        ];
        for update in updates {
            let plan = self.radio.plan();
            let halted = &self.halted;
            let mut latencies = BTreeMap::new();
            let reach = |n: &NodeId| route_latency(plan, halted, &server, n, t);
            let Some(mcp) = self.mcp.as_mut() else { return };
            let out = match mcp.publish(update.clone(), |n| reach(n).is_some()) {
                Ok(o) => o,
                Err(_) => continue,
            };
            for n in &out.notified {
                latencies.insert(n.clone(), reach(n).unwrap_or(SimTime::ZERO));
            }
            for (n, l) in latencies {
                self.emit(t, seq, &target(&server), "mcp_push", json!({"topic": update.topic, "to": n.as_str()}));
                let ev = Ev::Topic { to: n.clone(), update: update.clone(), how: "push" };
                eng.schedule(t + l, target(&n).as_str(), ev).expect("future");
            }
            for n in &out.brokered {
                self.emit(t, seq, &target(&server), "broker_put", json!({"to": n.as_str(), "label": TOPIC_LABEL}));
            }
            for (n, o) in out.overflows {
                self.overflow(t, seq, &n, o);
            }
        }
    }

    fn overflow(&mut self, t: SimTime, seq: u64, to: &NodeId, o: Overflow) {
        match o {
            Overflow::DroppedOldest(m) => {
                self.emit(t, seq, "mcp", "slot_overflow", json!({"to": to.as_str(), "dropped": m.label, "policy": "DROPPED_OLDEST"}));
                if let Some(send) = m.label.strip_prefix(A2A_LABEL).and_then(|s| s.parse::<u64>().ok()) {
                    self.fail(t, seq, send, "evicted from broker slot");
                }
            }
            Overflow::RejectedIncoming => {
                self.emit(t, seq, "mcp", "slot_overflow", json!({"to": to.as_str(), "policy": "REJECTED_INCOMING"}));
            }
        }
    }

    // ---- RIC ----------------------------------------------------------

    /// Moves rovers that lost their direct hub link onto the best relay and
    /// releases the relay once the direct link returns.
    fn manage_relays(&mut self, t: SimTime, seq: u64) {
        let Some(hub) = self.hub() else { return };
        let rovers: Vec<NodeId> = self
            .roles
            .iter()
            .filter(|(n, r)| **r == Role::Rover && !self.halted.contains(*n))
            .map(|(n, _)| n.clone())
            .collect();
        for rover in rovers {
            let direct = LinkKey::new(rover.clone(), hub.clone());
            let Ok(state) = self.radio.plan().link_at(&direct, t) else { continue };
            match (state.up, self.relays.get(&rover).cloned()) {
                (false, None) => {
                    let mut candidates = Vec::new();
                    let neighbors: Vec<(LinkKey, NodeId)> =
                        self.radio.plan().neighbors(&rover).map(|(k, o)| (k.clone(), o.clone())).collect();
                    for (k, relay) in neighbors {
                        if relay == hub || self.halted.contains(&relay) || !self.roles.get(&relay).is_some_and(|r| r.is_agent()) {
                            continue;
                        }
                        let back = LinkKey::new(relay.clone(), hub.clone());
                        let up = |l: &LinkKey| self.radio.plan().link_at(l, t).is_ok_and(|s| s.up);
                        if !(up(&k) && up(&back)) {
                            continue;
                        }
                        let ahead = t + RELAY_LOOKAHEAD;
                        let q1 = self.radio.predict_quality(&k, t, ahead).map_or(0.0, |f| f.estimate);
                        let q2 = self.radio.predict_quality(&back, t, ahead).map_or(0.0, |f| f.estimate);
                        candidates.push((relay, q1.min(q2)));
                    }
                    let scores: Vec<Value> = candidates.iter().map(|(n, q)| json!([n.as_str(), q])).collect();
                    match nearrt_relay_switch(&candidates) {
                        Ok(relay) => {
                            let link = LinkKey::new(rover.clone(), relay.clone());
                            self.radio.steer(link.clone(), STEERING_BONUS);
                            self.relays.insert(rover.clone(), relay.clone());
                            self.emit(
                                t,
                                seq,
                                "ric",
                                "relay_switched",
                                json!({"node": rover.as_str(), "relay": relay.as_str(), "link": link.to_string(),
                                       "multiplier": STEERING_BONUS, "candidates": scores}),
                            );
                        }
                        Err(e) => {
                            self.emit(t, seq, "ric", "relay_unavailable", json!({"node": rover.as_str(), "reason": e.to_string()}));
                        }
                    }
                }
                (true, Some(relay)) => {
                    let link = LinkKey::new(rover.clone(), relay.clone());
                    self.radio.unsteer(&link);
                    self.relays.remove(&rover);
                    self.emit(t, seq, "ric", "relay_released", json!({"node": rover.as_str(), "relay": relay.as_str()}));
                }
                _ => {}
            }
        }
    }

    // ---- event dispatch -----------------------------------------------

    fn dispatch(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, ev: Ev) {
        match ev {
            Ev::Tick => self.tick(eng, t, seq),
            Ev::Ping { slot } => self.ping(eng, t, seq, slot),
            Ev::PingArrive { status } => {
                let Some(watcher) = self.bio.as_ref().map(|b| b.watcher.clone()) else { return };
                if self.halted.contains(&watcher) {
                    return;
                }
                self.emit(t, seq, &target(&watcher), "ping_received", json!({"agent": watcher.as_str(), "status": status.as_str()}));
                if let Some(a) = self.agents.get_mut(&watcher) {
                    a.on_ping(t);
                }
            }
            Ev::PingCheck { expected } => {
                let Some(watcher) = self.bio.as_ref().map(|b| b.watcher.clone()) else { return };
                self.with_agent(eng, t, seq, &watcher, |a, v| a.on_ping_check(v, expected));
            }
            Ev::Move => {
                let Some((rover, interval)) = self.rescuer.clone() else { return };
                if self.halted.contains(&rover) {
                    self.moving = false;
                    return;
                }
                self.with_agent(eng, t, seq, &rover, |a, _| a.advance());
                let active = self.agents.get(&rover).is_some_and(|a| a.mission_incident().is_some());
                if active {
                    eng.schedule(t + interval, target(&rover).as_str(), Ev::Move).expect("future");
                } else {
                    self.moving = false;
                }
            }
            Ev::Deliver { send, from, to, frames, via } => {
                let msg = reassemble(&frames).map_err(|e| e.to_string()).and_then(|b| decode(&b).map_err(|e| e.to_string()));
                match msg {
                    Ok(m) => self.deliver(eng, t, seq, send, &from, &to, m, via),
                    Err(reason) => self.fail(t, seq, send, &reason),
                }
            }
            Ev::BrokerPut { send, to, priority, kind, bytes } => {
                let Some(server) = self.hub() else { return };
                if self.halted.contains(&server) {
                    return self.fail(t, seq, send, "broker halted");
                }
                let msg = BrokeredMessage { priority, label: format!("{A2A_LABEL}{send}"), bytes };
                let overflow = self.mcp.as_mut().and_then(|m| m.broker_put(&to, msg));
                self.emit(t, seq, &target(&server), "broker_put", json!({"to": to.as_str(), "label": kind, "send": send}));
                if let Some(o) = overflow {
                    if o == Overflow::RejectedIncoming {
                        self.fail(t, seq, send, "rejected by full broker slot");
                    }
                    self.overflow(t, seq, &to, o);
                }
            }
            Ev::Topic { to, update, how } => {
                if how != "push" {
                    self.emit(t, seq, &target(&to), "mcp_response", json!({"agent": to.as_str(), "topic": update.topic, "how": how,
                        "stamp": update.stamp.0}));
                }
                let TopicUpdate { topic, stamp, value } = update;
                self.with_agent(eng, t, seq, &to, |a, _| a.on_topic(t, &topic, value, stamp));
            }
            Ev::Bundle(tx) => self.bundle_arrival(eng, t, seq, tx),
            Ev::Contact(link) => {
                let out = self.dtn.on_contact(&mut self.radio, &link, t);
                self.record_forward(eng, t, seq, out);
            }
            Ev::Sync => {
                if let (Some(hub), Some(earth)) = (self.hub(), self.earth.clone()) {
                    match self.dtn.episodic_sync(&mut self.radio, &hub, &earth, t) {
                        Ok(sent) => {
                            self.emit(t, seq, "dtn", "episodic_sync", json!({"node": hub.as_str(), "sent": sent.len()}));
                            self.record_forward(eng, t, seq, ForwardOutcome { sent, expired: Vec::new() });
                        }
                        Err(e) => self.emit(t, seq, "dtn", "episodic_sync_skipped", json!({"node": hub.as_str(), "reason": e.to_string()})),
                    }
                }
                let next = t + self.sync_interval;
                if next < self.duration {
                    eng.schedule(next, "dtn", Ev::Sync).expect("future");
                }
            }
            Ev::RttProbe => {
                if let (Some(hub), Some(earth)) = (self.hub(), self.earth.clone()) {
                    match self.radio.probe(&hub, &earth, t) {
                        Ok(d) => {
                            eng.schedule(t + d, target(&earth).as_str(), Ev::RttReflect { sent_at: t }).expect("future");
                        }
                        Err(e) => self.emit(t, seq, "radio", "earth_rtt_unavailable", json!({"reason": e.to_string()})),
                    }
                }
                let next = t + self.rtt_interval;
                if next < self.duration {
                    eng.schedule(next, "radio", Ev::RttProbe).expect("future");
                }
            }
            Ev::RttReflect { sent_at } => {
                let (Some(hub), Some(earth)) = (self.hub(), self.earth.clone()) else { return };
                match self.radio.probe(&earth, &hub, t) {
                    Ok(d) => {
                        eng.schedule(t + d, target(&hub).as_str(), Ev::RttBack { sent_at }).expect("future");
                    }
                    Err(e) => self.emit(t, seq, "radio", "earth_rtt_unavailable", json!({"reason": e.to_string()})),
                }
            }
            Ev::RttBack { sent_at } => {
                let Some(hub) = self.hub() else { return };
                let rtt = t - sent_at;
                let earth = self.earth.clone().map(|e| e.0).unwrap_or_default();
                self.emit(t, seq, "radio", "earth_rtt", json!({"from": hub.as_str(), "to": earth, "sent_at": sent_at.0, "rtt_s": rtt.as_secs_f64(), "bytes": 0}));
                if let Some(a) = self.agents.get_mut(&hub) {
                    a.set_earth_rtt(rtt);
                }
            }
            Ev::Corridor { x, y, quality } => {
                for cx in x[0]..=x[1] {
                    for cy in y[0]..=y[1] {
                        self.grid.set_quality((cx, cy), quality);
                    }
                }
                self.emit(t, seq, "world", "corridor_quality_changed", json!({"x": x, "y": y, "quality": quality}));
            }
            Ev::Halt(node) => {
                let dropped = self.dtn.halt(&node);
                self.halted.insert(node.clone());
                self.emit(t, seq, &target(&node), "node_halted", json!({"node": node.as_str(), "dropped": dropped.len()}));
                for b in dropped {
                    self.bundle_gone(t, seq, b.id, "bundle_dropped");
                }
                for n in self.nodes.clone() {
                    let out = self.dtn.forward_from(&mut self.radio, &n, t);
                    self.record_forward(eng, t, seq, out);
                }
            }
        }
    }

    fn tick(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64) {
        for (_, b) in self.dtn.expire_all(t) {
            self.bundle_gone(t, seq, b.id, "bundle_expired");
        }
        self.manage_relays(t, seq);
        if self.last_publish.is_none_or(|l| t.saturating_sub(l) >= self.publish_interval) {
            self.last_publish = Some(t);
            self.publish(eng, t, seq);
        }
        let ids: Vec<NodeId> = self.agents.keys().cloned().collect();
        for id in ids {
            if self.halted.contains(&id) {
                continue;
            }
            self.with_agent(eng, t, seq, &id, |a, v| a.step(v));
            let load = self.loads.get_mut(&id).map_or(0.0, |r| r.random_range(0.1..0.6));
            let Some(agent) = self.agents.get_mut(&id) else { continue };
            let serving = agent.serving_link();
            let sample = sapp_monitor(self.radio.plan(), &id, serving.as_ref(), t, load, agent.mode());
            agent.record_telemetry(sample.clone());
            let regime = agent.regime().as_str();
            self.emit(
                t,
                seq,
                &target(&id),
                "telemetry",
                json!({"node": id.as_str(), "radio_quality": sample.radio_quality, "system_load": sample.system_load,
                       "mode": sample.agent_mode.as_str(), "regime": regime}),
            );
        }
        for n in self.nodes.clone() {
            if self.dtn.held_count(&n) > 0 {
                let out = self.dtn.forward_from(&mut self.radio, &n, t);
                self.record_forward(eng, t, seq, out);
            }
        }
        let next = t + TICK;
        if next < self.duration {
            eng.schedule(next, "world", Ev::Tick).expect("future");
        }
    }

    fn ping(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, slot: SimTime) {
        let Some(bio) = &self.bio else { return };
        let (suit, watcher, interval, grace, bytes) =
            (bio.suit.clone(), bio.watcher.clone(), bio.interval, bio.grace, bio.bytes);
        let status = self
            .ping_windows
            .iter()
            .rev()
            .find(|(w, _)| w.contains(slot))
            .map_or(PingStatus::Ok, |(_, s)| *s);
        if !self.halted.contains(&suit) && status != PingStatus::Missed {
            match self.radio.transmit_class(&suit, &watcher, bytes, t, Priority::Operational) {
                Ok(rx) => {
                    eng.schedule(rx.arrival, target(&watcher).as_str(), Ev::PingArrive { status }).expect("future");
                }
                Err(e) => self.emit(t, seq, &target(&suit), "ping_lost", json!({"reason": e.to_string()})),
            }
        }
        eng.schedule(slot + grace, target(&watcher).as_str(), Ev::PingCheck { expected: slot }).expect("future");
        let next = slot + interval;
        if next < self.duration {
            eng.schedule(next, target(&suit).as_str(), Ev::Ping { slot: next }).expect("future");
        }
    }

    fn bundle_arrival(&mut self, eng: &mut Engine<Ev>, t: SimTime, seq: u64, tx: Transmission) {
        match self.dtn.on_arrival(&tx, t) {
            ArrivalOutcome::Delivered(b) => {
                let (from, to) = (tx.from.clone(), tx.to.clone());
                self.bundle_delivered(eng, t, seq, b.id, &from, &to, Some(&b.payload));
            }
            ArrivalOutcome::Stored { custody_transferred } => {
                if custody_transferred {
                    self.emit(
                        t,
                        seq,
                        "dtn",
                        "custody_transferred",
                        json!({"bundle": tx.bundle.id.0, "from": tx.from.as_str(), "to": tx.to.as_str()}),
                    );
                }
                let out = self.dtn.forward_from(&mut self.radio, &tx.to, t);
                self.record_forward(eng, t, seq, out);
            }
            ArrivalOutcome::Failed { sender_retains } => {
                if sender_retains {
                    let out = self.dtn.forward_from(&mut self.radio, &tx.from, t);
                    self.record_forward(eng, t, seq, out);
                } else if !tx.bundle.custody || self.dtn.custodian(tx.bundle.id).is_none() {
                    self.bundle_gone(t, seq, tx.bundle.id, "bundle_lost");
                }
            }
            ArrivalOutcome::Expired(b) => self.bundle_gone(t, seq, b.id, "bundle_expired"),
            ArrivalOutcome::Duplicate => {}
        }
    }
}

/// Runs `spec` to completion. The spec must have passed validation.
pub fn run_scenario(spec: &ScenarioSpec) -> RunOutput {
    let seed = RngSeed(spec.seed);
    let duration = spec.duration();
    let plan = spec.contact_plan().expect("validated spec builds a contact plan");
    let tiers: BTreeMap<NodeId, Tier> = spec.nodes.iter().map(|n| (NodeId::from(n.id.as_str()), n.tier)).collect();
    let roles: BTreeMap<NodeId, Role> =
        spec.nodes.iter().filter_map(|n| n.role.map(|r| (NodeId::from(n.id.as_str()), r))).collect();
    let nodes: Vec<NodeId> = spec.nodes.iter().map(|n| NodeId::from(n.id.as_str())).collect();
    let contact_starts = plan.contact_starts(duration);
    let links: Vec<LinkKey> = plan.links().cloned().collect();
    let radio = Radio::new(tiers, plan, spec.radio, seed.component_rng("radio"));
    let grid = spec.initial_grid().unwrap_or_else(|| Grid::new(1, 1));
    let cfg = spec.agent_config();
    let mcp = spec.mcp.as_ref().map(|m| {
        McpServer::new(NodeId::from(m.server.as_str()), Capability::ALL, [CORRIDOR_TOPIC.to_owned(), LINK_TOPIC.to_owned()])
            .with_slot_capacity(m.slot_capacity)
    });

    let mut agents = BTreeMap::new();
    let mut loads = BTreeMap::new();
    for (id, role) in &roles {
        if !role.is_agent() {
            continue;
        }
        let peers: Vec<NodeId> = radio
            .plan()
            .neighbors(id)
            .map(|(_, o)| o.clone())
            .filter(|o| roles.get(o).is_some_and(|r| r.is_agent()))
            .collect();
        let mut agent = Agent::new(id.clone(), *role, peers, cfg.clone());
        if let (Some(r), Some(g)) = (&spec.rescue, &spec.grid) {
            if r.rover == id.0 {
                let pos = spec.node(&r.rover).map_or([0.0, 0.0], |n| n.position_m);
                agent.place(grid.clone(), cell_of(g, pos));
            }
        }
        if let Some(b) = &spec.biometrics {
            if b.watcher == id.0 {
                let pos = spec.node(&b.suit).map_or([0.0, 0.0], |n| n.position_m);
                agent.watch(NodeId::from(b.suit.as_str()), crate::a2a::Location { x_m: pos[0], y_m: pos[1] });
            }
        }
        agents.insert(id.clone(), agent);
        loads.insert(id.clone(), seed.component_rng(&format!("load:{id}")));
    }

    let mut ping_windows = Vec::new();
    let mut corridor = Vec::new();
    let mut halts = Vec::new();
    for e in &spec.events {
        match e {
            EventSpec::PingStatus { start_s, end_s, status } => ping_windows.push((
                Window::new(SimTime::from_secs_f64(*start_s), SimTime::from_secs_f64(*end_s)),
                *status,
            )),
            EventSpec::CorridorQuality { t_s, x, y, quality } => {
                corridor.push((SimTime::from_secs_f64(*t_s), *x, *y, *quality));
            }
            EventSpec::Halt { node, t_s } => halts.push((SimTime::from_secs_f64(*t_s), NodeId::from(node.as_str()))),
            _ => {}
        }
    }

    let mut world = World {
        duration,
        radio,
        dtn: DtnLayer::new(TtlDefaults::default()),
        mcp,
        publish_interval: spec.mcp.as_ref().map_or(TICK, |m| SimTime::from_secs_f64(m.publish_interval_s)),
        last_publish: None,
        policy: SpectrumPolicy::new(spec.policy.baseline, spec.policy.emergency_floor),
        twin: TwinState::new(links.iter().cloned()),
        earth: spec.earth_node().map(|n| NodeId::from(n.id.as_str())),
        earth_shares: spec.earth.policy_shares,
        sync_interval: SimTime::from_secs_f64(spec.earth.sync_interval_s),
        rtt_interval: SimTime::from_secs_f64(spec.earth.rtt_probe_interval_s),
        agents,
        roles,
        nodes,
        grid,
        trace: Trace::new(),
        next_send: 0,
        in_flight: BTreeSet::new(),
        bundle_sends: BTreeMap::new(),
        relays: BTreeMap::new(),
        loads,
        bio: spec.biometrics.as_ref().map(|b| Bio {
            suit: NodeId::from(b.suit.as_str()),
            watcher: NodeId::from(b.watcher.as_str()),
            interval: SimTime::from_secs_f64(b.interval_s),
            grace: SimTime::from_secs_f64(b.grace_s),
            bytes: b.ping_bytes,
        }),
        ping_windows,
        rescuer: spec.rescue.as_ref().map(|r| (NodeId::from(r.rover.as_str()), SimTime::from_secs_f64(r.move_interval_s))),
        moving: false,
        halted: BTreeSet::new(),
        control_mtu: spec.agents.control_mtu,
    };

    world.emit(
        SimTime::ZERO,
        0,
        "world",
        "run_started",
        json!({"scenario": spec.name, "seed": spec.seed, "duration_us": duration.0,
               "nodes": spec.nodes.iter().map(|n| n.id.as_str()).collect::<Vec<_>>()}),
    );
    let installs: Vec<PolicyChange> = links.iter().map(|l| world.policy.install(l.clone())).collect();
    world.record_policy(SimTime::ZERO, 0, installs, "init", None);

    let mut eng: Engine<Ev> = Engine::new();
    let at = |eng: &mut Engine<Ev>, t: SimTime, target: &str, ev: Ev| {
        eng.schedule(t, target, ev).expect("initial events are not in the past");
    };
    for (t, link) in contact_starts {
        at(&mut eng, t, &format!("link:{link}"), Ev::Contact(link));
    }
    at(&mut eng, SimTime::ZERO, "world", Ev::Tick);
    if let Some(b) = &world.bio {
        at(&mut eng, SimTime::ZERO, &target(&b.suit), Ev::Ping { slot: SimTime::ZERO });
    }
    if world.earth.is_some() && world.mcp.is_some() {
        at(&mut eng, SimTime::ZERO, "radio", Ev::RttProbe);
        if world.sync_interval < duration {
            at(&mut eng, world.sync_interval, "dtn", Ev::Sync);
        }
    }
    for (t, x, y, quality) in corridor {
        at(&mut eng, t, "world", Ev::Corridor { x, y, quality });
    }
    for (t, n) in halts {
        let tg = target(&n);
        at(&mut eng, t, &tg, Ev::Halt(n));
    }

    eng.run_until(duration, |eng, ev| world.dispatch(eng, ev.at, ev.seq, ev.payload));

    let pending: Vec<u64> = world.in_flight.iter().copied().collect();
    let held: usize = world.nodes.iter().map(|n| world.dtn.held_count(n)).sum();
    world.emit(duration, u64::MAX, "world", "run_finished", json!({"pending_sends": pending, "held_bundles": held}));
    let trace = world.trace;
    let metrics = compute_metrics(&trace).expect("world traces are well formed");
    RunOutput { trace, metrics }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_latency_prefers_faster_path_and_skips_halted() {
        let mut plan = ContactPlan::new();
        let st = |ms| LinkState { up: true, bandwidth_bps: 1_000, one_way_delay: SimTime::from_millis(ms), quality: 1.0 };
        plan.add_link(LinkKey::new("a", "b"), st(10), Default::default()).unwrap();
        plan.add_link(LinkKey::new("b", "c"), st(10), Default::default()).unwrap();
        plan.add_link(LinkKey::new("a", "c"), st(50), Default::default()).unwrap();
        let none = BTreeSet::new();
        let (a, c) = (NodeId::from("a"), NodeId::from("c"));
        assert_eq!(route_latency(&plan, &none, &a, &c, SimTime::ZERO), Some(SimTime::from_millis(20)));
        let halted: BTreeSet<NodeId> = [NodeId::from("b")].into();
        assert_eq!(route_latency(&plan, &halted, &a, &c, SimTime::ZERO), Some(SimTime::from_millis(50)));
    }
}
