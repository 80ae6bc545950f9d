//! Scenario definition, loading and validation.
//!
//! A scenario is a TOML document. Times are seconds (floats), bandwidths
//! bits per second, delays milliseconds. Every node a link, event or role
//! refers to must be declared under `[[nodes]]`.

mod metrics;
mod narrative;
mod world;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, Role};
use crate::mcp::{Cell, Grid};
use crate::radio::{
    ClassShares, ContactPlan, Degradation, LinkKey, LinkPlan, LinkState, NodeId, RadioConfig, RegimeThresholds, Tier,
    Window,
};
use crate::ric::{validate_shares, DEFAULT_EMERGENCY_FLOOR};
use crate::simkernel::SimTime;

pub use metrics::{compute_metrics, ClassRatio, MetricsError, MetricsReport, RegimePoint, SharePoint};
pub use narrative::{eva_narrative, NarrativeCheck, REALLOCATION_BOUND};
pub use world::{run_scenario, RunOutput, LINK_TOPIC};

pub const EVA_INCIDENT_TOML: &str = include_str!("eva_incident.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: invalid `{field}`: {reason}")]
    Validation { path: String, field: String, reason: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Validation { path: String::new(), field: field.into(), reason: reason.into() }
    }

    fn at(self, p: &str) -> Self {
        match self {
            ScenarioError::Validation { field, reason, .. } => {
                ScenarioError::Validation { path: p.to_owned(), field, reason }
            }
            ScenarioError::Parse { message, .. } => ScenarioError::Parse { path: p.to_owned(), message },
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub tier: Tier,
    #[serde(default)]
    pub role: Option<Role>,
    #[serde(default)]
    pub position_m: [f64; 2],
    #[serde(default)]
    pub uncertainty_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub bandwidth_bps: u64,
    pub delay_ms: f64,
    pub quality: f64,
    /// When set, the link is up only inside these `[start, end)` windows.
    #[serde(default)]
    pub availability: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub base_confidence: f64,
    pub thresholds: RegimeThresholds,
    pub push_interval_s: f64,
    pub summary_interval_s: f64,
    pub staleness_limit_s: f64,
    pub report_interval_s: f64,
    pub fetch_interval_s: f64,
    pub guidance_interval_s: f64,
    pub alert_deadline_s: f64,
    pub routine_deadline_s: f64,
    pub initial_availability: f64,
    /// Frame MTU of the RAN control channel carrying A2A messages.
    pub control_mtu: usize,
}

impl Default for AgentSettings {
    fn default() -> Self {
        let c = AgentConfig::default();
        AgentSettings {
            base_confidence: c.base_confidence,
            thresholds: c.thresholds,
            push_interval_s: c.push_interval.as_secs_f64(),
            summary_interval_s: c.summary_interval.as_secs_f64(),
            staleness_limit_s: c.staleness_limit.as_secs_f64(),
            report_interval_s: c.report_interval.as_secs_f64(),
            fetch_interval_s: c.fetch_interval.as_secs_f64(),
            guidance_interval_s: c.guidance_interval.as_secs_f64(),
            alert_deadline_s: c.alert_deadline.as_secs_f64(),
            routine_deadline_s: c.routine_deadline.as_secs_f64(),
            initial_availability: c.initial_availability,
            control_mtu: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySettings {
    pub baseline: ClassShares,
    pub emergency_floor: f64,
}

impl Default for PolicySettings {
    fn default() -> Self {
        PolicySettings { baseline: ClassShares::default(), emergency_floor: DEFAULT_EMERGENCY_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarthSettings {
    pub rtt_probe_interval_s: f64,
    pub sync_interval_s: f64,
    /// Long-term shares the Non-RT RIC sends back with each policy update.
    pub policy_shares: Option<ClassShares>,
}

impl Default for EarthSettings {
    fn default() -> Self {
        EarthSettings { rtt_probe_interval_s: 60.0, sync_interval_s: 120.0, policy_shares: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McpSettings {
    pub server: String,
    #[serde(default = "default_publish_interval")]
    pub publish_interval_s: f64,
    #[serde(default = "default_slot_capacity")]
    pub slot_capacity: usize,
}

fn default_publish_interval() -> f64 {
    1.0
}

fn default_slot_capacity() -> usize {
    crate::mcp::DEFAULT_SLOT_CAPACITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityPatch {
    /// Inclusive x range.
    pub x: [u32; 2],
    /// Inclusive y range.
    pub y: [u32; 2],
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: u32,
    pub height: u32,
    pub cell_size_m: f64,
    #[serde(default = "one")]
    pub default_quality: f64,
    #[serde(default)]
    pub blocked: Vec<[u32; 2]>,
    #[serde(default)]
    pub patches: Vec<QualityPatch>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescueSpec {
    pub rover: String,
    pub move_interval_s: f64,
    pub wireless_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiometricSpec {
    pub suit: String,
    pub watcher: String,
    #[serde(default = "five")]
    pub interval_s: f64,
    #[serde(default = "one")]
    pub grace_s: f64,
    #[serde(default = "three")]
    pub missed_limit: u32,
    #[serde(default = "ping_bytes")]
    pub ping_bytes: usize,
}

fn five() -> f64 {
    5.0
}

fn three() -> u32 {
    3
}

fn ping_bytes() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PingStatus {
    Ok,
    Degraded,
    Missed,
}

impl PingStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PingStatus::Ok => "OK",
            PingStatus::Degraded => "DEGRADED",
            PingStatus::Missed => "MISSED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    Occlusion { link: [String; 2], start_s: f64, end_s: f64 },
    Degradation { link: [String; 2], start_s: f64, end_s: f64, quality: f64, bandwidth_bps: Option<u64> },
    PingStatus { start_s: f64, end_s: f64, status: PingStatus },
    Halt { node: String, t_s: f64 },
    CorridorQuality { t_s: f64, x: [u32; 2], y: [u32; 2], quality: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub radio: RadioConfig,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub agents: AgentSettings,
    #[serde(default)]
    pub policy: PolicySettings,
    #[serde(default)]
    pub earth: EarthSettings,
    #[serde(default)]
    pub mcp: Option<McpSettings>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub rescue: Option<RescueSpec>,
    #[serde(default)]
    pub biometrics: Option<BiometricSpec>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
}

fn secs(field: &str, s: f64) -> Result<SimTime, ScenarioError> {
    if !s.is_finite() || s < 0.0 {
        return Err(ScenarioError::invalid(field, format!("{s} is not a non-negative number of seconds")));
    }
    Ok(SimTime::from_secs_f64(s))
}

fn window(field: &str, start: f64, end: f64) -> Result<Window, ScenarioError> {
    let (s, e) = (secs(field, start)?, secs(field, end)?);
    if s >= e {
        return Err(ScenarioError::invalid(field, format!("window [{start}, {end}) is empty")));
    }
    Ok(Window::new(s, e))
}

fn unit(field: &str, q: f64) -> Result<(), ScenarioError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(ScenarioError::invalid(field, format!("{q} is outside [0, 1]")));
    }
    Ok(())
}

fn positive(field: &str, s: f64) -> Result<SimTime, ScenarioError> {
    let t = secs(field, s)?;
    if t == SimTime::ZERO {
        return Err(ScenarioError::invalid(field, "must be positive"));
    }
    Ok(t)
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| ScenarioError::Parse { path: String::new(), message: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario spec serializes")
    }

    /// The bundled EVA incident.
    pub fn eva_incident() -> Self {
        Self::from_toml(EVA_INCIDENT_TOML).expect("bundled scenario is valid")
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn earth_node(&self) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.tier == Tier::Earth)
    }

    fn require_node(&self, field: &str, id: &str) -> Result<&NodeSpec, ScenarioError> {
        self.node(id).ok_or_else(|| ScenarioError::invalid(field, format!("unknown node `{id}`")))
    }

    fn require_link(&self, field: &str, link: &[String; 2]) -> Result<(), ScenarioError> {
        self.require_node(field, &link[0])?;
        self.require_node(field, &link[1])?;
        let key = LinkKey::new(link[0].as_str(), link[1].as_str());
        if !self.links.iter().any(|l| LinkKey::new(l.a.as_str(), l.b.as_str()) == key) {
            return Err(ScenarioError::invalid(field, format!("unknown link `{key}`")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(ScenarioError::invalid("name", "must not be empty"));
        }
        positive("duration_s", self.duration_s)?;
        if self.radio.mtu == 0 {
            return Err(ScenarioError::invalid("radio.mtu", "must be positive"));
        }
        let mut ids = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let f = format!("nodes[{i}].id");
            if n.id.is_empty() || n.id.contains("--") {
                return Err(ScenarioError::invalid(f, "must be non-empty and must not contain `--`"));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(ScenarioError::invalid(f, format!("duplicate node `{}`", n.id)));
            }
            if n.tier == Tier::Earth && n.role.is_some() {
                return Err(ScenarioError::invalid(format!("nodes[{i}].role"), "the Earth node takes no role"));
            }
            if !(n.uncertainty_m.is_finite() && n.uncertainty_m >= 0.0) {
                return Err(ScenarioError::invalid(format!("nodes[{i}].uncertainty_m"), "must be non-negative"));
            }
        }
        if self.nodes.iter().filter(|n| n.tier == Tier::Earth).count() > 1 {
            return Err(ScenarioError::invalid("nodes", "at most one node may have tier EARTH"));
        }
        let mut keys = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            let f = |k: &str| format!("links[{i}].{k}");
            self.require_node(&f("a"), &l.a)?;
            self.require_node(&f("b"), &l.b)?;
            if l.a == l.b {
                return Err(ScenarioError::invalid(f("b"), "a link needs two distinct nodes"));
            }
            if !keys.insert(LinkKey::new(l.a.as_str(), l.b.as_str())) {
                return Err(ScenarioError::invalid(f("b"), format!("duplicate link {}--{}", l.a, l.b)));
            }
            if l.bandwidth_bps == 0 {
                return Err(ScenarioError::invalid(f("bandwidth_bps"), "must be positive"));
            }
            secs(&f("delay_ms"), l.delay_ms / 1e3)?;
            unit(&f("quality"), l.quality)?;
            for (j, w) in l.availability.iter().flatten().enumerate() {
                window(&format!("links[{i}].availability[{j}]"), w[0], w[1])?;
            }
        }
        let a = &self.agents;
        unit("agents.base_confidence", a.base_confidence)?;
        unit("agents.initial_availability", a.initial_availability)?;
        let t = &a.thresholds;
        unit("agents.thresholds.high_quality", t.high_quality)?;
        unit("agents.thresholds.poor_quality", t.poor_quality)?;
        if t.poor_quality > t.high_quality || t.poor_bandwidth_bps > t.high_bandwidth_bps {
            return Err(ScenarioError::invalid("agents.thresholds", "POOR thresholds must not exceed HIGH thresholds"));
        }
        if !(t.hysteresis.is_finite() && t.hysteresis >= 0.0) {
            return Err(ScenarioError::invalid("agents.thresholds.hysteresis", "must be non-negative"));
        }
        for (f, v) in [
            ("agents.push_interval_s", a.push_interval_s),
            ("agents.summary_interval_s", a.summary_interval_s),
            ("agents.staleness_limit_s", a.staleness_limit_s),
            ("agents.report_interval_s", a.report_interval_s),
            ("agents.fetch_interval_s", a.fetch_interval_s),
            ("agents.guidance_interval_s", a.guidance_interval_s),
            ("agents.alert_deadline_s", a.alert_deadline_s),
            ("agents.routine_deadline_s", a.routine_deadline_s),
            ("earth.rtt_probe_interval_s", self.earth.rtt_probe_interval_s),
            ("earth.sync_interval_s", self.earth.sync_interval_s),
        ] {
            positive(f, v)?;
        }
        if a.control_mtu <= crate::a2a::FRAME_HEADER_LEN {
            return Err(ScenarioError::invalid("agents.control_mtu", "must exceed the 16-byte frame header"));
        }
        let probe = LinkKey::new("policy", "baseline");
        validate_shares(&probe, &self.policy.baseline)
            .map_err(|e| ScenarioError::invalid("policy.baseline", e.to_string()))?;
        unit("policy.emergency_floor", self.policy.emergency_floor)?;
        if let Some(s) = &self.earth.policy_shares {
            validate_shares(&probe, s).map_err(|e| ScenarioError::invalid("earth.policy_shares", e.to_string()))?;
        }
        if let Some(m) = &self.mcp {
            let n = self.require_node("mcp.server", &m.server)?;
            if !n.role.is_some_and(Role::is_agent) {
                return Err(ScenarioError::invalid("mcp.server", format!("`{}` does not run an agent", m.server)));
            }
            positive("mcp.publish_interval_s", m.publish_interval_s)?;
            if m.slot_capacity == 0 {
                return Err(ScenarioError::invalid("mcp.slot_capacity", "must be positive"));
            }
        }
        if let Some(g) = &self.grid {
            if g.width == 0 || g.height == 0 {
                return Err(ScenarioError::invalid("grid", "width and height must be positive"));
            }
            if !(g.cell_size_m.is_finite() && g.cell_size_m > 0.0) {
                return Err(ScenarioError::invalid("grid.cell_size_m", "must be positive"));
            }
            unit("grid.default_quality", g.default_quality)?;
            for (i, c) in g.blocked.iter().enumerate() {
                if c[0] >= g.width || c[1] >= g.height {
                    return Err(ScenarioError::invalid(format!("grid.blocked[{i}]"), "cell outside the grid"));
                }
            }
            for (i, p) in g.patches.iter().enumerate() {
                check_region(g, &format!("grid.patches[{i}]"), p.x, p.y)?;
                unit(&format!("grid.patches[{i}].quality"), p.quality)?;
            }
        }
        if let Some(r) = &self.rescue {
            let n = self.require_node("rescue.rover", &r.rover)?;
            if n.role != Some(Role::Rover) {
                return Err(ScenarioError::invalid("rescue.rover", format!("`{}` is not a ROVER", r.rover)));
            }
            let Some(g) = &self.grid else {
                return Err(ScenarioError::invalid("rescue", "a rescue needs a [grid]"));
            };
            positive("rescue.move_interval_s", r.move_interval_s)?;
            if !(r.wireless_weight.is_finite() && r.wireless_weight >= 0.0) {
                return Err(ScenarioError::invalid("rescue.wireless_weight", "must be non-negative"));
            }
            let c = cell_of(g, n.position_m);
            if g.blocked.contains(&[c.0, c.1]) {
                return Err(ScenarioError::invalid("rescue.rover", "rover starts on a blocked cell"));
            }
        }
        if let Some(b) = &self.biometrics {
            let suit = self.require_node("biometrics.suit", &b.suit)?;
            if suit.role != Some(Role::Suit) {
                return Err(ScenarioError::invalid("biometrics.suit", format!("`{}` is not a SUIT", b.suit)));
            }
            let w = self.require_node("biometrics.watcher", &b.watcher)?;
            if !w.role.is_some_and(Role::is_agent) {
                return Err(ScenarioError::invalid("biometrics.watcher", format!("`{}` does not run an agent", b.watcher)));
            }
            self.require_link("biometrics", &[b.suit.clone(), b.watcher.clone()])?;
            let interval = positive("biometrics.interval_s", b.interval_s)?;
            let grace = positive("biometrics.grace_s", b.grace_s)?;
            if grace >= interval {
                return Err(ScenarioError::invalid("biometrics.grace_s", "must be shorter than the ping interval"));
            }
            if b.missed_limit == 0 {
                return Err(ScenarioError::invalid("biometrics.missed_limit", "must be positive"));
            }
            if b.ping_bytes == 0 || b.ping_bytes > self.radio.mtu {
                return Err(ScenarioError::invalid("biometrics.ping_bytes", "must be in 1..=radio.mtu"));
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            let f = |k: &str| format!("events[{i}].{k}");
            match e {
                EventSpec::Occlusion { link, start_s, end_s } => {
                    self.require_link(&f("link"), link)?;
                    window(&f("start_s"), *start_s, *end_s)?;
                }
                EventSpec::Degradation { link, start_s, end_s, quality, bandwidth_bps } => {
                    self.require_link(&f("link"), link)?;
                    window(&f("start_s"), *start_s, *end_s)?;
                    unit(&f("quality"), *quality)?;
                    if *bandwidth_bps == Some(0) {
                        return Err(ScenarioError::invalid(f("bandwidth_bps"), "must be positive"));
                    }
                }
                EventSpec::PingStatus { start_s, end_s, .. } => {
                    if self.biometrics.is_none() {
                        return Err(ScenarioError::invalid(f("kind"), "ping_status needs a [biometrics] section"));
                    }
                    window(&f("start_s"), *start_s, *end_s)?;
                }
                EventSpec::Halt { node, t_s } => {
                    self.require_node(&f("node"), node)?;
                    secs(&f("t_s"), *t_s)?;
                }
                EventSpec::CorridorQuality { t_s, x, y, quality } => {
                    let Some(g) = &self.grid else {
                        return Err(ScenarioError::invalid(f("kind"), "corridor_quality needs a [grid]"));
                    };
                    secs(&f("t_s"), *t_s)?;
                    check_region(g, &f("x"), *x, *y)?;
                    unit(&f("quality"), *quality)?;
                }
            }
        }
        Ok(())
    }

    /// Contact plan with every occlusion and degradation event folded in.
    pub fn contact_plan(&self) -> Result<ContactPlan, ScenarioError> {
        let mut plans: BTreeMap<LinkKey, (LinkState, LinkPlan)> = BTreeMap::new();
        for l in &self.links {
            let state = LinkState {
                up: true,
                bandwidth_bps: l.bandwidth_bps,
                one_way_delay: SimTime::from_secs_f64(l.delay_ms / 1e3),
                quality: l.quality,
            };
            let availability = l
                .availability
                .as_ref()
                .map(|ws| ws.iter().map(|w| Window::new(SimTime::from_secs_f64(w[0]), SimTime::from_secs_f64(w[1]))).collect());
            let plan = LinkPlan { availability, ..Default::default() };
            plans.insert(LinkKey::new(l.a.as_str(), l.b.as_str()), (state, plan));
        }
        for e in &self.events {
            match e {
                EventSpec::Occlusion { link, start_s, end_s } => {
                    let key = LinkKey::new(link[0].as_str(), link[1].as_str());
                    if let Some((_, p)) = plans.get_mut(&key) {
                        p.occlusions.push(Window::new(SimTime::from_secs_f64(*start_s), SimTime::from_secs_f64(*end_s)));
                    }
                }
                EventSpec::Degradation { link, start_s, end_s, quality, bandwidth_bps } => {
                    let key = LinkKey::new(link[0].as_str(), link[1].as_str());
                    if let Some((_, p)) = plans.get_mut(&key) {
                        p.degradations.push(Degradation {
                            window: Window::new(SimTime::from_secs_f64(*start_s), SimTime::from_secs_f64(*end_s)),
                            quality: *quality,
                            bandwidth_bps: *bandwidth_bps,
                        });
                    }
                }
                _ => {}
            }
        }
        let mut cp = ContactPlan::new();
        for (key, (state, plan)) in plans {
            let field = format!("links[{key}]");
            cp.add_link(key, state, plan).map_err(|e| ScenarioError::invalid(field, e.to_string()))?;
        }
        Ok(cp)
    }

    /// The grid with blocked cells and quality patches applied.
    pub fn initial_grid(&self) -> Option<Grid> {
        let g = self.grid.as_ref()?;
        let mut grid = Grid::new(g.width, g.height);
        for y in 0..g.height {
            for x in 0..g.width {
                grid.set_quality((x, y), g.default_quality);
            }
        }
        for p in &g.patches {
            for x in p.x[0]..=p.x[1] {
                for y in p.y[0]..=p.y[1] {
                    grid.set_quality((x, y), p.quality);
                }
            }
        }
        for c in &g.blocked {
            grid.block((c[0], c[1]));
        }
        Some(grid)
    }

    pub fn agent_config(&self) -> AgentConfig {
        let a = &self.agents;
        let s = SimTime::from_secs_f64;
        AgentConfig {
            base_confidence: a.base_confidence,
            thresholds: a.thresholds,
            push_interval: s(a.push_interval_s),
            summary_interval: s(a.summary_interval_s),
            staleness_limit: s(a.staleness_limit_s),
            report_interval: s(a.report_interval_s),
            fetch_interval: s(a.fetch_interval_s),
            guidance_interval: s(a.guidance_interval_s),
            missed_ping_limit: self.biometrics.as_ref().map_or(3, |b| b.missed_limit),
            wireless_weight: self.rescue.as_ref().map_or(0.0, |r| r.wireless_weight),
            alert_deadline: s(a.alert_deadline_s),
            routine_deadline: s(a.routine_deadline_s),
            initial_availability: a.initial_availability,
            topics: if self.mcp.is_some() {
                vec![crate::agent::CORRIDOR_TOPIC.to_owned(), world::LINK_TOPIC.to_owned()]
            } else {
                Vec::new()
            },
            server: self.mcp.as_ref().map(|m| NodeId::from(m.server.as_str())),
            earth: self.earth_node().map(|n| NodeId::from(n.id.as_str())),
            location_uncertainty_m: self
                .biometrics
                .as_ref()
                .and_then(|b| self.node(&b.suit))
                .map_or(0.0, |n| n.uncertainty_m),
            cell_size_m: self.grid.as_ref().map_or(1.0, |g| g.cell_size_m),
        }
    }
}

fn check_region(g: &GridSpec, field: &str, x: [u32; 2], y: [u32; 2]) -> Result<(), ScenarioError> {
    if x[0] > x[1] || y[0] > y[1] || x[1] >= g.width || y[1] >= g.height {
        return Err(ScenarioError::invalid(field, "region is empty or outside the grid"));
    }
    Ok(())
}

/// Grid cell containing a position, clamped to the grid.
pub fn cell_of(g: &GridSpec, position_m: [f64; 2]) -> Cell {
    let c = |v: f64, n: u32| ((v / g.cell_size_m).floor().max(0.0) as u32).min(n - 1);
    (c(position_m[0], g.width), c(position_m[1], g.height))
}

/// Reads and validates a scenario file. A bare name such as `eva_incident`
/// that is not an existing path resolves to the bundled scenario.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
    let shown = path.display().to_string();
    if !path.exists() && (shown == "eva_incident" || shown == "eva_incident.toml") {
        return Ok(ScenarioSpec::eva_incident());
    }
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: shown.clone(), source })?;
    ScenarioSpec::from_toml(&text).map_err(|e| e.at(&shown))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_loads_with_five_nodes() {
        let s = ScenarioSpec::eva_incident();
        let ids: Vec<_> = s.nodes.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["astronaut-suit", "rover-A", "rover-B-high-terrain", "base", "earth"]);
        s.contact_plan().unwrap();
        assert_eq!(load_scenario(Path::new("eva_incident")).unwrap(), s);
    }

    #[test]
    fn unknown_node_in_window_is_named() {
        let mut s = ScenarioSpec::eva_incident();
        s.events.push(EventSpec::Occlusion { link: ["rover-A".into(), "rover-Z".into()], start_s: 1.0, end_s: 2.0 });
        let n = s.events.len() - 1;
        match s.validate() {
            Err(ScenarioError::Validation { field, reason, .. }) => {
                assert_eq!(field, format!("events[{n}].link"));
                assert!(reason.contains("rover-Z"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_event_list_is_valid() {
        let mut s = ScenarioSpec::eva_incident();
        s.events.clear();
        s.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip() {
        let s = ScenarioSpec::eva_incident();
        assert_eq!(ScenarioSpec::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = EVA_INCIDENT_TOML.replacen("duration_s", "durations_s", 1);
        assert!(matches!(ScenarioSpec::from_toml(&text), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn bad_values_name_their_field() {
        let mut s = ScenarioSpec::eva_incident();
        s.links[0].quality = 1.5;
        let Err(ScenarioError::Validation { field, .. }) = s.validate() else { panic!() };
        assert_eq!(field, "links[0].quality");
        let mut s = ScenarioSpec::eva_incident();
        s.policy.baseline = ClassShares::new(0.5, 0.5, 0.5);
        let Err(ScenarioError::Validation { field, .. }) = s.validate() else { panic!() };
        assert_eq!(field, "policy.baseline");
    }
}
