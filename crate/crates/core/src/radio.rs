//! Time-varying lunar link model.
//!
//! A [`ContactPlan`] gives every link a baseline [`LinkState`] plus scripted
//! windows: occlusions take the link down, degradations override quality and
//! bandwidth, and an optional availability list restricts the link to
//! scheduled contacts. All windows are half-open `[start, end)`.
//!
//! [`Radio`] layers transmission on top of the plan: per-direction FIFO
//! serialization, per-class share pipes installed by the RIC, beam-steering
//! bandwidth bonuses and the randomized Earth backhaul delay.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkernel::SimTime;

/// Earth backhaul one-way delay bounds, giving a 1.5–2.0 s round trip.
pub const EARTH_DELAY_MIN: SimTime = SimTime::from_millis(750);
pub const EARTH_DELAY_MAX: SimTime = SimTime::from_millis(1_000);
pub const DEFAULT_MTU: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tier {
    Rover,
    RelayHub,
    Base,
    Earth,
}

/// Undirected link, endpoints stored in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkKey(NodeId, NodeId);

impl LinkKey {
    pub fn new(a: impl Into<NodeId>, b: impl Into<NodeId>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            LinkKey(a, b)
        } else {
            LinkKey(b, a)
        }
    }

    pub fn a(&self) -> &NodeId {
        &self.0
    }

    pub fn b(&self) -> &NodeId {
        &self.1
    }

    pub fn touches(&self, n: &NodeId) -> bool {
        &self.0 == n || &self.1 == n
    }

    pub fn other(&self, n: &NodeId) -> Option<&NodeId> {
        if &self.0 == n {
            Some(&self.1)
        } else if &self.1 == n {
            Some(&self.0)
        } else {
            None
        }
    }
}

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}--{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub up: bool,
    pub bandwidth_bps: u64,
    pub one_way_delay: SimTime,
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: SimTime,
    pub end: SimTime,
}

impl Window {
    pub fn new(start: SimTime, end: SimTime) -> Self {
        Window { start, end }
    }

    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub window: Window,
    pub quality: f64,
    pub bandwidth_bps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkPlan {
    pub occlusions: Vec<Window>,
    pub degradations: Vec<Degradation>,
    /// When present the link is up only inside these windows.
    pub availability: Option<Vec<Window>>,
}

/// Maximal interval during which a link is up with a constant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub start: SimTime,
    pub end: SimTime,
    pub state: LinkState,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("link {0} is down")]
    LinkDown(String),
    #[error("payload of {size} bytes exceeds MTU {mtu}")]
    PayloadExceedsMtu { size: usize, mtu: usize },
    #[error("empty payload")]
    EmptyPayload,
    #[error("class {class:?} has no share on link {link}")]
    NoClassCapacity { link: String, class: Priority },
    #[error("invalid plan for {link}: {reason}")]
    InvalidPlan { link: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
struct PlannedLink {
    baseline: LinkState,
    plan: LinkPlan,
    contacts: Vec<Contact>,
}

fn check_windows(link: &LinkKey, what: &str, ws: &[Window]) -> Result<(), RadioError> {
    for (i, w) in ws.iter().enumerate() {
        if w.start >= w.end {
            return Err(RadioError::InvalidPlan {
                link: link.to_string(),
                reason: format!("{what}[{i}] has start >= end"),
            });
        }
        if i > 0 && ws[i - 1].end > w.start {
            return Err(RadioError::InvalidPlan {
                link: link.to_string(),
                reason: format!("{what}[{i}] overlaps or is out of order"),
            });
        }
    }
    Ok(())
}

impl PlannedLink {
    fn state_at(&self, t: SimTime) -> LinkState {
        let mut s = self.baseline;
        if let Some(d) = self.plan.degradations.iter().find(|d| d.window.contains(t)) {
            s.quality = d.quality;
            if let Some(bw) = d.bandwidth_bps {
                s.bandwidth_bps = bw;
            }
        }
        let available = self
            .plan
            .availability
            .as_ref()
            .is_none_or(|ws| ws.iter().any(|w| w.contains(t)));
        let occluded = self.plan.occlusions.iter().any(|w| w.contains(t));
        if !s.up || !available || occluded {
            s.up = false;
            s.quality = 0.0;
        }
        s
    }

    fn build_contacts(&mut self) {
        let mut points: BTreeSet<SimTime> = BTreeSet::new();
        points.insert(SimTime::ZERO);
        let windows = self
            .plan
            .occlusions
            .iter()
            .chain(self.plan.degradations.iter().map(|d| &d.window))
            .chain(self.plan.availability.iter().flatten());
        for w in windows {
            points.insert(w.start);
            points.insert(w.end);
        }
        let points: Vec<SimTime> = points.into_iter().collect();
        let mut contacts: Vec<Contact> = Vec::new();
        for (i, &start) in points.iter().enumerate() {
            let end = points.get(i + 1).copied().unwrap_or(SimTime::MAX);
            let state = self.state_at(start);
            if !state.up {
                continue;
            }
            match contacts.last_mut() {
                Some(prev) if prev.end == start && prev.state == state => prev.end = end,
                _ => contacts.push(Contact { start, end, state }),
            }
        }
        self.contacts = contacts;
    }
}

/// Baseline states plus scripted windows for every link in the topology.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactPlan {
    links: BTreeMap<LinkKey, PlannedLink>,
}

impl ContactPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_link(
        &mut self,
        link: LinkKey,
        baseline: LinkState,
        plan: LinkPlan,
    ) -> Result<(), RadioError> {
        if !(0.0..=1.0).contains(&baseline.quality) || baseline.bandwidth_bps == 0 {
            return Err(RadioError::InvalidPlan {
                link: link.to_string(),
                reason: "baseline quality must be in [0,1] and bandwidth positive".into(),
            });
        }
        check_windows(&link, "occlusions", &plan.occlusions)?;
        let deg: Vec<Window> = plan.degradations.iter().map(|d| d.window).collect();
        check_windows(&link, "degradations", &deg)?;
        for d in &plan.degradations {
            if !(0.0..=1.0).contains(&d.quality) || d.bandwidth_bps == Some(0) {
                return Err(RadioError::InvalidPlan {
                    link: link.to_string(),
                    reason: "degradation quality must be in [0,1] and bandwidth positive".into(),
                });
            }
        }
        if let Some(av) = &plan.availability {
            check_windows(&link, "availability", av)?;
        }
        let mut pl = PlannedLink { baseline, plan, contacts: Vec::new() };
        pl.build_contacts();
        self.links.insert(link, pl);
        Ok(())
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkKey> {
        self.links.keys()
    }

    pub fn has_link(&self, link: &LinkKey) -> bool {
        self.links.contains_key(link)
    }

    pub fn baseline(&self, link: &LinkKey) -> Result<LinkState, RadioError> {
        self.get(link).map(|l| l.baseline)
    }

    fn get(&self, link: &LinkKey) -> Result<&PlannedLink, RadioError> {
        self.links
            .get(link)
            .ok_or_else(|| RadioError::UnknownLink(link.to_string()))
    }

    /// Scripted state of `link` at `t`. Down links report quality 0.
    pub fn link_at(&self, link: &LinkKey, t: SimTime) -> Result<LinkState, RadioError> {
        Ok(self.get(link)?.state_at(t))
    }

    pub fn contacts(&self, link: &LinkKey) -> Result<&[Contact], RadioError> {
        Ok(&self.get(link)?.contacts)
    }

    /// The contact covering `t`, if the link is up then.
    pub fn contact_at(&self, link: &LinkKey, t: SimTime) -> Result<Option<Contact>, RadioError> {
        Ok(self
            .contacts(link)?
            .iter()
            .find(|c| c.start <= t && t < c.end)
            .copied())
    }

    pub fn neighbors<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = (&'a LinkKey, &'a NodeId)> + 'a {
        self.links
            .keys()
            .filter_map(move |k| k.other(node).map(|o| (k, o)))
    }

    /// Every time in `[0, until]` at which some contact begins.
    pub fn contact_starts(&self, until: SimTime) -> Vec<(SimTime, LinkKey)> {
        let mut out = Vec::new();
        for (k, l) in &self.links {
            for c in &l.contacts {
                if c.start <= until {
                    out.push((c.start, k.clone()));
                }
            }
        }
        out.sort();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConnectivityRegime {
    Poor,
    Moderate,
    High,
}

impl ConnectivityRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnectivityRegime::High => "HIGH",
            ConnectivityRegime::Moderate => "MODERATE",
            ConnectivityRegime::Poor => "POOR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "HIGH" => Some(ConnectivityRegime::High),
            "MODERATE" => Some(ConnectivityRegime::Moderate),
            "POOR" => Some(ConnectivityRegime::Poor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeThresholds {
    pub high_quality: f64,
    pub poor_quality: f64,
    pub high_bandwidth_bps: u64,
    pub poor_bandwidth_bps: u64,
    pub hysteresis: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            high_quality: 0.70,
            poor_quality: 0.30,
            high_bandwidth_bps: 1_000_000,
            poor_bandwidth_bps: 64_000,
            hysteresis: 0.05,
        }
    }
}

impl RegimeThresholds {
    /// Classification without hysteresis.
    pub fn raw(&self, quality: f64, bandwidth_bps: u64) -> ConnectivityRegime {
        if quality < self.poor_quality || bandwidth_bps < self.poor_bandwidth_bps {
            ConnectivityRegime::Poor
        } else if quality >= self.high_quality && bandwidth_bps >= self.high_bandwidth_bps {
            ConnectivityRegime::High
        } else {
            ConnectivityRegime::Moderate
        }
    }

    /// Leaving `prev` requires the quality to cross its boundary by the
    /// hysteresis margin; bandwidth thresholds apply without margin.
    pub fn classify(
        &self,
        quality: f64,
        bandwidth_bps: u64,
        prev: ConnectivityRegime,
    ) -> ConnectivityRegime {
        let h = self.hysteresis;
        let stay = match prev {
            ConnectivityRegime::High => {
                quality >= self.high_quality - h && bandwidth_bps >= self.high_bandwidth_bps
            }
            ConnectivityRegime::Moderate => {
                quality >= self.poor_quality - h
                    && bandwidth_bps >= self.poor_bandwidth_bps
                    && !(quality >= self.high_quality + h
                        && bandwidth_bps >= self.high_bandwidth_bps)
            }
            ConnectivityRegime::Poor => {
                quality < self.poor_quality + h || bandwidth_bps < self.poor_bandwidth_bps
            }
        };
        if stay {
            prev
        } else {
            self.raw(quality, bandwidth_bps)
        }
    }

    pub fn classify_link(&self, state: &LinkState, prev: ConnectivityRegime) -> ConnectivityRegime {
        if !state.up {
            return ConnectivityRegime::Poor;
        }
        self.classify(state.quality, state.bandwidth_bps, prev)
    }
}

/// Classification under the default thresholds.
pub fn classify_regime(quality: f64, bandwidth_bps: u64, prev: ConnectivityRegime) -> ConnectivityRegime {
    RegimeThresholds::default().classify(quality, bandwidth_bps, prev)
}

/// Traffic class, in dequeue order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Priority {
    Emergency,
    Operational,
    Bulk,
}

impl Priority {
    pub const ALL: [Priority; 3] = [Priority::Emergency, Priority::Operational, Priority::Bulk];

    pub fn index(self) -> usize {
        match self {
            Priority::Emergency => 0,
            Priority::Operational => 1,
            Priority::Bulk => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Priority::Emergency => "EMERGENCY",
            Priority::Operational => "OPERATIONAL",
            Priority::Bulk => "BULK",
        }
    }
}

/// Per-class fractions of a link's capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassShares {
    pub emergency: f64,
    pub operational: f64,
    pub bulk: f64,
}

impl ClassShares {
    pub fn new(emergency: f64, operational: f64, bulk: f64) -> Self {
        ClassShares { emergency, operational, bulk }
    }

    pub fn get(&self, class: Priority) -> f64 {
        match class {
            Priority::Emergency => self.emergency,
            Priority::Operational => self.operational,
            Priority::Bulk => self.bulk,
        }
    }

    pub fn sum(&self) -> f64 {
        self.emergency + self.operational + self.bulk
    }
}

impl Default for ClassShares {
    fn default() -> Self {
        ClassShares::new(0.2, 0.5, 0.3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub mtu: usize,
    /// Half-width of the uniform noise added to quality predictions.
    pub noise_amplitude: f64,
    /// Growth of the prediction interval per second of horizon.
    pub interval_growth_per_s: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            mtu: DEFAULT_MTU,
            noise_amplitude: 0.0,
            interval_growth_per_s: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityForecast {
    pub estimate: f64,
    pub interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxReceipt {
    pub depart: SimTime,
    /// Last bit leaves the sender.
    pub finish: SimTime,
    pub arrival: SimTime,
}

pub fn serialization_time(size_bytes: usize, rate_bps: f64) -> SimTime {
    if size_bytes == 0 {
        return SimTime::ZERO;
    }
    let us = (size_bytes as f64 * 8.0 * 1e6 / rate_bps).ceil();
    SimTime(us as u64)
}

/// Link model owned by one engine.
pub struct Radio {
    tiers: BTreeMap<NodeId, Tier>,
    plan: ContactPlan,
    config: RadioConfig,
    rng: ChaCha8Rng,
    busy: BTreeMap<(NodeId, NodeId, Option<Priority>), SimTime>,
    shares: BTreeMap<LinkKey, ClassShares>,
    steering: BTreeMap<LinkKey, f64>,
}

impl Radio {
    pub fn new(
        tiers: BTreeMap<NodeId, Tier>,
        plan: ContactPlan,
        config: RadioConfig,
        rng: ChaCha8Rng,
    ) -> Self {
        Radio {
            tiers,
            plan,
            config,
            rng,
            busy: BTreeMap::new(),
            shares: BTreeMap::new(),
            steering: BTreeMap::new(),
        }
    }

    pub fn plan(&self) -> &ContactPlan {
        &self.plan
    }

    pub fn config(&self) -> &RadioConfig {
        &self.config
    }

    pub fn tier(&self, node: &NodeId) -> Option<Tier> {
        self.tiers.get(node).copied()
    }

    pub fn is_earth_link(&self, link: &LinkKey) -> bool {
        self.tier(link.a()) == Some(Tier::Earth) || self.tier(link.b()) == Some(Tier::Earth)
    }

    /// Scripted state with the beam-steering bonus applied to bandwidth.
    pub fn link_state(&self, link: &LinkKey, t: SimTime) -> Result<LinkState, RadioError> {
        let mut s = self.plan.link_at(link, t)?;
        if let Some(bonus) = self.steering.get(link) {
            s.bandwidth_bps = (s.bandwidth_bps as f64 * bonus).round() as u64;
        }
        Ok(s)
    }

    pub fn set_class_shares(&mut self, link: LinkKey, shares: ClassShares) {
        self.shares.insert(link, shares);
    }

    pub fn class_shares(&self, link: &LinkKey) -> Option<ClassShares> {
        self.shares.get(link).copied()
    }

    /// Installs a bandwidth multiplier on `link`, replacing any previous one.
    pub fn steer(&mut self, link: LinkKey, multiplier: f64) {
        self.steering.insert(link, multiplier);
    }

    pub fn unsteer(&mut self, link: &LinkKey) {
        self.steering.remove(link);
    }

    pub fn steering(&self, link: &LinkKey) -> Option<f64> {
        self.steering.get(link).copied()
    }

    fn one_way_delay(&mut self, link: &LinkKey, state: &LinkState) -> SimTime {
        if self.is_earth_link(link) {
            SimTime(self.rng.random_range(EARTH_DELAY_MIN.0..=EARTH_DELAY_MAX.0))
        } else {
            state.one_way_delay
        }
    }

    /// Guaranteed rate for `class` on `link` in bits per second.
    pub fn class_rate(&self, link: &LinkKey, state: &LinkState, class: Priority) -> f64 {
        let share = self.shares.get(link).map_or(1.0, |s| s.get(class));
        state.bandwidth_bps as f64 * share
    }

    fn pipe_free(&self, src: &NodeId, dst: &NodeId, pipe: Option<Priority>) -> SimTime {
        self.busy
            .get(&(src.clone(), dst.clone(), pipe))
            .copied()
            .unwrap_or(SimTime::ZERO)
    }

    /// Earliest time a new `class` transmission from `src` to `dst` could start.
    pub fn next_free(&self, src: &NodeId, dst: &NodeId, class: Priority, t: SimTime) -> SimTime {
        let link = LinkKey::new(src.clone(), dst.clone());
        let pipe = self.shares.contains_key(&link).then_some(class);
        self.pipe_free(src, dst, pipe).max(t)
    }

    /// Pipes a `class` send departing at `depart` occupies, and their total
    /// share. Idle pipes lend their share; the EMERGENCY pipe lends only to
    /// EMERGENCY so borrowed capacity never delays emergency traffic.
    fn claim(&self, link: &LinkKey, src: &NodeId, dst: &NodeId, class: Priority, depart: SimTime) -> (Vec<Option<Priority>>, f64) {
        let Some(shares) = self.shares.get(link) else {
            return (vec![None], 1.0);
        };
        let mut pipes = vec![Some(class)];
        let mut share = shares.get(class);
        if share <= 0.0 {
            return (pipes, 0.0);
        }
        for other in Priority::ALL {
            if other == class || (other == Priority::Emergency && class != Priority::Emergency) {
                continue;
            }
            if self.pipe_free(src, dst, Some(other)) <= depart {
                pipes.push(Some(other));
                share += shares.get(other);
            }
        }
        (pipes, share)
    }

    /// When the last bit of a `class` send issued at `t` would leave `src`,
    /// without committing it.
    pub fn estimate_finish(
        &self,
        src: &NodeId,
        dst: &NodeId,
        size_bytes: usize,
        t: SimTime,
        class: Priority,
    ) -> Result<SimTime, RadioError> {
        let link = LinkKey::new(src.clone(), dst.clone());
        let depart = self.next_free(src, dst, class, t);
        let state = self.link_state(&link, depart)?;
        if !state.up {
            return Err(RadioError::LinkDown(link.to_string()));
        }
        let (_, share) = self.claim(&link, src, dst, class, depart);
        if share <= 0.0 {
            return Err(RadioError::NoClassCapacity { link: link.to_string(), class });
        }
        Ok(depart + serialization_time(size_bytes, state.bandwidth_bps as f64 * share))
    }

    /// Sends `size_bytes` at the operational class.
    pub fn transmit(
        &mut self,
        src: &NodeId,
        dst: &NodeId,
        size_bytes: usize,
        t: SimTime,
    ) -> Result<SimTime, RadioError> {
        self.transmit_class(src, dst, size_bytes, t, Priority::Operational)
            .map(|r| r.arrival)
    }

    /// Queues a transmission behind earlier sends in the same direction (and
    /// class, when shares are installed on the link).
    pub fn transmit_class(
        &mut self,
        src: &NodeId,
        dst: &NodeId,
        size_bytes: usize,
        t: SimTime,
        class: Priority,
    ) -> Result<TxReceipt, RadioError> {
        if size_bytes == 0 {
            return Err(RadioError::EmptyPayload);
        }
        if size_bytes > self.config.mtu {
            return Err(RadioError::PayloadExceedsMtu { size: size_bytes, mtu: self.config.mtu });
        }
        let link = LinkKey::new(src.clone(), dst.clone());
        if !self.link_state(&link, t)?.up {
            return Err(RadioError::LinkDown(link.to_string()));
        }
        let depart = self.next_free(src, dst, class, t);
        let state = self.link_state(&link, depart)?;
        if !state.up {
            return Err(RadioError::LinkDown(link.to_string()));
        }
        let (pipes, share) = self.claim(&link, src, dst, class, depart);
        if share <= 0.0 {
            return Err(RadioError::NoClassCapacity { link: link.to_string(), class });
        }
        let finish = depart + serialization_time(size_bytes, state.bandwidth_bps as f64 * share);
        for pipe in pipes {
            self.busy.insert((src.clone(), dst.clone(), pipe), finish);
        }
        let delay = self.one_way_delay(&link, &state);
        Ok(TxReceipt { depart, finish, arrival: finish + delay })
    }

    /// Zero-length probe: returns the one-way latency without occupying the link.
    pub fn probe(&mut self, src: &NodeId, dst: &NodeId, t: SimTime) -> Result<SimTime, RadioError> {
        let link = LinkKey::new(src.clone(), dst.clone());
        let state = self.link_state(&link, t)?;
        if !state.up {
            return Err(RadioError::LinkDown(link.to_string()));
        }
        Ok(self.one_way_delay(&link, &state))
    }

    /// Plan-derived quality at `t_future` plus uniform zero-mean noise.
    pub fn predict_quality(
        &mut self,
        link: &LinkKey,
        now: SimTime,
        t_future: SimTime,
    ) -> Result<QualityForecast, RadioError> {
        let truth = self.plan.link_at(link, t_future)?.quality;
        let a = self.config.noise_amplitude;
        let noise = if a > 0.0 { self.rng.random_range(-a..=a) } else { 0.0 };
        let horizon = t_future.saturating_sub(now).as_secs_f64();
        Ok(QualityForecast {
            estimate: (truth + noise).clamp(0.0, 1.0),
            interval: self.config.interval_growth_per_s * horizon,
        })
    }
}
