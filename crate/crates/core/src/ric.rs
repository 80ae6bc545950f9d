//! Control hierarchy: on-asset monitoring, regional spectrum and relay
//! policy, and the Earth-side digital twin fed by episodic updates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::DisseminationMode;
use crate::radio::{ClassShares, ContactPlan, LinkKey, NodeId};
use crate::simkernel::SimTime;

pub const DEFAULT_EMERGENCY_FLOOR: f64 = 0.6;
/// How far ahead relay selection looks.
pub const RELAY_LOOKAHEAD: SimTime = SimTime::from_secs(10);
/// Bandwidth bonus on a steered link.
pub const STEERING_BONUS: f64 = 1.2;
const SHARE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetrySample {
    pub node: NodeId,
    pub t: SimTime,
    pub radio_quality: f64,
    pub system_load: f64,
    pub agent_mode: DisseminationMode,
}

/// Telemetry for `node` at `t`. Quality is read from the serving link and is
/// 0 while that link is down or when the node has none.
pub fn sapp_monitor(
    plan: &ContactPlan,
    node: &NodeId,
    serving: Option<&LinkKey>,
    t: SimTime,
    system_load: f64,
    agent_mode: DisseminationMode,
) -> TelemetrySample {
    let radio_quality = serving
        .and_then(|l| plan.link_at(l, t).ok())
        .map_or(0.0, |s| s.quality);
    TelemetrySample {
        node: node.clone(),
        t,
        radio_quality,
        system_load: system_load.clamp(0.0, 1.0),
        agent_mode,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RicError {
    #[error("unknown incident {0}")]
    UnknownIncident(String),
    #[error("no relay candidates")]
    NoCandidates,
    #[error("invalid shares for {link}: {reason}")]
    InvalidShares { link: String, reason: String },
}

/// Raises EMERGENCY to at least `floor` and splits the remainder between
/// OPERATIONAL and BULK in their prior proportion.
pub fn reallocate_shares(prior: ClassShares, floor: f64) -> ClassShares {
    if prior.emergency >= floor {
        return prior;
    }
    let rest = 1.0 - floor;
    let ob = prior.operational + prior.bulk;
    let (o, b) = if ob > 0.0 {
        (rest * prior.operational / ob, rest * prior.bulk / ob)
    } else {
        (rest / 2.0, rest / 2.0)
    };
    ClassShares::new(floor, o, b)
}

pub fn validate_shares(link: &LinkKey, s: &ClassShares) -> Result<(), RicError> {
    let parts = [s.emergency, s.operational, s.bulk];
    if parts.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(RicError::InvalidShares { link: link.to_string(), reason: "negative or non-finite".into() });
    }
    if (s.sum() - 1.0).abs() > SHARE_EPS {
        return Err(RicError::InvalidShares { link: link.to_string(), reason: format!("sum {}", s.sum()) });
    }
    Ok(())
}

/// Argmax of estimated quality; equal estimates go to the smaller name.
pub fn nearrt_relay_switch(candidates: &[(NodeId, f64)]) -> Result<NodeId, RicError> {
    candidates
        .iter()
        .min_by(|(na, qa), (nb, qb)| qb.total_cmp(qa).then_with(|| na.cmp(nb)))
        .map(|(n, _)| n.clone())
        .ok_or(RicError::NoCandidates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyChange {
    pub link: LinkKey,
    pub shares: ClassShares,
    pub incident_active: bool,
}

/// Per-link class shares plus the incidents that pin an emergency floor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPolicy {
    shares: BTreeMap<LinkKey, ClassShares>,
    baseline: ClassShares,
    pub emergency_floor: f64,
    incidents: BTreeMap<String, BTreeSet<LinkKey>>,
}

impl SpectrumPolicy {
    pub fn new(baseline: ClassShares, emergency_floor: f64) -> Self {
        SpectrumPolicy { shares: BTreeMap::new(), baseline, emergency_floor, incidents: BTreeMap::new() }
    }

    pub fn shares(&self, link: &LinkKey) -> ClassShares {
        self.shares.get(link).copied().unwrap_or(self.baseline)
    }

    pub fn baseline(&self) -> ClassShares {
        self.baseline
    }

    pub fn is_active(&self, incident: &str) -> bool {
        self.incidents.contains_key(incident)
    }

    pub fn incidents(&self) -> impl Iterator<Item = &String> {
        self.incidents.keys()
    }

    /// True while some active incident covers `link`.
    pub fn pinned(&self, link: &LinkKey) -> bool {
        self.incidents.values().any(|ls| ls.contains(link))
    }

    /// Starts tracking `link`. A link already covered by an incident gets the
    /// floor at once.
    pub fn install(&mut self, link: LinkKey) -> PolicyChange {
        let pinned = self.pinned(&link);
        let mut shares = self.shares(&link);
        if pinned {
            shares = reallocate_shares(shares, self.emergency_floor);
        }
        self.shares.insert(link.clone(), shares);
        PolicyChange { incident_active: pinned, link, shares }
    }

    pub fn open_incident(&mut self, id: impl Into<String>, links: impl IntoIterator<Item = LinkKey>) {
        self.incidents.entry(id.into()).or_default().extend(links);
    }

    pub fn close_incident(&mut self, id: &str) -> bool {
        self.incidents.remove(id).is_some()
    }

    /// Applies the emergency floor on `links` for an active incident and
    /// records them as affected.
    pub fn nearrt_reallocate(
        &mut self,
        incident: &str,
        links: &[LinkKey],
    ) -> Result<Vec<PolicyChange>, RicError> {
        let affected = self
            .incidents
            .get_mut(incident)
            .ok_or_else(|| RicError::UnknownIncident(incident.to_owned()))?;
        affected.extend(links.iter().cloned());
        let mut out = Vec::new();
        for link in links {
            let next = reallocate_shares(self.shares(link), self.emergency_floor);
            self.shares.insert(link.clone(), next);
            out.push(PolicyChange { link: link.clone(), shares: next, incident_active: true });
        }
        Ok(out)
    }

    /// Replaces the long-term baseline on every installed link. Links pinned by
    /// an active incident keep their emergency floor.
    pub fn apply_baseline(&mut self, baseline: ClassShares) -> Vec<PolicyChange> {
        self.baseline = baseline;
        let links: Vec<LinkKey> = self.shares.keys().cloned().collect();
        let mut out = Vec::new();
        for link in links {
            let pinned = self.pinned(&link);
            let next = if pinned { reallocate_shares(baseline, self.emergency_floor) } else { baseline };
            self.shares.insert(link.clone(), next);
            out.push(PolicyChange { link, shares: next, incident_active: pinned });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwinEntry {
    pub sample: TelemetrySample,
    pub received_at: SimTime,
}

impl TwinEntry {
    pub fn staleness(&self, now: SimTime) -> SimTime {
        now.saturating_sub(self.sample.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TwinDelta {
    pub updated: usize,
    pub ignored: usize,
    pub max_staleness: SimTime,
}

/// Earth-side replica built only from delivered reports.
#[derive(Debug, Clone, Default)]
pub struct TwinState {
    entries: BTreeMap<NodeId, TwinEntry>,
    topology: BTreeSet<LinkKey>,
    policy_version: u64,
}

impl TwinState {
    pub fn new(topology: impl IntoIterator<Item = LinkKey>) -> Self {
        TwinState { topology: topology.into_iter().collect(), ..Default::default() }
    }

    pub fn entry(&self, node: &NodeId) -> Option<&TwinEntry> {
        self.entries.get(node)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&NodeId, &TwinEntry)> {
        self.entries.iter()
    }

    pub fn topology(&self) -> &BTreeSet<LinkKey> {
        &self.topology
    }

    pub fn policy_version(&self) -> u64 {
        self.policy_version
    }

    /// Issues the next policy version.
    pub fn next_policy_version(&mut self) -> u64 {
        self.policy_version += 1;
        self.policy_version
    }

    /// Keeps, per node, the newest sample seen. Older or equal stamps are
    /// ignored so the twin never moves backwards.
    pub fn nonrt_sync(&mut self, samples: &[TelemetrySample], received_at: SimTime) -> TwinDelta {
        let mut delta = TwinDelta::default();
        for s in samples {
            if s.t > received_at {
                delta.ignored += 1;
                continue;
            }
            let newer = self.entries.get(&s.node).is_none_or(|e| s.t > e.sample.t);
            if newer {
                delta.updated += 1;
                delta.max_staleness = delta.max_staleness.max(received_at - s.t);
                self.entries.insert(s.node.clone(), TwinEntry { sample: s.clone(), received_at });
            } else {
                delta.ignored += 1;
            }
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{LinkPlan, LinkState, Window};

    fn close(a: ClassShares, b: (f64, f64, f64)) -> bool {
        (a.emergency - b.0).abs() < 1e-12 && (a.operational - b.1).abs() < 1e-12 && (a.bulk - b.2).abs() < 1e-12
    }

    #[test]
    fn reallocation_examples() {
        assert!(close(reallocate_shares(ClassShares::new(0.2, 0.5, 0.3), 0.6), (0.6, 0.25, 0.15)));
        assert!(close(reallocate_shares(ClassShares::new(0.7, 0.2, 0.1), 0.6), (0.7, 0.2, 0.1)));
        assert!(close(reallocate_shares(ClassShares::new(0.0, 0.0, 0.0), 0.6), (0.6, 0.2, 0.2)));
        let s = reallocate_shares(ClassShares::new(0.2, 0.5, 0.3), 0.6);
        assert!((s.emergency * 10e6 - 6e6).abs() < 1e-6);
    }

    #[test]
    fn reallocate_needs_active_incident() {
        let mut p = SpectrumPolicy::new(ClassShares::default(), DEFAULT_EMERGENCY_FLOOR);
        let l = LinkKey::new("a", "b");
        assert_eq!(p.nearrt_reallocate("x", std::slice::from_ref(&l)), Err(RicError::UnknownIncident("x".into())));
        p.open_incident("x", []);
        let ch = p.nearrt_reallocate("x", std::slice::from_ref(&l)).unwrap();
        assert!(close(ch[0].shares, (0.6, 0.25, 0.15)));
        assert!(p.pinned(&l));
    }

    #[test]
    fn baseline_keeps_floor_on_pinned_links() {
        let mut p = SpectrumPolicy::new(ClassShares::default(), 0.6);
        let (l1, l2) = (LinkKey::new("a", "b"), LinkKey::new("b", "c"));
        p.install(l1.clone());
        p.install(l2.clone());
        p.open_incident("x", [l1.clone()]);
        p.nearrt_reallocate("x", std::slice::from_ref(&l1)).unwrap();
        let ch = p.apply_baseline(ClassShares::new(0.1, 0.6, 0.3));
        let by: BTreeMap<_, _> = ch.into_iter().map(|c| (c.link.clone(), c)).collect();
        assert!(by[&l1].shares.emergency >= 0.6 && by[&l1].incident_active);
        assert!(close(by[&l2].shares, (0.1, 0.6, 0.3)));
        for c in by.values() {
            validate_shares(&c.link, &c.shares).unwrap();
        }
    }

    #[test]
    fn relay_switch_argmax_and_ties() {
        assert_eq!(nearrt_relay_switch(&[]), Err(RicError::NoCandidates));
        assert_eq!(nearrt_relay_switch(&[("x".into(), 0.1)]).unwrap(), NodeId::from("x"));
        assert_eq!(nearrt_relay_switch(&[("a".into(), 0.4), ("b".into(), 0.9)]).unwrap(), NodeId::from("b"));
        assert_eq!(nearrt_relay_switch(&[("d".into(), 0.5), ("c".into(), 0.5)]).unwrap(), NodeId::from("c"));
    }

    #[test]
    fn sapp_reads_serving_link() {
        let mut plan = ContactPlan::new();
        let l = LinkKey::new("r", "base");
        let st = LinkState { up: true, bandwidth_bps: 1_000_000, one_way_delay: SimTime::ZERO, quality: 0.8 };
        let occl = LinkPlan {
            occlusions: vec![Window::new(SimTime::from_secs(10), SimTime::from_secs(20))],
            ..Default::default()
        };
        plan.add_link(l.clone(), st, occl).unwrap();
        let n = NodeId::from("r");
        let m = DisseminationMode::PushRealtime;
        assert_eq!(sapp_monitor(&plan, &n, Some(&l), SimTime::ZERO, 0.1, m).radio_quality, 0.8);
        assert_eq!(sapp_monitor(&plan, &n, Some(&l), SimTime::from_secs(12), 0.1, m).radio_quality, 0.0);
        assert_eq!(sapp_monitor(&plan, &n, None, SimTime::ZERO, 0.1, m).radio_quality, 0.0);
    }

    #[test]
    fn twin_only_moves_forward() {
        let mut twin = TwinState::default();
        let s = |t: u64| TelemetrySample {
            node: "r".into(),
            t: SimTime::from_secs(t),
            radio_quality: 0.5,
            system_load: 0.2,
            agent_mode: DisseminationMode::PullCached,
        };
        assert_eq!(twin.nonrt_sync(&[], SimTime::from_secs(5)), TwinDelta::default());
        let d = twin.nonrt_sync(&[s(10)], SimTime::from_micros(10_900_000));
        assert_eq!(d.updated, 1);
        assert!(d.max_staleness >= SimTime::from_millis(900));
        let d = twin.nonrt_sync(&[s(8)], SimTime::from_secs(20));
        assert_eq!((d.updated, d.ignored), (0, 1));
        assert_eq!(twin.entry(&"r".into()).unwrap().sample.t, SimTime::from_secs(10));
    }
}
