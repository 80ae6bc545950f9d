//! Store-carry-forward bundle layer.
//!
//! Each node keeps the bundles it currently holds. Forwarding picks bundles
//! in `(priority, created_at, id)` order and sends each toward the first hop
//! of its earliest-arrival journey when that hop's contact is up and the
//! transmission still fits inside the contact. A bundle with custody stays
//! with its custodian until the next node has stored it; everything else is
//! handed off at transmission time.
//!
//! BULK bundles whose next hop is Earth are left for [`DtnLayer::episodic_sync`].

pub mod routing;
pub mod standalone;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{LinkKey, NodeId, Priority, Radio, RadioError, Tier};
use crate::simkernel::SimTime;

pub use routing::{earliest_arrival, Hop, Journey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BundleId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bundle {
    pub id: BundleId,
    pub src: NodeId,
    pub dst: NodeId,
    pub priority: Priority,
    pub created_at: SimTime,
    pub ttl: SimTime,
    pub custody: bool,
    pub payload: Vec<u8>,
}

impl Bundle {
    pub fn expires_at(&self) -> SimTime {
        self.created_at + self.ttl
    }

    pub fn is_expired(&self, t: SimTime) -> bool {
        t >= self.expires_at()
    }

    pub fn size(&self) -> usize {
        self.payload.len().max(1)
    }

    fn order_key(&self) -> (Priority, SimTime, BundleId) {
        (self.priority, self.created_at, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtlDefaults {
    pub emergency_s: u64,
    pub operational_s: u64,
    pub bulk_s: u64,
}

impl Default for TtlDefaults {
    fn default() -> Self {
        TtlDefaults { emergency_s: 3_600, operational_s: 6 * 3_600, bulk_s: 24 * 3_600 }
    }
}

impl TtlDefaults {
    pub fn for_priority(&self, p: Priority) -> SimTime {
        SimTime::from_secs(match p {
            Priority::Emergency => self.emergency_s,
            Priority::Operational => self.operational_s,
            Priority::Bulk => self.bulk_s,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DtnError {
    #[error("bundle {0:?} already expired")]
    Expired(BundleId),
    #[error("bundle {0:?} already seen at this node")]
    DuplicateId(BundleId),
    #[error("unknown bundle {0:?}")]
    UnknownBundle(BundleId),
    #[error("link {0} is down")]
    LinkDown(String),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

/// A bundle put on the air by the DTN layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub bundle: Bundle,
    pub from: NodeId,
    pub to: NodeId,
    pub depart: SimTime,
    pub arrival: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArrivalOutcome {
    Delivered(Bundle),
    /// Stored at the receiver, which should now try to forward it.
    Stored { custody_transferred: bool },
    /// Receiver halted; a custodied copy went back into the sender's queue.
    Failed { sender_retains: bool },
    Expired(Bundle),
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForwardOutcome {
    pub sent: Vec<Transmission>,
    pub expired: Vec<Bundle>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Held {
    bundle: Bundle,
    in_flight: bool,
}

#[derive(Debug, Default)]
struct NodeStore {
    held: BTreeMap<BundleId, Held>,
    seen: BTreeSet<BundleId>,
}

#[derive(Debug, Default)]
pub struct DtnLayer {
    stores: BTreeMap<NodeId, NodeStore>,
    custodians: BTreeMap<BundleId, NodeId>,
    halted: BTreeSet<NodeId>,
    delivered: BTreeMap<BundleId, SimTime>,
    next_id: u64,
    pub ttl: TtlDefaults,
}

impl DtnLayer {
    pub fn new(ttl: TtlDefaults) -> Self {
        DtnLayer { ttl, ..Default::default() }
    }

    pub fn next_bundle_id(&mut self) -> BundleId {
        let id = BundleId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Builds a bundle with the default TTL of its class.
    pub fn make_bundle(
        &mut self,
        src: NodeId,
        dst: NodeId,
        priority: Priority,
        created_at: SimTime,
        custody: bool,
        payload: Vec<u8>,
    ) -> Bundle {
        Bundle {
            id: self.next_bundle_id(),
            src,
            dst,
            priority,
            created_at,
            ttl: self.ttl.for_priority(priority),
            custody,
            payload,
        }
    }

    fn store(&mut self, node: &NodeId) -> &mut NodeStore {
        self.stores.entry(node.clone()).or_default()
    }

    pub fn holds(&self, node: &NodeId, id: BundleId) -> bool {
        self.stores.get(node).is_some_and(|s| s.held.contains_key(&id))
    }

    pub fn held_count(&self, node: &NodeId) -> usize {
        self.stores.get(node).map_or(0, |s| s.held.len())
    }

    pub fn held_ids(&self, node: &NodeId) -> Vec<BundleId> {
        self.stores.get(node).map_or_else(Vec::new, |s| s.held.keys().copied().collect())
    }

    pub fn custodian(&self, id: BundleId) -> Option<&NodeId> {
        self.custodians.get(&id)
    }

    pub fn custodian_count(&self, id: BundleId) -> usize {
        usize::from(self.custodians.contains_key(&id))
    }

    /// Custodied bundles held by more than one store, or by a store that is
    /// not their custodian. Empty whenever the layer is consistent.
    pub fn custody_violations(&self) -> Vec<BundleId> {
        let mut holders: BTreeMap<BundleId, Vec<&NodeId>> = BTreeMap::new();
        for (node, s) in &self.stores {
            for (id, h) in &s.held {
                if h.bundle.custody {
                    holders.entry(*id).or_default().push(node);
                }
            }
        }
        let mut bad: Vec<BundleId> = holders
            .into_iter()
            .filter(|(id, nodes)| nodes.len() > 1 || self.custodians.get(id) != Some(nodes[0]))
            .map(|(id, _)| id)
            .collect();
        bad.extend(self.custodians.iter().filter(|(id, n)| !self.holds(n, **id)).map(|(id, _)| *id));
        bad.sort_unstable();
        bad.dedup();
        bad
    }

    pub fn delivered_at(&self, id: BundleId) -> Option<SimTime> {
        self.delivered.get(&id).copied()
    }

    pub fn is_halted(&self, node: &NodeId) -> bool {
        self.halted.contains(node)
    }

    pub fn halted(&self) -> &BTreeSet<NodeId> {
        &self.halted
    }

    /// Bundles still held somewhere and not yet expired at `t`.
    pub fn pending(&self, t: SimTime) -> Vec<&Bundle> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in self.stores.values() {
            for h in s.held.values() {
                if !h.bundle.is_expired(t) && seen.insert(h.bundle.id) {
                    out.push(&h.bundle);
                }
            }
        }
        out
    }

    /// Accepts a bundle at `node`. A bundle already addressed to `node` is
    /// delivered on the spot.
    pub fn enqueue(&mut self, node: &NodeId, bundle: Bundle, now: SimTime) -> Result<(), DtnError> {
        if bundle.is_expired(now) {
            return Err(DtnError::Expired(bundle.id));
        }
        let id = bundle.id;
        let custody = bundle.custody;
        let store = self.store(node);
        if !store.seen.insert(id) {
            return Err(DtnError::DuplicateId(id));
        }
        if &bundle.dst == node {
            self.delivered.insert(id, now);
            return Ok(());
        }
        store.held.insert(id, Held { bundle, in_flight: false });
        if custody {
            self.custodians.insert(id, node.clone());
        }
        Ok(())
    }

    /// Moves custody of `id` from `from` to `to`, releasing `from`'s copy.
    pub fn custody_transfer(&mut self, id: BundleId, from: &NodeId, to: &NodeId) -> Result<(), DtnError> {
        if self.custodians.get(&id) != Some(from) || !self.holds(to, id) {
            return Err(DtnError::UnknownBundle(id));
        }
        if let Some(s) = self.stores.get_mut(from) {
            s.held.remove(&id);
        }
        self.custodians.insert(id, to.clone());
        Ok(())
    }

    /// Marks `node` as crashed and discards what it held.
    pub fn halt(&mut self, node: &NodeId) -> Vec<Bundle> {
        self.halted.insert(node.clone());
        let dropped: Vec<Bundle> = self
            .stores
            .get_mut(node)
            .map(|s| std::mem::take(&mut s.held).into_values().map(|h| h.bundle).collect())
            .unwrap_or_default();
        for b in &dropped {
            if self.custodians.get(&b.id) == Some(node) {
                self.custodians.remove(&b.id);
            }
        }
        dropped
    }

    fn drop_expired(&mut self, node: &NodeId, t: SimTime) -> Vec<Bundle> {
        let Some(store) = self.stores.get_mut(node) else {
            return Vec::new();
        };
        let ids: Vec<BundleId> = store
            .held
            .iter()
            .filter(|(_, h)| !h.in_flight && h.bundle.is_expired(t))
            .map(|(id, _)| *id)
            .collect();
        let mut out = Vec::new();
        for id in ids {
            if let Some(h) = store.held.remove(&id) {
                out.push(h.bundle);
            }
            if self.custodians.get(&id) == Some(node) {
                self.custodians.remove(&id);
            }
        }
        out
    }

    /// Drops every expired bundle in every store.
    pub fn expire_all(&mut self, t: SimTime) -> Vec<(NodeId, Bundle)> {
        let nodes: Vec<NodeId> = self.stores.keys().cloned().collect();
        let mut out = Vec::new();
        for n in nodes {
            for b in self.drop_expired(&n, t) {
                out.push((n.clone(), b));
            }
        }
        out
    }

    fn queued(&self, node: &NodeId) -> Vec<Bundle> {
        let mut v: Vec<Bundle> = self
            .stores
            .get(node)
            .map(|s| s.held.values().filter(|h| !h.in_flight).map(|h| h.bundle.clone()).collect())
            .unwrap_or_default();
        v.sort_by_key(Bundle::order_key);
        v
    }

    fn send(
        &mut self,
        radio: &mut Radio,
        node: &NodeId,
        next: &NodeId,
        bundle: &Bundle,
        t: SimTime,
    ) -> Result<Transmission, DtnError> {
        let rx = radio.transmit_class(node, next, bundle.size(), t, bundle.priority)?;
        let store = self.store(node);
        if bundle.custody {
            if let Some(h) = store.held.get_mut(&bundle.id) {
                h.in_flight = true;
            }
        } else {
            store.held.remove(&bundle.id);
        }
        Ok(Transmission {
            bundle: bundle.clone(),
            from: node.clone(),
            to: next.clone(),
            depart: rx.depart,
            arrival: rx.arrival,
        })
    }

    /// Forwards what `node` can send right now.
    pub fn forward_from(&mut self, radio: &mut Radio, node: &NodeId, t: SimTime) -> ForwardOutcome {
        let mut out = ForwardOutcome::default();
        if self.halted.contains(node) {
            return out;
        }
        out.expired = self.drop_expired(node, t);
        let mut exhausted: BTreeSet<NodeId> = BTreeSet::new();
        for bundle in self.queued(node) {
            let Some(journey) =
                earliest_arrival(radio.plan(), node, &bundle.dst, t, bundle.size(), &self.halted)
            else {
                continue;
            };
            if journey.arrival().is_none_or(|a| bundle.is_expired(a)) {
                continue;
            }
            let next = journey.next_hop().expect("non-empty journey").clone();
            if exhausted.contains(&next) {
                continue;
            }
            if bundle.priority == Priority::Bulk && radio.tier(&next) == Some(Tier::Earth) {
                continue;
            }
            let link = LinkKey::new(node.clone(), next.clone());
            let Ok(Some(contact)) = radio.plan().contact_at(&link, t) else {
                continue;
            };
            let fits = radio
                .estimate_finish(node, &next, bundle.size(), t, bundle.priority)
                .is_ok_and(|finish| finish <= contact.end);
            if !fits {
                // Window budget exhausted for this contact.
                exhausted.insert(next);
                continue;
            }
            match self.send(radio, node, &next, &bundle, t) {
                Ok(tx) => out.sent.push(tx),
                Err(e) => {
                    log::debug!("forward of {:?} from {node} failed: {e}", bundle.id);
                    exhausted.insert(next);
                }
            }
        }
        out
    }

    /// Contact start on `link`: both endpoints try to forward.
    pub fn on_contact(&mut self, radio: &mut Radio, link: &LinkKey, t: SimTime) -> ForwardOutcome {
        let mut out = self.forward_from(radio, link.a(), t);
        let other = self.forward_from(radio, link.b(), t);
        out.sent.extend(other.sent);
        out.expired.extend(other.expired);
        out
    }

    /// Processes a transmission reaching its receiver.
    pub fn on_arrival(&mut self, tx: &Transmission, t: SimTime) -> ArrivalOutcome {
        let id = tx.bundle.id;
        let custody = tx.bundle.custody;
        if self.halted.contains(&tx.to) {
            if custody && !self.halted.contains(&tx.from) {
                if let Some(h) = self.store(&tx.from).held.get_mut(&id) {
                    h.in_flight = false;
                    return ArrivalOutcome::Failed { sender_retains: true };
                }
            }
            return ArrivalOutcome::Failed { sender_retains: false };
        }
        if tx.bundle.is_expired(t) {
            self.release_sender(tx);
            return ArrivalOutcome::Expired(tx.bundle.clone());
        }
        if self.store(&tx.to).seen.contains(&id) {
            self.release_sender(tx);
            return ArrivalOutcome::Duplicate;
        }
        if tx.to == tx.bundle.dst {
            self.store(&tx.to).seen.insert(id);
            self.release_sender(tx);
            self.delivered.insert(id, t);
            return ArrivalOutcome::Delivered(tx.bundle.clone());
        }
        let store = self.store(&tx.to);
        store.seen.insert(id);
        store.held.insert(id, Held { bundle: tx.bundle.clone(), in_flight: false });
        let custody_transferred = custody
            && (self.custody_transfer(id, &tx.from, &tx.to).is_ok() || self.adopt_orphan(id, &tx.to));
        ArrivalOutcome::Stored { custody_transferred }
    }

    /// A custodian that crashed mid-flight leaves the in-flight copy as the
    /// only one; its receiver takes custody.
    fn adopt_orphan(&mut self, id: BundleId, to: &NodeId) -> bool {
        if self.custodians.contains_key(&id) {
            return false;
        }
        self.custodians.insert(id, to.clone());
        true
    }

    fn release_sender(&mut self, tx: &Transmission) {
        if tx.bundle.custody && self.custodians.get(&tx.bundle.id) == Some(&tx.from) {
            if let Some(s) = self.stores.get_mut(&tx.from) {
                s.held.remove(&tx.bundle.id);
            }
            self.custodians.remove(&tx.bundle.id);
        }
    }

    /// Flushes BULK bundles for `earth` held at `node`, oldest first, until
    /// the current contact's remaining capacity runs out.
    pub fn episodic_sync(
        &mut self,
        radio: &mut Radio,
        node: &NodeId,
        earth: &NodeId,
        t: SimTime,
    ) -> Result<Vec<Transmission>, DtnError> {
        let link = LinkKey::new(node.clone(), earth.clone());
        let contact = radio
            .plan()
            .contact_at(&link, t)?
            .ok_or_else(|| DtnError::LinkDown(link.to_string()))?;
        let mut sent = Vec::new();
        if self.halted.contains(node) {
            return Ok(sent);
        }
        self.drop_expired(node, t);
        for bundle in self.queued(node) {
            if bundle.priority != Priority::Bulk || &bundle.dst != earth {
                continue;
            }
            let fits = radio
                .estimate_finish(node, earth, bundle.size(), t, bundle.priority)
                .is_ok_and(|f| f <= contact.end);
            if !fits {
                break;
            }
            sent.push(self.send(radio, node, earth, &bundle, t)?);
        }
        Ok(sent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{ContactPlan, LinkPlan, LinkState, RadioConfig, Window};
    use crate::simkernel::RngSeed;

    fn state(bw: u64) -> LinkState {
        LinkState { up: true, bandwidth_bps: bw, one_way_delay: SimTime::from_millis(100), quality: 0.9 }
    }

    /// `(a, b, bandwidth, availability window in seconds)`.
    type LinkRow<'a> = (&'a str, &'a str, u64, Option<(u64, u64)>);

    fn radio(links: &[LinkRow], earth: Option<&str>) -> Radio {
        let mut plan = ContactPlan::new();
        let mut tiers = BTreeMap::new();
        for &(a, b, bw, win) in links {
            let lp = LinkPlan {
                availability: win.map(|(s, e)| vec![Window::new(SimTime::from_secs(s), SimTime::from_secs(e))]),
                ..Default::default()
            };
            let mut st = state(bw);
            if Some(a) == earth || Some(b) == earth {
                st.one_way_delay = SimTime::from_millis(875);
            }
            plan.add_link(LinkKey::new(a, b), st, lp).unwrap();
            for n in [a, b] {
                let tier = if Some(n) == earth { Tier::Earth } else { Tier::Rover };
                tiers.insert(NodeId::from(n), tier);
            }
        }
        Radio::new(tiers, plan, RadioConfig::default(), RngSeed(0).component_rng("radio"))
    }

    fn bundle(dtn: &mut DtnLayer, src: &str, dst: &str, p: Priority, size: usize, t: u64) -> Bundle {
        dtn.make_bundle(src.into(), dst.into(), p, SimTime::from_secs(t), false, vec![0; size])
    }

    #[test]
    fn enqueue_rules() {
        let mut dtn = DtnLayer::new(TtlDefaults::default());
        let b = bundle(&mut dtn, "A", "C", Priority::Bulk, 10, 0);
        dtn.enqueue(&"A".into(), b.clone(), SimTime::ZERO).unwrap();
        assert_eq!(dtn.enqueue(&"A".into(), b.clone(), SimTime::ZERO), Err(DtnError::DuplicateId(b.id)));
        assert_eq!(dtn.held_count(&"A".into()), 1);
        let mut old = bundle(&mut dtn, "A", "C", Priority::Bulk, 10, 0);
        old.ttl = SimTime::from_secs(5);
        assert_eq!(dtn.enqueue(&"A".into(), old.clone(), SimTime::from_secs(6)), Err(DtnError::Expired(old.id)));
    }

    #[test]
    fn priority_wins_when_window_fits_one() {
        // 8 kbps, window [0,1): exactly one 1,000-byte bundle fits.
        let mut r = radio(&[("A", "B", 8_000, Some((0, 1)))], None);
        let mut dtn = DtnLayer::new(TtlDefaults::default());
        let bulk = bundle(&mut dtn, "A", "B", Priority::Bulk, 1_000, 0);
        let emer = bundle(&mut dtn, "A", "B", Priority::Emergency, 1_000, 0);
        dtn.enqueue(&"A".into(), bulk, SimTime::ZERO).unwrap();
        dtn.enqueue(&"A".into(), emer.clone(), SimTime::ZERO).unwrap();
        let out = dtn.on_contact(&mut r, &LinkKey::new("A", "B"), SimTime::ZERO);
        assert_eq!(out.sent.len(), 1);
        assert_eq!(out.sent[0].bundle.id, emer.id);
    }

    #[test]
    fn custody_hand_off_keeps_one_custodian() {
        let mut r = radio(&[("A", "B", 1_000_000, None), ("B", "C", 1_000_000, None)], None);
        let mut dtn = DtnLayer::new(TtlDefaults::default());
        let b = dtn.make_bundle("A".into(), "C".into(), Priority::Operational, SimTime::ZERO, true, vec![1; 100]);
        dtn.enqueue(&"A".into(), b.clone(), SimTime::ZERO).unwrap();
        let out = dtn.forward_from(&mut r, &"A".into(), SimTime::ZERO);
        assert_eq!(out.sent.len(), 1);
        assert_eq!(dtn.custodian(b.id), Some(&NodeId::from("A")));
        assert_eq!(dtn.custodian_count(b.id), 1);
        let tx = &out.sent[0];
        assert_eq!(dtn.on_arrival(tx, tx.arrival), ArrivalOutcome::Stored { custody_transferred: true });
        assert_eq!(dtn.custodian(b.id), Some(&NodeId::from("B")));
        assert!(!dtn.holds(&"A".into(), b.id));
        assert_eq!(
            dtn.custody_transfer(BundleId(999), &"A".into(), &"B".into()),
            Err(DtnError::UnknownBundle(BundleId(999)))
        );
    }

    #[test]
    fn unreachable_bundle_is_held() {
        let mut r = radio(&[("A", "B", 1_000_000, Some((0, 5)))], None);
        let mut dtn = DtnLayer::new(TtlDefaults::default());
        let b = bundle(&mut dtn, "A", "Z", Priority::Operational, 10, 0);
        dtn.enqueue(&"A".into(), b, SimTime::ZERO).unwrap();
        // Z exists nowhere in the plan.
        assert!(dtn.forward_from(&mut r, &"A".into(), SimTime::ZERO).sent.is_empty());
        assert_eq!(dtn.held_count(&"A".into()), 1);
    }

    #[test]
    fn episodic_sync_respects_budget() {
        // 8 kbps, window [0,3): three 1,000-byte bundles fit, five are queued.
        let mut r = radio(&[("base", "earth", 8_000, Some((0, 3)))], Some("earth"));
        let mut dtn = DtnLayer::new(TtlDefaults::default());
        let mut ids = Vec::new();
        for _ in 0..5 {
            let b = bundle(&mut dtn, "base", "earth", Priority::Bulk, 1_000, 0);
            ids.push(b.id);
            dtn.enqueue(&"base".into(), b, SimTime::ZERO).unwrap();
        }
        // Regular forwarding leaves BULK-to-Earth alone.
        assert!(dtn.forward_from(&mut r, &"base".into(), SimTime::ZERO).sent.is_empty());
        let sent = dtn.episodic_sync(&mut r, &"base".into(), &"earth".into(), SimTime::ZERO).unwrap();
        let sent_ids: Vec<BundleId> = sent.iter().map(|t| t.bundle.id).collect();
        assert_eq!(sent_ids, ids[..3].to_vec());
        assert_eq!(dtn.held_count(&"base".into()), 2);
        assert!(matches!(
            dtn.episodic_sync(&mut r, &"base".into(), &"earth".into(), SimTime::from_secs(10)),
            Err(DtnError::LinkDown(_))
        ));
    }

    #[test]
    fn episodic_sync_empty_is_zero() {
        let mut r = radio(&[("base", "earth", 8_000, None)], Some("earth"));
        let mut dtn = DtnLayer::new(TtlDefaults::default());
        assert!(dtn.episodic_sync(&mut r, &"base".into(), &"earth".into(), SimTime::ZERO).unwrap().is_empty());
    }

    #[test]
    fn halted_receiver_returns_custody_copy() {
        let mut r = radio(&[("A", "B", 1_000_000, None), ("B", "C", 1_000_000, None)], None);
        let mut dtn = DtnLayer::new(TtlDefaults::default());
        let b = dtn.make_bundle("A".into(), "C".into(), Priority::Operational, SimTime::ZERO, true, vec![1; 100]);
        dtn.enqueue(&"A".into(), b.clone(), SimTime::ZERO).unwrap();
        let tx = dtn.forward_from(&mut r, &"A".into(), SimTime::ZERO).sent.remove(0);
        dtn.halt(&"B".into());
        assert_eq!(dtn.on_arrival(&tx, tx.arrival), ArrivalOutcome::Failed { sender_retains: true });
        assert!(dtn.holds(&"A".into(), b.id));
        assert_eq!(dtn.custodian(b.id), Some(&NodeId::from("A")));
    }
}
