//! Earliest-arrival contact-graph routing.
//!
//! Label-setting search where a node's label is the earliest time a bundle
//! can be held there. Relaxing a link scans its contacts and takes the best
//! arrival among those the bundle can still finish transmitting in.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::radio::{serialization_time, ContactPlan, LinkKey, NodeId};
use crate::simkernel::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hop {
    pub from: NodeId,
    pub to: NodeId,
    pub depart: SimTime,
    pub arrival: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Journey {
    pub hops: Vec<Hop>,
}

impl Journey {
    pub fn arrival(&self) -> Option<SimTime> {
        self.hops.last().map(|h| h.arrival)
    }

    pub fn next_hop(&self) -> Option<&NodeId> {
        self.hops.first().map(|h| &h.to)
    }
}

/// Best arrival over `link` for a bundle ready at `ready`.
fn best_traversal(plan: &ContactPlan, link: &LinkKey, ready: SimTime, size: usize) -> Option<(SimTime, SimTime)> {
    let contacts = plan.contacts(link).ok()?;
    let mut best: Option<(SimTime, SimTime)> = None;
    for c in contacts.iter().filter(|c| c.end > ready) {
        let depart = ready.max(c.start);
        let finish = depart + serialization_time(size, c.state.bandwidth_bps as f64);
        if finish > c.end {
            continue;
        }
        let arrival = finish + c.state.one_way_delay;
        if best.is_none_or(|(_, a)| arrival < a) {
            best = Some((depart, arrival));
        }
    }
    best
}

/// Earliest-arrival journey from `src` (holding the bundle at `t0`) to `dst`,
/// avoiding `excluded` nodes. A bundle already at its destination yields an
/// empty journey.
pub fn earliest_arrival(
    plan: &ContactPlan,
    src: &NodeId,
    dst: &NodeId,
    t0: SimTime,
    size: usize,
    excluded: &BTreeSet<NodeId>,
) -> Option<Journey> {
    if src == dst {
        return Some(Journey { hops: Vec::new() });
    }
    let mut best: BTreeMap<NodeId, SimTime> = BTreeMap::new();
    let mut parent: BTreeMap<NodeId, Hop> = BTreeMap::new();
    let mut settled: BTreeSet<NodeId> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    best.insert(src.clone(), t0);
    heap.push(Reverse((t0, src.clone())));

    while let Some(Reverse((t, u))) = heap.pop() {
        if !settled.insert(u.clone()) {
            continue;
        }
        if &u == dst {
            break;
        }
        for (link, v) in plan.neighbors(&u) {
            if excluded.contains(v) || settled.contains(v) {
                continue;
            }
            let Some((depart, arrival)) = best_traversal(plan, link, t, size) else {
                continue;
            };
            if best.get(v).is_none_or(|&b| arrival < b) {
                best.insert(v.clone(), arrival);
                parent.insert(
                    v.clone(),
                    Hop { from: u.clone(), to: v.clone(), depart, arrival },
                );
                heap.push(Reverse((arrival, v.clone())));
            }
        }
    }

    if !settled.contains(dst) {
        return None;
    }
    let mut hops = Vec::new();
    let mut cur = dst.clone();
    while &cur != src {
        let hop = parent.get(&cur)?.clone();
        cur = hop.from.clone();
        hops.push(hop);
    }
    hops.reverse();
    Some(Journey { hops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{LinkPlan, LinkState, Window};

    fn up(bw: u64, delay_s: u64) -> LinkState {
        LinkState { up: true, bandwidth_bps: bw, one_way_delay: SimTime::from_secs(delay_s), quality: 1.0 }
    }

    fn avail(ws: &[(u64, u64)]) -> LinkPlan {
        LinkPlan {
            availability: Some(
                ws.iter()
                    .map(|&(a, b)| Window::new(SimTime::from_secs(a), SimTime::from_secs(b)))
                    .collect(),
            ),
            ..Default::default()
        }
    }

    #[test]
    fn routes_around_missing_link() {
        let mut plan = ContactPlan::new();
        plan.add_link(LinkKey::new("A", "B"), up(1_000_000, 1), avail(&[(0, 10)])).unwrap();
        plan.add_link(LinkKey::new("B", "C"), up(1_000_000, 1), avail(&[(20, 30)])).unwrap();
        plan.add_link(LinkKey::new("A", "C"), up(1_000_000, 1), avail(&[(1_000, 1_001)])).unwrap();
        let j = earliest_arrival(&plan, &"A".into(), &"C".into(), SimTime::ZERO, 125, &BTreeSet::new()).unwrap();
        assert_eq!(j.next_hop(), Some(&NodeId::from("B")));
        // 125 bytes at 1 Mbps = 1 ms.
        assert_eq!(j.arrival(), Some(SimTime::from_micros(21_001_000)));
    }

    #[test]
    fn respects_exclusions_and_window_ends() {
        let mut plan = ContactPlan::new();
        plan.add_link(LinkKey::new("A", "B"), up(8_000, 0), avail(&[(0, 1)])).unwrap();
        // 1,000 bytes take 1 s at 8 kbps: fits exactly in [0,1).
        assert!(earliest_arrival(&plan, &"A".into(), &"B".into(), SimTime::ZERO, 1_000, &BTreeSet::new()).is_some());
        assert!(earliest_arrival(&plan, &"A".into(), &"B".into(), SimTime::ZERO, 1_001, &BTreeSet::new()).is_none());
        let ex: BTreeSet<NodeId> = [NodeId::from("B")].into();
        assert!(earliest_arrival(&plan, &"A".into(), &"B".into(), SimTime::ZERO, 10, &ex).is_none());
    }
}
