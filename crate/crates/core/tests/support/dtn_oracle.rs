#![allow(dead_code)]

//! Exhaustive earliest-arrival oracle.
//!
//! Enumerates every node-simple journey over an explicit list of contacts and
//! keeps the earliest arrival. It shares nothing with the forwarding path: it
//! works from its own contact records rather than a contact plan.

use std::collections::BTreeSet;

use lunarnet::radio::NodeId;
use lunarnet::simkernel::SimTime;

/// One scheduled, bidirectional contact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleContact {
    pub a: NodeId,
    pub b: NodeId,
    pub start: SimTime,
    pub end: SimTime,
    pub bandwidth_bps: u64,
    pub delay: SimTime,
}

fn tx_micros(size: usize, bw: u64) -> u64 {
    if size == 0 {
        return 0;
    }
    // ceil(size * 8 * 1e6 / bw) in integers.
    let bits_us = size as u128 * 8 * 1_000_000;
    bits_us.div_ceil(bw as u128) as u64
}

/// Earliest arrival time at `dst` for a bundle of `size` bytes held at `src`
/// from `t0`, or `None` if no journey exists.
pub fn earliest_arrival(
    contacts: &[OracleContact],
    src: &NodeId,
    dst: &NodeId,
    t0: SimTime,
    size: usize,
) -> Option<SimTime> {
    if src == dst {
        return Some(t0);
    }
    let mut visited = BTreeSet::new();
    visited.insert(src.clone());
    let mut best = None;
    search(contacts, src, dst, t0, size, &mut visited, &mut best);
    best
}

fn search(
    contacts: &[OracleContact],
    at: &NodeId,
    dst: &NodeId,
    t: SimTime,
    size: usize,
    visited: &mut BTreeSet<NodeId>,
    best: &mut Option<SimTime>,
) {
    for c in contacts {
        let next = if &c.a == at {
            &c.b
        } else if &c.b == at {
            &c.a
        } else {
            continue;
        };
        if visited.contains(next) || c.end <= t {
            continue;
        }
        let depart = t.max(c.start);
        let finish = SimTime(depart.0 + tx_micros(size, c.bandwidth_bps));
        if finish > c.end {
            continue;
        }
        let arrival = SimTime(finish.0 + c.delay.0);
        if best.is_some_and(|b| arrival >= b) {
            continue;
        }
        if next == dst {
            *best = Some(arrival);
            continue;
        }
        visited.insert(next.clone());
        search(contacts, next, dst, arrival, size, visited, best);
        visited.remove(next);
    }
}

#[cfg(test)]
mod oracle_tests {
    use super::*;

    fn c(a: &str, b: &str, s: u64, e: u64, delay: u64) -> OracleContact {
        OracleContact {
            a: a.into(),
            b: b.into(),
            start: SimTime::from_secs(s),
            end: SimTime::from_secs(e),
            bandwidth_bps: 8_000,
            delay: SimTime::from_secs(delay),
        }
    }

    #[test]
    fn chain_via_middle_node() {
        let cs = vec![c("A", "B", 0, 10, 1), c("B", "C", 5, 10, 1)];
        // 1 byte at 8 kbps = 1 ms per hop.
        let t = earliest_arrival(&cs, &"A".into(), &"C".into(), SimTime::ZERO, 1).unwrap();
        assert_eq!(t, SimTime::from_micros(6_001_000));
    }

    #[test]
    fn no_journey_when_order_is_wrong() {
        let cs = vec![c("B", "C", 0, 5, 0), c("A", "B", 6, 10, 0)];
        assert_eq!(earliest_arrival(&cs, &"A".into(), &"C".into(), SimTime::ZERO, 1), None);
    }

    #[test]
    fn picks_faster_of_two_routes() {
        let cs = vec![c("A", "B", 0, 100, 10), c("A", "C", 0, 100, 1), c("C", "B", 0, 100, 1)];
        let t = earliest_arrival(&cs, &"A".into(), &"B".into(), SimTime::ZERO, 1).unwrap();
        assert_eq!(t, SimTime::from_micros(2_002_000));
    }
}
