//! Runs the bundle layer alone over a contact plan, without agents.

use std::collections::BTreeMap;

use serde_json::json;

use super::{ArrivalOutcome, Bundle, BundleId, DtnLayer, ForwardOutcome, Transmission, TtlDefaults};
use crate::radio::{ContactPlan, LinkKey, NodeId, Radio, RadioConfig, Tier};
use crate::simkernel::{Engine, RngSeed, SimTime, Trace};

#[derive(Debug, Clone)]
enum DtnEvent {
    Inject(Bundle),
    Contact(LinkKey),
    Arrival(Transmission),
    Halt(NodeId),
    Expiry,
}

impl DtnEvent {
    fn target(&self) -> String {
        match self {
            DtnEvent::Inject(b) => format!("node:{}", b.src),
            DtnEvent::Contact(l) => format!("link:{l}"),
            DtnEvent::Arrival(tx) => format!("node:{}", tx.to),
            DtnEvent::Halt(n) => format!("node:{n}"),
            DtnEvent::Expiry => "dtn".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StandaloneReport {
    pub delivered: BTreeMap<BundleId, SimTime>,
    pub expired: Vec<BundleId>,
    /// Instants at which some custodied bundle had no single custodian copy.
    pub custody_violations: Vec<(SimTime, Vec<BundleId>)>,
    pub trace: Trace,
}

fn record_forward(
    trace: &mut Trace,
    engine: &mut Engine<DtnEvent>,
    t: SimTime,
    seq: u64,
    out: ForwardOutcome,
    report: &mut StandaloneReport,
) {
    for b in out.expired {
        trace.emit(t, seq, "dtn", "bundle_expired", json!({"bundle": b.id.0}));
        report.expired.push(b.id);
    }
    for tx in out.sent {
        trace.emit(
            t,
            seq,
            "dtn",
            "bundle_forwarded",
            json!({"bundle": tx.bundle.id.0, "from": tx.from.0, "to": tx.to.0, "arrival": tx.arrival.0}),
        );
        let at = tx.arrival;
        let target = format!("node:{}", tx.to);
        engine
            .schedule(at, target.as_str(), DtnEvent::Arrival(tx))
            .expect("arrival is never before departure");
    }
}

/// Injects each bundle at its source at `created_at`, halts nodes at the
/// given times and runs until `until`.
pub fn run(
    plan: ContactPlan,
    bundles: Vec<Bundle>,
    halts: Vec<(SimTime, NodeId)>,
    until: SimTime,
    seed: RngSeed,
) -> StandaloneReport {
    let mut tiers = BTreeMap::new();
    for l in plan.links() {
        tiers.insert(l.a().clone(), Tier::Rover);
        tiers.insert(l.b().clone(), Tier::Rover);
    }
    let contact_starts = plan.contact_starts(until);
    let mut radio = Radio::new(tiers, plan, RadioConfig::default(), seed.component_rng("radio"));
    let mut dtn = DtnLayer::new(TtlDefaults::default());
    let mut engine: Engine<DtnEvent> = Engine::new();
    let mut report = StandaloneReport::default();
    let mut trace = Trace::new();

    for (t, link) in contact_starts {
        let ev = DtnEvent::Contact(link);
        engine.schedule(t, ev.target().as_str(), ev).expect("future");
    }
    for b in bundles {
        let ev = DtnEvent::Inject(b.clone());
        engine.schedule(b.created_at, ev.target().as_str(), ev).expect("future");
        engine.schedule(b.expires_at(), "dtn", DtnEvent::Expiry).expect("future");
    }
    for (t, n) in halts {
        let ev = DtnEvent::Halt(n);
        engine.schedule(t, ev.target().as_str(), ev).expect("future");
    }

    engine.run_until(until, |eng, ev| {
        let (t, seq) = (ev.at, ev.seq);
        match ev.payload {
            DtnEvent::Inject(b) => {
                let src = b.src.clone();
                trace.emit(t, seq, "dtn", "bundle_created", json!({"bundle": b.id.0, "src": src.0, "dst": b.dst.0}));
                match dtn.enqueue(&src, b.clone(), t) {
                    Ok(()) if dtn.delivered_at(b.id).is_some() => {
                        trace.emit(t, seq, "dtn", "bundle_delivered", json!({"bundle": b.id.0}));
                        report.delivered.insert(b.id, t);
                    }
                    Ok(()) => {
                        let out = dtn.forward_from(&mut radio, &src, t);
                        record_forward(&mut trace, eng, t, seq, out, &mut report);
                    }
                    Err(e) => log::debug!("inject {:?}: {e}", b.id),
                }
            }
            DtnEvent::Contact(link) => {
                let out = dtn.on_contact(&mut radio, &link, t);
                record_forward(&mut trace, eng, t, seq, out, &mut report);
            }
            DtnEvent::Arrival(tx) => match dtn.on_arrival(&tx, t) {
                ArrivalOutcome::Delivered(b) => {
                    trace.emit(t, seq, "dtn", "bundle_delivered", json!({"bundle": b.id.0, "at": tx.to.0}));
                    report.delivered.insert(b.id, t);
                }
                ArrivalOutcome::Stored { custody_transferred } => {
                    if custody_transferred {
                        trace.emit(
                            t,
                            seq,
                            "dtn",
                            "custody_transferred",
                            json!({"bundle": tx.bundle.id.0, "from": tx.from.0, "to": tx.to.0}),
                        );
                    }
                    let out = dtn.forward_from(&mut radio, &tx.to, t);
                    record_forward(&mut trace, eng, t, seq, out, &mut report);
                }
                ArrivalOutcome::Failed { sender_retains } => {
                    if sender_retains {
                        let out = dtn.forward_from(&mut radio, &tx.from, t);
                        record_forward(&mut trace, eng, t, seq, out, &mut report);
                    }
                }
                ArrivalOutcome::Expired(b) => {
                    trace.emit(t, seq, "dtn", "bundle_expired", json!({"bundle": b.id.0}));
                    report.expired.push(b.id);
                }
                ArrivalOutcome::Duplicate => {}
            },
            DtnEvent::Halt(n) => {
                dtn.halt(&n);
                trace.emit(t, seq, &format!("node:{n}"), "node_halted", json!({}));
                let nodes: Vec<NodeId> = radio.plan().links().flat_map(|l| [l.a().clone(), l.b().clone()]).collect();
                for node in nodes {
                    let out = dtn.forward_from(&mut radio, &node, t);
                    record_forward(&mut trace, eng, t, seq, out, &mut report);
                }
            }
            DtnEvent::Expiry => {
                for (_, b) in dtn.expire_all(t) {
                    trace.emit(t, seq, "dtn", "bundle_expired", json!({"bundle": b.id.0}));
                    report.expired.push(b.id);
                }
            }
        }
        let bad = dtn.custody_violations();
        if !bad.is_empty() {
            report.custody_violations.push((t, bad));
        }
    });
    report.trace = trace;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{LinkPlan, LinkState, Priority, Window};

    fn chain_plan() -> ContactPlan {
        let mut plan = ContactPlan::new();
        for (a, b, s, e) in [("A", "B", 0, 10), ("B", "C", 20, 30), ("A", "C", 500, 501)] {
            let st = LinkState { up: true, bandwidth_bps: 1_000_000, one_way_delay: SimTime::from_secs(1), quality: 1.0 };
            let w = Window::new(SimTime::from_secs(s), SimTime::from_secs(e));
            plan.add_link(LinkKey::new(a, b), st, LinkPlan { availability: Some(vec![w]), ..Default::default() })
                .unwrap();
        }
        plan
    }

    fn mk(id: u64, src: &str, dst: &str, ttl_s: u64, custody: bool) -> Bundle {
        Bundle {
            id: BundleId(id),
            src: src.into(),
            dst: dst.into(),
            priority: Priority::Operational,
            created_at: SimTime::ZERO,
            ttl: SimTime::from_secs(ttl_s),
            custody,
            payload: vec![0; 200],
        }
    }

    #[test]
    fn chain_routes_via_middle_node() {
        let rep = run(chain_plan(), vec![mk(1, "A", "C", 3_600, false)], vec![], SimTime::from_secs(1_000), RngSeed(1));
        // Waits at B for the 20 s contact: 200 B at 1 Mbps is 1.6 ms, plus 1 s delay.
        assert_eq!(rep.delivered[&BundleId(1)], SimTime::from_micros(21_001_600));
        let hops: Vec<_> = rep.trace.of_kind("bundle_forwarded").map(|r| r.str_field("to").unwrap().to_owned()).collect();
        assert_eq!(hops, vec!["B", "C"]);
    }

    #[test]
    fn expired_before_any_journey_is_never_delivered() {
        let rep = run(chain_plan(), vec![mk(1, "A", "C", 15, false)], vec![], SimTime::from_secs(1_000), RngSeed(1));
        assert!(rep.delivered.is_empty());
        assert_eq!(rep.expired, vec![BundleId(1)]);
    }

    #[test]
    fn crash_of_non_custodian_does_not_lose_bundle() {
        // Two routes A-B-D and A-C-D; B crashes while the bundle is in flight to it.
        let mut plan = ContactPlan::new();
        for (a, b, s, e) in [("A", "B", 0, 10), ("B", "D", 0, 100), ("A", "C", 5, 20), ("C", "D", 0, 100)] {
            let st = LinkState { up: true, bandwidth_bps: 1_000_000, one_way_delay: SimTime::from_secs(2), quality: 1.0 };
            let w = Window::new(SimTime::from_secs(s), SimTime::from_secs(e));
            plan.add_link(LinkKey::new(a, b), st, LinkPlan { availability: Some(vec![w]), ..Default::default() })
                .unwrap();
        }
        let rep = run(
            plan,
            vec![mk(7, "A", "D", 3_600, true)],
            vec![(SimTime::from_secs(1), NodeId::from("B"))],
            SimTime::from_secs(200),
            RngSeed(1),
        );
        assert!(rep.delivered.contains_key(&BundleId(7)));
        let via: Vec<_> = rep.trace.of_kind("bundle_forwarded").map(|r| r.str_field("to").unwrap().to_owned()).collect();
        assert_eq!(via, vec!["B", "C", "D"]);
    }
}
