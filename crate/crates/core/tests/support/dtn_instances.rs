//! Random small DTN instances paired with the oracle's view of them.
//!
//! Times sit on a 1 s grid and bundles are tiny, so queueing behind other
//! bundles shifts an arrival by well under a second and never changes which
//! contacts a bundle can make. That keeps per-bundle feasibility exact.

#![allow(dead_code)]

use std::collections::BTreeMap;

use lunarnet::dtn::standalone::{self, StandaloneReport};
use lunarnet::dtn::{Bundle, BundleId};
use lunarnet::radio::{ContactPlan, LinkKey, LinkPlan, LinkState, NodeId, Priority, Window};
use lunarnet::simkernel::{RngSeed, SimTime};
use rand::seq::IndexedRandom;
use rand::Rng;

use super::dtn_oracle::{earliest_arrival, OracleContact};

pub const HORIZON_S: u64 = 400;

#[derive(Debug, Clone)]
pub struct Instance {
    pub plan: ContactPlan,
    pub contacts: Vec<OracleContact>,
    pub bundles: Vec<Bundle>,
}

pub fn generate(rng: &mut impl Rng) -> Instance {
    let n_nodes = rng.random_range(2..=6);
    let nodes: Vec<NodeId> = (0..n_nodes).map(|i| NodeId::from(format!("n{i}").as_str())).collect();
    let mut pairs = Vec::new();
    for i in 0..n_nodes {
        for j in i + 1..n_nodes {
            pairs.push((i, j));
        }
    }
    let n_windows = rng.random_range(1..=12);
    let mut per_link: BTreeMap<(usize, usize), Vec<(u64, u64)>> = BTreeMap::new();
    for _ in 0..n_windows {
        let pair = *pairs.choose(rng).expect("at least one pair");
        let start = rng.random_range(0..HORIZON_S - 60);
        let end = start + rng.random_range(2..=60);
        let list = per_link.entry(pair).or_default();
        if list.iter().all(|&(s, e)| end < s || start > e) {
            list.push((start, end));
        }
    }
    let mut plan = ContactPlan::new();
    let mut contacts = Vec::new();
    for ((i, j), mut windows) in per_link {
        windows.sort_unstable();
        let bandwidth_bps = *[512_000u64, 1_000_000, 2_000_000].choose(rng).expect("non-empty");
        let delay = SimTime::from_secs(rng.random_range(0..=3));
        let state = LinkState { up: true, bandwidth_bps, one_way_delay: delay, quality: 1.0 };
        let ws: Vec<Window> =
            windows.iter().map(|&(s, e)| Window::new(SimTime::from_secs(s), SimTime::from_secs(e))).collect();
        for w in &ws {
            contacts.push(OracleContact {
                a: nodes[i].clone(),
                b: nodes[j].clone(),
                start: w.start,
                end: w.end,
                bandwidth_bps,
                delay,
            });
        }
        let link = LinkKey::new(nodes[i].clone(), nodes[j].clone());
        plan.add_link(link, state, LinkPlan { availability: Some(ws), ..Default::default() })
            .expect("fresh link");
    }
    let n_bundles = rng.random_range(1..=10);
    let bundles = (0..n_bundles)
        .map(|k| {
            let src = rng.random_range(0..n_nodes);
            let mut dst = rng.random_range(0..n_nodes - 1);
            if dst >= src {
                dst += 1;
            }
            Bundle {
                id: BundleId(k as u64 + 1),
                src: nodes[src].clone(),
                dst: nodes[dst].clone(),
                priority: *[Priority::Emergency, Priority::Operational, Priority::Bulk].choose(rng).expect("non-empty"),
                created_at: SimTime::from_secs(rng.random_range(0..200)),
                ttl: SimTime::from_secs(rng.random_range(10..=HORIZON_S)),
                custody: rng.random_bool(0.5),
                payload: vec![0xA5; rng.random_range(1..=100)],
            }
        })
        .collect();
    Instance { plan, contacts, bundles }
}

/// Oracle verdict per bundle: earliest arrival if it beats expiry.
pub fn oracle_view(inst: &Instance) -> BTreeMap<BundleId, Option<SimTime>> {
    inst.bundles
        .iter()
        .map(|b| {
            let t = earliest_arrival(&inst.contacts, &b.src, &b.dst, b.created_at, b.size())
                .filter(|&a| a < b.expires_at());
            (b.id, t)
        })
        .collect()
}

pub fn simulate(inst: &Instance) -> StandaloneReport {
    standalone::run(inst.plan.clone(), inst.bundles.clone(), Vec::new(), SimTime::from_secs(2 * HORIZON_S), RngSeed(0))
}

/// `Err` describes the first disagreement between simulation and oracle.
pub fn compare(inst: &Instance) -> Result<(), String> {
    let oracle = oracle_view(inst);
    let rep = simulate(inst);
    for (id, want) in &oracle {
        match (want, rep.delivered.get(id)) {
            (Some(o), Some(s)) if s >= o => {}
            (None, None) => {}
            (w, got) => return Err(format!("bundle {id:?}: oracle {w:?}, simulated {got:?}\n{inst:#?}")),
        }
    }
    Ok(())
}
