mod support {
    pub mod trajectories;
}

use std::collections::BTreeMap;

use lunarnet::radio::*;
use lunarnet::simkernel::{RngSeed, SimTime};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::trajectories::{trajectory, transitions_per_episode};

const REGIMES: [ConnectivityRegime; 3] = [ConnectivityRegime::Poor, ConnectivityRegime::Moderate, ConnectivityRegime::High];

fn rank(r: ConnectivityRegime) -> u8 {
    match r {
        ConnectivityRegime::Poor => 0,
        ConnectivityRegime::Moderate => 1,
        ConnectivityRegime::High => 2,
    }
}

fn one_link(bw: u64, tier_b: Tier) -> Radio {
    let mut plan = ContactPlan::new();
    let st = LinkState { up: true, bandwidth_bps: bw, one_way_delay: SimTime::from_millis(5), quality: 0.9 };
    plan.add_link(LinkKey::new("a", "b"), st, LinkPlan::default()).unwrap();
    let tiers = BTreeMap::from([(NodeId::from("a"), Tier::Base), (NodeId::from("b"), tier_b)]);
    Radio::new(tiers, plan, RadioConfig::default(), RngSeed(5).component_rng("radio"))
}

fn priority(i: u8) -> Priority {
    [Priority::Emergency, Priority::Operational, Priority::Bulk][usize::from(i % 3)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn classification_is_monotone(
        q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0,
        b1 in 0u64..3_000_000, b2 in 0u64..3_000_000,
        p in 0usize..3,
    ) {
        let th = RegimeThresholds::default();
        let prev = REGIMES[p];
        let (lo_q, hi_q) = (q1.min(q2), q1.max(q2));
        let (lo_b, hi_b) = (b1.min(b2), b1.max(b2));
        prop_assert!(rank(th.classify(lo_q, lo_b, prev)) <= rank(th.classify(hi_q, hi_b, prev)));
        prop_assert!(rank(th.raw(lo_q, lo_b)) <= rank(th.raw(hi_q, hi_b)));
    }

    #[test]
    fn small_oscillations_do_not_chatter(seed in any::<u64>(), p in 0usize..3) {
        let th = RegimeThresholds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = trajectory(&mut rng, &th);
        let counts = transitions_per_episode(&th, 10_000_000, REGIMES[p], &eps);
        prop_assert!(counts.iter().all(|&c| c <= 1), "{:?}", counts);
    }

    #[test]
    fn link_never_carries_more_than_its_bandwidth(
        sends in proptest::collection::vec((0u64..2_000_000, 1usize..20_000, 0u8..3), 1..40),
        e in 0.05f64..0.9,
        with_shares in any::<bool>(),
    ) {
        let bw = 1_000_000u64;
        let mut radio = one_link(bw, Tier::Rover);
        if with_shares {
            let o = (1.0 - e) / 2.0;
            radio.set_class_shares(LinkKey::new("a", "b"), ClassShares::new(e, o, 1.0 - e - o));
        }
        let mut sends = sends;
        sends.sort_by_key(|s| s.0);
        let mut txs = Vec::new();
        for (t, size, c) in sends {
            let rx = radio.transmit_class(&"a".into(), &"b".into(), size, SimTime(t), priority(c)).unwrap();
            prop_assert!(rx.depart >= SimTime(t) && rx.finish >= rx.depart);
            txs.push((rx.depart, rx.finish, size));
        }
        // Any interval fully containing a set of transmissions carried them all.
        for &(a, _, _) in &txs {
            for &(_, b, _) in &txs {
                if b <= a {
                    continue;
                }
                let bytes: usize = txs.iter().filter(|x| x.0 >= a && x.1 <= b).map(|x| x.2).sum();
                let cap = bw as f64 * (b - a).as_secs_f64() / 8.0;
                prop_assert!(bytes as f64 <= cap + 1e-6, "{} bytes in {:?}..{:?} (cap {})", bytes, a, b, cap);
            }
        }
    }

    #[test]
    fn earth_round_trip_stays_in_band(t in 0u64..10_000_000_000, n in 1usize..20) {
        let mut radio = one_link(2_000_000, Tier::Earth);
        for i in 0..n {
            let at = SimTime(t + i as u64 * 1_000);
            let out = radio.probe(&"a".into(), &"b".into(), at).unwrap();
            let back = radio.probe(&"b".into(), &"a".into(), at + out).unwrap();
            let rtt = out + back;
            prop_assert!(rtt >= SimTime::from_millis(1_500) && rtt <= SimTime::from_millis(2_000), "{:?}", rtt);
        }
    }
}

#[test]
fn occlusion_windows_are_half_open() {
    let mut plan = ContactPlan::new();
    let st = LinkState { up: true, bandwidth_bps: 1, one_way_delay: SimTime::ZERO, quality: 1.0 };
    let w = Window::new(SimTime::from_secs(10), SimTime::from_secs(20));
    plan.add_link(LinkKey::new("a", "b"), st, LinkPlan { occlusions: vec![w], ..Default::default() }).unwrap();
    let up = |s: u64| plan.link_at(&LinkKey::new("a", "b"), SimTime::from_secs(s)).unwrap().up;
    assert!(up(9) && !up(10) && !up(19) && up(20));
}
