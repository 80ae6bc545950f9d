//! Random well-formed semantic messages covering every body kind.

#![allow(dead_code)]

use lunarnet::a2a::*;
use lunarnet::agent::DisseminationMode;
use lunarnet::radio::{ClassShares, ConnectivityRegime, NodeId, Priority};
use lunarnet::ric::TelemetrySample;
use lunarnet::simkernel::SimTime;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng as R;

fn real(rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random::<f64>(),
        1 => rng.random_range(-1e6..1e6),
        2 => f64::from(rng.random_range(-100i32..100)),
        _ => rng.random::<f64>() * 10f64.powi(rng.random_range(-300..300)),
    }
}

fn word(rng: &mut R, max_bytes: usize) -> String {
    const ALPHABET: &[char] = &['a', 'k', 'z', '0', '9', '-', '_', ' ', '"', '\\', '/', '\u{e9}', '\u{263e}', '\n'];
    let mut s = String::new();
    for _ in 0..rng.random_range(1..=max_bytes) {
        let c = *ALPHABET.choose(rng).expect("non-empty");
        if s.len() + c.len_utf8() > max_bytes {
            break;
        }
        s.push(c);
    }
    if s.is_empty() {
        s.push('x');
    }
    s
}

fn opt<T>(rng: &mut R, f: impl FnOnce(&mut R) -> T) -> Option<T> {
    if rng.random_bool(0.5) {
        Some(f(rng))
    } else {
        None
    }
}

fn regime(rng: &mut R) -> ConnectivityRegime {
    *[ConnectivityRegime::High, ConnectivityRegime::Moderate, ConnectivityRegime::Poor].choose(rng).expect("non-empty")
}

fn mode(rng: &mut R) -> DisseminationMode {
    *[DisseminationMode::PushRealtime, DisseminationMode::PullCached, DisseminationMode::AutonomousBulk]
        .choose(rng)
        .expect("non-empty")
}

fn shares(rng: &mut R) -> ClassShares {
    let e = rng.random_range(0.0..1.0);
    let o = rng.random_range(0.0..1.0 - e);
    ClassShares { emergency: e, operational: o, bulk: 1.0 - e - o }
}

pub fn alert_body(rng: &mut R) -> AlertBody {
    AlertBody {
        anomaly_class: *[AnomalyClass::BiometricDegraded, AnomalyClass::Unresponsive, AnomalyClass::EquipmentFault]
            .choose(rng)
            .expect("non-empty"),
        location: Location { x_m: real(rng), y_m: real(rng) },
        uncertainty_radius_m: real(rng).abs(),
        assistance_level: rng.random_range(1..=5),
    }
}

pub fn body(rng: &mut R) -> MessageBody {
    match rng.random_range(0..6) {
        0 => MessageBody::Alert(alert_body(rng)),
        1 => MessageBody::StateUpdate(StateBody {
            regime: regime(rng),
            mode: mode(rng).as_str().to_owned(),
            radio_quality: rng.random(),
            position: opt(rng, |g| [g.random_range(0..100), g.random_range(0..100)]),
            system_load: opt(rng, real),
            note: opt(rng, |g| word(g, 40)),
        }),
        2 => MessageBody::PolicyUpdate(PolicyBody {
            version: rng.random_range(0..1_000_000),
            class_shares: opt(rng, shares),
            approved: (0..rng.random_range(0..5)).map(|_| rng.random_range(0..100)).collect(),
            in_reply_to: opt(rng, |g| g.random_range(0..1u64 << 52)),
            rationale: opt(rng, |g| word(g, 60)),
        }),
        3 => MessageBody::Coordination(CoordinationBody {
            action: word(rng, 20),
            incident: opt(rng, |g| word(g, 20)),
            links: (0..rng.random_range(0..4)).map(|_| word(rng, 12)).collect(),
            priority: opt(rng, |g| {
                *[Priority::Emergency, Priority::Operational, Priority::Bulk].choose(g).expect("non-empty")
            }),
            detail: opt(rng, |g| word(g, 60)),
        }),
        4 => MessageBody::RelayOffer(RelayOfferBody {
            relay: NodeId::from(word(rng, 12).as_str()),
            capacity_bps: rng.random_range(0..100_000_000),
            predicted_quality: rng.random(),
            interval: real(rng).abs(),
            incident: opt(rng, |g| word(g, 20)),
            note: opt(rng, |g| word(g, 60)),
        }),
        _ => MessageBody::SituationReport(ReportBody {
            summary: word(rng, 80),
            incident: opt(rng, |g| word(g, 20)),
            telemetry: (0..rng.random_range(0..4))
                .map(|_| TelemetrySample {
                    node: NodeId::from(word(rng, 10).as_str()),
                    t: SimTime::from_micros(rng.random_range(0..1u64 << 40)),
                    radio_quality: rng.random(),
                    system_load: rng.random(),
                    agent_mode: mode(rng),
                })
                .collect(),
            pending_decisions: (0..rng.random_range(0..4)).map(|_| rng.random_range(0..100)).collect(),
            narrative: opt(rng, |g| word(g, 200)),
        }),
    }
}

/// A message that carries its full state vector, so every tier encodes.
pub fn message(rng: &mut R) -> SemanticMessage {
    message_with(rng, body)
}

pub fn message_with(rng: &mut R, body: impl FnOnce(&mut R) -> MessageBody) -> SemanticMessage {
    SemanticMessage {
        sender: NodeId::from(word(rng, 16).as_str()),
        seq: rng.random_range(0..1u64 << 40),
        confidence: rng.random(),
        tier: CompressionTier::Full,
        vector: VectorPayload::Full((0..VECTOR_LEN).map(|_| real(rng)).collect()),
        tags: (0..rng.random_range(0..4)).map(|_| word(rng, MAX_TAG_LEN)).collect(),
        body: body(rng),
    }
}

