//! Trace audits for the scripted EVA incident.
//!
//! Each check reads only the trace plus the scenario's script, so it can be
//! run against a trace file long after the run.

use super::{EventSpec, ScenarioSpec};
use crate::agent::Role;
use crate::simkernel::{SimTime, Trace, TraceRecord};

/// Reallocation must beat the fastest possible Earth reply.
pub const REALLOCATION_BOUND: SimTime = SimTime::from_millis(1_500);

#[derive(Debug, Clone, PartialEq)]
pub struct NarrativeCheck {
    pub label: char,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl NarrativeCheck {
    fn new(label: char, name: &'static str, outcome: Result<String, String>) -> Self {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        NarrativeCheck { label, name, passed, detail }
    }
}

fn secs(t: SimTime) -> f64 {
    t.as_secs_f64()
}

fn str_of<'a>(r: &'a TraceRecord, k: &str) -> &'a str {
    r.str_field(k).unwrap_or("")
}

fn role_of(spec: &ScenarioSpec, node: &str) -> Option<Role> {
    spec.node(node).and_then(|n| n.role)
}

fn occluded(spec: &ScenarioSpec, a: &str, b: &str, t: SimTime) -> bool {
    spec.events.iter().any(|e| match e {
        EventSpec::Occlusion { link, start_s, end_s } => {
            let same = (link[0] == a && link[1] == b) || (link[0] == b && link[1] == a);
            same && SimTime::from_secs_f64(*start_s) <= t && t < SimTime::from_secs_f64(*end_s)
        }
        _ => false,
    })
}

struct Alert<'a> {
    created: &'a TraceRecord,
    received: Option<&'a TraceRecord>,
}

fn first_alert(trace: &Trace) -> Option<Alert<'_>> {
    let created = trace.of_kind("alert_created").next()?;
    let key = (str_of(created, "sender"), created.u64_field("msg_seq"));
    let received = trace
        .of_kind("alert_received")
        .find(|r| str_of(r, "role") == "BASE" && (str_of(r, "sender"), r.u64_field("msg_seq")) == key);
    Some(Alert { created, received })
}

fn check_a(spec: &ScenarioSpec, trace: &Trace) -> Result<String, String> {
    let bio = spec.biometrics.as_ref().ok_or("scenario has no biometrics")?;
    let alert = first_alert(trace).ok_or("no alert was created")?;
    let watcher = bio.watcher.as_str();
    let limit = u64::from(bio.missed_limit);
    let misses: Vec<&TraceRecord> = trace
        .of_kind("ping_missed")
        .filter(|r| str_of(r, "agent") == watcher && r.t <= alert.created.t)
        .collect();
    let nth = misses.iter().find(|r| r.u64_field("consecutive") == Some(limit));
    match nth {
        Some(m) if m.t == alert.created.t && misses.len() as u64 == limit => Ok(format!(
            "alert at {:.3} s on missed ping {limit}",
            secs(alert.created.t)
        )),
        Some(m) => Err(format!(
            "missed ping {limit} at {:.3} s but alert at {:.3} s after {} misses",
            secs(m.t),
            secs(alert.created.t),
            misses.len()
        )),
        None => Err(format!("alert at {:.3} s before {limit} missed pings", secs(alert.created.t))),
    }
}

fn check_b(spec: &ScenarioSpec, trace: &Trace) -> Result<String, String> {
    let alert = first_alert(trace).ok_or("no alert was created")?;
    let rx = alert.received.ok_or("alert never reached the base")?;
    let sender = str_of(alert.created, "sender");
    let base = str_of(rx, "agent");
    let from = str_of(rx, "from");
    if role_of(spec, from) != Some(Role::Relay) {
        return Err(format!("base heard the alert from {from}, not a relay"));
    }
    if !occluded(spec, sender, base, rx.t) {
        return Err(format!("{sender}--{base} was not occluded at {:.3} s", secs(rx.t)));
    }
    let direct = trace.of_kind("a2a_received").any(|r| {
        str_of(r, "to") == base && str_of(r, "from") == sender && str_of(r, "msg") == "ALERT"
    });
    if direct {
        return Err(format!("base also heard an alert straight from {sender}"));
    }
    Ok(format!("delivered via {from} at {:.3} s during the {sender}--{base} occlusion", secs(rx.t)))
}

fn check_c(trace: &Trace) -> Result<String, String> {
    let alert = first_alert(trace).ok_or("no alert was created")?;
    let rx = alert.received.ok_or("alert never reached the base")?;
    let realloc = trace
        .of_kind("policy_reallocated")
        .find(|r| r.t >= rx.t && str_of(r, "source") == "nearrt")
        .ok_or("base never reallocated")?;
    let decided = trace.of_kind("decision").any(|r| {
        r.t == realloc.t && str_of(r, "decision") == "REALLOCATE_BANDWIDTH" && str_of(r, "made_by") == "LOCAL"
    });
    if !decided {
        return Err("reallocation has no local REALLOCATE_BANDWIDTH decision".into());
    }
    let lag = realloc.t - rx.t;
    if lag < REALLOCATION_BOUND {
        Ok(format!("reallocated {:.6} s after receipt", secs(lag)))
    } else {
        Err(format!("reallocated {:.3} s after receipt", secs(lag)))
    }
}

fn check_d(spec: &ScenarioSpec, trace: &Trace) -> Result<String, String> {
    let rover = spec.rescue.as_ref().ok_or("scenario has no rescue rover")?.rover.as_str();
    let drops: Vec<SimTime> = spec
        .events
        .iter()
        .filter_map(|e| match e {
            EventSpec::CorridorQuality { t_s, .. } => Some(SimTime::from_secs_f64(*t_s)),
            _ => None,
        })
        .collect();
    let first = *drops.iter().min().ok_or("scenario never changes corridor quality")?;
    trace
        .of_kind("locomotion_replanned")
        .find(|r| str_of(r, "agent") == rover && r.t >= first && str_of(r, "reason") == "corridor_quality_changed")
        .map(|r| format!("{rover} replanned {:.3} s after the corridor drop", secs(r.t - first)))
        .ok_or_else(|| format!("{rover} never replanned after the corridor drop at {:.0} s", secs(first)))
}

fn check_e(trace: &Trace) -> Result<String, String> {
    const ORDER: [&str; 3] = ["PUSH_REALTIME", "PULL_CACHED", "AUTONOMOUS_BULK"];
    let mut agents: Vec<&str> = trace.of_kind("mode_changed").map(|r| str_of(r, "agent")).collect();
    agents.sort_unstable();
    agents.dedup();
    for agent in agents {
        let mut next = 0;
        let mut times = Vec::new();
        for r in trace.of_kind("mode_changed").filter(|r| str_of(r, "agent") == agent) {
            if next < ORDER.len() && str_of(r, "to") == ORDER[next] {
                times.push(secs(r.t));
                next += 1;
            }
        }
        if next == ORDER.len() {
            return Ok(format!("{agent} entered the three modes at {times:?} s"));
        }
    }
    Err("no agent went PUSH_REALTIME then PULL_CACHED then AUTONOMOUS_BULK".into())
}

/// Checks (a) through (e) in narrative order.
pub fn eva_narrative(spec: &ScenarioSpec, trace: &Trace) -> Vec<NarrativeCheck> {
    vec![
        NarrativeCheck::new('a', "alert after the missed-ping limit", check_a(spec, trace)),
        NarrativeCheck::new('b', "alert relayed around the occlusion", check_b(spec, trace)),
        NarrativeCheck::new('c', "reallocation before any Earth reply", check_c(trace)),
        NarrativeCheck::new('d', "replan on corridor degradation", check_d(spec, trace)),
        NarrativeCheck::new('e', "push, pull, autonomous progression", check_e(trace)),
    ]
}
