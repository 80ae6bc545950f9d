//! Acceptance gate: one line per criterion, non-zero exit if any fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lunarnet::a2a::*;
use lunarnet::agent::mode_for;
use lunarnet::mcp::plan_locomotion;
use lunarnet::radio::*;
use lunarnet::scenario::{eva_narrative, ScenarioSpec};
use lunarnet::simkernel::{RngSeed, SimTime, Trace, TraceRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::grids::{brute_force, case};
use support::messages::{alert_body, message, message_with};
use support::trajectories::{trajectory, transitions_per_episode};

type Verdict = Result<String, String>;

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = f()?;
    let took = start.elapsed();
    if took > limit {
        return Err(format!("{v}, but took {took:.2?} (limit {limit:?})"));
    }
    Ok(format!("{v} in {took:.2?}"))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs the binary and returns the trace text and the metrics JSON.
fn run_cli(dir: &Path) -> Result<(String, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lunarnet"))
        .current_dir(dir)
        .args(["run", "--scenario", "eva_incident", "--seed", "42"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("run exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let read = |p: &str| std::fs::read_to_string(dir.join(p)).map_err(|e| format!("{p}: {e}"));
    Ok((read("out/trace.jsonl")?, read("out/metrics.json")?))
}

fn s<'a>(r: &'a TraceRecord, k: &str) -> &'a str {
    r.str_field(k).unwrap_or_default()
}

fn earth_rtt(trace: &Trace) -> Verdict {
    let mut n = 0;
    for r in trace.of_kind("earth_rtt") {
        let rtt = r.f64_field("rtt_s").ok_or("earth_rtt without rtt_s")?;
        if r.u64_field("bytes") != Some(0) || !(1.5..=2.0).contains(&rtt) {
            return Err(format!("trace RTT {rtt} s at t={}", r.t.as_secs_f64()));
        }
        n += 1;
    }
    if n == 0 {
        return Err("trace has no Earth round trips".into());
    }
    let mut plan = ContactPlan::new();
    let st = LinkState { up: true, bandwidth_bps: 2_000_000, one_way_delay: SimTime::from_millis(5), quality: 0.9 };
    plan.add_link(LinkKey::new("base", "earth"), st, LinkPlan::default()).map_err(|e| e.to_string())?;
    let tiers = BTreeMap::from([(NodeId::from("base"), Tier::Base), (NodeId::from("earth"), Tier::Earth)]);
    let mut radio = Radio::new(tiers, plan, RadioConfig::default(), RngSeed(42).component_rng("radio"));
    let mut g = rng(1);
    for _ in 0..1_000 {
        let at = SimTime::from_micros(g.random_range(0..3_600_000_000));
        let up = radio.probe(&"base".into(), &"earth".into(), at).map_err(|e| e.to_string())?;
        let down = radio.probe(&"earth".into(), &"base".into(), at + up).map_err(|e| e.to_string())?;
        let rtt = (up + down).as_secs_f64();
        if !(1.5..=2.0).contains(&rtt) {
            return Err(format!("probe RTT {rtt} s"));
        }
    }
    Ok(format!("{n} trace round trips and 1000 probes within [1.5, 2.0] s"))
}

fn dtn_equivalence() -> Verdict {
    for seed in 0..500 {
        let inst = support::dtn_instances::generate(&mut rng(seed));
        support::dtn_instances::compare(&inst).map_err(|e| format!("instance {seed}: {}", e.lines().next().unwrap_or("")))?;
    }
    Ok("500 instances agree with the earliest-arrival oracle".into())
}

fn codec() -> Verdict {
    for seed in 0..1_000u64 {
        let g = &mut rng(seed);
        let fail = |what: &str| format!("message {seed}: {what}");
        let m = message(g);
        let full = encode(&m, CompressionTier::Full).map_err(|e| fail(&e.to_string()))?;
        if decode(&full).as_ref() != Ok(&m) {
            return Err(fail("FULL roundtrip"));
        }
        let sizes: Vec<usize> =
            CompressionTier::ALL.iter().map(|&t| encode(&m, t).map(|b| b.len()).unwrap_or(usize::MAX)).collect();
        if !(sizes[0] >= sizes[1] && sizes[1] >= sizes[2]) {
            return Err(fail(&format!("tier sizes {sizes:?}")));
        }
        let alert = message_with(g, |g| MessageBody::Alert(alert_body(g)));
        for tier in CompressionTier::ALL {
            let got = encode(&alert, tier).and_then(|b| decode(&b)).map_err(|e| fail(&e.to_string()))?;
            if got.body != alert.body {
                return Err(fail(&format!("alert lost at {}", tier.as_str())));
            }
        }
        let mtu = g.random_range(FRAME_HEADER_LEN + 1..=600);
        let mut frames = frame_for_control_channel(&full, mtu, m.frame_id()).map_err(|e| fail(&e.to_string()))?;
        frames.shuffle(g);
        if reassemble(&frames).as_ref() != Ok(&full) {
            return Err(fail("permuted reassembly"));
        }
        let i = g.random_range(0..frames.len());
        let bit = g.random_range(0..frames[i].len() * 8);
        frames[i][bit / 8] ^= 1 << (bit % 8);
        if reassemble(&frames).is_ok() {
            return Err(fail("bit flip went unnoticed"));
        }
    }
    Ok("1000 messages: roundtrip, monotone tiers, alert survival, permutation, bit flips".into())
}

fn hysteresis() -> Verdict {
    let th = RegimeThresholds::default();
    let starts = [ConnectivityRegime::Poor, ConnectivityRegime::Moderate, ConnectivityRegime::High];
    let mut episodes = 0;
    for seed in 0..1_000u64 {
        let g = &mut rng(seed);
        let eps = trajectory(g, &th);
        if eps.iter().any(|e| e.amplitude >= 0.05) {
            return Err(format!("trajectory {seed} exceeds the amplitude bound"));
        }
        let start = starts[g.random_range(0..3)];
        let counts = transitions_per_episode(&th, 10_000_000, start, &eps);
        if let Some(c) = counts.iter().find(|&&c| c > 1) {
            return Err(format!("trajectory {seed}: {c} transitions in one episode"));
        }
        episodes += eps.len();
    }
    Ok(format!("1000 trajectories ({episodes} episodes), at most one transition each"))
}

fn capacity(trace: &Trace) -> Verdict {
    // Incident coverage is rebuilt from open/close records, not taken on trust.
    let mut covered: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut n = 0;
    for r in trace.records() {
        match r.kind.as_str() {
            "incident_opened" => {
                let links = r.get("links").and_then(|v| v.as_array()).ok_or("incident_opened without links")?;
                covered.insert(s(r, "incident").into(), links.iter().filter_map(|l| l.as_str().map(String::from)).collect());
            }
            "incident_closed" => {
                covered.remove(s(r, "incident"));
            }
            "policy_reallocated" => {
                n += 1;
                let share = |k: &str| r.f64_field(k).ok_or(format!("policy event without {k}"));
                let (e, o, b) = (share("emergency")?, share("operational")?, share("bulk")?);
                if [e, o, b].iter().any(|x| *x < 0.0) || (e + o + b - 1.0).abs() > 1e-9 {
                    return Err(format!("shares {e}+{o}+{b} at t={}", r.t.as_secs_f64()));
                }
                let link = s(r, "link");
                let active = covered.values().any(|ls| ls.iter().any(|l| l == link));
                if active != (r.get("incident_active").and_then(|v| v.as_bool()) == Some(true)) {
                    return Err(format!("incident flag disagrees on {link} at t={}", r.t.as_secs_f64()));
                }
                if active && e < 0.6 {
                    return Err(format!("EMERGENCY {e} on {link} during an incident"));
                }
            }
            _ => {}
        }
    }
    if n == 0 {
        return Err("no policy events".into());
    }
    Ok(format!("{n} policy events partition capacity; floor held during incidents"))
}

fn planner() -> Verdict {
    for seed in 0..200u64 {
        let c = case(&mut rng(seed));
        let got = plan_locomotion(&c.grid, c.start, c.goal, c.weight).ok().map(|p| p.cost);
        let want = brute_force(&c);
        let same = match (got, want) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
            (None, None) => true,
            _ => false,
        };
        if !same {
            return Err(format!("grid {seed}: planner {got:?}, exhaustive {want:?}"));
        }
    }
    Ok("200 grids up to 6x6 match exhaustive search".into())
}

fn narrative(spec: &ScenarioSpec, trace: &Trace) -> Verdict {
    let checks = eva_narrative(spec, trace);
    if let Some(c) = checks.iter().find(|c| !c.passed) {
        return Err(format!("({}) {}: {}", c.label, c.name, c.detail));
    }
    let receipt = trace
        .of_kind("alert_received")
        .find(|r| s(r, "role") == "BASE")
        .ok_or("base never received the alert")?
        .t;
    let realloc = trace
        .of_kind("policy_reallocated")
        .find(|r| r.t >= receipt && s(r, "source") == "nearrt")
        .ok_or("no reallocation after the alert")?
        .t;
    let lag = (realloc - receipt).as_secs_f64();
    if lag >= 1.5 {
        return Err(format!("reallocation {lag} s after receipt"));
    }
    Ok(format!("(a)-(e) hold; reallocation {lag:.6} s after alert receipt"))
}

fn determinism(a: &(String, String), b: &(String, String)) -> Verdict {
    if a.0 != b.0 {
        return Err("traces differ between identical runs".into());
    }
    if a.1 != b.1 {
        return Err("metrics differ between identical runs".into());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("t.jsonl"), &a.0).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_lunarnet"))
        .current_dir(dir.path())
        .args(["metrics", "--trace", "t.jsonl"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() || out.stdout != a.1.as_bytes() {
        return Err("recomputed metrics differ from the emitted report".into());
    }
    Ok(format!("{} trace bytes identical; recomputed metrics identical", a.0.len()))
}

fn modes_and_gating(trace: &Trace) -> Verdict {
    let mut mode: BTreeMap<String, String> = BTreeMap::new();
    let (mut checked, mut gated) = (0, 0);
    let regime = |r: &TraceRecord| -> Result<&'static str, String> {
        let reg = match s(r, "regime") {
            "HIGH" => ConnectivityRegime::High,
            "MODERATE" => ConnectivityRegime::Moderate,
            "POOR" => ConnectivityRegime::Poor,
            other => return Err(format!("unknown regime {other:?}")),
        };
        Ok(mode_for(reg).as_str())
    };
    for r in trace.records() {
        let agent = |k: &str| s(r, k).to_owned();
        let autonomous = |who: &str, mode: &BTreeMap<String, String>| mode.get(who).map(String::as_str) == Some("AUTONOMOUS_BULK");
        match r.kind.as_str() {
            "mode_changed" => {
                if s(r, "to") != regime(r)? {
                    return Err(format!("{} entered {} in {}", s(r, "agent"), s(r, "to"), s(r, "regime")));
                }
                mode.insert(agent("agent"), s(r, "to").into());
                checked += 1;
            }
            "telemetry" if r.get("regime").is_some() => {
                if s(r, "mode") != regime(r)? {
                    return Err(format!("{} reported {} in {}", s(r, "node"), s(r, "mode"), s(r, "regime")));
                }
                checked += 1;
            }
            "a2a_sent" => {
                let who = agent("from");
                if mode.contains_key(&who) && mode[&who] != s(r, "mode") {
                    return Err(format!("{who} sent in {} while in {}", s(r, "mode"), mode[&who]));
                }
                if autonomous(&who, &mode) && !matches!(s(r, "via"), "DTN" | "BROKER") {
                    return Err(format!("{who} sent {} {} in AUTONOMOUS_BULK", s(r, "msg"), s(r, "via")));
                }
            }
            "mcp_query" | "mcp_subscribe" => {
                if autonomous(s(r, "agent"), &mode) {
                    return Err(format!("{} issued {} in AUTONOMOUS_BULK", s(r, "agent"), r.kind));
                }
            }
            "decision" => {
                let conf = r.f64_field("confidence").ok_or("decision without confidence")?;
                if s(r, "criticality") == "NON_CRITICAL" && s(r, "status") == "EXECUTED" && conf < 0.5 {
                    return Err(format!("decision {} executed at confidence {conf}", s(r, "decision")));
                }
                gated += 1;
            }
            _ => {}
        }
    }
    Ok(format!("{checked} mode observations match their regime; {gated} decisions respect the gate"))
}

fn main() {
    let spec = ScenarioSpec::eva_incident();
    let dirs = (tempfile::tempdir().expect("temp dir"), tempfile::tempdir().expect("temp dir"));
    let runs = run_cli(dirs.0.path()).and_then(|a| Ok((a, run_cli(dirs.1.path())?)));
    let trace = runs.as_ref().map_err(Clone::clone).and_then(|(a, _)| Trace::from_jsonl(&a.0).map_err(|e| e.to_string()));
    let with_trace = |f: &dyn Fn(&Trace) -> Verdict| trace.as_ref().map_err(Clone::clone).and_then(f);

    let results: Vec<(&str, Verdict)> = vec![
        ("Earth round trip", timed(Duration::from_secs(1), || with_trace(&earth_rtt))),
        ("DTN oracle equivalence", timed(Duration::from_secs(30), dtn_equivalence)),
        ("codec properties", timed(Duration::from_secs(10), codec)),
        ("regime hysteresis", timed(Duration::from_secs(5), hysteresis)),
        ("capacity and emergency floor", with_trace(&capacity)),
        ("planner optimality", timed(Duration::from_secs(60), planner)),
        ("EVA narrative", with_trace(&|t: &Trace| narrative(&spec, t))),
        ("determinism", runs.as_ref().map_err(Clone::clone).and_then(|(a, b)| determinism(a, b))),
        ("mode mapping and gating", with_trace(&modes_and_gating)),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        match v {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
