//! Metrics recomputed from a trace alone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkernel::{SimTime, Trace, TraceRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trace has no run_started record")]
    MissingRunStarted,
    #[error("trace has no run_finished record")]
    MissingRunFinished,
    #[error("record seq {seq} ({kind}): missing or malformed field `{field}`")]
    Malformed { seq: u64, kind: String, field: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRatio {
    pub sent: u64,
    pub delivered: u64,
    pub failed: u64,
    pub pending: u64,
    /// `delivered / (sent - pending)`; absent when nothing was resolved.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharePoint {
    pub t_s: f64,
    pub emergency_share: f64,
    pub emergency_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimePoint {
    pub t_s: f64,
    pub regime: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    /// Alert creation to first receipt at the coordination hub.
    pub alert_e2e_latency_s: Option<f64>,
    pub delivery_ratio: BTreeMap<String, ClassRatio>,
    /// Executed decisions taken locally over all executed decisions.
    pub autonomous_decision_fraction: Option<f64>,
    /// Per link, the emergency share and its capacity at each policy change.
    pub emergency_bandwidth_timeline: BTreeMap<String, Vec<SharePoint>>,
    pub regime_timeline: BTreeMap<String, Vec<RegimePoint>>,
    pub messages_by_tier: BTreeMap<String, u64>,
}

fn secs(t: SimTime) -> f64 {
    t.as_secs_f64()
}

fn field<'a>(r: &'a TraceRecord, name: &str) -> Result<&'a serde_json::Value, MetricsError> {
    r.get(name).ok_or_else(|| bad(r, name))
}

fn bad(r: &TraceRecord, name: &str) -> MetricsError {
    MetricsError::Malformed { seq: r.seq, kind: r.kind.clone(), field: name.to_owned() }
}

fn s<'a>(r: &'a TraceRecord, name: &str) -> Result<&'a str, MetricsError> {
    r.str_field(name).ok_or_else(|| bad(r, name))
}

fn u(r: &TraceRecord, name: &str) -> Result<u64, MetricsError> {
    r.u64_field(name).ok_or_else(|| bad(r, name))
}

fn f(r: &TraceRecord, name: &str) -> Result<f64, MetricsError> {
    r.f64_field(name).ok_or_else(|| bad(r, name))
}

pub fn compute_metrics(trace: &Trace) -> Result<MetricsReport, MetricsError> {
    let start = trace.of_kind("run_started").next().ok_or(MetricsError::MissingRunStarted)?;
    let finish = trace.of_kind("run_finished").next().ok_or(MetricsError::MissingRunFinished)?;
    let duration = SimTime(u(start, "duration_us")?);
    let pending: BTreeSet<u64> = field(finish, "pending_sends")?
        .as_array()
        .ok_or_else(|| bad(finish, "pending_sends"))?
        .iter()
        .map(|v| v.as_u64().ok_or_else(|| bad(finish, "pending_sends")))
        .collect::<Result<_, _>>()?;

    let mut class_of: BTreeMap<u64, String> = BTreeMap::new();
    let mut delivered: BTreeSet<u64> = BTreeSet::new();
    let mut failed: BTreeSet<u64> = BTreeSet::new();
    let mut by_tier: BTreeMap<String, u64> = BTreeMap::new();
    let mut alerts: BTreeMap<(String, u64), SimTime> = BTreeMap::new();
    let mut latency = None;
    let (mut executed, mut local) = (0u64, 0u64);
    let mut shares: BTreeMap<String, Vec<SharePoint>> = BTreeMap::new();
    let mut regimes: BTreeMap<String, Vec<RegimePoint>> = BTreeMap::new();

    for r in trace.records() {
        match r.kind.as_str() {
            "a2a_sent" => {
                class_of.insert(u(r, "send")?, s(r, "class")?.to_owned());
                *by_tier.entry(s(r, "tier")?.to_owned()).or_default() += 1;
            }
            "a2a_received" => {
                delivered.insert(u(r, "send")?);
            }
            "a2a_failed" => {
                failed.insert(u(r, "send")?);
            }
            "alert_created" => {
                alerts.entry((s(r, "sender")?.to_owned(), u(r, "msg_seq")?)).or_insert(r.t);
            }
            "alert_received" if latency.is_none() && s(r, "role")? == "BASE" => {
                if let Some(t0) = alerts.get(&(s(r, "sender")?.to_owned(), u(r, "msg_seq")?)) {
                    latency = Some(secs(r.t - *t0));
                }
            }
            "decision" if s(r, "status")? == "EXECUTED" => {
                executed += 1;
                if s(r, "made_by")? == "LOCAL" {
                    local += 1;
                }
            }
            "policy_reallocated" => {
                let e = f(r, "emergency")?;
                let bw = u(r, "bandwidth_bps")? as f64;
                shares.entry(s(r, "link")?.to_owned()).or_default().push(SharePoint {
                    t_s: secs(r.t),
                    emergency_share: e,
                    emergency_bps: e * bw,
                });
            }
            "mode_changed" => {
                let series = regimes.entry(s(r, "agent")?.to_owned()).or_default();
                let regime = s(r, "regime")?.to_owned();
                if series.last().is_none_or(|p| p.regime != regime) {
                    series.push(RegimePoint { t_s: secs(r.t), regime });
                }
            }
            _ => {}
        }
    }

    let end = secs(duration);
    for series in shares.values_mut() {
        let last = series.last().expect("non-empty").clone();
        if last.t_s < end {
            series.push(SharePoint { t_s: end, ..last });
        }
    }
    for series in regimes.values_mut() {
        let last = series.last().expect("non-empty").clone();
        if last.t_s < end {
            series.push(RegimePoint { t_s: end, ..last });
        }
    }

    let mut delivery_ratio: BTreeMap<String, ClassRatio> = BTreeMap::new();
    for (send, class) in &class_of {
        let e = delivery_ratio.entry(class.clone()).or_insert(ClassRatio {
            sent: 0,
            delivered: 0,
            failed: 0,
            pending: 0,
            ratio: None,
        });
        e.sent += 1;
        if delivered.contains(send) {
            e.delivered += 1;
        } else if pending.contains(send) {
            e.pending += 1;
        } else {
            e.failed += 1;
        }
    }
    for e in delivery_ratio.values_mut() {
        let resolved = e.sent - e.pending;
        e.ratio = (resolved > 0).then(|| e.delivered as f64 / resolved as f64);
    }

    Ok(MetricsReport {
        scenario: s(start, "scenario")?.to_owned(),
        seed: u(start, "seed")?,
        duration_s: end,
        alert_e2e_latency_s: latency,
        delivery_ratio,
        autonomous_decision_fraction: (executed > 0).then(|| local as f64 / executed as f64),
        emergency_bandwidth_timeline: shares,
        regime_timeline: regimes,
        messages_by_tier: by_tier,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Long-form CSV: `metric,key,t_s,value`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "key", "t_s", "value"]).expect("in-memory write");
        let mut row = |metric: &str, key: &str, t: Option<f64>, value: String| {
            let t = t.map(|t| t.to_string()).unwrap_or_default();
            w.write_record([metric, key, t.as_str(), value.as_str()]).expect("in-memory write");
        };
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        row("alert_e2e_latency_s", "", None, opt(self.alert_e2e_latency_s));
        for (class, r) in &self.delivery_ratio {
            row("delivery_ratio", class, None, opt(r.ratio));
        }
        row("autonomous_decision_fraction", "", None, opt(self.autonomous_decision_fraction));
        for (link, series) in &self.emergency_bandwidth_timeline {
            for p in series {
                row("emergency_bps", link, Some(p.t_s), p.emergency_bps.to_string());
            }
        }
        for (node, series) in &self.regime_timeline {
            for p in series {
                row("regime", node, Some(p.t_s), p.regime.clone());
            }
        }
        for (tier, n) in &self.messages_by_tier {
            row("messages_by_tier", tier, None, n.to_string());
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }
}
