use rayon::prelude::*;

use lunarnet::scenario::{eva_narrative, run_scenario, MetricsReport};

use crate::{output, prepare, Failure, SweepArgs};

const CLASSES: [&str; 3] = ["EMERGENCY", "OPERATIONAL", "BULK"];
const TIERS: [&str; 3] = ["FULL", "SUMMARY", "CRITICAL"];

/// `1,2,10..20` with inclusive ranges. Order and repeats are kept.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed `{x}`: {e}"));
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty seed range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}

fn header() -> Vec<String> {
    let mut h = vec!["seed".to_owned(), "alert_e2e_latency_s".to_owned(), "autonomous_decision_fraction".to_owned()];
    h.extend(CLASSES.iter().map(|c| format!("delivery_ratio_{c}")));
    h.extend(TIERS.iter().map(|t| format!("messages_{t}")));
    h.push("narrative_passed".to_owned());
    h
}

fn row(seed: u64, m: &MetricsReport, narrative: usize) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut r = vec![seed.to_string(), opt(m.alert_e2e_latency_s), opt(m.autonomous_decision_fraction)];
    r.extend(CLASSES.iter().map(|c| opt(m.delivery_ratio.get(*c).and_then(|r| r.ratio))));
    r.extend(TIERS.iter().map(|t| m.messages_by_tier.get(*t).copied().unwrap_or(0).to_string()));
    r.push(narrative.to_string());
    r
}

pub fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let seeds = parse_seeds(&args.seeds).map_err(Failure::Usage)?;
    if args.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let specs = seeds.iter().map(|&s| prepare(&args.common, s)).collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    // Each run owns its engine; collecting keeps the input order.
    let rows: Vec<Vec<String>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let out = run_scenario(spec);
                let passed = eva_narrative(spec, &out.trace).iter().filter(|c| c.passed).count();
                log::info!("seed {} done", spec.seed);
                row(spec.seed, &out.metrics, passed)
            })
            .collect()
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header()).map_err(|e| Failure::Runtime(e.to_string()))?;
    for r in &rows {
        w.write_record(r).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    output::write_atomic(&args.out, &bytes)?;
    println!("{} runs written to {}", rows.len(), args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("3, 1,5..7").unwrap(), [3, 1, 5, 6, 7]);
        assert_eq!(parse_seeds("4..4").unwrap(), [4]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("9..2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn rows_match_the_header() {
        let m = lunarnet::scenario::run_scenario(&{
            let mut s = lunarnet::scenario::ScenarioSpec::eva_incident();
            s.duration_s = 20.0;
            s
        })
        .metrics;
        assert_eq!(row(1, &m, 0).len(), header().len());
    }
}
