//! Quality trajectories made of episodes that hover around one threshold.

#![allow(dead_code)]

use lunarnet::radio::{ConnectivityRegime, RegimeThresholds};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Episode {
    pub threshold: f64,
    pub amplitude: f64,
    pub samples: Vec<f64>,
}

/// Episodes alternate between the two quality thresholds with amplitude
/// strictly below the hysteresis margin.
pub fn trajectory(rng: &mut impl Rng, th: &RegimeThresholds) -> Vec<Episode> {
    let n = rng.random_range(1..=6);
    (0..n)
        .map(|_| {
            let threshold = if rng.random_bool(0.5) { th.high_quality } else { th.poor_quality };
            let amplitude = rng.random_range(0.0..th.hysteresis) * 0.999;
            let len = rng.random_range(2..=80);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let period = rng.random_range(2.0..20.0);
            let samples = (0..len)
                .map(|i| {
                    let wave = (phase + i as f64 * std::f64::consts::TAU / period).sin();
                    let jitter = rng.random_range(-1.0..=1.0);
                    let x = if rng.random_bool(0.5) { wave } else { jitter };
                    threshold + amplitude * x
                })
                .collect();
            Episode { threshold, amplitude, samples }
        })
        .collect()
}

/// Transitions inside each episode, starting from `start`.
pub fn transitions_per_episode(
    th: &RegimeThresholds,
    bandwidth_bps: u64,
    start: ConnectivityRegime,
    episodes: &[Episode],
) -> Vec<usize> {
    let mut prev = start;
    episodes
        .iter()
        .map(|e| {
            let mut n = 0;
            for &q in &e.samples {
                let next = th.classify(q, bandwidth_bps, prev);
                if next != prev {
                    n += 1;
                }
                prev = next;
            }
            n
        })
        .collect()
}
