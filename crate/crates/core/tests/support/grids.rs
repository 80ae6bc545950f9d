//! Random small grids and an exhaustive simple-path planner.

#![allow(dead_code)]

use lunarnet::mcp::{Cell, Grid};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Case {
    pub grid: Grid,
    pub start: Cell,
    pub goal: Cell,
    pub weight: f64,
}

/// Grids up to 6x6 with a few blocked cells, quality on a 1/8 lattice so
/// ties are common.
pub fn case(rng: &mut impl Rng) -> Case {
    let (w, h) = (rng.random_range(1..=6u32), rng.random_range(1..=6u32));
    let mut grid = Grid::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let q = if rng.random_bool(0.3) { f64::from(rng.random_range(0..=8u8)) / 8.0 } else { rng.random() };
            grid.set_quality((x, y), q);
            if rng.random_bool(0.2) {
                grid.block((x, y));
            }
        }
    }
    let pick = |rng: &mut dyn rand::RngCore| (rng.random_range(0..w), rng.random_range(0..h));
    let start = pick(rng);
    let goal = pick(rng);
    let weight = match rng.random_range(0..3) {
        0 => 0.0,
        1 => f64::from(rng.random_range(1..=4u8)),
        _ => rng.random_range(0.0..10.0),
    };
    Case { grid, start, goal, weight }
}

/// Minimum entry cost over every simple path, or `None` when the goal is
/// unreachable or an endpoint is blocked. Costs are at least 1 per step, so a
/// partial path already at the incumbent is cut.
pub fn brute_force(c: &Case) -> Option<f64> {
    if !c.grid.is_free(c.start) || !c.grid.is_free(c.goal) {
        return None;
    }
    let mut best = None;
    let mut seen = vec![c.start];
    dfs(c, c.start, 0.0, &mut seen, &mut best);
    best
}

fn dfs(c: &Case, at: Cell, cost: f64, seen: &mut Vec<Cell>, best: &mut Option<f64>) {
    if best.is_some_and(|b| cost >= b) {
        return;
    }
    if at == c.goal {
        *best = Some(cost);
        return;
    }
    let (x, y) = (i64::from(at.0), i64::from(at.1));
    for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
        if nx < 0 || ny < 0 {
            continue;
        }
        let n = (nx as u32, ny as u32);
        if !c.grid.is_free(n) || seen.contains(&n) {
            continue;
        }
        let step = 1.0 + c.weight * (1.0 - c.grid.quality(n));
        seen.push(n);
        dfs(c, n, cost + step, seen, best);
        seen.pop();
    }
}
