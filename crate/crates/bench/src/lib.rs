//! Shared fixtures for the criterion benchmarks.

use stdgm::ingest::{CoordSystem, Event, MultiPattern, Window};

/// Deterministic pseudo-random pattern with `d` components and `n` events in
/// total over `t_steps` steps (a 64-bit LCG keeps this crate dependency-free).
pub fn synthetic_pattern(d: usize, n: usize, t_steps: u32, seed: u64) -> MultiPattern {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let events = (0..n)
        .map(|k| Event {
            x: next(),
            y: next(),
            t_idx: 1 + (k as u32 % t_steps),
            component: k % d,
            mark: None,
        })
        .collect();
    let labels = (1..=d).map(|i| format!("c{i}")).collect();
    MultiPattern::new(events, labels, Window::unit(t_steps), CoordSystem::UnitSquare)
        .expect("synthetic pattern is valid")
}
