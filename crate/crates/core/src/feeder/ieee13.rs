//! Single-phase equivalent of the IEEE 13-bus test feeder.
//!
//! Base: 4.16 kV, 5 MVA. Bus map (this crate → IEEE node): 0→650, 1→632,
//! 2→633, 3→645, 4→634, 5→671, 6→646, 7→692, 8→675, 9→684, 10→611,
//! 11→652, 12→680. Line impedances use positive-sequence values of the
//! benchmark configurations; the 633–634 transformer uses its nameplate
//! impedance and the 671–692 switch a small nonzero impedance.

use super::topology::{FeederTopology, Line};

const LINES: [(usize, usize, f64, f64); 12] = [
    (0, 1, 0.03793, 0.11140),
    (1, 2, 0.02059, 0.03233),
    (2, 4, 0.11000, 0.20000),
    (1, 3, 0.03638, 0.03686),
    (3, 6, 0.02182, 0.02211),
    (1, 5, 0.03793, 0.11140),
    (5, 7, 0.00010, 0.00010),
    (7, 8, 0.02184, 0.01221),
    (5, 9, 0.02173, 0.02227),
    (9, 10, 0.02181, 0.02211),
    (9, 11, 0.05877, 0.02243),
    (5, 12, 0.01896, 0.05570),
];

/// Benchmark spot loads in p.u. (kW / 5000), indexed by `bus - 1`. The
/// distributed 632–671 load is lumped at bus 1.
pub const IEEE13_BENCHMARK_LOAD: [f64; 12] = [
    0.04, 0.0, 0.034, 0.08, 0.231, 0.046, 0.034, 0.1686, 0.0, 0.034, 0.0256, 0.0,
];

/// Inverter rating relative to the benchmark load at each loaded bus.
pub const IEEE13_RATING_RATIO: f64 = 0.75;

/// Lines along which flow readings are offered to hybrid control rules.
pub const IEEE13_HYBRID_LINES: [(usize, usize); 3] = [(1, 2), (1, 3), (1, 5)];

pub fn ieee13() -> FeederTopology {
    let lines = LINES
        .iter()
        .map(|&(from, to, r, x)| Line { from, to, r, x })
        .collect();
    let ratings = IEEE13_BENCHMARK_LOAD.iter().map(|&p| p * IEEE13_RATING_RATIO).collect();
    FeederTopology::new(lines, ratings, 1.0).expect("built-in feeder is valid")
}
