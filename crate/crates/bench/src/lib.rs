//! Benchmark fixtures.

use csflock_core::exp::scenario::uniform_box;
use csflock_core::State;

/// Seeded state with `n` agents in `[-5, 5]^d`, at least 0.05 apart.
pub fn random_state(n: usize, d: usize, seed: u64) -> State {
    let (q, p) = uniform_box(n, d, 5.0, 1.0, Some(0.05), seed).expect("fixture placement");
    State::new(0.0, n, d, q, p).expect("fixture state")
}

/// Line data with integer-spaced ν and one designed tie.
pub fn line_fixture(n: usize) -> (Vec<f64>, Vec<f64>) {
    let q: Vec<f64> = (0..n).map(|i| 0.75 * i as f64).collect();
    let nu: Vec<f64> = (0..n).map(|i| -(i as f64 / 2.0).floor()).collect();
    (q, nu)
}
