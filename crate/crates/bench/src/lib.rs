//! Shared fixtures for the criterion benches.

use crlab::grid::{GridField, Lattice, Mask};
use crlab::smoothing::oscillatory_field;
use crlab::EmbeddingState;
use std::sync::Arc;

pub fn bench_field(dim: usize, res: usize, seed: u64) -> GridField {
    let lat = Lattice::cube(dim, 1.0, res);
    oscillatory_field(&Mask::full(lat), 1.0, 40.0, seed)
}

pub fn bench_state(n: usize, res: usize) -> EmbeddingState {
    EmbeddingState::quadric(n, 1.0, res)
}

pub fn interior(mask: &Arc<Mask>, margin: f64) -> Arc<Mask> {
    let lat = mask.lattice.clone();
    Mask::from_predicate(lat.clone(), {
        let lat = lat.clone();
        let dim = lat.dim;
        move |i| {
            let p = lat.point(i);
            (0..dim).all(|a| p[a].abs() < 1.0 - margin)
        }
    })
}
