#![allow(dead_code)]

use cbf_core::StepWeight;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn half() -> StepWeight {
    StepWeight::constant(0.5).unwrap()
}

pub fn three_quarters() -> StepWeight {
    StepWeight::constant(0.75).unwrap()
}

/// `α = 1` on `[0, ½)`, `0` after: `φ(λ) = (1+λ)/2`.
pub fn two_segment() -> StepWeight {
    StepWeight::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.0]).unwrap()
}

/// Seeded random step weight with at most `max_segments` segments.
pub fn random_weight(rng: &mut ChaCha8Rng, max_segments: usize) -> StepWeight {
    let n = rng.random_range(1..=max_segments);
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.retain(|&c| c > 0.0 && c < 1.0);
    let mut breakpoints = vec![0.0];
    breakpoints.extend(cuts);
    breakpoints.push(1.0);
    let values = (0..breakpoints.len() - 1).map(|_| rng.random::<f64>()).collect();
    StepWeight::new(breakpoints, values).unwrap()
}

pub fn random_weights(count: usize, seed: u64) -> Vec<StepWeight> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_weight(&mut rng, 20)).collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) }
}
