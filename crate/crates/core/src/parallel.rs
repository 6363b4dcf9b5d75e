//! Deterministic parallel reductions.
//!
//! Floating-point sums are split into fixed-size blocks whose partial sums
//! are combined in block order, so the result does not depend on how rayon
//! schedules the blocks.

use rayon::prelude::*;

pub const BLOCK: usize = 4096;

pub fn sum_map<T: Sync, F: Fn(&T) -> f64 + Sync>(xs: &[T], f: F) -> f64 {
    let parts: Vec<f64> = xs.par_chunks(BLOCK).map(|c| c.iter().map(&f).sum()).collect();
    parts.iter().sum()
}

pub fn mean_map<T: Sync, F: Fn(&T) -> f64 + Sync>(xs: &[T], f: F) -> f64 {
    sum_map(xs, f) / xs.len() as f64
}
