//! Order-stable parallel trial execution.
//!
//! Trials are cut into fixed-size chunks whose boundaries depend only on the
//! trial count. Chunks may run on any thread, but their partial results are
//! returned in chunk order, so a sequential fold over them is bit-identical
//! for every thread count.

use std::ops::Range;

use rayon::prelude::*;

pub const CHUNK: usize = 1024;

pub fn map_chunks<R, F>(trials: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(trials)))
        .collect()
}
