//! Per-atom work distribution.
//!
//! Every routine that loops over atoms computes each atom's output independently with a
//! fixed inner summation order, so parallel and sequential runs are bitwise identical.
//! `Sequential` exists for single-threaded embedding and profiling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// `f(i)` for every `i < count`, collected in index order.
    pub fn map<R, F>(self, count: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Execution::Parallel => (0..count).into_par_iter().map(f).collect(),
            Execution::Sequential => (0..count).map(f).collect(),
        }
    }

    /// Runs `f(i, a_i, b_i)` over matching `chunk`-sized blocks of two buffers.
    pub fn for_blocks<S, R, F>(self, a: &mut [S], b: &mut [S], chunk: usize, f: F) -> Vec<R>
    where
        S: Send,
        R: Send,
        F: Fn(usize, &mut [S], &mut [S]) -> R + Sync + Send,
    {
        if chunk == 0 {
            return Vec::new();
        }
        match self {
            Execution::Parallel => a
                .par_chunks_mut(chunk)
                .zip(b.par_chunks_mut(chunk))
                .enumerate()
                .map(|(i, (x, y))| f(i, x, y))
                .collect(),
            Execution::Sequential => a
                .chunks_mut(chunk)
                .zip(b.chunks_mut(chunk))
                .enumerate()
                .map(|(i, (x, y))| f(i, x, y))
                .collect(),
        }
    }
}
