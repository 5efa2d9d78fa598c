//! Data-parallel execution with a sequential fallback, and the seed-split
//! rule used to hand each parallel task its own generator.
//!
//! Every task receives a generator derived only from `(base, index)`, so the
//! output of [`map_indexed`] is identical under both execution modes and
//! regardless of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise
    /// identical to `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Root generator for a seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Child generator `index` of a split. Split rule: the child is a ChaCha8
/// generator keyed by `base` and running on stream `index`.
pub fn child_rng(base: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(base);
    rng.set_stream(index);
    rng
}

/// Draws the split base from `parent`. Consumes exactly one `u64`.
pub fn split_base<R: Rng + ?Sized>(parent: &mut R) -> u64 {
    parent.next_u64()
}

/// Maps `f(i, rng_i)` over `0..count`, each call with its own child
/// generator, collecting results in index order.
pub fn map_indexed<T, F>(exec: Execution, count: usize, base: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && count > 1 {
        use rayon::prelude::*;
        return (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = child_rng(base, i as u64);
                f(i, &mut rng)
            })
            .collect();
    }
    let _ = exec;
    (0..count)
        .map(|i| {
            let mut rng = child_rng(base, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Deterministic map without generators.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && items.len() > 1 {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}
