//! Execution strategy for the data-parallel inner loops.
//!
//! Work is always split into a fixed tile decomposition that depends only on
//! the problem size, each tile is accumulated sequentially, and the per-tile
//! partials are combined in tile order. Results are therefore bitwise
//! identical between sequential and parallel execution and independent of
//! the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to run a tiled computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Parallel when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Auto,
    Sequential,
    /// Force the rayon path; falls back to sequential without the feature.
    Parallel,
}

impl ExecMode {
    fn parallel(self) -> bool {
        match self {
            ExecMode::Sequential => false,
            ExecMode::Auto | ExecMode::Parallel => cfg!(feature = "parallel"),
        }
    }
}

/// Maps `tile_fn` over `0..n_tiles` and folds the results in tile order.
pub fn map_reduce_tiles<T, F, R>(mode: ExecMode, n_tiles: usize, tile_fn: F, reduce: R) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    R: Fn(Vec<T>) -> Vec<T>,
{
    let partials: Vec<T> = if mode.parallel() {
        #[cfg(feature = "parallel")]
        {
            (0..n_tiles).into_par_iter().map(&tile_fn).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n_tiles).map(&tile_fn).collect()
        }
    } else {
        (0..n_tiles).map(&tile_fn).collect()
    };
    reduce(partials)
}

/// Tiled sum of f64 bundles: every tile produces a `width`-vector, combined
/// by ordered component-wise addition.
pub fn sum_bundles<F>(mode: ExecMode, n_tiles: usize, width: usize, tile_fn: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    let partials = map_reduce_tiles(mode, n_tiles, tile_fn, |p| p);
    let mut acc = vec![0.0; width];
    for part in partials {
        debug_assert_eq!(part.len(), width);
        for (a, v) in acc.iter_mut().zip(part) {
            *a += v;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let tile = |i: usize| {
            let mut v = vec![0.0_f64; 2];
            for k in 0..1000 {
                let x = (i * 1000 + k) as f64 * 1e-3;
                v[0] += (x.sin() * 1.000001).powi(3);
                v[1] += x.cos() / (1.0 + x * x);
            }
            v
        };
        let seq = sum_bundles(ExecMode::Sequential, 37, 2, tile);
        let par = sum_bundles(ExecMode::Parallel, 37, 2, tile);
        assert_eq!(seq, par);
    }
}
