//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through the helpers here. With the
//! `parallel` feature disabled, or with [`Exec::Sequential`], they reduce to
//! plain iterator code. Reductions always combine per-chunk partial results in
//! index order, so results are bit-identical for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Selects between the rayon-backed and the sequential code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Runs `f(chunk_index, chunk)` on consecutive chunks of `data`.
    pub fn for_chunks_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// Runs `f(chunk_index, chunks)` where `chunks[c]` is the `chunk_index`-th
    /// chunk of `planes[c]`. All planes must have the same length.
    pub fn for_plane_chunks_mut<T, F>(self, planes: &mut [Vec<T>], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [&mut [T]]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        let mut per_plane: Vec<std::vec::IntoIter<&mut [T]>> = planes
            .iter_mut()
            .map(|p| p.chunks_mut(chunk).collect::<Vec<_>>().into_iter())
            .collect();
        let n_chunks = per_plane.first().map_or(0, |p| p.len());
        let mut groups: Vec<Vec<&mut [T]>> = Vec::with_capacity(n_chunks);
        for _ in 0..n_chunks {
            groups.push(per_plane.iter_mut().map(|it| it.next().unwrap()).collect());
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            groups
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, g)| f(i, g.as_mut_slice()));
            return;
        }
        groups.iter_mut().enumerate().for_each(|(i, g)| f(i, g.as_mut_slice()));
    }

    /// Sums `f(i)` over `0..n` in fixed-size blocks; block sums are added in
    /// index order.
    pub fn sum_range<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        const BLOCK: usize = 4096;
        let blocks = n.div_ceil(BLOCK);
        let partial = self.map_range(blocks, |b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            (lo..hi).map(&f).sum::<f64>()
        });
        partial.into_iter().sum()
    }

    /// Vector-valued variant of [`Exec::sum_range`].
    pub fn sum_range_vec<F>(self, n: usize, width: usize, f: F) -> Vec<f64>
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        const BLOCK: usize = 4096;
        let blocks = n.div_ceil(BLOCK);
        let partial = self.map_range(blocks, |b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            let mut acc = vec![0.0; width];
            for i in lo..hi {
                f(i, &mut acc);
            }
            acc
        });
        let mut total = vec![0.0; width];
        for p in partial {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }
}

/// Installs a global rayon pool with `threads` workers. No-op without the
/// `parallel` feature or if a pool already exists.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
