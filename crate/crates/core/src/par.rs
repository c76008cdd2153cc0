//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the helpers dispatch to rayon when
//! asked for [`Parallelism::Parallel`]. Without it every call runs the
//! sequential path, which is also what `Parallelism::Sequential` selects at
//! runtime. Both paths produce identical results: work items are independent
//! and outputs are collected in index order.

/// Runtime choice between the rayon and the plain iterator code paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_range<T, F>(mode: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Fills consecutive `chunk`-sized pieces of `out`; `f` receives the chunk
/// index and the mutable chunk.
pub fn for_each_chunk<T, F>(mode: Parallelism, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk).enumerate().for_each(|(j, c)| f(j, c));
        return;
    }
    let _ = mode;
    out.chunks_mut(chunk).enumerate().for_each(|(j, c)| f(j, c));
}

/// Runs `f` inside a pool with `threads` workers (0 = rayon default).
/// Without the `parallel` feature this just calls `f`.
pub fn with_pool<R: Send, F: FnOnce() -> R + Send>(threads: usize, f: F) -> R {
    #[cfg(feature = "parallel")]
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if threads > 0 {
            builder = builder.num_threads(threads);
        }
        match builder.build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
