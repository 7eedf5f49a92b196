//! Data-parallel helpers with a sequential fallback.
//!
//! Every grid sweep, cloud transport and parameter sweep in the crate goes
//! through [`map_range`] or [`map_slice`]. With the `parallel` feature (the
//! default) [`Exec::Auto`] dispatches to rayon; without it, or with
//! [`Exec::Sequential`], the same closure runs on the calling thread. Results
//! are always returned in input order so downstream reductions are
//! deterministic regardless of the thread count.

/// Execution policy for a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    /// Parallel when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Auto,
    Sequential,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Auto
    }
}

/// Map `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, exec: Exec, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Map `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], exec: Exec, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Cap the global worker pool. Returns `false` if the pool was already
/// initialised or parallelism is compiled out.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let par = map_range(1000, Exec::Auto, |i| i * i);
        let seq = map_range(1000, Exec::Sequential, |i| i * i);
        assert_eq!(par, seq);
        let items: Vec<f64> = (0..64).map(|i| i as f64).collect();
        assert_eq!(
            map_slice(&items, Exec::Auto, |x| x.sqrt()),
            map_slice(&items, Exec::Sequential, |x| x.sqrt())
        );
    }
}
