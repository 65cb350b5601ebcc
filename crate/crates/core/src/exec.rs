//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature enabled, work is spread over the rayon pool
//! when the caller asks for it. Without the feature every helper runs on the
//! calling thread. Output order always matches input order.

/// How a data-parallel loop should be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// True when this build can actually run work on a thread pool.
    pub fn is_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Maps `f` over `0..len`, collecting results in index order.
pub fn map_indexed<R, F>(len: usize, mode: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == Parallelism::Parallel {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}

/// Maps `f` over a slice, collecting results in slice order.
pub fn map_slice<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == Parallelism::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let seq = map_indexed(1000, Parallelism::Sequential, |i| i * 3);
        let par = map_indexed(1000, Parallelism::Parallel, |i| i * 3);
        assert_eq!(seq, par);
        let v: Vec<u32> = (0..500).collect();
        assert_eq!(map_slice(&v, Parallelism::Parallel, |x| x + 1), map_slice(&v, Parallelism::Sequential, |x| x + 1));
    }
}
