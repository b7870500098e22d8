//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) work is spread over the rayon
//! thread pool; without it everything runs on the calling thread. Results
//! are always returned in input order.

/// How to evaluate a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Parallel,
    Sequential,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_with(Exec::default(), items, f)
}

pub fn map_with<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let a = map_with(Exec::Parallel, &items, |x| x * x);
        let b = map_with(Exec::Sequential, &items, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[999], 998001);
    }
}
