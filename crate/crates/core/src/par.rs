//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature the items are spread over the rayon pool;
//! without it (or with [`Execution::Sequential`]) they run in order on the
//! calling thread. Either way the results come back in input order, so any
//! reduction over them is identical bit for bit.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether `Parallel` actually fans out in this build.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let a = Execution::Parallel.map(&items, |v| v * v);
        let b = Execution::Sequential.map(&items, |v| v * v);
        assert_eq!(a, b);
        assert_eq!(a[999], 999 * 999);
    }
}
