//! Executor switch for independent work items (sweep members, audit samples).
//!
//! `Exec::Par` uses rayon when the `parallel` feature is on and silently
//! degrades to sequential iteration otherwise. Results always come back in
//! input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Seq,
    #[default]
    Par,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Par
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Seq => items.iter().map(f).collect(),
            Exec::Par => {
                #[cfg(feature = "parallel")]
                {
                    items.par_iter().map(f).collect()
                }
                #[cfg(not(feature = "parallel"))]
                {
                    items.iter().map(f).collect()
                }
            }
        }
    }
}

/// Run `f` with at most `workers` threads (`None`: all cores).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Some(w) = workers {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..500).collect();
        let a = Exec::Seq.map(&xs, |x| x * x);
        let b = with_workers(Some(3), || Exec::Par.map(&xs, |x| x * x));
        assert_eq!(a, b);
    }
}
