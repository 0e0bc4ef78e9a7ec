//! Per-item data parallelism with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it, or with [`Workers::Sequential`], items are processed in order
//! on the calling thread. Results always come back in input order, so the
//! worker count never changes outputs.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    Sequential,
    /// Rayon's global pool.
    #[default]
    Auto,
    Threads(usize),
}

impl Workers {
    /// `0` means "let the pool decide", `1` is sequential.
    pub fn from_count(n: usize) -> Self {
        match n {
            0 => Workers::Auto,
            1 => Workers::Sequential,
            n => Workers::Threads(n),
        }
    }
}

/// Maps `f` over `items`, returning the first error in input order.
pub fn try_map<T, R, F>(items: &[T], workers: Workers, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    map(items, workers, f).into_iter().collect()
}

pub fn map<T, R, F>(items: &[T], workers: Workers, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match workers {
        Workers::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Workers::Auto => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Workers::Threads(n) => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => {
                    log::warn!("could not start a {n}-thread pool ({e}), running sequentially");
                    items.iter().map(f).collect()
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        Workers::Auto | Workers::Threads(_) => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        for w in [Workers::Sequential, Workers::Auto, Workers::Threads(4)] {
            let out = map(&items, w, |x| x * x);
            assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
    }

    #[test]
    fn first_error_wins() {
        let items: Vec<usize> = (0..100).collect();
        let err = try_map(&items, Workers::Threads(3), |&i| {
            if i % 30 == 29 {
                Err(Error::UnknownImageId(i.to_string()))
            } else {
                Ok(i)
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::UnknownImageId(ref s) if s == "29"));
    }

    #[test]
    fn worker_counts() {
        assert_eq!(Workers::from_count(0), Workers::Auto);
        assert_eq!(Workers::from_count(1), Workers::Sequential);
        assert_eq!(Workers::from_count(4), Workers::Threads(4));
    }
}
