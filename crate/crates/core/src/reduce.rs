//! Fixed-order parallel reduction over replicas.
//!
//! Replicas are cut into chunks whose size depends only on the replica
//! count. Chunks run in parallel, each folds its replicas sequentially, and
//! the partial aggregates are merged on one thread in chunk order. The
//! result is therefore bit-identical for any worker count.

use rayon::prelude::*;

/// Upper bound on the number of partial aggregates kept alive at once.
const MAX_CHUNKS: usize = 256;
const MIN_CHUNK: usize = 64;

pub trait Merge {
    fn merge(&mut self, other: Self);
}

pub fn chunk_size(replicas: usize) -> usize {
    MIN_CHUNK.max(replicas.div_ceil(MAX_CHUNKS))
}

/// Runs `body(acc, r)` for every replica `r < replicas` and merges the
/// partial accumulators in a thread-count independent order.
pub fn replicate<A, I, B>(replicas: usize, init: I, body: B) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync + Send,
    B: Fn(&mut A, usize) + Sync + Send,
{
    let size = chunk_size(replicas);
    let chunks = replicas.div_ceil(size);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let end = ((c + 1) * size).min(replicas);
            for r in c * size..end {
                body(&mut acc, r);
            }
            acc
        })
        .collect();
    let mut total = init();
    for part in parts {
        total.merge(part);
    }
    total
}

/// Running sums for a scalar Monte Carlo mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAccumulator {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }

    /// Standard error of the mean (unbiased sample variance).
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

impl Merge for MeanAccumulator {
    fn merge(&mut self, other: Self) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }
}

impl<A: Merge> Merge for Vec<A> {
    fn merge(&mut self, other: Self) {
        assert_eq!(self.len(), other.len(), "accumulator shapes differ");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

/// Per-replica records, kept in replica order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Collect<T>(pub Vec<T>);

impl<T> Merge for Collect<T> {
    fn merge(&mut self, other: Self) {
        self.0.extend(other.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_with_threads(threads: usize, n: usize) -> MeanAccumulator {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            replicate(n, MeanAccumulator::default, |acc, r| {
                acc.push(((r as f64) * 0.37).sin() * 1e3 + 1e-7)
            })
        })
    }

    #[test]
    fn bit_identical_across_thread_counts() {
        let a = sum_with_threads(1, 10_007);
        let b = sum_with_threads(2, 10_007);
        let c = sum_with_threads(8, 10_007);
        assert_eq!(a.sum.to_bits(), b.sum.to_bits());
        assert_eq!(a.sum.to_bits(), c.sum.to_bits());
        assert_eq!(a.sum_sq.to_bits(), c.sum_sq.to_bits());
        assert_eq!(a.count, 10_007);
    }

    #[test]
    fn collected_records_keep_replica_order() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let got = pool.install(|| replicate(1000, Collect::default, |acc, r| acc.0.push(r)));
        assert_eq!(got.0, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn chunking_depends_only_on_replicas() {
        assert_eq!(chunk_size(10), 64);
        assert_eq!(chunk_size(1_000_000), 3907);
    }

    #[test]
    fn mean_and_stderr() {
        let mut acc = MeanAccumulator::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            acc.push(x);
        }
        assert_eq!(acc.mean(), 2.5);
        // sample variance 5/3
        assert!((acc.stderr() - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
