use heavybrw::harness::ReplicateRunner;
use rayon::prelude::*;

/// Runs replicates on a dedicated rayon pool; output order is the index order.
pub struct RayonRunner {
    pool: rayon::ThreadPool,
}

impl RayonRunner {
    /// `workers = 0` lets rayon pick the thread count.
    pub fn new(workers: usize) -> std::io::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(std::io::Error::other)?;
        Ok(RayonRunner { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ReplicateRunner for RayonRunner {
    fn map_replicates<T, F>(&self, count: u64, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(&task).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use heavybrw::harness::Sequential;

    #[test]
    fn matches_sequential_order() {
        let task = |i: u64| i.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 7;
        let seq = Sequential.map_replicates(1000, task);
        for w in [1, 3, 8] {
            assert_eq!(RayonRunner::new(w).unwrap().map_replicates(1000, task), seq);
        }
        assert_eq!(RayonRunner::new(2).unwrap().workers(), 2);
    }
}
