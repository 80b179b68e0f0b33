//! Deterministic parallel Monte Carlo.
//!
//! Work is split into fixed-size chunks and chunk `j` draws from ChaCha stream `j`
//! seeded by the master seed. Chunk results are reduced in chunk order, so the
//! output is bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Samples per chunk.
pub const CHUNK_SIZE: usize = 1024;

/// Generator for substream `stream` of `master_seed`.
pub fn substream(master_seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Runs `samples` trials split into chunks and returns the per-chunk results in order.
///
/// `chunk` receives the chunk generator and the number of trials it must run.
pub fn run_chunks<T, F>(samples: usize, master_seed: u64, chunk: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut SimRng, usize) -> T + Sync,
{
    let chunks = samples.div_ceil(CHUNK_SIZE);
    (0..chunks)
        .into_par_iter()
        .map(|j| {
            let len = CHUNK_SIZE.min(samples - j * CHUNK_SIZE);
            let mut rng = substream(master_seed, j as u64);
            chunk(&mut rng, len)
        })
        .collect()
}

/// Streaming mean/variance accumulator (Welford), mergeable in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance; zero with fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Monte Carlo estimate of `E[sample(rng)]` with chunked substreams.
pub fn estimate_mean<F>(samples: usize, master_seed: u64, sample: F) -> Moments
where
    F: Fn(&mut SimRng) -> f64 + Sync,
{
    estimate_mean_with(samples, master_seed, || (), |rng, _| sample(rng))
}

/// [`estimate_mean`] with per-chunk scratch state built by `init`.
pub fn estimate_mean_with<S, I, F>(samples: usize, master_seed: u64, init: I, sample: F) -> Moments
where
    I: Fn() -> S + Sync,
    F: Fn(&mut SimRng, &mut S) -> f64 + Sync,
{
    let parts = run_chunks(samples, master_seed, |rng, len| {
        let mut scratch = init();
        let mut m = Moments::default();
        for _ in 0..len {
            m.push(sample(rng, &mut scratch));
        }
        m
    });
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn moments_match_two_pass() {
        let xs = [1.0, 4.0, 2.5, 7.0, 3.0];
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean - mean).abs() < 1e-12);
        assert!((m.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn merge_equals_sequential() {
        let mut a = Moments::default();
        let mut b = Moments::default();
        let mut all = Moments::default();
        for i in 0..10 {
            let x = (i * i) as f64 * 0.5;
            all.push(x);
            if i < 4 {
                a.push(x)
            } else {
                b.push(x)
            }
        }
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-9);
    }

    #[test]
    fn estimate_is_thread_count_independent() {
        let f = |rng: &mut SimRng| rng.random::<f64>();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| estimate_mean(5000, 9, f));
        let many =
            rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| estimate_mean(5000, 9, f));
        assert_eq!(one.mean.to_bits(), many.mean.to_bits());
        assert_eq!(one.count, 5000);
    }
}
