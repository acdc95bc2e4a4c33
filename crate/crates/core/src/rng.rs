//! Counter-based random streams.
//!
//! A stream is addressed by `(seed, stream id)` and every draw by its index
//! within the stream, so the `n`-th variate of a stream never depends on how
//! work was split across threads.

use rand::Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ChaCha words consumed by one `f64`/`u64` draw.
const WORDS_PER_DRAW: u128 = 2;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Positions the stream so the next draw is draw number `index`.
    pub fn at_draw(seed: u64, stream: u64, index: u64) -> Self {
        let mut rng = Self::new(seed, stream);
        rng.inner.set_word_pos(u128::from(index) * WORDS_PER_DRAW);
        rng
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Index of the next draw.
    pub fn draw_index(&self) -> u64 {
        (self.inner.get_word_pos() / WORDS_PER_DRAW) as u64
    }

    /// Uniform variate in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.inner.gen_range(0..n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draws() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 4);
        let xs: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn at_draw_skips_ahead() {
        let mut seq = RngStream::new(11, 0);
        let draws: Vec<f64> = (0..50).map(|_| seq.uniform()).collect();
        for idx in [0u64, 1, 17, 49] {
            let mut jump = RngStream::at_draw(11, 0, idx);
            assert_eq!(jump.draw_index(), idx);
            assert_eq!(jump.uniform().to_bits(), draws[idx as usize].to_bits());
        }
        assert_eq!(seq.draw_index(), 50);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = RngStream::new(1, 1);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
