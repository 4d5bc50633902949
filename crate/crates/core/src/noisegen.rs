//! Seeded Gaussian thermal-noise streams.
//!
//! Generator: ChaCha8 keyed by `seed`, with one ChaCha stream id per block of
//! [`BLOCK_LEN`] samples, so block `k` of a stream can be produced without
//! generating blocks `0..k`. Gaussian transform: the Ziggurat sampler of
//! `rand_distr::StandardNormal`. The golden-sequence tests below pin both.
//!
//! Sampling is critical: one sample per Nyquist interval `1/(2Δf)`, so
//! i.i.d. samples with variance `4kTRΔf` are exactly band-limited white
//! noise of the right total power. The `oversample > 1` path generates at
//! `oversample · 2Δf` and applies a brick-wall low-pass at Δf per block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::config::BOLTZMANN;
use crate::error::{Error, Result};

pub const BLOCK_LEN: u64 = 1024;

/// Johnson's formula in SI units: `4 k T R Δf`, volts².
pub fn johnson_msv(r: f64, t: f64, bandwidth: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("resistance must be >= 0, got {r}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("temperature must be >= 0, got {t}")));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Domain(format!(
            "bandwidth must be > 0, got {bandwidth}"
        )));
    }
    Ok(4.0 * BOLTZMANN * t * r * bandwidth)
}

/// Zero-mean Gaussian samples with standard deviation `sigma`, deterministic in `seed`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    sigma: f64,
    position: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, sigma: f64) -> Self {
        Self::at(seed, sigma, 0)
    }

    /// A stream positioned at sample `position`; yields the same values the
    /// stream from 0 would yield from that index on.
    pub fn at(seed: u64, sigma: f64, position: u64) -> Self {
        assert!(sigma >= 0.0, "sigma must be non-negative");
        let mut s = Self {
            seed,
            sigma,
            position,
            rng: block_rng(seed, position / BLOCK_LEN),
        };
        for _ in 0..position % BLOCK_LEN {
            let _: f64 = s.rng.sample(StandardNormal);
        }
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    #[inline]
    pub fn next_sample(&mut self) -> f64 {
        if self.position > 0 && self.position.is_multiple_of(BLOCK_LEN) {
            self.rng = block_rng(self.seed, self.position / BLOCK_LEN);
        }
        self.position += 1;
        let z: f64 = self.rng.sample(StandardNormal);
        if self.sigma == 0.0 {
            0.0
        } else {
            z * self.sigma
        }
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next_sample();
        }
    }
}

impl Iterator for NoiseStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_sample())
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

pub fn gaussian_stream(seed: u64, count: usize, sigma: f64) -> Vec<f64> {
    NoiseStream::new(seed, sigma).take(count).collect()
}

/// Source of per-sample EMFs for the loop simulator: white at the critical
/// rate, or brick-wall filtered when oversampling.
pub struct NoiseSource {
    stream: NoiseStream,
    filter: Option<BrickWall>,
}

struct BrickWall {
    oversample: usize,
    buffer: Vec<f64>,
    cursor: usize,
    work: Vec<Complex<f64>>,
    forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

const FILTER_BLOCK: usize = 4096;

impl NoiseSource {
    pub fn new(seed: u64, sigma: f64, oversample: u32) -> Self {
        let filter = (oversample > 1).then(|| {
            let mut planner = FftPlanner::new();
            BrickWall {
                oversample: oversample as usize,
                buffer: vec![0.0; FILTER_BLOCK],
                cursor: FILTER_BLOCK,
                work: vec![Complex::default(); FILTER_BLOCK],
                forward: planner.plan_fft_forward(FILTER_BLOCK),
                inverse: planner.plan_fft_inverse(FILTER_BLOCK),
            }
        });
        Self {
            stream: NoiseStream::new(seed, sigma),
            filter,
        }
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        let Some(f) = self.filter.as_mut() else {
            self.stream.fill(out);
            return;
        };
        for x in out {
            if f.cursor == FILTER_BLOCK {
                f.refill(&mut self.stream);
            }
            *x = f.buffer[f.cursor];
            f.cursor += 1;
        }
    }
}

impl BrickWall {
    fn refill(&mut self, stream: &mut NoiseStream) {
        let n = FILTER_BLOCK;
        for c in self.work.iter_mut() {
            *c = Complex::new(stream.next_sample(), 0.0);
        }
        self.forward.process(&mut self.work);
        // keep |f| <= Δf, i.e. bins 0..=cutoff and their mirrors
        let cutoff = n / (2 * self.oversample);
        for (k, c) in self.work.iter_mut().enumerate() {
            let freq = k.min(n - k);
            if freq > cutoff {
                *c = Complex::default();
            }
        }
        self.inverse.process(&mut self.work);
        // restore the unfiltered variance: the pass band holds 1/oversample of it
        let gain = (self.oversample as f64).sqrt() / n as f64;
        for (b, c) in self.buffer.iter_mut().zip(&self.work) {
            *b = c.re * gain;
        }
        self.cursor = 0;
    }
}

pub fn band_limited_stream(seed: u64, count: usize, sigma: f64, oversample: u32) -> Vec<f64> {
    let mut out = vec![0.0; count];
    NoiseSource::new(seed, sigma, oversample).fill(&mut out);
    out
}
