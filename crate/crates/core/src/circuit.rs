//! The single KLJN loop: Alice's resistor at end A, the lumped cable, Bob's
//! resistor at end B.
//!
//! Orientation is fixed for the whole crate: `i_c` is positive when it flows
//! out of end A into the cable toward end B, and a positive cable EMF `u_w`
//! drives current from A to B. End voltages are node voltages and do not
//! depend on where the EMF sits inside the cable branch.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{Cable, NoiseSpec};
use crate::error::{Error, Result};
use crate::noisegen::NoiseSource;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrangement {
    pub r_a: f64,
    pub r_b: f64,
    pub cable: Cable,
    /// Kelvin.
    pub t_a: f64,
    pub t_b: f64,
}

impl Arrangement {
    pub fn new(r_a: f64, r_b: f64, cable: Cable, t_a: f64, t_b: f64) -> Result<Self> {
        let arr = Self {
            r_a,
            r_b,
            cable,
            t_a,
            t_b,
        };
        if !(r_a >= 0.0 && r_b >= 0.0 && cable.r_c >= 0.0) {
            return Err(Error::Domain("resistances must be >= 0".into()));
        }
        if !(t_a >= 0.0 && t_b >= 0.0 && cable.temperature >= 0.0) {
            return Err(Error::Domain("temperatures must be >= 0".into()));
        }
        if !(arr.loop_sum() > 0.0) {
            return Err(Error::Domain("loop resistance must be > 0".into()));
        }
        Ok(arr)
    }

    pub fn loop_sum(&self) -> f64 {
        self.r_a + self.cable.r_c + self.r_b
    }

    /// The same physical loop seen with ends A and B swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            r_a: self.r_b,
            r_b: self.r_a,
            t_a: self.t_b,
            t_b: self.t_a,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopSample {
    pub u_a: f64,
    pub u_b: f64,
    pub u_w: f64,
    pub u_ca: f64,
    pub u_cb: f64,
    pub i_c: f64,
}

impl LoopSample {
    /// The sample relabeled with A and B swapped: end voltages trade places and
    /// the current changes sign. The cable EMF also flips since it is
    /// oriented A→B.
    pub fn mirrored(&self) -> Self {
        Self {
            u_a: self.u_b,
            u_b: self.u_a,
            u_w: -self.u_w,
            u_ca: self.u_cb,
            u_cb: self.u_ca,
            i_c: -self.i_c,
        }
    }
}

#[inline]
pub fn solve_loop_sample(u_a: f64, u_b: f64, u_w: f64, arr: &Arrangement) -> LoopSample {
    let r_c = arr.cable.r_c;
    let i_c = (u_a - u_b + u_w) / arr.loop_sum();
    let u_ca = u_a - i_c * arr.r_a;
    // KVL across the cable branch; equals u_b + i_c * r_b
    let u_cb = u_ca - (i_c * r_c - u_w);
    LoopSample {
        u_a,
        u_b,
        u_w,
        u_ca,
        u_cb,
        i_c,
    }
}

/// Sample means of the cable observables over one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub n: u64,
    pub msv_a: f64,
    pub msv_b: f64,
    pub msv_i: f64,
    /// Mean of `(u_ca + u_cb) · i_c`.
    pub power_stat: f64,
    /// `msv_a − msv_b`.
    pub msv_diff: f64,
}

impl TraceStats {
    pub fn mirrored(&self) -> Self {
        Self {
            msv_a: self.msv_b,
            msv_b: self.msv_a,
            power_stat: -self.power_stat,
            msv_diff: -self.msv_diff,
            ..*self
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

const CHUNK: usize = 4096;

/// Two-level accumulator: plain sums over chunks of at most [`CHUNK`] samples,
/// compensated sums across chunks.
#[derive(Debug, Clone, Default)]
pub struct TraceAccumulator {
    n: u64,
    aa: KahanSum,
    bb: KahanSum,
    ii: KahanSum,
    power: KahanSum,
    diff: KahanSum,
}

impl TraceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, samples: &[LoopSample]) {
        for chunk in samples.chunks(CHUNK) {
            let (mut aa, mut bb, mut ii, mut p, mut d) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for s in chunk {
                let a2 = s.u_ca * s.u_ca;
                let b2 = s.u_cb * s.u_cb;
                aa += a2;
                bb += b2;
                ii += s.i_c * s.i_c;
                p += (s.u_ca + s.u_cb) * s.i_c;
                d += a2 - b2;
            }
            self.aa.add(aa);
            self.bb.add(bb);
            self.ii.add(ii);
            self.power.add(p);
            self.diff.add(d);
            self.n += chunk.len() as u64;
        }
    }

    pub fn finish(&self) -> Result<TraceStats> {
        if self.n == 0 {
            return Err(Error::EmptyTrace);
        }
        let n = self.n as f64;
        Ok(TraceStats {
            n: self.n,
            msv_a: self.aa.value() / n,
            msv_b: self.bb.value() / n,
            msv_i: self.ii.value() / n,
            power_stat: self.power.value() / n,
            msv_diff: self.diff.value() / n,
        })
    }
}

pub fn trace_statistics(samples: &[LoopSample]) -> Result<TraceStats> {
    let mut acc = TraceAccumulator::new();
    acc.extend(samples);
    acc.finish()
}

/// Seeds of the three independent sources in one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSeeds {
    pub alice: u64,
    pub bob: u64,
    pub cable: u64,
}

impl SourceSeeds {
    /// Seeds derived from a single trace seed.
    pub fn from_trace_seed(seed: u64) -> Self {
        Self {
            alice: seed::hash64(seed, 0, seed::ALICE_NOISE),
            bob: seed::hash64(seed, 0, seed::BOB_NOISE),
            cable: seed::hash64(seed, 0, seed::CABLE_NOISE),
        }
    }
}

pub const DEFAULT_BATCHES: usize = 100;

/// Trace statistics plus per-batch statistics for batch-means error bars.
#[derive(Debug, Clone)]
pub struct BatchedTrace {
    pub stats: TraceStats,
    pub batches: Vec<TraceStats>,
}

impl BatchedTrace {
    /// Standard error of the trace mean of `field`, from the spread of the batch means.
    pub fn stderr(&self, field: impl Fn(&TraceStats) -> f64) -> f64 {
        batch_stderr(&self.batches.iter().map(field).collect::<Vec<_>>())
    }
}

/// Standard error of the grand mean from equally sized batch means.
pub fn batch_stderr(means: &[f64]) -> f64 {
    let k = means.len();
    if k < 2 {
        return f64::INFINITY;
    }
    let kf = k as f64;
    let mean = means.iter().sum::<f64>() / kf;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    (var / kf).sqrt()
}

struct Sources {
    a: NoiseSource,
    b: NoiseSource,
    w: NoiseSource,
    buf: [Vec<f64>; 3],
}

impl Sources {
    fn new(arr: &Arrangement, noise: &NoiseSpec, seeds: SourceSeeds) -> Self {
        let sigma = |r: f64, t: f64| noise.msv(r, t).sqrt();
        let os = noise.oversample.max(1);
        Self {
            a: NoiseSource::new(seeds.alice, sigma(arr.r_a, arr.t_a), os),
            b: NoiseSource::new(seeds.bob, sigma(arr.r_b, arr.t_b), os),
            w: NoiseSource::new(seeds.cable, sigma(arr.cable.r_c, arr.cable.temperature), os),
            buf: [vec![0.0; CHUNK], vec![0.0; CHUNK], vec![0.0; CHUNK]],
        }
    }

    /// Generates the next `len ≤ CHUNK` loop samples into `out`.
    fn next_chunk(&mut self, arr: &Arrangement, len: usize, out: &mut Vec<LoopSample>) {
        let [ba, bb, bw] = &mut self.buf;
        self.a.fill(&mut ba[..len]);
        self.b.fill(&mut bb[..len]);
        self.w.fill(&mut bw[..len]);
        out.clear();
        out.extend((0..len).map(|k| solve_loop_sample(ba[k], bb[k], bw[k], arr)));
    }
}

/// Number of samples actually simulated: oversampled traces keep the same
/// duration at a higher rate.
fn simulated_len(noise: &NoiseSpec, n_samples: u64) -> u64 {
    n_samples * noise.oversample.max(1) as u64
}

/// Simulates a trace split into `batches` equal consecutive batches (the last
/// one absorbs the remainder).
pub fn simulate_batched(
    arr: &Arrangement,
    noise: &NoiseSpec,
    n_samples: u64,
    seeds: SourceSeeds,
    batches: usize,
) -> Result<BatchedTrace> {
    if n_samples == 0 {
        return Err(Error::EmptyTrace);
    }
    let total = simulated_len(noise, n_samples);
    let batches = (batches.max(1) as u64).min(total);
    let per_batch = total / batches;
    let mut sources = Sources::new(arr, noise, seeds);
    let mut chunk = Vec::with_capacity(CHUNK);
    let mut overall = TraceAccumulator::new();
    let mut out = Vec::with_capacity(batches as usize);
    for b in 0..batches {
        let len = if b + 1 == batches {
            total - per_batch * (batches - 1)
        } else {
            per_batch
        };
        let mut acc = TraceAccumulator::new();
        let mut left = len;
        while left > 0 {
            let step = left.min(CHUNK as u64) as usize;
            sources.next_chunk(arr, step, &mut chunk);
            acc.extend(&chunk);
            overall.extend(&chunk);
            left -= step as u64;
        }
        out.push(acc.finish()?);
    }
    Ok(BatchedTrace {
        stats: overall.finish()?,
        batches: out,
    })
}

pub fn simulate_trace(
    arr: &Arrangement,
    noise: &NoiseSpec,
    n_samples: u64,
    seed: u64,
) -> Result<TraceStats> {
    simulate_with_seeds(arr, noise, n_samples, SourceSeeds::from_trace_seed(seed))
}

pub fn simulate_with_seeds(
    arr: &Arrangement,
    noise: &NoiseSpec,
    n_samples: u64,
    seeds: SourceSeeds,
) -> Result<TraceStats> {
    if n_samples == 0 {
        return Err(Error::EmptyTrace);
    }
    let mut sources = Sources::new(arr, noise, seeds);
    let mut chunk = Vec::with_capacity(CHUNK);
    let mut acc = TraceAccumulator::new();
    let mut left = simulated_len(noise, n_samples);
    while left > 0 {
        let step = left.min(CHUNK as u64) as usize;
        sources.next_chunk(arr, step, &mut chunk);
        acc.extend(&chunk);
        left -= step as u64;
    }
    acc.finish()
}

/// The full sample sequence of a trace; same samples `simulate_trace` averages.
pub fn simulate_samples(
    arr: &Arrangement,
    noise: &NoiseSpec,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<LoopSample>> {
    if n_samples == 0 {
        return Err(Error::EmptyTrace);
    }
    let mut sources = Sources::new(arr, noise, SourceSeeds::from_trace_seed(seed));
    let total = simulated_len(noise, n_samples);
    let mut all = Vec::with_capacity(total as usize);
    let mut chunk = Vec::with_capacity(CHUNK);
    let mut left = total;
    while left > 0 {
        let step = left.min(CHUNK as u64) as usize;
        sources.next_chunk(arr, step, &mut chunk);
        all.extend_from_slice(&chunk);
        left -= step as u64;
    }
    Ok(all)
}

/// Debug dump: header `u_ca,u_cb,i_c`, one row per sample, round-trip precision.
pub fn write_trace_dump<W: Write>(out: W, samples: &[LoopSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["u_ca", "u_cb", "i_c"])?;
    for s in samples {
        w.write_record([s.u_ca.to_string(), s.u_cb.to_string(), s.i_c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn arr(r_a: f64, r_b: f64, r_c: f64) -> Arrangement {
        Arrangement::new(r_a, r_b, Cable::cold(r_c), 1e9, 1e9).unwrap()
    }

    #[test]
    fn symmetric_divider() {
        let s = solve_loop_sample(1.0, 0.0, 0.0, &arr(1.0, 1.0, 0.0));
        assert_eq!((s.i_c, s.u_ca, s.u_cb), (0.5, 0.5, 0.5));
    }

    #[test]
    fn equal_sources_no_current() {
        let s = solve_loop_sample(1.0, 1.0, 0.0, &arr(5.0, 5.0, 3.0));
        assert_eq!((s.i_c, s.u_ca, s.u_cb), (0.0, 1.0, 1.0));
    }

    #[test]
    fn ohm_and_kirchhoff_arithmetic() {
        let s = solve_loop_sample(11.1, 0.0, 0.0, &arr(10000.0, 1000.0, 100.0));
        assert_relative_eq!(s.i_c, 1e-3, max_relative = 1e-12);
        assert_relative_eq!(s.u_ca, 1.1, max_relative = 1e-12);
        assert_relative_eq!(s.u_cb, 1.0, max_relative = 1e-12);
        assert_relative_eq!(s.u_ca - s.u_cb, s.i_c * 100.0, max_relative = 1e-12);
    }

    #[test]
    fn ideal_cable_ends_identical() {
        let s = solve_loop_sample(0.37, -1.2, 0.0, &arr(1000.0, 10000.0, 0.0));
        assert_eq!(s.u_ca, s.u_cb);
    }

    #[test]
    fn rejects_empty_loop() {
        assert!(Arrangement::new(0.0, 0.0, Cable::cold(0.0), 1.0, 1.0).is_err());
        assert!(Arrangement::new(-1.0, 2.0, Cable::cold(0.0), 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn superposition(
            u_a in -10.0..10.0f64, u_b in -10.0..10.0f64, u_w in -10.0..10.0f64,
            r_a in 1.0..1e5f64, r_b in 1.0..1e5f64, r_c in 0.0..1e3f64,
        ) {
            let a = arr(r_a, r_b, r_c);
            let full = solve_loop_sample(u_a, u_b, u_w, &a);
            let parts = [
                solve_loop_sample(u_a, 0.0, 0.0, &a),
                solve_loop_sample(0.0, u_b, 0.0, &a),
                solve_loop_sample(0.0, 0.0, u_w, &a),
            ];
            let scale = u_a.abs() + u_b.abs() + u_w.abs();
            let close = |x: f64, y: f64, unit: f64| (x - y).abs() <= 1e-12 * unit.max(f64::MIN_POSITIVE);
            prop_assert!(close(full.i_c, parts.iter().map(|p| p.i_c).sum(), scale / a.loop_sum()));
            prop_assert!(close(full.u_ca, parts.iter().map(|p| p.u_ca).sum(), scale));
            prop_assert!(close(full.u_cb, parts.iter().map(|p| p.u_cb).sum(), scale));
        }

        #[test]
        fn kvl_across_cable(
            u_a in -10.0..10.0f64, u_b in -10.0..10.0f64, u_w in -10.0..10.0f64,
            r_a in 1.0..1e5f64, r_b in 1.0..1e5f64, r_c in 0.0..1e3f64,
        ) {
            let a = arr(r_a, r_b, r_c);
            let s = solve_loop_sample(u_a, u_b, u_w, &a);
            let scale = u_a.abs() + u_b.abs() + u_w.abs();
            prop_assert!((s.u_ca - s.u_cb - (s.i_c * r_c - u_w)).abs() <= 1e-12 * scale);
            // the other end's branch equation
            prop_assert!((s.u_cb - (u_b + s.i_c * r_b)).abs() <= 1e-11 * scale);
        }

        #[test]
        fn mirroring_commutes_with_solving(
            u_a in -10.0..10.0f64, u_b in -10.0..10.0f64, u_w in -10.0..10.0f64,
            r_a in 1.0..1e5f64, r_b in 1.0..1e5f64, r_c in 0.0..1e3f64,
        ) {
            let a = arr(r_a, r_b, r_c);
            let m = solve_loop_sample(u_a, u_b, u_w, &a).mirrored();
            let direct = solve_loop_sample(u_b, u_a, -u_w, &a.mirrored());
            let scale = u_a.abs() + u_b.abs() + u_w.abs();
            prop_assert!((m.i_c - direct.i_c).abs() <= 1e-12 * scale);
            prop_assert!((m.u_ca - direct.u_ca).abs() <= 1e-11 * scale);
            prop_assert!((m.u_cb - direct.u_cb).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn cable_emf_position_irrelevant() {
        // Split the cable into r1 + r2 with the EMF between them; the end
        // voltages come out the same as in the lumped solution.
        let (r_a, r_b, r1, r2) = (1000.0, 10000.0, 30.0, 70.0);
        let (u_a, u_b, u_w) = (0.3, -0.8, 0.5);
        let s = solve_loop_sample(u_a, u_b, u_w, &arr(r_a, r_b, r1 + r2));
        let i = (u_a - u_b + u_w) / (r_a + r1 + r2 + r_b);
        let v_a = u_a - i * r_a;
        let v_b_via_emf = v_a - i * r1 + u_w - i * r2;
        assert_relative_eq!(s.u_ca, v_a, max_relative = 1e-12);
        assert_relative_eq!(s.u_cb, v_b_via_emf, max_relative = 1e-12);
        let v_b_emf_first = v_a + u_w - i * (r1 + r2);
        assert_relative_eq!(s.u_cb, v_b_emf_first, max_relative = 1e-12);
    }

    #[test]
    fn constant_sequence_statistics() {
        let s = LoopSample {
            u_ca: 1.0,
            u_cb: 1.0,
            ..Default::default()
        };
        let t = trace_statistics(&vec![s; 10]).unwrap();
        assert_eq!(
            (t.msv_a, t.msv_b, t.power_stat, t.msv_diff),
            (1.0, 1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn single_sample_statistics() {
        let s = LoopSample {
            u_ca: 2.0,
            u_cb: -3.0,
            i_c: 0.5,
            ..Default::default()
        };
        let t = trace_statistics(&[s]).unwrap();
        assert_eq!(t.n, 1);
        assert_eq!((t.msv_a, t.msv_b, t.msv_i), (4.0, 9.0, 0.25));
        assert_eq!((t.power_stat, t.msv_diff), (-0.5, -5.0));
    }

    #[test]
    fn empty_sequence_is_error() {
        assert!(matches!(trace_statistics(&[]), Err(Error::EmptyTrace)));
    }

    #[test]
    fn single_pass_matches_two_pass_oracle() {
        let a = arr(10000.0, 1000.0, 100.0);
        let samples = simulate_samples(&a, &NoiseSpec::normalized(), 100_000, 17).unwrap();
        let t = trace_statistics(&samples).unwrap();
        // independent oracle: materialize each product, then sum pairwise
        fn pairwise(v: &[f64]) -> f64 {
            if v.len() <= 8 {
                v.iter().sum()
            } else {
                let (l, r) = v.split_at(v.len() / 2);
                pairwise(l) + pairwise(r)
            }
        }
        let n = samples.len() as f64;
        let col = |f: &dyn Fn(&LoopSample) -> f64| {
            pairwise(&samples.iter().map(f).collect::<Vec<_>>()) / n
        };
        let msv_a = col(&|s| s.u_ca * s.u_ca);
        let msv_b = col(&|s| s.u_cb * s.u_cb);
        assert_relative_eq!(t.msv_a, msv_a, max_relative = 1e-12);
        assert_relative_eq!(t.msv_b, msv_b, max_relative = 1e-12);
        assert_relative_eq!(t.msv_i, col(&|s| s.i_c * s.i_c), max_relative = 1e-12);
        assert_relative_eq!(
            t.power_stat,
            col(&|s| (s.u_ca + s.u_cb) * s.i_c),
            max_relative = 1e-10
        );
        assert_relative_eq!(t.msv_diff, msv_a - msv_b, max_relative = 1e-9);
    }

    #[test]
    fn simulate_paths_agree() {
        let a = arr(10000.0, 1000.0, 100.0);
        let n = NoiseSpec::normalized();
        let direct = simulate_trace(&a, &n, 20_000, 5).unwrap();
        let batched =
            simulate_batched(&a, &n, 20_000, SourceSeeds::from_trace_seed(5), 100).unwrap();
        assert_eq!(batched.batches.len(), 100);
        assert_relative_eq!(direct.msv_a, batched.stats.msv_a, max_relative = 1e-13);
        assert_relative_eq!(
            direct.power_stat,
            batched.stats.power_stat,
            max_relative = 1e-12
        );
        let samples = simulate_samples(&a, &n, 20_000, 5).unwrap();
        assert_eq!(trace_statistics(&samples).unwrap(), direct);
    }

    #[test]
    fn zero_temperatures_give_zero_statistics() {
        let a = Arrangement::new(10000.0, 1000.0, Cable::cold(100.0), 0.0, 0.0).unwrap();
        let t = simulate_trace(&a, &NoiseSpec::normalized(), 1000, 1).unwrap();
        assert_eq!(
            (t.msv_a, t.msv_b, t.msv_i, t.power_stat, t.msv_diff),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn zero_samples_is_error() {
        let a = arr(1.0, 2.0, 0.0);
        assert!(simulate_trace(&a, &NoiseSpec::normalized(), 0, 1).is_err());
    }

    #[test]
    fn batch_stderr_of_constant_is_zero() {
        assert_eq!(batch_stderr(&[2.0; 10]), 0.0);
        assert!(batch_stderr(&[1.0]).is_infinite());
    }

    #[test]
    fn trace_dump_format() {
        let s = LoopSample {
            u_ca: 0.5,
            u_cb: -0.25,
            i_c: 1e-3,
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_trace_dump(&mut buf, &[s]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "u_ca,u_cb,i_c\n0.5,-0.25,0.001\n"
        );
    }
}
