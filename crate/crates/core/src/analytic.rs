//! Closed-form loop statistics.
//!
//! Conventions: "H" and "L" bind to resistor values, not to Alice and Bob.
//! The generator on `R_H` runs at `t_h`, the one on `R_L` at `t_l`. Signed
//! quantities are "H end minus L end". `Σ = R_H + R_c + R_L`. All powers and
//! mean squares carry the factor `4kTΔf` of the unit system in use (see
//! [`NoiseSpec::scale`]).
//!
//! Two published closed forms disagree with the superposition algebra used
//! everywhere else here: the net power difference and the offset MSV
//! difference. Both are kept verbatim ([`delta_p_published`],
//! [`delta_ks_offset_published`]) next to the derived forms so the
//! simulator can decide between them.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::config::{Cable, NoiseSpec, ResistorPair};
use crate::error::{Error, Result};

fn loop_sum(pair: &ResistorPair, r_c: f64) -> f64 {
    pair.r_high + r_c + pair.r_low
}

/// Second moments of the cable observables for zero-mean independent sources
/// with mean squares `s_a`, `s_b`, `s_w`, by superposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopMoments {
    pub msv_a: f64,
    pub msv_b: f64,
    pub msv_i: f64,
    /// ⟨u_ca·u_cb⟩
    pub cov_ab: f64,
    /// ⟨u_ca·i_c⟩
    pub cov_ai: f64,
    /// ⟨u_cb·i_c⟩
    pub cov_bi: f64,
    /// ⟨u_ca²⟩ − ⟨u_cb²⟩, factored so that symmetric loops cancel exactly
    msv_diff: f64,
    /// ⟨(u_ca + u_cb)·i_c⟩, factored likewise
    power_mean: f64,
}

impl LoopMoments {
    pub fn superposition(r_a: f64, r_b: f64, r_c: f64, s_a: f64, s_b: f64, s_w: f64) -> Self {
        // u_ca = [u_a(r_c + r_b) + u_b·r_a − u_w·r_a]/Σ
        // u_cb = [u_a·r_b + u_b(r_a + r_c) + u_w·r_b]/Σ
        // i_c  = (u_a − u_b + u_w)/Σ
        let s2 = (r_a + r_b + r_c).powi(2);
        let (ca, cb) = (r_c + r_b, r_a + r_c);
        Self {
            msv_a: (s_a * ca * ca + (s_b + s_w) * r_a * r_a) / s2,
            msv_b: ((s_a + s_w) * r_b * r_b + s_b * cb * cb) / s2,
            msv_i: (s_a + s_b + s_w) / s2,
            cov_ab: (s_a * ca * r_b + s_b * r_a * cb - s_w * r_a * r_b) / s2,
            cov_ai: (s_a * ca - (s_b + s_w) * r_a) / s2,
            cov_bi: ((s_a + s_w) * r_b - s_b * cb) / s2,
            msv_diff: (r_c * (s_a * (r_c + 2.0 * r_b) - s_b * (r_c + 2.0 * r_a))
                + s_w * (r_a - r_b) * (r_a + r_b))
                / s2,
            power_mean: (s_a * (r_c + 2.0 * r_b) - s_b * (r_c + 2.0 * r_a) + s_w * (r_b - r_a))
                / s2,
        }
    }

    /// Moments with `R_H` at end A.
    pub fn for_pair(
        pair: &ResistorPair,
        cable: &Cable,
        t_h: f64,
        t_l: f64,
        noise: &NoiseSpec,
    ) -> Self {
        Self::superposition(
            pair.r_high,
            pair.r_low,
            cable.r_c,
            noise.msv(pair.r_high, t_h),
            noise.msv(pair.r_low, t_l),
            noise.msv(cable.r_c, cable.temperature),
        )
    }

    /// Mean of `(u_ca + u_cb)·i_c`.
    pub fn power_mean(&self) -> f64 {
        self.power_mean
    }

    pub fn msv_diff(&self) -> f64 {
        self.msv_diff
    }

    /// Per-sample variance of `(u_ca + u_cb)·i_c`: `var(xy) = ⟨x²⟩⟨y²⟩ + ⟨xy⟩²`.
    pub fn power_variance(&self) -> f64 {
        let xx = self.msv_a + self.msv_b + 2.0 * self.cov_ab;
        let xy = self.power_mean();
        xx * self.msv_i + xy * xy
    }

    /// Per-sample variance of `u_ca² − u_cb²`: `2⟨a²⟩² + 2⟨b²⟩² − 4⟨ab⟩²`.
    pub fn msv_diff_variance(&self) -> f64 {
        2.0 * self.msv_a.powi(2) + 2.0 * self.msv_b.powi(2) - 4.0 * self.cov_ab.powi(2)
    }
}

/// Eve's BSY leak at a uniform generator temperature: `4kT_effΔf·|R_c²(R_H−R_L)/Σ²|`.
pub fn delta_ks(pair: &ResistorPair, r_c: f64, noise: &NoiseSpec) -> f64 {
    let s = loop_sum(pair, r_c);
    noise.scale(noise.t_eff) * (r_c * r_c * (pair.r_high - pair.r_low) / (s * s)).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingPowers {
    pub p_hc: f64,
    pub p_lc: f64,
}

/// Cable heating by each generator alone, at `t_eff`.
pub fn heating_powers(pair: &ResistorPair, r_c: f64, noise: &NoiseSpec) -> HeatingPowers {
    let s = loop_sum(pair, r_c);
    let p_hc = noise.scale(noise.t_eff) * pair.r_high * r_c / (s * s);
    HeatingPowers {
        p_hc,
        p_lc: p_hc * pair.alpha(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlows {
    /// Mean power flowing from the H end toward the L end.
    pub p_hl: f64,
    pub p_lh: f64,
}

pub fn power_flows(
    pair: &ResistorPair,
    r_c: f64,
    t_h: f64,
    t_l: f64,
    noise: &NoiseSpec,
) -> PowerFlows {
    let (rh, rl) = (pair.r_high, pair.r_low);
    let s = loop_sum(pair, r_c);
    let (kh, kl) = (noise.scale(t_h), noise.scale(t_l));
    PowerFlows {
        p_hl: rh * (kh * (r_c + rl) - kl * rl) / (s * s),
        p_lh: rl * (kl * (r_c + rh) - kh * rh) / (s * s),
    }
}

/// Net power difference `P_HL − P_LH`, equal to the mean of `(u_cH + u_cL)·i_c`
/// with current taken out of the H end.
pub fn delta_p(pair: &ResistorPair, r_c: f64, t_h: f64, t_l: f64, noise: &NoiseSpec) -> f64 {
    let (rh, rl) = (pair.r_high, pair.r_low);
    let s = loop_sum(pair, r_c);
    (noise.scale(t_h) * rh * (r_c + 2.0 * rl) - noise.scale(t_l) * rl * (r_c + 2.0 * rh)) / (s * s)
}

/// The published closed form for the net power difference at `t_eff`,
/// `4kT_effΔf·R_c(R_H + R_L)/Σ²`. Kept verbatim for comparison.
pub fn delta_p_published(pair: &ResistorPair, r_c: f64, noise: &NoiseSpec) -> f64 {
    let s = loop_sum(pair, r_c);
    noise.scale(noise.t_eff) * r_c * (pair.r_high + pair.r_low) / (s * s)
}

/// Signed `⟨u_cH²⟩ − ⟨u_cL²⟩` with a cold cable and generators at `t_h`, `t_l`.
pub fn delta_msv_two_temp(
    pair: &ResistorPair,
    r_c: f64,
    t_h: f64,
    t_l: f64,
    noise: &NoiseSpec,
) -> f64 {
    let (rh, rl) = (pair.r_high, pair.r_low);
    let s = loop_sum(pair, r_c);
    r_c * (noise.scale(t_h) * rh * (r_c + 2.0 * rl) - noise.scale(t_l) * rl * (r_c + 2.0 * rh))
        / (s * s)
}

/// The published BSY leak under a temperature offset,
/// `4kT_effΔf·R_H·|R_c²(1 − αβ) − αR_H R_c(β − 1)|/Σ²`. Kept verbatim for comparison.
pub fn delta_ks_offset_published(
    pair: &ResistorPair,
    r_c: f64,
    beta: f64,
    noise: &NoiseSpec,
) -> f64 {
    let a = pair.alpha();
    let rh = pair.r_high;
    let s = loop_sum(pair, r_c);
    noise.scale(noise.t_eff)
        * rh
        * (r_c * r_c * (1.0 - a * beta) - a * rh * r_c * (beta - 1.0)).abs()
        / (s * s)
}

/// The published temperature offset `(1 + R_c/R_L)/(1 + R_c/R_H)`.
pub fn beta_published(pair: &ResistorPair, r_c: f64) -> f64 {
    (1.0 + r_c / pair.r_low) / (1.0 + r_c / pair.r_high)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullStatistic {
    NetPower,
    MsvDifference,
}

/// Closed-form root of the derived statistics in β: `R_H(R_c + 2R_L)/(R_L(R_c + 2R_H))`.
pub fn beta_null_closed_form(pair: &ResistorPair, r_c: f64) -> f64 {
    pair.r_high * (r_c + 2.0 * pair.r_low) / (pair.r_low * (r_c + 2.0 * pair.r_high))
}

const ROOT_AGREEMENT: f64 = 1e-12;

/// Bisection on a strictly decreasing function with `f(lo) > 0 > f(hi)`, run
/// until the bracket is two adjacent floats; returns the end with smaller `|f|`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Bracket { low: lo, high: hi });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            (lo, f_lo) = (mid, v);
        } else {
            (hi, f_hi) = (mid, v);
        }
    }
    Ok(if f_lo.abs() <= f_hi.abs() { lo } else { hi })
}

/// The offset β* that zeroes the selected statistic, with `t_h = t_eff` and
/// `t_l = β·t_eff`, found by bisection and checked against the closed form.
pub fn beta_null(pair: &ResistorPair, r_c: f64, statistic: NullStatistic) -> Result<f64> {
    let unit = NoiseSpec {
        t_eff: 1.0,
        ..NoiseSpec::normalized()
    };
    if statistic == NullStatistic::MsvDifference && r_c == 0.0 {
        // identically zero in β; return the r_c → 0 limit of the root
        return Ok(1.0);
    }
    let candidate = beta_null_closed_form(pair, r_c);
    let hi = f64::max(2.0, 2.0 * candidate);
    let root = match statistic {
        NullStatistic::NetPower => {
            bisect_decreasing(|b| delta_p(pair, r_c, 1.0, b, &unit), 1e-9, hi)?
        }
        NullStatistic::MsvDifference => {
            bisect_decreasing(|b| delta_msv_two_temp(pair, r_c, 1.0, b, &unit), 1e-9, hi)?
        }
    };
    if ((root - candidate) / candidate).abs() > ROOT_AGREEMENT {
        return Err(Error::Domain(format!(
            "bisection root {root} disagrees with closed form {candidate}"
        )));
    }
    Ok(root)
}

/// End-MSV difference with the cable and both generators at temperature `t`:
/// `4kTΔf·R_c(R_H − R_L)/Σ`.
pub fn equilibrium_msv_diff(pair: &ResistorPair, r_c: f64, t: f64, noise: &NoiseSpec) -> f64 {
    noise.scale(t) * r_c * (pair.r_high - pair.r_low) / loop_sum(pair, r_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attack {
    SecondLaw,
    Bsy,
}

impl Attack {
    pub const ALL: [Attack; 2] = [Attack::SecondLaw, Attack::Bsy];

    pub fn name(&self) -> &'static str {
        match self {
            Attack::SecondLaw => "second_law",
            Attack::Bsy => "bsy",
        }
    }
}

/// Per-sample statistics of one attack, H end at A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackPrediction {
    pub mean: f64,
    pub std: f64,
    /// `|mean| / std`, per sample.
    pub snr: f64,
}

impl AttackPrediction {
    /// Probability that the sign of an `n`-sample average is right: `Φ(SNR·√n)`.
    pub fn success_probability(&self, n_samples: u64) -> f64 {
        success_probability(self.snr, n_samples)
    }
}

pub fn success_probability(snr: f64, n_samples: u64) -> f64 {
    normal_cdf(snr * (n_samples as f64).sqrt())
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn predict_attack_snr(
    pair: &ResistorPair,
    r_c: f64,
    t_h: f64,
    t_l: f64,
    noise: &NoiseSpec,
    attack: Attack,
) -> AttackPrediction {
    predict_attack(
        &LoopMoments::for_pair(pair, &Cable::cold(r_c), t_h, t_l, noise),
        attack,
    )
}

pub fn predict_attack(m: &LoopMoments, attack: Attack) -> AttackPrediction {
    let (mean, var) = match attack {
        Attack::SecondLaw => (m.power_mean(), m.power_variance()),
        Attack::Bsy => (m.msv_diff(), m.msv_diff_variance()),
    };
    let std = var.max(0.0).sqrt();
    let snr = if mean == 0.0 || std == 0.0 {
        0.0
    } else {
        mean.abs() / std
    };
    AttackPrediction { mean, std, snr }
}

/// Every closed-form quantity for one parameter set. Temperatures: `R_H` at
/// `t_eff`, `R_L` at `beta·t_eff`; the SNR fields also include the cable's
/// own noise when its temperature is non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub delta_ks: f64,
    pub p_hc: f64,
    pub p_lc: f64,
    pub p_hl: f64,
    pub p_lh: f64,
    pub delta_p: f64,
    pub delta_p_paper_eq7: f64,
    pub delta_msv_two_temp: f64,
    pub delta_ks_paper_eq12: f64,
    pub beta_paper: f64,
    pub beta_null_power: f64,
    pub beta_null_msv: f64,
    pub snr_second_law: f64,
    pub snr_bsy: f64,
}

impl AnalyticReport {
    pub fn compute(pair: &ResistorPair, cable: &Cable, noise: &NoiseSpec) -> Result<Self> {
        let r_c = cable.r_c;
        let (t_h, t_l) = (noise.t_eff, noise.beta * noise.t_eff);
        let heat = heating_powers(pair, r_c, noise);
        let flows = power_flows(pair, r_c, t_h, t_l, noise);
        let moments = LoopMoments::for_pair(pair, cable, t_h, t_l, noise);
        let report = Self {
            delta_ks: delta_ks(pair, r_c, noise),
            p_hc: heat.p_hc,
            p_lc: heat.p_lc,
            p_hl: flows.p_hl,
            p_lh: flows.p_lh,
            delta_p: delta_p(pair, r_c, t_h, t_l, noise),
            delta_p_paper_eq7: delta_p_published(pair, r_c, noise),
            delta_msv_two_temp: delta_msv_two_temp(pair, r_c, t_h, t_l, noise),
            delta_ks_paper_eq12: delta_ks_offset_published(pair, r_c, noise.beta, noise),
            beta_paper: beta_published(pair, r_c),
            beta_null_power: beta_null(pair, r_c, NullStatistic::NetPower)?,
            beta_null_msv: beta_null(pair, r_c, NullStatistic::MsvDifference)?,
            snr_second_law: predict_attack(&moments, Attack::SecondLaw).snr,
            snr_bsy: predict_attack(&moments, Attack::Bsy).snr,
        };
        Ok(report)
    }

    /// Places where a published form and its derived counterpart disagree
    /// beyond round-off. These two pairs are the only ones allowed to differ.
    pub fn discrepancies(&self) -> Vec<Discrepancy> {
        [
            Discrepancy::new(
                "delta_p_paper_eq7",
                "delta_p",
                self.delta_p_paper_eq7,
                self.delta_p,
            ),
            Discrepancy::new(
                "delta_ks_paper_eq12",
                "delta_msv_two_temp",
                self.delta_ks_paper_eq12,
                // the published form is an absolute value
                self.delta_msv_two_temp.abs(),
            ),
        ]
        .into_iter()
        .filter(|d| d.relative_gap > 1e-12)
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub published_field: String,
    pub derived_field: String,
    pub published: f64,
    pub derived: f64,
    pub relative_gap: f64,
}

impl Discrepancy {
    fn new(published_field: &str, derived_field: &str, published: f64, derived: f64) -> Self {
        let scale = published.abs().max(derived.abs());
        let relative_gap = if scale == 0.0 {
            0.0
        } else {
            (published - derived).abs() / scale
        };
        Self {
            published_field: published_field.into(),
            derived_field: derived_field.into(),
            published,
            derived,
            relative_gap,
        }
    }
}
