//! Eve's passive attacks. Everything here is computed from the cable
//! observables `(u_ca, u_cb, i_c)` only; ground truth is consulted solely to
//! score a guess after it has been made.

use serde::{Deserialize, Serialize};

pub use crate::analytic::Attack;
use crate::circuit::TraceStats;
use crate::error::{Error, Result};

/// z for a two-sided 95% interval.
pub const WILSON_Z: f64 = 1.959964;

/// `⟨(u_ca + u_cb)·i_c⟩`, positive when end A supplies more power.
pub fn second_law_statistic(stats: &TraceStats) -> f64 {
    stats.power_stat
}

/// `⟨u_ca²⟩ − ⟨u_cb²⟩`.
pub fn bsy_statistic(stats: &TraceStats) -> f64 {
    stats.msv_diff
}

pub fn statistic(attack: Attack, stats: &TraceStats) -> f64 {
    match attack {
        Attack::SecondLaw => second_law_statistic(stats),
        Attack::Bsy => bsy_statistic(stats),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guess {
    AHasHigh,
    BHasHigh,
}

/// Sign rule: the end that supplies more power (or shows the larger MSV) holds
/// `R_H`. An exact zero is settled by a fair coin derived from `tie_seed`.
pub fn attack_guess(statistic: f64, tie_seed: u64) -> Guess {
    if statistic > 0.0 {
        Guess::AHasHigh
    } else if statistic < 0.0 {
        Guess::BHasHigh
    } else if crate::seed::hash64(tie_seed, 0, 0) & 1 == 0 {
        Guess::AHasHigh
    } else {
        Guess::BHasHigh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attack: Attack,
    pub round_index: u64,
    pub statistic: f64,
    pub guess: Guess,
    pub correct: bool,
}

/// Runs one attack on one round's trace and scores it against the harness's
/// ground truth.
pub fn evaluate(
    attack: Attack,
    round_index: u64,
    stats: &TraceStats,
    tie_seed: u64,
    alice_has_high: bool,
) -> AttackRecord {
    let s = statistic(attack, stats);
    let guess = attack_guess(s, tie_seed);
    AttackRecord {
        attack,
        round_index,
        statistic: s,
        guess,
        correct: (guess == Guess::AHasHigh) == alice_has_high,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessEstimate {
    pub attack: Attack,
    pub n_secure: u64,
    pub n_correct: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = p + z2 / (2.0 * n_f);
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    let low = ((centre - half) / denom).clamp(0.0, p);
    let high = ((centre + half) / denom).clamp(p, 1.0);
    (low, high)
}

pub fn estimate_success(records: &[AttackRecord]) -> Result<SuccessEstimate> {
    let first = records.first().ok_or(Error::EmptyRecords)?;
    if records.iter().any(|r| r.attack != first.attack) {
        return Err(Error::MixedAttacks);
    }
    let n = records.len() as u64;
    let k = records.iter().filter(|r| r.correct).count() as u64;
    let (ci_low, ci_high) = wilson_interval(k, n, WILSON_Z);
    Ok(SuccessEstimate {
        attack: first.attack,
        n_secure: n,
        n_correct: k,
        p_hat: k as f64 / n as f64,
        ci_low,
        ci_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn records(n: usize, correct: usize) -> Vec<AttackRecord> {
        (0..n)
            .map(|i| AttackRecord {
                attack: Attack::SecondLaw,
                round_index: i as u64,
                statistic: 1.0,
                guess: Guess::AHasHigh,
                correct: i < correct,
            })
            .collect()
    }

    #[test]
    fn sign_rule() {
        assert_eq!(attack_guess(7.3e-3, 0), Guess::AHasHigh);
        assert_eq!(attack_guess(-7.3e-3, 0), Guess::BHasHigh);
    }

    #[test]
    fn ties_are_fair() {
        let n = 10_000u64;
        let a = (0..n)
            .filter(|&s| attack_guess(0.0, s) == Guess::AHasHigh)
            .count() as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((a - n as f64 / 2.0).abs() < 4.0 * sd, "{a}");
        // deterministic per seed
        assert_eq!(attack_guess(0.0, 77), attack_guess(0.0, 77));
        assert_eq!(attack_guess(-0.0, 77), attack_guess(0.0, 77));
    }

    #[test]
    fn wilson_half() {
        let e = estimate_success(&records(100, 50)).unwrap();
        assert_eq!(e.p_hat, 0.5);
        assert_relative_eq!(e.ci_low, 0.403_831_4, max_relative = 1e-6);
        assert_relative_eq!(e.ci_high, 0.596_168_6, max_relative = 1e-6);
    }

    #[test]
    fn wilson_all_correct() {
        let e = estimate_success(&records(10, 10)).unwrap();
        assert_eq!((e.p_hat, e.ci_high), (1.0, 1.0));
        assert_relative_eq!(e.ci_low, 0.722_467_3, max_relative = 1e-6);
    }

    #[test]
    fn single_record() {
        let e = estimate_success(&records(1, 0)).unwrap();
        assert_eq!(e.p_hat, 0.0);
        assert_eq!(e.ci_low, 0.0);
        assert!(e.ci_high > 0.7 && e.ci_high < 1.0);
    }

    #[test]
    fn empty_and_mixed_errors() {
        assert!(matches!(estimate_success(&[]), Err(Error::EmptyRecords)));
        let mut r = records(3, 1);
        r[1].attack = Attack::Bsy;
        assert!(matches!(estimate_success(&r), Err(Error::MixedAttacks)));
    }

    #[test]
    fn statistics_read_trace_fields() {
        let t = TraceStats {
            n: 10,
            msv_a: 3.0,
            msv_b: 1.0,
            msv_i: 0.1,
            power_stat: -0.2,
            msv_diff: 2.0,
        };
        assert_eq!(second_law_statistic(&t), -0.2);
        assert_eq!(bsy_statistic(&t), 2.0);
        let m = t.mirrored();
        assert_eq!(second_law_statistic(&m), 0.2);
        assert_eq!(bsy_statistic(&m), -2.0);
    }

    #[test]
    fn scoring_against_truth() {
        let t = TraceStats {
            n: 1,
            msv_a: 1.0,
            msv_b: 1.0,
            msv_i: 1.0,
            power_stat: 0.5,
            msv_diff: -0.5,
        };
        assert!(evaluate(Attack::SecondLaw, 0, &t, 1, true).correct);
        assert!(!evaluate(Attack::Bsy, 0, &t, 1, true).correct);
        assert!(evaluate(Attack::Bsy, 0, &t, 1, false).correct);
    }

    proptest! {
        #[test]
        fn wilson_brackets_estimate(n in 1u64..5000, frac in 0.0..=1.0f64) {
            let k = ((n as f64) * frac).round() as u64;
            let (lo, hi) = wilson_interval(k, n, WILSON_Z);
            let p = k as f64 / n as f64;
            prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        }
    }
}
