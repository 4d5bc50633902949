//! The KLJN session engine.
//!
//! Each round, Alice and Bob pick a resistor independently and uniformly,
//! the loop is simulated with fresh noise, and both parties classify the
//! loop from the current MSV `⟨I_c²⟩`, which is the same at both ends. The
//! class together with a party's own choice reveals the other party's
//! choice. Rounds where the choices differ are secure and feed the key.
//! Eve attacks only those rounds.
//!
//! Key convention: Alice's key bit is Bob's choice as Alice infers it, Bob's
//! key bit is his own choice (`H` = 1). An indeterminate inference is
//! recorded as Alice's own bit, which is always wrong in a secure round.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, predict_attack, Attack, LoopMoments, NullStatistic};
use crate::circuit::{self, Arrangement, SourceSeeds, TraceStats};
use crate::config::{validate_config, Cable, Defense, NoiseSpec, ResistorPair, SessionConfig};
use crate::eavesdropper::{self, AttackRecord, SuccessEstimate};
use crate::error::{Error, Result};
use crate::seed::{self, hash64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    L,
    H,
}

impl Choice {
    fn from_seed(s: u64) -> Self {
        if s & 1 == 0 {
            Choice::L
        } else {
            Choice::H
        }
    }

    pub fn other(self) -> Self {
        match self {
            Choice::L => Choice::H,
            Choice::H => Choice::L,
        }
    }

    pub fn bit(self) -> bool {
        self == Choice::H
    }

    pub fn resistance(self, pair: &ResistorPair) -> f64 {
        match self {
            Choice::L => pair.r_low,
            Choice::H => pair.r_high,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Choice::L => "L",
            Choice::H => "H",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopClass {
    LL,
    Mixed,
    HH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inference {
    L,
    H,
    Indeterminate,
}

/// What a party holding `own` concludes about the other party from the loop class.
pub fn infer_other(own: Choice, class: LoopClass) -> Inference {
    match (class, own) {
        (LoopClass::Mixed, Choice::L) => Inference::H,
        (LoopClass::Mixed, Choice::H) => Inference::L,
        (LoopClass::LL, Choice::L) => Inference::L,
        (LoopClass::HH, Choice::H) => Inference::H,
        _ => Inference::Indeterminate,
    }
}

/// Generator temperatures a party uses, decided from its own choice only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRule {
    pub beta: f64,
    /// Kelvin, for a party that connected `R_L`.
    pub t_low: f64,
    /// Kelvin, for a party that connected `R_H`.
    pub t_high: f64,
    pub cable_temperature: f64,
}

impl TemperatureRule {
    pub fn temperature(&self, choice: Choice) -> f64 {
        match choice {
            Choice::L => self.t_low,
            Choice::H => self.t_high,
        }
    }

    pub fn cable(&self, r_c: f64) -> Cable {
        Cable {
            r_c,
            temperature: self.cable_temperature,
        }
    }
}

pub fn apply_defense(cfg: &SessionConfig) -> Result<TemperatureRule> {
    let t = cfg.noise.t_eff;
    let mut cable_temperature = cfg.cable.temperature;
    let beta = match cfg.defense {
        Defense::None => cfg.noise.beta,
        Defense::PaperBeta => analytic::beta_published(&cfg.pair, cfg.cable.r_c),
        Defense::NullBeta => {
            analytic::beta_null(&cfg.pair, cfg.cable.r_c, NullStatistic::NetPower)?
        }
        Defense::CustomBeta(b) => b,
        Defense::Equilibration => {
            if cfg.noise.beta != 1.0 {
                return Err(Error::DefenseConflict(format!(
                    "equilibration requires beta = 1, got {}",
                    cfg.noise.beta
                )));
            }
            cable_temperature = t;
            1.0
        }
    };
    Ok(TemperatureRule {
        beta,
        t_low: beta * t,
        t_high: t,
        cable_temperature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub level_ll: f64,
    pub level_mixed: f64,
    pub level_hh: f64,
    pub boundary_low: f64,
    pub boundary_high: f64,
}

/// Expected `⟨I_c²⟩` of the three loop classes and the geometric-mean
/// boundaries between them.
pub fn derive_thresholds(
    pair: &ResistorPair,
    cable: &Cable,
    noise: &NoiseSpec,
    rule: &TemperatureRule,
) -> Result<Thresholds> {
    let cable = rule.cable(cable.r_c);
    let level = |a: Choice, b: Choice| {
        let (ra, rb) = (a.resistance(pair), b.resistance(pair));
        let s = ra + rb + cable.r_c;
        (noise.msv(ra, rule.temperature(a))
            + noise.msv(rb, rule.temperature(b))
            + noise.msv(cable.r_c, cable.temperature))
            / (s * s)
    };
    let ll = level(Choice::L, Choice::L);
    let mixed = level(Choice::L, Choice::H);
    let hh = level(Choice::H, Choice::H);
    if !(ll > mixed && mixed > hh && hh > 0.0) {
        return Err(Error::DegenerateLevels(format!(
            "expected LL > MIXED > HH > 0, got {ll} / {mixed} / {hh}"
        )));
    }
    Ok(Thresholds {
        level_ll: ll,
        level_mixed: mixed,
        level_hh: hh,
        boundary_low: (ll * mixed).sqrt(),
        boundary_high: (mixed * hh).sqrt(),
    })
}

pub fn classify_arrangement(msv_i: f64, th: &Thresholds) -> LoopClass {
    if msv_i > th.boundary_low {
        LoopClass::LL
    } else if msv_i < th.boundary_high {
        LoopClass::HH
    } else {
        LoopClass::Mixed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitRound {
    pub index: u64,
    pub alice_choice: Choice,
    pub bob_choice: Choice,
    pub secure: bool,
    pub stats: TraceStats,
    pub class: LoopClass,
    pub alice_inferred_bob: Inference,
    pub bob_inferred_alice: Inference,
    pub second_law: Option<AttackRecord>,
    pub bsy: Option<AttackRecord>,
}

impl BitRound {
    pub fn record(&self, attack: Attack) -> Option<&AttackRecord> {
        match attack {
            Attack::SecondLaw => self.second_law.as_ref(),
            Attack::Bsy => self.bsy.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub rule: TemperatureRule,
    pub thresholds: Thresholds,
    pub rounds: Vec<BitRound>,
    pub secure_fraction: f64,
    pub alice_key: Vec<bool>,
    pub bob_key: Vec<bool>,
    pub key_mismatches: u64,
    pub attack_results: Vec<SuccessEstimate>,
}

/// Mean of a per-round statistic over secure rounds, sign-flipped so that
/// positive means "points at the `R_H` end", with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedMean {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl SessionResult {
    pub fn secure_rounds(&self) -> impl Iterator<Item = &BitRound> {
        self.rounds.iter().filter(|r| r.secure)
    }

    pub fn records(&self, attack: Attack) -> Vec<AttackRecord> {
        self.rounds
            .iter()
            .filter_map(|r| r.record(attack).copied())
            .collect()
    }

    pub fn estimate(&self, attack: Attack) -> Option<&SuccessEstimate> {
        self.attack_results.iter().find(|e| e.attack == attack)
    }

    pub fn oriented_mean(&self, attack: Attack) -> OrientedMean {
        let v: Vec<f64> = self
            .secure_rounds()
            .map(|r| {
                let s = eavesdropper::statistic(attack, &r.stats);
                if r.alice_choice == Choice::H {
                    s
                } else {
                    -s
                }
            })
            .collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        OrientedMean {
            mean,
            stderr: (var / n).sqrt(),
            n: v.len() as u64,
        }
    }

    /// Per-round CSV with a fixed column order.
    pub fn write_rounds_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ROUND_COLUMNS)?;
        let flag = |r: Option<&AttackRecord>| r.map(|r| r.correct.to_string()).unwrap_or_default();
        for r in &self.rounds {
            w.write_record([
                r.index.to_string(),
                r.alice_choice.label().to_string(),
                r.bob_choice.label().to_string(),
                r.secure.to_string(),
                r.stats.msv_a.to_string(),
                r.stats.msv_b.to_string(),
                r.stats.msv_i.to_string(),
                r.stats.power_stat.to_string(),
                r.stats.msv_diff.to_string(),
                flag(r.second_law.as_ref()),
                flag(r.bsy.as_ref()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const ROUND_COLUMNS: [&str; 11] = [
    "index",
    "alice_choice",
    "bob_choice",
    "secure",
    "msv_a",
    "msv_b",
    "msv_i",
    "power_stat",
    "msv_diff",
    "sl_guess_correct",
    "bsy_guess_correct",
];

/// Simulates one round. Pure in `(cfg, index)`.
pub fn run_round(
    cfg: &SessionConfig,
    rule: &TemperatureRule,
    th: &Thresholds,
    index: u64,
) -> Result<BitRound> {
    let s = cfg.seed;
    let alice = Choice::from_seed(hash64(s, index, seed::ALICE_CHOICE));
    let bob = Choice::from_seed(hash64(s, index, seed::BOB_CHOICE));
    let arr = Arrangement::new(
        alice.resistance(&cfg.pair),
        bob.resistance(&cfg.pair),
        rule.cable(cfg.cable.r_c),
        rule.temperature(alice),
        rule.temperature(bob),
    )?;
    let seeds = SourceSeeds {
        alice: hash64(s, index, seed::ALICE_NOISE),
        bob: hash64(s, index, seed::BOB_NOISE),
        cable: hash64(s, index, seed::CABLE_NOISE),
    };
    let stats = circuit::simulate_with_seeds(&arr, &cfg.noise, cfg.samples_per_bit, seeds)?;
    let class = classify_arrangement(stats.msv_i, th);
    let secure = alice != bob;
    let attack = |a: Attack, party| {
        secure.then(|| {
            eavesdropper::evaluate(
                a,
                index,
                &stats,
                hash64(s, index, party),
                alice == Choice::H,
            )
        })
    };
    Ok(BitRound {
        index,
        alice_choice: alice,
        bob_choice: bob,
        secure,
        stats,
        class,
        alice_inferred_bob: infer_other(alice, class),
        bob_inferred_alice: infer_other(bob, class),
        second_law: attack(Attack::SecondLaw, seed::TIE_SECOND_LAW),
        bsy: attack(Attack::Bsy, seed::TIE_BSY),
    })
}

pub fn run_session(cfg: &SessionConfig) -> Result<SessionResult> {
    let cfg = validate_config(*cfg)?;
    let rule = apply_defense(&cfg)?;
    let thresholds = derive_thresholds(&cfg.pair, &cfg.cable, &cfg.noise, &rule)?;
    let rounds = (0..cfg.bits)
        .into_par_iter()
        .map(|i| run_round(&cfg, &rule, &thresholds, i))
        .collect::<Result<Vec<_>>>()?;

    let mut alice_key = Vec::new();
    let mut bob_key = Vec::new();
    for r in rounds.iter().filter(|r| r.secure) {
        alice_key.push(match r.alice_inferred_bob {
            Inference::H => true,
            Inference::L => false,
            Inference::Indeterminate => r.alice_choice.bit(),
        });
        bob_key.push(r.bob_choice.bit());
    }
    let key_mismatches = alice_key
        .iter()
        .zip(&bob_key)
        .filter(|(a, b)| a != b)
        .count() as u64;

    let mut attack_results = Vec::new();
    for attack in Attack::ALL {
        let records: Vec<_> = rounds
            .iter()
            .filter_map(|r| r.record(attack).copied())
            .collect();
        if !records.is_empty() {
            attack_results.push(eavesdropper::estimate_success(&records)?);
        }
    }

    Ok(SessionResult {
        rule,
        thresholds,
        secure_fraction: alice_key.len() as f64 / rounds.len() as f64,
        rounds,
        alice_key,
        bob_key,
        key_mismatches,
        attack_results,
    })
}

/// Closed-form per-sample prediction for Eve in a secure round under `rule`.
pub fn predicted_attack(
    cfg: &SessionConfig,
    rule: &TemperatureRule,
    attack: Attack,
) -> analytic::AttackPrediction {
    let m = LoopMoments::for_pair(
        &cfg.pair,
        &rule.cable(cfg.cable.r_c),
        rule.t_high,
        rule.t_low,
        &cfg.noise,
    );
    predict_attack(&m, attack)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attack: Attack,
    pub measured_mean: f64,
    pub measured_stderr: f64,
    pub predicted_mean: f64,
    pub predicted_snr: f64,
    pub predicted_success: f64,
}

/// JSON summary of a session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub config: SessionConfig,
    pub rule: TemperatureRule,
    pub thresholds: Thresholds,
    pub rounds: u64,
    pub secure_rounds: u64,
    pub secure_fraction: f64,
    pub key_mismatches: u64,
    pub attacks: Vec<SuccessEstimate>,
    pub statistics: Vec<AttackSummary>,
}

impl SessionSummary {
    pub fn new(cfg: &SessionConfig, result: &SessionResult) -> Self {
        let statistics = Attack::ALL
            .iter()
            .filter(|a| result.estimate(**a).is_some())
            .map(|&attack| {
                let m = result.oriented_mean(attack);
                let p = predicted_attack(cfg, &result.rule, attack);
                AttackSummary {
                    attack,
                    measured_mean: m.mean,
                    measured_stderr: m.stderr,
                    predicted_mean: p.mean,
                    predicted_snr: p.snr,
                    predicted_success: p.success_probability(cfg.samples_per_bit),
                }
            })
            .collect();
        Self {
            config: *cfg,
            rule: result.rule,
            thresholds: result.thresholds,
            rounds: result.rounds.len() as u64,
            secure_rounds: result.alice_key.len() as u64,
            secure_fraction: result.secure_fraction,
            key_mismatches: result.key_mismatches,
            attacks: result.attack_results.clone(),
            statistics,
        }
    }
}
