//! Domain types, the unit system and configuration validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Boltzmann constant, J/K (exact SI 2019 value).
pub const BOLTZMANN: f64 = 1.380649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitSystem {
    Si,
    /// `4 k t_eff Δf ≡ 1`, so a source at `t_eff` has mean-square EMF equal to its resistance.
    #[default]
    Normalized,
}

/// The public resistor set `{R_L, R_H}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistorPair {
    pub r_low: f64,
    pub r_high: f64,
}

impl ResistorPair {
    pub fn new(r_low: f64, r_high: f64) -> Result<Self> {
        let pair = Self { r_low, r_high };
        let mut v = Vec::new();
        pair.check(&mut v);
        if v.is_empty() {
            Ok(pair)
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// `R_L / R_H`, in (0, 1) for a valid pair.
    pub fn alpha(&self) -> f64 {
        self.r_low / self.r_high
    }

    fn check(&self, v: &mut Vec<Violation>) {
        if !(self.r_low > 0.0 && self.r_low.is_finite()) {
            v.push(violation("r_low", "r_low > 0"));
        }
        if !(self.r_low < self.r_high && self.r_high.is_finite()) {
            v.push(violation("r_high", "r_low < r_high"));
        }
    }
}

/// Lumped cable: one series resistance, optionally noisy at `temperature`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cable {
    pub r_c: f64,
    /// Kelvin. Zero means a noiseless cable resistor.
    pub temperature: f64,
}

impl Cable {
    pub fn cold(r_c: f64) -> Self {
        Self {
            r_c,
            temperature: 0.0,
        }
    }

    fn check(&self, v: &mut Vec<Violation>) {
        if !(self.r_c >= 0.0 && self.r_c.is_finite()) {
            v.push(violation("r_c", "r_c >= 0"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            v.push(violation("cable_temperature", "cable_temperature >= 0"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Kelvin.
    pub t_eff: f64,
    /// Multiplier on the temperature of the generator driving `R_L`.
    pub beta: f64,
    /// Hz.
    pub bandwidth: f64,
    pub oversample: u32,
    pub units: UnitSystem,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            t_eff: 1e9,
            beta: 1.0,
            bandwidth: 5000.0,
            oversample: 1,
            units: UnitSystem::Normalized,
        }
    }
}

impl NoiseSpec {
    pub fn normalized() -> Self {
        Self::default()
    }

    pub fn si(t_eff: f64, bandwidth: f64) -> Self {
        Self {
            t_eff,
            bandwidth,
            units: UnitSystem::Si,
            ..Self::default()
        }
    }

    /// `4 k T Δf` in the session's unit system: the mean-square EMF per ohm
    /// of a Johnson source at temperature `t`.
    pub fn scale(&self, t: f64) -> f64 {
        match self.units {
            UnitSystem::Si => 4.0 * BOLTZMANN * t * self.bandwidth,
            UnitSystem::Normalized => t / self.t_eff,
        }
    }

    /// Mean-square EMF of resistance `r` at temperature `t`.
    pub fn msv(&self, r: f64, t: f64) -> f64 {
        self.scale(t) * r
    }

    fn check(&self, v: &mut Vec<Violation>) {
        if !(self.t_eff > 0.0 && self.t_eff.is_finite()) {
            v.push(violation("t_eff", "t_eff > 0"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            v.push(violation("beta", "beta > 0"));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            v.push(violation("bandwidth", "bandwidth > 0"));
        }
        if self.oversample < 1 {
            v.push(violation("oversample", "oversample >= 1"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", content = "beta")]
pub enum Defense {
    #[default]
    None,
    PaperBeta,
    NullBeta,
    CustomBeta(f64),
    Equilibration,
}

impl Defense {
    pub fn name(&self) -> &'static str {
        match self {
            Defense::None => "none",
            Defense::PaperBeta => "paper-beta",
            Defense::NullBeta => "null-beta",
            Defense::CustomBeta(_) => "custom-beta",
            Defense::Equilibration => "equilibration",
        }
    }
}

pub const MIN_SAMPLES_PER_BIT: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub pair: ResistorPair,
    pub cable: Cable,
    pub noise: NoiseSpec,
    pub bits: u64,
    pub samples_per_bit: u64,
    pub defense: Defense,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            pair: ResistorPair {
                r_low: 1000.0,
                r_high: 10000.0,
            },
            cable: Cable::cold(100.0),
            noise: NoiseSpec::default(),
            bits: 2000,
            samples_per_bit: 10_000,
            defense: Defense::None,
            seed: 0,
        }
    }
}

/// Returns `cfg` unchanged if every invariant holds, otherwise one violation per
/// broken bound.
pub fn validate_config(cfg: SessionConfig) -> Result<SessionConfig> {
    let mut v = Vec::new();
    cfg.pair.check(&mut v);
    cfg.cable.check(&mut v);
    cfg.noise.check(&mut v);
    if cfg.bits < 1 {
        v.push(violation("bits", "bits >= 1"));
    }
    if cfg.samples_per_bit < MIN_SAMPLES_PER_BIT {
        v.push(violation("samples_per_bit", "samples_per_bit >= 100"));
    }
    if let Defense::CustomBeta(b) = cfg.defense {
        if !(b > 0.0 && b.is_finite()) {
            v.push(violation("beta", "custom beta > 0"));
        }
    }
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Invalid(v))
    }
}

fn violation(field: &'static str, bound: &str) -> Violation {
    Violation {
        field,
        bound: bound.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> SessionConfig {
        SessionConfig {
            bits: 100,
            ..SessionConfig::default()
        }
    }

    fn violations(cfg: SessionConfig) -> Vec<String> {
        match validate_config(cfg) {
            Err(Error::Invalid(v)) => v.iter().map(ToString::to_string).collect(),
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn reference_config_is_valid() {
        let cfg = SessionConfig {
            noise: NoiseSpec::si(1e9, 5000.0),
            ..reference()
        };
        assert_eq!(validate_config(cfg).unwrap(), cfg);
    }

    #[test]
    fn equal_resistors_rejected() {
        let mut cfg = reference();
        cfg.pair.r_high = 1000.0;
        let v = violations(cfg);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("r_low < r_high violated"), "{v:?}");
    }

    #[test]
    fn zero_bandwidth_rejected() {
        let mut cfg = reference();
        cfg.noise.bandwidth = 0.0;
        let v = violations(cfg);
        assert!(v[0].contains("bandwidth > 0 violated"), "{v:?}");
    }

    #[test]
    fn violations_are_aggregated() {
        let mut cfg = reference();
        cfg.pair.r_low = 0.0;
        cfg.cable.r_c = -1.0;
        cfg.noise.t_eff = 0.0;
        cfg.samples_per_bit = 99;
        cfg.bits = 0;
        let v = violations(cfg);
        assert_eq!(v.len(), 5, "{v:?}");
        assert!(v.iter().any(|s| s.starts_with("samples_per_bit")));
    }

    #[test]
    fn validation_is_idempotent() {
        let cfg = validate_config(reference()).unwrap();
        let again = validate_config(cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&cfg).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn normalized_scale_is_unity_at_t_eff() {
        let n = NoiseSpec::normalized();
        assert_eq!(n.msv(10000.0, n.t_eff), 10000.0);
        assert_eq!(n.scale(2.0 * n.t_eff), 2.0);
    }

    #[test]
    fn alpha() {
        assert_eq!(reference().pair.alpha(), 0.1);
        assert!(ResistorPair::new(10000.0, 1000.0).is_err());
    }
}
