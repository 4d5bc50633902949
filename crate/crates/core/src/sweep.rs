//! Parameter sweeps: one session (or one analytic evaluation) per value.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{Attack, LoopMoments};
use crate::config::{validate_config, Defense, SessionConfig};
use crate::eavesdropper::SuccessEstimate;
use crate::error::{Error, Result, Violation};
use crate::protocol::{apply_defense, run_session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    RC,
    Beta,
    SamplesPerBit,
    Bandwidth,
}

impl FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "r_c" | "rc" => Ok(Self::RC),
            "beta" => Ok(Self::Beta),
            "samples_per_bit" | "samples-per-bit" => Ok(Self::SamplesPerBit),
            "bandwidth" => Ok(Self::Bandwidth),
            other => Err(format!(
                "unknown sweep parameter {other:?} (expected r_c, beta, samples_per_bit or bandwidth)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub base: SessionConfig,
    pub attacks: Vec<Attack>,
}

impl SweepSpec {
    /// `base` with `value` substituted for the swept parameter. A beta value
    /// becomes a custom-beta defense.
    pub fn point(&self, value: f64) -> SessionConfig {
        let mut cfg = self.base;
        match self.parameter {
            SweepParameter::RC => cfg.cable.r_c = value,
            SweepParameter::Beta => cfg.defense = Defense::CustomBeta(value),
            SweepParameter::SamplesPerBit => cfg.samples_per_bit = value as u64,
            SweepParameter::Bandwidth => cfg.noise.bandwidth = value,
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.values.is_empty() {
            v.push(Violation {
                field: "values",
                bound: "values non-empty".into(),
            });
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            v.push(Violation {
                field: "values",
                bound: "values strictly increasing".into(),
            });
        }
        if self.parameter == SweepParameter::SamplesPerBit
            && self.values.iter().any(|x| x.fract() != 0.0)
        {
            v.push(Violation {
                field: "values",
                bound: "samples_per_bit values are integers".into(),
            });
        }
        for &x in &self.values {
            if let Err(Error::Invalid(mut inner)) = validate_config(self.point(x)) {
                v.append(&mut inner);
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Expected `⟨u_cH²⟩ − ⟨u_cL²⟩` at this point's temperatures.
    pub delta_ks: f64,
    /// Expected `⟨(u_cH + u_cL)·i_c⟩`, current out of the H end.
    pub delta_p: f64,
    /// Measured, H-oriented, averaged over secure rounds.
    pub msv_diff: Option<f64>,
    pub power_stat: Option<f64>,
    pub second_law: Option<SuccessEstimate>,
    pub bsy: Option<SuccessEstimate>,
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "value",
    "delta_ks",
    "delta_p",
    "msv_diff",
    "power_stat",
    "p_hat_second_law",
    "ci_low_second_law",
    "ci_high_second_law",
    "p_hat_bsy",
    "ci_low_bsy",
    "ci_high_bsy",
];

pub fn analytic_point(spec: &SweepSpec, value: f64) -> Result<SweepRow> {
    let cfg = validate_config(spec.point(value))?;
    let rule = apply_defense(&cfg)?;
    let m = LoopMoments::for_pair(
        &cfg.pair,
        &rule.cable(cfg.cable.r_c),
        rule.t_high,
        rule.t_low,
        &cfg.noise,
    );
    Ok(SweepRow {
        value,
        delta_ks: m.msv_diff(),
        delta_p: m.power_mean(),
        msv_diff: None,
        power_stat: None,
        second_law: None,
        bsy: None,
    })
}

pub fn simulated_point(spec: &SweepSpec, value: f64) -> Result<SweepRow> {
    let mut row = analytic_point(spec, value)?;
    let result = run_session(&spec.point(value))?;
    if result.alice_key.is_empty() {
        return Ok(row);
    }
    row.msv_diff = Some(result.oriented_mean(Attack::Bsy).mean);
    row.power_stat = Some(result.oriented_mean(Attack::SecondLaw).mean);
    let pick = |a: Attack| {
        spec.attacks
            .contains(&a)
            .then(|| result.estimate(a).copied())
            .flatten()
    };
    row.second_law = pick(Attack::SecondLaw);
    row.bsy = pick(Attack::Bsy);
    Ok(row)
}

/// Evaluates every point, concurrently on the current rayon pool; rows come
/// back in sweep order.
pub fn run_sweep(spec: &SweepSpec, simulate: bool) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.values
        .par_iter()
        .map(|&v| {
            if simulate {
                simulated_point(spec, v)
            } else {
                analytic_point(spec, v)
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.value.to_string(),
            r.delta_ks.to_string(),
            r.delta_p.to_string(),
            opt(r.msv_diff),
            opt(r.power_stat),
        ];
        for est in [&r.second_law, &r.bsy] {
            rec.push(opt(est.map(|e| e.p_hat)));
            rec.push(opt(est.map(|e| e.ci_low)));
            rec.push(opt(est.map(|e| e.ci_high)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(parameter: SweepParameter, values: Vec<f64>) -> SweepSpec {
        SweepSpec {
            parameter,
            values,
            base: SessionConfig {
                bits: 40,
                samples_per_bit: 1000,
                ..SessionConfig::default()
            },
            attacks: Attack::ALL.to_vec(),
        }
    }

    #[test]
    fn rejects_bad_value_lists() {
        assert!(spec(SweepParameter::RC, vec![]).validate().is_err());
        assert!(spec(SweepParameter::RC, vec![2.0, 1.0]).validate().is_err());
        assert!(spec(SweepParameter::RC, vec![1.0, 1.0]).validate().is_err());
        assert!(spec(SweepParameter::RC, vec![-1.0, 1.0])
            .validate()
            .is_err());
        assert!(spec(SweepParameter::SamplesPerBit, vec![50.0, 200.0])
            .validate()
            .is_err());
        assert!(spec(SweepParameter::SamplesPerBit, vec![100.5])
            .validate()
            .is_err());
        assert!(spec(SweepParameter::Bandwidth, vec![1.0, 2.0])
            .validate()
            .is_ok());
    }

    #[test]
    fn parameter_names() {
        assert_eq!("r_c".parse::<SweepParameter>().unwrap(), SweepParameter::RC);
        assert_eq!(
            "beta".parse::<SweepParameter>().unwrap(),
            SweepParameter::Beta
        );
        assert!("x".parse::<SweepParameter>().is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<_> = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(1.7)))
            .collect();
        assert!((log_log_slope(&pts) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn rows_in_order_and_csv_header() {
        let s = spec(SweepParameter::RC, vec![10.0, 50.0, 100.0]);
        let rows = run_sweep(&s, true).unwrap();
        assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), s.values);
        assert!(rows
            .iter()
            .all(|r| r.second_law.is_some() && r.msv_diff.is_some()));
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn analytic_only_leaves_measured_columns_empty() {
        let rows = run_sweep(&spec(SweepParameter::Beta, vec![1.0, 1.05]), false).unwrap();
        assert!(rows[0].msv_diff.is_none());
        assert!(rows[0].delta_p > 0.0 && rows[1].delta_p < 0.0);
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let line = String::from_utf8(buf)
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .to_string();
        assert!(line.ends_with(",,,,,,,,"), "{line}");
    }
}
