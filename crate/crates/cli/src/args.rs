use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kljn_core::analytic::Attack;
use kljn_core::sweep::SweepParameter;
use kljn_core::{Cable, Defense, NoiseSpec, ResistorPair, SessionConfig, UnitSystem};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "kljn",
    version,
    about = "KLJN key exchange laboratory: closed forms, Monte Carlo sessions, sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print every closed-form quantity as one JSON object
    Analytic(SessionFlags),
    /// Run one key-exchange session and print a JSON summary
    Simulate(SimulateArgs),
    /// Run one session (or analytic evaluation) per parameter value, CSV out
    Sweep(SweepArgs),
    /// Print the published and the root-found temperature offsets
    Beta(BetaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DefenseArg {
    None,
    PaperBeta,
    NullBeta,
    CustomBeta,
    Equilibration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackArg {
    SecondLaw,
    Bsy,
}

impl From<AttackArg> for Attack {
    fn from(a: AttackArg) -> Self {
        match a {
            AttackArg::SecondLaw => Attack::SecondLaw,
            AttackArg::Bsy => Attack::Bsy,
        }
    }
}

/// Session parameters. Each flag has a config-file key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct SessionFlags {
    /// key=value file; flags given on the command line win
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Low resistance R_L, ohms [default: 1000]
    #[arg(long)]
    pub rl: Option<f64>,
    /// High resistance R_H, ohms [default: 10000]
    #[arg(long)]
    pub rh: Option<f64>,
    /// Cable resistance, ohms [default: 100]
    #[arg(long)]
    pub rc: Option<f64>,
    /// Cable temperature, kelvin [default: 0]
    #[arg(long = "cable-temp")]
    pub cable_temp: Option<f64>,
    /// Effective noise temperature, kelvin [default: 1e9]
    #[arg(long = "t-eff")]
    pub t_eff: Option<f64>,
    /// Noise bandwidth, Hz [default: 5000]
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Temperature multiplier for the R_L generator [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Oversampling factor with brick-wall low-pass [default: 1]
    #[arg(long)]
    pub oversample: Option<u32>,
    /// Normalized units, 4kT_effΔf = 1 (the default)
    #[arg(long, conflicts_with = "si")]
    pub normalized: bool,
    /// SI units
    #[arg(long)]
    pub si: bool,
    /// Number of bit rounds [default: 2000]
    #[arg(long)]
    pub bits: Option<u64>,
    /// Samples per bit round [default: 10000]
    #[arg(long = "samples-per-bit")]
    pub samples_per_bit: Option<u64>,
    #[arg(long, value_enum)]
    pub defense: Option<DefenseArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub session: SessionFlags,
    /// Write one CSV row per round here
    #[arg(long = "rounds-csv", value_name = "PATH")]
    pub rounds_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub session: SessionFlags,
    /// r_c | beta | samples_per_bit | bandwidth
    #[arg(long, required = true)]
    pub param: SweepParameter,
    /// Comma-separated, strictly increasing
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    pub values: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["second-law", "bsy"])]
    pub attacks: Vec<AttackArg>,
    /// Concurrent sweep points
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Skip the Monte Carlo sessions
    #[arg(long = "analytic-only")]
    pub analytic_only: bool,
    /// Write the CSV here instead of standard output
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BetaArgs {
    #[arg(long)]
    pub rl: Option<f64>,
    #[arg(long)]
    pub rh: Option<f64>,
    #[arg(long)]
    pub rc: Option<f64>,
}

impl BetaArgs {
    pub fn pair_and_rc(&self) -> Result<(ResistorPair, f64), CliError> {
        let pair = ResistorPair::new(self.rl.unwrap_or(1000.0), self.rh.unwrap_or(10000.0))?;
        let rc = self.rc.unwrap_or(100.0);
        if !(rc >= 0.0) {
            return Err(CliError::Usage("r_c: r_c >= 0 violated".into()));
        }
        Ok((pair, rc))
    }
}

const FILE_KEYS: [&str; 14] = [
    "rl",
    "rh",
    "rc",
    "cable-temp",
    "t-eff",
    "bandwidth",
    "beta",
    "oversample",
    "normalized",
    "si",
    "bits",
    "samples-per-bit",
    "defense",
    "seed",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
        let key = k.trim();
        if !FILE_KEYS.contains(&key) {
            return Err(CliError::Usage(format!(
                "config line {}: unknown key {key:?}",
                n + 1
            )));
        }
        map.insert(key.to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("--{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "--{key}: expected true or false, got {v:?}"
        ))),
    }
}

impl SessionFlags {
    /// Merges file values under the flags, flags first.
    fn merged(&self) -> Result<SessionFlags, CliError> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let file = read_config(path)?;
        let mut m = self.clone();
        for (k, v) in &file {
            let k = k.as_str();
            match k {
                "rl" => m.rl = m.rl.or(Some(parse(k, v)?)),
                "rh" => m.rh = m.rh.or(Some(parse(k, v)?)),
                "rc" => m.rc = m.rc.or(Some(parse(k, v)?)),
                "cable-temp" => m.cable_temp = m.cable_temp.or(Some(parse(k, v)?)),
                "t-eff" => m.t_eff = m.t_eff.or(Some(parse(k, v)?)),
                "bandwidth" => m.bandwidth = m.bandwidth.or(Some(parse(k, v)?)),
                "beta" => m.beta = m.beta.or(Some(parse(k, v)?)),
                "oversample" => m.oversample = m.oversample.or(Some(parse(k, v)?)),
                "bits" => m.bits = m.bits.or(Some(parse(k, v)?)),
                "samples-per-bit" => m.samples_per_bit = m.samples_per_bit.or(Some(parse(k, v)?)),
                "seed" => m.seed = m.seed.or(Some(parse(k, v)?)),
                "defense" => {
                    if m.defense.is_none() {
                        m.defense = Some(DefenseArg::from_str(v, true).map_err(|_| {
                            CliError::Usage(format!("--defense: unknown mode {v:?}"))
                        })?);
                    }
                }
                "normalized" | "si" => {
                    // a unit flag on the command line overrides either file key
                    if !(self.normalized || self.si) {
                        let on = parse_bool(k, v)?;
                        let si = (k == "si") == on;
                        m.si = si;
                        m.normalized = !si;
                    }
                }
                _ => unreachable!("keys checked by parse_config_file"),
            }
        }
        Ok(m)
    }

    pub fn to_config(&self) -> Result<SessionConfig, CliError> {
        let f = self.merged()?;
        let base = SessionConfig::default();
        let units = if f.si {
            UnitSystem::Si
        } else {
            UnitSystem::Normalized
        };
        let defense =
            match f.defense.unwrap_or(DefenseArg::None) {
                DefenseArg::None => Defense::None,
                DefenseArg::PaperBeta => Defense::PaperBeta,
                DefenseArg::NullBeta => Defense::NullBeta,
                DefenseArg::Equilibration => Defense::Equilibration,
                DefenseArg::CustomBeta => Defense::CustomBeta(f.beta.ok_or_else(|| {
                    CliError::Usage("--defense custom-beta requires --beta".into())
                })?),
            };
        let noise_beta = match defense {
            Defense::CustomBeta(_) => 1.0,
            _ => f.beta.unwrap_or(1.0),
        };
        Ok(SessionConfig {
            pair: ResistorPair {
                r_low: f.rl.unwrap_or(base.pair.r_low),
                r_high: f.rh.unwrap_or(base.pair.r_high),
            },
            cable: Cable {
                r_c: f.rc.unwrap_or(base.cable.r_c),
                temperature: f.cable_temp.unwrap_or(0.0),
            },
            noise: NoiseSpec {
                t_eff: f.t_eff.unwrap_or(base.noise.t_eff),
                beta: noise_beta,
                bandwidth: f.bandwidth.unwrap_or(base.noise.bandwidth),
                oversample: f.oversample.unwrap_or(1),
                units,
            },
            bits: f.bits.unwrap_or(base.bits),
            samples_per_bit: f.samples_per_bit.unwrap_or(base.samples_per_bit),
            defense,
            seed: f.seed.unwrap_or(base.seed),
        })
    }
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    parse_config_file(&text)
}
