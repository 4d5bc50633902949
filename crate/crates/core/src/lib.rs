//! A laboratory for the Kirchhoff-law–Johnson-noise (KLJN) key exchange.
//!
//! * [`config`]: domain types, units, validation
//! * [`noisegen`]: seeded Gaussian Johnson-noise streams
//! * [`circuit`]: per-sample loop solution and trace statistics
//! * [`analytic`]: closed forms, offset roots, attack SNR prediction
//! * [`protocol`]: the session engine and defenses
//! * [`eavesdropper`]: Eve's passive attacks and success estimates
//! * [`sweep`]: parameter sweeps

pub mod analytic;
pub mod circuit;
pub mod config;
pub mod eavesdropper;
pub mod error;
pub mod noisegen;
pub mod protocol;
pub mod seed;
pub mod sweep;

pub use config::{
    validate_config, Cable, Defense, NoiseSpec, ResistorPair, SessionConfig, UnitSystem,
};
pub use error::{Error, Result};
