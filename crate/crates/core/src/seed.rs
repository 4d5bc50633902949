//! Seed derivation for per-round, per-party randomness.
//!
//! `hash64(session, round, party)` chains the splitmix64 finalizer over the
//! three words. The party ids below are part of the reproducibility contract:
//! changing them changes every simulated session.

pub const ALICE_NOISE: u64 = 0;
pub const BOB_NOISE: u64 = 1;
pub const CABLE_NOISE: u64 = 2;
pub const ALICE_CHOICE: u64 = 3;
pub const BOB_CHOICE: u64 = 4;
pub const TIE_SECOND_LAW: u64 = 5;
pub const TIE_BSY: u64 = 6;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn hash64(session_seed: u64, round_index: u64, party_id: u64) -> u64 {
    let mut h = mix(session_seed.wrapping_add(GOLDEN));
    h = mix(h ^ round_index.wrapping_add(GOLDEN.wrapping_mul(2)));
    mix(h ^ party_id.wrapping_add(GOLDEN.wrapping_mul(3)))
}
