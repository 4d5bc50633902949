//! Holds the `acceptance` test target. Run it with
//! `cargo test -p kljn-validation --test acceptance`.
