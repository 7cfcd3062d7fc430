//! Route-metadata secret keys for DSR ad-hoc networks.
//!
//! The crate simulates route discovery in a mobile ad-hoc network, models
//! what a single passive eavesdropper can overhear, and turns the routes two
//! nodes both saw into shared secret bits.

pub mod adversary;
pub mod bits;
pub mod dsr;
pub mod experiment;
pub mod keygen;
pub mod netsim;
pub mod rng;
pub mod route;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/routes.md")]
    mod routes {}
    #[doc = include_str!("../../../book/src/dsr.md")]
    mod dsr {}
    #[doc = include_str!("../../../book/src/adversary.md")]
    mod adversary {}
    #[doc = include_str!("../../../book/src/keygen.md")]
    mod keygen {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
