//! Monte Carlo optimal stopping when exercise opportunities arrive at random times.
//!
//! An opportunity to stop arrives at the jump times `tau_1 < tau_2 < ...` of a
//! (possibly state-dependent) point process, and stopping at the `k`-th one
//! pays `Z(tau_k, X_(tau_k))`. Rewards vanish after a horizon `T`. Working on
//! the exercise index instead of calendar time turns the problem into a
//! discrete-time stopping problem, which the modules below solve by
//!
//! * truncating at a finite number of opportunities ([`horizon`]),
//! * regression-based backward induction for a lower bound ([`lsmc`]),
//! * nested simulation of a dual martingale for an upper bound ([`dual`]),
//! * threshold policies and policy improvement ([`improve`]).
//!
//! [`benchmark`] holds a closed-form test case and [`finite`] an exactly
//! solvable chain used to validate the estimators.

pub mod benchmark;
pub mod dual;
pub mod error;
pub mod finite;
pub mod horizon;
pub mod improve;
pub mod lsmc;
pub mod model;
pub mod pathgen;
pub mod regress;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/grids.md")]
    struct Grids;
    #[doc = include_str!("../../../book/src/truncation.md")]
    struct Truncation;
    #[doc = include_str!("../../../book/src/lsmc.md")]
    struct Lsmc;
    #[doc = include_str!("../../../book/src/dual.md")]
    struct Dual;
    #[doc = include_str!("../../../book/src/improvement.md")]
    struct Improvement;
    #[doc = include_str!("../../../book/src/benchmark.md")]
    struct Benchmark;
    #[doc = include_str!("../../../book/src/finite.md")]
    struct Finite;
}
