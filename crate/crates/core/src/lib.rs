//! Quickest detection of a drift in Brownian motion when inspections can
//! return false negatives.
//!
//! [`boundary::solve_boundary`] gives the optimal inspection threshold,
//! [`value`] the expected cost, [`grid`] an independent finite-difference
//! solution and [`sim`] a path simulator.

pub mod boundary;
pub mod error;
pub mod grid;
pub mod model;
pub mod quadrature;
pub mod sim;
pub mod specfun;
pub mod value;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/boundary.md")]
    mod boundary {}
    #[doc = include_str!("../../../book/src/value.md")]
    mod value {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
