//! Numerical geometric analysis on flat periodic lattices.
//!
//! The crate is organised bottom-up:
//!
//! - [`algebra`]: matrix Lie algebras (abelian, `so(m)`, `so(p,q)`) with
//!   structure constants and a rescaled invariant inner product.
//! - [`forms`]: Lie-algebra-valued k-forms on periodic grids with `d`, its
//!   exact discrete adjoint `δ`, the Hodge star and the bracket-wedge.
//! - [`hodge`]: Hodge Laplacian, conjugate-gradient inverse, Hodge
//!   decomposition and a negative Sobolev norm.
//! - [`gauge`]: connections, curvature, Yang–Mills energy and residuals, and a
//!   gradient-flow relaxer.
//! - [`cclab`]: sequence generators and weak-limit experiments.
//! - [`immersion`]: sampled immersions of tori, adapted frames, connection
//!   blocks and Gauß–Codazzi–Ricci residuals.
//! - [`identities`] and [`rates`]: randomized checks of the exact lattice
//!   identities and grid-refinement fits of the `O(h)` ones.
//!
//! The guide in `book/` walks through each layer; its code blocks are
//! compiled as doctests of this crate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod cclab;
pub mod error;
pub mod fit;
pub mod forms;
pub mod gauge;
pub mod hodge;
pub mod identities;
pub mod immersion;
pub mod parallel;
pub mod rates;

pub use algebra::{AlgebraElement, AlgebraLabel, LieAlgebra};
pub use error::{Error, Result};
pub use forms::{Form, Grid, TestForm, TestFormBank};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/algebra.md")]
    pub mod algebra {}
    #[doc = include_str!("../../../book/src/forms.md")]
    pub mod forms {}
    #[doc = include_str!("../../../book/src/hodge.md")]
    pub mod hodge {}
    #[doc = include_str!("../../../book/src/gauge.md")]
    pub mod gauge {}
    #[doc = include_str!("../../../book/src/compensated_compactness.md")]
    pub mod compensated_compactness {}
    #[doc = include_str!("../../../book/src/immersions.md")]
    pub mod immersions {}
}
