//! Small-noise exit-point analysis for overdamped Langevin dynamics
//! `dX = -grad f(X) dt + sqrt(h) dB` in a bounded domain.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod action;
pub mod exitlaw;
pub mod harness;
pub mod landscape;
pub mod morse;
pub mod pde;
pub mod sde;

pub use landscape::{
    build_grid, DomainGeometry, DomainSpec, GaussianSpec, GridDiscretization, LandscapeError, MonomialSpec, NodeTag,
    PotentialField, PotentialSource,
};
