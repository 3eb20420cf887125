//! The chapters of `book/` as modules, so `cargo test` runs every snippet in
//! the book against the current library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/tensors.md")]
pub mod tensors {}
#[doc = include_str!("../../../book/src/architecture.md")]
pub mod architecture {}
#[doc = include_str!("../../../book/src/fusion-plans.md")]
pub mod fusion_plans {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/gradient-checking.md")]
pub mod gradient_checking {}
#[doc = include_str!("../../../book/src/checkpoints.md")]
pub mod checkpoints {}
