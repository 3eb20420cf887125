//! Bidirectional aggregation between the two encoder branches.
//!
//! [`FusionPlan`] decides the execution order forced by the cross-branch
//! data dependencies; [`RfinModule`] and [`DkinModule`] carry features in
//! each direction.

mod modules;
mod plan;

pub use modules::{final_fuse, DkinModule, RfinModule};
pub(crate) use modules::check_square;
pub use plan::{dkin_pairs, global_layers, rfin_pairs, FusionPlan, Step, DKIN_SOURCES, DOMAIN_LAYERS, RFIN_TARGETS};
