//! Parameterized layers built on [`crate::tensor`].

mod attention;
mod layers;
mod params;
mod patch;
mod se_block;
mod transformer;

pub use attention::{scaled_dot_product, Attention, AttentionMode};
pub use layers::{Conv2d, ConvTranspose2x2, Linear, Mlp, Norm};
pub use params::{Bound, Init, ParamBuilder, ParamId, ParamStore};
pub(crate) use params::fnv1a;
pub use patch::{PatchEmbed, PATCH};
pub use se_block::{ResidualSeBlock, SE_REDUCTION};
pub use transformer::{Injection, TransformerBlock};
