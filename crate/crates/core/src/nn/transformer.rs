use super::attention::{Attention, AttentionMode};
use super::layers::{Mlp, Norm};
use super::params::{Bound, ParamBuilder};
use crate::error::{Error, Result};
use crate::tensor::{Element, Var};

/// Pre-norm ViT block: attention sublayer then MLP sublayer, both residual.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub norm1: Norm,
    pub attn: Attention,
    pub norm2: Norm,
    pub mlp: Mlp,
    pub mode: AttentionMode,
}

/// Feature added inside the attention sublayer, normalized by its own
/// layer-norm parameters.
#[derive(Clone, Copy)]
pub struct Injection<'a, 'g, T: Element> {
    pub tokens: Var<'g, T>,
    pub norm: &'a Norm,
}

impl TransformerBlock {
    pub fn new<T: Element>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        mode: AttentionMode,
    ) -> Result<Self> {
        let mut pb = pb.child(name);
        Ok(Self {
            norm1: Norm::new(&mut pb, "norm1", dim)?,
            attn: Attention::new(&mut pb, "attn", dim, dim, heads)?,
            norm2: Norm::new(&mut pb, "norm2", dim)?,
            mlp: Mlp::new(&mut pb, "mlp", dim, dim * mlp_ratio)?,
            mode,
        })
    }

    /// `f' = MSA(LN(f)) [+ LN(inj)] + f`, then `f' + MLP(LN(f'))`.
    pub fn forward<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        injected: Option<Injection<'_, 'g, T>>,
    ) -> Result<Var<'g, T>> {
        let mut mixed = self.attn.self_attention(p, self.norm1.layer(p, x)?, self.mode)?;
        if let Some(inj) = injected {
            if inj.tokens.shape() != x.shape() {
                return Err(Error::shape(
                    "transformer_block",
                    format!("injected {:?} does not match tokens {:?}", inj.tokens.shape(), x.shape()),
                ));
            }
            mixed = mixed.add(inj.norm.layer(p, inj.tokens)?)?;
        }
        let x = mixed.add(x)?;
        let h = self.mlp.forward(p, self.norm2.layer(p, x)?)?;
        h.add(x)
    }
}
