//! Residual squeeze-and-excitation encoder on the low-resolution input.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::fusion::{DOMAIN_LAYERS, RFIN_TARGETS};
use crate::nn::{Bound, Conv2d, ParamBuilder, ResidualSeBlock};
use crate::tensor::{Element, Var};

/// Layers 1–2 halve the extent; layers 3–8 keep width `C_c` and extent.
#[derive(Clone, Debug)]
pub struct DomainBranch {
    pub layers: Vec<ResidualSeBlock>,
    pub out_proj: Conv2d,
}

impl DomainBranch {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        let mut pb = pb.child("domain");
        let c = cfg.domain_dim;
        let widths = [(1, c / 2, 2), (c / 2, c, 2)].into_iter().chain(std::iter::repeat((c, c, 1)).take(DOMAIN_LAYERS - 2));
        let layers = widths
            .enumerate()
            .map(|(k, (cin, cout, stride))| ResidualSeBlock::new(&mut pb, &format!("layers.{}", k + 1), cin, cout, stride))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, out_proj: Conv2d::new(&mut pb, "out_proj", c, cfg.decoder_dim, 1, 1, 0)? })
    }

    /// Run domain layer `j` (1-based); an RFIN injection is added to the
    /// block output.
    pub fn forward_layer<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        j: usize,
        x: Var<'g, T>,
        injection: Option<Var<'g, T>>,
    ) -> Result<Var<'g, T>> {
        let block = j
            .checked_sub(1)
            .and_then(|k| self.layers.get(k))
            .ok_or_else(|| Error::shape("domain_forward_layer", format!("no domain layer {j}")))?;
        if injection.is_some() && !RFIN_TARGETS.contains(&j) {
            return Err(Error::shape(
                "domain_forward_layer",
                format!("domain layer {j} does not accept injections (allowed: {RFIN_TARGETS:?})"),
            ));
        }
        let y = block.forward(p, x)?;
        match injection {
            Some(inj) => {
                if inj.shape() != y.shape() {
                    return Err(Error::shape(
                        "domain_forward_layer",
                        format!("injection {:?} does not match layer {j} output {:?}", inj.shape(), y.shape()),
                    ));
                }
                y.add(inj)
            }
            None => Ok(y),
        }
    }

    /// Project the last layer to the decoder width.
    pub fn output<'g, T: Element>(&self, p: &Bound<'g, T>, x8: Var<'g, T>) -> Result<Var<'g, T>> {
        self.out_proj.forward(p, x8)
    }
}
