use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

/// Additive smoothing of the soft Dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dice: f64,
    pub bce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { dice: 1.0, bce: 1.0 }
    }
}

/// `w_d·(1 − soft_dice) + w_b·BCE` on `[B, 1, H, W]` logits.
///
/// The soft Dice ratio is computed per sample and averaged over the batch;
/// BCE is the mean over every pixel.
pub fn seg_loss<'g, T: Element>(logits: Var<'g, T>, target: &Tensor<T>, weights: LossWeights) -> Result<Var<'g, T>> {
    let s = logits.shape();
    if s.as_slice() != target.shape() || s.len() != 4 || s[1] != 1 {
        return Err(Error::shape("seg_loss", format!("logits {s:?} vs target {:?}", target.shape())));
    }
    let graph = logits.graph();
    let probs = logits.sigmoid();
    let gt = graph.constant(target.clone());
    let batch = s[0];
    let mut dice_terms = Vec::with_capacity(batch);
    for b in 0..batch {
        let p = probs.narrow(0, b, 1)?;
        let g = gt.narrow(0, b, 1)?;
        let inter = p.mul(g)?.sum().scale(2.0).add_scalar(DICE_SMOOTH);
        let denom = p.sum().add(g.sum())?.add_scalar(DICE_SMOOTH);
        dice_terms.push(inter.div(denom)?);
    }
    let mut dice = dice_terms[0];
    for &d in &dice_terms[1..] {
        dice = dice.add(d)?;
    }
    let dice_loss = dice.scale(-1.0 / batch as f64).add_scalar(1.0);
    let bce = logits.bce_with_logits(target)?;
    dice_loss.scale(weights.dice).add(bce.scale(weights.bce))
}
