use super::layers::{Conv2d, Norm};
use super::params::{Bound, ParamBuilder};
use crate::error::{Error, Result};
use crate::tensor::{Element, Var, DEFAULT_LEAKY_SLOPE};

/// Channel reduction inside the squeeze-and-excitation gate.
pub const SE_REDUCTION: usize = 4;

/// Residual block with a squeeze-and-excitation gate on the residual path:
/// `y = act(shortcut(x) + gate ⊙ F(x))`, `F = conv-IN-act-conv-IN`.
#[derive(Clone, Debug)]
pub struct ResidualSeBlock {
    pub conv1: Conv2d,
    pub norm1: Norm,
    pub conv2: Conv2d,
    pub norm2: Norm,
    pub se_reduce: Conv2d,
    pub se_expand: Conv2d,
    /// 1×1 projection, present when stride or width changes.
    pub shortcut: Option<Conv2d>,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
}

impl ResidualSeBlock {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        if !(1..=2).contains(&stride) {
            return Err(Error::Config(format!("residual block stride must be 1 or 2, got {stride}")));
        }
        let mut pb = pb.child(name);
        let hidden = (c_out / SE_REDUCTION).max(1);
        let shortcut = if stride != 1 || c_in != c_out {
            Some(Conv2d::new(&mut pb, "shortcut", c_in, c_out, 1, stride, 0)?)
        } else {
            None
        };
        Ok(Self {
            conv1: Conv2d::new(&mut pb, "conv1", c_in, c_out, 3, stride, 1)?,
            norm1: Norm::new(&mut pb, "norm1", c_out)?,
            conv2: Conv2d::new(&mut pb, "conv2", c_out, c_out, 3, 1, 1)?,
            norm2: Norm::new(&mut pb, "norm2", c_out)?,
            se_reduce: Conv2d::new(&mut pb, "se_reduce", c_out, hidden, 1, 1, 0)?,
            se_expand: Conv2d::new(&mut pb, "se_expand", hidden, c_out, 1, 1, 0)?,
            shortcut,
            c_in,
            c_out,
            stride,
        })
    }

    /// Residual path `F(x)`.
    pub fn residual<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.norm1.instance(p, self.conv1.forward(p, x)?)?.leaky_relu(DEFAULT_LEAKY_SLOPE);
        self.norm2.instance(p, self.conv2.forward(p, h)?)
    }

    /// Per-channel gate in (0, 1), shape `[B, C]`.
    pub fn gate<'g, T: Element>(&self, p: &Bound<'g, T>, f: Var<'g, T>) -> Result<Var<'g, T>> {
        let s = f.shape();
        let squeezed = f.global_avg_pool()?.reshape(&[s[0], s[1], 1, 1])?;
        let h = self.se_reduce.forward(p, squeezed)?.leaky_relu(DEFAULT_LEAKY_SLOPE);
        self.se_expand.forward(p, h)?.sigmoid().reshape(&[s[0], s[1]])
    }

    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.c_in {
            return Err(Error::shape(
                "residual_se_block",
                format!("expected [B, {}, H, W], got {s:?}", self.c_in),
            ));
        }
        let f = self.residual(p, x)?;
        let gated = f.scale_channels(self.gate(p, f)?)?;
        let skip = match &self.shortcut {
            Some(proj) => proj.forward(p, x)?,
            None => x,
        };
        Ok(skip.add(gated)?.leaky_relu(DEFAULT_LEAKY_SLOPE))
    }
}
