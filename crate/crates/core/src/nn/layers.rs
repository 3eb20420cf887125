use super::params::{Bound, Init, ParamBuilder, ParamId};
use crate::error::Result;
use crate::tensor::{Element, Var, NORM_EPS};

/// `y = x·W + b`, `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        let mut pb = pb.child(name);
        Ok(Self {
            weight: pb.add("weight", &[d_in, d_out], Init::TruncNormal(0.02))?,
            bias: pb.add("bias", &[d_out], Init::Zeros)?,
        })
    }

    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.linear(p[self.weight], p[self.bias])
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new<T: Element>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        Self::with_init(pb, name, [c_in, c_out, kernel], stride, pad, Init::He { fan_in: c_in * kernel * kernel })
    }

    pub fn with_init<T: Element>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        [c_in, c_out, kernel]: [usize; 3],
        stride: usize,
        pad: usize,
        init: Init,
    ) -> Result<Self> {
        let mut pb = pb.child(name);
        Ok(Self {
            weight: pb.add("weight", &[c_out, c_in, kernel, kernel], init)?,
            bias: pb.add("bias", &[c_out], Init::Zeros)?,
            stride,
            pad,
        })
    }

    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.conv2d(p[self.weight], p[self.bias], self.stride, self.pad)
    }
}

/// `[Cin, Cout, 2, 2]` stride-2 upsampling convolution.
#[derive(Clone, Debug)]
pub struct ConvTranspose2x2 {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvTranspose2x2 {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        let mut pb = pb.child(name);
        Ok(Self {
            weight: pb.add("weight", &[c_in, c_out, 2, 2], Init::He { fan_in: c_in })?,
            bias: pb.add("bias", &[c_out], Init::Zeros)?,
        })
    }

    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.conv_transpose2x2(p[self.weight], p[self.bias])
    }
}

/// Affine parameters of a layer or instance normalization.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, channels: usize) -> Result<Self> {
        Self::with_gamma(pb, name, channels, Init::Ones)
    }

    pub fn with_gamma<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, channels: usize, gamma: Init) -> Result<Self> {
        let mut pb = pb.child(name);
        Ok(Self { gamma: pb.add("gamma", &[channels], gamma)?, beta: pb.add("beta", &[channels], Init::Zeros)? })
    }

    /// Normalize over the last axis.
    pub fn layer<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.layer_norm(p[self.gamma], p[self.beta], NORM_EPS)
    }

    /// Normalize over the spatial axes of `[B, C, H, W]`.
    pub fn instance<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.instance_norm(p[self.gamma], p[self.beta], NORM_EPS)
    }

    /// Normalize `[B, C, H, W]` over channels at every pixel.
    pub fn channel<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let y = self.layer(p, x.permute(&[0, 2, 3, 1])?)?;
        y.permute(&[0, 3, 1, 2])
    }
}

/// Two linear layers with a GELU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        let mut pb = pb.child(name);
        Ok(Self { fc1: Linear::new(&mut pb, "fc1", dim, hidden)?, fc2: Linear::new(&mut pb, "fc2", hidden, dim)? })
    }

    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        self.fc2.forward(p, self.fc1.forward(p, x)?.gelu())
    }
}
