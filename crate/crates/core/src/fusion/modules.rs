use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, Init, Norm, ParamBuilder};
use crate::tensor::{grid_side, Element, Var, DEFAULT_LEAKY_SLOPE};

/// Injects prior-branch tokens into a shallow domain layer:
/// `σ(IN(W_af * R(f_s) + b_af))`, added to the domain layer output.
#[derive(Clone, Debug)]
pub struct RfinModule {
    /// 1×1 convolution C → C_c.
    pub proj: Conv2d,
    pub norm: Norm,
    pub source: usize,
    pub target: usize,
}

impl RfinModule {
    /// The instance-norm scale starts at zero so a fresh model begins at the
    /// independent-branch baseline.
    pub fn new<T: Element>(
        pb: &mut ParamBuilder<'_, T>,
        prior_dim: usize,
        domain_dim: usize,
        (source, target): (usize, usize),
    ) -> Result<Self> {
        let mut pb = pb.child(format!("rfin.{source}_{target}"));
        Ok(Self {
            proj: Conv2d::new(&mut pb, "proj", prior_dim, domain_dim, 1, 1, 0)?,
            norm: Norm::with_gamma(&mut pb, "norm", domain_dim, Init::Zeros)?,
            source,
            target,
        })
    }

    /// Tokens `[B, N, C]` to an aligned feature map `[B, C_c, √N, √N]`.
    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, tokens: Var<'g, T>) -> Result<Var<'g, T>> {
        let grid = tokens.tokens_to_grid()?;
        let h = self.proj.forward(p, grid)?;
        Ok(self.norm.instance(p, h)?.leaky_relu(DEFAULT_LEAKY_SLOPE))
    }

    /// Like [`RfinModule::forward`] but checks the result against the
    /// receiving feature map.
    pub fn inject_into<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        tokens: Var<'g, T>,
        domain_shape: &[usize],
    ) -> Result<Var<'g, T>> {
        let out = self.forward(p, tokens)?;
        if out.shape() != domain_shape {
            return Err(Error::shape(
                "rfin",
                format!("projected {:?} does not match domain layer {} output {domain_shape:?}", out.shape(), self.target),
            ));
        }
        Ok(out)
    }
}

/// Carries a deep domain feature map into a late prior layer. The layer
/// itself applies this module's layer norm and the three-term residual.
#[derive(Clone, Debug)]
pub struct DkinModule {
    /// 1×1 convolution C_c → C; absent when the widths already agree.
    pub align: Option<Conv2d>,
    pub norm: Norm,
    pub source: usize,
    pub target: usize,
}

impl DkinModule {
    /// The layer-norm scale starts at zero, like [`RfinModule`].
    pub fn new<T: Element>(
        pb: &mut ParamBuilder<'_, T>,
        domain_dim: usize,
        prior_dim: usize,
        (source, target): (usize, usize),
    ) -> Result<Self> {
        let mut pb = pb.child(format!("dkin.{source}_{target}"));
        let align = if domain_dim == prior_dim {
            None
        } else {
            Some(Conv2d::new(&mut pb, "align", domain_dim, prior_dim, 1, 1, 0)?)
        };
        Ok(Self { align, norm: Norm::with_gamma(&mut pb, "norm", prior_dim, Init::Zeros)?, source, target })
    }

    /// Feature map `[B, C_c, h, w]` to tokens `[B, h·w, C]`.
    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, fmap: Var<'g, T>, tokens: usize) -> Result<Var<'g, T>> {
        let s = fmap.shape();
        if s.len() != 4 || s[2] * s[3] != tokens {
            return Err(Error::shape(
                "dkin",
                format!("domain layer {} map {s:?} does not hold {tokens} positions", self.source),
            ));
        }
        let aligned = match &self.align {
            Some(conv) => conv.forward(p, fmap)?,
            None => fmap,
        };
        aligned.grid_to_tokens()
    }
}

/// Element-wise sum of the two branch outputs.
pub fn final_fuse<'g, T: Element>(prior: Var<'g, T>, domain: Var<'g, T>) -> Result<Var<'g, T>> {
    prior.add(domain).map_err(|_| {
        Error::shape("final_fuse", format!("branch outputs differ: {:?} vs {:?}", prior.shape(), domain.shape()))
    })
}

pub(crate) fn check_square(tokens: usize) -> Result<usize> {
    grid_side(tokens).ok_or_else(|| Error::shape("fusion", format!("{tokens} tokens are not a square grid")))
}
