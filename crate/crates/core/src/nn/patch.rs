use super::layers::Conv2d;
use super::params::{Bound, Init, ParamBuilder, ParamId};
use crate::error::{Error, Result};
use crate::tensor::{Element, Var};

/// Side of the square patches cut from the high-resolution input.
pub const PATCH: usize = 16;

/// Non-overlapping patch projection plus learned absolute positions.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    pub proj: Conv2d,
    pub pos: ParamId,
    pub grid: usize,
}

impl PatchEmbed {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, image: usize, dim: usize) -> Result<Self> {
        if image % PATCH != 0 {
            return Err(Error::Config(format!("input side {image} is not divisible by the patch size {PATCH}")));
        }
        let grid = image / PATCH;
        let mut pb = pb.child(name);
        Ok(Self {
            proj: Conv2d::with_init(&mut pb, "proj", [1, dim, PATCH], PATCH, 0, Init::TruncNormal(0.02))?,
            pos: pb.add("pos", &[1, grid * grid, dim], Init::TruncNormal(0.02))?,
            grid,
        })
    }

    /// `[B, 1, H, W]` to tokens `[B, (H/16)·(W/16), C]`.
    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 1 || s[2] % PATCH != 0 || s[3] % PATCH != 0 {
            return Err(Error::shape(
                "patch_embed",
                format!("expected [B, 1, H, W] with H, W divisible by {PATCH}, got {s:?}"),
            ));
        }
        let tokens = self.proj.forward(p, x)?.grid_to_tokens()?;
        let pos = p[self.pos];
        if tokens.shape()[1..] != pos.shape()[1..] {
            return Err(Error::shape(
                "patch_embed",
                format!("{:?} tokens do not match positional table {:?}", tokens.shape(), pos.shape()),
            ));
        }
        tokens.add(pos.expand_batch(s[0])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamStore;
    use crate::tensor::{Graph, Tensor};

    #[test]
    fn token_count_and_zero_projection() {
        let mut store = ParamStore::<f32>::new();
        let pe = PatchEmbed::new(&mut ParamBuilder::new(&mut store, 0), "pe", 128, 8).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let x = g.constant(Tensor::from_fn([2, 1, 128, 128], |i| (i % 13) as f32));
        assert_eq!(pe.forward(&p, x).unwrap().shape(), vec![2, 64, 8]);
        let scaled = g.constant(x.value().map(|v| v * 3.0));
        assert_eq!(pe.forward(&p, scaled).unwrap().shape(), vec![2, 64, 8]);

        store.fill_where(|_| true, 0.0);
        let g = Graph::new();
        let p = store.bind(&g);
        let x = g.constant(Tensor::ones([1, 1, 128, 128]));
        assert!(pe.forward(&p, x).unwrap().value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indivisible_resolution_is_rejected() {
        let mut store = ParamStore::<f32>::new();
        assert!(PatchEmbed::new(&mut ParamBuilder::new(&mut store, 0), "pe", 120, 8).is_err());
    }
}
