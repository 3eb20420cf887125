use super::layers::Linear;
use super::params::{Bound, ParamBuilder};
use crate::error::{Error, Result};
use crate::tensor::{grid_side, Element, Var};

/// Token mixing extent of a self-attention layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionMode {
    /// Every token attends to every other token.
    Global,
    /// Tokens attend within non-overlapping `w × w` windows of the grid.
    Window(usize),
}

/// Multi-head attention with separate q/k/v/out projections.
///
/// The internal width may be smaller than the model width (the mask
/// decoder's cross-attention halves it).
#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub inner: usize,
}

impl Attention {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, dim: usize, inner: usize, heads: usize) -> Result<Self> {
        if heads == 0 || inner % heads != 0 {
            return Err(Error::Config(format!("{heads} heads do not divide attention width {inner}")));
        }
        let mut pb = pb.child(name);
        Ok(Self {
            q: Linear::new(&mut pb, "q", dim, inner)?,
            k: Linear::new(&mut pb, "k", dim, inner)?,
            v: Linear::new(&mut pb, "v", dim, inner)?,
            out: Linear::new(&mut pb, "out", inner, dim)?,
            heads,
            inner,
        })
    }

    /// Attention of queries `[B, Nq, C]` over keys/values `[B, Nk, C]`.
    pub fn forward<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        q: Var<'g, T>,
        k: Var<'g, T>,
        v: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        let q = self.q.forward(p, q)?;
        let k = self.k.forward(p, k)?;
        let v = self.v.forward(p, v)?;
        let mixed = scaled_dot_product(q, k, v, self.heads)?;
        self.out.forward(p, mixed)
    }

    /// Self-attention over a square token grid `[B, N, C]`.
    pub fn self_attention<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        mode: AttentionMode,
    ) -> Result<Var<'g, T>> {
        match mode {
            AttentionMode::Global => self.forward(p, x, x, x),
            AttentionMode::Window(w) => {
                let windows = partition_windows(x, w)?;
                let mixed = self.forward(p, windows, windows, windows)?;
                merge_windows(mixed, x.shape()[0], w)
            }
        }
    }
}

fn split_heads<'g, T: Element>(x: Var<'g, T>, heads: usize) -> Result<Var<'g, T>> {
    let s = x.shape();
    let (b, n, c) = (s[0], s[1], s[2]);
    x.reshape(&[b, n, heads, c / heads])?.permute(&[0, 2, 1, 3])?.reshape(&[b * heads, n, c / heads])
}

fn merge_heads<'g, T: Element>(x: Var<'g, T>, heads: usize) -> Result<Var<'g, T>> {
    let s = x.shape();
    let (bh, n, d) = (s[0], s[1], s[2]);
    x.reshape(&[bh / heads, heads, n, d])?.permute(&[0, 2, 1, 3])?.reshape(&[bh / heads, n, heads * d])
}

/// softmax(q·kᵀ/√d)·v per head.
pub fn scaled_dot_product<'g, T: Element>(
    q: Var<'g, T>,
    k: Var<'g, T>,
    v: Var<'g, T>,
    heads: usize,
) -> Result<Var<'g, T>> {
    let c = *q.shape().last().unwrap();
    if c % heads != 0 {
        return Err(Error::shape("attention", format!("{heads} heads do not divide width {c}")));
    }
    let scale = 1.0 / ((c / heads) as f64).sqrt();
    let (q, k, v) = (split_heads(q, heads)?, split_heads(k, heads)?, split_heads(v, heads)?);
    let weights = q.matmul_nt(k)?.scale(scale).softmax(2)?;
    merge_heads(weights.matmul(v)?, heads)
}

fn window_geometry(n: usize, w: usize) -> Result<(usize, usize)> {
    let side = grid_side(n)
        .ok_or_else(|| Error::shape("window attention", format!("{n} tokens do not form a square grid")))?;
    if w == 0 || side % w != 0 {
        return Err(Error::shape("window attention", format!("window {w} does not tile a {side}x{side} grid")));
    }
    Ok((side, side / w))
}

/// `[B, N, C]` to `[B·(g/w)², w², C]`.
fn partition_windows<'g, T: Element>(x: Var<'g, T>, w: usize) -> Result<Var<'g, T>> {
    let s = x.shape();
    let (b, n, c) = (s[0], s[1], s[2]);
    let (_, per_side) = window_geometry(n, w)?;
    x.reshape(&[b, per_side, w, per_side, w, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[b * per_side * per_side, w * w, c])
}

fn merge_windows<'g, T: Element>(x: Var<'g, T>, batch: usize, w: usize) -> Result<Var<'g, T>> {
    let s = x.shape();
    let c = s[2];
    let per_side = grid_side(s[0] / batch).expect("window count is a square");
    x.reshape(&[batch, per_side, per_side, w, w, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[batch, per_side * w * per_side * w, c])
}
