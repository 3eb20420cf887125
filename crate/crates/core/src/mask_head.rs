//! Box-prompt encoder and two-way transformer mask decoder.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{Attention, Bound, ConvTranspose2x2, Init, Linear, Mlp, Norm, ParamBuilder, ParamId};
use crate::tensor::{Element, Graph, Tensor, Var};

const DECODER_DEPTH: usize = 2;

/// Sine–cosine encoding of a point in `[0, 1]²` into `dim` channels.
///
/// Channels are `[sin(πf·x) | cos(πf·x) | sin(πf·y) | cos(πf·y)]` with
/// frequencies `f = 1..=dim/4`.
pub fn sincos_encoding(x: f64, y: f64, dim: usize) -> Vec<f64> {
    let q = dim / 4;
    let mut out = Vec::with_capacity(dim);
    for coord in [x, y] {
        let angles: Vec<f64> = (0..q).map(|k| std::f64::consts::PI * (k + 1) as f64 * coord).collect();
        out.extend(angles.iter().map(|a| a.sin()));
        out.extend(angles.iter().map(|a| a.cos()));
    }
    out
}

/// Encoding of every cell centre of a `g × g` grid, `[1, g·g, dim]`.
pub fn grid_encoding<T: Element>(g: usize, dim: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(g * g * dim);
    for r in 0..g {
        for c in 0..g {
            let pe = sincos_encoding((c as f64 + 0.5) / g as f64, (r as f64 + 0.5) / g as f64, dim);
            data.extend(pe.into_iter().map(T::from_f64_lossy));
        }
    }
    Tensor::new([1, g * g, dim], data).expect("grid encoding shape")
}

#[derive(Clone, Debug)]
pub struct PromptEncoder {
    /// `[1, 2, C_d]`: top-left and bottom-right corner types.
    pub corner_embed: ParamId,
    pub dim: usize,
}

impl PromptEncoder {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, dim: usize) -> Result<Self> {
        let mut pb = pb.child("prompt");
        Ok(Self { corner_embed: pb.add("corner_embed", &[1, 2, dim], Init::Normal(1.0))?, dim })
    }

    /// Tokens `[B, 2, C_d]` for a box spanning the whole `(h, w)` image.
    pub fn encode<'g, T: Element>(&self, p: &Bound<'g, T>, batch: usize, (h, w): (usize, usize)) -> Result<Var<'g, T>> {
        if h == 0 || w == 0 {
            return Err(Error::shape("encode_prompt", format!("empty image extent {h}x{w}")));
        }
        let corners = [(0.0, 0.0), (w as f64 / w as f64, h as f64 / h as f64)];
        let pe: Vec<f64> = corners.iter().flat_map(|&(x, y)| sincos_encoding(x, y, self.dim)).collect();
        let corner = p[self.corner_embed];
        let pe = corner.graph().constant(Tensor::from_f64_slice([1, 2, self.dim], &pe)?);
        pe.add(corner)?.expand_batch(batch)
    }
}

/// One layer of the two-way transformer.
#[derive(Clone, Debug)]
pub struct TwoWayBlock {
    pub self_attn: Attention,
    pub norm1: Norm,
    pub cross_token_to_image: Attention,
    pub norm2: Norm,
    pub mlp: Mlp,
    pub norm3: Norm,
    pub cross_image_to_token: Attention,
    pub norm4: Norm,
    pub skip_first_pe: bool,
}

impl TwoWayBlock {
    fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, name: &str, dim: usize, heads: usize, skip_first_pe: bool) -> Result<Self> {
        let mut pb = pb.child(name);
        Ok(Self {
            self_attn: Attention::new(&mut pb, "self_attn", dim, dim, heads)?,
            norm1: Norm::new(&mut pb, "norm1", dim)?,
            cross_token_to_image: Attention::new(&mut pb, "cross_token_to_image", dim, dim / 2, heads)?,
            norm2: Norm::new(&mut pb, "norm2", dim)?,
            mlp: Mlp::new(&mut pb, "mlp", dim, 2 * dim)?,
            norm3: Norm::new(&mut pb, "norm3", dim)?,
            cross_image_to_token: Attention::new(&mut pb, "cross_image_to_token", dim, dim / 2, heads)?,
            norm4: Norm::new(&mut pb, "norm4", dim)?,
            skip_first_pe,
        })
    }

    fn forward<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        queries: Var<'g, T>,
        keys: Var<'g, T>,
        query_pe: Var<'g, T>,
        key_pe: Var<'g, T>,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        let queries = if self.skip_first_pe {
            self.self_attn.forward(p, queries, queries, queries)?
        } else {
            let q = queries.add(query_pe)?;
            self.self_attn.forward(p, q, q, queries)?.add(queries)?
        };
        let queries = self.norm1.layer(p, queries)?;

        let q = queries.add(query_pe)?;
        let k = keys.add(key_pe)?;
        let queries = self.cross_token_to_image.forward(p, q, k, keys)?.add(queries)?;
        let queries = self.norm2.layer(p, queries)?;

        let queries = self.mlp.forward(p, queries)?.add(queries)?;
        let queries = self.norm3.layer(p, queries)?;

        let q = queries.add(query_pe)?;
        let keys = self.cross_image_to_token.forward(p, k, q, queries)?.add(keys)?;
        let keys = self.norm4.layer(p, keys)?;
        Ok((queries, keys))
    }
}

#[derive(Clone, Debug)]
pub struct MaskDecoder {
    /// `[1, 1, C_d]`
    pub mask_token: ParamId,
    pub layers: Vec<TwoWayBlock>,
    pub final_attn: Attention,
    pub final_norm: Norm,
    pub up1: ConvTranspose2x2,
    pub up_norm: Norm,
    pub up2: ConvTranspose2x2,
    pub hypernet: [Linear; 3],
    pub dim: usize,
}

impl MaskDecoder {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        let dim = cfg.decoder_dim;
        let heads = cfg.decoder_heads;
        let mut pb = pb.child("decoder");
        let layers = (0..DECODER_DEPTH)
            .map(|i| TwoWayBlock::new(&mut pb, &format!("layers.{i}"), dim, heads, i == 0))
            .collect::<Result<Vec<_>>>()?;
        let mut hpb = pb.child("hypernet");
        let hypernet = [
            Linear::new(&mut hpb, "0", dim, dim)?,
            Linear::new(&mut hpb, "1", dim, dim)?,
            Linear::new(&mut hpb, "2", dim, dim / 4)?,
        ];
        Ok(Self {
            mask_token: pb.add("mask_token", &[1, 1, dim], Init::Normal(1.0))?,
            layers,
            final_attn: Attention::new(&mut pb, "final_attn", dim, dim / 2, heads)?,
            final_norm: Norm::new(&mut pb, "final_norm", dim)?,
            up1: ConvTranspose2x2::new(&mut pb, "up1", dim, dim / 2)?,
            up_norm: Norm::new(&mut pb, "up_norm", dim / 2)?,
            up2: ConvTranspose2x2::new(&mut pb, "up2", dim / 2, dim / 4)?,
            hypernet,
            dim,
        })
    }

    /// `[B, C_d, g, g]` image embedding and `[B, 2, C_d]` prompt tokens to
    /// mask logits `[B, 1, 4g, 4g]`.
    pub fn decode<'g, T: Element>(&self, p: &Bound<'g, T>, image: Var<'g, T>, prompts: Var<'g, T>) -> Result<Var<'g, T>> {
        let s = image.shape();
        if s.len() != 4 || s[1] != self.dim || s[2] != s[3] || s[2] < 2 {
            return Err(Error::shape(
                "mask_decode",
                format!("expected [B, {}, g, g] with g >= 2, got {s:?}", self.dim),
            ));
        }
        let (b, g) = (s[0], s[2]);
        if prompts.shape() != [b, 2, self.dim] {
            return Err(Error::shape(
                "mask_decode",
                format!("expected prompts [{b}, 2, {}], got {:?}", self.dim, prompts.shape()),
            ));
        }
        let graph: &'g Graph<T> = image.graph();
        let tokens = Var::concat(&[p[self.mask_token].expand_batch(b)?, prompts], 1)?;
        let key_pe = graph.constant(grid_encoding(g, self.dim)).expand_batch(b)?;
        let mut queries = tokens;
        let mut keys = image.grid_to_tokens()?;
        for layer in &self.layers {
            (queries, keys) = layer.forward(p, queries, keys, tokens, key_pe)?;
        }
        let q = queries.add(tokens)?;
        let k = keys.add(key_pe)?;
        let queries = self.final_attn.forward(p, q, k, keys)?.add(queries)?;
        let queries = self.final_norm.layer(p, queries)?;

        let up = self.up1.forward(p, keys.tokens_to_grid()?)?;
        let up = self.up_norm.channel(p, up)?.gelu();
        let up = self.up2.forward(p, up)?.gelu();
        let side = 4 * g;
        let up = up.reshape(&[b, self.dim / 4, side * side])?;

        let hyper = self.hypernet_forward(p, queries.narrow(1, 0, 1)?)?;
        hyper.matmul(up)?.reshape(&[b, 1, side, side])
    }

    /// Mask token `[B, 1, C_d]` to per-pixel weights `[B, 1, C_d/4]`.
    pub fn hypernet_forward<'g, T: Element>(&self, p: &Bound<'g, T>, token: Var<'g, T>) -> Result<Var<'g, T>> {
        let [l0, l1, l2] = &self.hypernet;
        let h = l0.forward(p, token)?.relu();
        let h = l1.forward(p, h)?.relu();
        l2.forward(p, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;

    fn tiny() -> ModelConfig {
        ModelConfig { decoder_dim: 8, ..ModelConfig::default() }
    }

    fn build() -> (ParamStore<f64>, PromptEncoder, MaskDecoder) {
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, 11);
        let pe = PromptEncoder::new(&mut pb, 8).unwrap();
        let dec = MaskDecoder::new(&mut pb, &tiny()).unwrap();
        (store, pe, dec)
    }

    #[test]
    fn encoding_has_unit_pairs() {
        let v = sincos_encoding(0.3, 0.7, 16);
        assert_eq!(v.len(), 16);
        for k in 0..4 {
            assert!((v[k].powi(2) + v[k + 4].powi(2) - 1.0).abs() < 1e-12);
        }
        assert_eq!(sincos_encoding(0.0, 0.0, 8), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn prompt_tokens_are_deterministic() {
        let (mut store, pe, _) = build();
        let g = Graph::new();
        let p = store.bind(&g);
        let a = pe.encode(&p, 3, (32, 32)).unwrap();
        let b = pe.encode(&p, 3, (32, 32)).unwrap();
        assert_eq!(a.shape(), vec![3, 2, 8]);
        assert!(a.value().bit_eq(&b.value()));

        store.fill_where(|n| n == "prompt.corner_embed", 0.0);
        let g = Graph::new();
        let p = store.bind(&g);
        let t = pe.encode(&p, 1, (20, 40)).unwrap().value();
        let expected: Vec<f64> = [sincos_encoding(0.0, 0.0, 8), sincos_encoding(1.0, 1.0, 8)].concat();
        assert_eq!(t.data(), &expected[..]);
        assert!(pe.encode(&p, 1, (0, 4)).is_err());
    }

    #[test]
    fn decoder_output_is_four_times_grid() {
        let (store, pe, dec) = build();
        let g = Graph::new();
        let p = store.bind(&g);
        let img = g.constant(Tensor::from_fn([2, 8, 4, 4], |i| (i as f64 * 0.37).sin()));
        let logits = dec.decode(&p, img, pe.encode(&p, 2, (16, 16)).unwrap()).unwrap();
        assert_eq!(logits.shape(), vec![2, 1, 16, 16]);
        assert!(logits.value().all_finite());
    }

    #[test]
    fn zero_hypernet_gives_zero_logits() {
        let (mut store, pe, dec) = build();
        store.fill_where(|n| n.starts_with("decoder.hypernet.2."), 0.0);
        let g = Graph::new();
        let p = store.bind(&g);
        let img = g.constant(Tensor::from_fn([1, 8, 2, 2], |i| i as f64));
        let probs = dec.decode(&p, img, pe.encode(&p, 1, (8, 8)).unwrap()).unwrap().sigmoid().value();
        assert!(probs.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn decoder_rejects_bad_inputs() {
        let (store, pe, dec) = build();
        let g = Graph::new();
        let p = store.bind(&g);
        let prompts = pe.encode(&p, 1, (8, 8)).unwrap();
        for shape in [[1, 4, 4, 4], [1, 8, 1, 1], [1, 8, 2, 4]] {
            assert!(dec.decode(&p, g.constant(Tensor::zeros(shape)), prompts).is_err());
        }
        assert!(dec.decode(&p, g.constant(Tensor::zeros([2, 8, 2, 2])), prompts).is_err());
    }
}
