//! Transformer encoder branch on the high-resolution input.

use std::collections::BTreeMap;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::fusion::{check_square, global_layers};
use crate::nn::{AttentionMode, Bound, Conv2d, Injection, Norm, ParamBuilder, PatchEmbed, TransformerBlock};
use crate::tensor::{Element, Var};

const MLP_RATIO: usize = 4;

/// 1×1 projection to the decoder width followed by a per-pixel channel norm.
#[derive(Clone, Debug)]
pub struct Neck {
    pub proj: Conv2d,
    pub norm: Option<Norm>,
}

impl Neck {
    /// Tokens `[B, N, C]` to `[B, C_d, √N, √N]`.
    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, tokens: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.proj.forward(p, tokens.tokens_to_grid()?)?;
        match &self.norm {
            Some(n) => n.channel(p, h),
            None => Ok(h),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PriorBranch {
    pub patch_embed: PatchEmbed,
    pub layers: Vec<TransformerBlock>,
    pub neck: Neck,
    pub m: usize,
    /// Layers allowed to receive a DKIN injection (1-based).
    pub injectable: Vec<usize>,
}

impl PriorBranch {
    pub fn new<T: Element>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig, injectable: Vec<usize>) -> Result<Self> {
        let mut pb = pb.child("prior");
        let globals = global_layers(cfg.m);
        let layers = (1..=cfg.prior_layers())
            .map(|i| {
                let mode = if globals.contains(&i) { AttentionMode::Global } else { AttentionMode::Window(cfg.window) };
                TransformerBlock::new(&mut pb, &format!("layers.{i}"), cfg.prior_dim, cfg.heads, MLP_RATIO, mode)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut neck_pb = pb.child("neck");
        let neck = Neck {
            proj: Conv2d::new(&mut neck_pb, "proj", cfg.prior_dim, cfg.decoder_dim, 1, 1, 0)?,
            norm: Some(Norm::new(&mut neck_pb, "norm", cfg.decoder_dim)?),
        };
        Ok(Self {
            patch_embed: PatchEmbed::new(&mut pb, "patch_embed", cfg.x_s, cfg.prior_dim)?,
            layers,
            neck,
            m: cfg.m,
            injectable,
        })
    }

    pub fn global_layers(&self) -> [usize; 3] {
        global_layers(self.m)
    }

    pub fn embed<'g, T: Element>(&self, p: &Bound<'g, T>, image: Var<'g, T>) -> Result<Var<'g, T>> {
        self.patch_embed.forward(p, image)
    }

    /// Run layers `from..=to` (1-based). Returns the new state and the
    /// outputs of every global-attention layer in the range.
    pub fn forward_segment<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        mut state: Var<'g, T>,
        from: usize,
        to: usize,
        injections: &BTreeMap<usize, Injection<'_, 'g, T>>,
    ) -> Result<(Var<'g, T>, BTreeMap<usize, Var<'g, T>>)> {
        if from == 0 || from > to || to > self.layers.len() {
            return Err(Error::shape(
                "prior_forward_segment",
                format!("layer range {from}..={to} outside 1..={}", self.layers.len()),
            ));
        }
        if let Some(bad) = injections.keys().find(|k| !self.injectable.contains(k)) {
            return Err(Error::shape(
                "prior_forward_segment",
                format!("prior layer {bad} does not accept injections (allowed: {:?})", self.injectable),
            ));
        }
        check_square(state.shape()[1])?;
        let globals = self.global_layers();
        let mut taps = BTreeMap::new();
        for i in from..=to {
            state = self.layers[i - 1].forward(p, state, injections.get(&i).copied())?;
            if globals.contains(&i) {
                taps.insert(i, state);
            }
        }
        Ok((state, taps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::tensor::{Graph, Tensor};

    fn tiny() -> ModelConfig {
        ModelConfig { prior_dim: 8, heads: 2, domain_dim: 8, decoder_dim: 8, x_c: 8, x_s: 32, window: 1, ..ModelConfig::default() }
    }

    #[test]
    fn global_layers_sit_at_multiples_of_m() {
        let mut store = ParamStore::<f32>::new();
        let pb = &mut ParamBuilder::new(&mut store, 0);
        let branch = PriorBranch::new(pb, &tiny(), vec![10, 11, 12]).unwrap();
        let globals: Vec<usize> = branch
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.mode == AttentionMode::Global)
            .map(|(i, _)| i + 1)
            .collect();
        assert_eq!(globals, vec![3, 6, 9]);
        assert_eq!(branch.layers.len(), 12);
    }

    #[test]
    fn segments_compose_to_full_forward() {
        let mut store = ParamStore::<f32>::new();
        let branch = PriorBranch::new(&mut ParamBuilder::new(&mut store, 4), &tiny(), vec![]).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let x = g.constant(Tensor::from_fn([2, 4, 8], |i| (i as f32 * 0.13).sin()));
        let none = BTreeMap::new();
        let (full, full_taps) = branch.forward_segment(&p, x, 1, 12, &none).unwrap();
        let mut state = x;
        let mut taps = BTreeMap::new();
        for (a, b) in [(1, 2), (3, 3), (4, 7), (8, 12)] {
            let (s, t) = branch.forward_segment(&p, state, a, b, &none).unwrap();
            state = s;
            taps.extend(t);
        }
        assert!(state.value().bit_eq(&full.value()));
        assert_eq!(taps.keys().copied().collect::<Vec<_>>(), vec![3, 6, 9]);
        for (k, v) in &full_taps {
            assert!(v.value().bit_eq(&taps[k].value()));
        }
    }

    #[test]
    fn injection_outside_allowed_layers_fails() {
        let mut store = ParamStore::<f32>::new();
        let pb = &mut ParamBuilder::new(&mut store, 0);
        let branch = PriorBranch::new(pb, &tiny(), vec![10, 11, 12]).unwrap();
        let norm = Norm::new(pb, "x", 8).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let x = g.constant(Tensor::zeros([1, 4, 8]));
        let inj = BTreeMap::from([(5, Injection { tokens: x, norm: &norm })]);
        assert!(branch.forward_segment(&p, x, 1, 12, &inj).is_err());
        assert!(branch.forward_segment(&p, x, 0, 3, &BTreeMap::new()).is_err());
        assert!(branch.forward_segment(&p, x, 4, 13, &BTreeMap::new()).is_err());
    }

    #[test]
    fn zero_weights_keep_embedding() {
        let mut store = ParamStore::<f32>::new();
        let branch = PriorBranch::new(&mut ParamBuilder::new(&mut store, 0), &tiny(), vec![]).unwrap();
        store.fill_where(|n| n.starts_with("prior.layers."), 0.0);
        let g = Graph::new();
        let p = store.bind(&g);
        let img = g.constant(Tensor::from_fn([1, 1, 32, 32], |i| (i % 7) as f32 / 7.0));
        let emb = branch.embed(&p, img).unwrap();
        let (out, _) = branch.forward_segment(&p, emb, 1, 12, &BTreeMap::new()).unwrap();
        assert!(out.value().bit_eq(&emb.value()));
    }

    #[test]
    fn neck_identity_is_a_reshape() {
        let mut store = ParamStore::<f64>::new();
        let cfg = tiny();
        let branch = PriorBranch::new(&mut ParamBuilder::new(&mut store, 0), &cfg, vec![]).unwrap();
        let w = store.id_of("prior.neck.proj.weight").unwrap();
        store.set(w, crate::tensor::Tensor::from_fn([8, 8, 1, 1], |i| if i / 8 == i % 8 { 1.0 } else { 0.0 })).unwrap();
        let neck = Neck { proj: branch.neck.proj.clone(), norm: None };
        let g = Graph::new();
        let p = store.bind(&g);
        let tokens = g.constant(Tensor::from_fn([2, 4, 8], |i| i as f64));
        let out = neck.forward(&p, tokens).unwrap();
        assert_eq!(out.shape(), vec![2, 8, 2, 2]);
        assert!(out.value().bit_eq(&tokens.tokens_to_grid().unwrap().value()));
        assert!(branch.neck.forward(&p, g.constant(Tensor::zeros([2, 3, 8]))).is_err());
    }
}
