//! The full two-branch network and its plan interpreter.

use std::collections::BTreeMap;

use crate::config::ModelConfig;
use crate::domain::DomainBranch;
use crate::error::{Error, Result};
use crate::fusion::{final_fuse, DkinModule, FusionPlan, RfinModule, Step};
use crate::mask_head::{MaskDecoder, PromptEncoder};
use crate::nn::{Bound, Injection, ParamBuilder, ParamStore};
use crate::prior::PriorBranch;
use crate::tensor::{Element, Var};

/// Returns true for parameters owned by RFIN or DKIN modules.
pub fn is_fusion_param(name: &str) -> bool {
    name.starts_with("rfin.") || name.starts_with("dkin.")
}

#[derive(Clone, Debug)]
pub struct MbaNet {
    pub config: ModelConfig,
    pub plan: FusionPlan,
    pub prior: PriorBranch,
    pub domain: DomainBranch,
    /// In plan order.
    pub rfin: Vec<RfinModule>,
    /// In plan order.
    pub dkin: Vec<DkinModule>,
    pub prompt: PromptEncoder,
    pub decoder: MaskDecoder,
}

impl MbaNet {
    /// Build the model and a fresh parameter store seeded by `seed`.
    pub fn init<T: Element>(config: &ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>)> {
        let mut store = ParamStore::new();
        let model = Self::build(&mut ParamBuilder::new(&mut store, seed), config)?;
        Ok((model, store))
    }

    pub fn build<T: Element>(pb: &mut ParamBuilder<'_, T>, config: &ModelConfig) -> Result<Self> {
        let plan = config.validate()?;
        let prior = PriorBranch::new(pb, config, plan.dkin_targets())?;
        let domain = DomainBranch::new(pb, config)?;
        let rfin = plan
            .rfin
            .iter()
            .map(|&pair| RfinModule::new(pb, config.prior_dim, config.domain_dim, pair))
            .collect::<Result<Vec<_>>>()?;
        let dkin = plan
            .dkin
            .iter()
            .map(|&pair| DkinModule::new(pb, config.domain_dim, config.prior_dim, pair))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            plan,
            prior,
            domain,
            rfin,
            dkin,
            prompt: PromptEncoder::new(pb, config.decoder_dim)?,
            decoder: MaskDecoder::new(pb, config)?,
        })
    }

    /// Mask logits `[B, 1, x_c, x_c]` from the high-resolution view
    /// `[B, 1, x_s, x_s]` and the low-resolution view `[B, 1, x_c, x_c]`.
    pub fn forward<'g, T: Element>(&self, p: &Bound<'g, T>, x_s: Var<'g, T>, x_c: Var<'g, T>) -> Result<Var<'g, T>> {
        self.forward_with_plan(p, &self.plan, x_s, x_c)
    }

    /// Same as [`MbaNet::forward`] under an alternative ordering of the same
    /// connections.
    pub fn forward_with_plan<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        plan: &FusionPlan,
        x_s: Var<'g, T>,
        x_c: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        let fused = self.encode_with_plan(p, plan, x_s, x_c)?;
        self.decode(p, fused)
    }

    /// Run both branches and return the fused embedding `[B, C_d, g, g]`.
    pub fn encode_with_plan<'g, T: Element>(
        &self,
        p: &Bound<'g, T>,
        plan: &FusionPlan,
        x_s: Var<'g, T>,
        x_c: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        if plan.rfin != self.plan.rfin || plan.dkin != self.plan.dkin || plan.m != self.plan.m {
            return Err(Error::Config("plan connections differ from the model's".into()));
        }
        plan.validate()?;
        self.check_inputs(&x_s, &x_c)?;

        let mut prior = self.prior.embed(p, x_s)?;
        let mut prior_out = BTreeMap::new();
        let mut domain = x_c;
        let mut domain_out = BTreeMap::new();
        let mut pending_rfin = BTreeMap::new();
        let mut pending_dkin: BTreeMap<usize, Injection<'_, 'g, T>> = BTreeMap::new();
        let mut fused = None;

        for step in &plan.steps {
            match *step {
                Step::PriorSegment { from, to } => {
                    let injections = pending_dkin.range(from..=to).map(|(&k, &v)| (k, v)).collect();
                    let (state, taps) = self.prior.forward_segment(p, prior, from, to, &injections)?;
                    prior = state;
                    prior_out.insert(to, state);
                    prior_out.extend(taps);
                }
                Step::DomainLayer(j) => {
                    domain = self.domain.forward_layer(p, j, domain, pending_rfin.remove(&j))?;
                    domain_out.insert(j, domain);
                }
                Step::Rfin { source, target } => {
                    let module = self.rfin.iter().find(|m| m.source == source && m.target == target).expect("plan pair");
                    let tokens = *prior_out.get(&source).ok_or_else(|| missing("prior", source))?;
                    pending_rfin.insert(target, module.forward(p, tokens)?);
                }
                Step::Dkin { source, target } => {
                    let module = self.dkin.iter().find(|m| m.source == source && m.target == target).expect("plan pair");
                    let fmap = *domain_out.get(&source).ok_or_else(|| missing("domain", source))?;
                    let tokens = module.forward(p, fmap, prior.shape()[1])?;
                    pending_dkin.insert(target, Injection { tokens, norm: &module.norm });
                }
                Step::FinalFuse => {
                    let a = self.prior.neck.forward(p, prior)?;
                    let b = self.domain.output(p, domain)?;
                    fused = Some(final_fuse(a, b)?);
                }
            }
        }
        fused.ok_or_else(|| Error::Config("plan has no final-fuse step".into()))
    }

    /// Prompt with the full-image box and decode the fused embedding.
    pub fn decode<'g, T: Element>(&self, p: &Bound<'g, T>, fused: Var<'g, T>) -> Result<Var<'g, T>> {
        let batch = fused.shape()[0];
        let prompts = self.prompt.encode(p, batch, (self.config.x_c, self.config.x_c))?;
        self.decoder.decode(p, fused, prompts)
    }

    fn check_inputs<T: Element>(&self, x_s: &Var<'_, T>, x_c: &Var<'_, T>) -> Result<()> {
        let (hs, hc) = (x_s.shape(), x_c.shape());
        let (s, c) = (self.config.x_s, self.config.x_c);
        if hs.len() != 4 || hs[1..] != [1, s, s] || hc.len() != 4 || hc[1..] != [1, c, c] || hs[0] != hc[0] {
            return Err(Error::shape(
                "mbanet_forward",
                format!("expected views [B, 1, {s}, {s}] and [B, 1, {c}, {c}], got {hs:?} and {hc:?}"),
            ));
        }
        Ok(())
    }
}

fn missing(branch: &str, layer: usize) -> Error {
    Error::Cycle(format!("{branch} layer {layer} output read before it was produced"))
}
