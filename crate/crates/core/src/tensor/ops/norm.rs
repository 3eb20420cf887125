use super::rank_check;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

/// Variance guard shared by layer and instance normalization.
pub const NORM_EPS: f64 = 1e-5;

/// Which axes form one normalization group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    /// Last axis, per token.
    Layer,
    /// Spatial axes of `[B, C, H, W]`, per (sample, channel).
    Instance,
}

impl<'g, T: Element> Var<'g, T> {
    pub fn layer_norm(self, gamma: Var<'g, T>, beta: Var<'g, T>, eps: f64) -> Result<Var<'g, T>> {
        self.norm(NormKind::Layer, gamma, beta, eps)
    }

    pub fn instance_norm(self, gamma: Var<'g, T>, beta: Var<'g, T>, eps: f64) -> Result<Var<'g, T>> {
        self.norm(NormKind::Instance, gamma, beta, eps)
    }

    /// `(x − μ)/√(var + ε)·γ + β` with biased variance over each group.
    pub fn norm(self, kind: NormKind, gamma: Var<'g, T>, beta: Var<'g, T>, eps: f64) -> Result<Var<'g, T>> {
        super::same_graph("norm", &self, &gamma)?;
        super::same_graph("norm", &self, &beta)?;
        let (x, gv, bv) = (self.value(), gamma.value(), beta.value());
        let xs = x.shape().to_vec();
        // group_len: elements per group; channels: affine extent; the channel
        // of element i is (i / stride) % channels.
        let (group_len, channels, stride) = match kind {
            NormKind::Layer => {
                let c = *xs.last().ok_or_else(|| Error::shape("layer_norm", "scalar input"))?;
                (c, c, 1)
            }
            NormKind::Instance => {
                rank_check("instance_norm", &xs, 4, "input")?;
                let hw = xs[2] * xs[3];
                (hw, xs[1], hw)
            }
        };
        if gv.shape() != [channels] || bv.shape() != [channels] {
            return Err(Error::shape(
                "norm",
                format!("affine params {:?}/{:?} for {channels} channels", gv.shape(), bv.shape()),
            ));
        }
        let channel_of = move |i: usize| (i / stride) % channels;
        let eps = T::from_f64_lossy(eps);
        let n = T::from_usize(group_len).unwrap();
        let groups = x.numel() / group_len;
        let mut xhat = vec![T::zero(); x.numel()];
        let mut inv_std = vec![T::zero(); groups];
        let mut out = vec![T::zero(); x.numel()];
        for gi in 0..groups {
            let range = gi * group_len..(gi + 1) * group_len;
            let xg = &x.data()[range.clone()];
            let mean = xg.iter().copied().sum::<T>() / n;
            let var = xg.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[gi] = is;
            for i in range {
                let h = (x.data()[i] - mean) * is;
                xhat[i] = h;
                let c = channel_of(i);
                out[i] = h * gv.data()[c] + bv.data()[c];
            }
        }
        let (ix, ig, ib) = (self.id, gamma.id, beta.id);
        let out = Tensor::new(xs, out)?;
        Ok(self.graph.push(out, &[ix, ig, ib], move |g, sink| {
            if sink.wants(ig) {
                let dg = sink.slot(ig, channels);
                for (i, (&gv_, &h)) in g.iter().zip(&xhat).enumerate() {
                    dg[channel_of(i)] += gv_ * h;
                }
            }
            if sink.wants(ib) {
                let db = sink.slot(ib, channels);
                for (i, &gv_) in g.iter().enumerate() {
                    db[channel_of(i)] += gv_;
                }
            }
            if sink.wants(ix) {
                let total = g.len();
                let dx = sink.slot(ix, total);
                let mut dh = vec![T::zero(); group_len];
                for gi in 0..groups {
                    let base = gi * group_len;
                    let mut mean_dh = T::zero();
                    let mut mean_dh_h = T::zero();
                    for k in 0..group_len {
                        let i = base + k;
                        dh[k] = g[i] * gv.data()[channel_of(i)];
                        mean_dh += dh[k];
                        mean_dh_h += dh[k] * xhat[i];
                    }
                    mean_dh = mean_dh / n;
                    mean_dh_h = mean_dh_h / n;
                    for k in 0..group_len {
                        let i = base + k;
                        dx[i] += inv_std[gi] * (dh[k] - mean_dh - xhat[i] * mean_dh_h);
                    }
                }
            }
        }))
    }
}
