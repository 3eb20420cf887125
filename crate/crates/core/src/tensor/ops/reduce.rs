use super::{elementwise::sigmoid, rank_check};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

impl<'g, T: Element> Var<'g, T> {
    /// Sum of all elements, as a scalar.
    pub fn sum(self) -> Var<'g, T> {
        let x = self.value();
        let n = x.numel();
        let id = self.id;
        self.graph.push(Tensor::scalar(x.sum()), &[id], move |g, sink| {
            let g0 = g[0];
            sink.add_with(id, n, |_| g0);
        })
    }

    pub fn mean(self) -> Var<'g, T> {
        let n = self.numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut y = x.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let idx = |k: usize| base + k * inner;
                let max = (0..len).map(|k| y[idx(k)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for k in 0..len {
                    let e = (y[idx(k)] - max).exp();
                    y[idx(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    y[idx(k)] = y[idx(k)] / total;
                }
            }
        }
        let out = Tensor::new(shape, y)?;
        let yv = out.clone();
        let id = self.id;
        Ok(self.graph.push(out, &[id], move |g, sink| {
            if !sink.wants(id) {
                return;
            }
            let yd = yv.data();
            let dx = sink.slot(id, yd.len());
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let dot: T = (0..len).map(|k| g[base + k * inner] * yd[base + k * inner]).sum();
                    for k in 0..len {
                        let j = base + k * inner;
                        dx[j] += yd[j] * (g[j] - dot);
                    }
                }
            }
        }))
    }

    /// `[B, C, H, W]` to `[B, C]` spatial mean.
    pub fn global_avg_pool(self) -> Result<Var<'g, T>> {
        let x = self.value();
        rank_check("global_avg_pool", x.shape(), 4, "input")?;
        let (b, c) = (x.shape()[0], x.shape()[1]);
        let hw = x.shape()[2] * x.shape()[3];
        let inv = T::one() / T::from_usize(hw).unwrap();
        let out: Vec<T> = x.data().chunks_exact(hw).map(|ch| ch.iter().copied().sum::<T>() * inv).collect();
        let id = self.id;
        let out = Tensor::new(vec![b, c], out)?;
        Ok(self.graph.push(out, &[id], move |g, sink| {
            sink.add_with(id, b * c * hw, |i| g[i / hw] * inv);
        }))
    }

    /// Multiply every channel of `[B, C, H, W]` by the matching entry of `gate: [B, C]`.
    pub fn scale_channels(self, gate: Var<'g, T>) -> Result<Var<'g, T>> {
        super::same_graph("scale_channels", &self, &gate)?;
        let (x, gv) = (self.value(), gate.value());
        rank_check("scale_channels", x.shape(), 4, "input")?;
        if gv.shape() != &x.shape()[..2] {
            return Err(Error::shape(
                "scale_channels",
                format!("gate {:?} does not match input {:?}", gv.shape(), x.shape()),
            ));
        }
        let hw = x.shape()[2] * x.shape()[3];
        let out: Vec<T> = x.data().iter().enumerate().map(|(i, &v)| v * gv.data()[i / hw]).collect();
        let (ix, ig) = (self.id, gate.id);
        let out = Tensor::new(x.shape(), out)?;
        Ok(self.graph.push(out, &[ix, ig], move |g, sink| {
            sink.add_with(ix, g.len(), |i| g[i] * gv.data()[i / hw]);
            if sink.wants(ig) {
                let dg = sink.slot(ig, gv.numel());
                for (i, (&gi, &xi)) in g.iter().zip(x.data()).enumerate() {
                    dg[i / hw] += gi * xi;
                }
            }
        }))
    }

    /// Mean binary cross-entropy of `self` as logits against a fixed target,
    /// computed in the overflow-free form `max(x,0) − x·t + ln(1 + e^{−|x|})`.
    pub fn bce_with_logits(self, target: &Tensor<T>) -> Result<Var<'g, T>> {
        let x = self.value();
        if x.shape() != target.shape() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("logits {:?} vs target {:?}", x.shape(), target.shape()),
            ));
        }
        let n = T::from_usize(x.numel()).unwrap();
        let total: T = x
            .data()
            .iter()
            .zip(target.data())
            .map(|(&l, &t)| l.max(T::zero()) - l * t + (-l.abs()).exp().ln_1p())
            .sum();
        let t = target.clone();
        let id = self.id;
        Ok(self.graph.push(Tensor::scalar(total / n), &[id], move |g, sink| {
            let scale = g[0] / n;
            let (xd, td) = (x.data(), t.data());
            sink.add_with(id, xd.len(), |i| (sigmoid(xd[i]) - td[i]) * scale);
        }))
    }
}
