use crate::error::{Error, Result};
use crate::tensor::{numel, Element, Tensor, Var};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// `out[idx] = src[perm-mapped idx]`; returns the gather index per output element.
fn permute_index(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = numel(shape);
    let mut index = Vec::with_capacity(n);
    let mut counter = vec![0usize; out_shape.len()];
    let mut offset = 0usize;
    for _ in 0..n {
        index.push(offset);
        for d in (0..out_shape.len()).rev() {
            counter[d] += 1;
            offset += src_strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    index
}

/// Exact integer square root, if `n` is a perfect square.
pub fn grid_side(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

impl<'g, T: Element> Var<'g, T> {
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g, T>> {
        let x = self.value();
        if numel(shape) != x.numel() || shape.contains(&0) {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} ({} elements) as {shape:?}", x.shape(), x.numel()),
            ));
        }
        let out = Tensor::new(shape.to_vec(), x.data().to_vec())?;
        let id = self.id;
        Ok(self.graph.push(out, &[id], move |g, sink| sink.add_with(id, g.len(), |i| g[i])))
    }

    /// Reorder axes: output axis `k` is input axis `axes[k]`.
    pub fn permute(self, axes: &[usize]) -> Result<Var<'g, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape("permute", format!("{axes:?} is not a permutation of {shape:?}")));
        }
        let index = permute_index(&shape, axes);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let out = Tensor::new(out_shape, index.iter().map(|&i| x.data()[i]).collect())?;
        let id = self.id;
        Ok(self.graph.push(out, &[id], move |g, sink| {
            if sink.wants(id) {
                let dx = sink.slot(id, g.len());
                for (o, &src) in index.iter().enumerate() {
                    dx[src] += g[o];
                }
            }
        }))
    }

    /// Repeat a `[1, ...]` tensor `n` times along the leading axis.
    pub fn expand_batch(self, n: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        if x.shape().first() != Some(&1) || n == 0 {
            return Err(Error::shape("expand_batch", format!("need leading extent 1, got {:?}", x.shape())));
        }
        let len = x.numel();
        let mut shape = x.shape().to_vec();
        shape[0] = n;
        let data = x.data().iter().copied().cycle().take(len * n).collect();
        let id = self.id;
        Ok(self.graph.push(Tensor::new(shape, data)?, &[id], move |g, sink| {
            if sink.wants(id) {
                let dx = sink.slot(id, len);
                for chunk in g.chunks_exact(len) {
                    dx.iter_mut().zip(chunk).for_each(|(d, &v)| *d += v);
                }
            }
        }))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'g, T>], axis: usize) -> Result<Var<'g, T>> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", "no operands"))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        for (p, v) in parts.iter().zip(&values) {
            super::same_graph("concat", first, p)?;
            let s = v.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(d, (a, b))| d != axis && a != b) {
                return Err(Error::shape("concat", format!("{s:?} does not align with {base:?} on axis {axis}")));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let widths: Vec<usize> = values.iter().map(|v| v.shape()[axis] * inner).collect();
        let total_width: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total_width);
        for o in 0..outer {
            for (v, &w) in values.iter().zip(&widths) {
                data.extend_from_slice(&v.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total_width / inner;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let graph = first.graph;
        let parents = ids.clone();
        Ok(graph.push(Tensor::new(shape, data)?, &parents, move |g, sink| {
            let mut offset = 0;
            for (&id, &w) in ids.iter().zip(&widths) {
                if sink.wants(id) {
                    let dx = sink.slot(id, outer * w);
                    for o in 0..outer {
                        let src = &g[o * total_width + offset..o * total_width + offset + w];
                        dx[o * w..(o + 1) * w].iter_mut().zip(src).for_each(|(d, &v)| *d += v);
                    }
                }
                offset += w;
            }
        }))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape("narrow", format!("[{start}, {start}+{len}) on axis {axis} of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let (src_w, w) = (shape[axis] * inner, len * inner);
        let mut data = Vec::with_capacity(outer * w);
        for o in 0..outer {
            data.extend_from_slice(&x.data()[o * src_w + start * inner..o * src_w + start * inner + w]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let n = x.numel();
        let id = self.id;
        Ok(self.graph.push(Tensor::new(out_shape, data)?, &[id], move |g, sink| {
            if sink.wants(id) {
                let dx = sink.slot(id, n);
                for o in 0..outer {
                    let dst = &mut dx[o * src_w + start * inner..o * src_w + start * inner + w];
                    dst.iter_mut().zip(&g[o * w..(o + 1) * w]).for_each(|(d, &v)| *d += v);
                }
            }
        }))
    }

    /// Tokens `[B, N, C]` to feature map `[B, C, √N, √N]`.
    pub fn tokens_to_grid(self) -> Result<Var<'g, T>> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::shape("tokens_to_grid", format!("expected [B, N, C], got {s:?}")));
        }
        let side = grid_side(s[1])
            .ok_or_else(|| Error::shape("tokens_to_grid", format!("{} tokens do not form a square grid", s[1])))?;
        self.permute(&[0, 2, 1])?.reshape(&[s[0], s[2], side, side])
    }

    /// Feature map `[B, C, H, W]` to tokens `[B, H·W, C]`.
    pub fn grid_to_tokens(self) -> Result<Var<'g, T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(Error::shape("grid_to_tokens", format!("expected [B, C, H, W], got {s:?}")));
        }
        self.reshape(&[s[0], s[1], s[2] * s[3]])?.permute(&[0, 2, 1])
    }
}
