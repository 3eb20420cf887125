use super::rank_check;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Element, Tensor, Var};

struct BatchedDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    out_shape: Vec<usize>,
}

fn batched_dims(op: &'static str, a: &[usize], b: &[usize], b_transposed: bool) -> Result<BatchedDims> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::shape(op, format!("operands need rank >= 2, got {a:?} and {b:?}")));
    }
    if a.len() != b.len() || a[..a.len() - 2] != b[..b.len() - 2] {
        return Err(Error::shape(op, format!("batch extents differ: {a:?} vs {b:?}")));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (kb, n) = if b_transposed {
        (b[b.len() - 1], b[b.len() - 2])
    } else {
        (b[b.len() - 2], b[b.len() - 1])
    };
    if k != kb {
        return Err(Error::shape(op, format!("inner extents differ: {a:?} vs {b:?}")));
    }
    let mut out_shape = a[..a.len() - 2].to_vec();
    out_shape.extend([m, n]);
    Ok(BatchedDims { batch: a[..a.len() - 2].iter().product(), m, k, n, out_shape })
}

impl<'g, T: Element> Var<'g, T> {
    /// Batched `[.., M, K] · [.., K, N]`.
    pub fn matmul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.bmm(other, false, "matmul")
    }

    /// Batched `[.., M, K] · [.., N, K]ᵀ`.
    pub fn matmul_nt(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.bmm(other, true, "matmul_nt")
    }

    fn bmm(self, other: Var<'g, T>, trans_b: bool, op: &'static str) -> Result<Var<'g, T>> {
        super::same_graph(op, &self, &other)?;
        let (a, b) = (self.value(), other.value());
        let BatchedDims { batch, m, k, n, out_shape } =
            batched_dims(op, a.shape(), b.shape(), trans_b)?;
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &a.data()[i * m * k..(i + 1) * m * k],
                false,
                &b.data()[i * k * n..(i + 1) * k * n],
                trans_b,
                T::zero(),
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let (ia, ib) = (self.id, other.id);
        let out = Tensor::new(out_shape, out)?;
        Ok(self.graph.push(out, &[ia, ib], move |g, sink| {
            if sink.wants(ia) {
                let da = sink.slot(ia, batch * m * k);
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let bi = &b.data()[i * k * n..(i + 1) * k * n];
                    // dA = dC·Bᵀ for A·B, dC·B for A·Bᵀ
                    gemm(m, n, k, gi, false, bi, !trans_b, T::one(), &mut da[i * m * k..(i + 1) * m * k]);
                }
            }
            if sink.wants(ib) {
                let db = sink.slot(ib, batch * k * n);
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &a.data()[i * m * k..(i + 1) * m * k];
                    let dbi = &mut db[i * k * n..(i + 1) * k * n];
                    if trans_b {
                        // dB (n×k) = dCᵀ·A
                        gemm(n, m, k, gi, true, ai, false, T::one(), dbi);
                    } else {
                        // dB (k×n) = Aᵀ·dC
                        gemm(k, m, n, ai, true, gi, false, T::one(), dbi);
                    }
                }
            }
        }))
    }

    /// Affine map over the last axis: `x · w + b` with `w: [K, N]`, `b: [N]`.
    pub fn linear(self, w: Var<'g, T>, b: Var<'g, T>) -> Result<Var<'g, T>> {
        super::same_graph("linear", &self, &w)?;
        super::same_graph("linear", &self, &b)?;
        let (x, wv, bv) = (self.value(), w.value(), b.value());
        rank_check("linear", wv.shape(), 2, "weight")?;
        let (k, n) = (wv.shape()[0], wv.shape()[1]);
        let xs = x.shape();
        if xs.last() != Some(&k) || bv.shape() != [n] {
            return Err(Error::shape(
                "linear",
                format!("input {xs:?}, weight {:?}, bias {:?} are incompatible", wv.shape(), bv.shape()),
            ));
        }
        let rows = x.numel() / k;
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(bv.data());
        }
        gemm(rows, k, n, x.data(), false, wv.data(), false, T::one(), &mut out);
        let mut out_shape = xs.to_vec();
        *out_shape.last_mut().unwrap() = n;
        let (ix, iw, ib) = (self.id, w.id, b.id);
        let out = Tensor::new(out_shape, out)?;
        Ok(self.graph.push(out, &[ix, iw, ib], move |g, sink| {
            if sink.wants(ix) {
                gemm(rows, n, k, g, false, wv.data(), true, T::one(), sink.slot(ix, rows * k));
            }
            if sink.wants(iw) {
                gemm(k, rows, n, x.data(), true, g, false, T::one(), sink.slot(iw, k * n));
            }
            if sink.wants(ib) {
                let db = sink.slot(ib, n);
                for row in g.chunks_exact(n) {
                    db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                }
            }
        }))
    }
}
