use super::rank_check;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Element, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    /// `[Cin·kh·kw, Ho·Wo]` patch matrix of one image.
    fn im2col<T: Element>(&self, x: &[T], col: &mut [T]) {
        let cols = self.col_cols();
        for c in 0..self.cin {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            dst[oy * self.wo + ox] = if iy >= 0
                                && (iy as usize) < self.h
                                && ix >= 0
                                && (ix as usize) < self.w
                            {
                                x[(c * self.h + iy as usize) * self.w + ix as usize]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Element>(&self, col: &[T], dx: &mut [T]) {
        let cols = self.col_cols();
        for c in 0..self.cin {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &col[row * cols..(row + 1) * cols];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix < 0 || ix as usize >= self.w {
                                continue;
                            }
                            dx[(c * self.h + iy as usize) * self.w + ix as usize] += src[oy * self.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<'g, T: Element> Var<'g, T> {
    /// 2-D cross-correlation of `[B, Cin, H, W]` with `[Cout, Cin, kh, kw]`
    /// plus per-channel bias.
    pub fn conv2d(self, w: Var<'g, T>, b: Var<'g, T>, stride: usize, pad: usize) -> Result<Var<'g, T>> {
        super::same_graph("conv2d", &self, &w)?;
        super::same_graph("conv2d", &self, &b)?;
        let (x, wv, bv) = (self.value(), w.value(), b.value());
        rank_check("conv2d", x.shape(), 4, "input")?;
        rank_check("conv2d", wv.shape(), 4, "weight")?;
        let [bsz, cin, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let [cout, wcin, kh, kw] = [wv.shape()[0], wv.shape()[1], wv.shape()[2], wv.shape()[3]];
        if wcin != cin {
            return Err(Error::shape(
                "conv2d",
                format!("input has {cin} channels but weight expects {wcin}"),
            ));
        }
        if bv.shape() != [cout] {
            return Err(Error::shape("conv2d", format!("bias {:?} for {cout} outputs", bv.shape())));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be positive"));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{wd} (pad {pad})"),
            ));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wd + 2 * pad - kw) / stride + 1;
        let geom = ConvGeom { cin, h, w: wd, kh, kw, stride, pad, ho, wo };
        let (rows, cols) = (geom.col_rows(), geom.col_cols());
        let in_len = cin * h * wd;
        let out_len = cout * cols;

        let mut out = vec![T::zero(); bsz * out_len];
        let mut col = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * cols] };
        for n in 0..bsz {
            let xi = &x.data()[n * in_len..(n + 1) * in_len];
            let oi = &mut out[n * out_len..(n + 1) * out_len];
            for (co, chunk) in oi.chunks_exact_mut(cols).enumerate() {
                chunk.fill(bv.data()[co]);
            }
            let patches: &[T] = if geom.is_pointwise() {
                xi
            } else {
                geom.im2col(xi, &mut col);
                &col
            };
            gemm(cout, rows, cols, wv.data(), false, patches, false, T::one(), oi);
        }

        let (ix, iw, ib) = (self.id, w.id, b.id);
        let out = Tensor::new(vec![bsz, cout, ho, wo], out)?;
        Ok(self.graph.push(out, &[ix, iw, ib], move |g, sink| {
            let want_x = sink.wants(ix);
            let want_w = sink.wants(iw);
            let mut col = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * cols] };
            let mut dcol = vec![T::zero(); if want_x { rows * cols } else { 0 }];
            for n in 0..bsz {
                let gi = &g[n * out_len..(n + 1) * out_len];
                if want_w {
                    let xi = &x.data()[n * in_len..(n + 1) * in_len];
                    let patches: &[T] = if geom.is_pointwise() {
                        xi
                    } else {
                        geom.im2col(xi, &mut col);
                        &col
                    };
                    gemm(cout, cols, rows, gi, false, patches, true, T::one(), sink.slot(iw, cout * rows));
                }
                if want_x {
                    let dx = &mut sink.slot(ix, bsz * in_len)[n * in_len..(n + 1) * in_len];
                    if geom.is_pointwise() {
                        gemm(rows, cout, cols, wv.data(), true, gi, false, T::one(), dx);
                    } else {
                        gemm(rows, cout, cols, wv.data(), true, gi, false, T::zero(), &mut dcol);
                        geom.col2im(&dcol, dx);
                    }
                }
                if sink.wants(ib) {
                    let db = sink.slot(ib, cout);
                    for (co, chunk) in gi.chunks_exact(cols).enumerate() {
                        db[co] += chunk.iter().copied().sum::<T>();
                    }
                }
            }
        }))
    }

    /// Stride-2, kernel-2 transposed convolution: `[B, Cin, H, W]` with
    /// weight `[Cin, Cout, 2, 2]` to `[B, Cout, 2H, 2W]`.
    pub fn conv_transpose2x2(self, w: Var<'g, T>, b: Var<'g, T>) -> Result<Var<'g, T>> {
        super::same_graph("conv_transpose2x2", &self, &w)?;
        super::same_graph("conv_transpose2x2", &self, &b)?;
        let (x, wv, bv) = (self.value(), w.value(), b.value());
        rank_check("conv_transpose2x2", x.shape(), 4, "input")?;
        rank_check("conv_transpose2x2", wv.shape(), 4, "weight")?;
        let [bsz, cin, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let cout = wv.shape()[1];
        if wv.shape() != [cin, cout, 2, 2] || bv.shape() != [cout] {
            return Err(Error::shape(
                "conv_transpose2x2",
                format!(
                    "input {:?}, weight {:?}, bias {:?} are incompatible",
                    x.shape(),
                    wv.shape(),
                    bv.shape()
                ),
            ));
        }
        let hw = h * wd;
        let (ho, wo) = (2 * h, 2 * wd);
        let out_len = cout * ho * wo;
        let in_len = cin * hw;
        let taps = cout * 4;
        let mut out = vec![T::zero(); bsz * out_len];
        let mut y = vec![T::zero(); taps * hw];
        for n in 0..bsz {
            let xi = &x.data()[n * in_len..(n + 1) * in_len];
            // y[(co,di,dj), p] = Σ_ci w[ci,(co,di,dj)] x[ci,p]
            gemm(taps, cin, hw, wv.data(), true, xi, false, T::zero(), &mut y);
            let oi = &mut out[n * out_len..(n + 1) * out_len];
            for co in 0..cout {
                for d in 0..4 {
                    let (di, dj) = (d / 2, d % 2);
                    let src = &y[(co * 4 + d) * hw..(co * 4 + d + 1) * hw];
                    for i in 0..h {
                        for j in 0..wd {
                            oi[(co * ho + 2 * i + di) * wo + 2 * j + dj] = src[i * wd + j] + bv.data()[co];
                        }
                    }
                }
            }
        }
        let (ix, iw, ib) = (self.id, w.id, b.id);
        let out = Tensor::new(vec![bsz, cout, ho, wo], out)?;
        Ok(self.graph.push(out, &[ix, iw, ib], move |g, sink| {
            let mut dy = vec![T::zero(); taps * hw];
            for n in 0..bsz {
                let gi = &g[n * out_len..(n + 1) * out_len];
                for co in 0..cout {
                    for d in 0..4 {
                        let (di, dj) = (d / 2, d % 2);
                        let dst = &mut dy[(co * 4 + d) * hw..(co * 4 + d + 1) * hw];
                        for i in 0..h {
                            for j in 0..wd {
                                dst[i * wd + j] = gi[(co * ho + 2 * i + di) * wo + 2 * j + dj];
                            }
                        }
                    }
                }
                if sink.wants(ix) {
                    let dx = &mut sink.slot(ix, bsz * in_len)[n * in_len..(n + 1) * in_len];
                    gemm(cin, taps, hw, wv.data(), false, &dy, false, T::one(), dx);
                }
                if sink.wants(iw) {
                    let xi = &x.data()[n * in_len..(n + 1) * in_len];
                    gemm(cin, hw, taps, xi, false, &dy, true, T::one(), sink.slot(iw, cin * taps));
                }
                if sink.wants(ib) {
                    let db = sink.slot(ib, cout);
                    for (co, chunk) in dy.chunks_exact(4 * hw).enumerate() {
                        db[co] += chunk.iter().copied().sum::<T>();
                    }
                }
            }
        }))
    }
}
