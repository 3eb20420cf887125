use std::rc::Rc;

use num_traits::Float;

use super::same_shape;
use crate::error::Result;
use crate::tensor::{Element, Tensor, Var};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

impl<'g, T: Element> Var<'g, T> {
    fn unary(
        self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<'g, T> {
        let x = self.value();
        let y = x.map(f);
        let yv = Rc::new(y.clone());
        let id = self.id;
        self.graph.push(y, &[id], move |g, sink| {
            let (xd, yd) = (x.data(), yv.data());
            sink.add_with(id, g.len(), |i| g[i] * df(xd[i], yd[i]));
        })
    }

    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        same_shape("add", &self, &other)?;
        let (a, b) = (self.value(), other.value());
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(a.shape(), data)?;
        let (ia, ib) = (self.id, other.id);
        Ok(self.graph.push(out, &[ia, ib], move |g, sink| {
            sink.add_with(ia, g.len(), |i| g[i]);
            sink.add_with(ib, g.len(), |i| g[i]);
        }))
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        same_shape("sub", &self, &other)?;
        let (a, b) = (self.value(), other.value());
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::new(a.shape(), data)?;
        let (ia, ib) = (self.id, other.id);
        Ok(self.graph.push(out, &[ia, ib], move |g, sink| {
            sink.add_with(ia, g.len(), |i| g[i]);
            sink.add_with(ib, g.len(), |i| -g[i]);
        }))
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        same_shape("mul", &self, &other)?;
        let (a, b) = (self.value(), other.value());
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(a.shape(), data)?;
        let (ia, ib) = (self.id, other.id);
        Ok(self.graph.push(out, &[ia, ib], move |g, sink| {
            let (ad, bd) = (a.data(), b.data());
            sink.add_with(ia, g.len(), |i| g[i] * bd[i]);
            sink.add_with(ib, g.len(), |i| g[i] * ad[i]);
        }))
    }

    pub fn div(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        same_shape("div", &self, &other)?;
        let (a, b) = (self.value(), other.value());
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x / y).collect();
        let out = Tensor::new(a.shape(), data)?;
        let (ia, ib) = (self.id, other.id);
        Ok(self.graph.push(out, &[ia, ib], move |g, sink| {
            let (ad, bd) = (a.data(), b.data());
            sink.add_with(ia, g.len(), |i| g[i] / bd[i]);
            sink.add_with(ib, g.len(), |i| -g[i] * ad[i] / (bd[i] * bd[i]));
        }))
    }

    /// Multiply by a scalar constant.
    pub fn scale(self, s: f64) -> Var<'g, T> {
        let s = T::from_f64_lossy(s);
        self.unary(move |x| x * s, move |_, _| s)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g, T> {
        let c = T::from_f64_lossy(c);
        self.unary(move |x| x + c, |_, _| T::one())
    }

    pub fn neg(self) -> Var<'g, T> {
        self.scale(-1.0)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g, T> {
        let a = T::from_f64_lossy(slope);
        self.unary(
            move |x| if x > T::zero() { x } else { a * x },
            move |x, _| if x > T::zero() { T::one() } else { a },
        )
    }

    pub fn relu(self) -> Var<'g, T> {
        self.unary(
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(self) -> Var<'g, T> {
        self.unary(gelu, gelu_grad)
    }
}

pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn gelu<T: Element>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let inv_sqrt2 = T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
    half * x * (T::one() + (x * inv_sqrt2).erf())
}

fn gelu_grad<T: Element>(x: T, _y: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let inv_sqrt2 = T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = T::from_f64_lossy(0.398_942_280_401_432_7);
    let cdf = half * (T::one() + (x * inv_sqrt2).erf());
    let pdf = inv_sqrt_2pi * Float::exp(-half * x * x);
    cdf + x * pdf
}
