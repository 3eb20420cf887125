mod conv;
mod elementwise;
mod linalg;
mod norm;
mod reduce;
mod shape;

pub use elementwise::DEFAULT_LEAKY_SLOPE;
pub use norm::{NormKind, NORM_EPS};
pub use shape::grid_side;

use super::{Element, Var};
use crate::error::{Error, Result};

pub(crate) fn same_shape<T: Element>(op: &'static str, a: &Var<'_, T>, b: &Var<'_, T>) -> Result<()> {
    if !a.same_graph(b) {
        return Err(Error::shape(op, "operands belong to different graphs"));
    }
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::shape(op, format!("operand shapes differ: {sa:?} vs {sb:?}")));
    }
    Ok(())
}

pub(crate) fn rank_check(op: &'static str, shape: &[usize], rank: usize, what: &str) -> Result<()> {
    if shape.len() != rank {
        return Err(Error::shape(op, format!("{what} must be rank {rank}, got {shape:?}")));
    }
    Ok(())
}

pub(crate) fn same_graph<T: Element>(op: &'static str, a: &Var<'_, T>, b: &Var<'_, T>) -> Result<()> {
    if a.same_graph(b) {
        Ok(())
    } else {
        Err(Error::shape(op, "operands belong to different graphs"))
    }
}
