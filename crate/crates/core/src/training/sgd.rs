use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Heavy-ball SGD with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub config: SgdConfig,
    pub velocity: Vec<Tensor<T>>,
    pub steps: u64,
}

impl<T: Element> Sgd<T> {
    /// Zero velocity buffers shaped like `params`.
    pub fn new<'a>(config: SgdConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let velocity = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { config, velocity, steps: 0 }
    }

    /// `g' = g + wd·θ; v ← μ·v + g'; θ ← θ − lr·v` for every tensor.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Tensor<T>>,
        grads: &[Tensor<T>],
        lr: f64,
    ) -> Result<()> {
        let params: Vec<&mut Tensor<T>> = params.into_iter().collect();
        if params.len() != grads.len() || params.len() != self.velocity.len() {
            return Err(Error::shape(
                "sgd_step",
                format!("{} params, {} grads, {} velocity buffers", params.len(), grads.len(), self.velocity.len()),
            ));
        }
        let mu = T::from_f64_lossy(self.config.momentum);
        let wd = T::from_f64_lossy(self.config.weight_decay);
        let lr = T::from_f64_lossy(lr);
        for (k, ((theta, g), v)) in params.into_iter().zip(grads).zip(&mut self.velocity).enumerate() {
            if theta.shape() != g.shape() || theta.shape() != v.shape() {
                return Err(Error::shape(
                    "sgd_step",
                    format!("tensor {k}: param {:?}, grad {:?}, velocity {:?}", theta.shape(), g.shape(), v.shape()),
                ));
            }
            for ((t, &gi), vi) in theta.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                let gp = gi + wd * *t;
                *vi = mu * *vi + gp;
                *t = *t - lr * *vi;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(theta0: f64, grads: &[f64], cfg: SgdConfig, lr: f64) -> (f64, f64) {
        let mut theta = Tensor::scalar(theta0);
        let mut opt = Sgd::new(cfg, [&theta]);
        for &g in grads {
            opt.step([&mut theta], &[Tensor::scalar(g)], lr).unwrap();
        }
        (theta.item(), opt.velocity[0].item())
    }

    #[test]
    fn one_step_by_hand() {
        let (theta, v) = run(0.0, &[1.0], SgdConfig { momentum: 0.9, weight_decay: 0.0 }, 0.1);
        assert_eq!(theta, -0.1);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn two_momentum_steps_by_hand() {
        let (theta, v) = run(0.0, &[1.0, 1.0], SgdConfig { momentum: 0.99, weight_decay: 0.0 }, 1.0);
        assert!((theta + 2.99).abs() < 1e-12);
        assert!((v - 1.99).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_and_zero_lr_leave_params() {
        let cfg = SgdConfig { momentum: 0.99, weight_decay: 0.0 };
        assert_eq!(run(0.7, &[0.0], cfg, 0.1).0, 0.7);
        let cfg = SgdConfig { momentum: 0.99, weight_decay: 1e-4 };
        assert_eq!(run(0.7, &[3.0], cfg, 0.0).0, 0.7);
    }

    #[test]
    fn weight_decay_shrinks() {
        let (theta, _) = run(2.0, &[0.0], SgdConfig { momentum: 0.99, weight_decay: 1e-4 }, 0.1);
        assert!(theta.abs() < 2.0);
    }

    #[test]
    fn mismatched_lengths_fail() {
        let mut theta = Tensor::<f64>::scalar(0.0);
        let mut opt = Sgd::new(SgdConfig { momentum: 0.0, weight_decay: 0.0 }, [&theta]);
        assert!(opt.step([&mut theta], &[], 0.1).is_err());
        assert!(opt.step([&mut theta], &[Tensor::zeros([2])], 0.1).is_err());
    }
}
