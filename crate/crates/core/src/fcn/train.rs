//! SGD with momentum and the patch-sampling training loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::PatchSampler;
use crate::error::{Error, Result};
use crate::imaging::RasterImage;
use crate::page_gt::LabelMap;

use super::net::{image_to_tensor, loss_and_grad, Fcn8sParams};
use super::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
}

impl SgdConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            v.push(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            v.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        v
    }
}

/// Momentum buffer: `v ← μ·v + g; p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub config: SgdConfig,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(config: SgdConfig) -> Self {
        Sgd {
            config,
            velocity: Vec::new(),
        }
    }

    /// Apply one update to parallel lists of parameter and gradient arrays.
    pub fn step_arrays(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) {
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
        }
        let lr = T::from_f64(self.config.lr);
        let mu = T::from_f64(self.config.momentum);
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = mu * *v + g;
                *p = *p - lr * *v;
            }
        }
    }

    pub fn step(&mut self, params: &mut Fcn8sParams<T>, grads: &Fcn8sParams<T>) {
        let g: Vec<&[T]> = grads.named_arrays().into_iter().map(|(_, a)| a).collect();
        self.step_arrays(params.arrays_mut(), g);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sgd: SgdConfig {
                lr: 0.02,
                momentum: 0.9,
            },
            steps: 1000,
            batch_size: 4,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.sgd.violations();
        if self.sgd.lr <= 0.0 {
            v.push("training needs lr > 0".into());
        }
        if self.batch_size == 0 {
            v.push("batch_size must be positive".into());
        }
        v
    }
}

/// One training page: network-ready image plus its label map.
#[derive(Debug, Clone)]
pub struct TrainPage {
    pub image: RasterImage,
    pub labels: LabelMap,
}

/// Stateful trainer. A step whose loss is not finite returns an error and
/// leaves the parameters untouched, so `params` is always the last good
/// state.
pub struct Trainer<T> {
    pub params: Fcn8sParams<T>,
    pub config: TrainConfig,
    sgd: Sgd<T>,
    step: usize,
    pub losses: Vec<f64>,
}

impl<T: Real> Trainer<T> {
    pub fn new(params: Fcn8sParams<T>, config: TrainConfig) -> Result<Self> {
        let v = config.violations();
        if !v.is_empty() {
            return Err(Error::InvalidArgument(v.join("; ")));
        }
        Ok(Trainer {
            params,
            sgd: Sgd::new(config.sgd),
            config,
            step: 0,
            losses: Vec::new(),
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// One SGD step on an explicit batch.
    pub fn step_batch(&mut self, x: &Tensor<T>, labels: &[&[u8]]) -> Result<f64> {
        let (loss, grad) = loss_and_grad(&self.params, x, labels)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                loss,
            });
        }
        self.sgd.step(&mut self.params, &grad);
        self.step += 1;
        self.losses.push(loss);
        Ok(loss)
    }

    /// Draw a batch with `sampler` from uniformly chosen pages and step.
    pub fn step_sampled<S: PatchSampler + ?Sized, R: Rng>(
        &mut self,
        pages: &[TrainPage],
        sampler: &S,
        rng: &mut R,
    ) -> Result<f64> {
        if pages.is_empty() {
            return Err(Error::InvalidArgument("no training pages".into()));
        }
        let channels = self.params.config.in_channels;
        let mut items = Vec::with_capacity(self.config.batch_size);
        let mut labels = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let page = &pages[rng.random_range(0..pages.len())];
            let s = sampler.sample(&page.image, &page.labels, rng)?;
            items.push(image_to_tensor::<T>(&s.patch, channels)?);
            labels.push(s.labels);
        }
        let x = Tensor::stack(&items)?;
        let refs: Vec<&[u8]> = labels.iter().map(|l| l.labels()).collect();
        self.step_batch(&x, &refs)
    }
}

/// Run `config.steps` sampled steps; returns the trained parameters and
/// the per-step loss history.
pub fn train<T: Real, S: PatchSampler + ?Sized, R: Rng>(
    params: Fcn8sParams<T>,
    pages: &[TrainPage],
    sampler: &S,
    config: TrainConfig,
    rng: &mut R,
) -> Result<(Fcn8sParams<T>, Vec<f64>)> {
    let mut trainer = Trainer::new(params, config)?;
    for _ in 0..config.steps {
        trainer.step_sampled(pages, sampler, rng)?;
    }
    Ok((trainer.params, trainer.losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_zero_is_plain_descent() {
        let mut sgd = Sgd::<f64>::new(SgdConfig { lr: 0.1, momentum: 0.0 });
        let mut p = vec![1.0, -2.0];
        sgd.step_arrays(vec![&mut p], vec![&[0.5, 1.0]]);
        assert_eq!(p, vec![1.0 - 0.1 * 0.5, -2.0 - 0.1 * 1.0]);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut sgd = Sgd::<f64>::new(SgdConfig { lr: 0.0, momentum: 0.9 });
        let mut p = vec![3.0, 4.0];
        for _ in 0..5 {
            sgd.step_arrays(vec![&mut p], vec![&[7.0, -1.0]]);
        }
        assert_eq!(p, vec![3.0, 4.0]);
    }

    #[test]
    fn quadratic_matches_reference_loop() {
        // f(p) = 0.5·Σ a_i (p_i − c_i)², gradient a_i (p_i − c_i)
        let a = [1.0, 3.0, 0.5];
        let c = [2.0, -1.0, 4.0];
        let (lr, mu) = (0.05, 0.8);
        let mut sgd = Sgd::<f64>::new(SgdConfig { lr, momentum: mu });
        let mut p = vec![0.0, 0.0, 0.0];
        let mut rp = p.clone();
        let mut rv = [0.0; 3];
        for _ in 0..400 {
            let g: Vec<f64> = (0..3).map(|i| a[i] * (p[i] - c[i])).collect();
            sgd.step_arrays(vec![&mut p], vec![&g]);
            for i in 0..3 {
                let gi = a[i] * (rp[i] - c[i]);
                rv[i] = mu * rv[i] + gi;
                rp[i] -= lr * rv[i];
            }
        }
        for i in 0..3 {
            assert!((p[i] - rp[i]).abs() < 1e-12);
            assert!((p[i] - c[i]).abs() < 1e-3, "converges");
        }
    }

    #[test]
    fn config_violations() {
        let cfg = TrainConfig {
            sgd: SgdConfig { lr: 0.0, momentum: 1.0 },
            steps: 1,
            batch_size: 0,
        };
        assert_eq!(cfg.violations().len(), 3);
    }
}
