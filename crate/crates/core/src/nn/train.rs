//! Adam optimizer, step-decay schedules and the early-stopping training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, Loss, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub initial_lr: f64,
    /// `(epoch, multiplier)`: from 1-based `epoch` on, the learning rate is
    /// multiplied by `multiplier`.
    #[serde(default)]
    pub schedule: Vec<(usize, f64)>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    /// Restore the weights of the best validation epoch instead of keeping
    /// the final ones.
    #[serde(default)]
    pub restore_best: bool,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.initial_lr > 0.0) || !self.initial_lr.is_finite() {
            return bad("initial learning rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch size, epoch limit and patience must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        if self.schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("learning-rate schedule epochs must be strictly increasing");
        }
        if self
            .schedule
            .iter()
            .any(|&(e, m)| e == 0 || !(m > 0.0) || !m.is_finite())
        {
            return bad("schedule entries need epoch >= 1 and a positive multiplier");
        }
        Ok(())
    }

    /// Learning rate in effect during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.schedule
            .iter()
            .take_while(|(e, _)| *e <= epoch)
            .fold(self.initial_lr, |lr, (_, m)| lr * m)
    }

    /// Seeded training/validation partition of `n` samples.
    pub fn split(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        idx.shuffle(&mut rng);
        if n < 2 {
            return (idx.clone(), idx);
        }
        let n_val = ((n as f64 * self.val_fraction).round() as usize).clamp(1, n - 1);
        let val = idx.split_off(n - n_val);
        (idx, val)
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean mini-batch loss of every epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_early: bool,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
}

fn gather(src: &[f64], width: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&src[i * width..(i + 1) * width]);
    }
    out
}

/// Trains a copy of `net` on row-major `inputs` and `targets`.
///
/// Normalization statistics are accumulated over the batches of the first
/// epoch and frozen afterwards. Training stops once the validation loss has
/// risen in `patience` consecutive epochs, or after `max_epochs`.
pub fn train(
    net: &Network,
    inputs: &[f64],
    targets: &[f64],
    opt: &OptimizerConfig,
    loss: Loss,
) -> Result<(Network, History)> {
    opt.validate()?;
    if !loss.compatible_with(&net.head()) {
        return Err(Error::Config(format!(
            "loss {loss:?} does not match head {:?}",
            net.head()
        )));
    }
    let in_w = net.input_size();
    let n_out = net.n_outputs();
    let t_w = loss.target_dim(n_out);
    if inputs.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    if inputs.len() % in_w != 0 || targets.len() != inputs.len() / in_w * t_w {
        return Err(Error::Validation(format!(
            "{} inputs of width {in_w} do not pair with {} targets of width {t_w}",
            inputs.len(),
            targets.len()
        )));
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::Validation(format!("target {i} is not finite")));
    }
    let n = inputs.len() / in_w;
    let (train_idx, val_idx) = opt.split(n);
    let val_x = gather(inputs, in_w, &val_idx);
    let val_y = gather(targets, t_w, &val_idx);

    let mut net = net.clone();
    let mut adam = Adam::new(net.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut order = train_idx.clone();
    let mut history = History {
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        ..History::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut rises = 0;

    for epoch in 1..=opt.max_epochs {
        let lr = opt.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(opt.batch_size) {
            let bx = gather(inputs, in_w, chunk);
            let by = gather(targets, t_w, chunk);
            let trace = net.forward_trace(&bx, epoch == 1)?;
            let out = trace.acts.last().expect("network has layers");
            let (l, d_out) = loss_and_grad(loss, out, &by, n_out).map_err(|e| {
                Error::NonFinite(format!("epoch {epoch}, batch {}: {e}", batches + 1))
            })?;
            let grad = net.param_gradient(&trace, &d_out);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "epoch {epoch}, batch {}: gradient",
                    batches + 1
                )));
            }
            adam.step(net.params_mut(), &grad, lr);
            sum += l;
            batches += 1;
        }
        history.train_loss.push(sum / batches as f64);

        let out = net.forward(&val_x)?;
        let (val, _) = loss_and_grad(loss, &out, &val_y, n_out)
            .map_err(|e| Error::NonFinite(format!("epoch {epoch}, validation: {e}")))?;
        if let Some(&prev) = history.val_loss.last() {
            rises = if val > prev { rises + 1 } else { 0 };
        }
        history.val_loss.push(val);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, net.params().to_vec()));
            history.best_epoch = epoch;
        }
        if rises >= opt.patience {
            history.stopped_early = true;
            break;
        }
    }
    if opt.restore_best {
        if let Some((_, params)) = best {
            net.params_mut().copy_from_slice(&params);
        }
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build, Activation, LayerSpec, OutputHead, Shape};
    use rand::Rng;

    fn cfg(batch_size: usize, max_epochs: usize) -> OptimizerConfig {
        OptimizerConfig {
            initial_lr: 0.01,
            schedule: vec![],
            batch_size,
            max_epochs,
            patience: 10,
            val_fraction: 0.2,
            seed: 5,
            restore_best: false,
        }
    }

    #[test]
    fn schedule_multiplies() {
        let mut c = cfg(1, 1);
        c.schedule = vec![(8, 0.5), (28, 0.5), (48, 0.5), (68, 0.5)];
        assert_eq!(c.lr_at(7), 0.01);
        assert_eq!(c.lr_at(8), 0.005);
        assert_eq!(c.lr_at(30), 0.0025);
        assert_eq!(c.lr_at(100), 0.000625);
        c.schedule = vec![(8, 0.5), (8, 0.5)];
        assert!(c.validate().is_err());
    }

    #[test]
    fn split_is_seeded() {
        let c = cfg(1, 1);
        let (a, b) = c.split(100);
        assert_eq!((a.len(), b.len()), (80, 20));
        assert_eq!(c.split(100), (a.clone(), b.clone()));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn first_adam_step_has_learning_rate_magnitude() {
        for g in [1e-3, 0.5, -7.0] {
            let mut p = [1.0];
            let mut adam = Adam::new(1);
            adam.step(&mut p, &[g], 0.01);
            assert!(((1.0 - p[0]).abs() - 0.01).abs() < 1e-6);
            assert_eq!((1.0 - p[0]).signum(), g.signum());
        }
    }

    fn linear_net(seed: u64) -> Network {
        build(
            &[LayerSpec::dense(1, Activation::Linear)],
            OutputHead::Point { outputs: 1 },
            Shape::features(1),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut net = linear_net(0);
        net.params_mut().fill(0.0);
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y = vec![0.0; 50];
        let (trained, _) = train(&net, &x, &y, &cfg(8, 20), Loss::Mse).unwrap();
        assert_eq!(trained.params(), net.params());
    }

    #[test]
    fn learns_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let mut c = cfg(32, 200);
        c.patience = 200;
        let (net, hist) = train(&linear_net(3), &x, &y, &c, Loss::Mse).unwrap();
        assert!(
            *hist.train_loss.last().unwrap() < 1e-4,
            "{:?}",
            hist.train_loss.last()
        );
        assert!((net.params()[0] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn full_batch_convex_loss_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.5 - 1.5 * v + rng.random_range(-0.1..0.1))
            .collect();
        let mut c = cfg(1000, 150);
        c.patience = 150;
        c.initial_lr = 0.005;
        let (_, hist) = train(&linear_net(9), &x, &y, &c, Loss::Mse).unwrap();
        for w in hist.train_loss.windows(2) {
            assert!(w[1] <= w[0], "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn empty_and_mismatched_data_are_rejected() {
        let net = linear_net(0);
        assert!(matches!(
            train(&net, &[], &[], &cfg(4, 1), Loss::Mse),
            Err(Error::InsufficientData(_))
        ));
        assert!(train(&net, &[1.0, 2.0], &[1.0], &cfg(4, 1), Loss::Mse).is_err());
        assert!(train(&net, &[1.0], &[1.0], &cfg(4, 1), Loss::CrpsTn).is_err());
    }

    #[test]
    fn early_stopping_and_best_restore() {
        // Memorizing noise: validation loss eventually rises.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..40 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let specs = [
            LayerSpec::dense(64, Activation::Relu),
            LayerSpec::dense(1, Activation::Linear),
        ];
        let net = build(
            &specs,
            OutputHead::Point { outputs: 1 },
            Shape::features(4),
            1,
        )
        .unwrap();
        let mut c = cfg(8, 2000);
        c.patience = 3;
        c.initial_lr = 0.02;
        let (last, hist) = train(&net, &x, &y, &c, Loss::Mse).unwrap();
        assert!(hist.stopped_early);
        let k = hist.val_loss.len();
        assert!(
            hist.val_loss[k - 3..].windows(2).all(|w| w[1] > w[0])
                && hist.val_loss[k - 3] > hist.val_loss[k - 4]
        );
        c.restore_best = true;
        let (best, hist2) = train(&net, &x, &y, &c, Loss::Mse).unwrap();
        assert_eq!(hist, hist2);
        assert_ne!(best.params(), last.params());
    }
}
