use serde::{Deserialize, Serialize};

use super::Supernet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::space::{sample_mask, ArchMask, SearchSpaceSpec};
use crate::tensor::{cosine_lr, sgd_step, softmax_cross_entropy, SgdConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Bernoulli probability of activating each path.
    pub p: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            p: 0.5,
        }
    }
}

/// Where the architecture of each training step comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskSource {
    /// A fresh Bernoulli-sampled mask per step.
    Bernoulli(f64),
    /// The same architecture every step (standalone training).
    Fixed(ArchMask),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    /// `histogram[k]` counts sampled layers with `k` active paths.
    pub histogram: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub step_losses: Vec<f64>,
}

/// Stateful SGD loop over one supernet.
pub struct Trainer {
    pub net: Supernet,
    cfg: TrainConfig,
    source: MaskSource,
    velocities: Vec<Vec<f32>>,
    shuffle_rng: Rng,
    mask_rng: Rng,
    step: usize,
    total_steps: usize,
    epoch: usize,
    pub log: TrainLog,
}

impl Trainer {
    /// `seed` feeds the shuffle and mask streams; the network is taken as is.
    pub fn new(
        mut net: Supernet,
        cfg: TrainConfig,
        source: MaskSource,
        train_len: usize,
        seed: u64,
    ) -> Result<Self> {
        if cfg.batch_size < 2 {
            return Err(Error::Parameter("batch_size must be >= 2".into()));
        }
        if cfg.lr <= 0.0 || !(0.0..1.0).contains(&cfg.momentum) || cfg.weight_decay < 0.0 {
            return Err(Error::Parameter(format!(
                "need lr > 0, momentum in [0, 1), weight_decay >= 0 (got {}, {}, {})",
                cfg.lr, cfg.momentum, cfg.weight_decay
            )));
        }
        match &source {
            MaskSource::Bernoulli(p) if !(*p > 0.0 && *p < 1.0) => {
                return Err(Error::Parameter(format!("p = {p} must lie in (0, 1)")));
            }
            MaskSource::Fixed(m) => m.validate(net.spec())?,
            _ => {}
        }
        let velocities = net.params_mut().iter().map(|t| vec![0.0; t.numel()]).collect();
        Ok(Self {
            net,
            total_steps: cfg.epochs * (train_len / cfg.batch_size),
            cfg,
            source,
            velocities,
            shuffle_rng: stream(seed, "train.shuffle"),
            mask_rng: stream(seed, "train.mask"),
            step: 0,
            epoch: 0,
            log: TrainLog::default(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn next_mask(&mut self) -> Result<ArchMask> {
        match &self.source {
            MaskSource::Bernoulli(p) => sample_mask(self.net.spec(), *p, &mut self.mask_rng),
            MaskSource::Fixed(m) => Ok(m.clone()),
        }
    }

    /// One SGD step on a batch; returns the loss.
    pub fn step(&mut self, mask: &ArchMask, x: &crate::tensor::Tensor, y: &[usize]) -> Result<f64> {
        let lr = cosine_lr(self.step.min(self.total_steps), self.total_steps.max(1), self.cfg.lr)?;
        let (logits, tape) = self.net.forward_train(mask, x)?;
        let (loss, grad) = softmax_cross_entropy(&logits, y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss at step {} (mask {mask}, lr {lr:.3e})",
                self.step
            )));
        }
        self.net.backward(tape, &grad)?;
        let sgd = SgdConfig {
            lr: lr.max(f64::MIN_POSITIVE),
            momentum: self.cfg.momentum,
            weight_decay: self.cfg.weight_decay,
        };
        for (t, v) in self.net.params_mut().into_iter().zip(&mut self.velocities) {
            if let Some(g) = t.take_grad() {
                sgd_step(t.data_mut(), &g, v, &sgd)?;
                t.check_finite("parameter update")?;
            }
        }
        self.step += 1;
        Ok(loss as f64)
    }

    /// One pass over `data` in shuffled full batches.
    pub fn train_epoch(&mut self, data: &Dataset) -> Result<&EpochLog> {
        let batches = data.shuffled_batches(self.cfg.batch_size, &mut self.shuffle_rng)?;
        let lr = cosine_lr(self.step.min(self.total_steps), self.total_steps.max(1), self.cfg.lr)?;
        let mut histogram = vec![0u64; self.net.spec().max_paths + 1];
        let mut sum = 0.0;
        for idx in &batches {
            let mask = self.next_mask()?;
            for &bits in mask.layers() {
                histogram[bits.count_ones() as usize] += 1;
            }
            let (x, y) = data.batch(idx)?;
            let loss = self.step(&mask, &x, &y)?;
            self.log.step_losses.push(loss);
            sum += loss;
        }
        self.log.epochs.push(EpochLog {
            epoch: self.epoch,
            mean_loss: sum / batches.len() as f64,
            lr,
            histogram,
        });
        self.epoch += 1;
        Ok(self.log.epochs.last().expect("just pushed"))
    }

    pub fn finish(self) -> (Supernet, TrainLog) {
        (self.net, self.log)
    }
}

/// Weight-sharing training: one Bernoulli-sampled submodel per batch.
pub fn train_supernet(
    spec: &SearchSpaceSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Supernet, TrainLog)> {
    if data.is_empty() {
        return Err(Error::Empty("training data".into()));
    }
    let net = Supernet::new(spec, &mut stream(seed, "supernet.init"))?;
    let mut trainer = Trainer::new(net, cfg.clone(), MaskSource::Bernoulli(cfg.p), data.len(), seed)?;
    for _ in 0..cfg.epochs {
        trainer.train_epoch(data)?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, SyntheticConfig};

    #[test]
    fn zero_epochs_leaves_weights() {
        let spec = SearchSpaceSpec::micro();
        let data = synthetic(&SyntheticConfig::micro(), 64, &mut stream(0, "d")).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (net, log) = train_supernet(&spec, &data, &cfg, 3).unwrap();
        let fresh = Supernet::new(&spec, &mut stream(3, "supernet.init")).unwrap();
        assert_eq!(net, fresh);
        assert!(log.epochs.is_empty() && log.step_losses.is_empty());
    }

    #[test]
    fn rejects_degenerate_p() {
        let spec = SearchSpaceSpec::micro();
        let net = Supernet::new(&spec, &mut stream(0, "i")).unwrap();
        for p in [0.0, 1.0] {
            assert!(Trainer::new(net.clone(), TrainConfig::default(), MaskSource::Bernoulli(p), 64, 0)
                .is_err());
        }
    }
}
