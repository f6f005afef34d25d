use super::Scalar;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One SGD step with momentum and L2 weight decay:
/// `v = momentum * v + (g + wd * w)`, then `w -= lr * v`.
pub fn sgd_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    cfg: &SgdConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(shape_err(
            "sgd_step",
            format!(
                "params {}, grads {}, velocity {}",
                params.len(),
                grads.len(),
                velocity.len()
            ),
        ));
    }
    if cfg.lr <= 0.0 || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::Parameter(format!(
            "sgd: need lr > 0 and momentum in [0, 1), got lr={} momentum={}",
            cfg.lr, cfg.momentum
        )));
    }
    let (lr, mom, wd) = (
        T::of(cfg.lr),
        T::of(cfg.momentum),
        T::of(cfg.weight_decay),
    );
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mom * *v + (g + wd * *w);
        *w -= lr * *v;
    }
    Ok(())
}

/// Cosine-annealed learning rate: `0.5 * lr0 * (1 + cos(pi * step / total))`.
pub fn cosine_lr(step: usize, total: usize, lr0: f64) -> Result<f64> {
    if step > total {
        return Err(Error::Parameter(format!("cosine_lr: step {step} > total {total}")));
    }
    if lr0 <= 0.0 {
        return Err(Error::Parameter("cosine_lr: lr0 must be positive".into()));
    }
    if total == 0 {
        return Ok(lr0);
    }
    let t = step as f64 / total as f64;
    Ok(0.5 * lr0 * (1.0 + (std::f64::consts::PI * t).cos()))
}
