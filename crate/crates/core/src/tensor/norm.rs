use super::{Scalar, Tensor};
use crate::error::{shape_err, Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel batch-norm parameters and running statistics.
///
/// Running variance is the biased (population) variance of the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BnState<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    pub momentum: T,
}

impl<T: Scalar> BnState<T> {
    /// `gamma = 1`, `beta = 0`, running mean 0 and variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: T::of(BN_EPS),
            momentum: T::of(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn reset_running_stats(&mut self) {
        self.running_mean.iter_mut().for_each(|v| *v = T::zero());
        self.running_var.iter_mut().for_each(|v| *v = T::one());
    }
}

/// Values saved by [`batchnorm_forward`] for the backward pass.
#[derive(Debug)]
pub struct BnCache<T> {
    shape: Vec<usize>,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    mode: BnMode,
}

fn check_channels<T: Scalar>(input: &Tensor<T>, state: &BnState<T>) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = input.dims4("batchnorm")?;
    if c != state.channels() || state.gamma.numel() != c || state.beta.numel() != c {
        return Err(shape_err(
            "batchnorm",
            format!("input has {c} channels, state has {}", state.channels()),
        ));
    }
    Ok((n, c, h * w))
}

/// Per-channel `(mean, biased variance)` over N, H and W.
pub(crate) fn channel_moments<T: Scalar>(input: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
    let (n, c, h, w) = input.dims4("channel_moments")?;
    let plane = h * w;
    let count = T::of((n * plane) as f64);
    let x = input.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for b in 0..n {
            s += x[(b * c + ch) * plane..(b * c + ch + 1) * plane].iter().copied().sum::<T>();
        }
        let m = s / count;
        let mut v = T::zero();
        for b in 0..n {
            for &xv in &x[(b * c + ch) * plane..(b * c + ch + 1) * plane] {
                let d = xv - m;
                v += d * d;
            }
        }
        mean[ch] = m;
        var[ch] = v / count;
    }
    Ok((mean, var))
}

fn normalize<T: Scalar>(
    input: &Tensor<T>,
    state: &BnState<T>,
    mean: &[T],
    var: &[T],
    mode: BnMode,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let (n, c, plane) = check_channels(input, state)?;
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + state.eps).sqrt()).collect();
    let x = input.data();
    let (gamma, beta) = (state.gamma.data(), state.beta.data());
    let mut x_hat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            for ((xh, o), &xv) in x_hat[r.clone()].iter_mut().zip(&mut out[r.clone()]).zip(&x[r]) {
                *xh = (xv - mean[ch]) * inv_std[ch];
                *o = gamma[ch] * *xh + beta[ch];
            }
        }
    }
    let out = Tensor::new(input.shape().to_vec(), out)?;
    out.check_finite("batchnorm")?;
    Ok((
        out,
        BnCache {
            shape: input.shape().to_vec(),
            x_hat,
            inv_std,
            mode,
        },
    ))
}

/// Batch normalization over NCHW input.
///
/// Train mode normalizes with batch statistics and folds them into the
/// running statistics with `running = (1 - momentum) * running + momentum * batch`.
/// Eval mode normalizes with the running statistics and leaves `state` alone.
pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    state: &mut BnState<T>,
    mode: BnMode,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let (n, _, _) = check_channels(input, state)?;
    match mode {
        BnMode::Train => {
            if n < 2 {
                return Err(Error::Parameter(
                    "batchnorm: train mode needs a batch of at least 2".into(),
                ));
            }
            let (mean, var) = channel_moments(input)?;
            let res = normalize(input, state, &mean, &var, mode)?;
            let mom = state.momentum;
            for (r, &m) in state.running_mean.iter_mut().zip(&mean) {
                *r = (T::one() - mom) * *r + mom * m;
            }
            for (r, &v) in state.running_var.iter_mut().zip(&var) {
                *r = (T::one() - mom) * *r + mom * v;
            }
            Ok(res)
        }
        BnMode::Eval => {
            normalize(input, state, &state.running_mean, &state.running_var, mode)
        }
    }
}

/// Eval-mode forward that only reads `state`.
pub fn batchnorm_eval<T: Scalar>(input: &Tensor<T>, state: &BnState<T>) -> Result<Tensor<T>> {
    normalize(input, state, &state.running_mean, &state.running_var, BnMode::Eval).map(|r| r.0)
}

/// Gradients `(input, gamma, beta)` of a batch-norm forward.
pub fn batchnorm_backward<T: Scalar>(
    cache: BnCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(shape_err(
            "batchnorm_backward",
            format!("grad_out {:?} vs {:?}", grad_out.shape(), cache.shape),
        ));
    }
    let (n, c, plane) = (cache.shape[0], cache.shape[1], cache.shape[2] * cache.shape[3]);
    let g = grad_out.data();
    let gam = gamma.data();
    let count = T::of((n * plane) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            for (&gv, &xh) in g[r.clone()].iter().zip(&cache.x_hat[r]) {
                dbeta[ch] += gv;
                dgamma[ch] += gv * xh;
            }
        }
    }
    let mut gin = vec![T::zero(); g.len()];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            let scale = gam[ch] * cache.inv_std[ch];
            match cache.mode {
                BnMode::Train => {
                    for ((gi, &gv), &xh) in gin[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&cache.x_hat[r]) {
                        *gi = scale / count * (count * gv - dbeta[ch] - xh * dgamma[ch]);
                    }
                }
                BnMode::Eval => {
                    for (gi, &gv) in gin[r.clone()].iter_mut().zip(&g[r]) {
                        *gi = scale * gv;
                    }
                }
            }
        }
    }
    Ok((Tensor::new(cache.shape, gin)?, dgamma, dbeta))
}
