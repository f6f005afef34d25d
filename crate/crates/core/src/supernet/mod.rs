//! Weight-sharing multi-path supernet with shadow batch normalization.
//!
//! A block computes
//!
//! ```text
//! e   = relu(bn(expand_1x1(x)))            (inverted bottleneck only)
//! o_j = relu(bn_j(path_j(e)))              for every active path j
//! q   = project_1x1(sum_j o_j)             (inverted bottleneck only)
//! out = sbn[key(mask)](q) (+ x if residual)
//! ```
//!
//! Every path owns one parameter set shared by all submodels that activate
//! it. The block's SBN bank holds one batch-norm state per key; the key is
//! chosen from the active subset (see [`sbn_index`]).

mod bank;
pub mod checkpoint;
mod train;

use rand_distr::{Distribution, Normal};

pub use bank::{bank_size, sbn_index, SbnBank, SbnKey};
pub use train::{
    train_supernet, EpochLog, MaskSource, TrainConfig, TrainLog, Trainer,
};

use crate::data::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;
use crate::space::{Aggregation, ArchMask, PathOp, SearchSpaceSpec};
use crate::tensor::{
    add, batchnorm_backward, batchnorm_eval, batchnorm_forward, conv2d, conv2d_backward,
    depthwise_conv2d, depthwise_conv2d_backward, global_avg_pool, global_avg_pool_backward,
    linear, linear_backward, relu, relu_backward, BnCache, BnMode, BnState, Tensor,
};

/// Index of the largest logit per row (first one on ties).
pub fn argmax_rows(logits: &Tensor) -> Result<Vec<usize>> {
    let (n, k) = logits.dims2("argmax_rows")?;
    Ok((0..n)
        .map(|i| {
            let row = &logits.data()[i * k..(i + 1) * k];
            (0..k).fold(0, |best, j| if row[j] > row[best] { j } else { best })
        })
        .collect())
}

/// Identifies one batch-norm state inside a supernet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BnSlot {
    Stem,
    Expand(usize),
    Path(usize, usize),
    Sbn(usize, SbnKey),
}

impl BnSlot {
    /// Checkpoint name prefix of this state.
    pub fn name(&self) -> String {
        match self {
            BnSlot::Stem => "stem.bn".into(),
            BnSlot::Expand(l) => format!("block{l}.expand.bn"),
            BnSlot::Path(l, j) => format!("block{l}.path{j}.bn"),
            BnSlot::Sbn(l, k) => format!("block{l}.sbn.{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBn {
    pub weight: Tensor,
    pub bn: BnState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathWeights {
    pub op: PathOp,
    pub kernel: usize,
    pub weight: Tensor,
    pub bn: BnState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub expand: Option<ConvBn>,
    pub paths: Vec<PathWeights>,
    pub project: Option<Tensor>,
    pub bank: SbnBank,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Supernet parameters: stem, blocks with their SBN banks, classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct Supernet {
    spec: SearchSpaceSpec,
    pub stem: ConvBn,
    pub blocks: Vec<Block>,
    pub head: Head,
}

fn kaiming(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| normal.sample(rng) as f32)
}

fn path_forward(p: &PathWeights, x: &Tensor) -> Result<Tensor> {
    let pad = p.kernel / 2;
    match p.op {
        PathOp::Depthwise => depthwise_conv2d(x, &p.weight, 1, pad),
        PathOp::Dense => conv2d(x, &p.weight, 1, pad),
    }
}

fn path_backward(p: &PathWeights, x: &Tensor, g: &Tensor) -> Result<(Tensor, Tensor)> {
    let pad = p.kernel / 2;
    match p.op {
        PathOp::Depthwise => depthwise_conv2d_backward(x, &p.weight, g, 1, pad),
        PathOp::Dense => conv2d_backward(x, &p.weight, g, 1, pad),
    }
}

fn accumulate_bn(bn: &mut BnState, dgamma: &[f32], dbeta: &[f32]) -> Result<()> {
    bn.gamma.accumulate_grad(dgamma)?;
    bn.beta.accumulate_grad(dbeta)
}

struct StemTape {
    input: Tensor,
    bn: BnCache<f32>,
    act: Tensor,
}

struct PathTape {
    index: usize,
    bn: BnCache<f32>,
    act: Tensor,
}

struct BlockTape {
    input: Tensor,
    expand: Option<(BnCache<f32>, Tensor)>,
    paths: Vec<PathTape>,
    sum: Tensor,
    key: SbnKey,
    sbn: BnCache<f32>,
}

struct HeadTape {
    feature_shape: Vec<usize>,
    pooled: Tensor,
}

/// Activations saved by [`Supernet::forward_train`]; consumed by
/// [`Supernet::backward`].
pub struct Tape {
    stem: StemTape,
    blocks: Vec<BlockTape>,
    head: HeadTape,
}

/// Intermediate features of one block under eval-mode statistics.
#[derive(Clone, Debug)]
pub struct BlockProbe {
    /// Projected path sum, the input of the block's SBN.
    pub pre_sbn: Tensor,
    /// Output of the block's SBN (before any residual add).
    pub post_sbn: Tensor,
}

impl Supernet {
    /// Fresh supernet with Kaiming-normal convolutions, `gamma = 1`, `beta = 0`.
    pub fn new(spec: &SearchSpaceSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let c = spec.stem_channels;
        let k = spec.stem_kernel;
        let stem = ConvBn {
            weight: kaiming(&[c, spec.image_channels, k, k], spec.image_channels * k * k, rng),
            bn: BnState::new(c),
        };
        let mut blocks = Vec::with_capacity(spec.num_layers());
        for (l, layer) in spec.layers.iter().enumerate() {
            let mid = spec.mid_channels(l);
            let expand = (spec.aggregation == Aggregation::SumProject).then(|| ConvBn {
                weight: kaiming(&[mid, c, 1, 1], c, rng),
                bn: BnState::new(mid),
            });
            let paths = layer
                .paths
                .iter()
                .map(|cand| {
                    let kk = cand.kernel * cand.kernel;
                    let weight = match cand.op {
                        PathOp::Depthwise => kaiming(&[mid, 1, cand.kernel, cand.kernel], kk, rng),
                        PathOp::Dense => {
                            kaiming(&[mid, mid, cand.kernel, cand.kernel], mid * kk, rng)
                        }
                    };
                    PathWeights {
                        op: cand.op,
                        kernel: cand.kernel,
                        weight,
                        bn: BnState::new(mid),
                    }
                })
                .collect();
            let project = (spec.aggregation == Aggregation::SumProject)
                .then(|| kaiming(&[c, mid, 1, 1], mid, rng));
            blocks.push(Block {
                expand,
                paths,
                project,
                bank: SbnBank::new(spec.sbn_mode, layer.paths.len(), spec.max_paths, c),
            });
        }
        let head = Head {
            weight: kaiming(&[spec.num_classes, c], c, rng),
            bias: Tensor::zeros(&[spec.num_classes]),
        };
        Ok(Self {
            spec: spec.clone(),
            stem,
            blocks,
            head,
        })
    }

    pub fn spec(&self) -> &SearchSpaceSpec {
        &self.spec
    }

    fn check_input(&self, mask: &ArchMask, x: &Tensor) -> Result<()> {
        mask.validate(&self.spec)?;
        let (_, c, h, w) = x.dims4("supernet")?;
        let s = self.spec.image_size;
        if c != self.spec.image_channels || h != s || w != s {
            return Err(shape_err(
                "supernet",
                format!(
                    "input {:?}, expected [N, {}, {s}, {s}]",
                    x.shape(),
                    self.spec.image_channels
                ),
            ));
        }
        Ok(())
    }

    /// Trainable tensors in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.push(&mut self.stem.weight);
        out.push(&mut self.stem.bn.gamma);
        out.push(&mut self.stem.bn.beta);
        for block in &mut self.blocks {
            if let Some(e) = &mut block.expand {
                out.push(&mut e.weight);
                out.push(&mut e.bn.gamma);
                out.push(&mut e.bn.beta);
            }
            for p in &mut block.paths {
                out.push(&mut p.weight);
                out.push(&mut p.bn.gamma);
                out.push(&mut p.bn.beta);
            }
            if let Some(w) = &mut block.project {
                out.push(w);
            }
            for (_, st) in block.bank.iter_mut() {
                out.push(&mut st.gamma);
                out.push(&mut st.beta);
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// Batch-norm states a forward pass under `mask` reads or updates.
    pub fn touched_bn_slots(&self, mask: &ArchMask) -> Result<Vec<BnSlot>> {
        mask.validate(&self.spec)?;
        let mut out = vec![BnSlot::Stem];
        for (l, block) in self.blocks.iter().enumerate() {
            if block.expand.is_some() {
                out.push(BnSlot::Expand(l));
            }
            out.extend(mask.active(l).map(|j| BnSlot::Path(l, j)));
            out.push(BnSlot::Sbn(l, block.bank.key_for(mask.layer(l))?));
        }
        Ok(out)
    }

    pub fn bn(&self, slot: BnSlot) -> Result<&BnState> {
        let missing = || Error::Mask(format!("no batch norm at {slot:?}"));
        match slot {
            BnSlot::Stem => Ok(&self.stem.bn),
            BnSlot::Expand(l) => self
                .blocks
                .get(l)
                .and_then(|b| b.expand.as_ref())
                .map(|e| &e.bn)
                .ok_or_else(missing),
            BnSlot::Path(l, j) => self
                .blocks
                .get(l)
                .and_then(|b| b.paths.get(j))
                .map(|p| &p.bn)
                .ok_or_else(missing),
            BnSlot::Sbn(l, k) => self.blocks.get(l).ok_or_else(missing)?.bank.get(k),
        }
    }

    pub fn bn_mut(&mut self, slot: BnSlot) -> Result<&mut BnState> {
        let missing = || Error::Mask(format!("no batch norm at {slot:?}"));
        match slot {
            BnSlot::Stem => Ok(&mut self.stem.bn),
            BnSlot::Expand(l) => self
                .blocks
                .get_mut(l)
                .and_then(|b| b.expand.as_mut())
                .map(|e| &mut e.bn)
                .ok_or_else(missing),
            BnSlot::Path(l, j) => self
                .blocks
                .get_mut(l)
                .and_then(|b| b.paths.get_mut(j))
                .map(|p| &mut p.bn)
                .ok_or_else(missing),
            BnSlot::Sbn(l, k) => self.blocks.get_mut(l).ok_or_else(missing)?.bank.get_mut(k),
        }
    }

    /// Train-mode forward of the submodel selected by `mask`; updates the
    /// running statistics of every batch norm it touches.
    pub fn forward_train(&mut self, mask: &ArchMask, x: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(mask, x)?;
        let pad = self.spec.stem_kernel / 2;
        let z = conv2d(x, &self.stem.weight, 1, pad)?;
        let (z, bn) = batchnorm_forward(&z, &mut self.stem.bn, BnMode::Train)?;
        let act = relu(&z);
        let stem = StemTape {
            input: x.clone(),
            bn,
            act: act.clone(),
        };
        let residual = self.spec.residual;
        let mut h = act;
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for (l, block) in self.blocks.iter_mut().enumerate() {
            let bits = mask.layer(l);
            let (e, expand) = match &mut block.expand {
                Some(ex) => {
                    let z = conv2d(&h, &ex.weight, 1, 0)?;
                    let (z, cache) = batchnorm_forward(&z, &mut ex.bn, BnMode::Train)?;
                    let a = relu(&z);
                    (a.clone(), Some((cache, a)))
                }
                None => (h.clone(), None),
            };
            let mut sum: Option<Tensor> = None;
            let mut paths = Vec::new();
            for j in mask.active(l) {
                let p = &mut block.paths[j];
                let z = path_forward(p, &e)?;
                let (z, cache) = batchnorm_forward(&z, &mut p.bn, BnMode::Train)?;
                let a = relu(&z);
                sum = Some(match sum {
                    None => a.clone(),
                    Some(s) => add(&s, &a)?,
                });
                paths.push(PathTape {
                    index: j,
                    bn: cache,
                    act: a,
                });
            }
            let sum = sum.ok_or_else(|| Error::Mask(format!("layer {l} has no active path")))?;
            let q = match &block.project {
                Some(w) => conv2d(&sum, w, 1, 0)?,
                None => sum.clone(),
            };
            let key = block.bank.key_for(bits)?;
            let (out, sbn) = batchnorm_forward(&q, block.bank.get_mut(key)?, BnMode::Train)?;
            let out = if residual { add(&out, &h)? } else { out };
            tapes.push(BlockTape {
                input: h,
                expand,
                paths,
                sum,
                key,
                sbn,
            });
            h = out;
        }
        let pooled = global_avg_pool(&h)?;
        let logits = linear(&pooled, &self.head.weight, &self.head.bias)?;
        let tape = Tape {
            stem,
            blocks: tapes,
            head: HeadTape {
                feature_shape: h.shape().to_vec(),
                pooled,
            },
        };
        Ok((logits, tape))
    }

    /// Accumulates parameter gradients of the submodel recorded in `tape`.
    /// Only parameters the submodel used receive a gradient buffer.
    pub fn backward(&mut self, tape: Tape, grad_logits: &Tensor) -> Result<()> {
        let (g_pooled, gw, gb) =
            linear_backward(&tape.head.pooled, &self.head.weight, grad_logits)?;
        self.head.weight.accumulate_grad(gw.data())?;
        self.head.bias.accumulate_grad(gb.data())?;
        let mut g = global_avg_pool_backward(&tape.head.feature_shape, &g_pooled)?;
        let residual = self.spec.residual;
        for (block, bt) in self.blocks.iter_mut().zip(tape.blocks).rev() {
            let sbn = block.bank.get_mut(bt.key)?;
            let (g_q, dgam, dbet) = batchnorm_backward(bt.sbn, &sbn.gamma, &g)?;
            accumulate_bn(sbn, &dgam, &dbet)?;
            let g_sum = match &mut block.project {
                Some(w) => {
                    let (g_sum, g_w) = conv2d_backward(&bt.sum, w, &g_q, 1, 0)?;
                    w.accumulate_grad(g_w.data())?;
                    g_sum
                }
                None => g_q,
            };
            let e = match &bt.expand {
                Some((_, a)) => a,
                None => &bt.input,
            };
            let mut g_e: Option<Tensor> = None;
            for pt in bt.paths {
                let p = &mut block.paths[pt.index];
                let g_z = relu_backward(&pt.act, &g_sum)?;
                let (g_z, dgam, dbet) = batchnorm_backward(pt.bn, &p.bn.gamma, &g_z)?;
                accumulate_bn(&mut p.bn, &dgam, &dbet)?;
                let (g_in, g_w) = path_backward(p, e, &g_z)?;
                p.weight.accumulate_grad(g_w.data())?;
                g_e = Some(match g_e {
                    None => g_in,
                    Some(acc) => add(&acc, &g_in)?,
                });
            }
            let g_e = g_e.ok_or_else(|| Error::Mask("block tape without paths".into()))?;
            let g_in = match (&mut block.expand, bt.expand) {
                (Some(ex), Some((cache, a))) => {
                    let g_z = relu_backward(&a, &g_e)?;
                    let (g_z, dgam, dbet) = batchnorm_backward(cache, &ex.bn.gamma, &g_z)?;
                    accumulate_bn(&mut ex.bn, &dgam, &dbet)?;
                    let (g_x, g_w) = conv2d_backward(&bt.input, &ex.weight, &g_z, 1, 0)?;
                    ex.weight.accumulate_grad(g_w.data())?;
                    g_x
                }
                _ => g_e,
            };
            g = if residual { add(&g_in, &g)? } else { g_in };
        }
        let g_z = relu_backward(&tape.stem.act, &g)?;
        let (g_z, dgam, dbet) = batchnorm_backward(tape.stem.bn, &self.stem.bn.gamma, &g_z)?;
        accumulate_bn(&mut self.stem.bn, &dgam, &dbet)?;
        let pad = self.spec.stem_kernel / 2;
        let (_, g_w) = conv2d_backward(&tape.stem.input, &self.stem.weight, &g_z, 1, pad)?;
        self.stem.weight.accumulate_grad(g_w.data())?;
        Ok(())
    }

    fn stem_eval(&self, x: &Tensor) -> Result<Tensor> {
        let z = conv2d(x, &self.stem.weight, 1, self.spec.stem_kernel / 2)?;
        Ok(relu(&batchnorm_eval(&z, &self.stem.bn)?))
    }

    fn block_eval(&self, l: usize, bits: u32, h: &Tensor) -> Result<(BlockProbe, Tensor)> {
        let block = &self.blocks[l];
        let e = match &block.expand {
            Some(ex) => relu(&batchnorm_eval(&conv2d(h, &ex.weight, 1, 0)?, &ex.bn)?),
            None => h.clone(),
        };
        let mut sum: Option<Tensor> = None;
        for j in (0..block.paths.len()).filter(|j| bits >> j & 1 == 1) {
            let p = &block.paths[j];
            let a = relu(&batchnorm_eval(&path_forward(p, &e)?, &p.bn)?);
            sum = Some(match sum {
                None => a,
                Some(s) => add(&s, &a)?,
            });
        }
        let sum = sum.ok_or_else(|| Error::Mask(format!("layer {l} has no active path")))?;
        let pre_sbn = match &block.project {
            Some(w) => conv2d(&sum, w, 1, 0)?,
            None => sum,
        };
        let post_sbn = batchnorm_eval(&pre_sbn, block.bank.get(block.bank.key_for(bits)?)?)?;
        let out = if self.spec.residual {
            add(&post_sbn, h)?
        } else {
            post_sbn.clone()
        };
        Ok((BlockProbe { pre_sbn, post_sbn }, out))
    }

    /// Eval-mode logits of the submodel selected by `mask`, using running
    /// statistics everywhere. Reads `self` only.
    pub fn forward_eval(&self, mask: &ArchMask, x: &Tensor) -> Result<Tensor> {
        self.check_input(mask, x)?;
        let mut h = self.stem_eval(x)?;
        for l in 0..self.blocks.len() {
            h = self.block_eval(l, mask.layer(l), &h)?.1;
        }
        let logits = linear(&global_avg_pool(&h)?, &self.head.weight, &self.head.bias)?;
        logits.check_finite("forward_eval")?;
        Ok(logits)
    }

    /// Eval-mode features at `block` with the layers before it following
    /// `base` and the block itself running the paths in `bits`.
    pub fn probe_block(
        &self,
        base: &ArchMask,
        block: usize,
        bits: u32,
        x: &Tensor,
    ) -> Result<BlockProbe> {
        self.check_input(base, x)?;
        if block >= self.blocks.len() {
            return Err(Error::Parameter(format!(
                "block {block} out of range ({} blocks)",
                self.blocks.len()
            )));
        }
        let mut probe_mask = base.clone();
        probe_mask.0[block] = bits;
        probe_mask.validate(&self.spec)?;
        let mut h = self.stem_eval(x)?;
        for l in 0..block {
            h = self.block_eval(l, base.layer(l), &h)?.1;
        }
        Ok(self.block_eval(block, bits, &h)?.0)
    }

    /// Top-1 accuracy of the submodel on `data` (eval mode, batches of 256).
    pub fn accuracy(&self, mask: &ArchMask, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("evaluation set".into()));
        }
        let mut correct = 0usize;
        for (x, y) in data.sequential_batches(256)? {
            let logits = self.forward_eval(mask, &x)?;
            correct += argmax_rows(&logits)?
                .iter()
                .zip(&y)
                .filter(|(p, t)| p == t)
                .count();
        }
        Ok(correct as f64 / data.len() as f64)
    }

    /// Parameters of the standalone network induced by `mask` (one batch norm
    /// per block after the projection).
    pub fn submodel_param_count(&self, mask: &ArchMask) -> Result<u64> {
        mask.validate(&self.spec)?;
        crate::cost::arch_cost(&self.spec, mask).map(|c| c.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::space::{CandidatePath, LayerSpec, SbnMode};

    fn tiny(mode: SbnMode) -> SearchSpaceSpec {
        SearchSpaceSpec {
            image_channels: 2,
            image_size: 5,
            stem_channels: 3,
            stem_kernel: 3,
            layers: vec![
                LayerSpec {
                    expansion: 2,
                    paths: [1, 3, 5].map(CandidatePath::depthwise).to_vec(),
                };
                2
            ],
            max_paths: 2,
            aggregation: Aggregation::SumProject,
            sbn_mode: mode,
            residual: true,
            num_classes: 3,
        }
    }

    fn batch(n: usize) -> Tensor {
        Tensor::from_fn(&[n, 2, 5, 5], |i| ((i * 37 % 23) as f32 - 11.0) / 7.0)
    }

    #[test]
    fn weight_sharing_untouched_paths_get_no_grad() {
        let spec = tiny(SbnMode::Linear);
        let mut net = Supernet::new(&spec, &mut stream(1, "init")).unwrap();
        let mask = ArchMask(vec![0b001, 0b110]);
        let (logits, tape) = net.forward_train(&mask, &batch(4)).unwrap();
        let g = Tensor::full(logits.shape(), 0.1);
        net.backward(tape, &g).unwrap();
        assert!(net.blocks[0].paths[0].weight.grad().is_some());
        assert!(net.blocks[0].paths[1].weight.grad().is_none());
        assert!(net.blocks[0].paths[2].weight.grad().is_none());
        assert!(net.blocks[1].paths[0].weight.grad().is_none());
        assert!(net.blocks[1].paths[1].weight.grad().is_some());
        assert!(net.blocks[0].bank.get(SbnKey(1)).unwrap().gamma.grad().is_some());
        assert!(net.blocks[0].bank.get(SbnKey(2)).unwrap().gamma.grad().is_none());
        assert!(net.blocks[1].bank.get(SbnKey(2)).unwrap().gamma.grad().is_some());
    }

    #[test]
    fn sbn_isolation_one_state_per_block_updated() {
        let spec = tiny(SbnMode::Exponential);
        let mut net = Supernet::new(&spec, &mut stream(2, "init")).unwrap();
        let before = net.clone();
        let mask = ArchMask(vec![0b011, 0b100]);
        net.forward_train(&mask, &batch(4)).unwrap();
        for l in 0..2 {
            let key = net.blocks[l].bank.key_for(mask.layer(l)).unwrap();
            let changed: Vec<SbnKey> = net.blocks[l]
                .bank
                .iter()
                .filter(|(k, st)| before.blocks[l].bank.get(*k).unwrap() != *st)
                .map(|(k, _)| k)
                .collect();
            assert_eq!(changed, vec![key]);
        }
    }

    #[test]
    fn eval_forward_is_deterministic_and_shaped() {
        let spec = tiny(SbnMode::Linear);
        let net = Supernet::new(&spec, &mut stream(3, "init")).unwrap();
        let mask = ArchMask(vec![0b101, 0b010]);
        let a = net.forward_eval(&mask, &batch(1)).unwrap();
        let b = net.forward_eval(&mask, &batch(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[1, 3]);
    }

    #[test]
    fn rejects_bad_mask_and_input() {
        let spec = tiny(SbnMode::Linear);
        let net = Supernet::new(&spec, &mut stream(3, "init")).unwrap();
        assert!(matches!(
            net.forward_eval(&ArchMask(vec![0b111, 1]), &batch(2)),
            Err(Error::Mask(_))
        ));
        assert!(net.forward_eval(&ArchMask(vec![1]), &batch(2)).is_err());
        let wrong = Tensor::zeros(&[1, 3, 5, 5]);
        assert!(net.forward_eval(&ArchMask(vec![1, 1]), &wrong).is_err());
    }

    #[test]
    fn identical_paths_double_the_pre_sbn_sum() {
        let mut spec = tiny(SbnMode::Linear);
        for l in &mut spec.layers {
            l.paths = vec![CandidatePath::depthwise(3); 3];
        }
        let mut net = Supernet::new(&spec, &mut stream(4, "init")).unwrap();
        for b in &mut net.blocks {
            let first = b.paths[0].clone();
            b.paths.iter_mut().for_each(|p| *p = first.clone());
        }
        let base = ArchMask(vec![1, 1]);
        let x = batch(3);
        let one = net.probe_block(&base, 1, 0b001, &x).unwrap();
        let two = net.probe_block(&base, 1, 0b110, &x).unwrap();
        for (a, b) in one.pre_sbn.data().iter().zip(two.pre_sbn.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
