//! Evaluating the supernet as a predictor of standalone accuracy: batch-norm
//! calibration, one-shot accuracy, rank correlation and the statistics
//! probes used to study shadow batch normalization.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::oracle::BenchTable;
use crate::rng::stream;
use crate::space::{layer_choices, sample_mask, ArchMask, SbnMode, SearchSpaceSpec};
use crate::supernet::{BnSlot, MaskSource, Supernet, TrainConfig, Trainer};
use crate::tensor::{BnState, Tensor};

/// Recomputes the running statistics of every batch norm the submodel
/// touches as the plain average over `batches`, starting from scratch.
/// Works on a copy; returns the recalibrated states.
pub fn calibrate_bn(
    net: &Supernet,
    mask: &ArchMask,
    batches: &[Tensor],
) -> Result<Vec<(BnSlot, BnState)>> {
    if batches.is_empty() {
        return Err(Error::Empty("calibration stream".into()));
    }
    let slots = net.touched_bn_slots(mask)?;
    let mut work = net.clone();
    for &s in &slots {
        work.bn_mut(s)?.reset_running_stats();
    }
    for (t, x) in batches.iter().enumerate() {
        // momentum 1/t turns the moving average into a cumulative mean
        let mom = 1.0 / (t + 1) as f32;
        for &s in &slots {
            work.bn_mut(s)?.momentum = mom;
        }
        work.forward_train(mask, x)?;
    }
    slots
        .into_iter()
        .map(|s| {
            let mut st = work.bn(s)?.clone();
            st.momentum = net.bn(s)?.momentum;
            Ok((s, st))
        })
        .collect()
}

/// A copy of `net` with `states` swapped in.
pub fn with_states(net: &Supernet, states: Vec<(BnSlot, BnState)>) -> Result<Supernet> {
    let mut out = net.clone();
    for (s, st) in states {
        *out.bn_mut(s)? = st;
    }
    Ok(out)
}

/// Top-1 accuracy of the submodel with inherited weights, optionally after
/// calibrating its batch norms on `calibration`.
pub fn evaluate_oneshot(
    net: &Supernet,
    mask: &ArchMask,
    eval_set: &Dataset,
    calibration: Option<&[Tensor]>,
) -> Result<f64> {
    match calibration {
        Some(b) => with_states(net, calibrate_bn(net, mask, b)?)?.accuracy(mask, eval_set),
        None => net.accuracy(mask, eval_set),
    }
}

/// Kendall's tau-b in O(n log n).
///
/// Pairs tied in either list count as neither concordant nor discordant and
/// the normalizer removes them from the respective pair count.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::Parameter(format!(
            "kendall_tau: lengths {n} and {} differ",
            b.len()
        )));
    }
    if n < 2 {
        return Err(Error::Parameter("kendall_tau needs at least 2 items".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kendall_tau input".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    let ties = |sorted: &[f64]| -> i64 {
        let mut total = 0i64;
        let mut run = 1i64;
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let sa: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
    let ta = ties(&sa);
    // pairs tied in both
    let mut tab = 0i64;
    let mut run = 1i64;
    for w in idx.windows(2) {
        if a[w[0]] == a[w[1]] && b[w[0]] == b[w[1]] {
            run += 1;
        } else {
            tab += run * (run - 1) / 2;
            run = 1;
        }
    }
    tab += run * (run - 1) / 2;
    let mut sb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let swaps = merge_count(&mut sb);
    let tb = ties(&sb);
    let p = (n as i64) * (n as i64 - 1) / 2;
    let num = p - ta - tb + tab - 2 * swaps;
    let den = ((p - ta) as f64) * ((p - tb) as f64);
    if den == 0.0 {
        return Err(Error::Undefined(
            "kendall_tau: one list is constant, tau-b is undefined".into(),
        ));
    }
    Ok((num as f64 / den.sqrt()).clamp(-1.0, 1.0))
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as i64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedModel {
    pub mask: ArchMask,
    pub oneshot: f64,
    pub ground_truth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankingReport {
    pub sbn_mode: SbnMode,
    pub calibrated: bool,
    pub seed: u64,
    pub tau: f64,
    pub models: Vec<RankedModel>,
}

impl RankingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,mask,sbn_mode,calibrated,seed,oneshot_acc,ground_truth_acc\n");
        for (i, m) in self.models.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{}",
                mask_field(&m.mask),
                self.sbn_mode.as_str(),
                self.calibrated,
                self.seed,
                m.oneshot,
                m.ground_truth
            );
        }
        s
    }
}

/// Masks as `a-b-c` so they fit one CSV field.
pub fn mask_field(m: &ArchMask) -> String {
    m.layers()
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join("-")
}

/// Evaluation inputs shared by every ranked model.
pub struct EvalData<'a> {
    /// Split the one-shot accuracy is measured on.
    pub eval_set: &'a Dataset,
    /// Batches streamed through the submodel when calibrating.
    pub calibration: &'a [Tensor],
}

/// Draws `sample_count` architectures from the oracle, scores them with the
/// supernet and correlates the two rankings. Models are evaluated in
/// parallel and merged in sample order.
pub fn ranking_experiment(
    net: &Supernet,
    oracle: &BenchTable,
    sample_count: usize,
    calibrate: bool,
    data: &EvalData,
    seed: u64,
) -> Result<RankingReport> {
    if sample_count > oracle.len() {
        return Err(Error::OracleTooSmall {
            requested: sample_count,
            available: oracle.len(),
        });
    }
    if sample_count < 2 {
        return Err(Error::Parameter("sample_count must be >= 2".into()));
    }
    let mut rng = stream(seed, "rank.sample");
    let mut picks = sample(&mut rng, oracle.len(), sample_count).into_vec();
    picks.sort_unstable();
    let calib = calibrate.then_some(data.calibration);
    let models = picks
        .par_iter()
        .map(|&i| {
            let r = &oracle.records[i];
            Ok(RankedModel {
                mask: r.mask.clone(),
                oneshot: evaluate_oneshot(net, &r.mask, data.eval_set, calib)?,
                ground_truth: r.acc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let a: Vec<f64> = models.iter().map(|m| m.oneshot).collect();
    let b: Vec<f64> = models.iter().map(|m| m.ground_truth).collect();
    Ok(RankingReport {
        sbn_mode: net.spec().sbn_mode,
        calibrated: calibrate,
        seed,
        tau: kendall_tau(&a, &b)?,
        models,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbePoint {
    pub epoch: usize,
    pub mean: f64,
    /// Population variance of the probed accuracies.
    pub variance: f64,
    pub accuracies: Vec<f64>,
}

pub fn probe_series_csv(series: &[ProbePoint]) -> String {
    let mut s = String::from("epoch,mean_acc,variance\n");
    for p in series {
        let _ = writeln!(s, "{},{},{}", p.epoch, p.mean, p.variance);
    }
    s
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Trains a supernet while scoring a fixed random set of `probe_models`
/// architectures on `held_out` at epoch 0 and every `probe_every` epochs.
/// The probe set depends only on `seed` and the space, so runs that differ
/// only in the SBN mode are paired.
pub fn stability_probe(
    spec: &SearchSpaceSpec,
    train: &Dataset,
    held_out: &Dataset,
    cfg: &TrainConfig,
    probe_every: usize,
    probe_models: usize,
    seed: u64,
) -> Result<(Supernet, Vec<ProbePoint>)> {
    if probe_models < 2 {
        return Err(Error::Parameter("probe_models must be >= 2".into()));
    }
    if probe_every == 0 {
        return Err(Error::Parameter("probe_every must be >= 1".into()));
    }
    let mut mrng = stream(seed, "probe.masks");
    let masks = (0..probe_models)
        .map(|_| sample_mask(spec, cfg.p, &mut mrng))
        .collect::<Result<Vec<_>>>()?;
    let net = Supernet::new(spec, &mut stream(seed, "supernet.init"))?;
    let mut trainer = Trainer::new(net, cfg.clone(), MaskSource::Bernoulli(cfg.p), train.len(), seed)?;
    let probe = |net: &Supernet, epoch: usize| -> Result<ProbePoint> {
        let accuracies = masks
            .par_iter()
            .map(|m| net.accuracy(m, held_out))
            .collect::<Result<Vec<_>>>()?;
        let (mean, variance) = mean_var(&accuracies);
        Ok(ProbePoint {
            epoch,
            mean,
            variance,
            accuracies,
        })
    };
    let mut series = vec![probe(&trainer.net, 0)?];
    for e in 1..=cfg.epochs {
        trainer.train_epoch(train)?;
        if e % probe_every == 0 {
            series.push(probe(&trainer.net, e)?);
        }
    }
    Ok((trainer.finish().0, series))
}

/// Ratio of two stat vectors elementwise; `None` where the denominator is
/// too small to be meaningful.
fn ratio(num: &[f32], den: &[f32]) -> Vec<Option<f64>> {
    num.iter()
        .zip(den)
        .map(|(&a, &b)| (b.abs() as f64 > RATIO_EPS).then(|| a as f64 / b as f64))
        .collect()
}

const RATIO_EPS: f64 = 1e-8;

/// Median over the defined entries.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl StateStats {
    fn of(st: &BnState) -> Self {
        Self {
            mean: st.running_mean.clone(),
            var: st.running_var.clone(),
            gamma: st.gamma.data().to_vec(),
            beta: st.beta.data().to_vec(),
        }
    }

    /// Elementwise average of several states.
    fn average(states: &[&BnState]) -> Self {
        let n = states.len() as f32;
        let avg = |f: &dyn Fn(&BnState) -> Vec<f32>| -> Vec<f32> {
            let mut acc = vec![0.0f32; states[0].channels()];
            for st in states {
                for (a, v) in acc.iter_mut().zip(f(st)) {
                    *a += v / n;
                }
            }
            acc
        };
        Self {
            mean: avg(&|s| s.running_mean.clone()),
            var: avg(&|s| s.running_var.clone()),
            gamma: avg(&|s| s.gamma.data().to_vec()),
            beta: avg(&|s| s.beta.data().to_vec()),
        }
    }
}

/// Per-channel `SBN_1 / SBN_k` ratios of one block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioSet {
    pub k: usize,
    pub mean: Vec<Option<f64>>,
    pub var: Vec<Option<f64>>,
    pub gamma: Vec<Option<f64>>,
    pub beta: Vec<Option<f64>>,
}

impl RatioSet {
    /// Medians of the (mean, var, gamma, beta) ratios.
    pub fn medians(&self) -> [Option<f64>; 4] {
        [
            median(&self.mean),
            median(&self.var),
            median(&self.gamma),
            median(&self.beta),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockSbnStats {
    pub block: usize,
    /// Raw entries keyed by bank key.
    pub states: BTreeMap<u32, StateStats>,
    /// Statistics per active-path count; exponential banks average the
    /// entries of equal cardinality.
    pub by_cardinality: BTreeMap<usize, StateStats>,
    pub ratios: Vec<RatioSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SbnStatsDump {
    pub sbn_mode: SbnMode,
    pub blocks: Vec<BlockSbnStats>,
}

impl SbnStatsDump {
    /// One row per (block, k, parameter) with the median ratio.
    pub fn ratios_csv(&self) -> String {
        let mut s = String::from("block,k,parameter,median_ratio,defined_channels\n");
        for b in &self.blocks {
            for r in &b.ratios {
                for (name, v) in [("mean", &r.mean), ("var", &r.var), ("gamma", &r.gamma), ("beta", &r.beta)] {
                    let med = median(v).map(|m| m.to_string()).unwrap_or_default();
                    let defined = v.iter().flatten().count();
                    let _ = writeln!(s, "{},{},{name},{med},{defined}", b.block, r.k);
                }
            }
        }
        s
    }
}

pub fn sbn_stats(net: &Supernet) -> Result<SbnStatsDump> {
    let mode = net.spec().sbn_mode;
    if mode == SbnMode::Vanilla {
        return Err(Error::Parameter(
            "sbn_stats needs a linear or exponential bank".into(),
        ));
    }
    let m = net.spec().max_paths;
    let mut blocks = Vec::new();
    for (l, block) in net.blocks.iter().enumerate() {
        let states = block.bank.iter().map(|(k, st)| (k.0, StateStats::of(st))).collect();
        let mut by_cardinality = BTreeMap::new();
        for k in 1..=m {
            let members: Vec<&BnState> = block
                .bank
                .iter()
                .filter(|(key, _)| match mode {
                    SbnMode::Linear => key.0 as usize == k,
                    _ => key.0.count_ones() as usize == k,
                })
                .map(|(_, st)| st)
                .collect();
            by_cardinality.insert(k, StateStats::average(&members));
        }
        let one = &by_cardinality[&1];
        let ratios = (2..=m)
            .map(|k| {
                let other = &by_cardinality[&k];
                RatioSet {
                    k,
                    mean: ratio(&one.mean, &other.mean),
                    var: ratio(&one.var, &other.var),
                    gamma: ratio(&one.gamma, &other.gamma),
                    beta: ratio(&one.beta, &other.beta),
                }
            })
            .collect();
        blocks.push(BlockSbnStats {
            block: l,
            states,
            by_cardinality,
            ratios,
        });
    }
    Ok(SbnStatsDump {
        sbn_mode: mode,
        blocks,
    })
}

/// Cosine similarity; `None` if either vector has zero length.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    pub block: usize,
    /// Active-path subset behind each row.
    pub subsets: Vec<u32>,
    /// `None` marks a pair involving a zero-magnitude feature.
    pub cosine: Vec<Vec<Option<f64>>>,
    /// Feature norms before the block's SBN.
    pub pre_magnitude: Vec<f64>,
    /// Feature norms after the block's SBN.
    pub post_magnitude: Vec<f64>,
    /// Rows whose feature vector is zero.
    pub undefined_rows: Vec<usize>,
}

impl SimilarityMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("subset,cardinality,pre_magnitude,post_magnitude");
        for b in &self.subsets {
            let _ = write!(s, ",cos_{b}");
        }
        s.push('\n');
        for (i, b) in self.subsets.iter().enumerate() {
            let _ = write!(
                s,
                "{b},{},{},{}",
                b.count_ones(),
                self.pre_magnitude[i],
                self.post_magnitude[i]
            );
            for c in &self.cosine[i] {
                let _ = write!(s, ",{}", c.map(|v| v.to_string()).unwrap_or_default());
            }
            s.push('\n');
        }
        s
    }
}

/// Cosine similarities of the features every single path and every legal
/// multi-path sum produce at `block` for `probe_batch`; earlier blocks
/// follow `base`.
pub fn feature_similarity(
    net: &Supernet,
    base: &ArchMask,
    block: usize,
    probe_batch: &Tensor,
) -> Result<SimilarityMatrix> {
    let spec = net.spec();
    if block >= spec.num_layers() {
        return Err(Error::Parameter(format!("block {block} out of range")));
    }
    let mut subsets = layer_choices(spec.layers[block].paths.len(), spec.max_paths);
    subsets.sort_by_key(|b| (b.count_ones(), *b));
    let probes = subsets
        .iter()
        .map(|&b| net.probe_block(base, block, b, probe_batch))
        .collect::<Result<Vec<_>>>()?;
    let pre: Vec<&[f32]> = probes.iter().map(|p| p.pre_sbn.data()).collect();
    let k = subsets.len();
    let mut cos = vec![vec![None; k]; k];
    for i in 0..k {
        for j in 0..k {
            cos[i][j] = if i == j && norm(pre[i]) > 0.0 {
                Some(1.0)
            } else {
                cosine(pre[i], pre[j])
            };
        }
    }
    Ok(SimilarityMatrix {
        block,
        pre_magnitude: pre.iter().map(|v| norm(v)).collect(),
        post_magnitude: probes.iter().map(|p| norm(p.post_sbn.data())).collect(),
        undefined_rows: (0..k).filter(|&i| norm(pre[i]) == 0.0).collect(),
        subsets,
        cosine: cos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_hand_values() {
        assert_eq!(kendall_tau(&[1., 2., 3., 4.], &[1., 2., 3., 4.]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1., 2., 3., 4.], &[4., 3., 2., 1.]).unwrap(), -1.0);
        let t = kendall_tau(&[1., 2., 3.], &[1., 3., 2.]).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(kendall_tau(&[1., 1.], &[1., 2.]), Err(Error::Undefined(_))));
        assert!(kendall_tau(&[1., 2.], &[1.]).is_err());
    }

    #[test]
    fn tau_with_ties() {
        // a ties (0,1); b ties (2,3). P = 6, Ta = Tb = 1.
        // pairs: (0,2)+ (0,3)+ (1,2)+ (1,3)+ (0,1) tie (2,3) tie -> 4 concordant
        let t = kendall_tau(&[1., 1., 2., 3.], &[1., 2., 3., 3.]).unwrap();
        assert!((t - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine(&[1., 2.], &[2., 4.]), Some(1.0));
        assert_eq!(cosine(&[1., 0.], &[0., 1.]), Some(0.0));
        assert_eq!(cosine(&[0., 0.], &[0., 1.]), None);
    }

    #[test]
    fn median_skips_undefined() {
        assert_eq!(median(&[Some(3.0), None, Some(1.0)]), Some(2.0));
        assert_eq!(median(&[None]), None);
    }
}
