//! Search-space description, architecture masks, sampling and enumeration.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default cap on exhaustive enumeration.
pub const ENUMERATION_CAP: u128 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathOp {
    /// `k x k` depthwise convolution over the block's middle channels.
    Depthwise,
    /// Full `k x k` convolution over the block's middle channels.
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidatePath {
    pub op: PathOp,
    pub kernel: usize,
}

impl CandidatePath {
    pub fn depthwise(kernel: usize) -> Self {
        Self {
            op: PathOp::Depthwise,
            kernel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    /// Middle channels = expansion * stem channels.
    pub expansion: usize,
    pub paths: Vec<CandidatePath>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Paths map C -> C and their outputs are summed.
    Sum,
    /// Inverted bottleneck: shared 1x1 expansion, summed paths, 1x1 projection.
    SumProject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SbnMode {
    /// One batch-norm state per block.
    Vanilla,
    /// One state per active-path count `1..=m`.
    Linear,
    /// One state per active subset of size `1..=m`.
    Exponential,
}

impl SbnMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SbnMode::Vanilla => "vanilla",
            SbnMode::Linear => "linear",
            SbnMode::Exponential => "exponential",
        }
    }
}

/// Shape of a weight-sharing supernet and the space of submodels it spans.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpaceSpec {
    pub image_channels: usize,
    pub image_size: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub layers: Vec<LayerSpec>,
    /// Maximum number of simultaneously active paths per layer (`m`).
    pub max_paths: usize,
    pub aggregation: Aggregation,
    pub sbn_mode: SbnMode,
    /// Identity skip around every block, added after the block's SBN.
    pub residual: bool,
    pub num_classes: usize,
}

impl SearchSpaceSpec {
    /// The reference micro space: 4 layers of 3 depthwise paths (k = 1, 3, 5),
    /// at most 2 active, inverted bottleneck aggregation, linear SBN.
    pub fn micro() -> Self {
        let layer = LayerSpec {
            expansion: 2,
            paths: [1, 3, 5].map(CandidatePath::depthwise).to_vec(),
        };
        Self {
            image_channels: 3,
            image_size: 8,
            stem_channels: 8,
            stem_kernel: 1,
            layers: vec![layer; 4],
            max_paths: 2,
            aggregation: Aggregation::SumProject,
            sbn_mode: SbnMode::Linear,
            residual: true,
            num_classes: 8,
        }
    }

    pub fn with_sbn_mode(mut self, mode: SbnMode) -> Self {
        self.sbn_mode = mode;
        self
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn mid_channels(&self, layer: usize) -> usize {
        match self.aggregation {
            Aggregation::Sum => self.stem_channels,
            Aggregation::SumProject => self.layers[layer].expansion * self.stem_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = |msg: String| Err(Error::Parameter(msg));
        if self.image_channels == 0 || self.image_size == 0 || self.stem_channels == 0 {
            return p("image and stem dimensions must be positive".into());
        }
        if self.num_classes < 2 {
            return p("need at least 2 classes".into());
        }
        if self.stem_kernel.is_multiple_of(2) {
            return p(format!("stem kernel {} must be odd", self.stem_kernel));
        }
        if self.layers.is_empty() {
            return p("search space has no layers".into());
        }
        if self.max_paths == 0 {
            return p("max_paths must be >= 1".into());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let n = layer.paths.len();
            if n > 32 {
                return p(format!("layer {l}: at most 32 paths supported"));
            }
            if self.max_paths > n {
                return p(format!("layer {l}: max_paths {} > {n} paths", self.max_paths));
            }
            if layer.expansion == 0 {
                return p(format!("layer {l}: expansion must be >= 1"));
            }
            if self.aggregation == Aggregation::Sum && layer.expansion != 1 {
                return p(format!("layer {l}: sum aggregation requires expansion 1"));
            }
            if let Some(c) = layer.paths.iter().find(|c| c.kernel % 2 == 0) {
                return p(format!(
                    "layer {l}: kernel {} must be odd so every path keeps the spatial size",
                    c.kernel
                ));
            }
        }
        Ok(())
    }
}

/// Per-layer bitmask of active candidate paths.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArchMask(pub Vec<u32>);

impl ArchMask {
    pub fn layers(&self) -> &[u32] {
        &self.0
    }

    pub fn layer(&self, l: usize) -> u32 {
        self.0[l]
    }

    /// Indices of the active paths in layer `l`, ascending.
    pub fn active(&self, l: usize) -> impl Iterator<Item = usize> + '_ {
        let bits = self.0[l];
        (0..32).filter(move |i| bits >> i & 1 == 1)
    }

    pub fn validate(&self, spec: &SearchSpaceSpec) -> Result<()> {
        if self.0.len() != spec.num_layers() {
            return Err(Error::Mask(format!(
                "mask has {} layers, space has {}",
                self.0.len(),
                spec.num_layers()
            )));
        }
        for (l, (&bits, layer)) in self.0.iter().zip(&spec.layers).enumerate() {
            let n = layer.paths.len();
            if n < 32 && bits >> n != 0 {
                return Err(Error::Mask(format!("layer {l}: bit beyond {n} paths")));
            }
            let k = bits.count_ones() as usize;
            if k == 0 || k > spec.max_paths {
                return Err(Error::Mask(format!(
                    "layer {l}: {k} active paths, need 1..={}",
                    spec.max_paths
                )));
            }
        }
        Ok(())
    }

    /// `self` activates a subset of `other`'s paths in every layer.
    pub fn is_subset_of(&self, other: &ArchMask) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }
}

impl std::fmt::Display for ArchMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "Bernoulli probability must lie in (0, 1), got {p}"
        )))
    }
}

/// Draws one layer: independent Bernoulli(p) per path, redrawn until the
/// popcount lies in `1..=m`.
pub fn sample_layer(n: usize, m: usize, p: f64, rng: &mut Rng) -> Result<u32> {
    check_probability(p)?;
    if m == 0 || m > n || n > 32 {
        return Err(Error::Parameter(format!("bad layer shape n={n} m={m}")));
    }
    loop {
        let mut bits = 0u32;
        for i in 0..n {
            if rng.random_bool(p) {
                bits |= 1 << i;
            }
        }
        let k = bits.count_ones() as usize;
        if (1..=m).contains(&k) {
            return Ok(bits);
        }
    }
}

/// Samples a submodel with per-layer Bernoulli activation.
pub fn sample_mask(spec: &SearchSpaceSpec, p: f64, rng: &mut Rng) -> Result<ArchMask> {
    check_probability(p)?;
    spec.layers
        .iter()
        .map(|layer| sample_layer(layer.paths.len(), spec.max_paths, p, rng))
        .collect::<Result<Vec<_>>>()
        .map(ArchMask)
}

/// All legal bitmasks of one layer, ascending.
pub fn layer_choices(n: usize, m: usize) -> Vec<u32> {
    (1u64..(1u64 << n))
        .map(|b| b as u32)
        .filter(|b| (b.count_ones() as usize) <= m)
        .collect()
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `prod_l sum_{i=1..m} C(n_l, i)`.
pub fn space_size(spec: &SearchSpaceSpec) -> u128 {
    spec.layers
        .iter()
        .map(|l| (1..=spec.max_paths).map(|i| binomial(l.paths.len(), i)).sum::<u128>())
        .product()
}

/// Every legal mask in lexicographic order of the per-layer bitmask values.
pub fn enumerate_space(spec: &SearchSpaceSpec, cap: u128) -> Result<Vec<ArchMask>> {
    spec.validate()?;
    let size = space_size(spec);
    if size > cap {
        return Err(Error::Parameter(format!(
            "space has {size} architectures, above the enumeration cap {cap}; use sampling mode"
        )));
    }
    let choices: Vec<Vec<u32>> = spec
        .layers
        .iter()
        .map(|l| layer_choices(l.paths.len(), spec.max_paths))
        .collect();
    let mut out = Vec::with_capacity(size as usize);
    let mut idx = vec![0usize; choices.len()];
    loop {
        out.push(ArchMask(idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect()));
        let mut l = choices.len();
        loop {
            if l == 0 {
                return Ok(out);
            }
            l -= 1;
            idx[l] += 1;
            if idx[l] < choices[l].len() {
                break;
            }
            idx[l] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn space(layers: usize, n: usize, m: usize) -> SearchSpaceSpec {
        let mut s = SearchSpaceSpec::micro();
        s.layers = vec![
            LayerSpec {
                expansion: 2,
                paths: vec![CandidatePath::depthwise(3); n]
            };
            layers
        ];
        s.max_paths = m;
        s
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_space(&space(1, 3, 1), ENUMERATION_CAP).unwrap().len(), 3);
        assert_eq!(enumerate_space(&space(1, 3, 2), ENUMERATION_CAP).unwrap().len(), 6);
        let all = enumerate_space(&space(4, 3, 2), ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 1296);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, all);
    }

    #[test]
    fn enumeration_cap() {
        let s = space(10, 4, 4);
        assert_eq!(space_size(&s), 15u128.pow(10));
        assert!(matches!(enumerate_space(&s, ENUMERATION_CAP), Err(Error::Parameter(_))));
    }

    #[test]
    fn sampled_masks_respect_cap() {
        let s = space(6, 4, 2);
        let mut rng = stream(3, "t");
        for _ in 0..500 {
            let m = sample_mask(&s, 0.5, &mut rng).unwrap();
            m.validate(&s).unwrap();
            assert!(m.layers().iter().all(|b| (1..=2).contains(&b.count_ones())));
        }
    }

    #[test]
    fn near_one_probability_activates_everything() {
        let s = space(3, 4, 4);
        let mut rng = stream(1, "t");
        let full = (0..200)
            .filter(|_| sample_mask(&s, 1.0 - 1e-9, &mut rng).unwrap().layers() == [15, 15, 15])
            .count();
        assert_eq!(full, 200);
    }

    #[test]
    fn probability_bounds() {
        let s = space(2, 3, 2);
        let mut rng = stream(1, "t");
        assert!(sample_mask(&s, 0.0, &mut rng).is_err());
        assert!(sample_mask(&s, 1.0, &mut rng).is_err());
    }

    #[test]
    fn mask_validation() {
        let s = space(2, 3, 2);
        assert!(ArchMask(vec![1, 6]).validate(&s).is_ok());
        assert!(ArchMask(vec![0, 1]).validate(&s).is_err());
        assert!(ArchMask(vec![7, 1]).validate(&s).is_err());
        assert!(ArchMask(vec![8, 1]).validate(&s).is_err());
        assert!(ArchMask(vec![1]).validate(&s).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = SearchSpaceSpec::micro();
        assert!(s.validate().is_ok());
        s.layers[1].paths[0].kernel = 4;
        assert!(s.validate().is_err());
        let mut s = SearchSpaceSpec::micro();
        s.max_paths = 4;
        assert!(s.validate().is_err());
        let mut s = SearchSpaceSpec::micro();
        s.aggregation = Aggregation::Sum;
        assert!(s.validate().is_err());
    }
}
