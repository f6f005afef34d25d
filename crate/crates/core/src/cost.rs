//! Multiply-add and parameter counts of submodels.
//!
//! Only convolution and classifier terms are counted; batch norm,
//! activations and the path sum are treated as free.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::{Aggregation, ArchMask, PathOp, SearchSpaceSpec};

/// Multiply-adds of one inverted-bottleneck layer with depthwise paths:
/// `2*H*W*C_in*C_mid + sum_i k_i^2 * H*W*C_mid`.
pub fn layer_cost(h: u64, w: u64, c_in: u64, c_mid: u64, kernels: &[u64]) -> Result<u64> {
    if h == 0 || w == 0 || c_in == 0 || c_mid == 0 {
        return Err(Error::Parameter("layer_cost: dimensions must be >= 1".into()));
    }
    if kernels.is_empty() {
        return Err(Error::Parameter("layer_cost: no kernels".into()));
    }
    if let Some(k) = kernels.iter().find(|&&k| k % 2 == 0) {
        return Err(Error::Parameter(format!("layer_cost: kernel {k} is even")));
    }
    let hw = h * w;
    let dw: u64 = kernels.iter().map(|k| k * k * hw * c_mid).sum();
    Ok(2 * hw * c_in * c_mid + dw)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathCost {
    pub path: usize,
    pub kernel: usize,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    /// 1x1 expansion.
    pub pointwise: u64,
    pub paths: Vec<PathCost>,
    /// 1x1 projection back to the block width.
    pub projection: u64,
    pub params: u64,
}

impl LayerCost {
    pub fn flops(&self) -> u64 {
        self.pointwise + self.projection + self.paths.iter().map(|p| p.flops).sum::<u64>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostBreakdown {
    pub stem: u64,
    pub layers: Vec<LayerCost>,
    pub head: u64,
    pub flops: u64,
    pub params: u64,
}

/// Cost of the standalone network selected by `mask`.
///
/// Parameters count convolution weights, the head, and the affine `gamma`,
/// `beta` of every batch norm the submodel uses (one after each conv, one
/// after each block).
pub fn arch_cost(spec: &SearchSpaceSpec, mask: &ArchMask) -> Result<CostBreakdown> {
    mask.validate(spec)?;
    let hw = (spec.image_size * spec.image_size) as u64;
    let c = spec.stem_channels as u64;
    let sk = (spec.stem_kernel * spec.stem_kernel) as u64;
    let stem_w = spec.image_channels as u64 * c * sk;
    let stem = hw * stem_w;
    let mut params = stem_w + 2 * c;
    let mut layers = Vec::with_capacity(spec.num_layers());
    for (l, layer) in spec.layers.iter().enumerate() {
        let mid = spec.mid_channels(l) as u64;
        let (pointwise, projection, mut lp) = match spec.aggregation {
            Aggregation::SumProject => (hw * c * mid, hw * mid * c, 2 * c * mid + 2 * mid),
            Aggregation::Sum => (0, 0, 0),
        };
        lp += 2 * c; // block batch norm
        let mut paths = Vec::new();
        for j in mask.active(l) {
            let cand = layer.paths[j];
            let kk = (cand.kernel * cand.kernel) as u64;
            let w = match cand.op {
                PathOp::Depthwise => kk * mid,
                PathOp::Dense => kk * mid * mid,
            };
            lp += w + 2 * mid;
            paths.push(PathCost {
                path: j,
                kernel: cand.kernel,
                flops: hw * w,
            });
        }
        params += lp;
        layers.push(LayerCost {
            pointwise,
            paths,
            projection,
            params: lp,
        });
    }
    let classes = spec.num_classes as u64;
    let head = c * classes;
    params += head + classes;
    let flops = stem + head + layers.iter().map(LayerCost::flops).sum::<u64>();
    Ok(CostBreakdown {
        stem,
        layers,
        head,
        flops,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(layer_cost(8, 8, 16, 48, &[3]).unwrap(), 125_952);
        assert_eq!(layer_cost(8, 8, 16, 48, &[3, 5]).unwrap(), 202_752);
        assert_eq!(layer_cost(1, 1, 7, 7, &[1]).unwrap(), 2 * 49 + 7);
        assert!(layer_cost(8, 8, 16, 48, &[4]).is_err());
        assert!(layer_cost(8, 8, 16, 48, &[]).is_err());
    }

    #[test]
    fn layer_cost_agrees_with_arch_cost_layers() {
        let spec = SearchSpaceSpec::micro();
        let mask = ArchMask(vec![0b011, 0b100, 0b001, 0b110]);
        let cost = arch_cost(&spec, &mask).unwrap();
        let ks = [1u64, 3, 5];
        for (l, lc) in cost.layers.iter().enumerate() {
            let kernels: Vec<u64> = mask.active(l).map(|j| ks[j]).collect();
            assert_eq!(lc.flops(), layer_cost(8, 8, 8, 16, &kernels).unwrap());
        }
    }

    #[test]
    fn extra_path_adds_k_squared_hw_cmid() {
        let spec = SearchSpaceSpec::micro();
        let a = arch_cost(&spec, &ArchMask(vec![1, 1, 1, 1])).unwrap();
        let b = arch_cost(&spec, &ArchMask(vec![1, 0b011, 1, 1])).unwrap();
        assert_eq!(b.flops - a.flops, 9 * 64 * 16);
    }
}
