//! Declarative run configuration and content fingerprints.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::search::SearchConfig;
use crate::space::SearchSpaceSpec;
use crate::supernet::TrainConfig;

/// First 16 hex digits of the SHA-256 of `value`'s JSON encoding.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types always serialize");
    let digest = Sha256::digest(&bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Number of architectures drawn from the space; `None` trains all.
    pub sample: Option<usize>,
    /// Standalone training seeds per architecture.
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankConfig {
    pub sample_count: usize,
    pub calibrate: bool,
    pub calibration_batches: usize,
    pub calibration_batch_size: usize,
    /// Run the vanilla/SBN x raw/calibrated grid instead of one setting.
    pub ablation: bool,
    /// Independently trained supernets per grid cell.
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub every: usize,
    pub models: usize,
}

/// Everything one experiment needs. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub space: SearchSpaceSpec,
    pub data: SyntheticConfig,
    pub supernet: TrainConfig,
    pub standalone: TrainConfig,
    pub oracle: OracleConfig,
    pub rank: RankConfig,
    pub probe: ProbeConfig,
    pub search: SearchConfig,
}

impl RunConfig {
    /// The reference micro experiment.
    pub fn micro() -> Self {
        Self {
            seed: 0,
            space: SearchSpaceSpec::micro(),
            data: SyntheticConfig::micro(),
            supernet: TrainConfig {
                epochs: 40,
                lr: 0.2,
                ..TrainConfig::default()
            },
            standalone: TrainConfig::default(),
            oracle: OracleConfig {
                sample: Some(70),
                seeds: vec![0, 1, 2],
            },
            rank: RankConfig {
                sample_count: 70,
                calibrate: true,
                calibration_batches: 8,
                calibration_batch_size: 64,
                ablation: true,
                replicates: 3,
            },
            probe: ProbeConfig {
                every: 4,
                models: 20,
            },
            search: SearchConfig::micro(0.125, 1_000_000),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.data.validate()?;
        if self.data.num_classes() != self.space.num_classes
            || self.data.channels != self.space.image_channels
            || self.data.image_size != self.space.image_size
        {
            return Err(Error::Parameter(
                "data and space disagree on classes, channels or image size".into(),
            ));
        }
        if self.oracle.seeds.is_empty() {
            return Err(Error::Parameter("oracle.seeds must not be empty".into()));
        }
        if self.rank.calibration_batches == 0 || self.rank.calibration_batch_size < 2 {
            return Err(Error::Parameter(
                "calibration needs >= 1 batch of >= 2 samples".into(),
            ));
        }
        if self.rank.replicates == 0 {
            return Err(Error::Parameter("rank.replicates must be >= 1".into()));
        }
        if self.probe.models < 2 || self.probe.every == 0 {
            return Err(Error::Parameter("probe needs models >= 2 and every >= 1".into()));
        }
        self.search.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    /// Names the run directory; covers every field including the seed.
    pub fn hash(&self) -> String {
        fingerprint(self)
    }
}

/// Seed of the `r`-th supernet replicate. Replicate 0 uses the run seed
/// itself; the others get independent derived seeds.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        derive_seed(seed, &format!("replicate.{r}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash() {
        let cfg = RunConfig::micro();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::micro().to_json()).unwrap();
        v["rank"]["bogus"] = 1.into();
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }
}
