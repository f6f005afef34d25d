use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::space::{binomial, layer_choices, SbnMode};
use crate::tensor::BnState;

/// Key of one batch-norm state inside an [`SbnBank`].
///
/// Vanilla banks use key 0, linear banks the active-path count, exponential
/// banks the active-subset bitmask itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SbnKey(pub u32);

impl std::fmt::Display for SbnKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Selects the bank entry that normalizes the sum of the paths in `layer_mask`.
pub fn sbn_index(layer_mask: u32, mode: SbnMode, m: usize) -> Result<SbnKey> {
    let k = layer_mask.count_ones() as usize;
    if k == 0 || k > m {
        return Err(Error::Mask(format!(
            "{k} active paths cannot select a shadow batch norm (m = {m})"
        )));
    }
    Ok(match mode {
        SbnMode::Vanilla => SbnKey(0),
        SbnMode::Linear => SbnKey(k as u32),
        SbnMode::Exponential => SbnKey(layer_mask),
    })
}

/// Number of entries a bank holds for `n` paths and at most `m` active.
pub fn bank_size(mode: SbnMode, n: usize, m: usize) -> usize {
    match mode {
        SbnMode::Vanilla => 1,
        SbnMode::Linear => m,
        SbnMode::Exponential => (1..=m).map(|i| binomial(n, i) as usize).sum(),
    }
}

/// Shadow batch-norm states of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct SbnBank {
    mode: SbnMode,
    max_paths: usize,
    states: BTreeMap<SbnKey, BnState>,
}

impl SbnBank {
    pub fn new(mode: SbnMode, n: usize, m: usize, channels: usize) -> Self {
        let keys: Vec<SbnKey> = match mode {
            SbnMode::Vanilla => vec![SbnKey(0)],
            SbnMode::Linear => (1..=m as u32).map(SbnKey).collect(),
            SbnMode::Exponential => layer_choices(n, m).into_iter().map(SbnKey).collect(),
        };
        Self {
            mode,
            max_paths: m,
            states: keys.into_iter().map(|k| (k, BnState::new(channels))).collect(),
        }
    }

    pub fn mode(&self) -> SbnMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn key_for(&self, layer_mask: u32) -> Result<SbnKey> {
        sbn_index(layer_mask, self.mode, self.max_paths)
    }

    pub fn get(&self, key: SbnKey) -> Result<&BnState> {
        self.states
            .get(&key)
            .ok_or_else(|| Error::Mask(format!("no shadow batch norm under key {key}")))
    }

    pub fn get_mut(&mut self, key: SbnKey) -> Result<&mut BnState> {
        self.states
            .get_mut(&key)
            .ok_or_else(|| Error::Mask(format!("no shadow batch norm under key {key}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (SbnKey, &BnState)> {
        self.states.iter().map(|(k, v)| (*k, v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (SbnKey, &mut BnState)> {
        self.states.iter_mut().map(|(k, v)| (*k, v))
    }
}
