//! Ground-truth accuracies from training every architecture on its own.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::arch_cost;
use crate::data::Splits;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::space::{enumerate_space, ArchMask, SbnMode, SearchSpaceSpec, ENUMERATION_CAP};
use crate::supernet::{MaskSource, Supernet, TrainConfig, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRecord {
    pub mask: ArchMask,
    /// Mean of `seed_accs`.
    pub acc: f64,
    pub seed_accs: Vec<f64>,
    pub flops: u64,
    pub params: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    fingerprint: String,
    complete: bool,
    rows: usize,
    failed: Vec<FailedRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedRow {
    pub mask: ArchMask,
    pub error: String,
}

/// Architecture -> standalone accuracy table.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchTable {
    pub fingerprint: String,
    pub records: Vec<BenchRecord>,
    /// Architectures whose training failed; they have no record.
    pub failed: Vec<FailedRow>,
}

impl BenchTable {
    pub fn new(fingerprint: String, records: Vec<BenchRecord>) -> Result<Self> {
        let t = Self {
            fingerprint,
            records,
            failed: Vec::new(),
        };
        t.check_unique()?;
        Ok(t)
    }

    pub fn complete(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, mask: &ArchMask) -> Option<&BenchRecord> {
        self.records.iter().find(|r| &r.mask == mask)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(&r.mask) {
                return Err(Error::Format(format!("duplicate mask {} in table", r.mask)));
            }
        }
        Ok(())
    }

    /// Checks stored costs against the cost model.
    pub fn verify_costs(&self, spec: &SearchSpaceSpec) -> Result<()> {
        for r in &self.records {
            let c = arch_cost(spec, &r.mask)?;
            if c.flops != r.flops || c.params != r.params {
                return Err(Error::Format(format!("cost of {} does not match", r.mask)));
            }
        }
        Ok(())
    }

    /// JSON lines: a header with the fingerprint, then one record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            fingerprint: self.fingerprint.clone(),
            complete: self.complete(),
            rows: self.records.len(),
            failed: self.failed.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header: Header = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::Format("empty bench table".into())),
        };
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        if records.len() != header.rows {
            return Err(Error::Format(format!(
                "header announces {} rows, found {}",
                header.rows,
                records.len()
            )));
        }
        let t = Self {
            fingerprint: header.fingerprint,
            records,
            failed: header.failed,
        };
        t.check_unique()?;
        Ok(t)
    }
}

/// The architectures an oracle covers: all of them for `None` (or a sample at
/// least as large as the space), otherwise `k` distinct masks drawn with the
/// run seed, in enumeration order.
pub fn oracle_masks(spec: &SearchSpaceSpec, sample: Option<usize>, seed: u64) -> Result<Vec<ArchMask>> {
    let all = enumerate_space(spec, ENUMERATION_CAP)?;
    Ok(match sample {
        Some(k) if k < all.len() => {
            let mut idx = index::sample(&mut stream(seed, "oracle.sample"), all.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| all[i].clone()).collect()
        }
        _ => all,
    })
}

/// Stand-alone training seeds derived from the run seed and the configured
/// seed labels.
pub fn standalone_seeds(seed: u64, labels: &[u64]) -> Vec<u64> {
    labels
        .iter()
        .map(|s| derive_seed(seed, &format!("oracle.{s}")))
        .collect()
}

/// Trains the fixed-topology network of `mask` (plain batch norms, no
/// shadow banks) and returns its accuracy on the test split.
pub fn train_standalone(
    spec: &SearchSpaceSpec,
    mask: &ArchMask,
    data: &Splits,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let spec = spec.clone().with_sbn_mode(SbnMode::Vanilla);
    mask.validate(&spec)?;
    let net = Supernet::new(&spec, &mut stream(seed, "standalone.init"))?;
    let mut trainer = Trainer::new(
        net,
        cfg.clone(),
        MaskSource::Fixed(mask.clone()),
        data.train.len(),
        seed,
    )?;
    for _ in 0..cfg.epochs {
        trainer.train_epoch(&data.train)?;
    }
    trainer.net.accuracy(mask, &data.test)
}

/// Trains every mask under every seed (in parallel) and assembles the table
/// in input order. Failed trainings are listed instead of aborting.
pub fn build_bench(
    spec: &SearchSpaceSpec,
    masks: &[ArchMask],
    seeds: &[u64],
    data: &Splits,
    cfg: &TrainConfig,
    fingerprint: String,
) -> Result<BenchTable> {
    if masks.is_empty() {
        return Err(Error::Empty("no masks to benchmark".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Empty("no training seeds".into()));
    }
    let unique: BTreeSet<&ArchMask> = masks.iter().collect();
    if unique.len() != masks.len() {
        return Err(Error::Parameter("duplicate masks passed to build_bench".into()));
    }
    for m in masks {
        m.validate(spec)?;
    }
    let jobs: Vec<(usize, u64)> = (0..masks.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(i, s)| train_standalone(spec, &masks[i], data, cfg, s))
        .collect();
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (i, chunk) in results.chunks(seeds.len()).enumerate() {
        match chunk.iter().map(|r| r.as_ref().copied()).collect::<std::result::Result<Vec<f64>, _>>() {
            Ok(seed_accs) => {
                let cost = arch_cost(spec, &masks[i])?;
                records.push(BenchRecord {
                    mask: masks[i].clone(),
                    acc: seed_accs.iter().sum::<f64>() / seed_accs.len() as f64,
                    seed_accs,
                    flops: cost.flops,
                    params: cost.params,
                });
            }
            Err(e) => failed.push(FailedRow {
                mask: masks[i].clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(BenchTable {
        fingerprint,
        records,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(mask: Vec<u32>, acc: f64) -> BenchRecord {
        let spec = SearchSpaceSpec::micro();
        let mask = ArchMask(mask);
        let c = arch_cost(&spec, &mask).unwrap();
        BenchRecord {
            mask,
            acc,
            seed_accs: vec![acc],
            flops: c.flops,
            params: c.params,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let t = BenchTable::new(
            "f00d".into(),
            vec![rec(vec![1, 2, 4, 3], 0.3125), rec(vec![1, 1, 1, 1], 0.1 + 0.2)],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"fingerprint\":\"f00d\""));
        assert!(text.lines().nth(1).unwrap().starts_with("{\"mask\":[1,2,4,3],\"acc\":"));
        let back = BenchTable::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, t);
        back.verify_costs(&SearchSpaceSpec::micro()).unwrap();
    }

    #[test]
    fn duplicates_rejected() {
        let r = rec(vec![1, 1, 1, 1], 0.5);
        assert!(BenchTable::new("x".into(), vec![r.clone(), r]).is_err());
    }
}
