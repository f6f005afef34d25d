//! Image datasets: a seeded synthetic generator and a CIFAR-10 binary reader.
//!
//! The synthetic task draws one oriented grating per image under a Gaussian
//! envelope. The class sets the spatial frequency; orientation, phase,
//! envelope position and per-channel contrast are nuisance variables, so the
//! per-pixel marginals barely depend on the class and a model has to look at
//! spatial structure. Small kernels see high frequencies well and large
//! kernels low ones, which is what makes architectures differ.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::supernet::checkpoint::{
    fingerprint_entry, read_entries, split_fingerprint, write_entries, Entry,
};
use crate::tensor::Tensor;

/// Labelled NCHW images.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (n, ..) = images.dims4("dataset")?;
        if n != labels.len() {
            return Err(Error::Shape {
                op: "dataset",
                detail: format!("{n} images, {} labels", labels.len()),
            });
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Parameter(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let x = self.images.gather_batch(indices)?;
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((x, y))
    }

    /// Consecutive batches of `size` in index order; the last one may be short.
    pub fn sequential_batches(&self, size: usize) -> Result<Vec<(Tensor, Vec<usize>)>> {
        if size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        let idx: Vec<usize> = (0..self.len()).collect();
        idx.chunks(size).map(|c| self.batch(c)).collect()
    }

    /// Shuffled full batches of `size` (the remainder is dropped so train-mode
    /// batch norm never sees a batch of one).
    pub fn shuffled_batches(&self, size: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
        if size < 2 {
            return Err(Error::Parameter("training batch size must be >= 2".into()));
        }
        if self.len() < size {
            return Err(Error::Empty(format!(
                "{} samples cannot fill one batch of {size}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        Ok(idx.chunks_exact(size).map(<[usize]>::to_vec).collect())
    }

    /// Stores the split in the tensor container format with a fingerprint
    /// stamp. Labels are written as floats, which is exact for class ids.
    pub fn save<W: Write>(&self, w: W, fingerprint: &str) -> Result<()> {
        let labels: Vec<f32> = self.labels.iter().map(|&l| l as f32).collect();
        let entries = vec![
            fingerprint_entry(fingerprint),
            Entry {
                name: "num_classes".into(),
                shape: vec![],
                data: vec![self.num_classes as f32],
            },
            Entry::from_tensor("images", &self.images),
            Entry::vector("labels", &labels),
        ];
        write_entries(w, &entries)
    }

    /// Reads a split written by [`Dataset::save`]; returns it with its fingerprint.
    pub fn load<R: Read>(r: R) -> Result<(Self, String)> {
        let (fp, entries) = split_fingerprint(read_entries(r)?)?;
        let find = |name: &str| {
            entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Format(format!("dataset file lacks `{name}`")))
        };
        let classes = find("num_classes")?.data[0];
        let labels = find("labels")?
            .data
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Format(format!("label {v} is not a class index")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if entries.len() != 3 || !(classes >= 1.0 && classes.fract() == 0.0) {
            return Err(Error::Format("malformed dataset file".into()));
        }
        Ok((Dataset::new(find("images")?.to_tensor()?, labels, classes as usize)?, fp))
    }

    /// First `n` samples.
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        if n == 0 {
            return Err(Error::Empty("dataset head of 0 samples".into()));
        }
        Dataset::new(
            self.images.slice_batch(0, n)?,
            self.labels[..n].to_vec(),
            self.num_classes,
        )
    }
}

/// Generator settings for the synthetic grating task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub channels: usize,
    pub image_size: usize,
    /// Grating frequency of each class, in cycles per image width.
    pub class_frequencies: Vec<f64>,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    /// Envelope width as a fraction of the image size.
    pub envelope: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
}

impl SyntheticConfig {
    pub fn micro() -> Self {
        Self {
            channels: 3,
            image_size: 8,
            class_frequencies: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            noise: 1.0,
            envelope: 0.45,
            train_size: 2048,
            val_size: 1024,
            test_size: 4096,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_frequencies.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.image_size == 0 {
            return Err(Error::Parameter("image dimensions must be positive".into()));
        }
        if self.class_frequencies.len() < 2 {
            return Err(Error::Parameter("need at least 2 classes".into()));
        }
        if !(self.noise >= 0.0 && self.envelope > 0.0) {
            return Err(Error::Parameter("noise must be >= 0 and envelope > 0".into()));
        }
        if self.train_size == 0 || self.val_size == 0 || self.test_size == 0 {
            return Err(Error::Parameter("split sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Train, validation and test splits drawn from independent streams.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

fn synth_image(cfg: &SyntheticConfig, class: usize, rng: &mut Rng, out: &mut Vec<f32>) {
    let s = cfg.image_size as f64;
    let freq = cfg.class_frequencies[class];
    let theta = rng.random_range(0.0..PI);
    let phase = rng.random_range(0.0..2.0 * PI);
    let cx = s / 2.0 + rng.random_range(-0.15..0.15) * s;
    let cy = s / 2.0 + rng.random_range(-0.15..0.15) * s;
    let sigma = cfg.envelope * s;
    let (ct, st) = (theta.cos(), theta.sin());
    let contrast: Vec<f64> = (0..cfg.channels)
        .map(|_| rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("finite");
    for &a in &contrast {
        for y in 0..cfg.image_size {
            for x in 0..cfg.image_size {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let env = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                let u = (x as f64 * ct + y as f64 * st) / s;
                let v = a * env * (2.0 * PI * freq * u + phase).cos();
                let n = if cfg.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                out.push((v + n) as f32);
            }
        }
    }
}

/// `n` balanced samples (labels cycle through the classes before shuffling).
pub fn synthetic(cfg: &SyntheticConfig, n: usize, rng: &mut Rng) -> Result<Dataset> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Empty("synthetic dataset of 0 samples".into()));
    }
    let k = cfg.num_classes();
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    let mut data = Vec::with_capacity(n * cfg.channels * cfg.image_size * cfg.image_size);
    for &c in &labels {
        synth_image(cfg, c, rng, &mut data);
    }
    let images = Tensor::new(
        vec![n, cfg.channels, cfg.image_size, cfg.image_size],
        data,
    )?;
    Dataset::new(images, labels, k)
}

/// Deterministic train/val/test splits for `seed`.
pub fn synthetic_splits(cfg: &SyntheticConfig, seed: u64) -> Result<Splits> {
    Ok(Splits {
        train: synthetic(cfg, cfg.train_size, &mut stream(seed, "data.train"))?,
        val: synthetic(cfg, cfg.val_size, &mut stream(seed, "data.val"))?,
        test: synthetic(cfg, cfg.test_size, &mut stream(seed, "data.test"))?,
    })
}

const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

/// Parses CIFAR-10 binary records (one label byte, then 1024 red, 1024
/// green and 1024 blue bytes, each plane row-major). Pixels are mapped to
/// `[-1, 1]`.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Format(format!(
            "CIFAR-10 data length {} is not a positive multiple of {CIFAR_RECORD}",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3072);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        if rec[0] > 9 {
            return Err(Error::Format(format!("CIFAR-10 label {} > 9", rec[0])));
        }
        labels.push(rec[0] as usize);
        data.extend(rec[1..].iter().map(|&b| b as f32 / 127.5 - 1.0));
    }
    Dataset::new(Tensor::new(vec![n, 3, 32, 32], data)?, labels, 10)
}

pub fn read_cifar10(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_cifar10(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_seeded_and_balanced() {
        let cfg = SyntheticConfig::micro();
        let a = synthetic(&cfg, 40, &mut stream(7, "x")).unwrap();
        let b = synthetic(&cfg, 40, &mut stream(7, "x")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.images.shape(), &[40, 3, 8, 8]);
        for c in 0..8 {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 5);
        }
        a.images.check_finite("synthetic").unwrap();
    }

    #[test]
    fn shuffled_batches_drop_remainder() {
        let cfg = SyntheticConfig::micro();
        let d = synthetic(&cfg, 10, &mut stream(1, "x")).unwrap();
        let b = d.shuffled_batches(4, &mut stream(1, "s")).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|c| c.len() == 4));
        assert!(d.shuffled_batches(1, &mut stream(1, "s")).is_err());
        assert!(d.shuffled_batches(11, &mut stream(1, "s")).is_err());
        let seq = d.sequential_batches(4).unwrap();
        assert_eq!(seq.iter().map(|b| b.1.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
    }

    #[test]
    fn cifar_records() {
        let mut bytes = vec![0u8; 2 * CIFAR_RECORD];
        bytes[0] = 3;
        bytes[1] = 255; // red, row 0, col 0
        bytes[CIFAR_RECORD] = 9;
        bytes[CIFAR_RECORD + 1 + 2048 + 33] = 255; // blue, row 1, col 1
        let d = parse_cifar10(&bytes).unwrap();
        assert_eq!(d.labels, vec![3, 9]);
        let x = d.images.data();
        assert_eq!(x[0], 1.0);
        assert_eq!(x[1], -1.0);
        assert_eq!(x[3072 + 2 * 1024 + 33], 1.0);
        assert!(parse_cifar10(&bytes[1..]).is_err());
        bytes[0] = 10;
        assert!(parse_cifar10(&bytes).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let mut cfg = SyntheticConfig::micro();
        cfg.train_size = 12;
        let d = synthetic(&cfg, 12, &mut stream(3, "t")).unwrap();
        let mut buf = Vec::new();
        d.save(&mut buf, "abc123").unwrap();
        let (back, fp) = Dataset::load(&buf[..]).unwrap();
        assert_eq!(fp, "abc123");
        assert_eq!(back, d);
        buf.truncate(buf.len() - 3);
        assert!(Dataset::load(&buf[..]).is_err());
    }
}
