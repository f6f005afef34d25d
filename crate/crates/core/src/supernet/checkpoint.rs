//! `MXPT` tensor container.
//!
//! Layout, all little-endian: magic `MXPT`, `u32` version, `u32` entry count,
//! then per entry `u16` name length, UTF-8 name, `u8` rank, `u32` per
//! dimension and the `f32` payload. Rank 0 entries carry one value.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{BnSlot, SbnKey, Supernet};
use crate::error::{Error, Result};
use crate::space::SearchSpaceSpec;
use crate::tensor::{BnState, Tensor};

pub const MAGIC: &[u8; 4] = b"MXPT";
pub const VERSION: u32 = 1;

/// A named tensor as stored in the container.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Entry {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        Self {
            name: name.into(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }

    pub fn vector(name: impl Into<String>, v: &[f32]) -> Self {
        Self {
            name: name.into(),
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(self.shape.clone(), self.data.clone())
    }
}

pub fn write_entries<W: Write>(mut w: W, entries: &[Entry]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(entries.len()).map_err(fmt_err)?.to_le_bytes())?;
    for e in entries {
        let name = e.name.as_bytes();
        w.write_all(&u16::try_from(name.len()).map_err(fmt_err)?.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[u8::try_from(e.shape.len()).map_err(fmt_err)?])?;
        for &d in &e.shape {
            w.write_all(&u32::try_from(d).map_err(fmt_err)?.to_le_bytes())?;
        }
        if e.data.len() != e.shape.iter().product::<usize>() {
            return Err(Error::Format(format!("entry {} payload/shape mismatch", e.name)));
        }
        let mut buf = Vec::with_capacity(e.data.len() * 4);
        for v in &e.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn fmt_err(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("value too large for container field: {e}"))
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
    Ok(b)
}

pub fn read_entries<R: Read>(mut r: R) -> Result<Vec<Entry>> {
    if &read_exact::<_, 4>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic, not an MXPT file".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported MXPT version {version}")));
    }
    let count = u32::from_le_bytes(read_exact(&mut r)?);
    let mut out = Vec::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Format(format!("truncated entry name: {e}")))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
        let rank = read_exact::<_, 1>(&mut r)?[0] as usize;
        let shape = (0..rank)
            .map(|_| read_exact(&mut r).map(|b| u32::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 4];
        r.read_exact(&mut raw)
            .map_err(|e| Error::Format(format!("truncated payload of {name}: {e}")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(Entry { name, shape, data });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last entry".into()));
    }
    Ok(out)
}

const FINGERPRINT_PREFIX: &str = "meta.fingerprint.";

/// The rank-0 marker entry that stamps a container with `fingerprint`.
pub fn fingerprint_entry(fingerprint: &str) -> Entry {
    Entry {
        name: format!("{FINGERPRINT_PREFIX}{fingerprint}"),
        shape: vec![],
        data: vec![0.0],
    }
}

/// Separates the fingerprint marker from the payload entries. Exactly one
/// marker must be present.
pub fn split_fingerprint(entries: Vec<Entry>) -> Result<(String, Vec<Entry>)> {
    let mut fingerprint = None;
    let mut rest = Vec::with_capacity(entries.len());
    for e in entries {
        match e.name.strip_prefix(FINGERPRINT_PREFIX) {
            Some(fp) if fingerprint.is_none() => fingerprint = Some(fp.to_string()),
            Some(_) => return Err(Error::Format("more than one fingerprint entry".into())),
            None => rest.push(e),
        }
    }
    let fp = fingerprint.ok_or_else(|| Error::Format("container has no fingerprint".into()))?;
    Ok((fp, rest))
}

fn bn_entries(out: &mut Vec<Entry>, prefix: &str, bn: &BnState) {
    out.push(Entry::from_tensor(format!("{prefix}.gamma"), &bn.gamma));
    out.push(Entry::from_tensor(format!("{prefix}.beta"), &bn.beta));
    out.push(Entry::vector(format!("{prefix}.running_mean"), &bn.running_mean));
    out.push(Entry::vector(format!("{prefix}.running_var"), &bn.running_var));
}

impl Supernet {
    /// All tensors and batch-norm states under their checkpoint names.
    pub fn to_entries(&self) -> Vec<Entry> {
        let mut out = vec![Entry::from_tensor("stem.conv.weight", &self.stem.weight)];
        bn_entries(&mut out, &BnSlot::Stem.name(), &self.stem.bn);
        for (l, b) in self.blocks.iter().enumerate() {
            if let Some(e) = &b.expand {
                out.push(Entry::from_tensor(format!("block{l}.expand.weight"), &e.weight));
                bn_entries(&mut out, &BnSlot::Expand(l).name(), &e.bn);
            }
            for (j, p) in b.paths.iter().enumerate() {
                out.push(Entry::from_tensor(format!("block{l}.path{j}.weight"), &p.weight));
                bn_entries(&mut out, &BnSlot::Path(l, j).name(), &p.bn);
            }
            if let Some(w) = &b.project {
                out.push(Entry::from_tensor(format!("block{l}.project.weight"), w));
            }
            for (k, st) in b.bank.iter() {
                bn_entries(&mut out, &BnSlot::Sbn(l, k).name(), st);
            }
        }
        out.push(Entry::from_tensor("head.weight", &self.head.weight));
        out.push(Entry::from_tensor("head.bias", &self.head.bias));
        out
    }

    /// Writes the checkpoint, stamped with `fingerprint`.
    pub fn save<W: Write>(&self, w: W, fingerprint: &str) -> Result<()> {
        let mut entries = vec![fingerprint_entry(fingerprint)];
        entries.extend(self.to_entries());
        write_entries(w, &entries)
    }

    /// Restores a checkpoint written for `spec`; returns the net and its
    /// fingerprint. Every tensor of the freshly built net must be present
    /// with the same shape, and no unknown entries are accepted.
    pub fn load<R: Read>(r: R, spec: &SearchSpaceSpec) -> Result<(Supernet, String)> {
        let (fingerprint, entries) = split_fingerprint(read_entries(r)?)?;
        let mut by_name = BTreeMap::new();
        for e in entries {
            if by_name.insert(e.name.clone(), e).is_some() {
                return Err(Error::Format("duplicate entry name".into()));
            }
        }
        // Shapes come from a template; the values are all overwritten.
        let mut net = Supernet::new(spec, &mut crate::rng::stream(0, "checkpoint.template"))?;
        let names: Vec<Entry> = net.to_entries();
        if names.len() != by_name.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, the spec needs {}",
                by_name.len(),
                names.len()
            )));
        }
        for want in names {
            let got = by_name
                .remove(&want.name)
                .ok_or_else(|| Error::Format(format!("missing entry {}", want.name)))?;
            if got.shape != want.shape {
                return Err(Error::Format(format!(
                    "entry {}: shape {:?}, expected {:?}",
                    want.name, got.shape, want.shape
                )));
            }
            net.assign(&want.name, got.data)?;
        }
        Ok((net, fingerprint))
    }

    fn assign(&mut self, name: &str, data: Vec<f32>) -> Result<()> {
        let bad = || Error::Format(format!("unknown entry {name}"));
        let (head, field) = name.rsplit_once('.').ok_or_else(bad)?;
        let set_t = |t: &mut Tensor, data: Vec<f32>| {
            t.data_mut().copy_from_slice(&data);
        };
        let set_bn = |bn: &mut BnState, field: &str, data: Vec<f32>| -> Result<()> {
            match field {
                "gamma" => bn.gamma.data_mut().copy_from_slice(&data),
                "beta" => bn.beta.data_mut().copy_from_slice(&data),
                "running_mean" => bn.running_mean = data,
                "running_var" => bn.running_var = data,
                _ => return Err(Error::Format(format!("unknown batch-norm field {field}"))),
            }
            Ok(())
        };
        match (head, field) {
            ("stem.conv", "weight") => set_t(&mut self.stem.weight, data),
            ("head", "weight") => set_t(&mut self.head.weight, data),
            ("head", "bias") => set_t(&mut self.head.bias, data),
            ("stem.bn", f) => set_bn(&mut self.stem.bn, f, data)?,
            _ => {
                let rest = head.strip_prefix("block").ok_or_else(bad)?;
                let (l, rest) = rest.split_once('.').ok_or_else(bad)?;
                let l: usize = l.parse().map_err(|_| bad())?;
                let block = self.blocks.get_mut(l).ok_or_else(bad)?;
                let parts: Vec<&str> = rest.split('.').collect();
                match parts[..] {
                    ["expand"] if field == "weight" => {
                        set_t(&mut block.expand.as_mut().ok_or_else(bad)?.weight, data)
                    }
                    ["expand", "bn"] => {
                        set_bn(&mut block.expand.as_mut().ok_or_else(bad)?.bn, field, data)?
                    }
                    ["project"] if field == "weight" => {
                        set_t(block.project.as_mut().ok_or_else(bad)?, data)
                    }
                    ["sbn", key] => {
                        let k: u32 = key.parse().map_err(|_| bad())?;
                        set_bn(block.bank.get_mut(SbnKey(k))?, field, data)?
                    }
                    [path] if field == "weight" => {
                        let j = parse_path(path).ok_or_else(bad)?;
                        set_t(&mut block.paths.get_mut(j).ok_or_else(bad)?.weight, data)
                    }
                    [path, "bn"] => {
                        let j = parse_path(path).ok_or_else(bad)?;
                        set_bn(&mut block.paths.get_mut(j).ok_or_else(bad)?.bn, field, data)?
                    }
                    _ => return Err(bad()),
                }
            }
        }
        Ok(())
    }
}

fn parse_path(s: &str) -> Option<usize> {
    s.strip_prefix("path")?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::space::SbnMode;

    #[test]
    fn round_trip_is_lossless() {
        for mode in [SbnMode::Vanilla, SbnMode::Linear, SbnMode::Exponential] {
            let spec = SearchSpaceSpec::micro().with_sbn_mode(mode);
            let mut net = Supernet::new(&spec, &mut stream(9, "init")).unwrap();
            net.blocks[2].bank.iter_mut().for_each(|(k, st)| {
                st.running_mean[0] = k.0 as f32 + 0.25;
            });
            let mut buf = Vec::new();
            net.save(&mut buf, "abc123").unwrap();
            let (back, fp) = Supernet::load(&buf[..], &spec).unwrap();
            assert_eq!(fp, "abc123");
            assert_eq!(back, net);
        }
    }

    #[test]
    fn header_layout() {
        let e = vec![Entry {
            name: "x".into(),
            shape: vec![2],
            data: vec![1.0, -2.0],
        }];
        let mut buf = Vec::new();
        write_entries(&mut buf, &e).unwrap();
        assert_eq!(&buf[..4], b"MXPT");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..14], &1u16.to_le_bytes());
        assert_eq!(buf[14], b'x');
        assert_eq!(buf[15], 1);
        assert_eq!(&buf[16..20], &2u32.to_le_bytes());
        assert_eq!(&buf[20..24], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 28);
        assert_eq!(read_entries(&buf[..]).unwrap(), e);
    }

    #[test]
    fn rejects_corruption_and_mismatch() {
        let spec = SearchSpaceSpec::micro();
        let net = Supernet::new(&spec, &mut stream(9, "init")).unwrap();
        let mut buf = Vec::new();
        net.save(&mut buf, "f").unwrap();
        assert!(Supernet::load(&buf[..buf.len() - 1], &spec).is_err());
        let mut bad = buf.clone();
        bad[0] = b'N';
        assert!(Supernet::load(&bad[..], &spec).is_err());
        let other = spec.clone().with_sbn_mode(SbnMode::Exponential);
        assert!(Supernet::load(&buf[..], &other).is_err());
    }

    #[test]
    fn sbn_entries_are_keyed() {
        let spec = SearchSpaceSpec::micro();
        let net = Supernet::new(&spec, &mut stream(9, "init")).unwrap();
        let names: Vec<String> = net.to_entries().into_iter().map(|e| e.name).collect();
        assert!(names.contains(&"block3.sbn.2.running_var".to_string()));
        assert!(names.contains(&"block0.sbn.1.gamma".to_string()));
    }
}
