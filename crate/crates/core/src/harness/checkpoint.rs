//! Model checkpoint container.
//!
//! Layout (little endian; `str` is a u32 byte length then UTF-8 bytes):
//!
//! ```text
//! magic        8 bytes  "RISAMCCK"
//! version      u32      1
//! architecture str      e.g. "input=2x2048 pool=2 classes=5 blocks=16k8,24k8 head=average"
//! metadata     str      "key = value" lines (seed, spec hash, best epoch)
//! tensors      u32 count, then per tensor:
//!                str name, u32 rank, u32 dims[rank], f32 values
//! history      u32 count, then per epoch:
//!                u32 epoch, u32 iterations, f64 learning rate,
//!                f64 train loss, f64 train accuracy, f64 val loss, f64 val accuracy
//! ```
//!
//! Tensors are the trainable parameters in model order followed by
//! `block{i}.bn.running_mean` and `block{i}.bn.running_var` for every block.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::cnn::{Architecture, BnStats, ConvSpec, EpochRecord, Head, Model, Param, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RISAMCCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub metadata: BTreeMap<String, String>,
}

pub fn architecture_descriptor(a: &Architecture) -> String {
    let blocks: Vec<String> = a.blocks.iter().map(|b| format!("{}k{}", b.filters, b.kernel)).collect();
    format!(
        "input={}x{} pool={} classes={} blocks={} head={}",
        a.input_channels,
        a.input_len,
        a.pool,
        a.classes,
        blocks.join(","),
        match a.head {
            Head::Flatten => "flatten",
            Head::GlobalAverage => "average",
        }
    )
}

pub fn parse_architecture(s: &str) -> Result<Architecture> {
    let bad = || Error::Format(format!("invalid architecture descriptor {s:?}"));
    let mut fields = BTreeMap::new();
    for part in s.split_whitespace() {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        fields.insert(k, v);
    }
    let num = |v: &str| v.parse::<usize>().map_err(|_| bad());
    let (ch, len) = fields.get("input").ok_or_else(bad)?.split_once('x').ok_or_else(bad)?;
    let blocks = match *fields.get("blocks").ok_or_else(bad)? {
        "" => Vec::new(),
        b => b
            .split(',')
            .map(|spec| {
                let (f, k) = spec.split_once('k').ok_or_else(bad)?;
                Ok(ConvSpec {
                    filters: num(f)?,
                    kernel: num(k)?,
                })
            })
            .collect::<Result<_>>()?,
    };
    Ok(Architecture {
        input_channels: num(ch)?,
        input_len: num(len)?,
        blocks,
        pool: num(fields.get("pool").ok_or_else(bad)?)?,
        head: match fields.get("head").copied() {
            None | Some("flatten") => Head::Flatten,
            Some("average") => Head::GlobalAverage,
            Some(_) => return Err(bad()),
        },
        classes: num(fields.get("classes").ok_or_else(bad)?)?,
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensor(&mut self, name: &str, shape: &[usize], values: &[f32]) {
        self.str(name);
        self.u32(shape.len());
        shape.iter().for_each(|&d| self.u32(d));
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8 in checkpoint".into()))
    }
    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f32>)> {
        let name = self.str()?;
        let rank = self.u32()?;
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok((name, shape, values))
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let m = &ck.model;
    let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
    w.u32(CHECKPOINT_VERSION as usize);
    w.str(&architecture_descriptor(m.architecture()));
    let meta: String = ck.metadata.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    w.str(&meta);
    w.u32(m.params().len() + 2 * m.bn_stats().len());
    for p in m.params() {
        w.tensor(&p.name, p.value.shape(), p.value.values());
    }
    for (i, s) in m.bn_stats().iter().enumerate() {
        w.tensor(&format!("block{i}.bn.running_mean"), &[s.mean.len()], &s.mean);
        w.tensor(&format!("block{i}.bn.running_var"), &[s.var.len()], &s.var);
    }
    w.u32(m.history.len());
    for r in &m.history {
        w.u32(r.epoch);
        w.u32(r.iterations);
        for v in [r.learning_rate, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy] {
            w.f64(v);
        }
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into(),
            found: String::from_utf8_lossy(magic).into(),
        });
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "checkpoint",
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let arch = parse_architecture(&r.str()?)?;
    let mut metadata = BTreeMap::new();
    for line in r.str()?.lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            metadata.insert(k.to_string(), v.to_string());
        }
    }
    let count = r.u32()?;
    let n_params = arch.param_shapes().len();
    if count != n_params + 2 * arch.blocks.len() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint holds {count} tensors, architecture needs {}",
            n_params + 2 * arch.blocks.len()
        )));
    }
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let (name, shape, values) = r.tensor()?;
        params.push(Param {
            name,
            value: Tensor::from_vec(&shape, values)?,
        });
    }
    let mut bn = Vec::with_capacity(arch.blocks.len());
    for i in 0..arch.blocks.len() {
        let (n1, _, mean) = r.tensor()?;
        let (n2, _, var) = r.tensor()?;
        if n1 != format!("block{i}.bn.running_mean") || n2 != format!("block{i}.bn.running_var") {
            return Err(Error::Format(format!("unexpected batchnorm tensors {n1:?}, {n2:?}")));
        }
        bn.push(BnStats { mean, var });
    }
    let epochs = r.u32()?;
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        history.push(EpochRecord {
            epoch: r.u32()?,
            iterations: r.u32()?,
            learning_rate: r.f64()?,
            train_loss: r.f64()?,
            train_accuracy: r.f64()?,
            val_loss: r.f64()?,
            val_accuracy: r.f64()?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint {
        model: Model::from_parts(arch, params, bn, history)?,
        metadata,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode(ck))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut model = Model::<f32>::build(Architecture::with_filters(&[4, 6], 5), 9).unwrap();
        model.bn_stats_mut()[1].mean[2] = 0.123;
        model.history.push(EpochRecord {
            epoch: 1,
            iterations: 78,
            learning_rate: 0.02,
            train_loss: 1.5,
            train_accuracy: 0.4,
            val_loss: 1.2,
            val_accuracy: 0.5,
        });
        let mut metadata = BTreeMap::new();
        metadata.insert("seed".into(), "4".into());
        Checkpoint { model, metadata }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        assert_eq!(decode(&encode(&ck)).unwrap(), ck);
        let default = Checkpoint {
            model: Model::build(Architecture::default(), 0).unwrap(),
            metadata: BTreeMap::new(),
        };
        assert_eq!(decode(&encode(&default)).unwrap(), default);
    }

    #[test]
    fn descriptor_round_trip() {
        let a = Architecture::default();
        assert_eq!(parse_architecture(&architecture_descriptor(&a)).unwrap(), a);
        assert!(parse_architecture("input=2 pool=2").is_err());
        let avg = Architecture {
            head: Head::GlobalAverage,
            ..Architecture::with_filters(&[4], 3)
        };
        assert_eq!(parse_architecture(&architecture_descriptor(&avg)).unwrap(), avg);
        let old = parse_architecture("input=2x2048 pool=2 classes=5 blocks=4k3").unwrap();
        assert_eq!(old.head, Head::Flatten);
        assert!(parse_architecture("input=2x2048 pool=2 classes=5 blocks=4k3 head=max").is_err());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = encode(&sample());
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'x';
        assert!(matches!(decode(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes;
        bad[8] = 7;
        assert!(matches!(decode(&bad), Err(Error::UnsupportedVersion { .. })));
    }
}
