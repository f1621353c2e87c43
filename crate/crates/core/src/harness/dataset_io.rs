//! Dataset container: `frames.bin` plus a `manifest.txt` sidecar.
//!
//! `frames.bin` layout (little endian):
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 8 | magic `RISAMCDS` |
//! | 8 | 4 | format version (u32, currently 1) |
//! | 12 | 4 | record count (u32) |
//! | 16 | 4 | complex samples per record (u32) |
//! | 20 | … | records: interleaved I, Q as f32 |
//!
//! The manifest is `key = value` text. Besides the dataset specification it
//! holds one `record = <index> <label> <synthesis seed> <impairment seed>
//! <partition> <rms>` line per record. Floats are written in shortest
//! round-trip form so reading back is exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::impairments::{Dataset, DatasetSpec, ImpairmentProfile, Partition, Record};
use crate::sigsynth::{LabeledFrame, ModulationScheme, ShapingConfig, FRAME_LEN};

pub const DATASET_MAGIC: &[u8; 8] = b"RISAMCDS";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const FRAMES_FILE: &str = "frames.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Write the container files into `dir` (created if missing).
pub fn write_dataset(dir: &Path, dataset: &Dataset, spec_hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(FRAMES_FILE))?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(dataset.records.len() as u32).to_le_bytes())?;
    w.write_all(&(FRAME_LEN as u32).to_le_bytes())?;
    for (i, r) in dataset.records.iter().enumerate() {
        if r.frame.samples.len() != FRAME_LEN {
            return Err(Error::Format(format!("record {i} has {} samples", r.frame.samples.len())));
        }
        for z in &r.frame.samples {
            w.write_all(&(z.re as f32).to_le_bytes())?;
            w.write_all(&(z.im as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    fs::write(dir.join(MANIFEST_FILE), manifest_text(dataset, spec_hash))?;
    Ok(())
}

fn manifest_text(d: &Dataset, spec_hash: &str) -> String {
    let s = &d.spec;
    let p = &s.profile;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    kv("format", "ris-amc-dataset".into());
    kv("version", DATASET_VERSION.to_string());
    kv("spec_hash", spec_hash.into());
    kv("master_seed", s.master_seed.to_string());
    kv("frames_per_class", s.frames_per_class.to_string());
    kv("split", format!("{:?},{:?},{:?}", s.split[0], s.split[1], s.split[2]));
    kv("snr_db", format!("{:?}", p.snr_db));
    kv("rician_k", format!("{:?}", p.rician_k));
    kv("max_doppler_hz", format!("{:?}", p.max_doppler_hz));
    kv("clock_offset_ppm", format!("{:?}", p.clock_offset_ppm));
    kv("carrier_freq_hz", format!("{:?}", p.carrier_freq_hz));
    kv("sample_rate_hz", format!("{:?}", p.sample_rate_hz));
    kv("samples_per_symbol", s.shaping.samples_per_symbol.to_string());
    kv("rolloff", format!("{:?}", s.shaping.rolloff));
    kv("filter_span_symbols", s.shaping.filter_span_symbols.to_string());
    kv("records", d.records.len().to_string());
    for scheme in ModulationScheme::ALL {
        let n = d.records.iter().filter(|r| r.frame.label == scheme).count();
        kv("class", format!("{scheme} {n}"));
    }
    for (i, r) in d.records.iter().enumerate() {
        kv(
            "record",
            format!(
                "{i} {} {} {} {} {:?}",
                r.frame.label,
                r.frame.seed,
                r.impairment_seed,
                r.partition.name(),
                r.frame.rms
            ),
        );
    }
    out
}

/// Parsed manifest: single-valued keys plus the ordered record lines.
pub struct Manifest {
    pub fields: BTreeMap<String, String>,
    pub records: Vec<String>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "record" => records.push(v.to_string()),
                "class" => {}
                _ => {
                    fields.insert(k.to_string(), v.to_string());
                }
            }
        }
        Ok(Self { fields, records })
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("manifest is missing {key:?}")))
    }

    pub fn parse_field<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Format(format!("manifest field {key:?} has invalid value {v:?}")))
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("invalid {what} {s:?}")))
}

/// Read a container written by [`write_dataset`]. Returns the dataset and
/// the spec hash recorded in its manifest.
pub fn read_dataset(dir: &Path) -> Result<(Dataset, String)> {
    let manifest = Manifest::parse(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.get("format")? != "ris-amc-dataset" {
        return Err(Error::BadMagic {
            expected: "ris-amc-dataset".into(),
            found: manifest.get("format")?.into(),
        });
    }
    let bytes = fs::read(dir.join(FRAMES_FILE))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("frames file shorter than its header".into()));
    }
    if &bytes[..8] != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(DATASET_MAGIC).into(),
            found: String::from_utf8_lossy(&bytes[..8]).into(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(8);
    if version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "dataset",
            expected: DATASET_VERSION,
            found: version,
        });
    }
    let count = u32_at(12) as usize;
    let per = u32_at(16) as usize;
    if per != FRAME_LEN {
        return Err(Error::Format(format!("records hold {per} samples, expected {FRAME_LEN}")));
    }
    if manifest.records.len() != count {
        return Err(Error::CountMismatch {
            manifest: manifest.records.len(),
            records: count,
        });
    }
    let record_bytes = per * 8;
    let body = &bytes[HEADER_LEN..];
    if body.len() < count * record_bytes {
        return Err(Error::TruncatedRecord {
            index: body.len() / record_bytes,
        });
    }
    if body.len() > count * record_bytes {
        return Err(Error::Format("trailing bytes after the last record".into()));
    }

    let split: Vec<f64> = manifest
        .get("split")?
        .split(',')
        .map(|s| parse(s.trim(), "split fraction"))
        .collect::<Result<_>>()?;
    let split: [f64; 3] = split
        .try_into()
        .map_err(|_| Error::Format("split needs three fractions".into()))?;
    let spec = DatasetSpec {
        frames_per_class: manifest.parse_field("frames_per_class")?,
        split,
        profile: ImpairmentProfile {
            snr_db: manifest.parse_field("snr_db")?,
            rician_k: manifest.parse_field("rician_k")?,
            max_doppler_hz: manifest.parse_field("max_doppler_hz")?,
            clock_offset_ppm: manifest.parse_field("clock_offset_ppm")?,
            carrier_freq_hz: manifest.parse_field("carrier_freq_hz")?,
            sample_rate_hz: manifest.parse_field("sample_rate_hz")?,
        },
        shaping: ShapingConfig {
            samples_per_symbol: manifest.parse_field("samples_per_symbol")?,
            rolloff: manifest.parse_field("rolloff")?,
            filter_span_symbols: manifest.parse_field("filter_span_symbols")?,
        },
        master_seed: manifest.parse_field("master_seed")?,
    };

    let mut records = Vec::with_capacity(count);
    for (i, line) in manifest.records.iter().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 || parse::<usize>(f[0], "record index")? != i {
            return Err(Error::Format(format!("malformed record line {i}: {line:?}")));
        }
        let raw = &body[i * record_bytes..(i + 1) * record_bytes];
        let samples = raw
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
                let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        records.push(Record {
            frame: LabeledFrame {
                samples,
                label: parse(f[1], "label")?,
                seed: parse(f[2], "seed")?,
                rms: parse(f[5], "rms")?,
            },
            impairment_seed: parse(f[3], "impairment seed")?,
            partition: Partition::parse(f[4])?,
        });
    }
    Ok((Dataset { spec, records }, manifest.get("spec_hash")?.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impairments::generate_dataset;

    fn small() -> Dataset {
        generate_dataset(&DatasetSpec {
            frames_per_class: 20,
            master_seed: 3,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let d = small();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &d, "abc").unwrap();
        let (back, hash) = read_dataset(dir.path()).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(back, d);
        let size = fs::metadata(dir.path().join(FRAMES_FILE)).unwrap().len() as usize;
        assert_eq!(size, HEADER_LEN + 100 * FRAME_LEN * 8);
    }

    #[test]
    fn truncated_file_reports_record() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &small(), "h").unwrap();
        let path = dir.path().join(FRAMES_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..HEADER_LEN + 37 * FRAME_LEN * 8 + 100]).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::TruncatedRecord { index: 37 })));
    }

    #[test]
    fn bad_magic_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &small(), "h").unwrap();
        let path = dir.path().join(FRAMES_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[12..16].copy_from_slice(&99u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(Error::CountMismatch { manifest: 100, records: 99 })
        ));
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::BadMagic { .. })));
    }
}
