//! Policy checkpoint files.
//!
//! All integers little-endian:
//!
//! ```text
//! magic        4 bytes  "ABMT"
//! version      u32      1
//! variant      u8       0 = mappo, 1 = ab-mappo
//! fingerprint  32 bytes SHA-256 of the canonical scenario JSON
//! hidden       u32
//! embed_dim    u32
//! heads        u32
//! count        u32      number of tensor records
//! record       name_len u32, name (UTF-8), rank u32, dims u32 × rank, f32 × Π dims
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use tending_core::marl::{NetConfig, PolicyBundle, TrainError, Variant};
use tending_core::nn::{NnError, Tensor};
use tending_core::{Scenario, ScenarioConfig};

use crate::config::canonical_scenario_json;
use crate::CliError;

pub const MAGIC: [u8; 4] = *b"ABMT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("magic: expected \"ABMT\", found {found:?}")]
    Magic { found: Vec<u8> },
    #[error("version: unsupported format version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("variant: unknown tag {found}")]
    Variant { found: u8 },
    #[error("truncated: file ends inside `{field}`")]
    Truncated { field: &'static str },
    #[error("fingerprint: checkpoint was trained on a different scenario")]
    Fingerprint,
    #[error("tensor name: not valid UTF-8")]
    Name,
    #[error("unknown tensor `{name}`")]
    UnknownTensor { name: String },
    #[error("tensor `{name}`: {source}")]
    Tensor { name: String, source: NnError },
    #[error("missing tensor `{name}`")]
    MissingTensor { name: String },
    #[error("trailing bytes: {count} unread bytes after the last tensor")]
    Trailing { count: usize },
    #[error("network: {0}")]
    Network(#[from] TrainError),
}

pub fn fingerprint(scenario: &ScenarioConfig) -> [u8; 32] {
    Sha256::digest(canonical_scenario_json(scenario)).into()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn len_u32(n: usize) -> u32 {
    u32::try_from(n).expect("checkpoint field exceeds u32")
}

/// Serializes the bundle's parameters as 32-bit floats.
pub fn encode(bundle: &PolicyBundle, scenario: &ScenarioConfig) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    out.push(bundle.variant().tag());
    out.extend_from_slice(&fingerprint(scenario));
    let net = bundle.net();
    for v in [net.hidden, net.embed_dim, net.heads] {
        put_u32(&mut out, len_u32(v));
    }
    let store = bundle.store();
    put_u32(&mut out, len_u32(store.len()));
    for (name, t) in store.iter() {
        put_u32(&mut out, len_u32(name.len()));
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, len_u32(t.rank()));
        for &d in t.shape() {
            put_u32(&mut out, len_u32(d));
        }
        for x in t.to_f32() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated { field })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, CheckpointError> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a checkpoint and rebuilds the bundle for `scenario`.
pub fn decode(bytes: &[u8], scenario: &Scenario) -> Result<PolicyBundle, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::Magic { found: magic.to_vec() });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let tag = r.take(1, "variant")?[0];
    let variant = Variant::from_tag(tag).ok_or(CheckpointError::Variant { found: tag })?;
    if r.take(32, "fingerprint")? != fingerprint(scenario.config()) {
        return Err(CheckpointError::Fingerprint);
    }
    let net = NetConfig {
        hidden: r.u32("hidden")? as usize,
        embed_dim: r.u32("embed_dim")? as usize,
        heads: r.u32("heads")? as usize,
        ..NetConfig::default()
    };
    let mut bundle = PolicyBundle::new(scenario, variant, net, 0)?;
    let count = r.u32("count")? as usize;
    let mut seen = vec![false; bundle.store().len()];
    for _ in 0..count {
        let name_len = r.u32("name_len")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?).map_err(|_| CheckpointError::Name)?;
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(
            n.checked_mul(4).ok_or(CheckpointError::Truncated { field: "data" })?,
            "data",
        )?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let id = bundle
            .store()
            .id_of(name)
            .ok_or_else(|| CheckpointError::UnknownTensor { name: name.to_owned() })?;
        let tensor_err = |source| CheckpointError::Tensor {
            name: name.to_owned(),
            source,
        };
        let t = Tensor::from_f32(shape, &data).map_err(tensor_err)?;
        bundle.store_mut().assign(name, t).map_err(tensor_err)?;
        seen[id.0] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(CheckpointError::MissingTensor {
            name: bundle.store().name(tending_core::nn::ParamId(i)).to_owned(),
        });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing {
            count: bytes.len() - r.pos,
        });
    }
    Ok(bundle)
}

pub fn save(path: &Path, bundle: &PolicyBundle, scenario: &ScenarioConfig) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    std::fs::write(path, encode(bundle, scenario)).map_err(CliError::io(path))
}

pub fn load(path: &Path, scenario: &Scenario) -> Result<PolicyBundle, CliError> {
    if !path.is_file() {
        return Err(CliError::MissingFile {
            flag: "--checkpoint",
            path: path.to_path_buf(),
        });
    }
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    decode(&bytes, scenario).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(variant: Variant) -> (Scenario, PolicyBundle) {
        let sc = Scenario::new(ScenarioConfig::default()).unwrap();
        let net = NetConfig {
            hidden: 8,
            embed_dim: 4,
            heads: 2,
            ..NetConfig::default()
        };
        let mut b = PolicyBundle::new(&sc, variant, net, 11).unwrap();
        b.store_mut().round_to_f32();
        (sc, b)
    }

    #[test]
    fn roundtrip_is_exact_at_f32() {
        for v in [Variant::FlatMlp, Variant::Attention] {
            let (sc, b) = bundle(v);
            let bytes = encode(&b, sc.config());
            let back = decode(&bytes, &sc).unwrap();
            assert_eq!(back, b);
            assert_eq!(encode(&back, sc.config()), bytes);
        }
    }

    #[test]
    fn every_prefix_is_truncated() {
        let (sc, b) = bundle(Variant::FlatMlp);
        let bytes = encode(&b, sc.config());
        for cut in [3, 7, 8, 40, 45, 53, 60, bytes.len() - 1] {
            let err = decode(&bytes[..cut], &sc).unwrap_err();
            assert!(matches!(err, CheckpointError::Truncated { .. }), "{cut}: {err}");
        }
    }

    #[test]
    fn header_fields_are_named() {
        let (sc, b) = bundle(Variant::FlatMlp);
        let bytes = encode(&b, sc.config());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, &sc).unwrap_err().to_string().starts_with("magic"));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad, &sc), Err(CheckpointError::Version { found: 9 })));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(decode(&bad, &sc), Err(CheckpointError::Variant { found: 7 })));
        let mut bad = bytes;
        bad.push(0);
        assert!(matches!(decode(&bad, &sc), Err(CheckpointError::Trailing { count: 1 })));
    }

    #[test]
    fn other_scenario_is_rejected() {
        let (sc, b) = bundle(Variant::Attention);
        let bytes = encode(&b, sc.config());
        let two = Scenario::new(ScenarioConfig {
            n_agents: 2,
            ..ScenarioConfig::default()
        })
        .unwrap();
        assert!(matches!(decode(&bytes, &two), Err(CheckpointError::Fingerprint)));
    }

    #[test]
    fn unknown_tensor_is_named() {
        let (sc, b) = bundle(Variant::FlatMlp);
        let mut bytes = encode(&b, sc.config());
        // first record name starts after the 57-byte header and its 4-byte length
        let first = 57 + 4;
        bytes[first] = b'X';
        let err = decode(&bytes, &sc).unwrap_err();
        assert!(
            matches!(err, CheckpointError::UnknownTensor { ref name } if name.starts_with('X')),
            "{err}"
        );
    }
}
