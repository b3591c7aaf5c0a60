//! Binary model files.
//!
//! Layout (little-endian): magic `STNM`, format version `u16`, `u32` length
//! and UTF-8 JSON metadata, `u32` parameter count, then per parameter its
//! `u32`-prefixed name, trainable flag byte, `u32` rank, `u32` extents and
//! `f32` values; finally a CRC-32 of everything before it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, Network, TaskSetup, TrainedModel, TrainingMeta};
use crate::data::Vocab;
use crate::error::{Error, LoadError, Result};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: [u8; 4] = *b"STNM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    setup: TaskSetup,
    words: Option<Vocab>,
    chars: Option<Vocab>,
    seed: u64,
    training: TrainingMeta,
    #[serde(default)]
    run_config: BTreeMap<String, String>,
}

pub fn encode(model: &TrainedModel) -> Result<Vec<u8>> {
    let meta = Metadata {
        config: model.config.clone(),
        setup: model.setup.clone(),
        words: model.words.clone(),
        chars: model.chars.clone(),
        seed: model.seed,
        training: model.training.clone(),
        run_config: model.run_config.clone(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Contract(format!("metadata: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, json.len());
    out.extend_from_slice(&json);
    put_u32(&mut out, model.params.len());
    for (_, name, t, trainable) in model.params.iter() {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        out.push(trainable as u8);
        put_u32(&mut out, t.shape().len());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

/// Writes the container next to `path` and renames it into place, so a
/// reader never sees a half-written file.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], LoadError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(LoadError::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, LoadError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Checks magic, checksum and version before parsing anything, so a damaged
/// file is rejected whole.
pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < MAGIC.len() {
        return Err(LoadError::Truncated.into());
    }
    if bytes[..4] != MAGIC {
        return Err(LoadError::BadMagic.into());
    }
    if bytes.len() < 4 + 2 + 4 {
        return Err(LoadError::Truncated.into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(LoadError::Checksum { stored, computed }.into());
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != FORMAT_VERSION {
        return Err(LoadError::Version {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let mut cur = Cursor {
        bytes: body,
        pos: 6,
    };
    let meta_len = cur.u32()?;
    let meta: Metadata = serde_json::from_slice(cur.take(meta_len)?)
        .map_err(|e| LoadError::Malformed(format!("metadata: {e}")))?;
    meta.config
        .validate()
        .map_err(|e| LoadError::Malformed(format!("configuration: {e}")))?;

    // Rebuild the parameter layout, then fill it from the file.
    let mut params = ParamStore::new();
    let words = meta
        .words
        .as_ref()
        .map(|v| Tensor::zeros([v.len().max(1), meta.config.hyper.d_w]));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Network::build(
        &meta.config,
        words,
        meta.chars.as_ref().map(Vocab::len),
        &mut params,
        &mut rng,
    )
    .map_err(|e| LoadError::Malformed(format!("layout: {e}")))?;
    let count = cur.u32()?;
    if count != params.len() {
        return Err(LoadError::Malformed(format!(
            "{count} parameters stored, {} expected",
            params.len()
        ))
        .into());
    }
    for _ in 0..count {
        let name_len = cur.u32()?;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| LoadError::Malformed("parameter name is not UTF-8".into()))?;
        let trainable = cur.take(1)?[0] != 0;
        let rank = cur.u32()?;
        let shape = (0..rank)
            .map(|_| cur.u32())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = cur.take(n.checked_mul(4).ok_or(LoadError::Truncated)?)?;
        let id = params
            .id(name)
            .ok_or_else(|| LoadError::Malformed(format!("unexpected parameter {name:?}")))?;
        let slot = params.get_mut(id);
        if slot.shape() != shape.as_slice() {
            return Err(LoadError::Malformed(format!(
                "parameter {name:?} has shape {shape:?}, layout expects {:?}",
                slot.shape()
            ))
            .into());
        }
        for (dst, chunk) in slot.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        if trainable != params.is_trainable(id) {
            return Err(
                LoadError::Malformed(format!("parameter {name:?} trainability differs")).into(),
            );
        }
    }
    if cur.pos != body.len() {
        return Err(LoadError::Malformed("trailing bytes after parameters".into()).into());
    }
    Ok(TrainedModel {
        config: meta.config,
        setup: meta.setup,
        words: meta.words,
        chars: meta.chars,
        params,
        net,
        seed: meta.seed,
        training: meta.training,
        run_config: meta.run_config,
    })
}
