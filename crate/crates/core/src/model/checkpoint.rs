//! Binary checkpoint container.
//!
//! ```text
//! magic        8 bytes   "SPKNMT\0\0"
//! version      u32 LE
//! header_len   u64 LE
//! header       JSON (CheckpointHeader)
//! n_tensors    u32 LE
//! per tensor:  u32 name_len, name (UTF-8), u32 ndim, ndim × u64 dims,
//!              prod(dims) × f32 LE
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{SpeakerTable, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::config::{AdaptationMode, ModelConfig};
use super::seq2seq::Seq2Seq;

pub const MAGIC: &[u8; 8] = b"SPKNMT\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub mode: AdaptationMode,
    pub model: ModelConfig,
    pub src_vocab_hash: String,
    pub trg_vocab_hash: String,
    pub speakers: Vec<String>,
    pub speakers_hash: String,
    /// Free-form run configuration of the producing invocation.
    #[serde(default)]
    pub run_config: serde_json::Value,
}

impl CheckpointHeader {
    pub fn new(
        model: &ModelConfig,
        src: &Vocabulary,
        trg: &Vocabulary,
        speakers: &SpeakerTable,
        run_config: serde_json::Value,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            mode: model.mode,
            model: model.clone(),
            src_vocab_hash: src.content_hash(),
            trg_vocab_hash: trg.content_hash(),
            speakers: speakers.names().to_vec(),
            speakers_hash: speakers.content_hash(),
            run_config,
        }
    }

    /// Refuses vocabularies or speaker tables other than the ones trained with.
    pub fn verify(
        &self,
        src: &Vocabulary,
        trg: &Vocabulary,
        speakers: &SpeakerTable,
    ) -> Result<()> {
        let checks = [
            ("source vocabulary", &self.src_vocab_hash, src.content_hash()),
            ("target vocabulary", &self.trg_vocab_hash, trg.content_hash()),
            ("speaker table", &self.speakers_hash, speakers.content_hash()),
        ];
        for (what, stored, actual) in checks {
            if *stored != actual {
                return Err(Error::Checkpoint(format!(
                    "{what} hash mismatch: checkpoint has {stored}, given {actual}"
                )));
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint<R: Real>(
    path: impl AsRef<Path>,
    model: &Seq2Seq<R>,
    header: &CheckpointHeader,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let json = serde_json::to_vec(header)?;
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (_, p) in model.params.iter() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        let shape = p.value.shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in p.value.data() {
            buf.extend_from_slice(&(x.f64() as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

/// Reads the header only.
pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    parse_header(&mut r)
}

fn parse_header(r: &mut Reader<'_>) -> Result<CheckpointHeader> {
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let n = r.len()?;
    let header: CheckpointHeader = serde_json::from_slice(r.take(n)?)?;
    header.model.validate()?;
    Ok(header)
}

/// Loads a checkpoint, rebuilding the architecture from the stored config and
/// overwriting every tensor. Names and shapes must match exactly.
pub fn load_checkpoint<R: Real>(path: impl AsRef<Path>) -> Result<(Seq2Seq<R>, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    let header = parse_header(&mut r)?;
    let mut model = Seq2Seq::<R>::init(header.model.clone(), 0)?;
    let count = r.u32()? as usize;
    if count != model.params.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            model.params.len()
        )));
    }
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_owned();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let id = model
            .params
            .find(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name:?}")))?;
        if model.params.value(id).shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor {name:?} has shape {shape:?}, expected {:?}",
                model.params.value(id).shape()
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| R::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        *model.params.value_mut(id) = Tensor::new(shape, data)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok((model, header))
}

/// Loads and checks the vocabularies and speaker table against the header.
pub fn load_verified<R: Real>(
    path: impl AsRef<Path>,
    src: &Vocabulary,
    trg: &Vocabulary,
    speakers: &SpeakerTable,
) -> Result<Seq2Seq<R>> {
    let (model, header) = load_checkpoint(path)?;
    header.verify(src, trg, speakers)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        let sents: Vec<Vec<String>> = vec![words.iter().map(|w| w.to_string()).collect(); 2];
        Vocabulary::build(sents.iter().map(|s| s.as_slice()), 100, 1).unwrap()
    }

    #[test]
    fn round_trip_and_hash_refusal() {
        let src = vocab(&["a", "b"]);
        let trg = vocab(&["x", "y", "z"]);
        let spk = SpeakerTable::new(["ann", "bob"]);
        let cfg = ModelConfig::small(4, src.len(), trg.len(), 2, AdaptationMode::FactBias).with_rank(2);
        let m = Seq2Seq::<f32>::init(cfg.clone(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let h = CheckpointHeader::new(&cfg, &src, &trg, &spk, serde_json::json!({"seed": 9}));
        save_checkpoint(&p, &m, &h).unwrap();

        let back: Seq2Seq<f32> = load_verified(&p, &src, &trg, &spk).unwrap();
        assert!(back.params.values_equal(&m.params));
        assert_eq!(read_header(&p).unwrap(), h);

        let other = vocab(&["x", "y", "w"]);
        let err = load_verified::<f32>(&p, &src, &other, &spk).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
        assert!(load_verified::<f32>(&p, &src, &trg, &SpeakerTable::new(["ann"])).is_err());
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad");
        fs::write(&p, b"hello world, definitely not a model").unwrap();
        assert!(load_checkpoint::<f32>(&p).is_err());

        let src = vocab(&["a"]);
        let spk = SpeakerTable::new(["s"]);
        let cfg = ModelConfig::small(4, src.len(), src.len(), 1, AdaptationMode::Base);
        let m = Seq2Seq::<f32>::init(cfg.clone(), 1).unwrap();
        let h = CheckpointHeader::new(&cfg, &src, &src, &spk, serde_json::Value::Null);
        save_checkpoint(&p, &m, &h).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_checkpoint::<f32>(&p).is_err());
    }
}
