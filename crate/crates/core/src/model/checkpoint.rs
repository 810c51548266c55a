//! Binary checkpoints: magic, format version, dimensions, vocabulary and
//! label inventories, then every tensor as little-endian `f64`.

use std::path::Path;

use super::params::{Dims, ModelParams};
use super::text::Vocab;
use crate::corpus::LabelInventory;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"COHRCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Trained parameters together with the inventories that give their
/// indices meaning.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub vocab: Vocab,
    pub drr_labels: LabelInventory,
    pub prepositions: LabelInventory,
    pub params: ModelParams,
}

impl Model {
    /// Randomly initialised model sized to the given inventories.
    pub fn init(
        vocab: Vocab,
        drr_labels: LabelInventory,
        prepositions: LabelInventory,
        embed: usize,
        hidden: usize,
        biaffine: usize,
        seed: u64,
    ) -> Result<Self> {
        let dims = Dims {
            vocab: vocab.len(),
            embed,
            hidden,
            biaffine,
            drr_labels: drr_labels.len(),
            prepositions: prepositions.len(),
        };
        let params = ModelParams::init(dims, seed)?;
        let model = Model {
            vocab,
            drr_labels,
            prepositions,
            params,
        };
        model.check_consistent()?;
        Ok(model)
    }

    pub fn dims(&self) -> Dims {
        self.params.dims
    }

    fn check_consistent(&self) -> Result<()> {
        let d = self.params.dims;
        if d.vocab != self.vocab.len() || d.drr_labels != self.drr_labels.len() || d.prepositions != self.prepositions.len() {
            return Err(Error::Dimension(format!(
                "dims {d:?} disagree with inventories (vocab {}, drr {}, prepositions {})",
                self.vocab.len(),
                self.drr_labels.len(),
                self.prepositions.len()
            )));
        }
        self.params.check_dims(&d)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check_consistent()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let d = self.params.dims;
        for v in [d.vocab, d.embed, d.hidden, d.biaffine, d.drr_labels, d.prepositions] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for list in [self.vocab.tokens(), self.drr_labels.labels(), self.prepositions.labels()] {
            out.extend_from_slice(&(list.len() as u64).to_le_bytes());
            for s in list {
                out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
        for (_, _, t) in self.params.tensors() {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let mut dv = [0usize; 6];
        for v in &mut dv {
            *v = r.len()?;
        }
        let dims = Dims {
            vocab: dv[0],
            embed: dv[1],
            hidden: dv[2],
            biaffine: dv[3],
            drr_labels: dv[4],
            prepositions: dv[5],
        };
        let mut lists = Vec::new();
        for _ in 0..3 {
            let n = r.len()?;
            let mut list = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let len = r.len()?;
                let s = std::str::from_utf8(r.take(len)?)
                    .map_err(|_| Error::Checkpoint("label is not UTF-8".into()))?;
                list.push(s.to_string());
            }
            lists.push(list);
        }
        let prepositions = LabelInventory::new(lists.pop().expect("three lists"))?;
        let drr_labels = LabelInventory::new(lists.pop().expect("three lists"))?;
        let vocab = Vocab::from_tokens(lists.pop().expect("three lists"));

        let mut params = ModelParams::zeros(dims);
        for (_, dst) in params.tensors_mut() {
            let n = r.len()?;
            if n != dst.len() {
                return Err(Error::Dimension(format!("tensor has {n} values, expected {}", dst.len())));
            }
            let raw = r.take(n.checked_mul(8).ok_or_else(truncated)?)?;
            for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(8)) {
                *d = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let model = Model {
            vocab,
            drr_labels,
            prepositions,
            params,
        };
        model.check_consistent()?;
        Ok(model)
    }
}

fn truncated() -> Error {
    Error::Checkpoint("truncated checkpoint".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or_else(truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| truncated())
    }
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = model.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::from_bytes(&bytes)
}

/// Loads a checkpoint and fails unless its sizes equal `expected`.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, expected: &Dims) -> Result<Model> {
    let model = load_checkpoint(path)?;
    model.params.check_dims(expected)?;
    Ok(model)
}
