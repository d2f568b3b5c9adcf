//! Checkpoint container.
//!
//! Layout: the 8-byte magic `KGBCKPT1`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then the entity table followed by the relation table
//! as row-major little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelKind, ModelParams};
use crate::error::{Error, Result};
use crate::kg::{split_vocab, RelationId, Triple, Vocabulary};

const MAGIC: &[u8; 8] = b"KGBCKPT1";
const FORMAT_VERSION: u32 = 1;

/// Hash of the vocabulary restricted to the entities and relations of the
/// training split, when those form an id prefix of the full vocabulary.
/// Lets a checkpoint trained on a raw benchmark score its corrected version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainPrefix {
    pub entities: usize,
    pub relations: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    tool_version: String,
    kind: ModelKind,
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    vocab_sha256: String,
    train_prefix: Option<TrainPrefix>,
    reciprocal: bool,
    transe_norm: String,
    dtype: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab_sha256: String,
    pub train_prefix: Option<TrainPrefix>,
    /// Relation rows `n/2..n` hold the inverses of rows `0..n/2`.
    pub reciprocal: bool,
}

impl Checkpoint {
    pub fn new(params: ModelParams, vocab: &Vocabulary, train: &[Triple], reciprocal: bool) -> Self {
        let (entities, relations) = split_vocab(train);
        let is_prefix = |ids: &std::collections::BTreeSet<u32>| ids.iter().enumerate().all(|(i, &id)| i as u32 == id);
        let train_prefix = (is_prefix(&entities) && is_prefix(&relations)).then(|| TrainPrefix {
            entities: entities.len(),
            relations: relations.len(),
            sha256: vocab.prefix_hash(entities.len(), relations.len()),
        });
        Checkpoint {
            params,
            vocab_sha256: vocab.hash(),
            train_prefix,
            reciprocal,
        }
    }

    /// Parameters laid out for `vocab`: either the stored tables when the
    /// vocabulary is the one trained on, or the training-prefix rows when
    /// `vocab` is exactly that prefix.
    pub fn params_for(&self, vocab: &Vocabulary) -> Result<ModelParams> {
        let hash = vocab.hash();
        if hash == self.vocab_sha256 {
            return Ok(self.params.clone());
        }
        match &self.train_prefix {
            Some(prefix) if prefix.sha256 == hash => {
                let entities: Vec<u32> = (0..prefix.entities as u32).collect();
                let mut relations: Vec<RelationId> = (0..prefix.relations as u32).collect();
                if self.reciprocal {
                    let base = (self.params.n_relations / 2) as u32;
                    relations.extend((0..prefix.relations as u32).map(|r| r + base));
                }
                self.params.select(&entities, &relations)
            }
            _ => Err(Error::VocabMismatch {
                checkpoint: self.vocab_sha256.clone(),
                dataset: hash,
            }),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let p = &self.params;
        let header = Header {
            format_version: FORMAT_VERSION,
            tool_version: crate::TOOL_VERSION.to_owned(),
            kind: p.kind,
            dim: p.dim,
            n_entities: p.n_entities,
            n_relations: p.n_relations,
            vocab_sha256: self.vocab_sha256.clone(),
            train_prefix: self.train_prefix.clone(),
            reciprocal: self.reciprocal,
            transe_norm: "l2".into(),
            dtype: "f64-le".into(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * (p.entities.len() + p.relations.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in p.entities.iter().chain(&p.relations) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_owned());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body_start = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..body_start])?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {}", header.format_version)));
        }
        if header.dtype != "f64-le" {
            return Err(bad(&format!("unsupported dtype {}", header.dtype)));
        }

        let mut params = ModelParams::zeros(header.kind, header.n_entities, header.n_relations, header.dim);
        let expected = 8 * (params.entities.len() + params.relations.len());
        let body = &bytes[body_start..];
        if body.len() != expected {
            return Err(bad(&format!("expected {expected} parameter bytes, found {}", body.len())));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for v in params.entities.iter_mut().chain(params.relations.iter_mut()) {
            *v = values.next().expect("length checked");
        }
        if !params.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(Checkpoint {
            params,
            vocab_sha256: header.vocab_sha256,
            train_prefix: header.train_prefix,
            reciprocal: header.reciprocal,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_owned()));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
