//! Sentence-embedding tables and pseudo-article mean pooling.
//!
//! Binary layout: `EMB1`, `u32` dim, `u64` row count, then row-major `f32`,
//! all little-endian. Row ids live in a sidecar `<file>.ids.jsonl` with one
//! `{"row": i, "sentence_id": "..."}` object per line.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{PseudoArticle, PseudoCollection};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::panel::CountryMonthKey;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const DEFAULT_DIM: usize = 768;
const HEADER_LEN: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dim must be > 0".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "{} ids x {dim} dims needs {} values, got {}",
                ids.len(),
                ids.len() * dim,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding row {}", i / dim)));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate sentence id {id}")));
            }
        }
        Ok(EmbeddingTable {
            dim,
            ids,
            data,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn ids_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            row: usize,
            sentence_id: &'a str,
        }
        let mut out = String::new();
        for (row, id) in self.ids.iter().enumerate() {
            out.push_str(&serde_json::to_string(&Line { row, sentence_id: id }).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Decodes a table from the binary payload and the id sidecar text.
    pub fn from_parts(bytes: &[u8], ids_text: &str, expected_dim: Option<usize>) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::TruncatedPayload("missing header".into()));
        }
        if &bytes[..4] != MAGIC {
            let mut got = [0u8; 4];
            got.copy_from_slice(&bytes[..4]);
            return Err(Error::BadMagic(got));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload("missing header".into()));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        if let Some(expected) = expected_dim {
            if expected != dim {
                return Err(Error::DimMismatch {
                    expected,
                    found: dim,
                });
            }
        }
        let ids = parse_ids(ids_text)?;
        if ids.len() > rows {
            return Err(Error::TruncatedPayload(format!(
                "id manifest lists {} rows but header declares {rows}",
                ids.len()
            )));
        }
        if ids.len() < rows {
            return Err(Error::IdManifest(format!(
                "header declares {rows} rows but id manifest lists {}",
                ids.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..];
        let need = rows * dim * 4;
        if payload.len() < need {
            return Err(Error::TruncatedPayload(format!(
                "expected {need} payload bytes, found {}",
                payload.len()
            )));
        }
        if payload.len() > need {
            return Err(Error::Validation(format!(
                "{} trailing bytes after payload",
                payload.len() - need
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        EmbeddingTable::new(dim, ids, data)
    }
}

fn parse_ids(text: &str) -> Result<Vec<String>> {
    #[derive(Deserialize)]
    struct Line {
        row: usize,
        sentence_id: String,
    }
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(line)
            .map_err(|e| Error::parse("<ids.jsonl>", i + 1, e.to_string()))?;
        if rec.row != ids.len() {
            return Err(Error::IdManifest(format!(
                "line {} has row {}, expected {}",
                i + 1,
                rec.row,
                ids.len()
            )));
        }
        ids.push(rec.sentence_id);
    }
    Ok(ids)
}

/// Sidecar path: `<file>.ids.jsonl`.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.jsonl");
    PathBuf::from(s)
}

pub fn read_table(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ids_file = ids_path(path);
    let ids_text = std::fs::read_to_string(&ids_file).map_err(|e| Error::io(&ids_file, e))?;
    EmbeddingTable::from_parts(&bytes, &ids_text, expected_dim)
}

pub fn write_table(table: &EmbeddingTable, path: &Path) -> Result<()> {
    atomic_write(path, &table.to_bytes())?;
    atomic_write(&ids_path(path), table.ids_jsonl().as_bytes())
}

/// An `m x dim` matrix whose row `i` is pseudo-article `i`'s embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectionEmbedding {
    pub key: CountryMonthKey,
    pub fold: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl CollectionEmbedding {
    pub fn new(key: CountryMonthKey, fold: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) || data.is_empty() {
            return Err(Error::Shape(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(CollectionEmbedding {
            key,
            fold,
            dim,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Mean of the article's sentence vectors, repeats counted with multiplicity.
pub fn pool_article(pseudo: &PseudoArticle, table: &EmbeddingTable) -> Result<Vec<f64>> {
    let mut acc = vec![0.0f64; table.dim()];
    pool_into(pseudo, table, &mut acc)?;
    Ok(acc)
}

fn pool_into(pseudo: &PseudoArticle, table: &EmbeddingTable, acc: &mut [f64]) -> Result<()> {
    if pseudo.sentence_ids.is_empty() {
        return Err(Error::Shape("pseudo-article has no sentences".into()));
    }
    for id in &pseudo.sentence_ids {
        let row = table.get(id).ok_or_else(|| Error::MissingId(id.to_string()))?;
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    let n = pseudo.sentence_ids.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(())
}

pub fn embed_collection(coll: &PseudoCollection, table: &EmbeddingTable) -> Result<CollectionEmbedding> {
    let dim = table.dim();
    let mut data = vec![0.0f64; coll.articles.len() * dim];
    for (art, row) in coll.articles.iter().zip(data.chunks_exact_mut(dim)) {
        pool_into(art, table, row)?;
    }
    CollectionEmbedding::new(coll.key.clone(), coll.fold, dim, data)
}
