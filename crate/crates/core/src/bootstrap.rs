//! Sentence-level bootstrap augmentation.
//!
//! Each observed country-month collection is replaced by `folds`
//! pseudo-collections. A pseudo-collection holds `articles_per_collection`
//! pseudo-articles and each pseudo-article is `sentences_per_article`
//! sentences drawn uniformly with replacement from the month's sentence pool,
//! ignoring the original article boundaries.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_to_string, Meta};
use crate::panel::{group_by_key, CorpusArticle, CountryMonthKey, Month};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub sentence_id: Arc<str>,
    pub article_id: Arc<str>,
    pub text: Arc<str>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePool {
    pub key: CountryMonthKey,
    pub entries: Vec<PoolEntry>,
}

impl SentencePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PseudoArticle {
    pub sentence_ids: Vec<Arc<str>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoCollection {
    pub key: CountryMonthKey,
    pub fold: usize,
    pub articles: Vec<PseudoArticle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapParams {
    /// Pseudo-articles per collection.
    pub articles_per_collection: usize,
    /// Sentences per pseudo-article.
    pub sentences_per_article: usize,
    /// Pseudo-collections per observed key.
    pub folds: usize,
    pub seed: u64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        BootstrapParams {
            articles_per_collection: 85,
            sentences_per_article: 21,
            folds: 10,
            seed: 0,
        }
    }
}

impl BootstrapParams {
    pub fn validate(&self) -> Result<()> {
        if self.articles_per_collection == 0 || self.sentences_per_article == 0 || self.folds == 0 {
            return Err(Error::InvalidArgument(
                "bootstrap m, n and K must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Output of [`augment`]: collections in canonical `(key, fold)` order plus
/// the keys whose pool was empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Augmented {
    pub collections: Vec<PseudoCollection>,
    pub skipped: Vec<CountryMonthKey>,
}

impl Augmented {
    pub fn article_count(&self) -> usize {
        self.collections.iter().map(|c| c.articles.len()).sum()
    }

    pub fn sentence_slots(&self) -> usize {
        self.collections
            .iter()
            .flat_map(|c| &c.articles)
            .map(|a| a.sentence_ids.len())
            .sum()
    }
}

/// Flattens the articles of one key into a pool ordered by
/// `(article_id, sentence index)`.
pub fn build_pool(key: &CountryMonthKey, articles: &[&CorpusArticle]) -> Result<SentencePool> {
    if let Some(a) = articles.iter().find(|a| a.country != key.country || a.month != key.month) {
        return Err(Error::InvalidArgument(format!(
            "article {} belongs to {}, not {key}",
            a.article_id,
            a.key()
        )));
    }
    let mut sorted: Vec<&CorpusArticle> = articles.to_vec();
    sorted.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    let mut entries = Vec::new();
    for art in sorted {
        let article_id: Arc<str> = Arc::from(art.article_id.as_str());
        for (i, text) in art.sentences.iter().enumerate() {
            entries.push(PoolEntry {
                sentence_id: Arc::from(art.sentence_id(i)),
                article_id: article_id.clone(),
                text: Arc::from(text.as_str()),
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyPool(key.to_string()));
    }
    Ok(SentencePool {
        key: key.clone(),
        entries,
    })
}

/// Builds one pool per key present in the corpus. Keys whose articles carry
/// no sentences are returned separately.
pub fn build_pools(
    corpus: &[CorpusArticle],
) -> (BTreeMap<CountryMonthKey, SentencePool>, Vec<CountryMonthKey>) {
    let mut pools = BTreeMap::new();
    let mut empty = Vec::new();
    for (key, arts) in group_by_key(corpus) {
        match build_pool(&key, &arts) {
            Ok(p) => {
                pools.insert(key, p);
            }
            Err(_) => empty.push(key),
        }
    }
    (pools, empty)
}

pub fn sample_pseudo_article<R: Rng + ?Sized>(
    pool: &SentencePool,
    n: usize,
    rng: &mut R,
) -> Result<PseudoArticle> {
    if pool.is_empty() {
        return Err(Error::EmptyPool(pool.key.to_string()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let p = pool.len();
    let sentence_ids = (0..n)
        .map(|_| pool.entries[rng.gen_range(0..p)].sentence_id.clone())
        .collect();
    Ok(PseudoArticle { sentence_ids })
}

/// Generates the pseudo-collection for a single `(key, fold)` unit.
pub fn sample_collection(
    pool: &SentencePool,
    fold: usize,
    params: &BootstrapParams,
) -> Result<PseudoCollection> {
    let mut rng = seed::bootstrap_rng(params.seed, &pool.key, fold);
    let articles = (0..params.articles_per_collection)
        .map(|_| sample_pseudo_article(pool, params.sentences_per_article, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoCollection {
        key: pool.key.clone(),
        fold,
        articles,
    })
}

pub fn augment(
    pools: &BTreeMap<CountryMonthKey, SentencePool>,
    params: &BootstrapParams,
) -> Result<Augmented> {
    params.validate()?;
    let mut skipped = Vec::new();
    let mut units = Vec::new();
    for (key, pool) in pools {
        if pool.is_empty() {
            log::warn!("skipping {key}: empty sentence pool");
            skipped.push(key.clone());
            continue;
        }
        units.extend((0..params.folds).map(|fold| (pool, fold)));
    }
    let collections = units
        .par_iter()
        .map(|&(pool, fold)| sample_collection(pool, fold, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(Augmented {
        collections,
        skipped,
    })
}

/// Lower median; `values` must be non-empty.
fn lower_median(mut values: Vec<usize>) -> usize {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

/// `(median sentences per article, median articles per key)`, lower median
/// for even counts.
pub fn corpus_medians(corpus: &[CorpusArticle]) -> Result<(usize, usize)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let sentences = lower_median(corpus.iter().map(|a| a.sentences.len()).collect());
    let per_key = lower_median(group_by_key(corpus).values().map(|v| v.len()).collect());
    Ok((sentences, per_key))
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    country: String,
    month: Month,
    fold: usize,
    articles: Vec<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaLine {
    meta: Meta,
}

/// Serializes collections as manifest JSONL. When `meta` is given it is
/// written as a leading `{"meta": ...}` line, which readers skip.
pub fn manifest_to_jsonl(collections: &[PseudoCollection], meta: Option<&Meta>) -> Result<String> {
    let mut out = String::new();
    if let Some(m) = meta {
        out.push_str(&serde_json::to_string(&MetaLine { meta: m.clone() })?);
        out.push('\n');
    }
    for c in collections {
        let line = ManifestLine {
            country: c.key.country.clone(),
            month: c.key.month,
            fold: c.fold,
            articles: c
                .articles
                .iter()
                .map(|a| a.sentence_ids.iter().map(|s| s.to_string()).collect())
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(collections: &[PseudoCollection], path: &Path, meta: Option<&Meta>) -> Result<()> {
    atomic_write(path, manifest_to_jsonl(collections, meta)?.as_bytes())
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<Vec<PseudoCollection>> {
    let mut interned: HashMap<String, Arc<str>> = HashMap::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if value.get("meta").is_some() {
            continue;
        }
        let rec: ManifestLine =
            serde_json::from_value(value).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let articles = rec
            .articles
            .into_iter()
            .map(|ids| PseudoArticle {
                sentence_ids: ids
                    .into_iter()
                    .map(|id| interned.entry(id.clone()).or_insert_with(|| Arc::from(id)).clone())
                    .collect(),
            })
            .collect();
        out.push(PseudoCollection {
            key: CountryMonthKey::new(rec.country, rec.month),
            fold: rec.fold,
            articles,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<PseudoCollection>> {
    parse_manifest(path, &read_to_string(path)?)
}
