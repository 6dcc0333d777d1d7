//! Synthetic panels with planted structure.
//!
//! Each country-month draws a latent `u ~ U[-1, 1]`. A random subset of its
//! articles is informative: their sentences embed as `u * direction + noise`
//! and use words from one of two disjoint topic vocabularies chosen by the
//! sign of `u`. Remaining sentences are pure noise with filler words. Labels
//! are affine in `u`, with the auxiliary tasks blended with independent
//! noise according to `task_correlation`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baseline::{write_traditional, KeywordConfig, TraditionalRow};
use crate::embedding::{write_table, EmbeddingTable};
use crate::error::{Error, Result};
use crate::io::{atomic_write, Meta};
use crate::panel::{write_corpus, write_labels, CorpusArticle, CountryMonthKey, LabelRow, Month};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub countries: usize,
    pub months: usize,
    pub start: Month,
    pub articles_per_month: usize,
    pub sentences_per_article: usize,
    pub words_per_sentence: usize,
    pub dim: usize,
    /// Probability that an article is informative.
    pub signal_fraction: f64,
    pub noise_sigma: f64,
    pub task_correlation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            countries: 9,
            months: 44,
            start: Month::new(2017, 3).expect("valid month"),
            articles_per_month: 20,
            sentences_per_article: 5,
            words_per_sentence: 8,
            dim: 16,
            signal_fraction: 0.2,
            noise_sigma: 0.3,
            task_correlation: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.countries == 0 || self.months == 0 || self.articles_per_month == 0 || self.sentences_per_article == 0 || self.words_per_sentence == 0 {
            return Err(Error::InvalidArgument("synthetic counts must be positive".into()));
        }
        if self.countries > 26 * 26 {
            return Err(Error::InvalidArgument("at most 676 countries".into()));
        }
        if self.dim < 2 {
            return Err(Error::InvalidArgument("dim must be >= 2".into()));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("signal_fraction {} outside (0, 1]", self.signal_fraction)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.task_correlation) {
            return Err(Error::InvalidArgument("task_correlation outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub signal_direction: Vec<f64>,
    pub informative_article_ids: BTreeSet<String>,
    /// Keyed by `COUNTRY/YYYY-MM` on disk.
    #[serde(with = "latent_map")]
    pub true_latent: BTreeMap<CountryMonthKey, f64>,
}

mod latent_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::panel::{CountryMonthKey, Month};

    pub fn serialize<S: Serializer>(map: &BTreeMap<CountryMonthKey, f64>, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<String, f64> = map.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<CountryMonthKey, f64>, D::Error> {
        let m = BTreeMap::<String, f64>::deserialize(d)?;
        m.into_iter()
            .map(|(k, v)| {
                let (c, month) = k.rsplit_once('/').ok_or_else(|| D::Error::custom(format!("bad key {k}")))?;
                let month: Month = month.parse().map_err(D::Error::custom)?;
                Ok((CountryMonthKey::new(c, month), v))
            })
            .collect()
    }
}

impl SynthTruth {
    pub fn is_informative_sentence(&self, sentence_id: &str) -> bool {
        let article = sentence_id.rsplit_once('#').map_or(sentence_id, |(a, _)| a);
        self.informative_article_ids.contains(article)
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Vec<CorpusArticle>,
    pub embeddings: EmbeddingTable,
    pub labels: Vec<LabelRow>,
    pub traditional: Vec<TraditionalRow>,
    pub keywords: KeywordConfig,
    pub truth: SynthTruth,
}

pub const TOPIC_HIGH: &str = "hunger";
pub const TOPIC_LOW: &str = "harvest";
const FILLER: &str = "report";
const WORDS_PER_SET: usize = 30;

pub fn topic_word(prefix: &str, i: usize) -> String {
    format!("{prefix}{i:02}")
}

pub fn fci_of(u: f64) -> f64 {
    3.0 + 1.5 * u.clamp(-1.0, 1.0)
}

fn country_code(i: usize) -> String {
    let a = (b'A' + (i / 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    format!("{a}{b}")
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Skewed pick from a word set so topics have a clear head.
fn pick_word(rng: &mut ChaCha8Rng, prefix: &str) -> String {
    let i = (rng.gen::<f64>().powi(2) * WORDS_PER_SET as f64) as usize;
    topic_word(prefix, i.min(WORDS_PER_SET - 1))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, "synth", &[]);

    let mut direction: Vec<f64> = (0..cfg.dim).map(|_| normal(&mut rng)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);

    let aux = (1.0 - cfg.task_correlation * cfg.task_correlation).max(0.0).sqrt();
    let mut corpus = Vec::new();
    let mut ids = Vec::new();
    let mut data: Vec<f32> = Vec::new();
    let mut labels = Vec::new();
    let mut traditional = Vec::new();
    let mut informative = BTreeSet::new();
    let mut latent = BTreeMap::new();

    for c in 0..cfg.countries {
        let country = country_code(c);
        let district_size = 500.0 + 4000.0 * rng.gen::<f64>();
        let cropland_share = 0.05 + 0.4 * rng.gen::<f64>();
        let pasture_share = 0.05 + 0.4 * rng.gen::<f64>();
        let population = 1e6 * (1.0 + 20.0 * rng.gen::<f64>());
        let ruggedness = rng.gen::<f64>();
        for t in 0..cfg.months {
            let month = cfg.start.offset(t as i64);
            let key = CountryMonthKey::new(country.clone(), month);
            let u: f64 = rng.gen_range(-1.0..=1.0);
            latent.insert(key.clone(), u);

            let e_price: f64 = rng.gen_range(-1.0..=1.0);
            let e_social: f64 = rng.gen_range(-1.0..=1.0);
            labels.push(LabelRow {
                key: key.clone(),
                fci: fci_of(u),
                food_price: Some(100.0 + 20.0 * (cfg.task_correlation * u + aux * e_price)),
                social_events: Some(10.0 + 5.0 * (cfg.task_correlation * u + aux * e_social)),
            });
            traditional.push(TraditionalRow {
                key: key.clone(),
                rainfall: (60.0 + 25.0 * normal(&mut rng)).max(0.0),
                ndvi: 0.1 + 0.5 * rng.gen::<f64>(),
                food_price_index: 100.0 + 10.0 * normal(&mut rng),
                conflict_events: (5.0 * normal(&mut rng).abs()).round(),
                terrain_ruggedness: ruggedness + 0.01 * normal(&mut rng),
                district_size,
                cropland_share,
                pasture_share,
                population,
            });

            let mut flags: Vec<bool> = (0..cfg.articles_per_month).map(|_| rng.gen::<f64>() < cfg.signal_fraction).collect();
            if !flags.iter().any(|&f| f) {
                let i = rng.gen_range(0..flags.len());
                flags[i] = true;
            }
            let topic = if u >= 0.0 { TOPIC_HIGH } else { TOPIC_LOW };
            for (a, &inf) in flags.iter().enumerate() {
                let article_id = format!("{country}-{month}-{a:03}");
                if inf {
                    informative.insert(article_id.clone());
                }
                let mut sentences = Vec::with_capacity(cfg.sentences_per_article);
                for s in 0..cfg.sentences_per_article {
                    let prefix = if inf { topic } else { FILLER };
                    let words: Vec<String> = (0..cfg.words_per_sentence).map(|_| pick_word(&mut rng, prefix)).collect();
                    sentences.push(words.join(" "));
                    ids.push(format!("{article_id}#{s}"));
                    let scale = if inf { u } else { 0.0 };
                    for x in &direction {
                        data.push((scale * x + cfg.noise_sigma * normal(&mut rng)) as f32);
                    }
                }
                corpus.push(CorpusArticle { article_id, country: country.clone(), month, sentences });
            }
        }
    }

    let mut kw: Vec<String> = (0..5).map(|i| topic_word(TOPIC_HIGH, i)).collect();
    kw.extend((0..5).map(|i| topic_word(TOPIC_LOW, i)));
    Ok(SynthData {
        corpus,
        embeddings: EmbeddingTable::new(cfg.dim, ids, data)?,
        labels,
        traditional,
        keywords: KeywordConfig::new(kw)?,
        truth: SynthTruth { signal_direction: direction, informative_article_ids: informative, true_latent: latent },
    })
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const TRADITIONAL_FILE: &str = "traditional.csv";
pub const KEYWORDS_FILE: &str = "keywords.txt";
pub const TRUTH_FILE: &str = "truth.json";

impl SynthData {
    /// Writes every artifact under `dir` with the standard file names.
    pub fn write(&self, dir: &Path, meta: &Meta) -> Result<()> {
        write_corpus(&self.corpus, &dir.join(CORPUS_FILE), Some(meta))?;
        write_table(&self.embeddings, &dir.join(EMBEDDINGS_FILE))?;
        write_labels(&self.labels, &dir.join(LABELS_FILE), Some(meta))?;
        write_traditional(&self.traditional, &dir.join(TRADITIONAL_FILE), Some(meta))?;
        let mut kw = format!("# config_hash={}; seed={}\n", meta.config_hash, meta.seed);
        kw.push_str(&self.keywords.to_text());
        atomic_write(&dir.join(KEYWORDS_FILE), kw.as_bytes())?;
        let mut truth = serde_json::to_value(&self.truth)?;
        truth["meta"] = serde_json::to_value(meta)?;
        atomic_write(&dir.join(TRUTH_FILE), (serde_json::to_string_pretty(&truth)? + "\n").as_bytes())
    }
}
