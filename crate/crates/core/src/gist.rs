//! Gist extraction: attention-derived sentence importance and top/bottom
//! fraction selection.
//!
//! A pseudo-article's importance is its attention weight times the
//! normalized fci prediction of its collection. Importance is split evenly
//! over the article's sentence slots; a sentence that occurs several times
//! (within or across collections) accumulates the sum of its shares.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bootstrap::PseudoCollection;
use crate::error::{Error, Result};
use crate::io::Meta;
use crate::panel::CountryMonthKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Min-max onto `[-1, 1]`.
    #[default]
    ZeroCentered,
    /// Plain min-max onto `[0, 1]`.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    High,
    Low,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::High => "high",
            Side::Low => "low",
        })
    }
}

/// Min-max normalization of predictions; a degenerate range maps to the
/// centre of the target interval (0 for zero-centered, 0.5 for unit).
pub fn normalize_predictions(preds: &[f64], mode: Normalization) -> Vec<f64> {
    let min = preds.iter().copied().fold(f64::INFINITY, f64::min);
    let max = preds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    preds
        .iter()
        .map(|&p| {
            let unit = if range > 0.0 { (p - min) / range } else { 0.5 };
            match mode {
                Normalization::ZeroCentered => 2.0 * unit - 1.0,
                Normalization::Unit => unit,
            }
        })
        .collect()
}

pub fn article_importance(attn_w: &[f64], y_norm: f64) -> Vec<f64> {
    attn_w.iter().map(|w| w * y_norm).collect()
}

/// Where a sentence's largest single contribution came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occurrence {
    pub key: CountryMonthKey,
    pub fold: usize,
    pub article_index: usize,
    pub article_weight: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub sentence_id: Arc<str>,
    pub w_s: f64,
    pub source: Occurrence,
}

/// Per-sentence scores for one collection: every occurrence in article `i`
/// gets `importance[i] / n_i`, summed per sentence id. Ids are returned in
/// first-occurrence order.
pub fn sentence_scores(collection: &PseudoCollection, importance: &[f64]) -> Result<Vec<(Arc<str>, f64)>> {
    if importance.len() != collection.articles.len() {
        return Err(Error::Shape(format!(
            "{} importances for {} articles",
            importance.len(),
            collection.articles.len()
        )));
    }
    let mut order: Vec<Arc<str>> = Vec::new();
    let mut sums: std::collections::HashMap<Arc<str>, f64> = std::collections::HashMap::new();
    for (art, &imp) in collection.articles.iter().zip(importance) {
        let share = imp / art.sentence_ids.len() as f64;
        for id in &art.sentence_ids {
            match sums.get_mut(id) {
                Some(v) => *v += share,
                None => {
                    order.push(id.clone());
                    sums.insert(id.clone(), share);
                }
            }
        }
    }
    Ok(order.into_iter().map(|id| {
        let v = sums[&id];
        (id, v)
    }).collect())
}

/// Accumulates sentence scores over many collections.
#[derive(Debug, Default)]
pub struct ScoreBoard {
    entries: BTreeMap<Arc<str>, (f64, Occurrence, f64)>,
}

impl ScoreBoard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one scored collection: `attn_w` are its attention weights,
    /// `prediction` its raw fci prediction and `y_norm` the normalized one.
    pub fn add(
        &mut self,
        collection: &PseudoCollection,
        attn_w: &[f64],
        prediction: f64,
        y_norm: f64,
    ) -> Result<()> {
        if attn_w.len() != collection.articles.len() {
            return Err(Error::Shape(format!(
                "{} attention weights for {} articles",
                attn_w.len(),
                collection.articles.len()
            )));
        }
        let importance = article_importance(attn_w, y_norm);
        for (i, (art, &imp)) in collection.articles.iter().zip(&importance).enumerate() {
            let share = imp / art.sentence_ids.len() as f64;
            for id in &art.sentence_ids {
                let occ = || Occurrence {
                    key: collection.key.clone(),
                    fold: collection.fold,
                    article_index: i,
                    article_weight: imp,
                    prediction,
                };
                match self.entries.get_mut(id) {
                    Some((total, best, best_share)) => {
                        *total += share;
                        if share.abs() > best_share.abs() {
                            *best = occ();
                            *best_share = share;
                        }
                    }
                    None => {
                        self.entries.insert(id.clone(), (share, occ(), share));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn into_population(self) -> Vec<ScoredSentence> {
        self.entries
            .into_iter()
            .map(|(sentence_id, (w_s, source, _))| ScoredSentence {
                sentence_id,
                w_s,
                source,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GistRecord {
    pub sentence_id: String,
    pub text: String,
    pub w_s: f64,
    pub source: Occurrence,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GistReport {
    pub high: Vec<GistRecord>,
    pub low: Vec<GistRecord>,
    pub fraction: f64,
    pub population_size: usize,
    pub per_country: bool,
}

fn by_score_desc(a: &ScoredSentence, b: &ScoredSentence) -> Ordering {
    b.w_s.total_cmp(&a.w_s).then_with(|| a.sentence_id.cmp(&b.sentence_id))
}

fn by_score_asc(a: &ScoredSentence, b: &ScoredSentence) -> Ordering {
    a.w_s.total_cmp(&b.w_s).then_with(|| a.sentence_id.cmp(&b.sentence_id))
}

/// Number selected on each side of a population of `n`.
pub fn selection_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

fn select(
    pop: &[&ScoredSentence],
    fraction: f64,
    text_of: &dyn Fn(&str) -> Option<String>,
    high: &mut Vec<GistRecord>,
    low: &mut Vec<GistRecord>,
) {
    let k = selection_size(fraction, pop.len());
    let record = |s: &ScoredSentence, side| GistRecord {
        sentence_id: s.sentence_id.to_string(),
        text: text_of(&s.sentence_id).unwrap_or_default(),
        w_s: s.w_s,
        source: s.source.clone(),
        side,
    };
    let mut sorted: Vec<&ScoredSentence> = pop.to_vec();
    sorted.sort_by(|a, b| by_score_desc(a, b));
    high.extend(sorted.iter().take(k).map(|s| record(s, Side::High)));
    sorted.sort_by(|a, b| by_score_asc(a, b));
    low.extend(sorted.iter().take(k).map(|s| record(s, Side::Low)));
}

/// Picks the `ceil(fraction * N)` highest and lowest scored sentences, ties
/// broken by sentence id. With `per_country` the selection runs separately
/// inside each country.
pub fn extract_gists(
    population: &[ScoredSentence],
    fraction: f64,
    per_country: bool,
    text_of: &dyn Fn(&str) -> Option<String>,
) -> Result<GistReport> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::InvalidArgument(format!("gist fraction {fraction} outside (0, 0.5]")));
    }
    if population.is_empty() {
        return Err(Error::EmptyDataset("gist population".into()));
    }
    if let Some(s) = population.iter().find(|s| !s.w_s.is_finite()) {
        return Err(Error::NonFinite(format!("score of {}", s.sentence_id)));
    }
    let mut high = Vec::new();
    let mut low = Vec::new();
    if per_country {
        let mut groups: BTreeMap<&str, Vec<&ScoredSentence>> = BTreeMap::new();
        for s in population {
            groups.entry(s.source.key.country.as_str()).or_default().push(s);
        }
        for group in groups.values() {
            select(group, fraction, text_of, &mut high, &mut low);
        }
    } else {
        let all: Vec<&ScoredSentence> = population.iter().collect();
        select(&all, fraction, text_of, &mut high, &mut low);
    }
    Ok(GistReport {
        high,
        low,
        fraction,
        population_size: population.len(),
        per_country,
    })
}

fn clean(text: &str) -> String {
    text.chars()
        .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
        .collect()
}

impl GistReport {
    /// TSV: `rank side w_s country month fold sentence_id text`.
    pub fn to_tsv(&self, meta: Option<&Meta>) -> String {
        let mut out = String::new();
        if let Some(m) = meta {
            out.push_str(&m.comment_line());
        }
        out.push_str("rank\tside\tw_s\tcountry\tmonth\tfold\tsentence_id\ttext\n");
        for list in [&self.high, &self.low] {
            for (rank, r) in list.iter().enumerate() {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    rank + 1,
                    r.side,
                    r.w_s,
                    r.source.key.country,
                    r.source.key.month,
                    r.source.fold,
                    r.sentence_id,
                    clean(&r.text)
                ));
            }
        }
        out
    }

    /// Reads `(side, sentence_id, text)` back from a gist TSV.
    pub fn parse_tsv_sentences(text: &str) -> Result<Vec<(Side, String, String)>> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() || line.starts_with("rank\t") {
                continue;
            }
            let cols: Vec<&str> = line.splitn(8, '\t').collect();
            if cols.len() != 8 {
                return Err(Error::parse("<gists.tsv>", i + 1, "expected 8 columns"));
            }
            let side = match cols[1] {
                "high" => Side::High,
                "low" => Side::Low,
                other => return Err(Error::parse("<gists.tsv>", i + 1, format!("bad side {other}"))),
            };
            out.push((side, cols[6].to_string(), cols[7].to_string()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GistSummary {
    pub fraction: f64,
    pub population_size: usize,
    pub selected_per_side: usize,
    pub per_country: bool,
    /// `(quantile, w_s)` pairs over the whole population.
    pub quantiles: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
}

pub fn summarize(report: &GistReport, population: &[ScoredSentence], meta: Option<Meta>) -> GistSummary {
    let mut scores: Vec<f64> = population.iter().map(|s| s.w_s).collect();
    scores.sort_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        if scores.is_empty() {
            return f64::NAN;
        }
        let pos = p * (scores.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        scores[lo] + (pos - lo as f64) * (scores[hi] - scores[lo])
    };
    GistSummary {
        fraction: report.fraction,
        population_size: report.population_size,
        selected_per_side: report.high.len(),
        per_country: report.per_country,
        quantiles: [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0].iter().map(|&p| (p, q(p))).collect(),
        meta,
    }
}
