//! In-memory glue between stages: sample assembly, splitting and gist
//! scoring over a trained model.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bootstrap::PseudoCollection;
use crate::embedding::{embed_collection, EmbeddingTable};
use crate::error::Result;
use crate::gist::{normalize_predictions, Normalization, ScoreBoard, ScoredSentence};
use crate::model::{forward, ModelParams};
use crate::panel::{CountryMonthKey, LabelRow, Split, SplitBoundaries};
use crate::trainer::PanelSample;

/// Pairs each collection with its labels. Collections whose key has no
/// label row, or a row with a missing target, are skipped and returned.
pub fn assemble_samples(
    collections: &[PseudoCollection],
    table: &EmbeddingTable,
    labels: &[LabelRow],
) -> Result<(Vec<PanelSample>, Vec<CountryMonthKey>)> {
    let targets: BTreeMap<&CountryMonthKey, Option<[f64; 3]>> = labels.iter().map(|l| (&l.key, l.targets())).collect();
    let mut skipped = Vec::new();
    let usable: Vec<(&PseudoCollection, [f64; 3])> = collections
        .iter()
        .filter_map(|c| match targets.get(&c.key).copied().flatten() {
            Some(t) => Some((c, t)),
            None => {
                if skipped.last() != Some(&c.key) {
                    log::warn!("skipping {}: no complete label row", c.key);
                    skipped.push(c.key.clone());
                }
                None
            }
        })
        .collect();
    let samples = usable
        .par_iter()
        .map(|(c, t)| Ok(PanelSample { embedding: embed_collection(c, table)?, targets: *t }))
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, skipped))
}

#[derive(Debug, Clone, Default)]
pub struct SplitSamples {
    pub train: Vec<PanelSample>,
    pub dev: Vec<PanelSample>,
    pub test: Vec<PanelSample>,
}

pub fn split_samples(samples: Vec<PanelSample>, boundaries: &SplitBoundaries) -> SplitSamples {
    let mut out = SplitSamples::default();
    for s in samples {
        match boundaries.classify(s.key().month) {
            Split::Train => out.train.push(s),
            Split::Dev => out.dev.push(s),
            Split::Test => out.test.push(s),
        }
    }
    out
}

/// Runs the model over `collections` and accumulates sentence scores, with
/// fci predictions normalized across the whole set.
pub fn score_sentences(
    params: &ModelParams,
    collections: &[PseudoCollection],
    table: &EmbeddingTable,
) -> Result<Vec<ScoredSentence>> {
    let traces = collections
        .par_iter()
        .map(|c| {
            let e = embed_collection(c, table)?;
            let t = forward(&e, params)?;
            Ok((t.attn_w, t.preds[0]))
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<f64> = traces.iter().map(|t| t.1).collect();
    let norm = normalize_predictions(&preds, Normalization::ZeroCentered);
    let mut board = ScoreBoard::new();
    for ((c, (w, p)), y) in collections.iter().zip(&traces).zip(norm) {
        board.add(c, w, *p, y)?;
    }
    Ok(board.into_population())
}
