//! Latent Dirichlet allocation by collapsed Gibbs sampling, with fixed-phi
//! inference for short documents and topic profiles of gist sentences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gist::Side;
use crate::io::Meta;
use crate::seed;
use crate::text::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub k: usize,
    /// Defaults to `50 / k` when unset.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub infer_iterations: usize,
    pub min_df: usize,
    pub max_df_fraction: f64,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            k: 8,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            infer_iterations: 100,
            min_df: 3,
            max_df_fraction: 0.5,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("topic count {} < 2", self.k)));
        }
        let a = self.alpha();
        if !(a > 0.0 && a.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument("alpha and beta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vec<String>,
    /// `k` rows of `vocab.len()` probabilities.
    pub phi: Vec<Vec<f64>>,
    /// Final-sample topic per token, per document.
    #[serde(skip)]
    pub assignments: Vec<Vec<usize>>,
    #[serde(skip)]
    vocabulary: Option<Vocabulary>,
}

/// Collapsed Gibbs sampler state.
pub struct GibbsSampler {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    n_dk: Vec<Vec<u32>>,
    n_kv: Vec<Vec<u32>>,
    n_k: Vec<u32>,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u < 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

impl GibbsSampler {
    /// Random initial assignments. `docs` hold token ids below `v`.
    pub fn new(docs: Vec<Vec<usize>>, v: usize, k: usize, alpha: f64, beta: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed, "lda", &[]);
        let mut n_dk = vec![vec![0u32; k]; docs.len()];
        let mut n_kv = vec![vec![0u32; v]; k];
        let mut n_k = vec![0u32; k];
        let z: Vec<Vec<usize>> = docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let t = rng.gen_range(0..k);
                        n_dk[d][t] += 1;
                        n_kv[t][w] += 1;
                        n_k[t] += 1;
                        t
                    })
                    .collect()
            })
            .collect();
        GibbsSampler { k, v, alpha, beta, docs, z, n_dk, n_kv, n_k, rng, probs: vec![0.0; k] }
    }

    /// One pass over every token.
    pub fn sweep(&mut self) {
        let vbeta = self.v as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                self.n_dk[d][old] -= 1;
                self.n_kv[old][w] -= 1;
                self.n_k[old] -= 1;
                for t in 0..self.k {
                    self.probs[t] = (self.n_dk[d][t] as f64 + self.alpha) * (self.n_kv[t][w] as f64 + self.beta)
                        / (self.n_k[t] as f64 + vbeta);
                }
                let new = draw(&mut self.rng, &self.probs);
                self.z[d][i] = new;
                self.n_dk[d][new] += 1;
                self.n_kv[new][w] += 1;
                self.n_k[new] += 1;
            }
        }
    }

    pub fn phi(&self) -> Vec<Vec<f64>> {
        let vbeta = self.v as f64 * self.beta;
        (0..self.k)
            .map(|t| {
                let denom = self.n_k[t] as f64 + vbeta;
                self.n_kv[t].iter().map(|&c| (c as f64 + self.beta) / denom).collect()
            })
            .collect()
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.z
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.n_k
    }
}

impl TopicModel {
    pub fn vocabulary(&self) -> Vocabulary {
        match &self.vocabulary {
            Some(v) => v.clone(),
            None => Vocabulary::from_parts(self.vocab.clone(), vec![1; self.vocab.len()]),
        }
    }

    fn ensure_index(&mut self) {
        if self.vocabulary.is_none() {
            self.vocabulary = Some(Vocabulary::from_parts(self.vocab.clone(), vec![1; self.vocab.len()]));
        }
    }

    /// Builds a model from an explicit phi, e.g. for inference only.
    pub fn from_phi(vocab: Vec<String>, phi: Vec<Vec<f64>>, alpha: f64, beta: f64) -> Result<Self> {
        let k = phi.len();
        if k < 2 || phi.iter().any(|r| r.len() != vocab.len()) {
            return Err(Error::Shape("phi must be k >= 2 rows of vocabulary length".into()));
        }
        let mut m = TopicModel { k, alpha, beta, vocab, phi, assignments: Vec::new(), vocabulary: None };
        m.ensure_index();
        Ok(m)
    }

    pub fn to_json(&self, meta: Option<&Meta>) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = meta {
            v["meta"] = serde_json::to_value(m)?;
        }
        Ok(serde_json::to_string(&v)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: TopicModel = serde_json::from_str(text)?;
        if m.k != m.phi.len() || m.phi.iter().any(|r| r.len() != m.vocab.len()) {
            return Err(Error::Shape("topic model phi does not match k and vocabulary".into()));
        }
        m.ensure_index();
        Ok(m)
    }

    /// Indices of the `n` most probable words per topic, ties by word.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.vocab.len()).collect();
        idx.sort_by(|&a, &b| self.phi[topic][b].total_cmp(&self.phi[topic][a]).then(a.cmp(&b)));
        idx.into_iter().take(n).map(|i| (i, self.phi[topic][i])).collect()
    }

    /// TSV `topic rank word probability`.
    pub fn summary_tsv(&self, n: usize, meta: Option<&Meta>) -> String {
        let mut out = String::new();
        if let Some(m) = meta {
            out.push_str(&m.comment_line());
        }
        out.push_str("topic\trank\tword\tprobability\n");
        for t in 0..self.k {
            for (r, (i, p)) in self.top_words(t, n).into_iter().enumerate() {
                out.push_str(&format!("{t}\t{}\t{}\t{p}\n", r + 1, self.vocab[i]));
            }
        }
        out
    }
}

/// Fits LDA on token documents. The vocabulary is every distinct token;
/// prune beforehand with [`Vocabulary::from_docs`] and [`restrict`].
pub fn fit_lda(docs: &[Vec<String>], cfg: &LdaConfig) -> Result<TopicModel> {
    cfg.validate()?;
    let nonempty = docs.iter().filter(|d| !d.is_empty()).count();
    if nonempty == 0 {
        return Err(Error::EmptyCorpus);
    }
    if nonempty < cfg.k {
        return Err(Error::InvalidArgument(format!("{nonempty} non-empty documents for {} topics", cfg.k)));
    }
    let vocab = Vocabulary::from_docs(docs, 1, 1.0);
    let ids: Vec<Vec<usize>> = docs.iter().map(|d| vocab.encode(d)).collect();
    let mut sampler = GibbsSampler::new(ids, vocab.len(), cfg.k, cfg.alpha(), cfg.beta, cfg.seed);
    for _ in 0..cfg.iterations {
        sampler.sweep();
    }
    Ok(TopicModel {
        k: cfg.k,
        alpha: cfg.alpha(),
        beta: cfg.beta,
        vocab: vocab.tokens.clone(),
        phi: sampler.phi(),
        assignments: sampler.z,
        vocabulary: Some(vocab),
    })
}

/// Drops tokens outside `vocab`.
pub fn restrict(docs: &[Vec<String>], vocab: &Vocabulary) -> Vec<Vec<String>> {
    docs.iter()
        .map(|d| d.iter().filter(|t| vocab.id(t).is_some()).cloned().collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub theta: Vec<f64>,
    /// True when no token was in the vocabulary and `theta` is uniform.
    pub all_unseen: bool,
}

fn infer_ids(ids: &[usize], model: &TopicModel, iterations: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = model.k;
    let mut n_dk = vec![0u32; k];
    let mut z: Vec<usize> = ids
        .iter()
        .map(|_| {
            let t = rng.gen_range(0..k);
            n_dk[t] += 1;
            t
        })
        .collect();
    let mut probs = vec![0.0; k];
    for _ in 0..iterations {
        for (i, &w) in ids.iter().enumerate() {
            n_dk[z[i]] -= 1;
            for t in 0..k {
                probs[t] = (n_dk[t] as f64 + model.alpha) * model.phi[t][w];
            }
            z[i] = draw(rng, &probs);
            n_dk[z[i]] += 1;
        }
    }
    let denom = ids.len() as f64 + k as f64 * model.alpha;
    n_dk.iter().map(|&c| (c as f64 + model.alpha) / denom).collect()
}

/// Doc-topic proportions with phi held fixed; unseen tokens are ignored.
pub fn infer(doc: &[String], model: &TopicModel, iterations: usize, seed: u64) -> Inference {
    let ids: Vec<usize> = match &model.vocabulary {
        Some(v) => v.encode(doc),
        None => model.vocabulary().encode(doc),
    };
    if ids.is_empty() {
        return Inference { theta: vec![1.0 / model.k as f64; model.k], all_unseen: true };
    }
    let mut rng = seed::rng(seed, "infer", &[]);
    Inference { theta: infer_ids(&ids, model, iterations, &mut rng), all_unseen: false }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicProfile {
    pub side: Side,
    pub mass: Vec<f64>,
    pub sentences: usize,
}

/// Sums inferred topic proportions over each side's sentences. Each
/// sentence is inferred with a seed derived from its position and id, so
/// results do not depend on thread scheduling.
pub fn profile_gists(
    high: &[(String, Vec<String>)],
    low: &[(String, Vec<String>)],
    model: &TopicModel,
    iterations: usize,
    seed: u64,
) -> (TopicProfile, TopicProfile) {
    let side = |s: Side, items: &[(String, Vec<String>)]| {
        let thetas: Vec<Vec<f64>> = items
            .par_iter()
            .map(|(id, toks)| {
                let sub = u64::from_le_bytes(seed::derive(seed, "profile", &[id.as_bytes()])[..8].try_into().unwrap());
                infer(toks, model, iterations, sub).theta
            })
            .collect();
        let mut mass = vec![0.0; model.k];
        for th in &thetas {
            for (m, t) in mass.iter_mut().zip(th) {
                *m += t;
            }
        }
        TopicProfile { side: s, mass, sentences: items.len() }
    };
    (side(Side::High, high), side(Side::Low, low))
}

/// TSV `side topic mass`.
pub fn profiles_tsv(profiles: &[&TopicProfile], meta: Option<&Meta>) -> String {
    let mut out = String::new();
    if let Some(m) = meta {
        out.push_str(&m.comment_line());
    }
    out.push_str("side\ttopic\tmass\n");
    for p in profiles {
        for (t, m) in p.mass.iter().enumerate() {
            out.push_str(&format!("{}\t{t}\t{m}\n", p.side));
        }
    }
    out
}

/// Per-token perplexity of `eval` tokens given doc-topic proportions
/// inferred from the matching `fit` tokens.
pub fn completion_perplexity(phi: &[Vec<f64>], alpha: f64, fit: &[Vec<usize>], eval: &[Vec<usize>], iterations: usize, seed: u64) -> f64 {
    let k = phi.len();
    let model = TopicModel { k, alpha, beta: 0.0, vocab: Vec::new(), phi: phi.to_vec(), assignments: Vec::new(), vocabulary: None };
    let mut rng = seed::rng(seed, "perplexity", &[]);
    let mut ll = 0.0;
    let mut n = 0usize;
    for (f, e) in fit.iter().zip(eval) {
        let theta = if f.is_empty() { vec![1.0 / k as f64; k] } else { infer_ids(f, &model, iterations, &mut rng) };
        for &w in e {
            let p: f64 = (0..k).map(|t| theta[t] * phi[t][w]).sum();
            ll += p.ln();
            n += 1;
        }
    }
    (-ll / n.max(1) as f64).exp()
}
