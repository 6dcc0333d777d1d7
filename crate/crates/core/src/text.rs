//! Tokenization, stopword removal, suffix stemming and vocabulary building.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "aren", "as", "at", "be", "because", "been", "before", "being", "below", "between",
    "both", "but", "by", "can", "cannot", "could", "did", "didn", "do", "does", "doesn", "doing",
    "don", "down", "during", "each", "either", "even", "ever", "every", "few", "for", "from",
    "further", "had", "has", "hasn", "have", "haven", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "however", "i", "if", "in", "into", "is", "isn",
    "it", "its", "itself", "just", "least", "less", "let", "like", "made", "make", "many", "may",
    "me", "might", "more", "most", "much", "must", "my", "myself", "neither", "no", "nor", "not",
    "now", "of", "off", "often", "on", "once", "one", "only", "or", "other", "others", "our",
    "ours", "ourselves", "out", "over", "own", "per", "said", "same", "say", "says", "she",
    "should", "since", "so", "some", "still", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "though", "through",
    "thus", "to", "too", "under", "until", "up", "upon", "us", "very", "was", "wasn", "we",
    "were", "weren", "what", "when", "where", "whether", "which", "while", "who", "whom",
    "whose", "why", "will", "with", "within", "without", "would", "yet", "you", "your", "yours",
    "yourself", "yourselves",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y'))
}

fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2 && b[n - 1] == b[n - 2] && b[n - 1].is_ascii_alphabetic() && !matches!(b[n - 1], b'l' | b's' | b'z' | b'e' | b'o') {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

/// Deterministic suffix stripper. The first matching rule wins:
///
/// | suffix | replacement | condition |
/// |--------|-------------|-----------|
/// | `sses` | `ss` | |
/// | `ies`  | `y`  | stem of 2+ chars |
/// | `ing`  | ``   | stem of 3+ chars with a vowel; doubled consonant undone |
/// | `ed`   | ``   | stem of 3+ chars with a vowel; doubled consonant undone |
/// | `ly`   | ``   | stem of 4+ chars |
/// | `s`    | ``   | word of 4+ chars not ending in `ss`, `us` or `is` |
pub fn stem(word: &str) -> String {
    if let Some(s) = word.strip_suffix("sses") {
        return format!("{s}ss");
    }
    if let Some(s) = word.strip_suffix("ies") {
        if s.len() >= 2 {
            return format!("{s}y");
        }
    }
    for suf in ["ing", "ed"] {
        if let Some(s) = word.strip_suffix(suf) {
            if s.len() >= 3 && has_vowel(s) {
                return undouble(s);
            }
        }
    }
    if let Some(s) = word.strip_suffix("ly") {
        if s.len() >= 4 {
            return s.to_string();
        }
    }
    if word.len() >= 4 && word.ends_with('s') && !(word.ends_with("ss") || word.ends_with("us") || word.ends_with("is")) {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Lowercase, split on non-alphanumerics, drop short tokens and stopwords,
/// then stem.
pub fn preprocess(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 3 && !is_stopword(t))
        .map(stem)
        .collect()
}

/// Whole-token lowercase split without stopword removal or stemming.
pub fn raw_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vocabulary {
    pub tokens: Vec<String>,
    pub df: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Terms sorted lexicographically; a term is kept when its document
    /// frequency is at least `min_df` and at most `max_df_fraction` of the
    /// documents.
    pub fn from_docs(docs: &[Vec<String>], min_df: usize, max_df_fraction: f64) -> Self {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let uniq: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        let cap = max_df_fraction * docs.len() as f64;
        let (tokens, df): (Vec<String>, Vec<usize>) = df
            .into_iter()
            .filter(|&(_, n)| n >= min_df.max(1) && n as f64 <= cap)
            .map(|(t, n)| (t.to_string(), n))
            .unzip();
        Self::from_parts(tokens, df)
    }

    pub fn from_parts(tokens: Vec<String>, df: Vec<usize>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, df, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Maps a token list to ids, dropping unknown tokens.
    pub fn encode(&self, doc: &[String]) -> Vec<usize> {
        doc.iter().filter_map(|t| self.id(t)).collect()
    }
}
