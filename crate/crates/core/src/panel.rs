//! Country-month panel: keys, labels, corpus records, IPC interpolation and
//! the train/dev/test split.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_to_string, Meta};

/// A calendar month. Ordered by `(year, month)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u8,
}

impl Month {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Validation(format!("month {month} outside 1..12")));
        }
        Ok(Month { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Months since year 0, so consecutive months differ by exactly one.
    pub fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(idx: i64) -> Self {
        Month {
            year: idx.div_euclid(12) as i32,
            month: (idx.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        Month::from_index(self.index() + months)
    }

    /// Inclusive range of months.
    pub fn range_inclusive(from: Month, to: Month) -> impl Iterator<Item = Month> {
        (from.index()..=to.index()).map(Month::from_index)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("month {s:?} is not YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        Month::new(year, month)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountryMonthKey {
    pub country: String,
    pub month: Month,
}

impl CountryMonthKey {
    pub fn new(country: impl Into<String>, month: Month) -> Self {
        CountryMonthKey {
            country: country.into(),
            month,
        }
    }
}

impl fmt::Display for CountryMonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.country, self.month)
    }
}

/// One row of the labels file. `food_price` and `social_events` may be
/// missing, in which case the row is not usable as a training target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub key: CountryMonthKey,
    pub fci: f64,
    pub food_price: Option<f64>,
    pub social_events: Option<f64>,
}

impl LabelRow {
    pub fn validate(&self) -> Result<()> {
        if !self.fci.is_finite() || !(1.0..=5.0).contains(&self.fci) {
            return Err(Error::Validation(format!(
                "{}: fci {} outside [1,5]",
                self.key, self.fci
            )));
        }
        for (name, v) in [("food_price", self.food_price), ("social_events", self.social_events)] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!(
                        "{}: {name} {v} must be finite and >= 0",
                        self.key
                    )));
                }
            }
        }
        Ok(())
    }

    /// All three targets, if present.
    pub fn targets(&self) -> Option<[f64; 3]> {
        Some([self.fci, self.food_price?, self.social_events?])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuarterlyIpcSeries {
    pub country: String,
    pub points: Vec<(Month, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusArticle {
    pub article_id: String,
    pub country: String,
    pub month: Month,
    pub sentences: Vec<String>,
}

impl CorpusArticle {
    pub fn key(&self) -> CountryMonthKey {
        CountryMonthKey::new(self.country.clone(), self.month)
    }

    /// Sentence id convention shared with the embedding exporter.
    pub fn sentence_id(&self, index: usize) -> String {
        format!("{}#{}", self.article_id, index)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::Validation(format!(
                "article {} has no sentences",
                self.article_id
            )));
        }
        if let Some(i) = self.sentences.iter().position(|s| s.trim().is_empty()) {
            return Err(Error::Validation(format!(
                "article {} sentence {i} is empty",
                self.article_id
            )));
        }
        Ok(())
    }
}

/// Linear interpolation of quarterly IPC phases into a monthly series.
///
/// Anchors are reproduced exactly, months between anchors are affine in the
/// month index, and months outside the anchor span hold the nearest anchor
/// value. `range` defaults to the anchor span.
pub fn interpolate_ipc(
    series: &QuarterlyIpcSeries,
    range: Option<(Month, Month)>,
) -> Result<Vec<(Month, f64)>> {
    let pts = &series.points;
    if pts.is_empty() {
        return Err(Error::NoAnchors);
    }
    if pts.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::UnsortedSeries(series.country.clone()));
    }
    for &(m, v) in pts {
        if !v.is_finite() || !(1.0..=5.0).contains(&v) {
            return Err(Error::Validation(format!(
                "{} {m}: phase {v} outside [1,5]",
                series.country
            )));
        }
    }
    let (from, to) = range.unwrap_or((pts[0].0, pts[pts.len() - 1].0));
    let mut out = Vec::new();
    let mut seg = 0;
    for month in Month::range_inclusive(from, to) {
        let value = if month <= pts[0].0 {
            pts[0].1
        } else if month >= pts[pts.len() - 1].0 {
            pts[pts.len() - 1].1
        } else {
            while pts[seg + 1].0 < month {
                seg += 1;
            }
            let (m0, v0) = pts[seg];
            let (m1, v1) = pts[seg + 1];
            if month == m1 {
                v1
            } else {
                let t = (month.index() - m0.index()) as f64 / (m1.index() - m0.index()) as f64;
                v0 + t * (v1 - v0)
            }
        };
        out.push((month, value));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Inclusive upper bounds of the train and dev periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub train_end: Month,
    pub dev_end: Month,
}

impl Default for SplitBoundaries {
    fn default() -> Self {
        SplitBoundaries {
            train_end: Month { year: 2019, month: 4 },
            dev_end: Month { year: 2019, month: 12 },
        }
    }
}

impl SplitBoundaries {
    pub fn classify(&self, month: Month) -> Split {
        if month <= self.train_end {
            Split::Train
        } else if month <= self.dev_end {
            Split::Dev
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub boundaries: SplitBoundaries,
    pub assignment: BTreeMap<CountryMonthKey, Split>,
}

impl SplitAssignment {
    pub fn split_of(&self, key: &CountryMonthKey) -> Option<Split> {
        self.assignment.get(key).copied()
    }

    /// Number of samples per split when every key is expanded into `folds`
    /// bootstrap collections.
    pub fn sample_counts(&self, folds: usize) -> SplitCounts {
        let mut c = SplitCounts::default();
        for s in self.assignment.values() {
            match s {
                Split::Train => c.train += folds,
                Split::Dev => c.dev += folds,
                Split::Test => c.test += folds,
            }
        }
        c
    }
}

pub fn make_splits<'a>(
    keys: impl IntoIterator<Item = &'a CountryMonthKey>,
    folds: usize,
    boundaries: SplitBoundaries,
) -> (SplitAssignment, SplitCounts) {
    let assignment = keys
        .into_iter()
        .map(|k| (k.clone(), boundaries.classify(k.month)))
        .collect();
    let split = SplitAssignment {
        boundaries,
        assignment,
    };
    let counts = split.sample_counts(folds);
    (split, counts)
}

pub(crate) fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

pub(crate) fn check_header(path: &Path, rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {}, found {}", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn parse_opt(field: &str) -> std::result::Result<Option<f64>, String> {
    if field.is_empty() || field.eq_ignore_ascii_case("na") {
        Ok(None)
    } else {
        field
            .parse::<f64>()
            .map(Some)
            .map_err(|_| format!("bad number {field:?}"))
    }
}

pub const LABEL_HEADER: [&str; 5] = ["country", "month", "fci", "food_price", "social_events"];

pub fn parse_labels(path: &Path, text: &str) -> Result<Vec<LabelRow>> {
    let mut rdr = csv_reader(text);
    check_header(path, &mut rdr, &LABEL_HEADER)?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 5 {
            return Err(Error::parse(path, line, format!("expected 5 fields, got {}", rec.len())));
        }
        let month: Month = rec[1].parse().map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        let fci: f64 = rec[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad fci {:?}", &rec[2])))?;
        let food_price = parse_opt(&rec[3]).map_err(|m| Error::parse(path, line, m))?;
        let social_events = parse_opt(&rec[4]).map_err(|m| Error::parse(path, line, m))?;
        let row = LabelRow {
            key: CountryMonthKey::new(&rec[0], month),
            fci,
            food_price,
            social_events,
        };
        row.validate()
            .map_err(|e| Error::Validation(format!("{}:{line}: {e}", path.display())))?;
        if !seen.insert(row.key.clone()) {
            return Err(Error::Validation(format!(
                "{}:{line}: duplicate label row for {}",
                path.display(),
                row.key
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelRow>> {
    parse_labels(path, &read_to_string(path)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn labels_to_csv(rows: &[LabelRow], meta: Option<&Meta>) -> String {
    let mut out = String::new();
    if let Some(m) = meta {
        out.push_str(&m.comment_line());
    }
    out.push_str(&LABEL_HEADER.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.key.country,
            r.key.month,
            r.fci,
            fmt_opt(r.food_price),
            fmt_opt(r.social_events)
        ));
    }
    out
}

pub fn write_labels(rows: &[LabelRow], path: &Path, meta: Option<&Meta>) -> Result<()> {
    atomic_write(path, labels_to_csv(rows, meta).as_bytes())
}

/// Parses corpus JSONL. Blank lines and a leading `{"meta": ...}` line are
/// ignored.
pub fn parse_corpus(path: &Path, text: &str) -> Result<Vec<CorpusArticle>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || (out.is_empty() && line.starts_with("{\"meta\":")) {
            continue;
        }
        let art: CorpusArticle = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        art.validate()
            .map_err(|e| Error::Validation(format!("{}:{line_no}: {e}", path.display())))?;
        if !ids.insert(art.article_id.clone()) {
            return Err(Error::Validation(format!(
                "{}:{line_no}: duplicate article_id {}",
                path.display(),
                art.article_id
            )));
        }
        out.push(art);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusArticle>> {
    parse_corpus(path, &read_to_string(path)?)
}

pub fn corpus_to_jsonl(articles: &[CorpusArticle], meta: Option<&Meta>) -> Result<String> {
    let mut out = String::new();
    if let Some(m) = meta {
        out.push_str(&serde_json::to_string(&serde_json::json!({ "meta": m }))?);
        out.push('\n');
    }
    for a in articles {
        out.push_str(&serde_json::to_string(a)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_corpus(articles: &[CorpusArticle], path: &Path, meta: Option<&Meta>) -> Result<()> {
    atomic_write(path, corpus_to_jsonl(articles, meta)?.as_bytes())
}

/// Groups articles by country-month key.
pub fn group_by_key(articles: &[CorpusArticle]) -> BTreeMap<CountryMonthKey, Vec<&CorpusArticle>> {
    let mut map: BTreeMap<CountryMonthKey, Vec<&CorpusArticle>> = BTreeMap::new();
    for a in articles {
        map.entry(a.key()).or_default().push(a);
    }
    map
}

/// Parses `country,month,phase` rows into one series per country, in file order.
pub fn parse_ipc(path: &Path, text: &str) -> Result<Vec<QuarterlyIpcSeries>> {
    let mut rdr = csv_reader(text);
    check_header(path, &mut rdr, &["country", "month", "phase"])?;
    let mut by_country: BTreeMap<String, Vec<(Month, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(Error::parse(path, line, format!("expected 3 fields, got {}", rec.len())));
        }
        let month: Month = rec[1].parse().map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        let phase: f64 = rec[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad phase {:?}", &rec[2])))?;
        by_country.entry(rec[0].to_string()).or_default().push((month, phase));
    }
    Ok(by_country
        .into_iter()
        .map(|(country, points)| QuarterlyIpcSeries { country, points })
        .collect())
}

pub fn load_ipc(path: &Path) -> Result<Vec<QuarterlyIpcSeries>> {
    parse_ipc(path, &read_to_string(path)?)
}

/// Distinct countries among `keys`, sorted.
pub fn countries<'a>(keys: impl IntoIterator<Item = &'a CountryMonthKey>) -> BTreeSet<String> {
    keys.into_iter().map(|k| k.country.clone()).collect()
}
