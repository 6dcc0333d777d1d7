//! Panel autoregressive distributed-lag baseline: lagged fci, lagged
//! traditional and keyword features, time-invariant covariates, fit by
//! ridge regression on standardized columns.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_to_string, Meta};
use crate::panel::{check_header, csv_reader, CorpusArticle, CountryMonthKey, Month};
use crate::text::raw_tokens;

pub const TIME_VARYING: [&str; 5] = ["rainfall", "ndvi", "food_price_index", "conflict_events", "terrain_ruggedness"];
pub const TIME_INVARIANT: [&str; 4] = ["district_size", "cropland_share", "pasture_share", "population"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraditionalRow {
    pub key: CountryMonthKey,
    pub rainfall: f64,
    pub ndvi: f64,
    pub food_price_index: f64,
    pub conflict_events: f64,
    pub terrain_ruggedness: f64,
    pub district_size: f64,
    pub cropland_share: f64,
    pub pasture_share: f64,
    pub population: f64,
}

impl TraditionalRow {
    pub fn time_varying(&self) -> [f64; 5] {
        [self.rainfall, self.ndvi, self.food_price_index, self.conflict_events, self.terrain_ruggedness]
    }

    pub fn time_invariant(&self) -> [f64; 4] {
        [self.district_size, self.cropland_share, self.pasture_share, self.population]
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_varying().iter().chain(&self.time_invariant()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("traditional row {}", self.key)));
        }
        for (name, v) in [("cropland_share", self.cropland_share), ("pasture_share", self.pasture_share)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} {v} outside [0, 1] at {}", self.key)));
            }
        }
        Ok(())
    }
}

fn traditional_header() -> Vec<&'static str> {
    let mut h = vec!["country", "month"];
    h.extend(TIME_VARYING);
    h.extend(TIME_INVARIANT);
    h
}

pub fn parse_traditional(path: &Path, text: &str) -> Result<Vec<TraditionalRow>> {
    let header = traditional_header();
    let mut rdr = csv_reader(text);
    check_header(path, &mut rdr, &header)?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::parse(path, line, format!("expected {} fields, got {}", header.len(), rec.len())));
        }
        let month: Month = rec[1].parse().map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        let mut v = [0.0; 9];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = rec[i + 2]
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad {} {:?}", header[i + 2], &rec[i + 2])))?;
        }
        let row = TraditionalRow {
            key: CountryMonthKey::new(&rec[0], month),
            rainfall: v[0],
            ndvi: v[1],
            food_price_index: v[2],
            conflict_events: v[3],
            terrain_ruggedness: v[4],
            district_size: v[5],
            cropland_share: v[6],
            pasture_share: v[7],
            population: v[8],
        };
        row.validate()
            .map_err(|e| Error::Validation(format!("{}:{line}: {e}", path.display())))?;
        if !seen.insert(row.key.clone()) {
            return Err(Error::Validation(format!("{}:{line}: duplicate row for {}", path.display(), row.key)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_traditional(path: &Path) -> Result<Vec<TraditionalRow>> {
    parse_traditional(path, &read_to_string(path)?)
}

pub fn traditional_to_csv(rows: &[TraditionalRow], meta: Option<&Meta>) -> String {
    let mut out = String::new();
    if let Some(m) = meta {
        out.push_str(&m.comment_line());
    }
    out.push_str(&traditional_header().join(","));
    out.push('\n');
    for r in rows {
        let vals: Vec<String> = r.time_varying().iter().chain(&r.time_invariant()).map(f64::to_string).collect();
        out.push_str(&format!("{},{},{}\n", r.key.country, r.key.month, vals.join(",")));
    }
    out
}

pub fn write_traditional(rows: &[TraditionalRow], path: &Path, meta: Option<&Meta>) -> Result<()> {
    atomic_write(path, traditional_to_csv(rows, meta).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordConfig {
    pub keywords: Vec<String>,
}

impl KeywordConfig {
    pub fn new(keywords: Vec<String>) -> Result<Self> {
        if keywords.is_empty() {
            return Err(Error::Validation("keyword list is empty".into()));
        }
        let mut seen = HashSet::new();
        for k in &keywords {
            if k.is_empty() || *k != k.to_lowercase() || k.chars().any(|c| !c.is_alphanumeric()) {
                return Err(Error::Validation(format!("keyword {k:?} must be one lowercase token")));
            }
            if !seen.insert(k) {
                return Err(Error::Validation(format!("duplicate keyword {k:?}")));
            }
        }
        Ok(KeywordConfig { keywords })
    }

    /// One term per line; blank lines and `#` comments skipped, terms
    /// lowercased.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.keywords.iter().map(|k| format!("{k}\n")).collect()
    }
}

/// Keyword frequencies per country-month: whole-token, case-insensitive
/// counts divided by the month's total token count.
pub fn keyword_features(corpus: &[CorpusArticle], cfg: &KeywordConfig) -> BTreeMap<CountryMonthKey, Vec<f64>> {
    let index: BTreeMap<&str, usize> = cfg.keywords.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let mut counts: BTreeMap<CountryMonthKey, (Vec<usize>, usize)> = BTreeMap::new();
    for art in corpus {
        let entry = counts.entry(art.key()).or_insert_with(|| (vec![0; cfg.keywords.len()], 0));
        for sentence in &art.sentences {
            for tok in raw_tokens(sentence) {
                entry.1 += 1;
                if let Some(&i) = index.get(tok.as_str()) {
                    entry.0[i] += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|(key, (c, total))| {
            let freq = if total == 0 { vec![0.0; c.len()] } else { c.iter().map(|&n| n as f64 / total as f64).collect() };
            (key, freq)
        })
        .collect()
}

/// Observations for the design matrix. Missing values are `None`.
#[derive(Debug, Clone, Default)]
pub struct FeaturePanel {
    pub time_varying: Vec<String>,
    pub time_invariant: Vec<String>,
    pub rows: BTreeMap<CountryMonthKey, PanelObs>,
}

#[derive(Debug, Clone, Default)]
pub struct PanelObs {
    pub y: Option<f64>,
    pub time_varying: Vec<Option<f64>>,
    pub time_invariant: Vec<Option<f64>>,
}

impl FeaturePanel {
    /// Combines fci targets with traditional rows and, optionally, keyword
    /// frequencies. Keys missing from the keyword map count as empty months.
    pub fn assemble(
        fci: &BTreeMap<CountryMonthKey, f64>,
        traditional: &[TraditionalRow],
        keywords: Option<(&KeywordConfig, &BTreeMap<CountryMonthKey, Vec<f64>>)>,
    ) -> Self {
        let mut tv: Vec<String> = TIME_VARYING.iter().map(|s| s.to_string()).collect();
        if let Some((cfg, _)) = keywords {
            tv.extend(cfg.keywords.iter().map(|k| format!("kw_{k}")));
        }
        let trad: BTreeMap<&CountryMonthKey, &TraditionalRow> = traditional.iter().map(|r| (&r.key, r)).collect();
        let keys: BTreeSet<&CountryMonthKey> = fci.keys().chain(trad.keys().copied()).collect();
        let n_kw = keywords.map_or(0, |(c, _)| c.keywords.len());
        let rows = keys
            .into_iter()
            .map(|key| {
                let t = trad.get(key);
                let mut tvv: Vec<Option<f64>> = match t {
                    Some(r) => r.time_varying().iter().map(|&v| Some(v)).collect(),
                    None => vec![None; TIME_VARYING.len()],
                };
                if let Some((_, kw)) = keywords {
                    match kw.get(key) {
                        Some(f) => tvv.extend(f.iter().map(|&v| Some(v))),
                        None => tvv.extend(std::iter::repeat_n(Some(0.0), n_kw)),
                    }
                }
                let inv = match t {
                    Some(r) => r.time_invariant().iter().map(|&v| Some(v)).collect(),
                    None => vec![None; TIME_INVARIANT.len()],
                };
                (key.clone(), PanelObs { y: fci.get(key).copied(), time_varying: tvv, time_invariant: inv })
            })
            .collect();
        FeaturePanel {
            time_varying: tv,
            time_invariant: TIME_INVARIANT.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    pub lag_min: usize,
    pub lag_max: usize,
    /// Adds one intercept dummy per country after the first.
    pub country_dummies: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions { lag_min: 3, lag_max: 8, country_dummies: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub columns: Vec<String>,
    /// Row-major, `keys.len()` rows of `columns.len()` values.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub keys: Vec<CountryMonthKey>,
    /// Keys with a target but an incomplete lag history.
    pub dropped: Vec<CountryMonthKey>,
}

impl Design {
    pub fn rows(&self) -> usize {
        self.keys.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.columns.len();
        &self.x[i * p..(i + 1) * p]
    }

    /// Rows whose key satisfies `keep`, in order.
    pub fn filter(&self, keep: impl Fn(&CountryMonthKey) -> bool) -> Design {
        let mut out = Design { columns: self.columns.clone(), x: Vec::new(), y: Vec::new(), keys: Vec::new(), dropped: Vec::new() };
        for i in 0..self.rows() {
            if keep(&self.keys[i]) {
                out.x.extend_from_slice(self.row(i));
                out.y.push(self.y[i]);
                out.keys.push(self.keys[i].clone());
            }
        }
        out.dropped = self.dropped.iter().filter(|k| keep(k)).cloned().collect();
        out
    }
}

pub const INTERCEPT: &str = "intercept";

/// One row per key whose target and every required lag are present.
pub fn build_design(panel: &FeaturePanel, opts: &DesignOptions) -> Result<Design> {
    if opts.lag_min > opts.lag_max {
        return Err(Error::InvalidArgument(format!("lag_min {} > lag_max {}", opts.lag_min, opts.lag_max)));
    }
    let lags: Vec<usize> = (opts.lag_min..=opts.lag_max).collect();
    let mut columns: Vec<String> = lags.iter().map(|l| format!("fci_lag{l}")).collect();
    for f in &panel.time_varying {
        columns.extend(lags.iter().map(|l| format!("{f}_lag{l}")));
    }
    columns.extend(panel.time_invariant.iter().cloned());
    let countries: Vec<&str> = panel.rows.keys().map(|k| k.country.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    if opts.country_dummies {
        columns.extend(countries.iter().skip(1).map(|c| format!("country_{c}")));
    }
    columns.push(INTERCEPT.to_string());

    let mut d = Design { columns, x: Vec::new(), y: Vec::new(), keys: Vec::new(), dropped: Vec::new() };
    let mut row = Vec::with_capacity(d.columns.len());
    'rows: for (key, obs) in &panel.rows {
        let Some(y) = obs.y else { continue };
        row.clear();
        let lagged = |l: usize| panel.rows.get(&CountryMonthKey::new(key.country.clone(), key.month.offset(-(l as i64))));
        for &l in &lags {
            match lagged(l).and_then(|o| o.y) {
                Some(v) => row.push(v),
                None => {
                    d.dropped.push(key.clone());
                    continue 'rows;
                }
            }
        }
        for f in 0..panel.time_varying.len() {
            for &l in &lags {
                match lagged(l).and_then(|o| o.time_varying.get(f).copied().flatten()) {
                    Some(v) => row.push(v),
                    None => {
                        d.dropped.push(key.clone());
                        continue 'rows;
                    }
                }
            }
        }
        for v in &obs.time_invariant {
            match v {
                Some(v) => row.push(*v),
                None => {
                    d.dropped.push(key.clone());
                    continue 'rows;
                }
            }
        }
        if opts.country_dummies {
            row.extend(countries.iter().skip(1).map(|c| if *c == key.country { 1.0 } else { 0.0 }));
        }
        row.push(1.0);
        d.x.extend_from_slice(&row);
        d.y.push(y);
        d.keys.push(key.clone());
    }
    if d.keys.is_empty() {
        return Err(Error::NoUsableRows(format!(
            "no row has a full lag history for lags {}..{}",
            opts.lag_min, opts.lag_max
        )));
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdlModel {
    pub lag_min: usize,
    pub lag_max: usize,
    pub lambda: f64,
    /// Raw-scale coefficients in design column order; the intercept is last.
    pub coefficients: Vec<Coefficient>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub meta: Option<Meta>,
}

pub const DEFAULT_LAMBDA: f64 = 1e-3;

impl AdlModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|c| c.name == name).map(|c| c.value)
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.coefficients.iter().map(|c| c.name.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Ridge fit with columns z-scored by the design's own statistics. The
/// intercept is unpenalized, which makes it `mean(y)` in standardized
/// space. Solved by SVD: `beta = V diag(s / (s^2 + lambda)) U^T (y - mean)`.
pub fn fit_adl(design: &Design, lambda: f64, opts: &DesignOptions) -> Result<AdlModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge lambda {lambda} must be finite and >= 0")));
    }
    let n = design.rows();
    if n == 0 {
        return Err(Error::NoUsableRows("empty design".into()));
    }
    let p_all = design.columns.len();
    let icpt = design.columns.iter().position(|c| c == INTERCEPT);
    let feat: Vec<usize> = (0..p_all).filter(|&j| Some(j) != icpt).collect();
    let p = feat.len();
    if design.x.iter().chain(&design.y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix".into()));
    }

    let mut means = vec![0.0; p_all];
    let mut stds = vec![1.0; p_all];
    for &j in &feat {
        let m = (0..n).map(|i| design.row(i)[j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (design.row(i)[j] - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        stds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let y_mean = design.y.iter().sum::<f64>() / n as f64;

    let z = DMatrix::from_fn(n, p, |i, c| {
        let j = feat[c];
        (design.row(i)[j] - means[j]) / stds[j]
    });
    let yc = DVector::from_iterator(n, design.y.iter().map(|y| y - y_mean));

    let beta_z = if p == 0 {
        DVector::zeros(0)
    } else {
        let svd = z.svd(true, true);
        let s = &svd.singular_values;
        let s_max = s.iter().copied().fold(0.0, f64::max);
        if lambda == 0.0 && (s.len() < p || s.iter().any(|&v| v <= 1e-10 * s_max.max(f64::MIN_POSITIVE))) {
            return Err(Error::RankDeficient);
        }
        let u = svd.u.as_ref().unwrap();
        let v_t = svd.v_t.as_ref().unwrap();
        let uty = u.transpose() * &yc;
        let scaled = DVector::from_iterator(s.len(), s.iter().zip(uty.iter()).map(|(&si, &c)| {
            let d = si * si + lambda;
            if d > 0.0 { si * c / d } else { 0.0 }
        }));
        v_t.transpose() * scaled
    };

    let mut raw = vec![0.0; p_all];
    let mut intercept = y_mean;
    for (c, &j) in feat.iter().enumerate() {
        raw[j] = beta_z[c] / stds[j];
        intercept -= raw[j] * means[j];
    }
    if let Some(j) = icpt {
        raw[j] = intercept;
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge coefficients".into()));
    }
    Ok(AdlModel {
        lag_min: opts.lag_min,
        lag_max: opts.lag_max,
        lambda,
        coefficients: design.columns.iter().zip(raw).map(|(name, value)| Coefficient { name: name.clone(), value }).collect(),
        column_means: means,
        column_stds: stds,
        rows: n,
        meta: None,
    })
}

/// `X beta` in fci units. Columns must match the training schema exactly.
pub fn predict_adl(model: &AdlModel, design: &Design) -> Result<Vec<f64>> {
    for (i, want) in model.columns().enumerate() {
        match design.columns.get(i) {
            Some(got) if got == want => {}
            _ => return Err(Error::SchemaMismatch(want.to_string())),
        }
    }
    if design.columns.len() > model.coefficients.len() {
        return Err(Error::SchemaMismatch(design.columns[model.coefficients.len()].clone()));
    }
    Ok((0..design.rows())
        .map(|i| design.row(i).iter().zip(&model.coefficients).map(|(x, c)| x * c.value).sum())
        .collect())
}
