//! Command-line front end. Every subcommand reads its inputs, writes its
//! outputs atomically under the output directory and stamps them with the
//! config hash and seed.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baseline::{build_design, fit_adl, keyword_features, load_traditional, predict_adl, FeaturePanel, KeywordConfig};
use crate::bootstrap::{augment, build_pools, corpus_medians, load_manifest, write_manifest};
use crate::config::RunConfig;
use crate::embedding::read_table;
use crate::error::{Error, Result};
use crate::gist::{extract_gists, summarize, GistReport, Side};
use crate::io::{atomic_write, read_to_string, Meta};
use crate::model::{AttentionMode, Checkpoint, TaskWeights};
use crate::panel::{interpolate_ipc, load_corpus, load_ipc, load_labels, make_splits, write_labels, LabelRow, Split};
use crate::pipeline::{assemble_samples, score_sentences, split_samples};
use crate::synth::generate;
use crate::text::{preprocess, Vocabulary};
use crate::topics::{fit_lda, profile_gists, profiles_tsv, restrict, TopicModel};
use crate::trainer::{evaluate, rmse, train, EvalReport, StopReason};

#[derive(Debug, Parser)]
#[command(name = "gistcast", version, about = "Food-crisis forecasting from news text")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Loss weights for fci, food price and social events, e.g. `1,0,0`.
    #[arg(long, global = true)]
    pub task_weights: Option<TaskWeights>,
    #[arg(long, global = true, value_enum)]
    pub attention: Option<AttentionArg>,
    /// Select gists separately inside each country.
    #[arg(long, global = true)]
    pub per_country: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AttentionArg {
    Softmax,
    Raw,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, embeddings, labels and covariates.
    Synth,
    /// Turn quarterly IPC phases into a monthly fci series.
    Interpolate {
        #[arg(long)]
        ipc: Option<PathBuf>,
    },
    /// Build the bootstrap manifest of pseudo-collections.
    Bootstrap,
    /// Train the attention model for the selected task weights.
    Train,
    /// Evaluate a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Extract high and low gist sentences from test collections.
    Gist {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Fit the topic model and profile the gists.
    Topics,
    /// Fit and evaluate the ADL baseline.
    Baseline,
    /// Assemble the results table and gist/topic summaries.
    Report,
}

/// Builds the effective configuration from the file and flag overrides.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.paths.out = Some(o.clone());
    }
    if let Some(w) = g.task_weights {
        cfg.train.task_weights = w;
    }
    if let Some(a) = g.attention {
        cfg.model.attention = match a {
            AttentionArg::Softmax => AttentionMode::Softmax,
            AttentionArg::Raw => AttentionMode::Raw,
        };
    }
    if g.per_country {
        cfg.gist.per_country = true;
    }
    cfg.propagate_seed();
    cfg.validate()?;
    Ok(cfg)
}

/// Directory name for a task-weight variant.
pub fn variant_slug(w: &TaskWeights, attention: AttentionMode) -> String {
    let base = match w.0 {
        [1.0, 0.0, 0.0] => "single".to_string(),
        [1.0, 1.0, 0.0] => "double_price".to_string(),
        [1.0, 0.0, 1.0] => "double_social".to_string(),
        [1.0, 1.0, 1.0] => "triple".to_string(),
        [a, b, c] => format!("w{a}_{b}_{c}"),
    };
    match attention {
        AttentionMode::Softmax => base,
        AttentionMode::Raw => format!("{base}_raw"),
    }
}

pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("runs").join(variant_slug(&cfg.train.task_weights, cfg.model.attention))
}

pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("manifest.jsonl")
}

fn write_json<T: Serialize>(path: &Path, value: &T, meta: &Meta) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("meta".into(), serde_json::to_value(meta)?);
    }
    atomic_write(path, (serde_json::to_string_pretty(&v)? + "\n").as_bytes())
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    match &cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Interpolate { ipc } => cmd_interpolate(&cfg, ipc.as_deref()),
        Command::Bootstrap => cmd_bootstrap(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Evaluate { checkpoint, split } => cmd_evaluate(&cfg, checkpoint.as_deref(), *split),
        Command::Gist { checkpoint } => cmd_gist(&cfg, checkpoint.as_deref()),
        Command::Topics => cmd_topics(&cfg),
        Command::Baseline => cmd_baseline(&cfg),
        Command::Report => cmd_report(&cfg),
    }
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let data = generate(&cfg.synth)?;
    data.write(&cfg.out_dir(), &cfg.meta())?;
    log::info!("wrote {} articles and {} sentences", data.corpus.len(), data.embeddings.len());
    Ok(())
}

fn cmd_interpolate(cfg: &RunConfig, ipc: Option<&Path>) -> Result<()> {
    let path = ipc
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.ipc.clone())
        .ok_or_else(|| Error::InvalidArgument("no IPC input: pass --ipc or set paths.ipc".into()))?;
    let mut rows = Vec::new();
    for series in load_ipc(&path)? {
        for (month, fci) in interpolate_ipc(&series, None)? {
            rows.push(LabelRow {
                key: crate::panel::CountryMonthKey::new(series.country.clone(), month),
                fci,
                food_price: None,
                social_events: None,
            });
        }
    }
    write_labels(&rows, &cfg.out_dir().join("interpolated.csv"), Some(&cfg.meta()))
}

#[derive(Serialize)]
struct BootstrapSummary {
    collections: usize,
    pseudo_articles: usize,
    sentence_slots: usize,
    m: usize,
    n: usize,
    k: usize,
    corpus_median_sentences_per_article: usize,
    corpus_median_articles_per_key: usize,
    skipped_keys: Vec<String>,
    split_counts: crate::panel::SplitCounts,
}

fn cmd_bootstrap(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&cfg.corpus_path())?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let params = cfg.bootstrap_params();
    let (pools, empty) = build_pools(&corpus);
    let aug = augment(&pools, &params)?;
    let meta = cfg.meta();
    write_manifest(&aug.collections, &manifest_path(cfg), Some(&meta))?;
    let (med_s, med_a) = corpus_medians(&corpus)?;
    let (_, split_counts) = make_splits(pools.keys(), params.folds, cfg.splits);
    let summary = BootstrapSummary {
        collections: aug.collections.len(),
        pseudo_articles: aug.article_count(),
        sentence_slots: aug.sentence_slots(),
        m: params.articles_per_collection,
        n: params.sentences_per_article,
        k: params.folds,
        corpus_median_sentences_per_article: med_s,
        corpus_median_articles_per_key: med_a,
        skipped_keys: empty.iter().chain(&aug.skipped).map(|k| k.to_string()).collect(),
        split_counts,
    };
    write_json(&cfg.out_dir().join("bootstrap.json"), &summary, &meta)?;
    log::info!("{} collections, {} pseudo-articles", summary.collections, summary.pseudo_articles);
    Ok(())
}

struct Inputs {
    collections: Vec<crate::bootstrap::PseudoCollection>,
    table: crate::embedding::EmbeddingTable,
    labels: Vec<LabelRow>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    Ok(Inputs {
        collections: load_manifest(&manifest_path(cfg))?,
        table: read_table(&cfg.embeddings_path(), None)?,
        labels: load_labels(&cfg.labels_path())?,
    })
}

#[derive(Serialize)]
struct TrainSummary {
    variant: String,
    task_weights: TaskWeights,
    stop_reason: StopReason,
    best_step: usize,
    best_dev_rmse_fci: f64,
    steps_run: usize,
    samples: crate::panel::SplitCounts,
    skipped_keys: Vec<String>,
    test: Option<EvalReport>,
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let inp = load_inputs(cfg)?;
    let (samples, skipped) = assemble_samples(&inp.collections, &inp.table, &inp.labels)?;
    let sp = split_samples(samples, &cfg.splits);
    let model = cfg.model_config(inp.table.dim());
    let report = train(&sp.train, &sp.dev, model, &cfg.train)?;
    let test = if sp.test.is_empty() { None } else { Some(evaluate(&report.best_params, &report.scaler, &sp.test)?) };

    let meta = cfg.meta();
    let dir = run_dir(cfg);
    let ckpt = Checkpoint {
        params: report.best_params.clone(),
        scaler: report.scaler,
        task_weights: Some(report.task_weights),
        meta: Some(meta.clone()),
    };
    ckpt.save(&dir.join("checkpoint.json"))?;
    atomic_write(&dir.join("train_log.csv"), (meta.comment_line() + &report.history_csv()).as_bytes())?;
    let summary = TrainSummary {
        variant: report.task_weights.variant_name(),
        task_weights: report.task_weights,
        stop_reason: report.stop_reason,
        best_step: report.best_step,
        best_dev_rmse_fci: report.best_dev_rmse,
        steps_run: report.steps_run,
        samples: crate::panel::SplitCounts { train: sp.train.len(), dev: sp.dev.len(), test: sp.test.len() },
        skipped_keys: skipped.iter().map(|k| k.to_string()).collect(),
        test,
    };
    write_json(&dir.join("train_report.json"), &summary, &meta)?;
    log::info!("best dev fci rmse {:.4} at step {}", report.best_dev_rmse, report.best_step);
    Ok(())
}

fn load_checkpoint(cfg: &RunConfig, explicit: Option<&Path>) -> Result<Checkpoint> {
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| run_dir(cfg).join("checkpoint.json"));
    Checkpoint::load(&path)
}

#[derive(Serialize)]
struct EvalSummary {
    variant: String,
    split: Split,
    #[serde(flatten)]
    report: EvalReport,
}

fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, split: SplitArg) -> Result<()> {
    let ckpt = load_checkpoint(cfg, checkpoint)?;
    let inp = load_inputs(cfg)?;
    let (samples, _) = assemble_samples(&inp.collections, &inp.table, &inp.labels)?;
    let sp = split_samples(samples, &cfg.splits);
    let (split, data) = match split {
        SplitArg::Train => (Split::Train, sp.train),
        SplitArg::Dev => (Split::Dev, sp.dev),
        SplitArg::Test => (Split::Test, sp.test),
    };
    let report = evaluate(&ckpt.params, &ckpt.scaler, &data)?;
    let weights = ckpt.task_weights.unwrap_or(cfg.train.task_weights);
    let name = format!("eval_{}.json", serde_json::to_value(split)?.as_str().unwrap_or("split"));
    let summary = EvalSummary { variant: weights.variant_name(), split, report };
    write_json(&run_dir(cfg).join(name), &summary, &cfg.meta())
}

fn cmd_gist(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let ckpt = load_checkpoint(cfg, checkpoint)?;
    let collections: Vec<_> = load_manifest(&manifest_path(cfg))?
        .into_iter()
        .filter(|c| cfg.splits.classify(c.key.month) == Split::Test)
        .collect();
    if collections.is_empty() {
        return Err(Error::EmptyDataset("no test collections for gist extraction".into()));
    }
    let table = read_table(&cfg.embeddings_path(), None)?;
    let corpus = load_corpus(&cfg.corpus_path())?;
    let texts: HashMap<String, &str> = corpus
        .iter()
        .flat_map(|a| a.sentences.iter().enumerate().map(move |(i, s)| (a.sentence_id(i), s.as_str())))
        .collect();
    let population = score_sentences(&ckpt.params, &collections, &table)?;
    let report = extract_gists(&population, cfg.gist.fraction, cfg.gist.per_country, &|id| {
        texts.get(id).map(|s| s.to_string())
    })?;
    let meta = cfg.meta();
    let dir = run_dir(cfg);
    atomic_write(&dir.join("gists.tsv"), report.to_tsv(Some(&meta)).as_bytes())?;
    let summary = summarize(&report, &population, Some(meta.clone()));
    atomic_write(&dir.join("gist_summary.json"), (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())
}

fn cmd_topics(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&cfg.corpus_path())?;
    let docs: Vec<Vec<String>> = corpus.iter().map(|a| preprocess(&a.sentences.join(" "))).collect();
    let vocab = Vocabulary::from_docs(&docs, cfg.lda.min_df, cfg.lda.max_df_fraction);
    let docs: Vec<Vec<String>> = restrict(&docs, &vocab).into_iter().filter(|d| !d.is_empty()).collect();
    log::info!("fitting {} topics on {} documents, {} terms", cfg.lda.k, docs.len(), vocab.len());
    let model = fit_lda(&docs, &cfg.lda)?;
    let meta = cfg.meta();
    let dir = cfg.out_dir().join("topics");
    atomic_write(&dir.join("topic_model.json"), model.to_json(Some(&meta))?.as_bytes())?;
    atomic_write(&dir.join("topics.tsv"), model.summary_tsv(15, Some(&meta)).as_bytes())?;

    let gists = run_dir(cfg).join("gists.tsv");
    if gists.exists() {
        let rows = GistReport::parse_tsv_sentences(&read_to_string(&gists)?)?;
        let side = |s: Side| -> Vec<(String, Vec<String>)> {
            rows.iter().filter(|r| r.0 == s).map(|r| (r.1.clone(), preprocess(&r.2))).collect()
        };
        let (high, low) = profile_gists(&side(Side::High), &side(Side::Low), &model, cfg.lda.infer_iterations, cfg.seed);
        atomic_write(&run_dir(cfg).join("profile.tsv"), profiles_tsv(&[&high, &low], Some(&meta)).as_bytes())?;
    } else {
        log::warn!("{} not found; skipping gist profiles", gists.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct BaselineSummary {
    rows_train: usize,
    rows_test: usize,
    dropped_rows: usize,
    columns: usize,
    test: EvalReport,
}

fn cmd_baseline(cfg: &RunConfig) -> Result<()> {
    let labels = load_labels(&cfg.labels_path())?;
    let traditional = load_traditional(&cfg.traditional_path())?;
    let fci: BTreeMap<_, _> = labels.iter().map(|l| (l.key.clone(), l.fci)).collect();
    let kw_path = cfg.keywords_path();
    let keywords = if cfg.baseline.keywords && kw_path.exists() {
        let kw = KeywordConfig::load(&kw_path)?;
        let corpus = load_corpus(&cfg.corpus_path())?;
        let feats = keyword_features(&corpus, &kw);
        Some((kw, feats))
    } else {
        None
    };
    let panel = FeaturePanel::assemble(&fci, &traditional, keywords.as_ref().map(|(k, f)| (k, f)));
    let opts = cfg.design_options();
    let design = build_design(&panel, &opts)?;
    let train_d = design.filter(|k| cfg.splits.classify(k.month) == Split::Train);
    let test_d = design.filter(|k| cfg.splits.classify(k.month) == Split::Test);
    if test_d.rows() == 0 {
        return Err(Error::NoUsableRows("no test rows for the baseline".into()));
    }
    let meta = cfg.meta();
    let mut model = fit_adl(&train_d, cfg.baseline.lambda, &opts)?;
    model.meta = Some(meta.clone());
    let pred = predict_adl(&model, &test_d)?;
    let mut by_country: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (k, (p, y)) in test_d.keys.iter().zip(pred.iter().zip(&test_d.y)) {
        by_country.entry(k.country.clone()).or_default().push(p - y);
    }
    let test = EvalReport {
        n: test_d.rows(),
        rmse_fci: rmse(pred.iter().zip(&test_d.y).map(|(p, y)| p - y)),
        per_country: by_country.into_iter().map(|(c, e)| (c, rmse(e))).collect(),
        rmse_price: f64::NAN,
        rmse_social: f64::NAN,
    };
    let dir = cfg.out_dir().join("baseline");
    atomic_write(&dir.join("adl_model.json"), model.to_json()?.as_bytes())?;
    let summary = BaselineSummary {
        rows_train: train_d.rows(),
        rows_test: test_d.rows(),
        dropped_rows: design.dropped.len(),
        columns: design.columns.len(),
        test,
    };
    write_json(&dir.join("eval.json"), &summary, &meta)
}

const VARIANT_ORDER: [&str; 4] = ["single", "double_price", "double_social", "triple"];

fn fmt_rmse(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.3}"),
        _ => "-".into(),
    }
}

fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    // (column title, overall, per country)
    let mut columns: Vec<(String, f64, BTreeMap<String, f64>)> = Vec::new();
    let per_country = |v: &serde_json::Value| -> BTreeMap<String, f64> {
        v["per_country"]
            .as_object()
            .map(|m| m.iter().filter_map(|(k, x)| x.as_f64().map(|f| (k.clone(), f))).collect())
            .unwrap_or_default()
    };
    let base = out.join("baseline").join("eval.json");
    if base.exists() {
        let v = read_json(&base)?;
        columns.push(("Baseline".into(), v["test"]["rmse_fci"].as_f64().unwrap_or(f64::NAN), per_country(&v["test"])));
    }
    let runs = out.join("runs");
    let mut slugs: Vec<String> = match std::fs::read_dir(&runs) {
        Ok(rd) => rd.filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).map(|e| e.file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    slugs.sort_by_key(|s| (VARIANT_ORDER.iter().position(|v| v == s).unwrap_or(VARIANT_ORDER.len()), s.clone()));
    let mut gist_notes = Vec::new();
    for slug in &slugs {
        let dir = runs.join(slug);
        let eval = dir.join("eval_test.json");
        let train = dir.join("train_report.json");
        let (title, v) = if eval.exists() {
            let v = read_json(&eval)?;
            (v["variant"].as_str().unwrap_or(slug).to_string(), v)
        } else if train.exists() {
            let v = read_json(&train)?;
            let t = v["variant"].as_str().unwrap_or(slug).to_string();
            (t, v["test"].clone())
        } else {
            continue;
        };
        if v.is_null() {
            continue;
        }
        let title = if slug.ends_with("_raw") { format!("{title} (raw attention)") } else { title };
        columns.push((title.clone(), v["rmse_fci"].as_f64().unwrap_or(f64::NAN), per_country(&v)));
        let gs = dir.join("gist_summary.json");
        if gs.exists() {
            let g = read_json(&gs)?;
            gist_notes.push(format!(
                "- {title}: {} high and {} low sentences from a population of {}",
                g["selected_per_side"], g["selected_per_side"], g["population_size"]
            ));
        }
        let prof = dir.join("profile.tsv");
        if prof.exists() {
            let text = read_to_string(&prof)?;
            let mut by_side: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("side\t")) {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() == 3 {
                    let mass: f64 = cols[2].parse().unwrap_or(f64::NAN);
                    by_side.entry(cols[0].to_string()).or_default().push(format!("{}:{mass:.2}", cols[1]));
                }
            }
            for (side, masses) in by_side {
                gist_notes.push(format!("  - {side} topic mass: {}", masses.join(" ")));
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::EmptyDataset(format!("no evaluation results under {}", out.display())));
    }

    let countries: std::collections::BTreeSet<String> = columns.iter().flat_map(|c| c.2.keys().cloned()).collect();
    let meta = cfg.meta();
    let mut md = format!("<!-- config_hash={}; seed={} -->\n# Prediction results\n\nTest RMSE of the food crisis index.\n\n", meta.config_hash, meta.seed);
    md.push_str("| Country |");
    for c in &columns {
        md.push_str(&format!(" {} |", c.0));
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(columns.len()));
    md.push('\n');
    for country in &countries {
        md.push_str(&format!("| {country} |"));
        for c in &columns {
            md.push_str(&format!(" {} |", fmt_rmse(c.2.get(country).copied())));
        }
        md.push('\n');
    }
    md.push_str("| Overall |");
    for c in &columns {
        md.push_str(&format!(" {} |", fmt_rmse(Some(c.1))));
    }
    md.push('\n');

    let topics = out.join("topics").join("topic_model.json");
    if topics.exists() {
        let model = TopicModel::from_json(&read_to_string(&topics)?)?;
        md.push_str("\n## Topics\n\n");
        for t in 0..model.k {
            let words: Vec<&str> = model.top_words(t, 10).iter().map(|&(i, _)| model.vocab[i].as_str()).collect();
            md.push_str(&format!("- topic {t}: {}\n", words.join(", ")));
        }
    }
    if !gist_notes.is_empty() {
        md.push_str("\n## Gists\n\n");
        for n in &gist_notes {
            md.push_str(n);
            md.push('\n');
        }
    }
    atomic_write(&out.join("report.md"), md.as_bytes())?;

    let table: Vec<serde_json::Value> = columns
        .iter()
        .map(|(t, o, pc)| serde_json::json!({ "variant": t, "overall": o, "per_country": pc }))
        .collect();
    write_json(&out.join("report.json"), &serde_json::json!({ "columns": table }), &meta)
}

/// One-line machine-readable error for stderr.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

/// Same shape as [`error_line`] for command-line parse failures.
pub fn usage_error_line(message: &str) -> String {
    let first = message.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim_start_matches("error: ");
    serde_json::json!({ "error": "usage", "message": first }).to_string()
}
