//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gistcast::baseline::{build_design, fit_adl, keyword_features, predict_adl, DesignOptions, FeaturePanel, PanelObs, DEFAULT_LAMBDA};
use gistcast::bootstrap::{augment, build_pools, BootstrapParams, PseudoArticle, PseudoCollection};
use gistcast::embedding::embed_collection;
use gistcast::gist::{extract_gists, normalize_predictions, article_importance, sentence_scores, Normalization, ScoreBoard};
use gistcast::model::{backward, forward, init_params, loss, AttentionMode, ModelConfig, ModelParams, TaskWeights};
use gistcast::panel::{interpolate_ipc, make_splits, CountryMonthKey, Month, QuarterlyIpcSeries, Split, SplitBoundaries};
use gistcast::pipeline::{assemble_samples, split_samples};
use gistcast::synth::{generate, SynthConfig, SynthData};
use gistcast::topics::{fit_lda, LdaConfig};
use gistcast::trainer::{evaluate, rmse, train, TrainConfig};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn full_bootstrap(seed: u64) -> BootstrapParams {
    BootstrapParams { articles_per_collection: 85, sentences_per_article: 21, folds: 10, seed }
}

// 1. Bootstrap count

fn bootstrap_count() -> Outcome {
    let t0 = Instant::now();
    let data = generate(&SynthConfig::default()).unwrap();
    let (pools, empty) = build_pools(&data.corpus);
    let aug = augment(&pools, &full_bootstrap(0)).unwrap();
    let elapsed = t0.elapsed();
    let colls = aug.collections.len();
    let arts = aug.article_count();
    // every collection holds exactly m articles of n sentences
    let shape_ok = aug.collections.iter().all(|c| c.articles.len() == 85 && c.articles.iter().all(|a| a.sentence_ids.len() == 21));
    let pass = colls == 9 * 44 * 10 && arts == 9 * 44 * 10 * 85 && shape_ok && empty.is_empty() && elapsed < Duration::from_secs(60);
    outcome(pass, format!("{colls} collections, {arts} pseudo-articles in {}", secs(elapsed)))
}

// 2. Split counts

fn split_counts() -> Outcome {
    let data = generate(&SynthConfig::default()).unwrap();
    let (pools, _) = build_pools(&data.corpus);
    let (_, counts) = make_splits(pools.keys(), 10, SplitBoundaries::default());
    // independent count: months per split times countries times folds
    let b = SplitBoundaries::default();
    let start = SynthConfig::default().start;
    let mut oracle = [0usize; 3];
    for i in 0..44 {
        let m = start.offset(i);
        let s = if m <= b.train_end { 0 } else if m <= b.dev_end { 1 } else { 2 };
        oracle[s] += 9 * 10;
    }
    let got = [counts.train, counts.dev, counts.test];
    outcome(got == [2340, 720, 900] && got == oracle, format!("train/dev/test = {}/{}/{}", got[0], got[1], got[2]))
}

// 3. Gradient check

fn oracle_forward(p: &ModelParams, rows: &[Vec<f64>]) -> [f64; 3] {
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|h| match &p.shared {
            Some(s) => (0..s.bias.len())
                .map(|k| {
                    let mut acc = s.bias[k];
                    for (j, hv) in h.iter().enumerate() {
                        acc += s.weight[k * h.len() + j] * hv;
                    }
                    acc.tanh()
                })
                .collect(),
            None => h.clone(),
        })
        .collect();
    let scores: Vec<f64> = z.iter().map(|zi| zi.iter().zip(&p.attn_a).map(|(a, b)| a * b).sum::<f64>() + p.attn_b).collect();
    let w: Vec<f64> = match p.config.attention {
        AttentionMode::Raw => scores,
        AttentionMode::Softmax => {
            let denom: f64 = scores.iter().map(|s| s.exp()).sum();
            scores.iter().map(|s| s.exp() / denom).collect()
        }
    };
    let width = z[0].len();
    let pooled: Vec<f64> = (0..width).map(|k| z.iter().zip(&w).map(|(zi, wi)| wi * zi[k]).sum()).collect();
    std::array::from_fn(|j| p.heads[j].weight.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>() + p.heads[j].bias)
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tw = TaskWeights::new([1.0, 0.7, 1.3]).unwrap();
    let mut worst = 0.0f64;
    let mut worst_forward = 0.0f64;
    let mut combos = BTreeSet::new();
    let instances = 160;
    for i in 0..instances {
        let mode = if i % 2 == 0 { AttentionMode::Softmax } else { AttentionMode::Raw };
        let shared = (i / 2) % 2 == 0;
        combos.insert((i % 2, shared));
        let d = rng.gen_range(1..=8);
        let m = rng.gen_range(1..=6);
        let hidden = rng.gen_range(1..=6);
        let mut p = init_params(ModelConfig::new(d, hidden, shared, mode), rng.gen()).unwrap();
        p.visit_mut(|v| *v += rng.gen_range(-0.3..0.3));
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let e = gistcast::embedding::CollectionEmbedding::new(
            CountryMonthKey::new("GC", Month::new(2020, 1).unwrap()),
            0,
            d,
            rows.concat(),
        )
        .unwrap();
        let y = [rng.gen_range(1.0..5.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];

        let lib = forward(&e, &p).unwrap().preds;
        let ora = oracle_forward(&p, &rows);
        for j in 0..3 {
            worst_forward = worst_forward.max((lib[j] - ora[j]).abs() / ora[j].abs().max(1.0));
        }

        let (_, g) = backward(&e, &p, &y, &tw).unwrap();
        let analytic = g.to_flat();
        let base = p.to_flat();
        let mut q = p.clone();
        let h = 1e-5;
        for (k, &a) in analytic.iter().enumerate() {
            let mut v = base.clone();
            v[k] = base[k] + h;
            q.set_flat(&v);
            let lp = loss(&oracle_forward(&q, &rows), &y, &tw);
            v[k] = base[k] - h;
            q.set_flat(&v);
            let lm = loss(&oracle_forward(&q, &rows), &y, &tw);
            let num = (lp - lm) / (2.0 * h);
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst <= 1e-5 && worst_forward <= 1e-12 && combos.len() == 4 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!("{instances} instances, max relative error {worst:.2e}, forward oracle {worst_forward:.1e}, {}", secs(elapsed)),
    )
}

// 4. Interpolation

fn interpolation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    let mut anchors_exact = true;
    let mut affine_ok = true;
    for _ in 0..200 {
        let mut m = Month::new(2010, rng.gen_range(1..=12)).unwrap();
        let mut pts = Vec::new();
        for _ in 0..rng.gen_range(2..8) {
            pts.push((m, rng.gen_range(1.0..=5.0)));
            m = m.offset(rng.gen_range(1..7));
        }
        let series = QuarterlyIpcSeries { country: "GC".into(), points: pts.clone() };
        let out = interpolate_ipc(&series, Some((pts[0].0.offset(-2), pts[pts.len() - 1].0.offset(2)))).unwrap();
        let map: BTreeMap<Month, f64> = out.iter().copied().collect();
        for &(am, av) in &pts {
            anchors_exact &= map[&am].to_bits() == av.to_bits();
        }
        for &(month, v) in &out {
            let t = month.index() as f64;
            let expect = if month <= pts[0].0 {
                pts[0].1
            } else if month >= pts[pts.len() - 1].0 {
                pts[pts.len() - 1].1
            } else {
                let seg = pts.windows(2).find(|w| w[0].0 <= month && month <= w[1].0).unwrap();
                let (t0, t1) = (seg[0].0.index() as f64, seg[1].0.index() as f64);
                seg[0].1 * (t1 - t) / (t1 - t0) + seg[1].1 * (t - t0) / (t1 - t0)
            };
            worst = worst.max((v - expect).abs());
        }
        // zero second differences strictly inside each segment
        for w in pts.windows(2) {
            let seg: Vec<f64> = Month::range_inclusive(w[0].0, w[1].0).map(|m| map[&m]).collect();
            for s in seg.windows(3) {
                affine_ok &= (s[0] - 2.0 * s[1] + s[2]).abs() <= 1e-12;
            }
        }
    }
    outcome(
        worst <= 1e-12 && anchors_exact && affine_ok,
        format!("max deviation {worst:.1e}, anchors exact: {anchors_exact}, affine segments: {affine_ok}"),
    )
}

// 5. Model vs baseline

fn baseline_rmse(data: &SynthData, b: &SplitBoundaries) -> f64 {
    let fci: BTreeMap<_, _> = data.labels.iter().map(|l| (l.key.clone(), l.fci)).collect();
    let kw = keyword_features(&data.corpus, &data.keywords);
    let panel = FeaturePanel::assemble(&fci, &data.traditional, Some((&data.keywords, &kw)));
    let opts = DesignOptions::default();
    let design = build_design(&panel, &opts).unwrap();
    let train_d = design.filter(|k| b.classify(k.month) == Split::Train);
    let test_d = design.filter(|k| b.classify(k.month) == Split::Test);
    let model = fit_adl(&train_d, DEFAULT_LAMBDA, &opts).unwrap();
    let pred = predict_adl(&model, &test_d).unwrap();
    rmse(pred.iter().zip(&test_d.y).map(|(p, y)| p - y))
}

fn model_vs_baseline() -> Outcome {
    let t0 = Instant::now();
    let b = SplitBoundaries::default();
    let per_seed: Vec<(f64, f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let data = generate(&SynthConfig { seed, noise_sigma: 0.3, task_correlation: 0.8, ..SynthConfig::default() }).unwrap();
            let (pools, _) = build_pools(&data.corpus);
            let aug = augment(&pools, &full_bootstrap(seed)).unwrap();
            let (samples, _) = assemble_samples(&aug.collections, &data.embeddings, &data.labels).unwrap();
            let sp = split_samples(samples, &b);
            let mc = ModelConfig::new(data.embeddings.dim(), 16, true, AttentionMode::Softmax);
            let run = |w: [f64; 3]| {
                let cfg = TrainConfig {
                    lr: 5e-3,
                    seed,
                    max_steps: 4000,
                    eval_every: 25,
                    patience: 20,
                    task_weights: TaskWeights::new(w).unwrap(),
                    ..TrainConfig::default()
                };
                let r = train(&sp.train, &sp.dev, mc, &cfg).unwrap();
                evaluate(&r.best_params, &r.scaler, &sp.test).unwrap().rmse_fci
            };
            (run([1.0, 0.0, 0.0]), run([1.0, 1.0, 1.0]), baseline_rmse(&data, &b))
        })
        .collect();
    let elapsed = t0.elapsed();
    let mean = |f: fn(&(f64, f64, f64)) -> f64| per_seed.iter().map(f).sum::<f64>() / per_seed.len() as f64;
    let (single, triple, base) = (mean(|r| r.0), mean(|r| r.1), mean(|r| r.2));
    let a = triple <= single + 0.02;
    let bb = base >= triple + 0.1;
    let detail = format!(
        "mean test RMSE single {single:.3}, triple {triple:.3}, baseline {base:.3}; (a) {} (b) {}; {}",
        if a { "ok" } else { "fail" },
        if bb { "ok" } else { "fail" },
        secs(elapsed)
    );
    outcome(a && bb && elapsed < Duration::from_secs(600), detail)
}

// 6. Attention recovery

fn attention_recovery() -> Outcome {
    let t0 = Instant::now();
    let b = SplitBoundaries::default();
    let masses: Vec<f64> = (0..3u64)
        .into_par_iter()
        .map(|seed| {
            let data = generate(&SynthConfig { seed, noise_sigma: 0.05, signal_fraction: 0.2, ..SynthConfig::default() }).unwrap();
            let (pools, _) = build_pools(&data.corpus);
            let params = BootstrapParams { articles_per_collection: 85, sentences_per_article: 1, folds: 10, seed };
            let aug = augment(&pools, &params).unwrap();
            let (samples, _) = assemble_samples(&aug.collections, &data.embeddings, &data.labels).unwrap();
            let sp = split_samples(samples, &b);
            let mc = ModelConfig::new(data.embeddings.dim(), 8, true, AttentionMode::Softmax);
            let cfg = TrainConfig { lr: 5e-3, seed, max_steps: 8000, eval_every: 25, patience: 40, ..TrainConfig::default() };
            let r = train(&sp.train, &sp.dev, mc, &cfg).unwrap();
            let test: Vec<&PseudoCollection> = aug.collections.iter().filter(|c| b.classify(c.key.month) == Split::Test).collect();
            let per: Vec<f64> = test
                .iter()
                .map(|c| {
                    let e = embed_collection(c, &data.embeddings).unwrap();
                    let w = forward(&e, &r.best_params).unwrap().attn_w;
                    let mut idx: Vec<usize> = (0..w.len()).collect();
                    idx.sort_by(|&x, &y| w[y].total_cmp(&w[x]).then(x.cmp(&y)));
                    let top = idx.len().div_ceil(10);
                    let (mut hit, mut slots) = (0usize, 0usize);
                    for &i in &idx[..top] {
                        for s in &c.articles[i].sentence_ids {
                            slots += 1;
                            hit += data.truth.is_informative_sentence(s) as usize;
                        }
                    }
                    hit as f64 / slots as f64
                })
                .collect();
            per.iter().sum::<f64>() / per.len() as f64
        })
        .collect();
    let mean = masses.iter().sum::<f64>() / masses.len() as f64;
    let shown: Vec<String> = masses.iter().map(|m| format!("{m:.3}")).collect();
    outcome(mean >= 0.8, format!("top-decile informative mass {mean:.3} (seeds {}), {}", shown.join(", "), secs(t0.elapsed())))
}

// 7. Gist

fn gist_checks() -> Outcome {
    // conservation over real bootstrap collections and a random model
    let data = generate(&SynthConfig { articles_per_month: 6, ..SynthConfig::default() }).unwrap();
    let (pools, _) = build_pools(&data.corpus);
    let aug = augment(&pools, &BootstrapParams { articles_per_collection: 12, sentences_per_article: 4, folds: 2, seed: 5 }).unwrap();
    let params = init_params(ModelConfig::new(data.embeddings.dim(), 8, true, AttentionMode::Softmax), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for c in &aug.collections {
        let e = embed_collection(c, &data.embeddings).unwrap();
        let w = forward(&e, &params).unwrap().attn_w;
        let y: f64 = rng.gen_range(-1.0..1.0);
        let scores = sentence_scores(c, &article_importance(&w, y)).unwrap();
        let total: f64 = scores.iter().map(|s| s.1).sum();
        let expect = y * w.iter().sum::<f64>();
        worst = worst.max((total - expect).abs());
    }
    let conserved = worst <= 1e-12;

    // planted: single-sentence collections, attention 1, predictions +1/-1/0
    let key = |i: usize| CountryMonthKey::new("GC", Month::new(2020, 1).unwrap().offset(i as i64));
    let mut board = ScoreBoard::new();
    let mut planted_high = BTreeSet::new();
    let mut planted_low = BTreeSet::new();
    let n = 400;
    for i in 0..n {
        let id = format!("s{:04}", (i * 211) % n);
        let y = match i % 20 {
            0 => 1.0,
            1 => -1.0,
            _ => 0.0,
        };
        if y > 0.0 {
            planted_high.insert(id.clone());
        } else if y < 0.0 {
            planted_low.insert(id.clone());
        }
        let c = PseudoCollection { key: key(i), fold: 0, articles: vec![PseudoArticle { sentence_ids: vec![Arc::from(id)] }] };
        board.add(&c, &[1.0], y, y).unwrap();
    }
    let report = extract_gists(&board.into_population(), 0.05, false, &|_| None).unwrap();
    let ids = |v: &[gistcast::gist::GistRecord]| v.iter().map(|g| g.sentence_id.clone()).collect::<BTreeSet<_>>();
    let planted = ids(&report.high) == planted_high && ids(&report.low) == planted_low;

    // affine invariance of membership
    let preds: Vec<f64> = aug.collections.iter().map(|_| rng.gen_range(1.0..5.0)).collect();
    let attn: Vec<Vec<f64>> = aug
        .collections
        .iter()
        .map(|c| forward(&embed_collection(c, &data.embeddings).unwrap(), &params).unwrap().attn_w)
        .collect();
    let members = |p: &[f64]| {
        let norm = normalize_predictions(p, Normalization::ZeroCentered);
        let mut b = ScoreBoard::new();
        for ((c, w), (pi, yi)) in aug.collections.iter().zip(&attn).zip(p.iter().zip(&norm)) {
            b.add(c, w, *pi, *yi).unwrap();
        }
        let r = extract_gists(&b.into_population(), 0.05, false, &|_| None).unwrap();
        (ids(&r.high), ids(&r.low))
    };
    let reference = members(&preds);
    let mut invariant = true;
    for (a, b) in [(2.0, 0.0), (0.37, 5.0), (11.0, -40.0), (1.0, 1e3)] {
        let mapped: Vec<f64> = preds.iter().map(|p| a * p + b).collect();
        invariant &= members(&mapped) == reference;
    }
    outcome(
        conserved && planted && invariant,
        format!(
            "conservation max error {worst:.1e} over {} collections, planted sets recovered: {planted}, affine invariant: {invariant}",
            aug.collections.len()
        ),
    )
}

// 8. LDA

fn lda_recovery() -> Outcome {
    let words = |p: &str| -> Vec<String> { (0..25).map(|i| format!("{p}{i:02}")).collect() };
    let topics = [words("river"), words("market")];
    // geometric word weights so each true topic has a well-defined top 10
    let weights: Vec<f64> = (0..25).map(|i| 0.88f64.powi(i)).collect();
    let dist = WeightedIndex::new(&weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let docs: Vec<Vec<String>> = (0..500)
        .map(|_| {
            let share: f64 = rng.gen();
            (0..50)
                .map(|_| {
                    let t = if rng.gen::<f64>() < share { 0 } else { 1 };
                    topics[t][dist.sample(&mut rng)].clone()
                })
                .collect()
        })
        .collect();
    let cfg = LdaConfig { k: 2, iterations: 300, seed: 3, ..LdaConfig::default() };
    let model = fit_lda(&docs, &cfg).unwrap();
    let again = fit_lda(&docs, &cfg).unwrap();
    let deterministic = model.phi == again.phi && model.vocab == again.vocab;
    let row_sums_ok = model.phi.iter().all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);

    let truth: Vec<BTreeSet<&str>> = topics.iter().map(|t| t[..10].iter().map(String::as_str).collect()).collect();
    let fitted: Vec<BTreeSet<&str>> =
        (0..2).map(|k| model.top_words(k, 10).iter().map(|&(i, _)| model.vocab[i].as_str()).collect()).collect();
    // greedy alignment on the overlap matrix
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, f) in fitted.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            pairs.push((f.intersection(t).count(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_f, mut used_t, mut total) = (BTreeSet::new(), BTreeSet::new(), 0usize);
    for (o, i, j) in pairs {
        if !used_f.contains(&i) && !used_t.contains(&j) {
            used_f.insert(i);
            used_t.insert(j);
            total += o;
        }
    }
    let overlap = total as f64 / 20.0;
    outcome(
        overlap >= 0.8 && row_sums_ok && deterministic,
        format!("aligned top-10 overlap {overlap:.2}, phi rows sum to 1: {row_sums_ok}, deterministic: {deterministic}"),
    )
}

// 9. ADL oracle

fn adl_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut panel = FeaturePanel::default();
    let start = Month::new(1900, 1).unwrap();
    for c in 0..10 {
        let mut y = vec![0.0f64; 1700];
        for t in 0..y.len() {
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            y[t] = if t >= 3 { 0.5 * y[t - 3] } else { 0.0 } + 0.01 * eps;
        }
        for (t, v) in y.iter().enumerate().skip(200) {
            panel.rows.insert(CountryMonthKey::new(format!("C{c}"), start.offset(t as i64)), PanelObs { y: Some(*v), ..PanelObs::default() });
        }
    }
    let opts = DesignOptions::default();
    let design = build_design(&panel, &opts).unwrap();
    let fit = fit_adl(&design, DEFAULT_LAMBDA, &opts).unwrap();
    let lag3 = fit.coefficient("fci_lag3").unwrap();
    let others: Vec<f64> = (opts.lag_min..=opts.lag_max).filter(|&l| l != 3).map(|l| fit.coefficient(&format!("fci_lag{l}")).unwrap()).collect();
    let max_other = others.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    outcome(
        (lag3 - 0.5).abs() <= 0.02 && max_other < 0.05,
        format!("lag-3 {lag3:.4}, largest other |coef| {max_other:.4} over {} rows", design.rows()),
    )
}

// 10. Determinism

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_gistcast");
    let config = "seed = 21\n[model]\nhidden = 8\n[train]\nlr = 0.005\nmax_steps = 150\neval_every = 25\n";
    let run = |dir: &Path, threads: &str| {
        std::fs::write(dir.join("run.toml"), config).unwrap();
        for cmd in ["synth", "bootstrap", "train"] {
            let out = Command::new(bin)
                .current_dir(dir)
                .env("RUST_LOG", "warn")
                .env("GISTCAST_THREADS", threads)
                .args(["--config", "run.toml", "--out", "o", cmd])
                .output()
                .unwrap();
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
    };
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    run(dirs[0].path(), "4");
    run(dirs[1].path(), "4");
    run(dirs[2].path(), "1");
    let files = ["o/manifest.jsonl", "o/bootstrap.json", "o/runs/triple/checkpoint.json", "o/runs/triple/train_log.csv", "o/runs/triple/train_report.json"];
    let mut differing = Vec::new();
    for f in files {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        for d in &dirs[1..] {
            if std::fs::read(d.path().join(f)).unwrap() != a {
                differing.push(f);
            }
        }
    }
    outcome(differing.is_empty(), format!("{} files compared across 3 runs, differing: {differing:?}", files.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, Check); 10] = [
        ("bootstrap count", bootstrap_count),
        ("split counts", split_counts),
        ("gradient check", gradient_check),
        ("interpolation", interpolation),
        ("model vs baseline", model_vs_baseline),
        ("attention recovery", attention_recovery),
        ("gist", gist_checks),
        ("lda", lda_recovery),
        ("adl oracle", adl_oracle),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let line = format!("[{}] {:>2} {name}: {}\n", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        // bypass the test harness capture so the lines always show
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        if !o.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
