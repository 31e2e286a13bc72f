//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.
//!
//! The GloVe baseline needs external data, located through
//! `PHRASECRAFT_GLOVE` (word vectors), `PHRASECRAFT_TURNEY` and `PHRASECRAFT_BIRD`.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::Value;

use phrasecraft::composer::{Phrase, MASK_TOKEN};
use phrasecraft::contrastive::{corrupt_phrase, mask_context, StopwordSet};
use phrasecraft::evalsuite::{filter_ppdb, levenshtein, longest_common_substring, PairItem};
use phrasecraft::numcore::{seeded_rng, Rng};
use phrasecraft::pntm::{interpret_topics, topic_scores};
use phrasecraft::vecstore::{nearest_neighbors, EmbeddingMatrix, Metric, Vocab};

const BIN: &str = env!("CARGO_BIN_EXE_phrasecraft");

type Verdict = Result<String, String>;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn phrasecraft(args: &[&str]) -> Run {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("PHRASECRAFT_SEED")
        .output()
        .expect("spawn phrasecraft");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn metrics(run: &Run) -> Result<Value, String> {
    if run.code != 0 {
        return Err(format!("exit {}: {}", run.code, run.stderr.trim()));
    }
    serde_json::from_str(run.stdout.trim()).map_err(|e| format!("bad metric JSON: {e}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    if t < limit {
        Ok(())
    } else {
        Err(format!("took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
    }
}

fn gauss(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn write_vectors(path: &Path, rows: &[(String, Vec<f64>)]) {
    let mut text = String::new();
    for (w, v) in rows {
        text.push_str(w);
        for x in v {
            text.push_str(&format!(" {x}"));
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

// ---------------------------------------------------------------- GloVe baseline

fn glove_baseline() -> Verdict {
    let vars = ["PHRASECRAFT_GLOVE", "PHRASECRAFT_TURNEY", "PHRASECRAFT_BIRD"];
    let paths: Vec<PathBuf> = vars
        .iter()
        .filter_map(|v| std::env::var_os(v).map(PathBuf::from))
        .collect();
    if paths.len() != vars.len() {
        return Err(format!("data unavailable: set {}", vars.join(", ")));
    }
    let start = Instant::now();
    let turney = metrics(&phrasecraft(&["eval", "turney", "--vectors", p(&paths[0]), "--data", p(&paths[1])]))?;
    let bird = metrics(&phrasecraft(&["eval", "bird", "--vectors", p(&paths[0]), "--data", p(&paths[2])]))?;
    within(Duration::from_secs(120), start)?;
    let acc = 100.0 * turney["accuracy"].as_f64().unwrap();
    let r = bird["pearson"].as_f64().unwrap();
    let msg = format!("turney {acc:.2}% (37.8 +- 3.0), bird pearson {r:.3} (0.560 +- 0.04)");
    if (acc - 37.8).abs() <= 3.0 && (r - 0.560).abs() <= 0.04 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- gradients

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut names = BTreeSet::new();
    for (seed, dim) in [("0", "8"), ("7", "16"), ("11", "3")] {
        let m = metrics(&phrasecraft(&["gradcheck", "--all", "--seed", seed, "--dim", dim, "--step", "1e-5"]))?;
        for c in m["checks"].as_array().unwrap() {
            names.insert(c["name"].as_str().unwrap().to_string());
            worst = worst.max(c["max_rel_error"].as_f64().unwrap());
        }
    }
    within(Duration::from_secs(30), start)?;
    for required in ["composer", "composer+linear", "composer+tanh", "triplet", "classifier", "pntm"] {
        if !names.contains(required) {
            return Err(format!("check {required} missing"));
        }
    }
    let msg = format!("{} checks, max relative error {worst:.2e}", names.len());
    if worst < 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- contrastive

fn contrastive_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = seeded_rng(101);
    let mut rows = Vec::new();
    let mut tsv = String::new();
    for i in 0..200 {
        for s in ["a", "b", "c", "d", "e", "f"] {
            rows.push((format!("{s}{i}"), (0..16).map(|_| gauss(&mut rng)).collect()));
        }
        tsv.push_str(&format!("a{i} b{i}\tc{i} d{i}\te{i} f{i}\n"));
    }
    let vectors = dir.join("disjoint.vec");
    let triplets = dir.join("disjoint.tsv");
    write_vectors(&vectors, &rows);
    fs::write(&triplets, tsv).unwrap();
    (vectors, triplets)
}

fn train_embed(dir: &Path, vectors: &Path, triplets: &Path, out: &str) -> Run {
    phrasecraft(&[
        "train-embed",
        "--phrase-triplets",
        p(triplets),
        "--vectors",
        p(vectors),
        "--lr",
        "0.05",
        "--batch",
        "16",
        "--epochs",
        "20",
        "--margin",
        "1.0",
        "--warmup",
        "0.1",
        "--seed",
        "5",
        "--out",
        p(&dir.join(out)),
    ])
}

fn contrastive_sanity() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (vectors, triplets) = contrastive_fixture(dir.path());
    let start = Instant::now();
    let first = train_embed(dir.path(), &vectors, &triplets, "a");
    within(Duration::from_secs(60), start)?;
    let m = metrics(&first)?;
    let second = metrics(&train_embed(dir.path(), &vectors, &triplets, "b"))?;
    let sat = m["final_satisfied"].as_f64().unwrap();
    let same = m == second
        && fs::read(dir.path().join("a/table.pvec")).unwrap() == fs::read(dir.path().join("b/table.pvec")).unwrap();
    let msg = format!(
        "satisfied {:.3} -> {sat:.3} after 20 epochs, rerun identical: {same}",
        m["initial_satisfied"].as_f64().unwrap()
    );
    if sat >= 0.95 && same {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- topic model

/// 400 single-token documents around four orthonormal centers scaled by 2.
fn cluster_fixture(dir: &Path) -> (PathBuf, PathBuf, Vec<usize>) {
    let mut rng = seeded_rng(202);
    let d = 16;
    let mut centers: Vec<Array1<f64>> = Vec::new();
    while centers.len() < 4 {
        let mut v = Array1::from_shape_simple_fn(d, || gauss(&mut rng));
        for c in &centers {
            v = &v - &(c * c.dot(&v));
        }
        let n = v.dot(&v).sqrt();
        centers.push(v / n);
    }
    let mut rows = Vec::new();
    let mut corpus = String::new();
    let mut labels = Vec::new();
    for i in 0..400 {
        let k = i % 4;
        let v: Vec<f64> = (0..d).map(|j| 2.0 * centers[k][j] + 0.1 * gauss(&mut rng)).collect();
        rows.push((format!("doc{i}"), v));
        corpus.push_str(&format!("doc{i}\n"));
        labels.push(k);
    }
    let vectors = dir.join("clusters.vec");
    let docs = dir.join("clusters.txt");
    write_vectors(&vectors, &rows);
    fs::write(&docs, corpus).unwrap();
    (vectors, docs, labels)
}

fn train_topics(vectors: &Path, docs: &Path, out: &Path) -> Run {
    phrasecraft(&[
        "train-topics",
        "--corpus",
        p(docs),
        "--vectors",
        p(vectors),
        "--k",
        "4",
        "--negatives",
        "5",
        "--ortho",
        "1.0",
        "--epochs",
        "300",
        "--seed",
        "9",
        "--out",
        p(out),
    ])
}

fn purity(assignments: &str, labels: &[usize]) -> f64 {
    let mut table: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for line in assignments.lines() {
        let (id, topic) = line.split_once('\t').unwrap();
        // Plain-text corpora number documents from 1.
        let doc: usize = id.parse::<usize>().unwrap() - 1;
        *table.entry(topic.parse().unwrap()).or_default().entry(labels[doc]).or_default() += 1;
    }
    let hits: usize = table.values().map(|m| m.values().max().unwrap()).sum();
    hits as f64 / labels.len() as f64
}

fn planted_clusters() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (vectors, docs, labels) = cluster_fixture(dir.path());
    let out = dir.path().join("pntm");
    let start = Instant::now();
    let m = metrics(&train_topics(&vectors, &docs, &out))?;
    within(Duration::from_secs(120), start)?;
    let pur = purity(&fs::read_to_string(out.join("assignments.tsv")).unwrap(), &labels);
    let before = m["initial_ortho"].as_f64().unwrap();
    let after = m["final_ortho"].as_f64().unwrap();
    let msg = format!("purity {pur:.3}, orthogonality penalty {before:.4} -> {after:.4}");
    if pur >= 0.90 && after < before {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- oracles

fn lev_recursive(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) if x == y => lev_recursive(ra, rb),
        (Some((_, ra)), Some((_, rb))) => {
            1 + lev_recursive(ra, b).min(lev_recursive(a, rb)).min(lev_recursive(ra, rb))
        }
    }
}

fn lcs_brute(a: &[u8], b: &[u8]) -> usize {
    let mut best = 0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut n = 0;
            while i + n < a.len() && j + n < b.len() && a[i + n] == b[j + n] {
                n += 1;
            }
            best = best.max(n);
        }
    }
    best
}

fn all_sequences(max_len: usize, alphabet: u8) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..alphabet).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn oracles() -> Verdict {
    let seqs = all_sequences(6, 3);
    let lev_bad = seqs
        .par_iter()
        .map(|a| seqs.iter().filter(|b| levenshtein(a, b) != lev_recursive(a, b)).count())
        .sum::<usize>();
    if lev_bad > 0 {
        return Err(format!("levenshtein disagrees with recursion on {lev_bad} pairs"));
    }

    let mut rng = seeded_rng(303);
    for _ in 0..1000 {
        let la = rng.random_range(0..12);
        let lb = rng.random_range(0..12);
        let a: Vec<u8> = (0..la).map(|_| rng.random_range(0..3)).collect();
        let b: Vec<u8> = (0..lb).map(|_| rng.random_range(0..3)).collect();
        if longest_common_substring(&a, &b) != lcs_brute(&a, &b) {
            return Err(format!("longest common substring wrong on {a:?} / {b:?}"));
        }
    }

    let vocab = Vocab::from_entries((0..300).map(|i| format!("w{i}"))).unwrap();
    let mut data = Array2::from_shape_simple_fn((300, 8), || gauss(&mut rng));
    // Duplicate rows exercise the tie-break.
    for i in 0..20 {
        let src = data.row(i).to_owned();
        data.row_mut(280 + i).assign(&src);
    }
    let matrix = EmbeddingMatrix::new(data).unwrap();
    for q in 0..1000 {
        let query = Array1::from_shape_simple_fn(8, || gauss(&mut rng));
        let metric = if q % 2 == 0 { Metric::Cosine } else { Metric::L2 };
        let k = rng.random_range(1..=15);
        let got: Vec<usize> = nearest_neighbors(query.view(), &vocab, &matrix, k, metric, None)
            .unwrap()
            .hits
            .iter()
            .map(|h| h.id)
            .collect();
        let mut all: Vec<(usize, f64)> = (0..300)
            .map(|i| (i, metric.score(query.view(), matrix.row(i)).unwrap()))
            .collect();
        all.sort_by(|a, b| metric.better(a.1, b.1).then(a.0.cmp(&b.0)));
        let want: Vec<usize> = all[..k].iter().map(|x| x.0).collect();
        if got != want {
            return Err(format!("nearest neighbors differ from full sort on query {q}"));
        }
    }

    let r = Array2::from_shape_simple_fn((5, 8), || gauss(&mut rng));
    let scores = topic_scores(r.view(), &matrix);
    let descs = interpret_topics(r.view(), &vocab, &matrix, 300).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        for w in 0..300 {
            let mut s = 0.0;
            for j in 0..8 {
                s += r[[k, j]] * matrix.row(w)[j];
            }
            worst = worst.max((scores[[k, w]] - s).abs());
        }
        for (surface, score) in &descs[k].items {
            let w = vocab.get(surface).unwrap();
            worst = worst.max((score - scores[[k, w]]).abs());
        }
    }
    if worst > 1e-12 {
        return Err(format!("topic scores off by {worst:e}"));
    }
    Ok(format!(
        "levenshtein {} pairs, 1000 substring, 1000 neighbor queries, scores within {worst:.1e}",
        seqs.len() * seqs.len()
    ))
}

// ---------------------------------------------------------------- constraints

/// Multiset overlap by counting, kept apart from the library's own checker.
fn overlap_of(item: &PairItem) -> (usize, BTreeSet<String>) {
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &item.a.tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut n = 0;
    let mut types = BTreeSet::new();
    for t in &item.b.tokens {
        if let Some(c) = counts.get_mut(t.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            n += 1;
            types.insert(t.clone());
        }
    }
    (n, types)
}

fn overlap_balanced(pairs: &[PairItem]) -> bool {
    let mut hist: [Vec<usize>; 2] = Default::default();
    let mut types: [BTreeSet<String>; 2] = Default::default();
    for item in pairs {
        let (n, t) = overlap_of(item);
        hist[item.label as usize].push(n);
        types[item.label as usize].extend(t);
    }
    hist[0].sort_unstable();
    hist[1].sort_unstable();
    hist[0] == hist[1] && types[0] == types[1]
}

fn random_phrase(rng: &mut Rng, words: &[&str]) -> String {
    let n = rng.random_range(1..=4);
    (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn constraints() -> Verdict {
    let mut rng = seeded_rng(404);
    let words = ["red", "car", "big", "dog", "blue", "sky", "fast", "tea", "the", "of"];
    let mut nonempty = 0;
    for c in 0..1000 {
        let n = rng.random_range(2..40);
        let mut pairs: Vec<PairItem> = (0..n)
            .map(|_| {
                let a = random_phrase(&mut rng, &words);
                let b = random_phrase(&mut rng, &words);
                PairItem::new(a.as_str(), b.as_str(), rng.random_bool(0.5))
            })
            .collect();
        pairs[0].label = true;
        pairs[1].label = false;
        let out = filter_ppdb(&pairs).map_err(|e| format!("corpus {c}: {e}"))?;
        if !overlap_balanced(&out.pairs) {
            return Err(format!("corpus {c}: filtered pairs fail the overlap check"));
        }
        nonempty += usize::from(!out.pairs.is_empty());
    }

    let stop = StopwordSet::english();
    let vocab = Vocab::from_entries(words.iter().chain(&["a", "cat", "hat", "on"]).copied()).unwrap();
    for trial in 0..10_000 {
        let mut text = random_phrase(&mut rng, &words);
        if text.split(' ').all(|t| stop.contains(t)) {
            text.push_str(" cat");
        }
        let phrase = Phrase::new(&text);
        let bad = corrupt_phrase(&phrase, &vocab, &stop, &mut rng).map_err(|e| format!("trial {trial}: {e}"))?;
        let changed: Vec<usize> = (0..phrase.tokens.len())
            .filter(|&i| phrase.tokens[i] != bad.tokens[i])
            .collect();
        if bad.tokens.len() != phrase.tokens.len() || changed.len() != 1 || stop.contains(&phrase.tokens[changed[0]]) {
            return Err(format!("trial {trial}: {text:?} -> {:?}", bad.surface));
        }
    }

    for trial in 0..2000 {
        let phrase = Phrase::new(random_phrase(&mut rng, &words));
        let mut context: Vec<String> = (0..rng.random_range(0..10))
            .map(|_| words.choose(&mut rng).unwrap().to_string())
            .collect();
        let at = rng.random_range(0..=context.len());
        context.splice(at..at, phrase.tokens.iter().cloned());
        let masked = mask_context(&context, &phrase).map_err(|e| format!("mask trial {trial}: {e}"))?;
        if masked.iter().filter(|t| *t == MASK_TOKEN).count() != 1 {
            return Err(format!("mask trial {trial}: {masked:?}"));
        }
    }
    Ok(format!(
        "1000 filtered corpora ({nonempty} non-empty), 10000 corruptions, 2000 masks"
    ))
}

// ---------------------------------------------------------------- determinism

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn eval_fixtures(dir: &Path, rng: &mut Rng) -> (PathBuf, PathBuf, PathBuf) {
    let words: Vec<String> = (0..60).map(|i| format!("t{i}")).collect();
    let pick = |rng: &mut Rng| words[rng.random_range(0..words.len())].clone();
    let mut turney = String::new();
    let mut bird = String::from("term1\tterm2\trelatedness score\n");
    let mut pairs = String::new();
    for i in 0..80 {
        let cols: Vec<String> = (0..6).map(|_| format!("{} {}", pick(rng), pick(rng))).collect();
        turney.push_str(&cols.join("\t"));
        turney.push('\n');
        bird.push_str(&format!("{} {}\t{} {}\t{}\n", pick(rng), pick(rng), pick(rng), pick(rng), rng.random::<f64>()));
        pairs.push_str(&format!("{} {}\t{} {}\t{}\n", pick(rng), pick(rng), pick(rng), pick(rng), i % 2));
    }
    let paths = (dir.join("turney.tsv"), dir.join("bird.tsv"), dir.join("pairs.tsv"));
    fs::write(&paths.0, turney).unwrap();
    fs::write(&paths.1, bird).unwrap();
    fs::write(&paths.2, pairs).unwrap();
    let rows: Vec<(String, Vec<f64>)> = words
        .iter()
        .map(|w| (w.clone(), (0..16).map(|_| gauss(rng)).collect()))
        .collect();
    write_vectors(&dir.join("eval.vec"), &rows);
    paths
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vectors, triplets) = contrastive_fixture(d);
    let (cvec, docs, _) = cluster_fixture(d);
    let mut rng = seeded_rng(505);
    let (turney, bird, pairs) = eval_fixtures(d, &mut rng);
    let evec = d.join("eval.vec");

    let mut checked = Vec::new();
    for round in ["x", "y"] {
        let mut outputs = Vec::new();
        let embed = train_embed(d, &vectors, &triplets, &format!("embed-{round}"));
        outputs.push(("train-embed", metrics(&embed)?.to_string(), files_under(&d.join(format!("embed-{round}")))));
        let topics_dir = d.join(format!("topics-{round}"));
        let topics = train_topics(&cvec, &docs, &topics_dir);
        outputs.push(("train-topics", metrics(&topics)?.to_string(), files_under(&topics_dir)));
        for (name, data) in [("turney", &turney), ("bird", &bird), ("pairs", &pairs)] {
            let run = phrasecraft(&["eval", name, "--vectors", p(&evec), "--data", p(data), "--seed", "3"]);
            outputs.push((name, metrics(&run)?.to_string(), Vec::new()));
        }
        let model = d.join(format!("embed-{round}"));
        let run = phrasecraft(&["eval", "turney", "--model", p(&model), "--data", p(&turney), "--seed", "3"]);
        outputs.push(("turney --model", metrics(&run)?.to_string(), Vec::new()));
        checked.push(outputs);
    }
    for (a, b) in checked[0].iter().zip(&checked[1]) {
        if a.1 != b.1 {
            return Err(format!("{}: metric JSON differs between runs", a.0));
        }
        if a.2 != b.2 {
            return Err(format!("{}: output files differ between runs", a.0));
        }
    }
    Ok(format!("{} commands reproduced byte for byte", checked[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("glove-baseline", glove_baseline),
        ("gradient-suite", gradient_suite),
        ("contrastive-sanity", contrastive_sanity),
        ("planted-clusters", planted_clusters),
        ("oracle-equivalence", oracles),
        ("constraint-suites", constraints),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(msg) => println!("PASS {name} ({secs:.1}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
