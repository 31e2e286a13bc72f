use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};
use serde_json::json;

use phrasecraft::composer::{tokenize, ComposerModel, Nonlinearity, OovPolicy, Phrase, Projection, MASK_TOKEN};
use phrasecraft::contrastive::{
    build_context_triplets, corrupted_triplets, load_context_triplets, load_phrase_pairs, load_phrase_triplets,
    train_contrastive, ContextTriplet, Mixing, PhraseTriplet, StopwordSet,
};
use phrasecraft::evalsuite::diversity::{diversity_details, summarize, EditUnit, LcsSide};
use phrasecraft::evalsuite::{
    eval_bird, eval_pair_classifier, eval_turney, filter_ppdb as run_filter, load_bird, load_pairs, load_turney,
    save_pairs, split_train_dev_test, train_pair_classifier, ClassifierConfig, DiversityOptions,
};
use phrasecraft::numcore::{seeded_rng, TrainConfig};
use phrasecraft::pntm::{
    assign_topic, correspondence_stats, interpret_topics, load_corpus, make_intrusion_items, orthogonality_penalty,
    read_topic_dump, train_pntm, write_topic_dump, NegTerm, PntmConfig, TopicModel, TOPIC_DUMP_FILE,
};
use phrasecraft::vecstore::{load_vectors, nearest_neighbors, Metric};

use crate::config::Settings;
use crate::embed::Embedder;
use crate::error::CliError;
use crate::manifest::write_atomic;
use crate::Outcome;

pub const HISTORY_FILE: &str = "history.json";
pub const ASSIGNMENTS_FILE: &str = "assignments.tsv";
/// Depth of the topic dump written at training time; intrusion items need the top 50.
pub const DUMP_DEPTH: usize = 50;

fn row(label: &str, value: impl std::fmt::Display) -> (String, String) {
    (label.to_string(), value.to_string())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NegSource {
    /// Negatives read from the third TSV column.
    Tsv,
    /// Negatives made by corrupting the positive (one non-stopword replaced).
    Raw,
}

impl std::fmt::Display for NegSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NegSource::Tsv => "tsv",
            NegSource::Raw => "raw",
        })
    }
}

impl std::str::FromStr for NegSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tsv" => Ok(NegSource::Tsv),
            "raw" => Ok(NegSource::Raw),
            _ => Err(format!("expected tsv or raw, got {s:?}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainEmbedArgs {
    /// `anchor\tpositive\tnegative` TSV (with `--neg raw` only the first two columns are read).
    #[arg(long, value_name = "FILE")]
    phrase_triplets: Option<PathBuf>,
    /// `anchor\tpositive_context\tnegative_context` TSV (with `--neg raw`: `anchor\tcontext`).
    #[arg(long, value_name = "FILE")]
    context_triplets: Option<PathBuf>,
    /// Pretrained token vectors that initialize the table.
    #[arg(long, required = true, value_name = "FILE")]
    vectors: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    /// Fraction of all steps used for linear warm-up.
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where the negatives come from.
    #[arg(long, value_enum)]
    neg: Option<NegSource>,
    /// Stopword list for corruption (one word per line); a built-in English list otherwise.
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
    /// Corrupt a stopword when a phrase has nothing else to corrupt.
    #[arg(long)]
    force: bool,
    /// All phrase batches, then all context batches, instead of interleaving.
    #[arg(long)]
    sequential: bool,
    /// Keep the learning rate at its peak after warm-up instead of decaying.
    #[arg(long)]
    lr_hold: bool,
    /// Projection layer: none, linear or tanh.
    #[arg(long)]
    projection: Option<String>,
    /// Unknown tokens: skip or zero-vector.
    #[arg(long)]
    oov: Option<OovPolicy>,
    /// Output directory for the checkpoint, history and manifest.
    #[arg(long, required = true, value_name = "DIR")]
    out: PathBuf,
}

fn training_tokens<'a>(phrases: &'a [PhraseTriplet], contexts: &'a [ContextTriplet]) -> BTreeSet<&'a str> {
    let mut set = BTreeSet::new();
    for t in phrases {
        for p in [&t.anchor, &t.positive, &t.negative] {
            set.extend(p.tokens.iter().map(String::as_str));
        }
    }
    for t in contexts {
        set.extend(t.anchor.tokens.iter().map(String::as_str));
        set.extend(t.positive.iter().chain(&t.negative).map(String::as_str));
    }
    set.remove(MASK_TOKEN);
    set
}

pub fn train_embed(args: &TrainEmbedArgs, s: &Settings) -> Result<Outcome, CliError> {
    if args.phrase_triplets.is_none() && args.context_triplets.is_none() {
        return Err(CliError::Usage(
            "train-embed needs --phrase-triplets and/or --context-triplets".into(),
        ));
    }
    let seed = s.seed(args.seed)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        base_lr: s.get("lr", args.lr, defaults.base_lr)?,
        batch_size: s.get("batch", args.batch, defaults.batch_size)?,
        epochs: s.get("epochs", args.epochs, defaults.epochs)?,
        warmup_fraction: s.get("warmup", args.warmup, defaults.warmup_fraction)?,
        margin: s.get("margin", args.margin, defaults.margin)?,
        seed,
        lr_hold: s.bool_flag("lr_hold", args.lr_hold)?,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let neg = s.get("neg", args.neg, NegSource::Tsv)?;
    let force = s.bool_flag("force", args.force)?;
    let mixing = if s.bool_flag("sequential", args.sequential)? {
        Mixing::Sequential
    } else {
        Mixing::Interleaved
    };
    let projection = s.get("projection", args.projection.clone(), "none".to_string())?;
    let oov = s.get("oov", args.oov, OovPolicy::Skip)?;
    let mut rng = seeded_rng(seed);

    let (vocab, table) = load_vectors(&args.vectors, None)?;
    let mut inputs = vec![args.vectors.clone()];
    let mut skipped = 0;
    let phrases = match &args.phrase_triplets {
        None => Vec::new(),
        Some(path) => {
            inputs.push(path.clone());
            match neg {
                NegSource::Tsv => load_phrase_triplets(path)?,
                NegSource::Raw => {
                    let stop = match &args.stopwords {
                        Some(p) => {
                            inputs.push(p.clone());
                            StopwordSet::load(p)?
                        }
                        None => StopwordSet::english(),
                    };
                    let pairs = load_phrase_pairs(path)?;
                    let (t, n) = corrupted_triplets(&pairs, &vocab, &stop, force, &mut rng)?;
                    skipped += n;
                    t
                }
            }
        }
    };
    let contexts = match &args.context_triplets {
        None => Vec::new(),
        Some(path) => {
            inputs.push(path.clone());
            match neg {
                NegSource::Tsv => load_context_triplets(path)?,
                NegSource::Raw => {
                    let records: Vec<(Phrase, Vec<String>)> = read_lines(path)?
                        .iter()
                        .enumerate()
                        .map(|(i, l)| match l.split_once('\t') {
                            Some((a, c)) => Ok((Phrase::new(a), tokenize(c))),
                            None => Err(CliError::Data(format!(
                                "{}: record {}: expected anchor<TAB>context",
                                path.display(),
                                i + 1
                            ))),
                        })
                        .collect::<Result<_, _>>()?;
                    let (t, n) = build_context_triplets(&records, &mut rng)?;
                    skipped += n;
                    t
                }
            }
        }
    };
    if skipped > 0 {
        log::warn!("{skipped} training records skipped (no usable negative)");
    }
    if phrases.is_empty() && contexts.is_empty() {
        return Err(CliError::Data("no usable training triplets".into()));
    }

    let mut model = ComposerModel::new(vocab, table)?.with_oov_policy(oov);
    let dim = model.dim();
    match projection.as_str() {
        "none" => {}
        "linear" => model = model.with_projection(Projection::identity(dim), Nonlinearity::None)?,
        "tanh" => model = model.with_projection(Projection::identity(dim), Nonlinearity::Tanh)?,
        other => return Err(CliError::Usage(format!("--projection must be none, linear or tanh, got {other:?}"))),
    }
    // Tokens missing from the pretrained vectors get fresh rows at the table's scale.
    let missing: Vec<String> = training_tokens(&phrases, &contexts)
        .into_iter()
        .filter(|t| !model.vocab().contains(t))
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        let values = model.table().data();
        let std = if values.is_empty() {
            0.1
        } else {
            (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt().max(1e-3)
        };
        let normal = Normal::new(0.0, std).map_err(|e| CliError::Numeric(e.to_string()))?;
        for t in &missing {
            let init = Array1::from_shape_simple_fn(dim, || normal.sample(&mut rng));
            model.ensure_token(t, init.view())?;
        }
        log::info!("added {} training tokens absent from the vectors", missing.len());
    }

    let history = train_contrastive(&mut model, &phrases, &contexts, &cfg, mixing, &mut rng)?;
    model.save(&args.out)?;
    write_json(&args.out.join(HISTORY_FILE), &history)?;

    let final_loss = history.epochs.last().map(|e| e.mean_loss);
    let mut out = Outcome::new(json!({
        "phrase_triplets": phrases.len(),
        "context_triplets": contexts.len(),
        "skipped_records": skipped,
        "added_tokens": missing.len(),
        "optimizer_steps": history.optimizer_steps,
        "initial_satisfied": history.initial_satisfied,
        "final_satisfied": history.final_satisfied(),
        "final_mean_loss": final_loss,
        "satisfied_by_epoch": history.epochs.iter().map(|e| e.satisfied).collect::<Vec<_>>(),
    }));
    out.table = vec![
        row("phrase triplets", phrases.len()),
        row("context triplets", contexts.len()),
        row("added tokens", missing.len()),
        row("steps", history.optimizer_steps),
        row("satisfied before", format!("{:.4}", history.initial_satisfied)),
        row("satisfied after", format!("{:.4}", history.final_satisfied())),
    ];
    out.inputs = inputs;
    out.out_dir = Some(args.out.clone());
    out.seed = Some(seed);
    Ok(out)
}

#[derive(Debug, Args)]
pub struct TrainTopicsArgs {
    /// One document per line, or JSON lines with `id` and `text`.
    #[arg(long, required = true, value_name = "FILE")]
    corpus: PathBuf,
    /// Frozen vectors used to encode documents and to interpret topics.
    #[arg(long, required = true, value_name = "FILE")]
    vectors: PathBuf,
    /// Number of topics.
    #[arg(long)]
    k: Option<usize>,
    /// Negative documents per document.
    #[arg(long)]
    negatives: Option<usize>,
    /// Weight of the orthogonality penalty.
    #[arg(long)]
    ortho: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Negative inner product: `anchor` (x . z) or `recon` (x_hat . z).
    #[arg(long)]
    neg_term: Option<NegTerm>,
    #[arg(long, value_name = "DIR", required = true)]
    out: PathBuf,
}

pub fn train_topics(args: &TrainTopicsArgs, s: &Settings) -> Result<Outcome, CliError> {
    let seed = s.seed(args.seed)?;
    let d = PntmConfig::default();
    let cfg = PntmConfig {
        topics: s.get("k", args.k, d.topics)?,
        negatives: s.get("negatives", args.negatives, d.negatives)?,
        ortho_weight: s.get("ortho", args.ortho, d.ortho_weight)?,
        epochs: s.get("epochs", args.epochs, d.epochs)?,
        lr: s.get("lr", args.lr, d.lr)?,
        batch_size: s.get("batch", args.batch, d.batch_size)?,
        seed,
        init_std: s.get("init_std", None, d.init_std)?,
        neg_term: s.get("neg_term", args.neg_term, d.neg_term)?,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let (vocab, table) = load_vectors(&args.vectors, None)?;
    let encoder = ComposerModel::new(vocab, table)?;
    let docs = load_corpus(&args.corpus)?;
    let mut kept = Vec::new();
    let mut rows = Vec::new();
    for doc in &docs {
        let c = encoder.embed_tokens(&tokenize(&doc.text));
        if c.all_unknown() {
            continue;
        }
        kept.push(doc.id.clone());
        rows.extend(c.vector);
    }
    let skipped = docs.len() - kept.len();
    if skipped > 0 {
        log::warn!("{skipped} documents have no known token and were dropped");
    }
    if kept.len() <= cfg.negatives {
        return Err(CliError::Data(format!(
            "{} usable documents; need more than {} (the negative count)",
            kept.len(),
            cfg.negatives
        )));
    }
    let x = Array2::from_shape_vec((kept.len(), encoder.dim()), rows).expect("rows have the model dim");
    let mut rng = seeded_rng(seed);
    let (model, history) = train_pntm(x.view(), &cfg, &mut rng)?;

    model.save(&args.out, &cfg)?;
    let descs = interpret_topics(model.r().view(), encoder.vocab(), encoder.table(), DUMP_DEPTH)?;
    write_topic_dump(&descs, args.out.join(TOPIC_DUMP_FILE))?;
    write_json(&args.out.join(HISTORY_FILE), &history)?;
    let mut sizes = vec![0usize; cfg.topics];
    let mut assignments = String::new();
    for (i, id) in kept.iter().enumerate() {
        let k = assign_topic(model.r().view(), x.row(i))?;
        sizes[k] += 1;
        assignments.push_str(&format!("{id}\t{k}\n"));
    }
    write_atomic(&args.out.join(ASSIGNMENTS_FILE), assignments.as_bytes())?;

    let final_ortho = orthogonality_penalty(model.r().view());
    let last = history.epochs.last();
    let mut out = Outcome::new(json!({
        "documents": kept.len(),
        "dropped_documents": skipped,
        "topics": cfg.topics,
        "optimizer_steps": history.optimizer_steps,
        "initial_ortho": history.initial_ortho,
        "final_ortho": final_ortho,
        "final_hinge": last.map(|e| e.hinge),
        "final_total": last.map(|e| e.total),
        "topic_sizes": sizes,
    }));
    out.table = vec![
        row("documents", kept.len()),
        row("topics", cfg.topics),
        row("ortho before", format!("{:.4}", history.initial_ortho)),
        row("ortho after", format!("{final_ortho:.4}")),
        row("final hinge", last.map_or("-".into(), |e| format!("{:.4}", e.hinge))),
    ];
    out.inputs = vec![args.corpus.clone(), args.vectors.clone()];
    out.out_dir = Some(args.out.clone());
    out.seed = Some(seed);
    Ok(out)
}

#[derive(Debug, Args)]
pub struct Source {
    /// Vector file (pvec-text, pvec-bin or GloVe/word2vec text).
    #[arg(long, value_name = "FILE", required_unless_present = "model")]
    vectors: Option<PathBuf>,
    /// Trained composer checkpoint directory, instead of a vector file.
    #[arg(long, value_name = "DIR", conflicts_with = "vectors")]
    model: Option<PathBuf>,
}

impl Source {
    fn open(&self) -> Result<(Embedder, PathBuf), CliError> {
        match (&self.vectors, &self.model) {
            (Some(v), _) => Ok((Embedder::from_vectors(v)?, v.clone())),
            (None, Some(m)) => Ok((Embedder::from_model(m)?, m.clone())),
            (None, None) => Err(CliError::Usage("--vectors is required".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    source: Source,
    /// Dataset TSV.
    #[arg(long, required = true, value_name = "FILE")]
    data: PathBuf,
    /// cosine or l2.
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[command(flatten)]
    common: EvalArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Five-way phrase selection accuracy.
    Turney(EvalArgs),
    /// Pearson and Spearman correlation with relatedness scores.
    Bird(EvalArgs),
    /// Paraphrase classification with a one-hidden-layer MLP.
    Pairs(PairsArgs),
}

impl EvalCommand {
    pub fn name(&self) -> &'static str {
        match self {
            EvalCommand::Turney(_) => "turney",
            EvalCommand::Bird(_) => "bird",
            EvalCommand::Pairs(_) => "pairs",
        }
    }
}

pub fn eval(cmd: &EvalCommand, s: &Settings) -> Result<Outcome, CliError> {
    let common = match cmd {
        EvalCommand::Turney(a) | EvalCommand::Bird(a) => a,
        EvalCommand::Pairs(p) => &p.common,
    };
    let seed = s.seed(common.seed)?;
    let metric = s.get("metric", common.metric, Metric::Cosine)?;
    let (embedder, source) = common.source.open()?;
    let embed = |p: &Phrase| embedder.embed(p);
    let mut rng = seeded_rng(seed);
    let mut out = match cmd {
        EvalCommand::Turney(_) => {
            let items = load_turney(&common.data, &mut rng)?;
            let acc = eval_turney(&items, embed, metric)?;
            let mut o = Outcome::new(json!({
                "accuracy": acc,
                "items": items.len(),
                "unknown_phrases": embedder.unknown_count(),
                "metric": metric.to_string(),
            }));
            o.table = vec![row("items", items.len()), row("accuracy", format!("{:.2}%", 100.0 * acc))];
            o
        }
        EvalCommand::Bird(_) => {
            let items = load_bird(&common.data)?;
            let c = eval_bird(&items, embed, metric)?;
            let mut o = Outcome::new(json!({
                "pearson": c.pearson,
                "spearman": c.spearman,
                "items": items.len(),
                "unknown_phrases": embedder.unknown_count(),
                "metric": metric.to_string(),
            }));
            o.table = vec![
                row("items", items.len()),
                row("pearson", format!("{:.4}", c.pearson)),
                row("spearman", format!("{:.4}", c.spearman)),
            ];
            o
        }
        EvalCommand::Pairs(p) => {
            let d = ClassifierConfig::default();
            let cfg = ClassifierConfig {
                lr: s.get("lr", p.lr, d.lr)?,
                epochs: s.get("epochs", p.epochs, d.epochs)?,
                batch_size: s.get("batch", p.batch, d.batch_size)?,
                seed,
            };
            let pairs = load_pairs(&common.data)?;
            let (train, dev, test) = split_train_dev_test(&pairs, &mut rng);
            let clf = train_pair_classifier(&train, embed, &cfg)?;
            let dev_acc = if dev.is_empty() { None } else { Some(eval_pair_classifier(&clf, &dev, embed)?) };
            let test_acc = if test.is_empty() { None } else { Some(eval_pair_classifier(&clf, &test, embed)?) };
            let mut o = Outcome::new(json!({
                "train": train.len(),
                "dev": dev.len(),
                "test": test.len(),
                "dev_accuracy": dev_acc,
                "test_accuracy": test_acc,
            }));
            let pct = |a: Option<f64>| a.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
            o.table = vec![
                row("train/dev/test", format!("{}/{}/{}", train.len(), dev.len(), test.len())),
                row("dev accuracy", pct(dev_acc)),
                row("test accuracy", pct(test_acc)),
            ];
            o
        }
    };
    out.inputs = vec![source, common.data.clone()];
    out.seed = Some(seed);
    Ok(out)
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Labeled pairs `a\tb\t{0,1}`.
    #[arg(long = "in", required = true, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, required = true, value_name = "FILE")]
    out: PathBuf,
}

pub fn filter_ppdb(args: &FilterArgs, _s: &Settings) -> Result<Outcome, CliError> {
    let pairs = load_pairs(&args.input)?;
    let result = run_filter(&pairs)?;
    save_pairs(&result.pairs, &args.out)?;
    let pos = result.pairs.iter().filter(|p| p.label).count();
    let mut out = Outcome::new(json!({
        "input": pairs.len(),
        "kept": result.pairs.len(),
        "positives": pos,
        "negatives": result.pairs.len() - pos,
        "warning": result.warning,
    }));
    out.table = vec![row("input pairs", pairs.len()), row("kept", result.pairs.len())];
    out.inputs = vec![args.input.clone()];
    Ok(out)
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[command(flatten)]
    source: Source,
    /// Query phrase; repeatable.
    #[arg(long = "query", value_name = "PHRASE")]
    queries: Vec<String>,
    /// File with one query phrase per line.
    #[arg(long = "queries", value_name = "FILE")]
    query_file: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    metric: Option<Metric>,
}

fn collect_queries(inline: &[String], file: Option<&Path>) -> Result<Vec<Phrase>, CliError> {
    let mut out: Vec<Phrase> = inline.iter().map(Phrase::new).collect();
    if let Some(f) = file {
        out.extend(read_lines(f)?.into_iter().map(Phrase::new));
    }
    if out.is_empty() {
        return Err(CliError::Usage("give at least one --query or a --queries file".into()));
    }
    if out.iter().any(Phrase::is_empty) {
        return Err(CliError::Data("empty query phrase".into()));
    }
    Ok(out)
}

pub fn neighbors(args: &NeighborsArgs, s: &Settings) -> Result<Outcome, CliError> {
    let k = s.get("k", args.k, 10usize)?;
    let metric = s.get("metric", args.metric, Metric::Cosine)?;
    let queries = collect_queries(&args.queries, args.query_file.as_deref())?;
    let (embedder, source) = args.source.open()?;
    let mut lists = Vec::new();
    let mut table = Vec::new();
    for q in &queries {
        let v = embedder.embed(q);
        let mut hits = nearest_neighbors(v.view(), embedder.vocab(), embedder.table(), k, metric, Some(&q.surface))?;
        hits.query = q.surface.clone();
        table.push(row(
            &q.surface,
            hits.hits.iter().map(|h| h.surface.as_str()).collect::<Vec<_>>().join(", "),
        ));
        lists.push(hits);
    }
    let mut out = Outcome::new(json!({ "k": k, "metric": metric.to_string(), "results": lists }));
    out.table = table;
    out.inputs = vec![source];
    out.inputs.extend(args.query_file.clone());
    Ok(out)
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    #[command(flatten)]
    source: Source,
    /// One query phrase per line.
    #[arg(long, required = true, value_name = "FILE")]
    queries: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    metric: Option<Metric>,
    /// Normalize the common run by the `neighbor` (default) or `query` length.
    #[arg(long)]
    lcs_side: Option<LcsSide>,
    /// Edit distance over `token`s (default) or `char`s.
    #[arg(long)]
    edit_unit: Option<EditUnit>,
    /// Per-query details as JSON lines.
    #[arg(long, value_name = "FILE")]
    details: Option<PathBuf>,
}

pub fn diversity(args: &DiversityArgs, s: &Settings) -> Result<Outcome, CliError> {
    let d = DiversityOptions::default();
    let opts = DiversityOptions {
        k: s.get("k", args.k, d.k)?,
        metric: s.get("metric", args.metric, d.metric)?,
        lcs_side: s.get("lcs_side", args.lcs_side, d.lcs_side)?,
        edit_unit: s.get("edit_unit", args.edit_unit, d.edit_unit)?,
    };
    let (embedder, source) = args.source.open()?;
    let queries: Vec<(Phrase, Array1<f64>)> = collect_queries(&[], Some(&args.queries))?
        .into_iter()
        .map(|q| {
            let v = embedder.embed(&q);
            (q, v)
        })
        .collect();
    let details = diversity_details(&queries, embedder.vocab(), embedder.table(), &opts)?;
    let report = summarize(&details, opts.k);
    if let Some(path) = &args.details {
        let mut buf = Vec::new();
        for d in &details {
            serde_json::to_writer(&mut buf, d)?;
            buf.write_all(b"\n")?;
        }
        write_atomic(path, &buf)?;
    }
    let mut out = Outcome::new(serde_json::to_value(&report)?);
    out.table = vec![
        row("queries", report.queries),
        row("% new tokens", format!("{:.2}", 100.0 * report.pct_new_tokens)),
        row("LCS precision", format!("{:.2}", report.lcs_precision)),
        row("Levenshtein", format!("{:.3}", report.avg_levenshtein)),
    ];
    out.inputs = vec![source, args.queries.clone()];
    Ok(out)
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    #[arg(long, required = true, value_name = "DIR")]
    model: PathBuf,
    /// Vectors whose rows are ranked against each topic.
    #[arg(long, required = true, value_name = "FILE")]
    vectors: PathBuf,
    #[arg(long)]
    top: Option<usize>,
    /// Also write the descriptions as JSON lines.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntrudeArgs {
    #[arg(long, required = true, value_name = "DIR")]
    model: PathBuf,
    /// Topic dump to draw from (default: the one saved with the model).
    #[arg(long, value_name = "FILE")]
    dump: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the items as JSON lines instead of embedding them in the metrics.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrespondArgs {
    #[arg(long, required = true, value_name = "DIR")]
    model: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TopicsCommand {
    /// Top vocabulary items per topic.
    Interpret(InterpretArgs),
    /// Word-intrusion items for human annotation.
    Intrude(IntrudeArgs),
    /// Drift from initialization and spread between topics.
    Correspond(CorrespondArgs),
}

impl TopicsCommand {
    pub fn name(&self) -> &'static str {
        match self {
            TopicsCommand::Interpret(_) => "interpret",
            TopicsCommand::Intrude(_) => "intrude",
            TopicsCommand::Correspond(_) => "correspond",
        }
    }
}

pub fn topics(cmd: &TopicsCommand, s: &Settings) -> Result<Outcome, CliError> {
    match cmd {
        TopicsCommand::Interpret(a) => {
            let top = s.get("top", a.top, 10usize)?;
            let model = TopicModel::load(&a.model)?;
            let (vocab, l) = load_vectors(&a.vectors, None)?;
            let descs = interpret_topics(model.r().view(), &vocab, &l, top)?;
            if let Some(p) = &a.out {
                write_topic_dump(&descs, p)?;
            }
            let mut out = Outcome::new(json!({ "top": top, "topics": descs }));
            out.table = descs
                .iter()
                .map(|d| {
                    let items: Vec<&str> = d.items.iter().map(|(s, _)| s.as_str()).collect();
                    row(&format!("topic {}", d.topic), items.join(", "))
                })
                .collect();
            out.inputs = vec![a.model.clone(), a.vectors.clone()];
            Ok(out)
        }
        TopicsCommand::Intrude(a) => {
            let seed = s.seed(a.seed)?;
            let dump = a.dump.clone().unwrap_or_else(|| a.model.join(TOPIC_DUMP_FILE));
            let descs = read_topic_dump(&dump)?;
            let mut rng = seeded_rng(seed);
            let (items, warnings) = make_intrusion_items(&descs, &mut rng)?;
            let mut metrics = json!({ "items": items.len(), "skipped": warnings.len(), "warnings": warnings });
            if let Some(p) = &a.out {
                let mut buf = Vec::new();
                for it in &items {
                    serde_json::to_writer(&mut buf, it)?;
                    buf.write_all(b"\n")?;
                }
                write_atomic(p, &buf)?;
            } else {
                metrics["intrusion_items"] = serde_json::to_value(&items)?;
            }
            let mut out = Outcome::new(metrics);
            out.table = vec![row("items", items.len()), row("skipped topics", warnings.len())];
            out.inputs = vec![dump];
            out.seed = Some(seed);
            Ok(out)
        }
        TopicsCommand::Correspond(a) => {
            let model = TopicModel::load(&a.model)?;
            let stats = correspondence_stats(&model);
            let mut out = Outcome::new(serde_json::to_value(stats)?);
            out.table = vec![
                row("avg drift", format!("{:.4}", stats.avg_drift)),
                row("avg pairwise", format!("{:.4}", stats.avg_pairwise)),
            ];
            out.inputs = vec![a.model.clone()];
            Ok(out)
        }
    }
}
