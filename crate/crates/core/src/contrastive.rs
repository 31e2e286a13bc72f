//! Triplet construction and contrastive training of a [`ComposerModel`].
//!
//! Two triplet flavours share one hinge objective,
//! `max(0, margin - |p - neg| + |p - pos|)`:
//!
//! - phrase triplets `(anchor, paraphrase, corrupted paraphrase)`;
//! - context triplets `(anchor, masked context it occurred in, unrelated context)`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::composer::{tokenize, ComposerModel, ComposerGrad, Phrase, DEFAULT_MAX_LEN, MASK_TOKEN};
use crate::numcore::{adam_step, lr_at, AdamState, Rng, TrainConfig};
use crate::vecstore::{l2_unchecked, Vocab};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseTriplet {
    pub anchor: Phrase,
    pub positive: Phrase,
    pub negative: Phrase,
}

impl PhraseTriplet {
    pub fn new(anchor: Phrase, positive: Phrase, negative: Phrase) -> Result<Self> {
        if anchor.is_empty() || positive.is_empty() || negative.is_empty() {
            return Err(Error::invalid("triplet members must be nonempty"));
        }
        Ok(Self {
            anchor,
            positive,
            negative,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextTriplet {
    pub anchor: Phrase,
    /// Context the anchor occurred in, with the anchor replaced by a single `[MASK]`.
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl ContextTriplet {
    pub fn new(anchor: Phrase, positive: Vec<String>, negative: Vec<String>) -> Result<Self> {
        if anchor.is_empty() {
            return Err(Error::invalid("anchor phrase is empty"));
        }
        let masks = positive.iter().filter(|t| *t == MASK_TOKEN).count();
        if masks != 1 {
            return Err(Error::invalid(format!(
                "positive context must contain exactly one {MASK_TOKEN}, found {masks}"
            )));
        }
        if negative.is_empty() {
            return Err(Error::invalid("negative context is empty"));
        }
        if positive.len() > DEFAULT_MAX_LEN || negative.len() > DEFAULT_MAX_LEN {
            return Err(Error::invalid(format!("contexts are limited to {DEFAULT_MAX_LEN} tokens")));
        }
        Ok(Self {
            anchor,
            positive,
            negative,
        })
    }
}

/// Lowercased tokens that corruption never touches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordSet(std::collections::HashSet<String>);

const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could",
    "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has",
    "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if",
    "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most", "my", "myself", "no", "nor",
    "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out",
    "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the", "their",
    "theirs", "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while",
    "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself", "yourselves",
];

impl StopwordSet {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: std::collections::HashSet<String> =
            words.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        if set.is_empty() {
            return Err(Error::invalid("stopword set must be nonempty"));
        }
        Ok(Self(set))
    }

    pub fn english() -> Self {
        Self::new(ENGLISH_STOPWORDS).expect("builtin list is nonempty")
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }
}

/// Replaces one uniformly chosen non-stopword position with a different token drawn
/// uniformly from `vocab`.
pub fn corrupt_phrase(p: &Phrase, vocab: &Vocab, stopwords: &StopwordSet, rng: &mut Rng) -> Result<Phrase> {
    let positions: Vec<usize> = (0..p.tokens.len())
        .filter(|&i| !stopwords.contains(&p.tokens[i]))
        .collect();
    if positions.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "{:?} has no non-stopword token to corrupt",
            p.surface
        )));
    }
    replace_at(p, &positions, vocab, rng)
}

/// Like [`corrupt_phrase`] but any position may be replaced, stopwords included.
pub fn corrupt_phrase_any(p: &Phrase, vocab: &Vocab, rng: &mut Rng) -> Result<Phrase> {
    if p.is_empty() {
        return Err(Error::DegenerateInput("cannot corrupt an empty phrase".into()));
    }
    let positions: Vec<usize> = (0..p.tokens.len()).collect();
    replace_at(p, &positions, vocab, rng)
}

fn replace_at(p: &Phrase, positions: &[usize], vocab: &Vocab, rng: &mut Rng) -> Result<Phrase> {
    let pos = positions[rng.random_range(0..positions.len())];
    let original = &p.tokens[pos];
    if vocab.entries().iter().all(|e| e == original) {
        return Err(Error::DegenerateInput(
            "vocabulary has no token different from the one being replaced".into(),
        ));
    }
    let replacement = loop {
        let candidate = vocab.surface(rng.random_range(0..vocab.len()));
        if candidate != original {
            break candidate.to_string();
        }
    };
    let mut tokens = p.tokens.clone();
    tokens[pos] = replacement;
    Ok(Phrase {
        surface: tokens.join(" "),
        tokens,
    })
}

/// Replaces the first contiguous occurrence of `p` in `context` by `[MASK]`.
pub fn mask_context<S: AsRef<str>>(context: &[S], p: &Phrase) -> Result<Vec<String>> {
    let n = p.tokens.len();
    if n == 0 {
        return Err(Error::invalid("cannot mask an empty phrase"));
    }
    let start = find_phrase(context, &p.tokens)
        .ok_or_else(|| Error::NotFound(format!("{:?} does not occur in the context", p.surface)))?;
    let mut out: Vec<String> = context[..start].iter().map(|t| t.as_ref().to_string()).collect();
    out.push(MASK_TOKEN.to_string());
    out.extend(context[start + n..].iter().map(|t| t.as_ref().to_string()));
    Ok(out)
}

fn find_phrase<S: AsRef<str>>(context: &[S], tokens: &[String]) -> Option<usize> {
    if tokens.len() > context.len() {
        return None;
    }
    (0..=context.len() - tokens.len()).find(|&i| {
        context[i..i + tokens.len()]
            .iter()
            .zip(tokens)
            .all(|(c, t)| c.as_ref() == t)
    })
}

/// Cuts a masked context down to at most `max_len` tokens, keeping the mask
/// roughly centred.
pub fn window_around_mask(tokens: &[String], max_len: usize) -> Vec<String> {
    if tokens.len() <= max_len {
        return tokens.to_vec();
    }
    let mask = tokens.iter().position(|t| t == MASK_TOKEN).unwrap_or(0);
    let start = mask.saturating_sub(max_len / 2).min(tokens.len() - max_len);
    tokens[start..start + max_len].to_vec()
}

/// Builds context triplets from `(anchor, raw context)` records. Each negative is the
/// masked context of another record drawn uniformly, skipping contexts that contain
/// the anchor itself. Records whose anchor is missing from its context, or that have
/// no usable negative, are skipped and counted in the second return value.
pub fn build_context_triplets(records: &[(Phrase, Vec<String>)], rng: &mut Rng) -> Result<(Vec<ContextTriplet>, usize)> {
    let masked: Vec<Option<Vec<String>>> = records
        .iter()
        .map(|(p, ctx)| mask_context(ctx, p).ok().map(|m| window_around_mask(&m, DEFAULT_MAX_LEN)))
        .collect();
    let mut out = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for (i, (anchor, _)) in records.iter().enumerate() {
        let Some(positive) = &masked[i] else {
            skipped += 1;
            continue;
        };
        let candidates: Vec<usize> = (0..records.len())
            .filter(|&j| j != i && masked[j].is_some() && find_phrase(&records[j].1, &anchor.tokens).is_none())
            .collect();
        if candidates.is_empty() {
            skipped += 1;
            continue;
        }
        let j = candidates[rng.random_range(0..candidates.len())];
        let negative = masked[j].clone().expect("filtered above");
        out.push(ContextTriplet::new(anchor.clone(), positive.clone(), negative)?);
    }
    Ok((out, skipped))
}

/// Builds phrase triplets whose negatives are corrupted copies of the positive.
/// Pairs whose positive has only stopwords are skipped unless `force` is set.
pub fn corrupted_triplets(
    pairs: &[(Phrase, Phrase)],
    vocab: &Vocab,
    stopwords: &StopwordSet,
    force: bool,
    rng: &mut Rng,
) -> Result<(Vec<PhraseTriplet>, usize)> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for (anchor, positive) in pairs {
        let negative = match corrupt_phrase(positive, vocab, stopwords, rng) {
            Ok(n) => n,
            Err(Error::DegenerateInput(_)) if force => corrupt_phrase_any(positive, vocab, rng)?,
            Err(Error::DegenerateInput(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push(PhraseTriplet::new(anchor.clone(), positive.clone(), negative)?);
    }
    Ok((out, skipped))
}

fn check_dims(p: ArrayView1<'_, f64>, pos: ArrayView1<'_, f64>, neg: ArrayView1<'_, f64>) -> Result<()> {
    if p.len() != pos.len() || p.len() != neg.len() {
        return Err(Error::invalid(format!(
            "triplet dims differ: {}, {}, {}",
            p.len(),
            pos.len(),
            neg.len()
        )));
    }
    Ok(())
}

/// `max(0, margin - |p - neg| + |p - pos|)` with Euclidean norms.
pub fn triplet_loss(p: ArrayView1<'_, f64>, pos: ArrayView1<'_, f64>, neg: ArrayView1<'_, f64>, margin: f64) -> Result<f64> {
    check_dims(p, pos, neg)?;
    if !(margin >= 0.0) {
        return Err(Error::invalid(format!("margin must be >= 0, got {margin}")));
    }
    Ok((margin - l2_unchecked(p, neg) + l2_unchecked(p, pos)).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub anchor: Array1<f64>,
    pub positive: Array1<f64>,
    pub negative: Array1<f64>,
}

/// Subgradient of [`triplet_loss`]. Zero when the hinge is inactive (including
/// exactly at the kink); a zero-length difference contributes a zero direction.
pub fn triplet_loss_backward(
    p: ArrayView1<'_, f64>,
    pos: ArrayView1<'_, f64>,
    neg: ArrayView1<'_, f64>,
    margin: f64,
) -> TripletGrad {
    let d = p.len();
    let mut grad = TripletGrad {
        anchor: Array1::zeros(d),
        positive: Array1::zeros(d),
        negative: Array1::zeros(d),
    };
    let to_pos = &p - &pos;
    let to_neg = &p - &neg;
    let dist_pos = to_pos.dot(&to_pos).sqrt();
    let dist_neg = to_neg.dot(&to_neg).sqrt();
    if margin - dist_neg + dist_pos <= 0.0 {
        return grad;
    }
    if dist_pos > 0.0 {
        let u = to_pos / dist_pos;
        grad.anchor += &u;
        grad.positive -= &u;
    }
    if dist_neg > 0.0 {
        let u = to_neg / dist_neg;
        grad.anchor -= &u;
        grad.negative += &u;
    }
    grad
}

/// How the two triplet pools are scheduled within an epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mixing {
    /// Alternate phrase and context batches in proportion to pool sizes.
    #[default]
    Interleaved,
    /// All phrase batches, then all context batches.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Phrase,
    Context,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub pool: Pool,
    pub loss: f64,
    /// Fraction of the batch with the margin already satisfied before the update.
    pub satisfied: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Fraction of all training triplets satisfying the margin after the epoch.
    pub satisfied: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingHistory {
    pub initial_satisfied: f64,
    pub batches: Vec<BatchRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Updates applied through `adam_step`; equals the number of batches.
    pub optimizer_steps: u64,
}

impl TrainingHistory {
    pub fn final_satisfied(&self) -> f64 {
        self.epochs.last().map_or(self.initial_satisfied, |e| e.satisfied)
    }
}

enum Item<'a> {
    Phrase(&'a Phrase),
    Context(&'a [String]),
}

fn compose(model: &ComposerModel, item: &Item<'_>) -> Array1<f64> {
    match item {
        Item::Phrase(p) => model.embed_phrase(p).vector,
        Item::Context(c) => model.embed_document(c, DEFAULT_MAX_LEN).vector,
    }
}

fn grad_of(model: &ComposerModel, item: &Item<'_>, upstream: ArrayView1<'_, f64>) -> ComposerGrad {
    match item {
        Item::Phrase(p) => model.backward(&p.tokens, upstream),
        Item::Context(c) => model.backward(&c[..c.len().min(DEFAULT_MAX_LEN)], upstream),
    }
}

fn triplet_items<'a>(pool: Pool, idx: usize, phrases: &'a [PhraseTriplet], contexts: &'a [ContextTriplet]) -> [Item<'a>; 3] {
    match pool {
        Pool::Phrase => {
            let t = &phrases[idx];
            [Item::Phrase(&t.anchor), Item::Phrase(&t.positive), Item::Phrase(&t.negative)]
        }
        Pool::Context => {
            let t = &contexts[idx];
            [Item::Phrase(&t.anchor), Item::Context(&t.positive), Item::Context(&t.negative)]
        }
    }
}

/// Loss of every triplet under the current model, phrase pool first.
pub fn triplet_losses(
    model: &ComposerModel,
    phrases: &[PhraseTriplet],
    contexts: &[ContextTriplet],
    margin: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(phrases.len() + contexts.len());
    for (pool, n) in [(Pool::Phrase, phrases.len()), (Pool::Context, contexts.len())] {
        for i in 0..n {
            let [a, p, q] = triplet_items(pool, i, phrases, contexts);
            let (a, p, q) = (compose(model, &a), compose(model, &p), compose(model, &q));
            out.push(triplet_loss(a.view(), p.view(), q.view(), margin)?);
        }
    }
    Ok(out)
}

/// Fraction of triplets whose loss is exactly zero.
pub fn satisfied_fraction(
    model: &ComposerModel,
    phrases: &[PhraseTriplet],
    contexts: &[ContextTriplet],
    margin: f64,
) -> Result<f64> {
    let losses = triplet_losses(model, phrases, contexts, margin)?;
    if losses.is_empty() {
        return Ok(0.0);
    }
    Ok(losses.iter().filter(|&&l| l == 0.0).count() as f64 / losses.len() as f64)
}

/// Batch order for one epoch.
fn schedule(n_phrase: usize, n_context: usize, mixing: Mixing) -> Vec<Pool> {
    let mut out = Vec::with_capacity(n_phrase + n_context);
    match mixing {
        Mixing::Sequential => {
            out.extend(std::iter::repeat_n(Pool::Phrase, n_phrase));
            out.extend(std::iter::repeat_n(Pool::Context, n_context));
        }
        Mixing::Interleaved => {
            let (mut ip, mut ic) = (0, 0);
            while ip < n_phrase || ic < n_context {
                // Take a phrase batch while its pool is no further along than the other.
                let phrase_next = ic >= n_context || (ip < n_phrase && ip * n_context <= ic * n_phrase);
                if phrase_next {
                    out.push(Pool::Phrase);
                    ip += 1;
                } else {
                    out.push(Pool::Context);
                    ic += 1;
                }
            }
        }
    }
    out
}

struct Optimizer {
    table: AdamState,
    weight: Option<AdamState>,
    bias: Option<AdamState>,
}

impl Optimizer {
    fn new(model: &ComposerModel) -> Self {
        Self {
            table: AdamState::new(model.table().data().len()),
            weight: model.projection().map(|p| AdamState::new(p.weight.len())),
            bias: model.projection().map(|p| AdamState::new(p.bias.len())),
        }
    }

    fn apply(&mut self, model: &mut ComposerModel, grad: &ComposerGrad, lr: f64) -> Result<()> {
        let (rows, d) = (model.table().rows(), model.dim());
        let dense = grad.dense_table(rows, d);
        let table = model.table_mut().data_mut();
        adam_step(
            table.as_slice_mut().expect("table is contiguous"),
            dense.as_slice().expect("dense gradient is contiguous"),
            &mut self.table,
            lr,
        )?;
        if let Some(p) = model.projection_mut() {
            let zeros_w = Array2::zeros(p.weight.dim());
            let zeros_b = Array1::zeros(p.bias.len());
            let gw = grad.weight.as_ref().unwrap_or(&zeros_w);
            let gb = grad.bias.as_ref().unwrap_or(&zeros_b);
            adam_step(
                p.weight.as_slice_mut().expect("contiguous"),
                gw.as_slice().expect("contiguous"),
                self.weight.as_mut().expect("projection state"),
                lr,
            )?;
            adam_step(
                p.bias.as_slice_mut().expect("contiguous"),
                gb.as_slice().expect("contiguous"),
                self.bias.as_mut().expect("projection state"),
                lr,
            )?;
        }
        Ok(())
    }
}

/// Trains `model` in place with Adam on the mean triplet loss of each batch.
///
/// Both pools are reshuffled every epoch. The learning rate follows [`lr_at`] over
/// `epochs * batches_per_epoch` steps. When context triplets are present and the
/// model lacks a `[MASK]` row, one is added, initialised to zero.
pub fn train_contrastive(
    model: &mut ComposerModel,
    phrase_triplets: &[PhraseTriplet],
    context_triplets: &[ContextTriplet],
    cfg: &TrainConfig,
    mixing: Mixing,
    rng: &mut Rng,
) -> Result<TrainingHistory> {
    cfg.validate()?;
    if phrase_triplets.is_empty() && context_triplets.is_empty() {
        return Err(Error::invalid("need at least one triplet"));
    }
    let mut history = TrainingHistory::default();
    if cfg.epochs == 0 {
        history.initial_satisfied = satisfied_fraction(model, phrase_triplets, context_triplets, cfg.margin)?;
        return Ok(history);
    }
    if !context_triplets.is_empty() {
        model.ensure_token(MASK_TOKEN, Array1::zeros(model.dim()).view())?;
    }
    history.initial_satisfied = satisfied_fraction(model, phrase_triplets, context_triplets, cfg.margin)?;

    let bs = cfg.batch_size;
    let n_phrase_batches = phrase_triplets.len().div_ceil(bs);
    let n_context_batches = context_triplets.len().div_ceil(bs);
    let order = schedule(n_phrase_batches, n_context_batches, mixing);
    let total_steps = order.len() * cfg.epochs;
    let mut opt = Optimizer::new(model);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let mut phrase_idx: Vec<usize> = (0..phrase_triplets.len()).collect();
        let mut context_idx: Vec<usize> = (0..context_triplets.len()).collect();
        phrase_idx.shuffle(rng);
        context_idx.shuffle(rng);
        let mut phrase_batches = phrase_idx.chunks(bs);
        let mut context_batches = context_idx.chunks(bs);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;

        for &pool in &order {
            let batch = match pool {
                Pool::Phrase => phrase_batches.next(),
                Pool::Context => context_batches.next(),
            }
            .expect("schedule matches batch counts");
            let mut grad = ComposerGrad::default();
            let mut batch_loss = 0.0;
            let mut satisfied = 0usize;
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let items = triplet_items(pool, idx, phrase_triplets, context_triplets);
                let [a, p, q] = [&items[0], &items[1], &items[2]].map(|it| compose(model, it));
                let loss = triplet_loss(a.view(), p.view(), q.view(), cfg.margin)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss at epoch {epoch}, batch {} ({pool:?} triplet {idx})",
                        history.batches.len()
                    )));
                }
                batch_loss += loss;
                if loss == 0.0 {
                    satisfied += 1;
                    continue;
                }
                let tg = triplet_loss_backward(a.view(), p.view(), q.view(), cfg.margin);
                for (item, g) in items.iter().zip([&tg.anchor, &tg.positive, &tg.negative]) {
                    grad.add_scaled(&grad_of(model, item, g.view()), scale);
                }
            }
            let lr = lr_at(step, total_steps, cfg)?;
            // adam_step rejects lr = 0; warm-up step 0 only advances the moments.
            opt.apply(model, &grad, lr.max(f64::MIN_POSITIVE))?;
            history.optimizer_steps += 1;
            step += 1;
            epoch_loss += batch_loss;
            epoch_count += batch.len();
            history.batches.push(BatchRecord {
                epoch,
                pool,
                loss: batch_loss * scale,
                satisfied: satisfied as f64 * scale,
                lr,
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss / epoch_count as f64,
            satisfied: satisfied_fraction(model, phrase_triplets, context_triplets, cfg.margin)?,
        });
    }
    debug_assert_eq!(history.optimizer_steps, opt.table.step);
    Ok(history)
}

fn read_tsv(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != columns {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {columns} tab-separated fields, found {}", fields.len()),
            ));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

/// Reads `anchor\tpositive\tnegative` lines.
pub fn load_phrase_triplets(path: impl AsRef<Path>) -> Result<Vec<PhraseTriplet>> {
    let path = path.as_ref();
    read_tsv(path, 3)?
        .into_iter()
        .map(|(line, f)| {
            PhraseTriplet::new(Phrase::new(&f[0]), Phrase::new(&f[1]), Phrase::new(&f[2]))
                .map_err(|e| Error::parse(path, line, e.to_string()))
        })
        .collect()
}

/// Reads `anchor\tpositive\tnegative` pairs for corruption: only the first two
/// columns are required.
pub fn load_phrase_pairs(path: impl AsRef<Path>) -> Result<Vec<(Phrase, Phrase)>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(a), Some(b)) => out.push((Phrase::new(a), Phrase::new(b))),
            _ => return Err(Error::parse(path, i + 1, "expected at least two tab-separated fields")),
        }
    }
    Ok(out)
}

/// Reads `anchor\tpositive_context\tnegative_context` lines. Contexts longer than the
/// window are cut around the mask.
pub fn load_context_triplets(path: impl AsRef<Path>) -> Result<Vec<ContextTriplet>> {
    let path = path.as_ref();
    read_tsv(path, 3)?
        .into_iter()
        .map(|(line, f)| {
            let pos = window_around_mask(&tokenize(&f[1]), DEFAULT_MAX_LEN);
            let mut neg = tokenize(&f[2]);
            neg.truncate(DEFAULT_MAX_LEN);
            ContextTriplet::new(Phrase::new(&f[0]), pos, neg).map_err(|e| Error::parse(path, line, e.to_string()))
        })
        .collect()
}
