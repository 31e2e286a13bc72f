//! Phrase-based neural topic model.
//!
//! A document vector `x` is scored against the `K` rows of a topic matrix `R`,
//! `t = softmax(R x)`, and reconstructed as `x_hat = R^T t`. Training minimizes
//!
//! ```text
//! sum_i max(0, 1 - x_hat . x + x . z_i)  +  lambda * ||R R^T - I||_F
//! ```
//!
//! over `N` sampled negative documents `z_i`. Only `R` is trained; document vectors
//! are fixed inputs. Topics are read off by ranking vocabulary rows of an embedding
//! matrix `L` by their inner product with each topic row (`R L^T`).

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numcore::{adam_step, AdamState, Rng};
use crate::vecstore::{self, EmbeddingMatrix, VectorFormat, Vocab};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    r: Array2<f64>,
    r_init: Array2<f64>,
}

impl TopicModel {
    /// Gaussian `N(0, std^2)` initialization; the snapshot is taken immediately.
    pub fn random(k: usize, dim: usize, std: f64, rng: &mut Rng) -> Result<Self> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let r = Array2::from_shape_simple_fn((k, dim), || normal.sample(rng));
        Self::from_matrix(r)
    }

    pub fn from_matrix(r: Array2<f64>) -> Result<Self> {
        let init = r.clone();
        Self::from_parts(r, init)
    }

    pub fn from_parts(r: Array2<f64>, r_init: Array2<f64>) -> Result<Self> {
        if r.nrows() < 2 {
            return Err(Error::invalid("a topic model needs K >= 2"));
        }
        if r.dim() != r_init.dim() {
            return Err(Error::invalid("R and its initialization differ in shape"));
        }
        if r.iter().chain(r_init.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("topic matrix".into()));
        }
        Ok(Self { r, r_init })
    }

    pub fn topics(&self) -> usize {
        self.r.nrows()
    }

    pub fn dim(&self) -> usize {
        self.r.ncols()
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn r_init(&self) -> &Array2<f64> {
        &self.r_init
    }
}

fn check_doc(r: &ArrayView2<'_, f64>, x: &ArrayView1<'_, f64>) -> Result<()> {
    if r.ncols() != x.len() {
        return Err(Error::invalid(format!(
            "document dim {} does not match topic dim {}",
            x.len(),
            r.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("document vector is not finite"));
    }
    Ok(())
}

fn softmax(u: &Array1<f64>) -> Array1<f64> {
    let m = u.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = u.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// `softmax(R x)`, computed after subtracting the max logit.
pub fn topic_distribution(r: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_doc(&r, &x)?;
    Ok(softmax(&r.dot(&x)))
}

/// `R^T t`.
pub fn reconstruct(r: ArrayView2<'_, f64>, t: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if t.len() != r.nrows() {
        return Err(Error::invalid(format!("distribution has {} entries for {} topics", t.len(), r.nrows())));
    }
    Ok(r.t().dot(&t))
}

/// Which vector the negative documents are compared against in the hinge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegTerm {
    /// `x . z_i`, the anchor document.
    #[default]
    Anchor,
    /// `x_hat . z_i`, the reconstruction.
    Recon,
}

impl std::str::FromStr for NegTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anchor" => Ok(NegTerm::Anchor),
            "recon" => Ok(NegTerm::Recon),
            other => Err(Error::invalid(format!("unknown negative term {other:?}"))),
        }
    }
}

impl std::fmt::Display for NegTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NegTerm::Anchor => "anchor",
            NegTerm::Recon => "recon",
        })
    }
}

/// `sum_i max(0, 1 - x_hat . x + s . z_i)` with `s` chosen by `neg_term`.
pub fn pntm_loss(
    recon: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
    negatives: ArrayView2<'_, f64>,
    neg_term: NegTerm,
) -> Result<f64> {
    if negatives.nrows() == 0 {
        return Err(Error::invalid("need at least one negative document"));
    }
    if recon.len() != x.len() || negatives.ncols() != x.len() {
        return Err(Error::invalid("reconstruction, document and negatives must share a dim"));
    }
    let pos = recon.dot(&x);
    let s = match neg_term {
        NegTerm::Anchor => x,
        NegTerm::Recon => recon,
    };
    Ok(negatives
        .rows()
        .into_iter()
        .map(|z| (1.0 - pos + s.dot(&z)).max(0.0))
        .sum())
}

/// `||R R^T - I||_F`.
pub fn orthogonality_penalty(r: ArrayView2<'_, f64>) -> f64 {
    let mut m = r.dot(&r.t());
    m.diag_mut().mapv_inplace(|v| v - 1.0);
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Gradient of [`orthogonality_penalty`]: `2 (R R^T - I) R / ||R R^T - I||_F`,
/// zero where the penalty itself is zero.
pub fn orthogonality_grad(r: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut m = r.dot(&r.t());
    m.diag_mut().mapv_inplace(|v| v - 1.0);
    let h = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if h == 0.0 {
        return Array2::zeros(r.dim());
    }
    m.dot(&r) * (2.0 / h)
}

/// Hinge loss of one document and its gradient with respect to `R`.
pub fn document_loss_grad(
    r: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    negatives: ArrayView2<'_, f64>,
    neg_term: NegTerm,
) -> Result<(f64, Array2<f64>)> {
    let t = topic_distribution(r, x)?;
    let recon = r.t().dot(&t);
    let loss = pntm_loss(recon.view(), x, negatives, neg_term)?;
    let pos = recon.dot(&x);
    let mut g_recon = Array1::<f64>::zeros(x.len());
    for z in negatives.rows() {
        let s = match neg_term {
            NegTerm::Anchor => x.dot(&z),
            NegTerm::Recon => recon.dot(&z),
        };
        if 1.0 - pos + s > 0.0 {
            g_recon -= &x;
            if neg_term == NegTerm::Recon {
                g_recon += &z;
            }
        }
    }
    let mut grad = Array2::zeros(r.dim());
    if g_recon.iter().all(|&v| v == 0.0) {
        return Ok((loss, grad));
    }
    // Through x_hat = R^T t: row k gets t_k * g.
    for (k, mut row) in grad.axis_iter_mut(Axis(0)).enumerate() {
        row.scaled_add(t[k], &g_recon);
    }
    // Through t = softmax(u), u = R x.
    let dt = r.dot(&g_recon);
    let tdt = t.dot(&dt);
    let du = &t * &(dt - tdt);
    for (k, mut row) in grad.axis_iter_mut(Axis(0)).enumerate() {
        row.scaled_add(du[k], &x);
    }
    Ok((loss, grad))
}

/// Mean document hinge plus `lambda` times the orthogonality penalty, and its
/// gradient. `negatives[i]` lists the negative document ids for `batch[i]`.
pub fn batch_objective(
    r: ArrayView2<'_, f64>,
    docs: ArrayView2<'_, f64>,
    batch: &[usize],
    negatives: &[Vec<usize>],
    ortho_weight: f64,
    neg_term: NegTerm,
) -> Result<(ObjectiveParts, Array2<f64>)> {
    if batch.is_empty() || batch.len() != negatives.len() {
        return Err(Error::invalid("batch and negative lists must be nonempty and aligned"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = Array2::zeros(r.dim());
    let mut hinge = 0.0;
    for (&i, negs) in batch.iter().zip(negatives) {
        let z = docs.select(Axis(0), negs);
        let (l, g) = document_loss_grad(r, docs.row(i), z.view(), neg_term)?;
        hinge += l * scale;
        grad.scaled_add(scale, &g);
    }
    let ortho = orthogonality_penalty(r);
    if ortho_weight != 0.0 {
        grad.scaled_add(ortho_weight, &orthogonality_grad(r));
    }
    Ok((
        ObjectiveParts {
            hinge,
            ortho,
            total: hinge + ortho_weight * ortho,
        },
        grad,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveParts {
    pub hinge: f64,
    pub ortho: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PntmConfig {
    pub topics: usize,
    pub negatives: usize,
    pub ortho_weight: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub init_std: f64,
    pub neg_term: NegTerm,
}

impl Default for PntmConfig {
    fn default() -> Self {
        Self {
            topics: 50,
            negatives: 5,
            ortho_weight: 1.0,
            epochs: 300,
            lr: 1e-3,
            batch_size: 32,
            seed: 0,
            init_std: 0.1,
            neg_term: NegTerm::Anchor,
        }
    }
}

impl PntmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics < 2 {
            return Err(Error::invalid("need at least 2 topics"));
        }
        if self.negatives == 0 {
            return Err(Error::invalid("need at least 1 negative document"));
        }
        if !(self.ortho_weight >= 0.0) {
            return Err(Error::invalid("orthogonality weight must be >= 0"));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid("lr and batch_size must be positive"));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::invalid("init_std must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PntmEpoch {
    pub epoch: usize,
    /// Mean per-document hinge loss over the epoch.
    pub hinge: f64,
    /// Penalty at the end of the epoch.
    pub ortho: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PntmHistory {
    pub initial_ortho: f64,
    pub epochs: Vec<PntmEpoch>,
    pub optimizer_steps: u64,
}

/// `n` distinct document ids other than `anchor`, drawn uniformly.
fn sample_negatives(n_docs: usize, anchor: usize, n: usize, rng: &mut Rng) -> Vec<usize> {
    index::sample(rng, n_docs - 1, n)
        .into_iter()
        .map(|i| if i >= anchor { i + 1 } else { i })
        .collect()
}

/// Trains a topic matrix on fixed document vectors (`docs` is `n x d`).
pub fn train_pntm(docs: ArrayView2<'_, f64>, cfg: &PntmConfig, rng: &mut Rng) -> Result<(TopicModel, PntmHistory)> {
    cfg.validate()?;
    let n = docs.nrows();
    if n < cfg.negatives + 1 {
        return Err(Error::invalid(format!(
            "need at least {} documents for {} negatives, got {n}",
            cfg.negatives + 1,
            cfg.negatives
        )));
    }
    if docs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("document vectors must be finite"));
    }
    let mut model = TopicModel::random(cfg.topics, docs.ncols(), cfg.init_std, rng)?;
    let mut history = PntmHistory {
        initial_ortho: orthogonality_penalty(model.r.view()),
        ..Default::default()
    };
    let mut state = AdamState::new(model.r.len());
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut hinge_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let negatives: Vec<Vec<usize>> = batch
                .iter()
                .map(|&i| sample_negatives(n, i, cfg.negatives, rng))
                .collect();
            let (parts, grad) = batch_objective(model.r.view(), docs, batch, &negatives, cfg.ortho_weight, cfg.neg_term)?;
            if !parts.total.is_finite() || grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("topic objective at epoch {epoch}")));
            }
            hinge_sum += parts.hinge * batch.len() as f64;
            adam_step(
                model.r.as_slice_mut().expect("contiguous"),
                grad.as_slice().expect("contiguous"),
                &mut state,
                cfg.lr,
            )?;
            history.optimizer_steps += 1;
        }
        let ortho = orthogonality_penalty(model.r.view());
        let hinge = hinge_sum / n as f64;
        history.epochs.push(PntmEpoch {
            epoch,
            hinge,
            ortho,
            total: hinge + cfg.ortho_weight * ortho,
        });
    }
    Ok((model, history))
}

/// Most probable topic; ties go to the lowest id.
pub fn assign_topic(r: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Result<usize> {
    let t = topic_distribution(r, x)?;
    let mut best = 0;
    for (k, &p) in t.iter().enumerate().skip(1) {
        if p > t[best] {
            best = k;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDescription {
    pub topic: usize,
    pub items: Vec<(String, f64)>,
}

/// Top-`m` vocabulary entries per topic by inner product (`R L^T`); ties go to the
/// lower row id.
pub fn interpret_topics(r: ArrayView2<'_, f64>, vocab: &Vocab, l: &EmbeddingMatrix, m: usize) -> Result<Vec<TopicDescription>> {
    if l.dim() != r.ncols() {
        return Err(Error::invalid(format!(
            "vocabulary vectors have dim {} but topics have dim {}",
            l.dim(),
            r.ncols()
        )));
    }
    if vocab.len() != l.rows() {
        return Err(Error::invalid("vocab and matrix sizes differ"));
    }
    let scores = topic_scores(r, l);
    Ok(scores
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(k, row)| {
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            ids.truncate(m);
            TopicDescription {
                topic: k,
                items: ids.into_iter().map(|i| (vocab.surface(i).to_string(), row[i])).collect(),
            }
        })
        .collect())
}

/// The `K x |V|` score matrix `R L^T`.
pub fn topic_scores(r: ArrayView2<'_, f64>, l: &EmbeddingMatrix) -> Array2<f64> {
    r.dot(&l.data().t())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionItem {
    pub topic: usize,
    pub items: Vec<String>,
    pub intruder_index: usize,
    pub intruder_topic: usize,
}

/// One six-item list per topic: its top five items plus an intruder drawn from
/// another topic's top ten that is absent from this topic's top fifty.
/// Topics that cannot be served are skipped; the reasons come back as warnings.
pub fn make_intrusion_items(descriptions: &[TopicDescription], rng: &mut Rng) -> Result<(Vec<IntrusionItem>, Vec<String>)> {
    let usable = descriptions.iter().filter(|d| d.items.len() >= 5).count();
    if usable < 2 {
        return Err(Error::invalid("need at least two topics with five or more items"));
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for desc in descriptions {
        if desc.items.len() < 5 {
            warnings.push(format!("topic {}: fewer than 5 items, skipped", desc.topic));
            continue;
        }
        let own: HashSet<&str> = desc.items.iter().take(50).map(|(s, _)| s.as_str()).collect();
        let mut seen = HashSet::new();
        let pool: Vec<(usize, &str)> = descriptions
            .iter()
            .filter(|other| other.topic != desc.topic)
            .flat_map(|other| other.items.iter().take(10).map(move |(s, _)| (other.topic, s.as_str())))
            .filter(|(_, s)| !own.contains(s) && seen.insert(*s))
            .collect();
        if pool.is_empty() {
            warnings.push(format!("topic {}: no intruder candidate, skipped", desc.topic));
            continue;
        }
        let (intruder_topic, intruder) = pool[rng.random_range(0..pool.len())];
        let mut items: Vec<String> = desc.items.iter().take(5).map(|(s, _)| s.clone()).collect();
        items.push(intruder.to_string());
        items.shuffle(rng);
        let intruder_index = items.iter().position(|s| s == intruder).expect("intruder was inserted");
        out.push(IntrusionItem {
            topic: desc.topic,
            items,
            intruder_index,
            intruder_topic,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((out, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrespondenceStats {
    /// Mean L2 distance between each topic row and its initialization.
    pub avg_drift: f64,
    /// Mean L2 distance between distinct topic rows.
    pub avg_pairwise: f64,
}

pub fn correspondence_stats(model: &TopicModel) -> CorrespondenceStats {
    let k = model.topics();
    let dist = |a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>| vecstore::l2_unchecked(a, b);
    let drift = (0..k).map(|i| dist(model.r.row(i), model.r_init.row(i))).sum::<f64>() / k as f64;
    let mut pair_sum = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            pair_sum += dist(model.r.row(i), model.r.row(j));
        }
    }
    CorrespondenceStats {
        avg_drift: drift,
        avg_pairwise: pair_sum / (k * (k - 1) / 2) as f64,
    }
}

pub const TOPICS_FILE: &str = "topics.pvec";
pub const TOPICS_INIT_FILE: &str = "topics_init.pvec";
pub const MODEL_CONFIG_FILE: &str = "pntm.cfg";
pub const TOPIC_DUMP_FILE: &str = "topics.jsonl";

fn topic_vocab(k: usize) -> Vocab {
    Vocab::from_entries((0..k).map(|i| format!("topic_{i}"))).expect("names are unique")
}

impl TopicModel {
    /// Writes `R` and its initialization as `pvec-text` (exact for `f64`) plus a
    /// small config file.
    pub fn save(&self, dir: impl AsRef<Path>, cfg: &PntmConfig) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names = topic_vocab(self.topics());
        vecstore::save_vectors(&names, &EmbeddingMatrix::new(self.r.clone())?, dir.join(TOPICS_FILE), VectorFormat::PvecText)?;
        vecstore::save_vectors(&names, &EmbeddingMatrix::new(self.r_init.clone())?, dir.join(TOPICS_INIT_FILE), VectorFormat::PvecText)?;
        let text = format!(
            "topics = {}\ndim = {}\nnegatives = {}\northo = {}\nepochs = {}\nlr = {}\nbatch = {}\nseed = {}\ninit_std = {}\nneg_term = {}\n",
            self.topics(),
            self.dim(),
            cfg.negatives,
            cfg.ortho_weight,
            cfg.epochs,
            cfg.lr,
            cfg.batch_size,
            cfg.seed,
            cfg.init_std,
            cfg.neg_term
        );
        let path = dir.join(MODEL_CONFIG_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (_, r) = vecstore::load_vectors(dir.join(TOPICS_FILE), Some(VectorFormat::PvecText))?;
        let (_, r_init) = vecstore::load_vectors(dir.join(TOPICS_INIT_FILE), Some(VectorFormat::PvecText))?;
        Self::from_parts(r.into_inner(), r_init.into_inner())
    }
}

pub fn write_topic_dump(descriptions: &[TopicDescription], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in descriptions {
        serde_json::to_writer(&mut w, d).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_topic_dump(path: impl AsRef<Path>) -> Result<Vec<TopicDescription>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// One document per line, or JSON lines with a `text` field and optional `id`.
/// The JSON form is chosen when the first nonblank line starts with `{`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if json {
            let value: BTreeMap<String, serde_json::Value> =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            let body = value
                .get("text")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::parse(path, i + 1, "record has no string `text` field"))?;
            let id = match value.get("id") {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => (i + 1).to_string(),
            };
            docs.push(Document {
                id,
                text: body.to_string(),
            });
        } else {
            docs.push(Document {
                id: (i + 1).to_string(),
                text: line.to_string(),
            });
        }
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{finite_diff_check, seeded_rng};
    use ndarray::array;

    #[test]
    fn softmax_saturates_and_normalizes() {
        let r = Array2::eye(3);
        let t = topic_distribution(r.view(), array![50.0, 0.0, 0.0].view()).unwrap();
        assert!(t[0] > 0.999);
        let c = topic_distribution(array![[1.0, 1.0], [2.0, 0.0], [0.0, 2.0]].view(), array![1.0, 1.0].view()).unwrap();
        assert!(c.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert!((c.sum() - 1.0).abs() < 1e-9);
        assert!(topic_distribution(r.view(), array![f64::NAN, 0.0, 0.0].view()).is_err());
    }

    #[test]
    fn reconstruction_cases() {
        let r = array![[1.0, 2.0], [3.0, -1.0], [0.0, 4.0]];
        assert_eq!(reconstruct(r.view(), array![0.0, 1.0, 0.0].view()).unwrap(), array![3.0, -1.0]);
        let u = reconstruct(r.view(), Array1::from_elem(3, 1.0 / 3.0).view()).unwrap();
        assert!((&u - &r.mean_axis(Axis(0)).unwrap()).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn loss_cases() {
        let x = array![1.0, 0.0];
        let negs = array![[2.0, 0.0]];
        assert_eq!(pntm_loss(x.view(), x.view(), negs.view(), NegTerm::Anchor).unwrap(), 2.0);
        let orth = array![[0.0, 1.0], [0.0, -3.0], [0.0, 2.0]];
        assert_eq!(pntm_loss(array![0.0, 1.0].view(), x.view(), orth.view(), NegTerm::Anchor).unwrap(), 3.0);
        let big = array![100.0, 0.0];
        assert_eq!(pntm_loss(big.view(), x.view(), array![[-1.0, 0.0]].view(), NegTerm::Anchor).unwrap(), 0.0);
        assert!(pntm_loss(x.view(), x.view(), Array2::zeros((0, 2)).view(), NegTerm::Anchor).is_err());
    }

    #[test]
    fn penalty_cases() {
        assert_eq!(orthogonality_penalty(Array2::<f64>::eye(4).view()), 0.0);
        let two = Array2::<f64>::eye(5) * 2.0;
        assert!((orthogonality_penalty(two.view()) - 3.0 * 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn document_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(8);
        for neg_term in [NegTerm::Anchor, NegTerm::Recon] {
            let r = Array2::from_shape_simple_fn((4, 6), || rng.random_range(-0.5..0.5));
            let docs = Array2::from_shape_simple_fn((8, 6), || rng.random_range(-1.0..1.0));
            let batch = [0, 3];
            let negs = vec![vec![1, 2, 5], vec![4, 6, 7]];
            let (_, g) = batch_objective(r.view(), docs.view(), &batch, &negs, 0.7, neg_term).unwrap();
            let err = finite_diff_check(
                |p| {
                    let rr = Array2::from_shape_vec(r.dim(), p.to_vec()).unwrap();
                    batch_objective(rr.view(), docs.view(), &batch, &negs, 0.7, neg_term).unwrap().0.total
                },
                r.as_slice().unwrap(),
                g.as_slice().unwrap(),
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{neg_term}: {err}");
        }
    }

    #[test]
    fn negatives_exclude_anchor() {
        let mut rng = seeded_rng(1);
        for anchor in 0..6 {
            let s = sample_negatives(6, anchor, 5, &mut rng);
            let set: HashSet<usize> = s.iter().copied().collect();
            assert_eq!(set.len(), 5);
            assert!(!set.contains(&anchor));
        }
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let mut rng = seeded_rng(2);
        let docs = Array2::from_shape_simple_fn((10, 4), || rng.random_range(-1.0..1.0));
        let cfg = PntmConfig {
            topics: 3,
            epochs: 0,
            ..Default::default()
        };
        let (m, h) = train_pntm(docs.view(), &cfg, &mut rng).unwrap();
        assert_eq!(m.r(), m.r_init());
        assert_eq!(h.optimizer_steps, 0);
        assert_eq!(correspondence_stats(&m).avg_drift, 0.0);
    }

    #[test]
    fn too_few_documents() {
        let docs = Array2::zeros((5, 3));
        let cfg = PntmConfig {
            topics: 2,
            ..Default::default()
        };
        assert!(train_pntm(docs.view(), &cfg, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn assignment_ties_and_monotonicity() {
        let r = Array2::eye(3);
        assert_eq!(assign_topic(r.view(), array![0.0, 5.0, 0.0].view()).unwrap(), 1);
        assert_eq!(assign_topic(r.view(), array![1.0, 1.0, 1.0].view()).unwrap(), 0);
    }

    #[test]
    fn interpretation_selects_and_ties() {
        let vocab = Vocab::from_entries(["a", "b", "c", "b2"]).unwrap();
        let l = EmbeddingMatrix::new(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
        let r = array![[0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let d = interpret_topics(r.view(), &vocab, &l, 10).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].items.len(), 4);
        assert_eq!(d[0].items[0].0, "b");
        assert_eq!(d[0].items[1].0, "b2");
        assert_eq!(d[1].items[0].0, "c");
    }

    #[test]
    fn pairwise_closed_form() {
        let m = TopicModel::from_parts(array![[0.0, 0.0], [3.0, 4.0]], array![[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let s = correspondence_stats(&m);
        assert_eq!(s.avg_pairwise, 5.0);
        assert_eq!(s.avg_drift, 0.0);
    }

    fn two_topics() -> Vec<TopicDescription> {
        let mk = |k: usize, prefix: &str| TopicDescription {
            topic: k,
            items: (0..12).map(|i| (format!("{prefix}{i}"), 12.0 - i as f64)).collect(),
        };
        vec![mk(0, "x"), mk(1, "y")]
    }

    #[test]
    fn intrusion_lists() {
        let descs = two_topics();
        let (items, warnings) = make_intrusion_items(&descs, &mut seeded_rng(5)).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(items.len(), 2);
        for it in &items {
            assert_eq!(it.items.len(), 6);
            let prefix = if it.topic == 0 { "y" } else { "x" };
            let foreign: Vec<usize> = (0..6).filter(|&i| it.items[i].starts_with(prefix)).collect();
            assert_eq!(foreign, vec![it.intruder_index]);
        }
        let (again, _) = make_intrusion_items(&descs, &mut seeded_rng(5)).unwrap();
        assert_eq!(items, again);
    }

    #[test]
    fn intrusion_skips_when_pool_empty() {
        let mut descs = two_topics();
        // Topic 0's top 50 covers every item in topic 1's top 10.
        let extra = descs[1].items.clone();
        descs[0].items.extend(extra);
        let (items, warnings) = make_intrusion_items(&descs, &mut seeded_rng(5)).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].topic, 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn model_and_dump_round_trip() {
        let mut rng = seeded_rng(3);
        let m = TopicModel::random(3, 4, 0.1, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path(), &PntmConfig::default()).unwrap();
        assert_eq!(TopicModel::load(dir.path()).unwrap(), m);

        let dump = dir.path().join(TOPIC_DUMP_FILE);
        let descs = two_topics();
        write_topic_dump(&descs, &dump).unwrap();
        let first = std::fs::read_to_string(&dump).unwrap();
        assert!(first.starts_with("{\"topic\":0,\"items\":[[\"x0\",12.0]"));
        assert_eq!(read_topic_dump(&dump).unwrap(), descs);
    }

    #[test]
    fn corpus_formats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "first doc\n\nsecond doc\n").unwrap();
        let docs = load_corpus(&p).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].id, "3");
        std::fs::write(&p, "{\"id\": 7, \"text\": \"hello world\"}\n{\"id\": \"b\", \"text\": \"x\"}\n").unwrap();
        let docs = load_corpus(&p).unwrap();
        assert_eq!(docs[0].id, "7");
        assert_eq!(docs[1].text, "x");
    }
}
