//! Mean-pooled phrase and document vectors.
//!
//! A [`ComposerModel`] looks every token up in a trainable table, optionally maps
//! it through `f(W e + b)` with `f` either identity or `tanh`, and averages the
//! results. Mean pooling ignores token order, so `"dog bites man"` and
//! `"man bites dog"` get the same vector.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, Normal};

use crate::numcore::Rng;
use crate::vecstore::{self, EmbeddingMatrix, VectorFormat, Vocab};
use crate::{Error, Result};

/// Placeholder substituted for a phrase inside its context.
pub const MASK_TOKEN: &str = "[MASK]";

/// Context window used for documents and masked contexts.
pub const DEFAULT_MAX_LEN: usize = 120;

/// Lowercases and splits on whitespace. The mask placeholder is kept verbatim.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| if t == MASK_TOKEN { t.to_string() } else { t.to_lowercase() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Phrase {
    pub surface: String,
    pub tokens: Vec<String>,
}

impl Phrase {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        let tokens = tokenize(&surface);
        Self { surface, tokens }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl From<&str> for Phrase {
    fn from(s: &str) -> Self {
        Phrase::new(s)
    }
}

impl From<String> for Phrase {
    fn from(s: String) -> Self {
        Phrase::new(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Nonlinearity {
    #[default]
    None,
    Tanh,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum OovPolicy {
    /// Drop unknown tokens from the mean.
    #[default]
    Skip,
    /// Unknown tokens contribute a zero vector and still count toward the mean.
    ZeroVector,
}

macro_rules! keyword_enum {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::invalid(format!("unknown value {other:?}"))),
                }
            }
        }
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($variant => $name,)+ })
            }
        }
    };
}

keyword_enum!(Nonlinearity, Nonlinearity::None => "none", Nonlinearity::Tanh => "tanh");
keyword_enum!(OovPolicy, OovPolicy::Skip => "skip", OovPolicy::ZeroVector => "zero-vector");

/// Square linear layer applied to every token vector before pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `d x d`, maps input (column) to output (row).
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Projection {
    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
        }
    }

    pub fn random(dim: usize, std: f64, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            weight: Array2::from_shape_simple_fn((dim, dim), || normal.sample(rng)),
            bias: Array1::from_shape_simple_fn(dim, || normal.sample(rng)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposerModel {
    token_vocab: Vocab,
    token_table: EmbeddingMatrix,
    projection: Option<Projection>,
    nonlinearity: Nonlinearity,
    oov_policy: OovPolicy,
}

/// Result of pooling: the vector and how many tokens contributed to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Composed {
    pub vector: Array1<f64>,
    /// Tokens found in the table.
    pub known: usize,
    /// Tokens not found in the table.
    pub unknown: usize,
}

impl Composed {
    /// No token was known, so the vector is zero; callers may want to warn.
    pub fn all_unknown(&self) -> bool {
        self.known == 0
    }
}

/// Sparse gradient of a scalar with respect to a model's trainable fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComposerGrad {
    pub rows: BTreeMap<usize, Array1<f64>>,
    pub weight: Option<Array2<f64>>,
    pub bias: Option<Array1<f64>>,
}

impl ComposerGrad {
    pub fn add_scaled(&mut self, other: &ComposerGrad, scale: f64) {
        for (&id, g) in &other.rows {
            self.rows
                .entry(id)
                .and_modify(|acc| acc.scaled_add(scale, g))
                .or_insert_with(|| g * scale);
        }
        if let Some(w) = &other.weight {
            match &mut self.weight {
                Some(acc) => acc.scaled_add(scale, w),
                slot => *slot = Some(w * scale),
            }
        }
        if let Some(b) = &other.bias {
            match &mut self.bias {
                Some(acc) => acc.scaled_add(scale, b),
                slot => *slot = Some(b * scale),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|&v| v == 0.0))
            && self.weight.as_ref().is_none_or(|w| w.iter().all(|&v| v == 0.0))
            && self.bias.as_ref().is_none_or(|b| b.iter().all(|&v| v == 0.0))
    }

    /// Dense copy of the table gradient, `rows x dim`.
    pub fn dense_table(&self, rows: usize, dim: usize) -> Array2<f64> {
        let mut out = Array2::zeros((rows, dim));
        for (&id, g) in &self.rows {
            out.row_mut(id).assign(g);
        }
        out
    }
}

impl ComposerModel {
    pub fn new(token_vocab: Vocab, token_table: EmbeddingMatrix) -> Result<Self> {
        if token_vocab.len() != token_table.rows() {
            return Err(Error::invalid(format!(
                "token vocab has {} entries but table has {} rows",
                token_vocab.len(),
                token_table.rows()
            )));
        }
        Ok(Self {
            token_vocab,
            token_table,
            projection: None,
            nonlinearity: Nonlinearity::None,
            oov_policy: OovPolicy::Skip,
        })
    }

    /// Random Gaussian table over the given tokens.
    pub fn random<I, S>(tokens: I, dim: usize, std: f64, rng: &mut Rng) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab = Vocab::from_entries(tokens)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let table = Array2::from_shape_simple_fn((vocab.len(), dim), || normal.sample(rng));
        Self::new(vocab, EmbeddingMatrix::new(table)?)
    }

    pub fn with_projection(mut self, projection: Projection, nonlinearity: Nonlinearity) -> Result<Self> {
        let d = self.dim();
        if projection.weight.dim() != (d, d) || projection.bias.len() != d {
            return Err(Error::invalid(format!(
                "projection must be {d}x{d} with a length-{d} bias"
            )));
        }
        self.projection = Some(projection);
        self.nonlinearity = nonlinearity;
        Ok(self)
    }

    pub fn with_oov_policy(mut self, policy: OovPolicy) -> Self {
        self.oov_policy = policy;
        self
    }

    pub fn dim(&self) -> usize {
        self.token_table.dim()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.token_vocab
    }

    pub fn table(&self) -> &EmbeddingMatrix {
        &self.token_table
    }

    pub fn table_mut(&mut self) -> &mut EmbeddingMatrix {
        &mut self.token_table
    }

    pub fn projection(&self) -> Option<&Projection> {
        self.projection.as_ref()
    }

    pub fn projection_mut(&mut self) -> Option<&mut Projection> {
        self.projection.as_mut()
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    /// Adds `token` with the given initial vector unless it is already present.
    pub fn ensure_token(&mut self, token: &str, init: ArrayView1<'_, f64>) -> Result<usize> {
        if let Some(id) = self.token_vocab.get(token) {
            return Ok(id);
        }
        self.token_table.push_row(init)?;
        self.token_vocab.push(token)
    }

    fn token_output(&self, id: usize) -> Array1<f64> {
        let e = self.token_table.row(id);
        match &self.projection {
            None => e.to_owned(),
            Some(p) => {
                let mut a = p.weight.dot(&e) + &p.bias;
                if self.nonlinearity == Nonlinearity::Tanh {
                    a.mapv_inplace(f64::tanh);
                }
                a
            }
        }
    }

    /// Token ids (`None` for unknown tokens).
    pub fn lookup<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Option<usize>> {
        tokens.iter().map(|t| self.token_vocab.get(t.as_ref())).collect()
    }

    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Composed {
        let ids = self.lookup(tokens);
        let unknown = ids.iter().filter(|id| id.is_none()).count();
        let pooled = match self.oov_policy {
            OovPolicy::Skip => ids.len() - unknown,
            OovPolicy::ZeroVector => ids.len(),
        };
        let mut acc = Array1::zeros(self.dim());
        for id in ids.into_iter().flatten() {
            acc += &self.token_output(id);
        }
        if pooled > 0 {
            acc /= pooled as f64;
        }
        Composed {
            vector: acc,
            known: tokens.len() - unknown,
            unknown,
        }
    }

    pub fn embed_phrase(&self, phrase: &Phrase) -> Composed {
        self.embed_tokens(&phrase.tokens)
    }

    /// Pools the first `max_len` tokens of a document.
    pub fn embed_document<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Composed {
        let end = tokens.len().min(max_len.max(1));
        self.embed_tokens(&tokens[..end])
    }

    /// Gradient of `upstream . embed_tokens(tokens)` with respect to the table,
    /// projection weight and bias.
    pub fn backward<S: AsRef<str>>(&self, tokens: &[S], upstream: ArrayView1<'_, f64>) -> ComposerGrad {
        let d = self.dim();
        let ids = self.lookup(tokens);
        let unknown = ids.iter().filter(|id| id.is_none()).count();
        let pooled = match self.oov_policy {
            OovPolicy::Skip => ids.len() - unknown,
            OovPolicy::ZeroVector => ids.len(),
        };
        let mut grad = ComposerGrad {
            weight: self.projection.as_ref().map(|_| Array2::zeros((d, d))),
            bias: self.projection.as_ref().map(|_| Array1::zeros(d)),
            ..Default::default()
        };
        if pooled == 0 {
            return grad;
        }
        let g = &upstream / pooled as f64;
        for id in ids.into_iter().flatten() {
            let row_grad = match &self.projection {
                None => g.clone(),
                Some(p) => {
                    let e = self.token_table.row(id);
                    let delta = match self.nonlinearity {
                        Nonlinearity::None => g.clone(),
                        Nonlinearity::Tanh => {
                            let h = (p.weight.dot(&e) + &p.bias).mapv(f64::tanh);
                            &g * &h.mapv(|v| 1.0 - v * v)
                        }
                    };
                    let w = grad.weight.as_mut().unwrap();
                    for (i, &di) in delta.iter().enumerate() {
                        w.row_mut(i).scaled_add(di, &e);
                    }
                    *grad.bias.as_mut().unwrap() += &delta;
                    p.weight.t().dot(&delta)
                }
            };
            grad.rows
                .entry(id)
                .and_modify(|acc| *acc += &row_grad)
                .or_insert(row_grad);
        }
        grad
    }

    /// Writes the checkpoint: `table.pvec`, `composer.cfg` and, with a projection,
    /// `projection.pvec` holding rows `proj_row_<i>` and `bias`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        vecstore::save_vectors(&self.token_vocab, &self.token_table, dir.join(TABLE_FILE), VectorFormat::PvecBin)?;
        let cfg = format!(
            "dim = {}\nnonlinearity = {}\noov_policy = {}\nprojection = {}\n",
            self.dim(),
            self.nonlinearity,
            self.oov_policy,
            self.projection.is_some()
        );
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
        let proj_path = dir.join(PROJECTION_FILE);
        if let Some(p) = &self.projection {
            let d = self.dim();
            let mut names: Vec<String> = (0..d).map(|i| format!("proj_row_{i}")).collect();
            names.push("bias".into());
            let mut rows = p.weight.clone();
            rows.push_row(p.bias.view()).expect("bias has length d");
            vecstore::save_vectors(&Vocab::from_entries(names)?, &EmbeddingMatrix::new(rows)?, &proj_path, VectorFormat::PvecBin)?;
        } else if proj_path.exists() {
            fs::remove_file(&proj_path).map_err(|e| Error::io(&proj_path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let cfg_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let mut fields = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&cfg_path, i + 1, "expected key = value"))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::parse(&cfg_path, 0, format!("missing key {k}")))
        };
        let nonlinearity: Nonlinearity = get("nonlinearity")?.parse()?;
        let oov: OovPolicy = get("oov_policy")?.parse()?;
        let has_projection = get("projection")? == "true";
        let (vocab, table) = vecstore::load_vectors(dir.join(TABLE_FILE), Some(VectorFormat::PvecBin))?;
        let dim: usize = get("dim")?
            .parse()
            .map_err(|_| Error::parse(&cfg_path, 0, "dim is not an integer"))?;
        if dim != table.dim() {
            return Err(Error::invalid(format!(
                "checkpoint dim {dim} does not match table dim {}",
                table.dim()
            )));
        }
        let mut model = Self::new(vocab, table)?.with_oov_policy(oov);
        if has_projection {
            let (names, rows) = vecstore::load_vectors(dir.join(PROJECTION_FILE), Some(VectorFormat::PvecBin))?;
            if names.len() != dim + 1 || names.get("bias") != Some(dim) {
                return Err(Error::invalid("projection file must hold d rows plus a bias row"));
            }
            let rows = rows.into_inner();
            let weight = rows.slice(ndarray::s![..dim, ..]).to_owned();
            let bias = rows.row(dim).to_owned();
            model = model.with_projection(Projection { weight, bias }, nonlinearity)?;
        }
        Ok(model)
    }
}

pub const TABLE_FILE: &str = "table.pvec";
pub const CONFIG_FILE: &str = "composer.cfg";
pub const PROJECTION_FILE: &str = "projection.pvec";

/// Flattened parameter view used by gradient checks and the optimizer:
/// table, then projection weight, then bias (row-major).
pub fn flatten_params(model: &ComposerModel) -> Vec<f64> {
    let mut out: Vec<f64> = model.token_table.data().iter().copied().collect();
    if let Some(p) = &model.projection {
        out.extend(p.weight.iter().copied());
        out.extend(p.bias.iter().copied());
    }
    out
}

/// Inverse of [`flatten_params`].
pub fn unflatten_params(model: &mut ComposerModel, flat: &[f64]) {
    let n = model.token_table.data().len();
    model
        .token_table
        .data_mut()
        .iter_mut()
        .zip(&flat[..n])
        .for_each(|(p, v)| *p = *v);
    if let Some(p) = &mut model.projection {
        let w = p.weight.len();
        p.weight.iter_mut().zip(&flat[n..n + w]).for_each(|(p, v)| *p = *v);
        p.bias.iter_mut().zip(&flat[n + w..]).for_each(|(p, v)| *p = *v);
    }
}

/// [`ComposerGrad`] laid out like [`flatten_params`].
pub fn flatten_grad(model: &ComposerModel, grad: &ComposerGrad) -> Vec<f64> {
    let (rows, d) = (model.token_table.rows(), model.dim());
    let mut out: Vec<f64> = grad.dense_table(rows, d).into_iter().collect();
    if model.projection.is_some() {
        match &grad.weight {
            Some(w) => out.extend(w.iter().copied()),
            None => out.extend(std::iter::repeat_n(0.0, d * d)),
        }
        match &grad.bias {
            Some(b) => out.extend(b.iter().copied()),
            None => out.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{finite_diff_check, seeded_rng};
    use ndarray::array;

    fn tiny() -> ComposerModel {
        let vocab = Vocab::from_entries(["a", "b", "c"]).unwrap();
        let table = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 2.0], [3.0, -1.0]]).unwrap();
        ComposerModel::new(vocab, table).unwrap()
    }

    #[test]
    fn tokenize_lowercases_and_keeps_mask() {
        assert_eq!(tokenize("Pulls THE  trigger"), vec!["pulls", "the", "trigger"]);
        assert_eq!(tokenize("a [MASK] b"), vec!["a", "[MASK]", "b"]);
    }

    #[test]
    fn single_token_is_its_row() {
        let m = tiny();
        assert_eq!(m.embed_phrase(&"b".into()).vector, array![0.0, 2.0]);
    }

    #[test]
    fn mean_of_two_and_duplicates() {
        let m = tiny();
        assert_eq!(m.embed_phrase(&"a b".into()).vector, array![0.5, 1.0]);
        assert_eq!(m.embed_phrase(&"a a".into()).vector, m.embed_phrase(&"a".into()).vector);
    }

    #[test]
    fn oov_policies() {
        let m = tiny();
        let c = m.embed_phrase(&"a zzz".into());
        assert_eq!(c.vector, array![1.0, 0.0]);
        assert_eq!(c.unknown, 1);
        let all = m.embed_phrase(&"zzz yyy".into());
        assert!(all.all_unknown());
        assert_eq!(all.vector, array![0.0, 0.0]);

        let z = tiny().with_oov_policy(OovPolicy::ZeroVector);
        assert_eq!(z.embed_phrase(&"a zzz".into()).vector, array![0.5, 0.0]);
    }

    #[test]
    fn document_truncation() {
        let m = tiny();
        let doc: Vec<String> = (0..200).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        // The short-document path agrees with the phrase path.
        assert_eq!(m.embed_document(&doc[..5], 120).vector, m.embed_tokens(&doc[..5]).vector);
        assert_eq!(m.embed_document(&doc, 120).vector, m.embed_tokens(&doc[..120]).vector);
        let same = vec!["c"; 40];
        assert_eq!(m.embed_document(&same, 120).vector, m.embed_phrase(&"c".into()).vector);
    }

    #[test]
    fn linear_backward_spreads_evenly() {
        let m = tiny();
        let up = array![0.6, -0.3];
        let g = m.backward(&["a", "b", "a"], up.view());
        assert_eq!(g.rows.len(), 2);
        assert!((&g.rows[&0] - &(&up * (2.0 / 3.0))).iter().all(|v| v.abs() < 1e-15));
        assert!((&g.rows[&1] - &(&up / 3.0)).iter().all(|v| v.abs() < 1e-15));
        assert!(!g.rows.contains_key(&2));

        let zero = m.backward(&["a", "c"], array![0.0, 0.0].view());
        assert!(zero.is_zero());
    }

    fn check(model: &ComposerModel, tokens: &[&str], upstream: &Array1<f64>) -> f64 {
        let params = flatten_params(model);
        let grad = flatten_grad(model, &model.backward(tokens, upstream.view()));
        let mut probe = model.clone();
        finite_diff_check(
            |p| {
                unflatten_params(&mut probe, p);
                probe.embed_tokens(tokens).vector.dot(upstream)
            },
            &params,
            &grad,
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn tanh_projection_backward_matches_finite_differences() {
        let mut rng = seeded_rng(3);
        let m = ComposerModel::random(["w0", "w1", "w2", "w3"], 5, 0.8, &mut rng)
            .unwrap()
            .with_projection(Projection::random(5, 0.5, &mut rng), Nonlinearity::Tanh)
            .unwrap();
        let up = array![0.3, -1.1, 0.7, 0.05, 2.0];
        let err = check(&m, &["w1", "w3", "w1", "oov"], &up);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = seeded_rng(9);
        let m = ComposerModel::random(["x", "y z"], 3, 1.0, &mut rng)
            .unwrap()
            .with_projection(Projection::random(3, 0.5, &mut rng), Nonlinearity::Tanh)
            .unwrap()
            .with_oov_policy(OovPolicy::ZeroVector);
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = ComposerModel::load(dir.path()).unwrap();
        assert_eq!(back.vocab(), m.vocab());
        assert_eq!(back.nonlinearity(), Nonlinearity::Tanh);
        assert_eq!(back.oov_policy(), OovPolicy::ZeroVector);
        let diff = (back.table().data() - m.table().data()).mapv(f64::abs);
        assert!(diff.iter().all(|&v| v < 1e-6));
        let pw = (&back.projection().unwrap().weight - &m.projection().unwrap().weight).mapv(f64::abs);
        assert!(pw.iter().all(|&v| v < 1e-6));
    }
}
