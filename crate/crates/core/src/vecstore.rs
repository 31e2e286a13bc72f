//! Vocabularies, embedding matrices, the `pvec` vector files and exact
//! nearest-neighbor search.
//!
//! Two on-disk formats are defined here:
//!
//! - `pvec-text`: a `<count> <dim>` header line, then one
//!   `<surface form>\t<v1> <v2> ... <vd>` line per entry. The tab separator lets
//!   surface forms carry spaces, so multi-word phrases survive a round trip.
//! - `pvec-bin`: magic `PVB1`, little-endian `u32` count and `u32` dim, then per entry
//!   a `u16` byte length, the UTF-8 surface form and `dim` little-endian `f32` values.
//!
//! Classic whitespace-separated word-vector files (GloVe without a header,
//! word2vec text with one) can be imported with [`VectorFormat::Glove`].

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PVEC_MAGIC: &[u8; 4] = b"PVB1";

/// Ordered set of unique surface forms (words and multi-word phrases).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for entry in entries {
            vocab.push(entry)?;
        }
        Ok(vocab)
    }

    /// Appends a surface form and returns its row id.
    pub fn push(&mut self, surface: impl Into<String>) -> Result<usize> {
        let surface = surface.into();
        validate_surface(&surface)?;
        if self.index.contains_key(&surface) {
            return Err(Error::invalid(format!("duplicate surface form {surface:?}")));
        }
        let id = self.entries.len();
        self.index.insert(surface.clone(), id);
        self.entries.push(surface);
        Ok(id)
    }

    pub fn get(&self, surface: &str) -> Option<usize> {
        self.index.get(surface).copied()
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.index.contains_key(surface)
    }

    pub fn surface(&self, id: usize) -> &str {
        &self.entries[id]
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn validate_surface(surface: &str) -> Result<()> {
    if surface.is_empty() {
        return Err(Error::invalid("empty surface form"));
    }
    if surface.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!(
            "surface form {surface:?} contains a tab or newline"
        )));
    }
    if surface.len() > u16::MAX as usize {
        return Err(Error::invalid("surface form longer than 65535 bytes"));
    }
    Ok(())
}

/// A `|V| x d` matrix of finite values, one row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::invalid("embedding dim must be >= 1"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding matrix entry at row {}",
                pos / data.ncols()
            )));
        }
        Ok(Self(data))
    }

    pub fn zeros(rows: usize, dim: usize) -> Result<Self> {
        Self::new(Array2::zeros((rows, dim)))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    /// Mutable access for trainers; callers keep values finite.
    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Appends a row, returning its id.
    pub fn push_row(&mut self, row: ArrayView1<'_, f64>) -> Result<usize> {
        if row.len() != self.dim() {
            return Err(Error::invalid(format!(
                "row has {} values, matrix dim is {}",
                row.len(),
                self.dim()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("appended row".into()));
        }
        self.0
            .push_row(row)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.rows() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorFormat {
    PvecText,
    PvecBin,
    /// Whitespace-separated `word v1 ... vd` lines, with or without a
    /// `<count> <dim>` header. Import only.
    Glove,
}

impl VectorFormat {
    /// Sniffs the format from the first bytes of a file.
    pub fn detect(path: &Path) -> Result<Self> {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut head = [0u8; 4];
        let n = read_up_to(&mut file, &mut head).map_err(|e| Error::io(path, e))?;
        if n == 4 && &head == PVEC_MAGIC {
            return Ok(VectorFormat::PvecBin);
        }
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut lines = reader.lines();
        let first = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::parse(path, 1, "empty vector file")),
        };
        if parse_header(&first).is_some() {
            match lines.next().transpose().map_err(|e| Error::io(path, e))? {
                Some(line) if !line.contains('\t') => Ok(VectorFormat::Glove),
                _ => Ok(VectorFormat::PvecText),
            }
        } else {
            Ok(VectorFormat::Glove)
        }
    }
}

impl std::str::FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pvec-text" | "text" => Ok(VectorFormat::PvecText),
            "pvec-bin" | "bin" | "binary" => Ok(VectorFormat::PvecBin),
            "glove" => Ok(VectorFormat::Glove),
            other => Err(Error::invalid(format!("unknown vector format {other:?}"))),
        }
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut parts = line.split(' ');
    let count = parts.next()?.parse().ok()?;
    let dim = parts.next()?.trim_end_matches('\r').parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some((count, dim))
}

/// Loads a vector file, sniffing the format when `format` is `None`.
pub fn load_vectors(path: impl AsRef<Path>, format: Option<VectorFormat>) -> Result<(Vocab, EmbeddingMatrix)> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => VectorFormat::detect(path)?,
    };
    match format {
        VectorFormat::PvecText => load_text(path),
        VectorFormat::PvecBin => load_bin(path),
        VectorFormat::Glove => load_glove(path),
    }
}

fn load_text(path: &Path) -> Result<(Vocab, EmbeddingMatrix)> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    let (count, dim) =
        parse_header(&header).ok_or_else(|| Error::parse(path, 1, "header must be `<count> <dim>`"))?;
    if dim == 0 {
        return Err(Error::parse(path, 1, "dim must be >= 1"));
    }
    let mut vocab = Vocab::new();
    let mut data = Vec::with_capacity(count * dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (surface, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "missing tab after surface form"))?;
        let before = data.len();
        for tok in values.split(' ').filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad value {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, "non-finite value"));
            }
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
        vocab
            .push(surface)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
    }
    if vocab.len() != count {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {count} rows, file has {}", vocab.len()),
        ));
    }
    let matrix = Array2::from_shape_vec((count, dim), data).expect("row count checked");
    Ok((vocab, EmbeddingMatrix(matrix)))
}

fn load_bin(path: &Path) -> Result<(Vocab, EmbeddingMatrix)> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let truncated = |what: &str| Error::parse(path, 0, format!("truncated file while reading {what}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != PVEC_MAGIC {
        return Err(Error::parse(path, 0, "bad magic, expected PVB1"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| truncated("count"))?;
    let count = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf).map_err(|_| truncated("dim"))?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    if dim == 0 {
        return Err(Error::parse(path, 0, "dim must be >= 1"));
    }
    let mut vocab = Vocab::new();
    let mut data = Vec::with_capacity(count * dim);
    let mut row_bytes = vec![0u8; dim * 4];
    for entry in 0..count {
        // Entries are numbered from 1 in diagnostics, like lines.
        let at = entry + 1;
        let mut lenbuf = [0u8; 2];
        r.read_exact(&mut lenbuf).map_err(|_| truncated("entry length"))?;
        let mut surface = vec![0u8; u16::from_le_bytes(lenbuf) as usize];
        r.read_exact(&mut surface).map_err(|_| truncated("surface form"))?;
        let surface = String::from_utf8(surface)
            .map_err(|_| Error::parse(path, at, "surface form is not UTF-8"))?;
        r.read_exact(&mut row_bytes).map_err(|_| truncated("vector"))?;
        for chunk in row_bytes.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::parse(path, at, "non-finite value"));
            }
            data.push(v as f64);
        }
        vocab
            .push(surface)
            .map_err(|e| Error::parse(path, at, e.to_string()))?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::parse(path, count, "trailing bytes after last entry"));
    }
    let matrix = Array2::from_shape_vec((count, dim), data).expect("row count checked");
    Ok((vocab, EmbeddingMatrix(matrix)))
}

/// Imports whitespace-separated word vectors. The last `dim` fields of a line are
/// the values and everything before them is the surface form; `dim` comes from the
/// header when present, else from the first line. Later duplicates are skipped.
fn load_glove(path: &Path) -> Result<(Vocab, EmbeddingMatrix)> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut vocab = Vocab::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    let mut skipped = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if let Some((_, d)) = parse_header(&line) {
                dim = Some(d);
                continue;
            }
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let d = *dim.get_or_insert_with(|| fields.len() - 1);
        if d == 0 || fields.len() < d + 1 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected a surface form and {d} values"),
            ));
        }
        let split = fields.len() - d;
        let surface = fields[..split].join(" ");
        if vocab.contains(&surface) {
            skipped += 1;
            continue;
        }
        for tok in &fields[split..] {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad value {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, "non-finite value"));
            }
            data.push(v);
        }
        vocab
            .push(surface)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} duplicate entries", path.display());
    }
    let dim = dim.ok_or_else(|| Error::parse(path, 1, "empty vector file"))?;
    let matrix = Array2::from_shape_vec((vocab.len(), dim), data).expect("row count checked");
    Ok((vocab, EmbeddingMatrix::new(matrix)?))
}

/// Writes `vocab`/`matrix` in one of the `pvec` formats.
pub fn save_vectors(
    vocab: &Vocab,
    matrix: &EmbeddingMatrix,
    path: impl AsRef<Path>,
    format: VectorFormat,
) -> Result<()> {
    let path = path.as_ref();
    if vocab.len() != matrix.rows() {
        return Err(Error::invalid(format!(
            "vocab has {} entries but matrix has {} rows",
            vocab.len(),
            matrix.rows()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let written = match format {
        VectorFormat::PvecText => write_text(&mut w, vocab, matrix),
        VectorFormat::PvecBin => write_bin(&mut w, vocab, matrix),
        VectorFormat::Glove => {
            return Err(Error::invalid("glove format is import-only"));
        }
    };
    written.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_text(w: &mut impl Write, vocab: &Vocab, matrix: &EmbeddingMatrix) -> std::io::Result<()> {
    writeln!(w, "{} {}", vocab.len(), matrix.dim())?;
    for (surface, row) in vocab.entries().iter().zip(matrix.0.rows()) {
        w.write_all(surface.as_bytes())?;
        w.write_all(b"\t")?;
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{v}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn write_bin(w: &mut impl Write, vocab: &Vocab, matrix: &EmbeddingMatrix) -> std::io::Result<()> {
    let as_u32 = |n: usize| {
        u32::try_from(n).map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "too large for u32"))
    };
    w.write_all(PVEC_MAGIC)?;
    w.write_all(&as_u32(vocab.len())?.to_le_bytes())?;
    w.write_all(&as_u32(matrix.dim())?.to_le_bytes())?;
    for (surface, row) in vocab.entries().iter().zip(matrix.0.rows()) {
        w.write_all(&(surface.len() as u16).to_le_bytes())?;
        w.write_all(surface.as_bytes())?;
        for &v in row {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let (aa, bb) = (a.dot(&a), b.dot(&b));
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

pub fn l2_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(l2_unchecked(a, b))
}

pub(crate) fn l2_unchecked(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    L2,
}

impl Metric {
    /// Raw score: cosine similarity, or L2 distance.
    pub fn score(self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
        check_dims(a.len(), b.len())?;
        Ok(match self {
            Metric::Cosine => cosine_unchecked(a, b),
            Metric::L2 => l2_unchecked(a, b),
        })
    }

    /// Similarity where larger is always closer (negated distance for L2).
    pub fn similarity(self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
        let s = self.score(a, b)?;
        Ok(match self {
            Metric::Cosine => s,
            Metric::L2 => -s,
        })
    }

    /// Ordering that puts better raw scores first.
    pub fn better(self, a: f64, b: f64) -> Ordering {
        match self {
            Metric::Cosine => b.total_cmp(&a),
            Metric::L2 => a.total_cmp(&b),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "l2" => Ok(Metric::L2),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::L2 => "l2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub id: usize,
    pub surface: String,
    pub score: f64,
}

/// Ranked hits for one query: descending scores for cosine, ascending for L2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborList {
    pub query: String,
    pub metric: Metric,
    pub hits: Vec<Neighbor>,
}

/// Exact top-`k` search. Ties go to the lower row id; `exclude` is dropped before
/// ranking. Asking for more than the vocabulary holds returns everything.
pub fn nearest_neighbors(
    query: ArrayView1<'_, f64>,
    vocab: &Vocab,
    matrix: &EmbeddingMatrix,
    k: usize,
    metric: Metric,
    exclude: Option<&str>,
) -> Result<NeighborList> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if matrix.rows() == 0 {
        return Err(Error::invalid("cannot search an empty matrix"));
    }
    if vocab.len() != matrix.rows() {
        return Err(Error::invalid("vocab and matrix sizes differ"));
    }
    check_dims(query.len(), matrix.dim())?;
    let skip = exclude.and_then(|s| vocab.get(s));
    let mut scored: Vec<(usize, f64)> = matrix
        .0
        .axis_iter(Axis(0))
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, row)| {
            let s = match metric {
                Metric::Cosine => cosine_unchecked(query, row),
                Metric::L2 => l2_unchecked(query, row),
            };
            (i, s)
        })
        .collect();
    let order = |a: &(usize, f64), b: &(usize, f64)| metric.better(a.1, b.1).then(a.0.cmp(&b.0));
    let k = k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    Ok(NeighborList {
        query: exclude.unwrap_or_default().to_string(),
        metric,
        hits: scored
            .into_iter()
            .map(|(id, score)| Neighbor {
                id,
                surface: vocab.surface(id).to_string(),
                score,
            })
            .collect(),
    })
}

/// Mean of a set of rows; used when a query is composed from several entries.
pub fn mean_rows(matrix: &EmbeddingMatrix, ids: &[usize]) -> Option<Array1<f64>> {
    if ids.is_empty() {
        return None;
    }
    let mut acc = Array1::zeros(matrix.dim());
    for &i in ids {
        acc += &matrix.row(i);
    }
    Some(acc / ids.len() as f64)
}
