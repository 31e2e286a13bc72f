//! Lexical diversity of nearest-neighbor lists.

use std::collections::BTreeSet;

use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use super::textdist::{levenshtein, levenshtein_chars, longest_common_substring};
use crate::composer::{tokenize, Phrase};
use crate::vecstore::{nearest_neighbors, EmbeddingMatrix, Metric, Vocab};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LcsSide {
    /// Normalize the common run by the neighbor's length.
    #[default]
    Neighbor,
    /// Normalize by the query's length.
    Query,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EditUnit {
    #[default]
    Token,
    Char,
}

impl std::str::FromStr for LcsSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neighbor" => Ok(LcsSide::Neighbor),
            "query" => Ok(LcsSide::Query),
            _ => Err(Error::invalid(format!("unknown LCS side {s:?} (neighbor|query)"))),
        }
    }
}

impl std::str::FromStr for EditUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(EditUnit::Token),
            "char" => Ok(EditUnit::Char),
            _ => Err(Error::invalid(format!("unknown edit unit {s:?} (token|char)"))),
        }
    }
}

impl std::fmt::Display for LcsSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LcsSide::Neighbor => "neighbor",
            LcsSide::Query => "query",
        })
    }
}

impl std::fmt::Display for EditUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EditUnit::Token => "token",
            EditUnit::Char => "char",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityOptions {
    pub k: usize,
    pub metric: Metric,
    pub lcs_side: LcsSide,
    pub edit_unit: EditUnit,
}

impl Default for DiversityOptions {
    fn default() -> Self {
        Self {
            k: 10,
            metric: Metric::Cosine,
            lcs_side: LcsSide::Neighbor,
            edit_unit: EditUnit::Token,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityReport {
    pub pct_new_tokens: f64,
    pub lcs_precision: f64,
    pub avg_levenshtein: f64,
    pub k: usize,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryDiversity {
    pub query: String,
    pub neighbors: Vec<String>,
    pub new_tokens: f64,
    pub lcs_precision: f64,
    pub avg_levenshtein: f64,
}

fn score_query(query: &Phrase, neighbors: Vec<String>, opts: &DiversityOptions) -> QueryDiversity {
    let qset: BTreeSet<&str> = query.tokens.iter().map(String::as_str).collect();
    let tokenized: Vec<Vec<String>> = neighbors.iter().map(|n| tokenize(n)).collect();
    let fresh: BTreeSet<&str> = tokenized
        .iter()
        .flatten()
        .map(String::as_str)
        .filter(|t| !qset.contains(t))
        .collect();
    let n = tokenized.len().max(1) as f64;
    let mut lcs_sum = 0.0;
    let mut lev_sum = 0.0;
    for toks in &tokenized {
        let common = longest_common_substring(&query.tokens, toks) as f64;
        let denom = match opts.lcs_side {
            LcsSide::Neighbor => toks.len(),
            LcsSide::Query => query.tokens.len(),
        };
        if denom > 0 {
            lcs_sum += 100.0 * common / denom as f64;
        }
        lev_sum += match opts.edit_unit {
            EditUnit::Token => levenshtein(&query.tokens, toks),
            EditUnit::Char => levenshtein_chars(&query.tokens.join(" "), &toks.join(" ")),
        } as f64;
    }
    QueryDiversity {
        query: query.surface.clone(),
        new_tokens: fresh.len() as f64 / query.tokens.len() as f64,
        lcs_precision: lcs_sum / n,
        avg_levenshtein: lev_sum / n,
        neighbors,
    }
}

/// Per-query diversity of the top-`k` neighbors (the query's own entry excluded).
pub fn diversity_details(
    queries: &[(Phrase, Array1<f64>)],
    vocab: &Vocab,
    matrix: &EmbeddingMatrix,
    opts: &DiversityOptions,
) -> Result<Vec<QueryDiversity>> {
    if queries.is_empty() {
        return Err(Error::invalid("no diversity queries"));
    }
    queries
        .par_iter()
        .map(|(phrase, vec)| {
            if phrase.is_empty() {
                return Err(Error::invalid("empty query phrase"));
            }
            let hits = nearest_neighbors(vec.view(), vocab, matrix, opts.k, opts.metric, Some(&phrase.surface))?;
            Ok(score_query(phrase, hits.hits.into_iter().map(|h| h.surface).collect(), opts))
        })
        .collect()
}

/// Averages [`diversity_details`] across queries. LCS precision and edit distance
/// are averaged over all (query, neighbor) pairs.
pub fn diversity_report(
    queries: &[(Phrase, Array1<f64>)],
    vocab: &Vocab,
    matrix: &EmbeddingMatrix,
    opts: &DiversityOptions,
) -> Result<DiversityReport> {
    let details = diversity_details(queries, vocab, matrix, opts)?;
    Ok(summarize(&details, opts.k))
}

pub fn summarize(details: &[QueryDiversity], k: usize) -> DiversityReport {
    let nq = details.len() as f64;
    let pairs: usize = details.iter().map(|d| d.neighbors.len()).sum();
    let weighted = |f: fn(&QueryDiversity) -> f64| {
        if pairs == 0 {
            return 0.0;
        }
        details.iter().map(|d| f(d) * d.neighbors.len() as f64).sum::<f64>() / pairs as f64
    };
    DiversityReport {
        pct_new_tokens: details.iter().map(|d| d.new_tokens).sum::<f64>() / nq,
        lcs_precision: weighted(|d| d.lcs_precision),
        avg_levenshtein: weighted(|d| d.avg_levenshtein),
        k,
        queries: details.len(),
    }
}
