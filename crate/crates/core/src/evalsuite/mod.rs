//! Evaluation protocols: Turney 5-way selection, BiRD correlation, paraphrase
//! classification, the PPDB overlap filter and nearest-neighbor lexical diversity.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::composer::Phrase;
use crate::numcore::Rng;
use crate::vecstore::Metric;
use crate::{Error, Result};

pub mod classifier;
pub mod diversity;
pub mod ppdb;
pub mod textdist;

pub use classifier::{eval_pair_classifier, split_train_dev_test, train_pair_classifier, ClassifierConfig, PairClassifier};
pub use diversity::{diversity_report, DiversityOptions, DiversityReport};
pub use ppdb::{check_filtered, filter_ppdb};
pub use textdist::{levenshtein, longest_common_substring};

#[derive(Debug, Clone, PartialEq)]
pub struct TurneyItem {
    pub query: Phrase,
    pub candidates: [Phrase; 5],
    pub gold_index: usize,
}

impl TurneyItem {
    pub fn new(query: Phrase, candidates: [Phrase; 5], gold_index: usize) -> Result<Self> {
        if gold_index >= 5 {
            return Err(Error::invalid(format!("gold index {gold_index} out of range")));
        }
        Ok(Self {
            query,
            candidates,
            gold_index,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirdItem {
    pub a: Phrase,
    pub b: Phrase,
    pub score: f64,
}

impl BirdItem {
    pub fn new(a: Phrase, b: Phrase, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("relatedness score {score} outside [0, 1]")));
        }
        Ok(Self { a, b, score })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairItem {
    pub a: Phrase,
    pub b: Phrase,
    pub label: bool,
}

impl PairItem {
    pub fn new(a: impl Into<Phrase>, b: impl Into<Phrase>, label: bool) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            label,
        }
    }
}

/// Index of the best candidate; ties go to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of items whose most similar candidate is the gold one.
pub fn eval_turney<F>(items: &[TurneyItem], embed: F, metric: Metric) -> Result<f64>
where
    F: Fn(&Phrase) -> Array1<f64> + Sync,
{
    if items.is_empty() {
        return Err(Error::invalid("no Turney items"));
    }
    let correct: Vec<bool> = items
        .par_iter()
        .map(|item| {
            let q = embed(&item.query);
            let scores = item
                .candidates
                .iter()
                .map(|c| metric.similarity(q.view(), embed(c).view()))
                .collect::<Result<Vec<f64>>>()?;
            Ok(argmax(&scores) == item.gold_index)
        })
        .collect::<Result<_>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / items.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
}

/// Correlation between pair similarity and the human relatedness scores.
pub fn eval_bird<F>(items: &[BirdItem], embed: F, metric: Metric) -> Result<Correlation>
where
    F: Fn(&Phrase) -> Array1<f64> + Sync,
{
    if items.len() < 2 {
        return Err(Error::invalid("need at least two BiRD items"));
    }
    let sims = items
        .par_iter()
        .map(|it| metric.similarity(embed(&it.a).view(), embed(&it.b).view()))
        .collect::<Result<Vec<f64>>>()?;
    let scores: Vec<f64> = items.iter().map(|it| it.score).collect();
    Ok(Correlation {
        pearson: pearson(&sims, &scores)?,
        spearman: spearman(&sims, &scores)?,
    })
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("lengths differ: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

fn tsv_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push((i + 1, line.split('\t').map(|f| f.trim().to_string()).collect()));
    }
    Ok(rows)
}

/// Reads `query\tgold\tc1\tc2\tc3\tc4` lines. The gold candidate is listed first
/// in the file; candidate order is shuffled with `rng` so position carries no signal.
pub fn load_turney(path: impl AsRef<Path>, rng: &mut Rng) -> Result<Vec<TurneyItem>> {
    let path = path.as_ref();
    let mut items = Vec::new();
    for (line, fields) in tsv_rows(path)? {
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 6 tab-separated fields, found {}", fields.len()),
            ));
        }
        let mut order = [0usize, 1, 2, 3, 4];
        order.shuffle(rng);
        let candidates = order.map(|k| Phrase::new(&fields[1 + k]));
        let gold = order.iter().position(|&k| k == 0).expect("0 is in the permutation");
        items.push(TurneyItem::new(Phrase::new(&fields[0]), candidates, gold)?);
    }
    Ok(items)
}

/// Reads `a\tb\tscore` lines. A first line whose score is not numeric is taken as a header.
pub fn load_bird(path: impl AsRef<Path>) -> Result<Vec<BirdItem>> {
    let path = path.as_ref();
    let mut items = Vec::new();
    for (idx, (line, fields)) in tsv_rows(path)?.into_iter().enumerate() {
        if fields.len() != 3 {
            return Err(Error::parse(path, line, format!("expected 3 fields, found {}", fields.len())));
        }
        let score: f64 = match fields[2].parse() {
            Ok(s) => s,
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(Error::parse(path, line, format!("bad score {:?}", fields[2]))),
        };
        items.push(
            BirdItem::new(Phrase::new(&fields[0]), Phrase::new(&fields[1]), score)
                .map_err(|e| Error::parse(path, line, e.to_string()))?,
        );
    }
    Ok(items)
}

/// Reads `a\tb\t{0,1}` lines.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<PairItem>> {
    let path = path.as_ref();
    tsv_rows(path)?
        .into_iter()
        .map(|(line, fields)| {
            if fields.len() != 3 {
                return Err(Error::parse(path, line, format!("expected 3 fields, found {}", fields.len())));
            }
            let label = match fields[2].as_str() {
                "1" => true,
                "0" => false,
                other => return Err(Error::parse(path, line, format!("label must be 0 or 1, got {other:?}"))),
            };
            Ok(PairItem::new(fields[0].as_str(), fields[1].as_str(), label))
        })
        .collect()
}

pub fn save_pairs(pairs: &[PairItem], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}\n", p.a.surface, p.b.surface, u8::from(p.label)));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::seeded_rng;
    use ndarray::array;
    use std::collections::HashMap;

    fn table(entries: &[(&str, Array1<f64>)]) -> impl Fn(&Phrase) -> Array1<f64> + Sync {
        let map: HashMap<String, Array1<f64>> = entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        move |p: &Phrase| map[&p.surface].clone()
    }

    fn item(gold: usize) -> TurneyItem {
        let c = ["c0", "c1", "c2", "c3", "c4"].map(Phrase::new);
        TurneyItem::new("q".into(), c, gold).unwrap()
    }

    #[test]
    fn turney_forced_argmax() {
        let embed = table(&[
            ("q", array![0.0, 1.0, 0.0]),
            ("c0", array![1.0, 0.0, 0.0]),
            ("c1", array![0.0, 0.0, 1.0]),
            ("c2", array![0.0, 1.0, 0.0]),
            ("c3", array![1.0, 0.0, 0.0]),
            ("c4", array![0.0, 0.0, -1.0]),
        ]);
        assert_eq!(eval_turney(&[item(2)], &embed, Metric::Cosine).unwrap(), 1.0);
        assert_eq!(eval_turney(&[item(2), item(0)], &embed, Metric::Cosine).unwrap(), 0.5);
        assert_eq!(eval_turney(&[item(2)], &embed, Metric::L2).unwrap(), 1.0);
    }

    #[test]
    fn turney_ties_pick_first() {
        let v = array![1.0, 1.0];
        let embed = table(&[
            ("q", array![1.0, 0.0]),
            ("c0", v.clone()),
            ("c1", v.clone()),
            ("c2", v.clone()),
            ("c3", v.clone()),
            ("c4", v),
        ]);
        assert_eq!(eval_turney(&[item(0)], &embed, Metric::Cosine).unwrap(), 1.0);
        assert_eq!(eval_turney(&[item(3)], &embed, Metric::Cosine).unwrap(), 0.0);
        assert!(eval_turney(&[], &embed, Metric::Cosine).is_err());
    }

    #[test]
    fn pearson_cases() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.37 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 3.0).collect();
        assert!((pearson(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&xs, &[1.0; 10]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn pearson_matches_two_pass_covariance() {
        use rand::Rng as _;
        let mut rng = seeded_rng(11);
        let xs: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.5 + rng.random_range(-1.0..1.0)).collect();
        // Two-pass oracle: means first, then unbiased covariance and variances.
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0);
        let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (n - 1.0);
        let oracle = cov / (vx.sqrt() * vy.sqrt());
        assert!((pearson(&xs, &ys).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bird_correlations() {
        let embed = table(&[
            ("a", array![1.0, 0.0]),
            ("b", array![1.0, 0.0]),
            ("c", array![0.0, 1.0]),
            ("d", array![1.0, 1.0]),
        ]);
        let items = vec![
            BirdItem::new("a".into(), "b".into(), 1.0).unwrap(),
            BirdItem::new("a".into(), "c".into(), 0.0).unwrap(),
            BirdItem::new("a".into(), "d".into(), std::f64::consts::FRAC_1_SQRT_2).unwrap(),
        ];
        let c = eval_bird(&items, &embed, Metric::Cosine).unwrap();
        assert!((c.pearson - 1.0).abs() < 1e-12);
        let flipped: Vec<BirdItem> = items
            .iter()
            .map(|it| BirdItem::new(it.a.clone(), it.b.clone(), 1.0 - it.score).unwrap())
            .collect();
        let c = eval_bird(&flipped, &embed, Metric::Cosine).unwrap();
        assert!((c.pearson + 1.0).abs() < 1e-12);
        assert!(BirdItem::new("a".into(), "b".into(), 1.5).is_err());
    }

    #[test]
    fn turney_loader_shuffles_gold() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("turney.tsv");
        std::fs::write(&p, "dark horse\tunknown\tstallion\tnight\tpony\tcolor\n".repeat(20)).unwrap();
        let items = load_turney(&p, &mut seeded_rng(1)).unwrap();
        assert_eq!(items.len(), 20);
        assert!(items.iter().all(|it| it.candidates[it.gold_index].surface == "unknown"));
        assert!(items.iter().any(|it| it.gold_index != 0));
    }

    #[test]
    fn bird_loader_skips_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bird.tsv");
        std::fs::write(&p, "term1\tterm2\trelatedness score\naudio system\taudio output\t0.67\n").unwrap();
        let items = load_bird(&p).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].score, 0.67);
    }
}
