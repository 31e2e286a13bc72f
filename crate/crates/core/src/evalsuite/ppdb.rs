//! Lexical-overlap filtering of labeled paraphrase pairs.
//!
//! The filtered set satisfies two constraints:
//!
//! 1. retained positives and negatives have the same histogram of overlap counts
//!    (each positive can be matched to a negative with equal overlap);
//! 2. every token type that overlaps in some retained positive also overlaps in
//!    some retained negative, and vice versa.
//!
//! Overlap is the multiset intersection of the two sides' tokens.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::PairItem;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub pairs: Vec<PairItem>,
    pub warning: Option<String>,
}

struct Overlap {
    count: usize,
    types: BTreeSet<String>,
}

fn overlap(pair: &PairItem) -> Overlap {
    let mut left: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &pair.a.tokens {
        *left.entry(t).or_default() += 1;
    }
    let mut count = 0;
    let mut types = BTreeSet::new();
    for t in &pair.b.tokens {
        if let Some(n) = left.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                count += 1;
                types.insert(t.clone());
            }
        }
    }
    Overlap { count, types }
}

/// Greedy filter, largest overlap counts first. Returns the retained pairs in
/// input order.
pub fn filter_ppdb(pairs: &[PairItem]) -> Result<FilterOutcome> {
    if !pairs.iter().any(|p| p.label) || !pairs.iter().any(|p| !p.label) {
        return Err(Error::invalid("filter needs both positive and negative pairs"));
    }
    let overlaps: Vec<Overlap> = pairs.iter().map(overlap).collect();
    let mut alive = vec![true; pairs.len()];

    loop {
        let mut killed = false;

        // Constraint 2: drop pairs whose overlap types are missing on the other side.
        loop {
            let mut support: [HashMap<&str, usize>; 2] = Default::default();
            for (i, o) in overlaps.iter().enumerate().filter(|(i, _)| alive[*i]) {
                for t in &o.types {
                    *support[pairs[i].label as usize].entry(t).or_default() += 1;
                }
            }
            let mut pass_killed = false;
            for (i, o) in overlaps.iter().enumerate() {
                if !alive[i] {
                    continue;
                }
                let other = &support[!pairs[i].label as usize];
                if o.types.iter().any(|t| !other.contains_key(t.as_str())) {
                    alive[i] = false;
                    pass_killed = true;
                }
            }
            if !pass_killed {
                break;
            }
            killed = true;
        }

        // Constraint 1: equalize class counts within each overlap count.
        let mut support: [HashMap<&str, usize>; 2] = Default::default();
        let mut by_count: BTreeMap<usize, [Vec<usize>; 2]> = BTreeMap::new();
        for (i, o) in overlaps.iter().enumerate().filter(|(i, _)| alive[*i]) {
            let side = pairs[i].label as usize;
            by_count.entry(o.count).or_default()[side].push(i);
            for t in &o.types {
                *support[side].entry(t).or_default() += 1;
            }
        }
        for (_, groups) in by_count.iter().rev() {
            let (small, large) = if groups[0].len() <= groups[1].len() { (0, 1) } else { (1, 0) };
            let surplus = groups[large].len() - groups[small].len();
            if surplus == 0 {
                continue;
            }
            // Drop first the pairs whose overlap types are also covered by other
            // pairs on the same side; among equals, later pairs go first.
            let critical = |i: usize| {
                overlaps[i]
                    .types
                    .iter()
                    .filter(|t| support[large].get(t.as_str()) == Some(&1))
                    .count()
            };
            let mut candidates = groups[large].clone();
            candidates.sort_by_key(|&i| (critical(i), std::cmp::Reverse(i)));
            for &i in candidates.iter().take(surplus) {
                alive[i] = false;
                for t in &overlaps[i].types {
                    if let Some(n) = support[large].get_mut(t.as_str()) {
                        *n -= 1;
                    }
                }
            }
            killed = true;
        }

        if !killed {
            break;
        }
    }

    let kept: Vec<PairItem> = pairs
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(p, _)| p.clone())
        .collect();
    let warning = kept
        .is_empty()
        .then(|| "no positive/negative pairs could be matched; result is empty".to_string());
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(FilterOutcome { pairs: kept, warning })
}

/// Recomputes both constraints from scratch on a filtered set.
pub fn check_filtered(pairs: &[PairItem]) -> std::result::Result<(), String> {
    // Sort-and-merge overlap, independent of the counting map used by the filter.
    fn merge_overlap(p: &PairItem) -> (usize, BTreeSet<String>) {
        let mut a = p.a.tokens.clone();
        let mut b = p.b.tokens.clone();
        a.sort();
        b.sort();
        let (mut i, mut j, mut n) = (0, 0, 0);
        let mut types = BTreeSet::new();
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    types.insert(a[i].clone());
                    i += 1;
                    j += 1;
                }
            }
        }
        (n, types)
    }

    let mut hist: [BTreeMap<usize, usize>; 2] = Default::default();
    let mut types: [BTreeSet<String>; 2] = Default::default();
    for p in pairs {
        let (n, t) = merge_overlap(p);
        *hist[p.label as usize].entry(n).or_default() += 1;
        types[p.label as usize].extend(t);
    }
    if hist[0] != hist[1] {
        return Err(format!(
            "overlap histograms differ: negatives {:?}, positives {:?}",
            hist[0], hist[1]
        ));
    }
    if let Some(t) = types[1].difference(&types[0]).next() {
        return Err(format!("token {t:?} overlaps only in positive pairs"));
    }
    if let Some(t) = types[0].difference(&types[1]).next() {
        return Err(format!("token {t:?} overlaps only in negative pairs"));
    }
    Ok(())
}
