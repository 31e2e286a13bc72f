//! Finite-difference checks of every hand-derived gradient on seeded random
//! instances.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::composer::{flatten_grad, flatten_params, unflatten_params, ComposerModel, Nonlinearity, Projection};
use crate::contrastive::{triplet_loss, triplet_loss_backward};
use crate::evalsuite::PairClassifier;
use crate::numcore::{finite_diff_check, seeded_rng, Rng};
use crate::pntm::{batch_objective, NegTerm};
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub params: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Embedding dimension used by every check; at most [`MAX_DIM`].
    pub dim: usize,
    pub step: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 8,
            step: DEFAULT_STEP,
        }
    }
}

fn gaussian(n: usize, rng: &mut Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || StandardNormal.sample(rng))
}

fn record(name: &str, params: usize, max_rel_error: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        params,
        max_rel_error,
    }
}

const COMPOSER_TOKENS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];

/// `upstream . embed(tokens)` against the table, weight and bias gradients.
pub fn check_composer(projection: Option<Nonlinearity>, dim: usize, step: f64, rng: &mut Rng) -> Result<f64> {
    let mut model = ComposerModel::random(COMPOSER_TOKENS, dim, 0.5, rng)?;
    if let Some(nl) = projection {
        model = model.with_projection(Projection::random(dim, 0.4, rng), nl)?;
    }
    // A repeated token and one unknown token exercise the pooling counts.
    let tokens = ["beta", "delta", "beta", "unseen", "zeta"];
    let upstream = gaussian(dim, rng);
    let grad = model.backward(&tokens, upstream.view());
    let analytic = flatten_grad(&model, &grad);
    let params = flatten_params(&model);
    let mut probe = model.clone();
    finite_diff_check(
        |flat| {
            unflatten_params(&mut probe, flat);
            upstream.dot(&probe.embed_tokens(&tokens).vector)
        },
        &params,
        &analytic,
        step,
    )
}

/// Triplet loss at an instance where the hinge is active by a wide margin.
pub fn check_triplet(dim: usize, step: f64, rng: &mut Rng) -> Result<f64> {
    let margin = 1.0;
    let (p, pos, neg) = loop {
        let p = gaussian(dim, rng);
        let pos = &p + &(gaussian(dim, rng) * 0.5);
        let neg = &p + &(gaussian(dim, rng) * 0.3);
        let loss = triplet_loss(p.view(), pos.view(), neg.view(), margin)?;
        if loss > 0.1 {
            break (p, pos, neg);
        }
    };
    let g = triplet_loss_backward(p.view(), pos.view(), neg.view(), margin);
    let params = concatenate![Axis(0), p, pos, neg].to_vec();
    let analytic = concatenate![Axis(0), g.anchor, g.positive, g.negative].to_vec();
    finite_diff_check(
        |flat| {
            let (a, b, c) = (&flat[..dim], &flat[dim..2 * dim], &flat[2 * dim..]);
            triplet_loss(a.into(), b.into(), c.into(), margin).unwrap_or(f64::NAN)
        },
        &params,
        &analytic,
        step,
    )
}

/// Mean cross-entropy of the pair classifier on a random batch.
pub fn check_classifier(dim: usize, step: f64, rng: &mut Rng) -> Result<f64> {
    let mut clf = PairClassifier::random(dim, rng);
    clf.b1 = gaussian(clf.b1.len(), rng) * 0.1;
    clf.b2 = gaussian(2, rng) * 0.1;
    let batch = 6;
    let x = Array2::from_shape_simple_fn((batch, 2 * dim), || StandardNormal.sample(rng));
    let labels: Vec<bool> = (0..batch).map(|i| i % 2 == 0).collect();
    let (_, grad) = clf.loss_and_grad(x.view(), &labels)?;
    let params = clf.flatten();
    let mut probe = clf.clone();
    finite_diff_check(
        |flat| {
            probe.unflatten(flat);
            probe
                .loss_and_grad(x.view(), &labels)
                .map(|(l, _)| l)
                .unwrap_or(f64::NAN)
        },
        &params,
        &grad.flatten(),
        step,
    )
}

/// Full topic-model objective: softmax, reconstruction, hinge and the weighted
/// orthogonality penalty.
pub fn check_pntm(neg_term: NegTerm, dim: usize, step: f64, rng: &mut Rng) -> Result<f64> {
    let (k, n_docs, n_neg) = (4, 12, 3);
    let r = Array2::from_shape_simple_fn((k, dim), || 0.3 * Distribution::<f64>::sample(&StandardNormal, rng));
    let docs = Array2::from_shape_simple_fn((n_docs, dim), || StandardNormal.sample(rng));
    let batch: Vec<usize> = (0..4).collect();
    let negatives: Vec<Vec<usize>> = batch
        .iter()
        .map(|&i| {
            index::sample(rng, n_docs - 1, n_neg)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect()
        })
        .collect();
    let lambda = 0.7;
    let (_, grad) = batch_objective(r.view(), docs.view(), &batch, &negatives, lambda, neg_term)?;
    let params: Vec<f64> = r.iter().copied().collect();
    finite_diff_check(
        |flat| {
            let probe = Array2::from_shape_vec((k, dim), flat.to_vec()).expect("shape preserved");
            batch_objective(probe.view(), docs.view(), &batch, &negatives, lambda, neg_term)
                .map(|(parts, _)| parts.total)
                .unwrap_or(f64::NAN)
        },
        &params,
        &grad.iter().copied().collect::<Vec<_>>(),
        step,
    )
}

/// Runs every check and returns one row per gradient.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    if cfg.dim == 0 || cfg.dim > MAX_DIM {
        return Err(Error::invalid(format!("gradient checks use 1 <= d <= {MAX_DIM}, got {}", cfg.dim)));
    }
    let (d, h) = (cfg.dim, cfg.step);
    let mut rng = seeded_rng(cfg.seed);
    let composer_params = |proj: bool| COMPOSER_TOKENS.len() * d + if proj { d * d + d } else { 0 };
    let mut out = vec![
        record("composer", composer_params(false), check_composer(None, d, h, &mut rng)?),
        record(
            "composer+linear",
            composer_params(true),
            check_composer(Some(Nonlinearity::None), d, h, &mut rng)?,
        ),
        record(
            "composer+tanh",
            composer_params(true),
            check_composer(Some(Nonlinearity::Tanh), d, h, &mut rng)?,
        ),
        record("triplet", 3 * d, check_triplet(d, h, &mut rng)?),
    ];
    let clf_params = 2 * d * crate::evalsuite::classifier::HIDDEN + crate::evalsuite::classifier::HIDDEN * 3 + 2;
    out.push(record("classifier", clf_params, check_classifier(d, h, &mut rng)?));
    out.push(record("pntm", 4 * d, check_pntm(NegTerm::Anchor, d, h, &mut rng)?));
    out.push(record("pntm+recon", 4 * d, check_pntm(NegTerm::Recon, d, h, &mut rng)?));
    Ok(out)
}
