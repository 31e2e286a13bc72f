//! Paraphrase classifier over concatenated pair embeddings: one ReLU hidden layer of
//! width 256, then a 2-way softmax trained with cross-entropy.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::PairItem;
use crate::composer::Phrase;
use crate::numcore::{adam_step, seeded_rng, AdamState, Rng};
use crate::{Error, Result};

pub const HIDDEN: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PairClassifier {
    /// `2d x 256`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `256 x 2`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrad {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl PairClassifier {
    /// All-zero weights: every input gets equal logits.
    pub fn zeros(embedding_dim: usize) -> Self {
        Self {
            w1: Array2::zeros((2 * embedding_dim, HIDDEN)),
            b1: Array1::zeros(HIDDEN),
            w2: Array2::zeros((HIDDEN, 2)),
            b2: Array1::zeros(2),
        }
    }

    /// He-normal weights, zero biases.
    pub fn random(embedding_dim: usize, rng: &mut Rng) -> Self {
        let input = 2 * embedding_dim;
        let n1 = Normal::new(0.0, (2.0 / input as f64).sqrt()).expect("finite std");
        let n2 = Normal::new(0.0, (2.0 / HIDDEN as f64).sqrt()).expect("finite std");
        Self {
            w1: Array2::from_shape_simple_fn((input, HIDDEN), || n1.sample(rng)),
            b1: Array1::zeros(HIDDEN),
            w2: Array2::from_shape_simple_fn((HIDDEN, 2), || n2.sample(rng)),
            b2: Array1::zeros(2),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "classifier expects {} input features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Row-wise logits for a `B x 2d` feature matrix.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let h = (x.dot(&self.w1) + &self.b1).mapv(|v| v.max(0.0));
        Ok(h.dot(&self.w2) + &self.b2)
    }

    /// Predicted class per row (1 = paraphrase); ties go to class 0.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<bool>> {
        Ok(self
            .logits(x)?
            .rows()
            .into_iter()
            .map(|r| r[1] > r[0])
            .collect())
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<'_, f64>, labels: &[bool]) -> Result<(f64, ClassifierGrad)> {
        self.check_input(&x)?;
        if labels.len() != x.nrows() || labels.is_empty() {
            return Err(Error::invalid("labels must match a nonempty batch"));
        }
        let b = x.nrows() as f64;
        let z1 = x.dot(&self.w1) + &self.b1;
        let h = z1.mapv(|v| v.max(0.0));
        let z2 = h.dot(&self.w2) + &self.b2;
        let mut dz2 = Array2::zeros(z2.dim());
        let mut loss = 0.0;
        for (i, (row, &y)) in z2.rows().into_iter().zip(labels).enumerate() {
            let m = row[0].max(row[1]);
            let e = [(row[0] - m).exp(), (row[1] - m).exp()];
            let lse = m + (e[0] + e[1]).ln();
            let target = usize::from(y);
            loss += lse - row[target];
            for c in 0..2 {
                let p = e[c] / (e[0] + e[1]);
                dz2[[i, c]] = (p - f64::from(u8::from(c == target))) / b;
            }
        }
        let dw2 = h.t().dot(&dz2);
        let db2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&self.w2.t());
        dz1.zip_mut_with(&z1, |g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        let dw1 = x.t().dot(&dz1);
        let db1 = dz1.sum_axis(Axis(0));
        Ok((
            loss / b,
            ClassifierGrad {
                w1: dw1,
                b1: db1,
                w2: dw2,
                b2: db2,
            },
        ))
    }

    /// Flattened parameters: `w1, b1, w2, b2`, row-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
            .collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for v in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
        {
            *v = it.next().expect("flat vector long enough");
        }
    }
}

impl ClassifierGrad {
    pub fn flatten(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
            .collect()
    }
}

/// `[emb(a); emb(b)]` for every pair, stacked into a matrix.
pub fn pair_features<F>(pairs: &[PairItem], embed: &F) -> Result<Array2<f64>>
where
    F: Fn(&Phrase) -> Array1<f64>,
{
    let Some(first) = pairs.first() else {
        return Err(Error::invalid("no pairs"));
    };
    let d = embed(&first.a).len();
    let mut x = Array2::zeros((pairs.len(), 2 * d));
    for (i, p) in pairs.iter().enumerate() {
        let (ea, eb) = (embed(&p.a), embed(&p.b));
        if ea.len() != d || eb.len() != d {
            return Err(Error::invalid("embeddings have inconsistent dims"));
        }
        x.slice_mut(s![i, ..d]).assign(&ea);
        x.slice_mut(s![i, d..]).assign(&eb);
    }
    Ok(x)
}

struct ClassifierOptimizer([AdamState; 4]);

impl ClassifierOptimizer {
    fn new(c: &PairClassifier) -> Self {
        Self([
            AdamState::new(c.w1.len()),
            AdamState::new(c.b1.len()),
            AdamState::new(c.w2.len()),
            AdamState::new(c.b2.len()),
        ])
    }

    fn apply(&mut self, c: &mut PairClassifier, g: &ClassifierGrad, lr: f64) -> Result<()> {
        let [s1, s2, s3, s4] = &mut self.0;
        adam_step(c.w1.as_slice_mut().unwrap(), g.w1.as_slice().unwrap(), s1, lr)?;
        adam_step(c.b1.as_slice_mut().unwrap(), g.b1.as_slice().unwrap(), s2, lr)?;
        adam_step(c.w2.as_slice_mut().unwrap(), g.w2.as_slice().unwrap(), s3, lr)?;
        adam_step(c.b2.as_slice_mut().unwrap(), g.b2.as_slice().unwrap(), s4, lr)?;
        Ok(())
    }
}

/// Trains a fresh classifier with Adam on shuffled mini-batches.
pub fn train_pair_classifier<F>(train: &[PairItem], embed: F, cfg: &ClassifierConfig) -> Result<PairClassifier>
where
    F: Fn(&Phrase) -> Array1<f64>,
{
    if !train.iter().any(|p| p.label) || !train.iter().any(|p| !p.label) {
        return Err(Error::invalid("training pairs must contain both classes"));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::invalid("batch_size and lr must be positive"));
    }
    let x = pair_features(train, &embed)?;
    let labels: Vec<bool> = train.iter().map(|p| p.label).collect();
    let mut rng = seeded_rng(cfg.seed);
    let mut clf = PairClassifier::random(x.ncols() / 2, &mut rng);
    let mut opt = ClassifierOptimizer::new(&clf);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<bool> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = clf.loss_and_grad(xb.view(), &yb)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("classifier loss".into()));
            }
            opt.apply(&mut clf, &grad, cfg.lr)?;
        }
    }
    Ok(clf)
}

/// Fraction of test pairs classified correctly.
pub fn eval_pair_classifier<F>(clf: &PairClassifier, test: &[PairItem], embed: F) -> Result<f64>
where
    F: Fn(&Phrase) -> Array1<f64>,
{
    let x = pair_features(test, &embed)?;
    let pred = clf.predict(x.view())?;
    let correct = pred.iter().zip(test).filter(|(p, t)| **p == t.label).count();
    Ok(correct as f64 / test.len() as f64)
}

/// Shuffled 70/15/15 train/dev/test split.
pub fn split_train_dev_test<T: Clone>(items: &[T], rng: &mut Rng) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(rng);
    let n_train = (items.len() as f64 * 0.70).round() as usize;
    let n_dev = (items.len() as f64 * 0.15).round() as usize;
    let n_dev = n_dev.min(items.len() - n_train);
    let take = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    (
        take(&idx[..n_train]),
        take(&idx[n_train..n_train + n_dev]),
        take(&idx[n_train + n_dev..]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::finite_diff_check;
    use ndarray::array;
    use rand::Rng as _;

    #[test]
    fn zero_classifier_predicts_class_zero() {
        let c = PairClassifier::zeros(3);
        let x = array![[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [0.0, 0.0, 0.0, -1.0, 0.0, 0.0]];
        let logits = c.logits(x.view()).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        assert_eq!(c.predict(x.view()).unwrap(), vec![false, false]);
        assert_eq!(c.w1.ncols(), HIDDEN);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded_rng(6);
        let mut clf = PairClassifier::random(3, &mut rng);
        clf.b1.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        let x = Array2::from_shape_simple_fn((4, 6), || rng.random_range(-1.0..1.0));
        let labels = [true, false, true, false];
        let (_, g) = clf.loss_and_grad(x.view(), &labels).unwrap();
        let mut probe = clf.clone();
        let err = finite_diff_check(
            |p| {
                probe.unflatten(p);
                probe.loss_and_grad(x.view(), &labels).unwrap().0
            },
            &clf.flatten(),
            &g.flatten(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn single_class_rejected() {
        let pairs = vec![PairItem::new("a", "a", true)];
        let err = train_pair_classifier(&pairs, |_: &Phrase| array![1.0], &ClassifierConfig::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn split_proportions() {
        let items: Vec<usize> = (0..100).collect();
        let (tr, dv, te) = split_train_dev_test(&items, &mut seeded_rng(0));
        assert_eq!((tr.len(), dv.len(), te.len()), (70, 15, 15));
        let mut all: Vec<usize> = tr.into_iter().chain(dv).chain(te).collect();
        all.sort();
        assert_eq!(all, items);
    }
}
