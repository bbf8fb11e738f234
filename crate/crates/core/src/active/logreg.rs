//! Multinomial logistic regression over sparse n-gram counts.
//!
//! Objective, for `N` examples, `K` classes and vocabulary size `D`:
//!
//! ```text
//! L(W, b) = sum_i [ logsumexp_k(W_k . x_i + b_k) - (W_{y_i} . x_i + b_{y_i}) ]
//!           + (l2 / 2) * sum_k |W_k|^2
//! ```
//!
//! Biases are not penalized. With `l2 = 1` this is the same objective as the
//! usual `C = 1` multinomial formulation.
//!
//! Optimization is full-batch gradient descent. The first step length is 1;
//! later steps use the Barzilai-Borwein length `s.s / s.y`, and every step is
//! halved until the Armijo condition `L_new <= L - 1e-4 * t * |g|^2` holds.
//! Training stops when the largest gradient component falls below
//! `tolerance`, when a step no longer changes the loss by more than 1e-12
//! relative, or after `max_iterations`. No randomness is involved, so results
//! depend only on the examples and their order.

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, SparseRow, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub l2: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iterations: 2000,
            tolerance: 1e-6,
        }
    }
}

/// Why training did not produce a model. Not a failure: the queue keeps its order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainSkip {
    #[error("need at least two distinct classes")]
    SingleClass,
    #[error("need at least {needed} labelled examples, have {have}")]
    TooFew { needed: usize, have: usize },
}

/// The training loss over pre-encoded rows. Exposed for gradient checks.
pub struct Objective<'a> {
    pub rows: &'a [SparseRow],
    pub labels: &'a [usize],
    pub classes: usize,
    pub dim: usize,
    pub l2: f64,
}

fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

fn scores(params: &[f64], row: &SparseRow, classes: usize, dim: usize, out: &mut [f64]) {
    let stride = dim + 1;
    for (k, o) in out.iter_mut().enumerate().take(classes) {
        let w = &params[k * stride..(k + 1) * stride];
        *o = w[dim] + row.iter().map(|(j, x)| w[*j] * x).sum::<f64>();
    }
}

impl Objective<'_> {
    pub fn param_len(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.evaluate(params, false).0
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (l, g) = self.evaluate(params, true);
        (l, g.expect("gradient requested"))
    }

    fn evaluate(&self, params: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let stride = self.dim + 1;
        let mut grad = want_grad.then(|| vec![0.0; self.param_len()]);
        let mut z = vec![0.0; self.classes];
        let mut loss = 0.0;
        for (row, &y) in self.rows.iter().zip(self.labels) {
            scores(params, row, self.classes, self.dim, &mut z);
            let target = z[y];
            let lse = softmax_in_place(&mut z);
            loss += lse - target;
            if let Some(g) = grad.as_mut() {
                for k in 0..self.classes {
                    let delta = z[k] - if k == y { 1.0 } else { 0.0 };
                    let gk = &mut g[k * stride..(k + 1) * stride];
                    for (j, x) in row {
                        gk[*j] += delta * x;
                    }
                    gk[self.dim] += delta;
                }
            }
        }
        for k in 0..self.classes {
            let w = &params[k * stride..k * stride + self.dim];
            loss += 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>();
            if let Some(g) = grad.as_mut() {
                for (gj, wj) in g[k * stride..k * stride + self.dim].iter_mut().zip(w) {
                    *gj += self.l2 * wj;
                }
            }
        }
        (loss, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the objective from zero. Returns the parameters and iterations used.
pub fn minimize(objective: &Objective<'_>, options: &TrainOptions) -> (Vec<f64>, usize) {
    let mut w = vec![0.0; objective.param_len()];
    let (mut f, mut g) = objective.loss_and_gradient(&w);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= options.tolerance {
            break;
        }
        iterations += 1;
        let gg = dot(&g, &g);
        let mut t = step;
        let (w_new, f_new, g_new) = loop {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - t * gi).collect();
            let (fc, gc) = objective.loss_and_gradient(&cand);
            if fc <= f - 1e-4 * t * gg || t < 1e-14 {
                break (cand, fc, gc);
            }
            t *= 0.5;
        };
        let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        step = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-10, 1e10) } else { t * 2.0 };
        let converged = (f - f_new).abs() <= 1e-12 * f.abs().max(1.0);
        w = w_new;
        f = f_new;
        g = g_new;
        if converged {
            break;
        }
    }
    (w, iterations)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub class_labels: Vec<String>,
    pub vocabulary: Vocabulary,
    /// Row-major `K x (D + 1)`; the last column of each row is the bias.
    pub weights: Vec<f64>,
    /// Number of examples the model was fit on.
    pub trained_on: usize,
}

impl Classifier {
    /// All-zero model: predicts the uniform distribution.
    pub fn zeros(class_labels: Vec<String>, vocabulary: Vocabulary) -> Self {
        let n = class_labels.len() * (vocabulary.len() + 1);
        Self {
            class_labels,
            vocabulary,
            weights: vec![0.0; n],
            trained_on: 0,
        }
    }

    pub fn classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn weight(&self, class: usize, term: &str) -> Option<f64> {
        let d = self.vocabulary.len();
        self.vocabulary.column(term).map(|j| self.weights[class * (d + 1) + j])
    }

    pub fn bias(&self, class: usize) -> f64 {
        let d = self.vocabulary.len();
        self.weights[class * (d + 1) + d]
    }

    pub fn predict_proba(&self, features: &FeatureVector) -> Vec<f64> {
        let row = self.vocabulary.encode(features);
        let mut z = vec![0.0; self.classes()];
        scores(&self.weights, &row, self.classes(), self.vocabulary.len(), &mut z);
        softmax_in_place(&mut z);
        z
    }

    pub fn predict(&self, features: &FeatureVector) -> &str {
        let p = self.predict_proba(features);
        let best = p
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        &self.class_labels[best.0]
    }
}

/// Fits a classifier. Classes are ordered by first appearance.
pub fn train(labeled: &[(FeatureVector, String)], options: &TrainOptions) -> Result<Classifier, TrainSkip> {
    let mut classes: Vec<String> = Vec::new();
    for (_, y) in labeled {
        if !classes.contains(y) {
            classes.push(y.clone());
        }
    }
    if classes.len() < 2 {
        return Err(TrainSkip::SingleClass);
    }
    let vocabulary = Vocabulary::fit(labeled.iter().map(|(f, _)| f));
    let rows: Vec<SparseRow> = labeled.iter().map(|(f, _)| vocabulary.encode(f)).collect();
    let labels: Vec<usize> = labeled
        .iter()
        .map(|(_, y)| classes.iter().position(|c| c == y).expect("class collected"))
        .collect();
    let objective = Objective {
        rows: &rows,
        labels: &labels,
        classes: classes.len(),
        dim: vocabulary.len(),
        l2: options.l2,
    };
    let (weights, _) = minimize(&objective, options);
    Ok(Classifier {
        class_labels: classes,
        vocabulary,
        weights,
        trained_on: labeled.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::active::featurize;

    fn ex(text: &str, y: &str) -> (FeatureVector, String) {
        (featurize(text), y.to_string())
    }

    #[test]
    fn zero_model_is_uniform() {
        for k in 2..5 {
            let labels = (0..k).map(|i| i.to_string()).collect();
            let clf = Classifier::zeros(labels, Vocabulary::fit([&featurize("a b c")]));
            for p in clf.predict_proba(&featurize("a c zz")) {
                assert!((p - 1.0 / k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_class_skipped() {
        let data = vec![ex("a", "x"), ex("b", "x")];
        assert_eq!(train(&data, &TrainOptions::default()), Err(TrainSkip::SingleClass));
    }

    #[test]
    fn separable_toy_set_fits() {
        let data = vec![ex("good great", "pos"), ex("great fun", "pos"), ex("bad awful", "neg"), ex("awful boring", "neg")];
        let clf = train(&data, &TrainOptions::default()).unwrap();
        for (f, y) in &data {
            assert_eq!(clf.predict(f), y);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let data = vec![ex("a b", "x"), ex("c d", "y"), ex("e f", "z")];
        let clf = train(&data, &TrainOptions::default()).unwrap();
        let p = clf.predict_proba(&featurize("a c e q"));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_point_reached() {
        let data = [ex("a b", "x"), ex("b c", "y"), ex("c a a", "x"), ex("d", "y")];
        let vocab = Vocabulary::fit(data.iter().map(|(f, _)| f));
        let rows: Vec<_> = data.iter().map(|(f, _)| vocab.encode(f)).collect();
        let labels = vec![0, 1, 0, 1];
        let obj = Objective { rows: &rows, labels: &labels, classes: 2, dim: vocab.len(), l2: 1.0 };
        let (w, _) = minimize(&obj, &TrainOptions::default());
        let (_, g) = obj.loss_and_gradient(&w);
        assert!(g.iter().all(|v| v.abs() < 1e-5), "{g:?}");
    }
}
