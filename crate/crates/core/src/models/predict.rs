//! Point predictions and full-catalogue scoring with missing-context
//! defaults and stacked averaging.

use crate::linalg::{dot, DenseMatrix};
use crate::models::{ContextBlock, FactorModel, ModelKind, Structure};

/// CP prediction: elementwise product of all factor vectors, summed.
///
/// An empty `context_factors` list reduces to the plain dot product (WMF).
pub fn predict_cp(p_u: &[f64], context_factors: &[&[f64]], q_i: &[f64]) -> f64 {
    let mut acc = 0.0;
    for f in 0..p_u.len() {
        let mut term = p_u[f] * q_i[f];
        for b in context_factors {
            term *= b[f];
        }
        acc += term;
    }
    acc
}

/// PITF prediction: sum of the pairwise dot products.
pub fn predict_pitf(p_u: &[f64], q_i: &[f64], b_c: &[f64]) -> f64 {
    dot(p_u, q_i) + dot(p_u, b_c) + dot(q_i, b_c)
}

/// TTF prediction: `p_u * B_c * q_i^T`.
pub fn predict_ttf(p_u: &[f64], b_c: &DenseMatrix, q_i: &[f64]) -> f64 {
    let k = p_u.len();
    let mut acc = 0.0;
    for a in 0..k {
        if p_u[a] == 0.0 {
            continue;
        }
        acc += p_u[a] * dot(&b_c.data[a * k..(a + 1) * k], q_i);
    }
    acc
}

/// Anything that can rank the item catalogue for a user in a context.
pub trait Scorer {
    fn n_items(&self) -> usize;

    /// Scores every item for `(u, ctx)`. Items in `exclude` receive negative
    /// infinity so they can never be ranked.
    fn score_items(&self, u: usize, ctx: &[Option<usize>], exclude: &[usize]) -> Vec<f64>;
}

impl FactorModel {
    /// Prediction for one training-tensor coordinate. For stacked models
    /// `ctx` has the single stacked feature; `None` falls back to the
    /// default factor.
    pub(crate) fn predict_entry(&self, u: usize, i: usize, ctx: &[Option<usize>]) -> f64 {
        let p = self.user_factors.row(u);
        let q = self.item_factors.row(i);
        match self.kind {
            ModelKind::Wmf => dot(p, q),
            ModelKind::Cp => {
                let default = self.default_vector();
                let factors: Vec<&[f64]> = self
                    .contexts
                    .iter()
                    .zip(ctx)
                    .map(|(block, v)| match (block, v) {
                        (ContextBlock::Vectors(b), Some(c)) => b.row(*c),
                        _ => default.as_slice(),
                    })
                    .collect();
                predict_cp(p, &factors, q)
            }
            ModelKind::Pitf => {
                let default = self.default_vector();
                let b = match (&self.contexts[0], ctx[0]) {
                    (ContextBlock::Vectors(b), Some(c)) => b.row(c),
                    _ => default.as_slice(),
                };
                predict_pitf(p, q, b)
            }
            ModelKind::Ttf => match (&self.contexts[0], ctx[0]) {
                (ContextBlock::Matrices(ms), Some(c)) => predict_ttf(p, &ms[c], q),
                _ => predict_ttf(p, &self.default_matrix(), q),
            },
        }
    }

    /// Prediction when every context value is missing: the default factors
    /// stand in, which for `one` variants is exactly the user-item dot
    /// product and for `zero` variants collapses CP/TTF scores to zero.
    fn identity_prediction(&self, u: usize, i: usize) -> f64 {
        match self.kind {
            ModelKind::Wmf => dot(self.user_factors.row(u), self.item_factors.row(i)),
            ModelKind::Cp => {
                let default = self.default_vector();
                let factors: Vec<&[f64]> =
                    self.contexts.iter().map(|_| default.as_slice()).collect();
                predict_cp(
                    self.user_factors.row(u),
                    &factors,
                    self.item_factors.row(i),
                )
            }
            ModelKind::Pitf => predict_pitf(
                self.user_factors.row(u),
                self.item_factors.row(i),
                &self.default_vector(),
            ),
            ModelKind::Ttf => predict_ttf(
                self.user_factors.row(u),
                &self.default_matrix(),
                self.item_factors.row(i),
            ),
        }
    }

    /// Scores all items for user `u` under `ctx` (one value per inference
    /// schema feature).
    ///
    /// Stacked models average the per-feature slice predictions over the
    /// non-missing features; if all features are missing the default-factor
    /// prediction is used. MultiD models make a single prediction with
    /// defaults substituted for missing values.
    pub fn score_items(&self, u: usize, ctx: &[Option<usize>], exclude: &[usize]) -> Vec<f64> {
        assert!(u < self.m(), "user index out of range");
        assert_eq!(ctx.len(), self.schema.d(), "context arity mismatch");
        let n = self.n();
        let mut scores = Vec::with_capacity(n);

        match (self.kind, self.structure) {
            (ModelKind::Wmf, _) => {
                for i in 0..n {
                    scores.push(self.identity_prediction(u, i));
                }
            }
            (_, Structure::Stacked3d) => {
                let slices: Vec<usize> = ctx
                    .iter()
                    .enumerate()
                    .filter_map(|(f, v)| v.map(|v| self.schema.stacked_offset(f) + v))
                    .collect();
                if slices.is_empty() {
                    for i in 0..n {
                        scores.push(self.identity_prediction(u, i));
                    }
                } else {
                    let inv = 1.0 / slices.len() as f64;
                    for i in 0..n {
                        let sum: f64 = slices
                            .iter()
                            .map(|&s| self.predict_entry(u, i, &[Some(s)]))
                            .sum();
                        scores.push(sum * inv);
                    }
                }
            }
            (_, Structure::MultiD) => {
                for i in 0..n {
                    scores.push(self.predict_entry(u, i, ctx));
                }
            }
        }

        for &i in exclude {
            if i < n {
                scores[i] = f64::NEG_INFINITY;
            }
        }
        scores
    }
}

impl Scorer for FactorModel {
    fn n_items(&self) -> usize {
        self.n()
    }

    fn score_items(&self, u: usize, ctx: &[Option<usize>], exclude: &[usize]) -> Vec<f64> {
        FactorModel::score_items(self, u, ctx, exclude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cp_hand_computed() {
        assert_eq!(predict_cp(&[1.0, 2.0], &[&[1.0, 1.0]], &[3.0, 1.0]), 5.0);
    }

    #[test]
    fn cp_ones_is_wmf() {
        let p = [0.5, -1.0, 2.0];
        let q = [1.0, 4.0, -0.5];
        let ones = [1.0, 1.0, 1.0];
        assert_eq!(predict_cp(&p, &[&ones, &ones], &q), dot(&p, &q));
    }

    #[test]
    fn cp_zero_annihilates() {
        let zero = [0.0, 0.0];
        assert_eq!(predict_cp(&[1.0, 2.0], &[&zero], &[3.0, 4.0]), 0.0);
    }

    #[test]
    fn pitf_zero_context_is_dot() {
        let p = [1.0, -2.0];
        let q = [0.5, 3.0];
        assert_eq!(predict_pitf(&p, &q, &[0.0, 0.0]), dot(&p, &q));
    }

    #[test]
    fn pitf_hand_computed() {
        assert_eq!(predict_pitf(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]), 2.0);
        assert_eq!(predict_pitf(&[0.0; 2], &[0.0; 2], &[0.0; 2]), 0.0);
    }

    #[test]
    fn ttf_identity_and_zero() {
        let p = [1.0, 2.0];
        let q = [3.0, 4.0];
        assert_eq!(predict_ttf(&p, &DenseMatrix::identity(2), &q), dot(&p, &q));
        assert_eq!(predict_ttf(&p, &DenseMatrix::zeros(2, 2), &q), 0.0);
        let swap = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        // [1,2] * swap = [2,1]; dot with [3,4] = 10
        assert_eq!(predict_ttf(&p, &swap, &q), 10.0);
    }
}
