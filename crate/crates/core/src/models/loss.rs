//! Exact evaluation of the weighted square loss, used as a training
//! diagnostic and as the monotonicity oracle in tests.
//!
//! The quadratic part is computed with the same Gram identities that make
//! ALS efficient: the sum of squared predictions over the full cell grid
//! collapses to elementwise products of `k x k` Gram matrices, and observed
//! cells are corrected individually. An independent naive enumeration lives
//! in [`crate::reference`].

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::models::train::Grouped;
use crate::models::{ContextBlock, FactorModel, Hyperparams, ModelKind, RegMode};
use crate::tensor::InteractionTensor;

/// Cell-count guard above which the exact loss refuses to run.
pub const DESK_SCALE_CELL_LIMIT: u128 = 10_000_000;

/// Per-row regularization strength `lambda * weight_sum^nu`.
///
/// `weight_sum` is the sum of confidence weights over every cell involving
/// the row: background cells contribute one, observed cells
/// `1 + alpha * amplitude`. `nu = 0` recovers the flat `lambda`.
pub fn reg_strength(lambda: f64, nu: f64, weight_sum: f64) -> f64 {
    lambda * weight_sum.powf(nu)
}

/// Number of cells in the training grid, counting one virtual slot per
/// feature that allows missing values (missing-context observations live
/// there, weighted against a constant default factor).
pub(crate) fn cell_grid_size(t: &InteractionTensor) -> u128 {
    let mut cells = t.m as u128 * t.n as u128;
    for f in &t.schema.features {
        cells = cells.saturating_mul((f.cardinality + usize::from(f.allows_missing)) as u128);
    }
    cells
}

/// Extended Gram of a context block: `B^T B` plus the outer product of the
/// default factor when the feature admits missing values.
fn extended_context_gram(
    block: &DenseMatrix,
    allows_missing: bool,
    default: &[f64],
) -> DenseMatrix {
    let mut g = crate::linalg::gram(block);
    if allows_missing {
        g.add_outer(default, 1.0);
    }
    g
}

fn sum_elements(m: &DenseMatrix) -> f64 {
    m.data.iter().sum()
}

/// Sum of squared predictions over the full (extended) cell grid.
fn background_square_sum(model: &FactorModel, t: &InteractionTensor) -> Result<f64> {
    let gram_p = crate::linalg::gram(&model.user_factors);
    let gram_q = crate::linalg::gram(&model.item_factors);

    match model.kind {
        ModelKind::Cp | ModelKind::Wmf => {
            let default = model.default_vector();
            let mut acc = crate::linalg::hadamard(&gram_p, &gram_q)?;
            for (block, feature) in model.contexts.iter().zip(&t.schema.features) {
                let ContextBlock::Vectors(b) = block else {
                    return Err(Error::ShapeMismatch {
                        expected: "vector context factors".into(),
                        got: "matrix context factors".into(),
                    });
                };
                let g = extended_context_gram(b, feature.allows_missing, &default);
                acc = crate::linalg::hadamard(&acc, &g)?;
            }
            Ok(sum_elements(&acc))
        }
        ModelKind::Pitf => {
            let ContextBlock::Vectors(b) = &model.contexts[0] else {
                return Err(Error::ShapeMismatch {
                    expected: "vector context factors".into(),
                    got: "matrix context factors".into(),
                });
            };
            let feature = &t.schema.features[0];
            let l_eff = (feature.cardinality + usize::from(feature.allows_missing)) as f64;
            let m = t.m as f64;
            let n = t.n as f64;
            let gram_b = crate::linalg::gram(b);
            let sp = model.user_factors.column_sums();
            let sq = model.item_factors.column_sums();
            let sb = b.column_sums();
            // Expansion of (pq + pb + qb)^2 summed over the grid; the zero
            // default contributes nothing beyond the extra (pq)^2 slice.
            let sum = l_eff * sum_elements(&crate::linalg::hadamard(&gram_p, &gram_q)?)
                + n * sum_elements(&crate::linalg::hadamard(&gram_p, &gram_b)?)
                + m * sum_elements(&crate::linalg::hadamard(&gram_q, &gram_b)?)
                + 2.0 * dot(&gram_p.matvec(&sq), &sb)
                + 2.0 * dot(&gram_q.matvec(&sp), &sb)
                + 2.0 * dot(&gram_b.matvec(&sp), &sq);
            Ok(sum)
        }
        ModelKind::Ttf => {
            let ContextBlock::Matrices(ms) = &model.contexts[0] else {
                return Err(Error::ShapeMismatch {
                    expected: "matrix context factors".into(),
                    got: "vector context factors".into(),
                });
            };
            let feature = &t.schema.features[0];
            let default = model.default_matrix();
            let slices = ms
                .iter()
                .chain(feature.allows_missing.then_some(&default));
            let mut sum = 0.0;
            for b in slices {
                let pb = gram_p.matmul(b);
                let pbq = pb.matmul(&gram_q);
                sum += pbq.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>();
            }
            Ok(sum)
        }
    }
}

fn context_reg_distance(model: &FactorModel, block: &ContextBlock, value: usize) -> f64 {
    match block {
        ContextBlock::Vectors(b) => {
            let row = b.row(value);
            match (model.kind, model.reg_mode) {
                (ModelKind::Cp | ModelKind::Wmf, RegMode::One) => {
                    row.iter().map(|v| (v - 1.0) * (v - 1.0)).sum()
                }
                _ => row.iter().map(|v| v * v).sum(),
            }
        }
        ContextBlock::Matrices(ms) => {
            let target = model.default_matrix();
            ms[value]
                .data
                .iter()
                .zip(&target.data)
                .map(|(v, t)| (v - t) * (v - t))
                .sum()
        }
    }
}

/// Exact weighted square loss of `model` on `t`, including per-row
/// frequency-scaled regularization.
///
/// Refuses instances whose cell grid exceeds [`DESK_SCALE_CELL_LIMIT`]; the
/// exact loss is a diagnostic and test oracle, not a training quantity.
pub fn loss(model: &FactorModel, t: &InteractionTensor, hp: &Hyperparams) -> Result<f64> {
    model.check_against(t)?;
    let cells = cell_grid_size(t);
    if cells > DESK_SCALE_CELL_LIMIT {
        return Err(Error::SizeGuard(format!(
            "loss enumeration over {cells} cells exceeds the desk-scale limit {DESK_SCALE_CELL_LIMIT}"
        )));
    }

    let mut quad = background_square_sum(model, t)?;
    for e in &t.entries {
        let w = 1.0 + hp.alpha * e.amplitude;
        let pred = model.predict_entry(e.user, e.item, &e.ctx);
        let r = 1.0 - pred;
        quad += w * r * r - pred * pred;
    }

    let grouped = Grouped::build(t, hp.alpha);
    let mut reg = 0.0;
    for u in 0..t.m {
        let lam = reg_strength(hp.lambda, hp.nu, grouped.ws_user[u]);
        reg += lam * dot(model.user_factors.row(u), model.user_factors.row(u));
    }
    for i in 0..t.n {
        let lam = reg_strength(hp.lambda, hp.nu, grouped.ws_item[i]);
        reg += lam * dot(model.item_factors.row(i), model.item_factors.row(i));
    }
    for (f, block) in model.contexts.iter().enumerate() {
        for c in 0..block.len() {
            let lam = reg_strength(hp.lambda, hp.nu, grouped.ws_ctx[f][c]);
            reg += lam * context_reg_distance(model, block, c);
        }
    }

    Ok(quad + reg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reg_strength_examples() {
        assert_eq!(reg_strength(0.37, 0.0, 12345.0), 0.37);
        assert_eq!(reg_strength(0.01, 1.0, 500.0), 5.0);
        assert!((reg_strength(0.1, 0.5, 100.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reg_strength_zero_weight_sum() {
        // 0^0 = 1 keeps nu = 0 meaning "flat lambda" even on empty rows.
        assert_eq!(reg_strength(0.25, 0.0, 0.0), 0.25);
    }
}
