//! CP decomposition updates: every cell is modelled as the elementwise
//! product of the user vector, one vector per context dimension, and the
//! item vector. WMF is the context-free special case.
//!
//! Each row solve assembles `sum_cells w * s * s^T + lambda_row * I` from a
//! precomputed background term (the Hadamard product of the other blocks'
//! Gram matrices, covering all cells at weight one) plus per-entry
//! corrections at weight `w - 1`, and the right-hand side from observed
//! entries only.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{gram, hadamard, solve_spd, DenseMatrix};
use crate::models::loss::reg_strength;
use crate::models::train::Grouped;
use crate::models::{Block, ContextBlock, FactorModel, Hyperparams, ModelKind, RegMode};
use crate::tensor::InteractionTensor;

fn vector_block(block: &ContextBlock) -> Result<&DenseMatrix> {
    match block {
        ContextBlock::Vectors(b) => Ok(b),
        ContextBlock::Matrices(_) => Err(Error::ShapeMismatch {
            expected: "vector context factors".into(),
            got: "matrix context factors".into(),
        }),
    }
}

/// Elementwise product of the entry's context factors, skipping `skip`;
/// missing values contribute the static default factor.
fn context_product(
    model: &FactorModel,
    ctx: &[Option<usize>],
    skip: Option<usize>,
    default: &[f64],
) -> Result<Vec<f64>> {
    let mut v = vec![1.0; model.k()];
    for (f, value) in ctx.iter().enumerate() {
        if skip == Some(f) {
            continue;
        }
        let row = match value {
            Some(c) => vector_block(&model.contexts[f])?.row(*c),
            None => default,
        };
        for (vi, ri) in v.iter_mut().zip(row) {
            *vi *= ri;
        }
    }
    Ok(v)
}

/// Hadamard product of the extended context Grams for all features except
/// `skip`, starting from `base`.
fn fold_context_grams(
    model: &FactorModel,
    t: &InteractionTensor,
    skip: Option<usize>,
    default: &[f64],
    base: DenseMatrix,
) -> Result<DenseMatrix> {
    let mut acc = base;
    for (f, feature) in t.schema.features.iter().enumerate() {
        if skip == Some(f) {
            continue;
        }
        let b = vector_block(&model.contexts[f])?;
        let mut g = gram(b);
        if feature.allows_missing {
            g.add_outer(default, 1.0);
        }
        acc = hadamard(&acc, &g)?;
    }
    Ok(acc)
}

struct RowProblem<'a> {
    background: &'a DenseMatrix,
    lambda: f64,
    rhs_shift: f64,
}

/// Solves one row: background + corrections + lambda I, rhs from observed
/// entries plus an optional constant shift (the `one`-mode pull).
fn solve_row(
    problem: &RowProblem,
    entries: impl Iterator<Item = (Vec<f64>, f64)>,
) -> Result<Vec<f64>> {
    let k = problem.background.rows;
    let mut a = problem.background.clone();
    let mut rhs = vec![problem.rhs_shift * problem.lambda; k];
    for (s, w_prime) in entries {
        a.add_outer(&s, w_prime);
        for (r, si) in rhs.iter_mut().zip(&s) {
            *r += (1.0 + w_prime) * si;
        }
    }
    a.add_diagonal(problem.lambda);
    solve_spd(&a, &rhs)
}

pub(crate) fn update_block_grouped(
    t: &InteractionTensor,
    g: &Grouped,
    model: &mut FactorModel,
    hp: &Hyperparams,
    block: Block,
) -> Result<()> {
    let default = model.default_vector();

    match block {
        Block::Users => {
            let background = fold_context_grams(
                model,
                t,
                None,
                &default,
                gram(&model.item_factors),
            )?;
            let rows: Vec<Vec<f64>> = (0..t.m)
                .into_par_iter()
                .map(|u| {
                    let problem = RowProblem {
                        background: &background,
                        lambda: reg_strength(hp.lambda, hp.nu, g.ws_user[u]),
                        rhs_shift: 0.0,
                    };
                    let entries = g.by_user[u].iter().map(|&idx| {
                        let e = &t.entries[idx];
                        let mut s = context_product(model, &e.ctx, None, &default)
                            .expect("validated context block");
                        for (si, qi) in s.iter_mut().zip(model.item_factors.row(e.item)) {
                            *si *= qi;
                        }
                        (s, hp.alpha * e.amplitude)
                    });
                    solve_row(&problem, entries)
                })
                .collect::<Result<_>>()?;
            for (u, row) in rows.into_iter().enumerate() {
                model.user_factors.row_mut(u).copy_from_slice(&row);
            }
        }
        Block::Items => {
            let background = fold_context_grams(
                model,
                t,
                None,
                &default,
                gram(&model.user_factors),
            )?;
            let rows: Vec<Vec<f64>> = (0..t.n)
                .into_par_iter()
                .map(|i| {
                    let problem = RowProblem {
                        background: &background,
                        lambda: reg_strength(hp.lambda, hp.nu, g.ws_item[i]),
                        rhs_shift: 0.0,
                    };
                    let entries = g.by_item[i].iter().map(|&idx| {
                        let e = &t.entries[idx];
                        let mut s = context_product(model, &e.ctx, None, &default)
                            .expect("validated context block");
                        for (si, pi) in s.iter_mut().zip(model.user_factors.row(e.user)) {
                            *si *= pi;
                        }
                        (s, hp.alpha * e.amplitude)
                    });
                    solve_row(&problem, entries)
                })
                .collect::<Result<_>>()?;
            for (i, row) in rows.into_iter().enumerate() {
                model.item_factors.row_mut(i).copy_from_slice(&row);
            }
        }
        Block::Context(f) => {
            let base = hadamard(&gram(&model.user_factors), &gram(&model.item_factors))?;
            let background = fold_context_grams(model, t, Some(f), &default, base)?;
            let rhs_shift = match (model.kind, model.reg_mode) {
                (ModelKind::Cp, RegMode::One) => 1.0,
                _ => 0.0,
            };
            let values = g.by_ctx[f].len();
            let rows: Vec<Vec<f64>> = (0..values)
                .into_par_iter()
                .map(|c| {
                    let problem = RowProblem {
                        background: &background,
                        lambda: reg_strength(hp.lambda, hp.nu, g.ws_ctx[f][c]),
                        rhs_shift,
                    };
                    let entries = g.by_ctx[f][c].iter().map(|&idx| {
                        let e = &t.entries[idx];
                        let mut s = context_product(model, &e.ctx, Some(f), &default)
                            .expect("validated context block");
                        for ((si, pi), qi) in s
                            .iter_mut()
                            .zip(model.user_factors.row(e.user))
                            .zip(model.item_factors.row(e.item))
                        {
                            *si *= pi * qi;
                        }
                        (s, hp.alpha * e.amplitude)
                    });
                    solve_row(&problem, entries)
                })
                .collect::<Result<_>>()?;
            let ContextBlock::Vectors(b) = &mut model.contexts[f] else {
                return Err(Error::ShapeMismatch {
                    expected: "vector context factors".into(),
                    got: "matrix context factors".into(),
                });
            };
            for (c, row) in rows.into_iter().enumerate() {
                b.row_mut(c).copy_from_slice(&row);
            }
        }
    }
    Ok(())
}

/// Sets every row of the chosen block to the exact minimizer of the loss
/// given the other blocks (CP and WMF models).
pub fn update_block(
    t: &InteractionTensor,
    model: &mut FactorModel,
    hp: &Hyperparams,
    block: Block,
) -> Result<()> {
    if !matches!(model.kind, ModelKind::Cp | ModelKind::Wmf) {
        return Err(Error::UnsupportedStructure(format!(
            "cp::update_block called on a {:?} model",
            model.kind
        )));
    }
    model.check_against(t)?;
    let grouped = Grouped::build(t, hp.alpha);
    update_block_grouped(t, &grouped, model, hp, block)
}
