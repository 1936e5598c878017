//! PITF (pairwise interaction) updates: a cell is modelled as
//! `p.q + p.b + q.b`, so each row solve is a ridge regression on the sum of
//! the two other factors, with the remaining pairwise term moved to the
//! target side.
//!
//! The zero vector is the identity element of this decomposition, so the
//! `zero` and `one` regularization modes coincide and missing context
//! values default to zero.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, gram, solve_spd, DenseMatrix};
use crate::models::loss::reg_strength;
use crate::models::train::Grouped;
use crate::models::{Block, ContextBlock, FactorModel, Hyperparams, ModelKind};
use crate::tensor::InteractionTensor;

/// `m += x y^T + y x^T`.
fn add_outer_pair(m: &mut DenseMatrix, x: &[f64], y: &[f64]) {
    let k = x.len();
    for a in 0..k {
        let row = &mut m.data[a * k..(a + 1) * k];
        for b in 0..k {
            row[b] += x[a] * y[b] + y[a] * x[b];
        }
    }
}

struct PairProblem<'a> {
    background: &'a DenseMatrix,
    /// Background part of `sum w * offset * s`, subtracted from the rhs.
    background_offset: &'a [f64],
    lambda: f64,
}

/// Solves one PITF row given per-entry `(s, offset, w_prime)` tuples.
fn solve_row(
    problem: &PairProblem,
    entries: impl Iterator<Item = (Vec<f64>, f64, f64)>,
) -> Result<Vec<f64>> {
    let mut a = problem.background.clone();
    let mut rhs: Vec<f64> = problem.background_offset.iter().map(|v| -v).collect();
    for (s, offset, w_prime) in entries {
        a.add_outer(&s, w_prime);
        let w = 1.0 + w_prime;
        let coeff = w - w_prime * offset;
        for (r, si) in rhs.iter_mut().zip(&s) {
            *r += coeff * si;
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
    let ContextBlock::Vectors(b_block) = &model.contexts[0] else {
        return Err(Error::ShapeMismatch {
            expected: "vector context factors".into(),
            got: "matrix context factors".into(),
        });
    };
    let feature = &t.schema.features[0];
    let l_eff = (feature.cardinality + usize::from(feature.allows_missing)) as f64;
    let m = t.m as f64;
    let n = t.n as f64;
    let zero = vec![0.0; model.k()];

    let gram_p = gram(&model.user_factors);
    let gram_q = gram(&model.item_factors);
    let gram_b = gram(b_block);
    let sp = model.user_factors.column_sums();
    let sq = model.item_factors.column_sums();
    let sb = b_block.column_sums();

    // Per-entry design/offset closures share this pattern: the design is
    // the sum of the two fixed factors at the entry's coordinate, the
    // offset is their dot product.
    match block {
        Block::Users => {
            let mut background = gram_q.clone();
            background.scale(l_eff);
            let mut gb = gram_b.clone();
            gb.scale(n);
            background.add_assign(&gb);
            add_outer_pair(&mut background, &sq, &sb);
            let background_offset: Vec<f64> = gram_q
                .matvec(&sb)
                .iter()
                .zip(&gram_b.matvec(&sq))
                .map(|(x, y)| x + y)
                .collect();

            let rows: Vec<Vec<f64>> = (0..t.m)
                .into_par_iter()
                .map(|u| {
                    let problem = PairProblem {
                        background: &background,
                        background_offset: &background_offset,
                        lambda: reg_strength(hp.lambda, hp.nu, g.ws_user[u]),
                    };
                    let entries = g.by_user[u].iter().map(|&idx| {
                        let e = &t.entries[idx];
                        let q = model.item_factors.row(e.item);
                        let b = match e.ctx[0] {
                            Some(c) => b_block.row(c),
                            None => zero.as_slice(),
                        };
                        let s: Vec<f64> = q.iter().zip(b).map(|(x, y)| x + y).collect();
                        (s, dot(q, b), hp.alpha * e.amplitude)
                    });
                    solve_row(&problem, entries)
                })
                .collect::<Result<_>>()?;
            for (u, row) in rows.into_iter().enumerate() {
                model.user_factors.row_mut(u).copy_from_slice(&row);
            }
        }
        Block::Items => {
            let mut background = gram_p.clone();
            background.scale(l_eff);
            let mut gb = gram_b.clone();
            gb.scale(m);
            background.add_assign(&gb);
            add_outer_pair(&mut background, &sp, &sb);
            let background_offset: Vec<f64> = gram_p
                .matvec(&sb)
                .iter()
                .zip(&gram_b.matvec(&sp))
                .map(|(x, y)| x + y)
                .collect();

            let rows: Vec<Vec<f64>> = (0..t.n)
                .into_par_iter()
                .map(|i| {
                    let problem = PairProblem {
                        background: &background,
                        background_offset: &background_offset,
                        lambda: reg_strength(hp.lambda, hp.nu, g.ws_item[i]),
                    };
                    let entries = g.by_item[i].iter().map(|&idx| {
                        let e = &t.entries[idx];
                        let p = model.user_factors.row(e.user);
                        let b = match e.ctx[0] {
                            Some(c) => b_block.row(c),
                            None => zero.as_slice(),
                        };
                        let s: Vec<f64> = p.iter().zip(b).map(|(x, y)| x + y).collect();
                        (s, dot(p, b), hp.alpha * e.amplitude)
                    });
                    solve_row(&problem, entries)
                })
                .collect::<Result<_>>()?;
            for (i, row) in rows.into_iter().enumerate() {
                model.item_factors.row_mut(i).copy_from_slice(&row);
            }
        }
        Block::Context(0) => {
            let mut background = gram_p.clone();
            background.scale(n);
            let mut gq = gram_q.clone();
            gq.scale(m);
            background.add_assign(&gq);
            add_outer_pair(&mut background, &sp, &sq);
            let background_offset: Vec<f64> = gram_p
                .matvec(&sq)
                .iter()
                .zip(&gram_q.matvec(&sp))
                .map(|(x, y)| x + y)
                .collect();

            let values = g.by_ctx[0].len();
            let rows: Vec<Vec<f64>> = (0..values)
                .into_par_iter()
                .map(|c| {
                    let problem = PairProblem {
                        background: &background,
                        background_offset: &background_offset,
                        lambda: reg_strength(hp.lambda, hp.nu, g.ws_ctx[0][c]),
                    };
                    let entries = g.by_ctx[0][c].iter().map(|&idx| {
                        let e = &t.entries[idx];
                        let p = model.user_factors.row(e.user);
                        let q = model.item_factors.row(e.item);
                        let s: Vec<f64> = p.iter().zip(q).map(|(x, y)| x + y).collect();
                        (s, dot(p, q), hp.alpha * e.amplitude)
                    });
                    solve_row(&problem, entries)
                })
                .collect::<Result<_>>()?;
            let ContextBlock::Vectors(b) = &mut model.contexts[0] else {
                unreachable!("checked above");
            };
            for (c, row) in rows.into_iter().enumerate() {
                b.row_mut(c).copy_from_slice(&row);
            }
        }
        Block::Context(f) => {
            return Err(Error::UnsupportedStructure(format!(
                "PITF has a single context dimension, got feature index {f}"
            )));
        }
    }
    Ok(())
}

/// Sets every row of the chosen block to the exact minimizer of the loss
/// given the other blocks (PITF models).
pub fn update_block(
    t: &InteractionTensor,
    model: &mut FactorModel,
    hp: &Hyperparams,
    block: Block,
) -> Result<()> {
    if model.kind != ModelKind::Pitf {
        return Err(Error::UnsupportedStructure(format!(
            "pitf::update_block called on a {:?} model",
            model.kind
        )));
    }
    model.check_against(t)?;
    let grouped = Grouped::build(t, hp.alpha);
    update_block_grouped(t, &grouped, model, hp, block)
}
