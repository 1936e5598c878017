//! TTF (tensor-train) updates: a cell is modelled as `p_u * B_c * q_i^T`
//! with a full `k x k` matrix per context value.
//!
//! User and item rows remain `k x k` ridge solves. The context equation
//! `P^T P B QQ^T + corrections + lambda B = rhs` couples all `k^2` unknowns;
//! it is solved either exactly by vectorizing into a `k^2 x k^2` Kronecker
//! system, or approximately with a few matrix-free conjugate-gradient steps
//! warm-started from the current value. The exact path is kept for small
//! `k` and as the oracle for the CG path.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cg_solve, dot, gram, kron, solve_spd, DenseMatrix, LinearOperator};
use crate::models::loss::reg_strength;
use crate::models::train::Grouped;
use crate::models::{Block, ContextBlock, FactorModel, Hyperparams, ModelKind, RegMode, SolverKind};
use crate::tensor::InteractionTensor;

/// Largest latent dimension for which the vectorized `k^6` context solve is
/// allowed.
pub const EXACT_SOLVER_MAX_K: usize = 32;

fn matrix_block(block: &ContextBlock) -> Result<&Vec<DenseMatrix>> {
    match block {
        ContextBlock::Matrices(ms) => Ok(ms),
        ContextBlock::Vectors(_) => Err(Error::ShapeMismatch {
            expected: "matrix context factors".into(),
            got: "vector context factors".into(),
        }),
    }
}

/// Row-major flattening of the outer product `p q^T`.
fn outer_flat(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(p.len() * q.len());
    for pa in p {
        for qb in q {
            z.push(pa * qb);
        }
    }
    z
}

/// Updates user or item rows; the item update is the user update with the
/// context matrices transposed.
pub(crate) fn update_users_items_grouped(
    t: &InteractionTensor,
    g: &Grouped,
    model: &mut FactorModel,
    hp: &Hyperparams,
    block: Block,
) -> Result<()> {
    let ms = matrix_block(&model.contexts[0])?;
    let feature = &t.schema.features[0];
    let default = model.default_matrix();
    let k = model.k();

    let (other_gram, transpose_b) = match block {
        Block::Users => (gram(&model.item_factors), false),
        Block::Items => (gram(&model.user_factors), true),
        Block::Context(_) => {
            return Err(Error::UnsupportedStructure(
                "context matrices are updated per value, not as a row block".into(),
            ))
        }
    };

    // sum_c B_c G B_c^T (user side) or B_c^T G B_c (item side), including
    // the static default matrix when the feature admits missing values.
    let mut background = DenseMatrix::zeros(k, k);
    let slices = ms.iter().chain(feature.allows_missing.then_some(&default));
    for b in slices {
        let term = if transpose_b {
            b.transpose().matmul(&other_gram).matmul(b)
        } else {
            b.matmul(&other_gram).matmul(&b.transpose())
        };
        background.add_assign(&term);
    }

    let design = |entry_idx: usize| -> (Vec<f64>, f64) {
        let e = &t.entries[entry_idx];
        let b = match e.ctx[0] {
            Some(c) => &ms[c],
            None => &default,
        };
        let s = match block {
            Block::Users => b.matvec(model.item_factors.row(e.item)),
            _ => b.matvec_t(model.user_factors.row(e.user)),
        };
        (s, hp.alpha * e.amplitude)
    };

    let (rows_count, groups, weight_sums) = match block {
        Block::Users => (t.m, &g.by_user, &g.ws_user),
        _ => (t.n, &g.by_item, &g.ws_item),
    };

    let rows: Vec<Vec<f64>> = (0..rows_count)
        .into_par_iter()
        .map(|r| {
            let mut a = background.clone();
            let mut rhs = vec![0.0; k];
            for &idx in &groups[r] {
                let (s, w_prime) = design(idx);
                a.add_outer(&s, w_prime);
                for (acc, si) in rhs.iter_mut().zip(&s) {
                    *acc += (1.0 + w_prime) * si;
                }
            }
            a.add_diagonal(reg_strength(hp.lambda, hp.nu, weight_sums[r]));
            solve_spd(&a, &rhs)
        })
        .collect::<Result<_>>()?;

    match block {
        Block::Users => {
            for (u, row) in rows.into_iter().enumerate() {
                model.user_factors.row_mut(u).copy_from_slice(&row);
            }
        }
        _ => {
            for (i, row) in rows.into_iter().enumerate() {
                model.item_factors.row_mut(i).copy_from_slice(&row);
            }
        }
    }
    Ok(())
}

/// The linear operator of the context equation applied matrix-free:
/// `X -> P^T P X Q^T Q + sum_obs w' (p X q) p q^T + lambda X`.
struct ContextOperator<'a> {
    gram_p: &'a DenseMatrix,
    gram_q: &'a DenseMatrix,
    /// `(p_u, q_i, w')` per observed entry of this context value.
    observations: &'a [(&'a [f64], &'a [f64], f64)],
    lambda: f64,
    k: usize,
}

impl LinearOperator for ContextOperator<'_> {
    fn dim(&self) -> usize {
        self.k * self.k
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let k = self.k;
        let xm = DenseMatrix {
            rows: k,
            cols: k,
            data: x.to_vec(),
        };
        let y = self.gram_p.matmul(&xm).matmul(self.gram_q);
        out.copy_from_slice(&y.data);
        for (p, q, w_prime) in self.observations {
            // scalar p X q^T
            let mut scalar = 0.0;
            for a in 0..k {
                if p[a] == 0.0 {
                    continue;
                }
                scalar += p[a] * dot(&x[a * k..(a + 1) * k], q);
            }
            let coeff = w_prime * scalar;
            for a in 0..k {
                let pa = coeff * p[a];
                let row = &mut out[a * k..(a + 1) * k];
                for (o, qb) in row.iter_mut().zip(*q) {
                    *o += pa * qb;
                }
            }
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o += self.lambda * xi;
        }
    }
}

pub(crate) fn update_context_grouped(
    t: &InteractionTensor,
    g: &Grouped,
    model: &mut FactorModel,
    hp: &Hyperparams,
    c: usize,
    solver: SolverKind,
) -> Result<()> {
    let k = model.k();
    let gram_p = gram(&model.user_factors);
    let gram_q = gram(&model.item_factors);
    let lambda = reg_strength(hp.lambda, hp.nu, g.ws_ctx[0][c]);

    let observations: Vec<(&[f64], &[f64], f64)> = g.by_ctx[0][c]
        .iter()
        .map(|&idx| {
            let e = &t.entries[idx];
            (
                model.user_factors.row(e.user),
                model.item_factors.row(e.item),
                hp.alpha * e.amplitude,
            )
        })
        .collect();

    // rhs = sum_obs w * p^T q, plus lambda * I for the `one` variant.
    let mut rhs = vec![0.0; k * k];
    for (p, q, w_prime) in &observations {
        let w = 1.0 + w_prime;
        for a in 0..k {
            let pa = w * p[a];
            let row = &mut rhs[a * k..(a + 1) * k];
            for (r, qb) in row.iter_mut().zip(*q) {
                *r += pa * qb;
            }
        }
    }
    if model.reg_mode == RegMode::One {
        for a in 0..k {
            rhs[a * k + a] += lambda;
        }
    }

    let solution = match solver {
        SolverKind::Exact => {
            if k > EXACT_SOLVER_MAX_K {
                return Err(Error::SizeGuard(format!(
                    "exact context solve is k^6 and refused for k = {k} > {EXACT_SOLVER_MAX_K}; \
                     use the CG solver"
                )));
            }
            let mut system = kron(&gram_p, &gram_q);
            for (p, q, w_prime) in &observations {
                let z = outer_flat(p, q);
                system.add_outer(&z, *w_prime);
            }
            system.add_diagonal(lambda);
            solve_spd(&system, &rhs)?
        }
        SolverKind::Cg => {
            let op = ContextOperator {
                gram_p: &gram_p,
                gram_q: &gram_q,
                observations: &observations,
                lambda,
                k,
            };
            let ms = matrix_block(&model.contexts[0])?;
            // Warm start from the value being overwritten.
            cg_solve(&op, &rhs, hp.cg_steps, &ms[c].data)
        }
    };

    let ContextBlock::Matrices(ms) = &mut model.contexts[0] else {
        unreachable!("validated above");
    };
    ms[c].data.copy_from_slice(&solution);
    Ok(())
}

/// Updates the user or item block of a TTF model.
pub fn update_users_items(
    t: &InteractionTensor,
    model: &mut FactorModel,
    hp: &Hyperparams,
    block: Block,
) -> Result<()> {
    if model.kind != ModelKind::Ttf {
        return Err(Error::UnsupportedStructure(format!(
            "ttf::update_users_items called on a {:?} model",
            model.kind
        )));
    }
    model.check_against(t)?;
    let grouped = Grouped::build(t, hp.alpha);
    update_users_items_grouped(t, &grouped, model, hp, block)
}

/// Updates the context matrix of a single context value.
pub fn update_context(
    t: &InteractionTensor,
    model: &mut FactorModel,
    hp: &Hyperparams,
    c: usize,
    solver: SolverKind,
) -> Result<()> {
    if model.kind != ModelKind::Ttf {
        return Err(Error::UnsupportedStructure(format!(
            "ttf::update_context called on a {:?} model",
            model.kind
        )));
    }
    model.check_against(t)?;
    let grouped = Grouped::build(t, hp.alpha);
    update_context_grouped(t, &grouped, model, hp, c, solver)
}
