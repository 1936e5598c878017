//! Slow, self-contained reference implementations used to cross-check the
//! optimized training paths.
//!
//! Everything in this module works by literal enumeration of the full cell
//! grid: no Gram-matrix shortcuts, no Cholesky, no shared code with the
//! production update routines. The solver is Gauss-Jordan elimination, the
//! loss is a scalar loop, and the per-row minimizer materializes the dense
//! weighted ridge regression for one row. Only desk-scale instances are
//! feasible; the test suites keep inputs small.

use std::collections::HashMap;

use crate::linalg::DenseMatrix;
use crate::models::{Block, ContextBlock, FactorModel, Hyperparams, ModelKind, RegMode};
use crate::tensor::{ContextSchema, InteractionTensor};

/// Dense solve via Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_solve(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    assert_eq!(a.rows, a.cols);
    assert_eq!(a.rows, b.len());
    let n = a.rows;
    let w = n + 1;
    let mut aug = vec![0.0; n * w];
    for i in 0..n {
        aug[i * w..i * w + n].copy_from_slice(a.row(i));
        aug[i * w + n] = b[i];
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                aug[r1 * w + col]
                    .abs()
                    .partial_cmp(&aug[r2 * w + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot_row != col {
            for j in 0..w {
                aug.swap(col * w + j, pivot_row * w + j);
            }
        }
        let pivot = aug[col * w + col];
        assert!(pivot.abs() > 1e-14, "singular matrix in reference solve");
        for j in 0..w {
            aug[col * w + j] /= pivot;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = aug[row * w + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..w {
                aug[row * w + j] -= factor * aug[col * w + j];
            }
        }
    }
    (0..n).map(|i| aug[i * w + n]).collect()
}

/// All context coordinates of the training grid, including the virtual
/// missing slot (`None`) for features that allow missing values.
pub fn context_combinations(schema: &ContextSchema) -> Vec<Vec<Option<usize>>> {
    let mut combos: Vec<Vec<Option<usize>>> = vec![vec![]];
    for f in &schema.features {
        let mut values: Vec<Option<usize>> = (0..f.cardinality).map(Some).collect();
        if f.allows_missing {
            values.push(None);
        }
        combos = combos
            .iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(*v);
                    c
                })
            })
            .collect();
    }
    combos
}

fn entry_map(t: &InteractionTensor) -> HashMap<(usize, usize, Vec<Option<usize>>), f64> {
    t.entries
        .iter()
        .map(|e| ((e.user, e.item, e.ctx.clone()), e.amplitude))
        .collect()
}

/// Scalar prediction by the definition of each decomposition, written out
/// independently of the production prediction code.
pub fn naive_predict(model: &FactorModel, u: usize, i: usize, ctx: &[Option<usize>]) -> f64 {
    let k = model.k();
    let p = model.user_factors.row(u);
    let q = model.item_factors.row(i);
    match model.kind {
        ModelKind::Wmf => (0..k).map(|f| p[f] * q[f]).sum(),
        ModelKind::Cp => {
            let default = model.default_vector();
            let mut total = 0.0;
            for f in 0..k {
                let mut term = p[f] * q[f];
                for (g, v) in ctx.iter().enumerate() {
                    let b = match (v, &model.contexts[g]) {
                        (Some(c), ContextBlock::Vectors(m)) => m.row(*c),
                        _ => default.as_slice(),
                    };
                    term *= b[f];
                }
                total += term;
            }
            total
        }
        ModelKind::Pitf => {
            let default = model.default_vector();
            let b = match (ctx[0], &model.contexts[0]) {
                (Some(c), ContextBlock::Vectors(m)) => m.row(c),
                _ => default.as_slice(),
            };
            let mut total = 0.0;
            for f in 0..k {
                total += p[f] * q[f] + p[f] * b[f] + q[f] * b[f];
            }
            total
        }
        ModelKind::Ttf => {
            let default = model.default_matrix();
            let b = match (ctx[0], &model.contexts[0]) {
                (Some(c), ContextBlock::Matrices(ms)) => &ms[c],
                _ => &default,
            };
            let mut total = 0.0;
            for a in 0..k {
                for z in 0..k {
                    total += p[a] * b.get(a, z) * q[z];
                }
            }
            total
        }
    }
}

fn context_target_vector(model: &FactorModel) -> Vec<f64> {
    match (model.kind, model.reg_mode) {
        (ModelKind::Cp | ModelKind::Wmf, RegMode::One) => vec![1.0; model.k()],
        _ => vec![0.0; model.k()],
    }
}

/// Exact loss by triple (and deeper) loops over every cell of the extended
/// grid, plus naively accumulated frequency-scaled regularization.
pub fn naive_loss(model: &FactorModel, t: &InteractionTensor, hp: &Hyperparams) -> f64 {
    let entries = entry_map(t);
    let combos = context_combinations(&t.schema);
    let d = t.schema.d();

    let mut quad = 0.0;
    let mut ws_user = vec![0.0; t.m];
    let mut ws_item = vec![0.0; t.n];
    let mut ws_ctx: Vec<Vec<f64>> = t
        .schema
        .features
        .iter()
        .map(|f| vec![0.0; f.cardinality])
        .collect();

    for u in 0..t.m {
        for i in 0..t.n {
            for ctx in &combos {
                let (x, amp) = match entries.get(&(u, i, ctx.clone())) {
                    Some(a) => (1.0, *a),
                    None => (0.0, 0.0),
                };
                let w = 1.0 + hp.alpha * amp;
                let pred = naive_predict(model, u, i, ctx);
                quad += w * (x - pred) * (x - pred);
                ws_user[u] += w;
                ws_item[i] += w;
                for f in 0..d {
                    if let Some(c) = ctx[f] {
                        ws_ctx[f][c] += w;
                    }
                }
            }
        }
    }

    let mut reg = 0.0;
    for u in 0..t.m {
        let lam = hp.lambda * ws_user[u].powf(hp.nu);
        reg += lam
            * model
                .user_factors
                .row(u)
                .iter()
                .map(|v| v * v)
                .sum::<f64>();
    }
    for i in 0..t.n {
        let lam = hp.lambda * ws_item[i].powf(hp.nu);
        reg += lam
            * model
                .item_factors
                .row(i)
                .iter()
                .map(|v| v * v)
                .sum::<f64>();
    }
    for (f, block) in model.contexts.iter().enumerate() {
        for c in 0..block.len() {
            let lam = hp.lambda * ws_ctx[f][c].powf(hp.nu);
            let dist = match block {
                ContextBlock::Vectors(b) => {
                    let target = context_target_vector(model);
                    b.row(c)
                        .iter()
                        .zip(&target)
                        .map(|(v, t)| (v - t) * (v - t))
                        .sum::<f64>()
                }
                ContextBlock::Matrices(ms) => {
                    let target = model.default_matrix();
                    ms[c]
                        .data
                        .iter()
                        .zip(&target.data)
                        .map(|(v, t)| (v - t) * (v - t))
                        .sum::<f64>()
                }
            };
            reg += lam * dist;
        }
    }

    quad + reg
}

/// One cell of the ridge regression a row update must minimize: design
/// vector, constant offset (the part of the prediction not involving the
/// row), confidence weight and binary label.
struct RidgeCell {
    design: Vec<f64>,
    offset: f64,
    weight: f64,
    x: f64,
}

fn ridge_cell(
    model: &FactorModel,
    block: Block,
    u: usize,
    i: usize,
    ctx: &[Option<usize>],
    weight: f64,
    x: f64,
) -> RidgeCell {
    let k = model.k();
    let p = model.user_factors.row(u);
    let q = model.item_factors.row(i);
    let default = model.default_vector();
    let ctx_vector = |f: usize| -> &[f64] {
        match (ctx[f], &model.contexts[f]) {
            (Some(c), ContextBlock::Vectors(m)) => m.row(c),
            _ => default.as_slice(),
        }
    };

    let (design, offset) = match (model.kind, block) {
        (ModelKind::Cp | ModelKind::Wmf, Block::Users) => {
            let mut s: Vec<f64> = q.to_vec();
            for f in 0..ctx.len() {
                let b = ctx_vector(f);
                for (sf, bf) in s.iter_mut().zip(b) {
                    *sf *= bf;
                }
            }
            (s, 0.0)
        }
        (ModelKind::Cp | ModelKind::Wmf, Block::Items) => {
            let mut s: Vec<f64> = p.to_vec();
            for f in 0..ctx.len() {
                let b = ctx_vector(f);
                for (sf, bf) in s.iter_mut().zip(b) {
                    *sf *= bf;
                }
            }
            (s, 0.0)
        }
        (ModelKind::Cp | ModelKind::Wmf, Block::Context(f)) => {
            let mut s: Vec<f64> = p.iter().zip(q).map(|(a, b)| a * b).collect();
            for g in 0..ctx.len() {
                if g == f {
                    continue;
                }
                let b = ctx_vector(g);
                for (sf, bf) in s.iter_mut().zip(b) {
                    *sf *= bf;
                }
            }
            (s, 0.0)
        }
        (ModelKind::Pitf, Block::Users) => {
            let b = ctx_vector(0);
            let s = q.iter().zip(b).map(|(a, c)| a + c).collect();
            let o = q.iter().zip(b).map(|(a, c)| a * c).sum();
            (s, o)
        }
        (ModelKind::Pitf, Block::Items) => {
            let b = ctx_vector(0);
            let s = p.iter().zip(b).map(|(a, c)| a + c).collect();
            let o = p.iter().zip(b).map(|(a, c)| a * c).sum();
            (s, o)
        }
        (ModelKind::Pitf, Block::Context(_)) => {
            let s = p.iter().zip(q).map(|(a, c)| a + c).collect();
            let o = p.iter().zip(q).map(|(a, c)| a * c).sum();
            (s, o)
        }
        (ModelKind::Ttf, Block::Users) => {
            let default_m = model.default_matrix();
            let b = match (ctx[0], &model.contexts[0]) {
                (Some(c), ContextBlock::Matrices(ms)) => &ms[c],
                _ => &default_m,
            };
            let s = (0..k)
                .map(|a| (0..k).map(|z| b.get(a, z) * q[z]).sum())
                .collect();
            (s, 0.0)
        }
        (ModelKind::Ttf, Block::Items) => {
            let default_m = model.default_matrix();
            let b = match (ctx[0], &model.contexts[0]) {
                (Some(c), ContextBlock::Matrices(ms)) => &ms[c],
                _ => &default_m,
            };
            let s = (0..k)
                .map(|z| (0..k).map(|a| p[a] * b.get(a, z)).sum())
                .collect();
            (s, 0.0)
        }
        (ModelKind::Ttf, Block::Context(_)) => {
            // Unknown is the flattened k x k matrix; design is p (x) q.
            let mut s = Vec::with_capacity(k * k);
            for a in 0..k {
                for z in 0..k {
                    s.push(p[a] * q[z]);
                }
            }
            (s, 0.0)
        }
    };

    RidgeCell {
        design,
        offset,
        weight,
        x,
    }
}

/// Brute-force normal equations for one row of one block: the regularized
/// system matrix (including `lambda_row * I`), the right-hand side, and the
/// frequency-scaled `lambda_row` itself.
pub fn ridge_system(
    t: &InteractionTensor,
    model: &FactorModel,
    hp: &Hyperparams,
    block: Block,
    row: usize,
) -> (DenseMatrix, Vec<f64>, f64) {
    let entries = entry_map(t);
    let combos = context_combinations(&t.schema);
    let k = model.k();
    let dim = match (model.kind, block) {
        (ModelKind::Ttf, Block::Context(_)) => k * k,
        _ => k,
    };

    let mut system = DenseMatrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    let mut weight_sum = 0.0;

    let mut visit = |u: usize, i: usize, ctx: &Vec<Option<usize>>| {
        let (x, amp) = match entries.get(&(u, i, ctx.clone())) {
            Some(a) => (1.0, *a),
            None => (0.0, 0.0),
        };
        let w = 1.0 + hp.alpha * amp;
        weight_sum += w;
        let cell = ridge_cell(model, block, u, i, ctx, w, x);
        for a in 0..dim {
            for b in 0..dim {
                system.data[a * dim + b] += cell.weight * cell.design[a] * cell.design[b];
            }
            rhs[a] += cell.weight * (cell.x - cell.offset) * cell.design[a];
        }
    };

    match block {
        Block::Users => {
            for i in 0..t.n {
                for ctx in &combos {
                    visit(row, i, ctx);
                }
            }
        }
        Block::Items => {
            for u in 0..t.m {
                for ctx in &combos {
                    visit(u, row, ctx);
                }
            }
        }
        Block::Context(f) => {
            for u in 0..t.m {
                for i in 0..t.n {
                    for ctx in &combos {
                        if ctx[f] == Some(row) {
                            visit(u, i, ctx);
                        }
                    }
                }
            }
        }
    }

    let lambda = hp.lambda * weight_sum.powf(hp.nu);
    for a in 0..dim {
        system.data[a * dim + a] += lambda;
    }
    // Pull towards the regularization target.
    if let Block::Context(_) = block {
        match model.kind {
            ModelKind::Ttf => {
                let target = model.default_matrix();
                for (r, tv) in rhs.iter_mut().zip(&target.data) {
                    *r += lambda * tv;
                }
            }
            _ => {
                let target = context_target_vector(model);
                for (r, tv) in rhs.iter_mut().zip(&target) {
                    *r += lambda * tv;
                }
            }
        }
    }

    (system, rhs, lambda)
}

/// Brute-force exact minimizer of the loss with respect to one row of one
/// block, all other blocks frozen: materializes the full weighted design
/// over every cell involving the row and solves the normal equations with
/// Gauss-Jordan elimination.
pub fn ridge_minimizer(
    t: &InteractionTensor,
    model: &FactorModel,
    hp: &Hyperparams,
    block: Block,
    row: usize,
) -> Vec<f64> {
    let (system, rhs, _) = ridge_system(t, model, hp, block, row);
    gauss_jordan_solve(&system, &rhs)
}

/// Coefficients `e_1..e_k` of the characteristic polynomial
/// `det(xI - M) = x^k - e_1 x^(k-1) + e_2 x^(k-2) - ...` via the
/// Faddeev-LeVerrier recursion. For a symmetric matrix these are the
/// elementary symmetric polynomials of the eigenvalues, so `M` is positive
/// semi-definite exactly when all of them are nonnegative.
pub fn char_poly_elementary_symmetric(m: &DenseMatrix) -> Vec<f64> {
    assert_eq!(m.rows, m.cols);
    let k = m.rows;
    let mut b = DenseMatrix::identity(k);
    let mut coeffs = Vec::with_capacity(k);
    let mut sign = 1.0;
    for step in 1..=k {
        let a = m.matmul(&b);
        let trace: f64 = (0..k).map(|i| a.get(i, i)).sum();
        let c = trace / step as f64;
        coeffs.push(sign * c);
        b = a.clone();
        for i in 0..k {
            b.set(i, i, b.get(i, i) - c);
        }
        sign = -sign;
    }
    coeffs
}
