//! Shared helpers for the integration test suites: random desk-scale
//! tensors and random (non-degenerate) models to probe updates at generic
//! points.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tenrec::linalg::DenseMatrix;
use tenrec::models::{ContextBlock, FactorModel, Hyperparams, ModelKind, RegMode, Structure};
use tenrec::tensor::{ContextSchema, InteractionTensor, RawRecord};

pub fn random_tensor(
    seed: u64,
    m: usize,
    n: usize,
    cards: &[usize],
    missing_prob: f64,
    entries: usize,
) -> InteractionTensor {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut schema = ContextSchema::with_cardinalities(cards);
    if missing_prob > 0.0 {
        for f in &mut schema.features {
            f.allows_missing = true;
        }
    }
    let mut records = Vec::with_capacity(entries + m + n);
    // Guarantee every user and item appears at least once.
    for u in 0..m {
        records.push(RawRecord {
            user: format!("u{u}"),
            item: format!("i{}", u % n),
            ctx: cards.iter().map(|&c| Some(u % c)).collect(),
            amplitude: 1.0,
        });
    }
    for i in 0..n {
        records.push(RawRecord {
            user: format!("u{}", i % m),
            item: format!("i{i}"),
            ctx: cards.iter().map(|&c| Some(i % c)).collect(),
            amplitude: 1.0,
        });
    }
    for _ in 0..entries {
        let ctx = cards
            .iter()
            .map(|&c| {
                if missing_prob > 0.0 && rng.gen_bool(missing_prob) {
                    None
                } else {
                    Some(rng.gen_range(0..c))
                }
            })
            .collect();
        records.push(RawRecord {
            user: format!("u{}", rng.gen_range(0..m)),
            item: format!("i{}", rng.gen_range(0..n)),
            ctx,
            amplitude: if rng.gen_bool(0.2) { 2.0 } else { 1.0 },
        });
    }
    InteractionTensor::from_records(&records, &schema).unwrap()
}

fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in &mut m.data {
        *v = rng.gen_range(-scale..scale);
    }
    m
}

/// A model at a generic point: random user/item/context factors (not at the
/// regularization targets), matching the tensor's training layout.
pub fn random_model(
    seed: u64,
    t: &InteractionTensor,
    kind: ModelKind,
    hp: &Hyperparams,
) -> FactorModel {
    let mut rng = StdRng::seed_from_u64(seed);
    let k = hp.k;
    let contexts = t
        .schema
        .features
        .iter()
        .map(|f| match kind {
            ModelKind::Ttf => ContextBlock::Matrices(
                (0..f.cardinality)
                    .map(|_| random_matrix(&mut rng, k, k, 0.8))
                    .collect(),
            ),
            _ => ContextBlock::Vectors(random_matrix(&mut rng, f.cardinality, k, 0.8)),
        })
        .collect();
    FactorModel {
        kind,
        reg_mode: hp.reg_mode,
        structure: hp.structure,
        hyperparams: hp.clone(),
        schema: t
            .original_schema
            .clone()
            .unwrap_or_else(|| t.schema.clone()),
        user_factors: random_matrix(&mut rng, t.m, k, 0.8),
        item_factors: random_matrix(&mut rng, t.n, k, 0.8),
        contexts,
    }
}

pub fn hp_for(k: usize, kind: ModelKind, reg_mode: RegMode, structure: Structure) -> Hyperparams {
    let _ = kind;
    Hyperparams {
        k,
        alpha: 8.0,
        lambda: 0.1,
        nu: 0.5,
        iterations: 4,
        cg_steps: 3,
        reg_mode,
        structure,
        solver: tenrec::models::SolverKind::Exact,
    }
}

pub fn assert_rows_close(got: &[f64], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length mismatch");
    for (idx, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(
            (g - w).abs() <= tol,
            "{what}: component {idx} differs: {g} vs {w} (tol {tol})"
        );
    }
}
