//! ALS driver: initialization, block-update scheduling, post-hoc context
//! fitting and the stack/collapse dispatch used before training.

use std::borrow::Cow;

use log::debug;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::models::{
    cp, pitf, ttf, Block, ContextBlock, FactorModel, Hyperparams, ModelKind, RegMode, Structure,
};
use crate::tensor::InteractionTensor;

/// Entry indices grouped by user, item and context value, plus the per-row
/// weight sums that drive frequency-based regularization.
pub(crate) struct Grouped {
    pub by_user: Vec<Vec<usize>>,
    pub by_item: Vec<Vec<usize>>,
    /// `[feature][value] -> entry indices` (entries with a missing value for
    /// the feature belong to no value group).
    pub by_ctx: Vec<Vec<Vec<usize>>>,
    pub ws_user: Vec<f64>,
    pub ws_item: Vec<f64>,
    pub ws_ctx: Vec<Vec<f64>>,
}

impl Grouped {
    pub fn build(t: &InteractionTensor, alpha: f64) -> Self {
        let d = t.schema.d();
        let mut by_user = vec![Vec::new(); t.m];
        let mut by_item = vec![Vec::new(); t.n];
        let mut by_ctx: Vec<Vec<Vec<usize>>> = t
            .schema
            .features
            .iter()
            .map(|f| vec![Vec::new(); f.cardinality])
            .collect();

        for (idx, e) in t.entries.iter().enumerate() {
            by_user[e.user].push(idx);
            by_item[e.item].push(idx);
            for f in 0..d {
                if let Some(c) = e.ctx[f] {
                    by_ctx[f][c].push(idx);
                }
            }
        }

        // Extended cardinalities count the virtual slot that holds
        // missing-context observations.
        let ext: Vec<f64> = t
            .schema
            .features
            .iter()
            .map(|f| (f.cardinality + usize::from(f.allows_missing)) as f64)
            .collect();
        let ctx_cells: f64 = ext.iter().product();
        let m = t.m as f64;
        let n = t.n as f64;

        let amp_sum = |indices: &[usize]| -> f64 {
            indices.iter().map(|&i| t.entries[i].amplitude).sum()
        };

        let ws_user: Vec<f64> = by_user
            .iter()
            .map(|idx| n * ctx_cells + alpha * amp_sum(idx))
            .collect();
        let ws_item: Vec<f64> = by_item
            .iter()
            .map(|idx| m * ctx_cells + alpha * amp_sum(idx))
            .collect();
        let ws_ctx: Vec<Vec<f64>> = by_ctx
            .iter()
            .enumerate()
            .map(|(f, values)| {
                let others: f64 = ext
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .map(|(_, v)| v)
                    .product();
                values
                    .iter()
                    .map(|idx| m * n * others + alpha * amp_sum(idx))
                    .collect()
            })
            .collect();

        Grouped {
            by_user,
            by_item,
            by_ctx,
            ws_user,
            ws_item,
            ws_ctx,
        }
    }
}

fn validate_kind_structure(
    t: &InteractionTensor,
    hp: &Hyperparams,
    kind: ModelKind,
) -> Result<()> {
    hp.validate()?;
    let d = t.schema.d();
    match kind {
        ModelKind::Wmf => {
            if d != 0 {
                return Err(Error::UnsupportedStructure(
                    "WMF expects a context-free matrix view; collapse contexts first".into(),
                ));
            }
        }
        ModelKind::Pitf => {
            if hp.structure == Structure::MultiD {
                return Err(Error::UnsupportedStructure(
                    "PITF supports only the stacked / three-dimensional structure".into(),
                ));
            }
            if d != 1 {
                return Err(Error::UnsupportedStructure(format!(
                    "PITF needs exactly one context dimension, tensor has {d}; stack first"
                )));
            }
        }
        ModelKind::Ttf => {
            if hp.structure == Structure::MultiD {
                return Err(Error::UnsupportedStructure(
                    "multidimensional TTF is not supported".into(),
                ));
            }
            if d != 1 {
                return Err(Error::UnsupportedStructure(format!(
                    "TTF needs exactly one context dimension, tensor has {d}; stack first"
                )));
            }
        }
        ModelKind::Cp => {
            if hp.structure == Structure::Stacked3d && d > 1 {
                return Err(Error::UnsupportedStructure(format!(
                    "stacked CP needs at most one context dimension, tensor has {d}; stack first"
                )));
            }
            if hp.structure == Structure::MultiD && t.original_schema.is_some() {
                return Err(Error::UnsupportedStructure(
                    "multidimensional CP must train on the unstacked tensor".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Initializes a model: user/item entries i.i.d. uniform in
/// `[-0.1/sqrt(k), 0.1/sqrt(k)]`, context factors at their regularization
/// target so training starts from "no context effect".
pub(crate) fn init_model(
    t: &InteractionTensor,
    hp: &Hyperparams,
    kind: ModelKind,
    seed: u64,
) -> Result<FactorModel> {
    validate_kind_structure(t, hp, kind)?;
    let k = hp.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.1 / (k as f64).sqrt();

    let mut user_factors = DenseMatrix::zeros(t.m, k);
    for v in &mut user_factors.data {
        *v = rng.gen_range(-scale..=scale);
    }
    let mut item_factors = DenseMatrix::zeros(t.n, k);
    for v in &mut item_factors.data {
        *v = rng.gen_range(-scale..=scale);
    }

    let contexts: Vec<ContextBlock> = t
        .schema
        .features
        .iter()
        .map(|f| match kind {
            ModelKind::Ttf => {
                let target = match hp.reg_mode {
                    RegMode::One => DenseMatrix::identity(k),
                    RegMode::Zero => DenseMatrix::zeros(k, k),
                };
                ContextBlock::Matrices(vec![target; f.cardinality])
            }
            ModelKind::Cp => {
                let fill = match hp.reg_mode {
                    RegMode::One => 1.0,
                    RegMode::Zero => 0.0,
                };
                ContextBlock::Vectors(DenseMatrix::filled(f.cardinality, k, fill))
            }
            // PITF's identity element is zero regardless of mode.
            _ => ContextBlock::Vectors(DenseMatrix::zeros(f.cardinality, k)),
        })
        .collect();

    let schema = t
        .original_schema
        .clone()
        .unwrap_or_else(|| t.schema.clone());

    Ok(FactorModel {
        kind,
        reg_mode: hp.reg_mode,
        structure: hp.structure,
        hyperparams: hp.clone(),
        schema,
        user_factors,
        item_factors,
        contexts,
    })
}

pub(crate) fn update_block_grouped(
    t: &InteractionTensor,
    grouped: &Grouped,
    model: &mut FactorModel,
    hp: &Hyperparams,
    block: Block,
) -> Result<()> {
    model.check_against(t)?;
    match model.kind {
        ModelKind::Cp | ModelKind::Wmf => cp::update_block_grouped(t, grouped, model, hp, block),
        ModelKind::Pitf => pitf::update_block_grouped(t, grouped, model, hp, block),
        ModelKind::Ttf => match block {
            Block::Context(f) => {
                let values = grouped.by_ctx[f].len();
                for c in 0..values {
                    ttf::update_context_grouped(t, grouped, model, hp, c, hp.solver)?;
                }
                Ok(())
            }
            _ => ttf::update_users_items_grouped(t, grouped, model, hp, block),
        },
    }
}

fn block_schedule(d: usize) -> Vec<Block> {
    let mut blocks = vec![Block::Users, Block::Items];
    blocks.extend((0..d).map(Block::Context));
    blocks
}

/// Trains a model with ALS: `iterations` sweeps over the blocks in the
/// order users, items, contexts.
pub fn als_train(
    t: &InteractionTensor,
    hp: &Hyperparams,
    kind: ModelKind,
    seed: u64,
) -> Result<FactorModel> {
    als_train_observed(t, hp, kind, seed, |_, _, _| {})
}

/// [`als_train`] with an observer invoked after every block update, used for
/// per-half-step diagnostics and monotonicity checks.
pub fn als_train_observed<F>(
    t: &InteractionTensor,
    hp: &Hyperparams,
    kind: ModelKind,
    seed: u64,
    mut on_block: F,
) -> Result<FactorModel>
where
    F: FnMut(&FactorModel, usize, Block),
{
    let mut model = init_model(t, hp, kind, seed)?;
    let grouped = Grouped::build(t, hp.alpha);
    let blocks = block_schedule(t.schema.d());

    for sweep in 0..hp.iterations {
        for &block in &blocks {
            update_block_grouped(t, &grouped, &mut model, hp, block)?;
            on_block(&model, sweep, block);
        }
        if log::log_enabled!(log::Level::Debug) {
            let observed = observed_loss_part(&model, t, hp);
            if crate::models::loss::cell_grid_size(t) <= crate::models::DESK_SCALE_CELL_LIMIT {
                let full = crate::models::loss(&model, t, hp)?;
                debug!("sweep {sweep}: observed-part loss {observed:.6e}, exact loss {full:.6e}");
            } else {
                debug!("sweep {sweep}: observed-part loss {observed:.6e}");
            }
        }
    }
    Ok(model)
}

/// Cheap diagnostic: weighted squared error over observed entries only.
fn observed_loss_part(model: &FactorModel, t: &InteractionTensor, hp: &Hyperparams) -> f64 {
    t.entries
        .iter()
        .map(|e| {
            let w = 1.0 + hp.alpha * e.amplitude;
            let r = 1.0 - model.predict_entry(e.user, e.item, &e.ctx);
            w * r * r
        })
        .sum()
}

/// Applies the transformation a model kind and structure expect: collapse
/// contexts for WMF, stack multiple features for the 3D structures.
pub fn prepare_tensor<'a>(
    t: &'a InteractionTensor,
    hp: &Hyperparams,
    kind: ModelKind,
) -> Cow<'a, InteractionTensor> {
    match kind {
        ModelKind::Wmf => {
            if t.schema.d() == 0 {
                Cow::Borrowed(t)
            } else {
                Cow::Owned(t.collapse_contexts())
            }
        }
        _ if hp.structure == Structure::Stacked3d && t.schema.d() > 1 => Cow::Owned(t.stack()),
        _ => Cow::Borrowed(t),
    }
}

/// Convenience entry point: prepares the tensor for the kind/structure and
/// trains.
pub fn fit(
    t: &InteractionTensor,
    hp: &Hyperparams,
    kind: ModelKind,
    seed: u64,
) -> Result<FactorModel> {
    let prepared = prepare_tensor(t, hp, kind);
    als_train(&prepared, hp, kind, seed)
}

/// Learns context factors against frozen, context-unaware user/item factors.
///
/// `base` supplies `P` and `Q`, which are copied and never modified. Context
/// blocks start at their regularization target and are updated for one sweep
/// (three for multidimensional CP, to let dependent context dimensions
/// settle). The tensor must already be prepared for the target structure.
pub fn posthoc_context_fit(
    base: &FactorModel,
    t: &InteractionTensor,
    hp: &Hyperparams,
    kind: ModelKind,
) -> Result<FactorModel> {
    if base.k() != hp.k {
        return Err(Error::KMismatch {
            base: base.k(),
            requested: hp.k,
        });
    }
    if base.m() != t.m || base.n() != t.n {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} base factors", base.m(), base.n()),
            got: format!("{}x{} tensor", t.m, t.n),
        });
    }

    let mut model = init_model(t, hp, kind, 0)?;
    model.user_factors = base.user_factors.clone();
    model.item_factors = base.item_factors.clone();

    let sweeps = if kind == ModelKind::Cp && hp.structure == Structure::MultiD && t.schema.d() > 1 {
        3
    } else {
        1
    };
    let grouped = Grouped::build(t, hp.alpha);
    for _ in 0..sweeps {
        for f in 0..t.schema.d() {
            update_block_grouped(t, &grouped, &mut model, hp, Block::Context(f))?;
        }
    }
    Ok(model)
}
