//! The model family: CP, PITF and TTF decompositions of the weighted
//! interaction tensor, together with the context-unaware WMF special case.
//!
//! All models minimize the same weighted square loss, where observed cells
//! carry confidence `1 + alpha * amplitude` and unobserved cells weigh one,
//! plus per-row regularization pulling each factor towards its target. The
//! targets differ per decomposition and regularization mode:
//!
//! | kind | `zero` mode | `one` mode |
//! |------|-------------|------------|
//! | CP   | zero vector | ones vector |
//! | PITF | zero vector | zero vector (modes coincide) |
//! | TTF  | zero matrix | identity matrix |
//!
//! Missing context values are never learned; they use a static default
//! factor equal to the regularization target.
//!
//! Training is alternating least squares: each block update sets every row
//! of the block to the exact minimizer of the loss given the other blocks.

mod io;
mod loss;
mod predict;
mod train;

pub mod cp;
pub mod pitf;
pub mod ttf;

pub use io::{load_factor_model, load_model, save_model, SavedModel};
pub use loss::{loss, reg_strength, DESK_SCALE_CELL_LIMIT};
pub use predict::{predict_cp, predict_pitf, predict_ttf, Scorer};
pub use train::{als_train, als_train_observed, fit, posthoc_context_fit, prepare_tensor};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::tensor::{ContextSchema, InteractionTensor};

/// Decomposition family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Elementwise product of factor vectors (iTALS / iTALSs).
    Cp,
    /// Sum of pairwise dot products (iTALSx).
    Pitf,
    /// Context values as full `k x k` matrices (WTF).
    Ttf,
    /// Context-unaware weighted matrix factorization; CP with no contexts.
    Wmf,
}

/// Regularization target for context factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegMode {
    /// Pull context factors towards the origin.
    Zero,
    /// Pull context factors towards the decomposition's multiplicative
    /// identity (ones vector for CP, identity matrix for TTF).
    One,
}

/// How multiple context features enter the tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// All context features stacked into a single dimension; inference
    /// averages per-feature slice predictions.
    #[serde(rename = "stacked")]
    Stacked3d,
    /// One tensor dimension per context feature (CP only).
    #[serde(rename = "multi")]
    MultiD,
}

/// Solver for the TTF context equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Vectorized `k^2 x k^2` direct solve.
    Exact,
    /// Matrix-free conjugate gradient with warm start.
    Cg,
}

/// Parameter block selector for ALS updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Users,
    Items,
    /// Context feature index (0 for stacked models).
    Context(usize),
}

/// Training hyperparameters shared by all models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Latent dimension.
    pub k: usize,
    /// Positive-weight multiplier in `W = 1 + alpha * X`.
    pub alpha: f64,
    /// Base regularization.
    pub lambda: f64,
    /// Frequency exponent in `lambda * (sum of weights)^nu`.
    pub nu: f64,
    /// Number of ALS sweeps.
    pub iterations: usize,
    /// CG steps for the TTF context equation.
    pub cg_steps: usize,
    pub reg_mode: RegMode,
    pub structure: Structure,
    pub solver: SolverKind,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            k: 80,
            alpha: 40.0,
            lambda: 1e-2,
            nu: 0.0,
            iterations: 10,
            cg_steps: 3,
            reg_mode: RegMode::One,
            structure: Structure::Stacked3d,
            solver: SolverKind::Cg,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::SchemaViolation("k must be at least 1".into()));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::SchemaViolation("alpha must be nonnegative".into()));
        }
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(Error::SchemaViolation("lambda must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::SchemaViolation("nu must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-feature container of context factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContextBlock {
    /// One row vector per context value (CP, PITF).
    Vectors(DenseMatrix),
    /// One `k x k` matrix per context value (TTF).
    Matrices(Vec<DenseMatrix>),
}

impl ContextBlock {
    pub fn len(&self) -> usize {
        match self {
            ContextBlock::Vectors(m) => m.rows,
            ContextBlock::Matrices(ms) => ms.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A trained decomposition: user matrix, item matrix and context factors.
///
/// `schema` is the inference schema. For stacked models it is the original
/// multi-feature schema, while the single `contexts` block covers the stacked
/// dimension; per-feature values are mapped onto it via stacked offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub kind: ModelKind,
    pub reg_mode: RegMode,
    pub structure: Structure,
    pub hyperparams: Hyperparams,
    pub schema: ContextSchema,
    /// `m x k` user factors.
    pub user_factors: DenseMatrix,
    /// `n x k` item factors.
    pub item_factors: DenseMatrix,
    /// One block per training-tensor context feature.
    pub contexts: Vec<ContextBlock>,
}

impl FactorModel {
    pub fn m(&self) -> usize {
        self.user_factors.rows
    }

    pub fn n(&self) -> usize {
        self.item_factors.rows
    }

    pub fn k(&self) -> usize {
        self.user_factors.cols
    }

    /// Default vector substituted for missing context values (CP/PITF).
    pub fn default_vector(&self) -> Vec<f64> {
        let k = self.k();
        match (self.kind, self.reg_mode) {
            (ModelKind::Cp | ModelKind::Wmf, RegMode::One) => vec![1.0; k],
            // PITF's pairwise identity element is the zero vector, so the
            // modes coincide and the default is always zero.
            _ => vec![0.0; k],
        }
    }

    /// Default matrix substituted for missing context values (TTF).
    pub fn default_matrix(&self) -> DenseMatrix {
        match self.reg_mode {
            RegMode::One => DenseMatrix::identity(self.k()),
            RegMode::Zero => DenseMatrix::zeros(self.k(), self.k()),
        }
    }

    /// Checks that the model factors match a training tensor's dimensions.
    pub(crate) fn check_against(&self, t: &InteractionTensor) -> Result<()> {
        if self.m() != t.m || self.n() != t.n {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} users/items", self.m(), self.n()),
                got: format!("{}x{}", t.m, t.n),
            });
        }
        if self.contexts.len() != t.schema.d() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} context blocks", self.contexts.len()),
                got: format!("{} tensor features", t.schema.d()),
            });
        }
        for (block, feature) in self.contexts.iter().zip(&t.schema.features) {
            if block.len() != feature.cardinality {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} context values", block.len()),
                    got: format!(
                        "cardinality {} for feature '{}'",
                        feature.cardinality, feature.name
                    ),
                });
            }
            let variant_ok = match (self.kind, block) {
                (ModelKind::Ttf, ContextBlock::Matrices(_)) => true,
                (ModelKind::Ttf, ContextBlock::Vectors(_)) => false,
                (_, ContextBlock::Vectors(_)) => true,
                (_, ContextBlock::Matrices(_)) => false,
            };
            if !variant_ok {
                return Err(Error::ShapeMismatch {
                    expected: format!("context factor layout of a {:?} model", self.kind),
                    got: format!("mismatched layout for feature '{}'", feature.name),
                });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors.is_finite()
            && self.item_factors.is_finite()
            && self.contexts.iter().all(|b| match b {
                ContextBlock::Vectors(m) => m.is_finite(),
                ContextBlock::Matrices(ms) => ms.iter().all(|m| m.is_finite()),
            })
    }
}

/// Dispatches a block update to the model's decomposition family.
pub fn update_block(
    t: &InteractionTensor,
    model: &mut FactorModel,
    hp: &Hyperparams,
    block: Block,
) -> Result<()> {
    let grouped = train::Grouped::build(t, hp.alpha);
    train::update_block_grouped(t, &grouped, model, hp, block)
}
