//! Context-unaware reference models: weighted matrix factorization and
//! item-item cosine similarity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{als_train, FactorModel, Hyperparams, ModelKind, Scorer};
use crate::tensor::InteractionTensor;

/// Trains WMF on the user-item matrix view of `t` (contexts collapsed,
/// duplicate pairs aggregated). This is exactly CP with zero context
/// dimensions.
pub fn wmf_train(t: &InteractionTensor, hp: &Hyperparams, seed: u64) -> Result<FactorModel> {
    if t.schema.d() == 0 {
        als_train(t, hp, ModelKind::Wmf, seed)
    } else {
        als_train(&t.collapse_contexts(), hp, ModelKind::Wmf, seed)
    }
}

/// Item-based nearest-neighbor model over the binary user-item matrix.
///
/// `sim(i, j) = |U_i intersect U_j| / sqrt(|U_i| * |U_j|)` (cosine of binary
/// occurrence vectors), with the diagonal excluded and each item keeping at
/// most `neighbor_cap` neighbors. Scores sum an item's similarity to the
/// user's history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityModel {
    pub n_items: usize,
    pub neighbor_cap: usize,
    /// Top-N neighbors per item as `(item, similarity)`, similarity
    /// descending, ties by ascending item index.
    pub neighbors: Vec<Vec<(usize, f64)>>,
    /// Training histories (distinct items per user) used for scoring.
    pub histories: Vec<Vec<usize>>,
}

/// Builds the pruned item-item cosine similarity model.
pub fn itemknn_train(t: &InteractionTensor, neighbor_cap: usize) -> SimilarityModel {
    let matrix = if t.schema.d() == 0 {
        t.clone()
    } else {
        t.collapse_contexts()
    };
    let histories = matrix.user_histories();

    let mut item_users: Vec<Vec<usize>> = vec![Vec::new(); matrix.n];
    for (u, hist) in histories.iter().enumerate() {
        for &i in hist {
            item_users[i].push(u);
        }
    }
    let counts: Vec<usize> = item_users.iter().map(|us| us.len()).collect();

    let neighbors: Vec<Vec<(usize, f64)>> = (0..matrix.n)
        .into_par_iter()
        .map(|i| {
            if counts[i] == 0 {
                return Vec::new();
            }
            let mut co = vec![0usize; matrix.n];
            for &u in &item_users[i] {
                for &j in &histories[u] {
                    co[j] += 1;
                }
            }
            let mut sims: Vec<(usize, f64)> = co
                .iter()
                .enumerate()
                .filter(|&(j, &c)| j != i && c > 0)
                .map(|(j, &c)| {
                    let sim = c as f64 / ((counts[i] * counts[j]) as f64).sqrt();
                    (j, sim)
                })
                .collect();
            sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            sims.truncate(neighbor_cap);
            sims
        })
        .collect();

    SimilarityModel {
        n_items: matrix.n,
        neighbor_cap,
        neighbors,
        histories,
    }
}

impl SimilarityModel {
    /// Pruned similarity lookup (0 when `j` fell outside `i`'s top-N).
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i]
            .iter()
            .find(|(nj, _)| *nj == j)
            .map_or(0.0, |(_, s)| *s)
    }
}

impl Scorer for SimilarityModel {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_items(&self, u: usize, _ctx: &[Option<usize>], exclude: &[usize]) -> Vec<f64> {
        let mut in_history = vec![false; self.n_items];
        for &j in &self.histories[u] {
            in_history[j] = true;
        }
        let mut scores = vec![0.0; self.n_items];
        for (i, neigh) in self.neighbors.iter().enumerate() {
            let mut acc = 0.0;
            for (j, s) in neigh {
                if in_history[*j] {
                    acc += s;
                }
            }
            scores[i] = acc;
        }
        for &i in exclude {
            if i < self.n_items {
                scores[i] = f64::NEG_INFINITY;
            }
        }
        scores
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ContextSchema, RawRecord};

    fn matrix_from(pairs: &[(&str, &str)]) -> InteractionTensor {
        let records: Vec<RawRecord> = pairs
            .iter()
            .map(|(u, i)| RawRecord {
                user: u.to_string(),
                item: i.to_string(),
                ctx: vec![],
                amplitude: 1.0,
            })
            .collect();
        InteractionTensor::from_records(&records, &ContextSchema::empty()).unwrap()
    }

    #[test]
    fn identical_user_sets_have_similarity_one() {
        let t = matrix_from(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")]);
        let model = itemknn_train(&t, 10);
        let (x, y) = (0, 1);
        assert!((model.similarity(x, y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_user_sets_have_similarity_zero() {
        let t = matrix_from(&[("a", "x"), ("b", "y")]);
        let model = itemknn_train(&t, 10);
        assert_eq!(model.similarity(0, 1), 0.0);
    }

    #[test]
    fn toy_matrix_matches_hand_computed_cosines() {
        // users: a -> {x, y}; b -> {x, y, z}; c -> {z}
        let t = matrix_from(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y"), ("b", "z"), ("c", "z")]);
        let model = itemknn_train(&t, 10);
        let (x, y, z) = (0, 1, 2);
        // |U_x|=2, |U_y|=2, |U_z|=2
        assert!((model.similarity(x, y) - 2.0 / 2.0).abs() < 1e-12);
        assert!((model.similarity(x, z) - 1.0 / 2.0).abs() < 1e-12);
        assert!((model.similarity(y, z) - 1.0 / 2.0).abs() < 1e-12);
        // symmetry of the underlying similarity
        assert_eq!(model.similarity(x, z), model.similarity(z, x));
    }

    #[test]
    fn diagonal_excluded_and_cap_respected() {
        let t = matrix_from(&[("a", "x"), ("a", "y"), ("a", "z"), ("b", "x"), ("b", "y")]);
        let model = itemknn_train(&t, 1);
        for (i, neigh) in model.neighbors.iter().enumerate() {
            assert!(neigh.len() <= 1);
            assert!(neigh.iter().all(|(j, _)| *j != i));
        }
    }

    #[test]
    fn scoring_sums_history_similarities() {
        let t = matrix_from(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "z")]);
        let model = itemknn_train(&t, 10);
        let scores = model.score_items(0, &[], &[]);
        let expected_z = model.similarity(2, 0) + model.similarity(2, 1);
        assert!((scores[2] - expected_z).abs() < 1e-12);
    }
}
