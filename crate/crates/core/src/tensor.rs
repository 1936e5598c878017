//! Sparse representation of the binary interaction tensor and its confidence
//! weights, plus the structure transformations used before training:
//! stacking context features into one dimension, collapsing contexts to a
//! user-item matrix, and leave-one-out train/test splitting.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One context feature: a categorical variable attached to interactions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextFeature {
    pub name: String,
    /// Number of distinct values.
    pub cardinality: usize,
    /// Whether interactions may omit a value for this feature.
    pub allows_missing: bool,
}

/// Ordered list of context features with stacked-offset bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSchema {
    pub features: Vec<ContextFeature>,
}

impl ContextSchema {
    pub fn new(features: Vec<ContextFeature>) -> Result<Self> {
        let mut names = std::collections::HashSet::new();
        for f in &features {
            if f.cardinality == 0 {
                return Err(Error::SchemaViolation(format!(
                    "feature '{}' has zero cardinality",
                    f.name
                )));
            }
            if !names.insert(f.name.clone()) {
                return Err(Error::SchemaViolation(format!(
                    "duplicate feature name '{}'",
                    f.name
                )));
            }
        }
        Ok(ContextSchema { features })
    }

    /// Schema with no context features (plain user-item matrix).
    pub fn empty() -> Self {
        ContextSchema { features: vec![] }
    }

    /// Convenience constructor for tests and fixtures.
    pub fn with_cardinalities(cards: &[usize]) -> Self {
        let features = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| ContextFeature {
                name: format!("ctx{i}"),
                cardinality: c,
                allows_missing: false,
            })
            .collect();
        ContextSchema { features }
    }

    /// Number of context features `d`.
    pub fn d(&self) -> usize {
        self.features.len()
    }

    /// Offset of feature `f` in the stacked dimension: sum of the
    /// cardinalities of all preceding features.
    pub fn stacked_offset(&self, f: usize) -> usize {
        self.features[..f].iter().map(|x| x.cardinality).sum()
    }

    /// Total stacked dimension size `l = sum of cardinalities`.
    pub fn stacked_size(&self) -> usize {
        self.features.iter().map(|x| x.cardinality).sum()
    }

    fn check_ctx(&self, ctx: &[Option<usize>]) -> Result<()> {
        if ctx.len() != self.d() {
            return Err(Error::SchemaViolation(format!(
                "entry has {} context values, schema has {} features",
                ctx.len(),
                self.d()
            )));
        }
        for (f, v) in ctx.iter().enumerate() {
            match v {
                Some(v) if *v >= self.features[f].cardinality => {
                    return Err(Error::SchemaViolation(format!(
                        "value {} out of range for feature '{}' (cardinality {})",
                        v, self.features[f].name, self.features[f].cardinality
                    )));
                }
                None if !self.features[f].allows_missing => {
                    return Err(Error::SchemaViolation(format!(
                        "feature '{}' does not allow missing values",
                        self.features[f].name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// A single positive interaction at a full tensor coordinate.
///
/// `ctx[f] == None` marks a missing value for feature `f`. The amplitude is
/// the aggregated strength of the signal at this coordinate; the binary
/// tensor entry itself is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub user: usize,
    pub item: usize,
    pub ctx: Vec<Option<usize>>,
    pub amplitude: f64,
}

/// Raw interaction record before user/item reindexing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub ctx: Vec<Option<usize>>,
    pub amplitude: f64,
}

/// Sparse coordinate list of positive interactions over
/// `(user, item, context_1..context_d)`.
///
/// All absent coordinates are zeros of the binary tensor. Construction
/// aggregates duplicate coordinates by summing amplitudes and reindexes
/// users/items to dense 0-based integers; the original ids are retained for
/// reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTensor {
    pub m: usize,
    pub n: usize,
    pub schema: ContextSchema,
    pub entries: Vec<Entry>,
    /// Original user ids by dense index.
    pub user_ids: Vec<String>,
    /// Original item ids by dense index.
    pub item_ids: Vec<String>,
    /// Pre-stacking schema, set by [`InteractionTensor::stack`] so that
    /// inference can map per-feature context values onto stacked offsets.
    pub original_schema: Option<ContextSchema>,
}

/// Confidence weight of a tensor cell: `1 + alpha * x * amplitude`.
///
/// Unobserved cells (`x = 0`) always weigh one; `amplitude = 1` recovers the
/// constant positive weight `1 + alpha`.
pub fn confidence_weight(x: u8, alpha: f64, amplitude: f64) -> f64 {
    1.0 + alpha * f64::from(x) * amplitude
}

impl InteractionTensor {
    /// Builds a tensor from raw records: dense-contiguous reindexing of users
    /// and items in order of first appearance, duplicate coordinates
    /// aggregated by amplitude sum.
    pub fn from_records(records: &[RawRecord], schema: &ContextSchema) -> Result<Self> {
        let mut user_index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut item_index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut agg: BTreeMap<(usize, usize, Vec<Option<usize>>), f64> = BTreeMap::new();

        for rec in records {
            schema.check_ctx(&rec.ctx)?;
            let u = *user_index.entry(&rec.user).or_insert_with(|| {
                user_ids.push(rec.user.clone());
                user_ids.len() - 1
            });
            let i = *item_index.entry(&rec.item).or_insert_with(|| {
                item_ids.push(rec.item.clone());
                item_ids.len() - 1
            });
            *agg.entry((u, i, rec.ctx.clone())).or_insert(0.0) += rec.amplitude;
        }

        let mut entries: Vec<Entry> = agg
            .into_iter()
            .map(|((user, item, ctx), amplitude)| Entry {
                user,
                item,
                ctx,
                amplitude,
            })
            .collect();
        entries.sort_by(|a, b| {
            (a.user, a.item, &a.ctx).cmp(&(b.user, b.item, &b.ctx))
        });

        Ok(InteractionTensor {
            m: user_ids.len(),
            n: item_ids.len(),
            schema: schema.clone(),
            entries,
            user_ids,
            item_ids,
            original_schema: None,
        })
    }

    /// Entry count `p`.
    pub fn p(&self) -> usize {
        self.entries.len()
    }

    pub fn total_amplitude(&self) -> f64 {
        self.entries.iter().map(|e| e.amplitude).sum()
    }

    /// Ordered list of distinct items each user interacted with.
    pub fn user_histories(&self) -> Vec<Vec<usize>> {
        let mut hist = vec![Vec::new(); self.m];
        for e in &self.entries {
            hist[e.user].push(e.item);
        }
        for h in &mut hist {
            h.sort_unstable();
            h.dedup();
        }
        hist
    }

    fn with_entries(&self, mut entries: Vec<Entry>) -> Self {
        entries.sort_by(|a, b| (a.user, a.item, &a.ctx).cmp(&(b.user, b.item, &b.ctx)));
        InteractionTensor {
            m: self.m,
            n: self.n,
            schema: self.schema.clone(),
            entries,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            original_schema: self.original_schema.clone(),
        }
    }

    /// Stacks all context features into a single dimension of size
    /// `l = sum of cardinalities`.
    ///
    /// Each entry with `v` non-missing features maps to `v` stacked entries at
    /// `offset(f) + value`; missing features yield no stacked entry. Stacked
    /// coordinates that collide aggregate amplitude. The pre-stacking schema
    /// is retained in `original_schema` for inference.
    pub fn stack(&self) -> Self {
        assert!(self.schema.d() >= 1, "stack requires at least one feature");
        let stacked_schema = ContextSchema {
            features: vec![ContextFeature {
                name: "stacked".to_string(),
                cardinality: self.schema.stacked_size(),
                allows_missing: false,
            }],
        };

        let mut agg: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for e in &self.entries {
            for (f, v) in e.ctx.iter().enumerate() {
                if let Some(v) = v {
                    let c = self.schema.stacked_offset(f) + v;
                    *agg.entry((e.user, e.item, c)).or_insert(0.0) += e.amplitude;
                }
            }
        }
        let entries = agg
            .into_iter()
            .map(|((user, item, c), amplitude)| Entry {
                user,
                item,
                ctx: vec![Some(c)],
                amplitude,
            })
            .collect();

        InteractionTensor {
            m: self.m,
            n: self.n,
            schema: stacked_schema,
            entries,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            original_schema: Some(
                self.original_schema
                    .clone()
                    .unwrap_or_else(|| self.schema.clone()),
            ),
        }
    }

    /// Collapses all contexts into a user-item matrix view: duplicate
    /// `(user, item)` pairs aggregate amplitude, context features drop.
    /// The pre-collapse schema is retained in `original_schema` so models
    /// trained on the view still accept (and ignore) the dataset's context.
    pub fn collapse_contexts(&self) -> Self {
        let mut agg: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in &self.entries {
            *agg.entry((e.user, e.item)).or_insert(0.0) += e.amplitude;
        }
        let entries = agg
            .into_iter()
            .map(|((user, item), amplitude)| Entry {
                user,
                item,
                ctx: vec![],
                amplitude,
            })
            .collect();
        let original_schema = if self.schema.d() == 0 {
            self.original_schema.clone()
        } else {
            Some(
                self.original_schema
                    .clone()
                    .unwrap_or_else(|| self.schema.clone()),
            )
        };
        InteractionTensor {
            m: self.m,
            n: self.n,
            schema: ContextSchema::empty(),
            entries,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            original_schema,
        }
    }

    /// Leave-one-out split: every user with at least two entries contributes
    /// exactly one uniformly chosen entry to the test set. Deterministic for
    /// a given seed.
    pub fn leave_one_out_split(&self, seed: u64) -> SplitPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); self.m];
        for (idx, e) in self.entries.iter().enumerate() {
            per_user[e.user].push(idx);
        }

        let mut held_out = vec![false; self.entries.len()];
        let mut test = Vec::new();
        for indices in &per_user {
            if indices.len() < 2 {
                continue;
            }
            let pick = indices[rng.gen_range(0..indices.len())];
            held_out[pick] = true;
            let e = &self.entries[pick];
            test.push(HeldOut {
                user: e.user,
                item: e.item,
                ctx: e.ctx.clone(),
            });
        }

        let train_entries = self
            .entries
            .iter()
            .enumerate()
            .filter(|(idx, _)| !held_out[*idx])
            .map(|(_, e)| e.clone())
            .collect();

        SplitPair {
            train: self.with_entries(train_entries),
            test,
        }
    }
}

/// A held-out test interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub user: usize,
    pub item: usize,
    pub ctx: Vec<Option<usize>>,
}

/// Train tensor plus the held-out test triples, one per eligible user.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: InteractionTensor,
    pub test: Vec<HeldOut>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(user: &str, item: &str, ctx: Vec<Option<usize>>) -> RawRecord {
        RawRecord {
            user: user.to_string(),
            item: item.to_string(),
            ctx,
            amplitude: 1.0,
        }
    }

    #[test]
    fn duplicates_aggregate_amplitude() {
        let schema = ContextSchema::with_cardinalities(&[2]);
        let records = vec![rec("a", "x", vec![Some(1)]), rec("a", "x", vec![Some(1)])];
        let t = InteractionTensor::from_records(&records, &schema).unwrap();
        assert_eq!(t.p(), 1);
        assert_eq!(t.entries[0].amplitude, 2.0);
    }

    #[test]
    fn empty_records() {
        let schema = ContextSchema::with_cardinalities(&[3]);
        let t = InteractionTensor::from_records(&[], &schema).unwrap();
        assert_eq!((t.m, t.n, t.p()), (0, 0, 0));
    }

    #[test]
    fn out_of_range_context_rejected() {
        let schema = ContextSchema::with_cardinalities(&[2]);
        let err = InteractionTensor::from_records(&[rec("a", "x", vec![Some(2)])], &schema);
        assert!(matches!(err, Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn missing_requires_allows_missing() {
        let schema = ContextSchema::with_cardinalities(&[2]);
        let err = InteractionTensor::from_records(&[rec("a", "x", vec![None])], &schema);
        assert!(matches!(err, Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn confidence_weight_examples() {
        assert_eq!(confidence_weight(0, 40.0, 1.0), 1.0);
        assert_eq!(confidence_weight(1, 40.0, 1.0), 41.0);
        assert_eq!(confidence_weight(1, 10.0, 2.0), 21.0);
    }

    #[test]
    fn stack_offsets() {
        let schema = ContextSchema::with_cardinalities(&[3, 7]);
        let records = vec![rec("u", "i", vec![Some(2), Some(0)])];
        let t = InteractionTensor::from_records(&records, &schema).unwrap();
        let s = t.stack();
        assert_eq!(s.schema.d(), 1);
        assert_eq!(s.schema.features[0].cardinality, 10);
        let coords: Vec<usize> = s.entries.iter().map(|e| e.ctx[0].unwrap()).collect();
        assert_eq!(coords, vec![2, 3]);
    }

    #[test]
    fn stack_skips_missing() {
        let mut schema = ContextSchema::with_cardinalities(&[3, 7]);
        schema.features[0].allows_missing = true;
        let records = vec![rec("u", "i", vec![None, Some(4)])];
        let t = InteractionTensor::from_records(&records, &schema).unwrap();
        let s = t.stack();
        assert_eq!(s.p(), 1);
        assert_eq!(s.entries[0].ctx[0], Some(7));
    }

    #[test]
    fn stack_single_feature_is_identity_on_coordinates() {
        let schema = ContextSchema::with_cardinalities(&[4]);
        let records = vec![rec("u", "i", vec![Some(3)]), rec("u", "j", vec![Some(1)])];
        let t = InteractionTensor::from_records(&records, &schema).unwrap();
        let s = t.stack();
        assert_eq!(s.p(), t.p());
        for (a, b) in s.entries.iter().zip(&t.entries) {
            assert_eq!((a.user, a.item, a.ctx[0]), (b.user, b.item, b.ctx[0]));
        }
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let schema = ContextSchema::with_cardinalities(&[2]);
        let records = vec![
            rec("a", "x", vec![Some(0)]),
            rec("a", "y", vec![Some(1)]),
            rec("a", "z", vec![Some(0)]),
            rec("b", "x", vec![Some(1)]),
        ];
        let t = InteractionTensor::from_records(&records, &schema).unwrap();
        let s1 = t.leave_one_out_split(99);
        let s2 = t.leave_one_out_split(99);
        // user a: 2 in train, 1 in test; user b has a single entry and stays in train
        assert_eq!(s1.test.len(), 1);
        assert_eq!(s1.train.p(), 3);
        assert_eq!(s1.test, s2.test);
        assert_eq!(s1.train.entries, s2.train.entries);
    }

    #[test]
    fn collapse_aggregates_pairs() {
        let schema = ContextSchema::with_cardinalities(&[2]);
        let records = vec![
            rec("a", "x", vec![Some(0)]),
            rec("a", "x", vec![Some(1)]),
            rec("a", "y", vec![Some(0)]),
        ];
        let t = InteractionTensor::from_records(&records, &schema).unwrap();
        let c = t.collapse_contexts();
        assert_eq!(c.schema.d(), 0);
        assert_eq!(c.p(), 2);
        assert_eq!(c.entries[0].amplitude, 2.0);
    }

    prop_compose! {
        fn arb_tensor()(
            seed in 0u64..500,
            m in 1usize..6,
            n in 1usize..6,
            p in 0usize..24,
        ) -> InteractionTensor {
            use rand::{Rng as _, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut schema = ContextSchema::with_cardinalities(&[3, 2]);
            schema.features[1].allows_missing = true;
            let records: Vec<RawRecord> = (0..p).map(|_| RawRecord {
                user: format!("u{}", rng.gen_range(0..m)),
                item: format!("i{}", rng.gen_range(0..n)),
                ctx: vec![
                    Some(rng.gen_range(0..3)),
                    if rng.gen_bool(0.3) { None } else { Some(rng.gen_range(0..2)) },
                ],
                amplitude: 1.0,
            }).collect();
            InteractionTensor::from_records(&records, &schema).unwrap()
        }
    }

    proptest! {
        #[test]
        fn stack_conserves_weighted_event_count(t in arb_tensor()) {
            let expected: f64 = t
                .entries
                .iter()
                .map(|e| e.amplitude * e.ctx.iter().filter(|v| v.is_some()).count() as f64)
                .sum();
            let stacked = t.stack();
            prop_assert!((stacked.total_amplitude() - expected).abs() < 1e-9);
        }

        #[test]
        fn split_partitions_entries(t in arb_tensor(), seed in 0u64..100) {
            let split = t.leave_one_out_split(seed);
            prop_assert_eq!(split.train.p() + split.test.len(), t.p());
            for h in &split.test {
                let in_train = split.train.entries.iter().any(|e| {
                    e.user == h.user && e.item == h.item && e.ctx == h.ctx
                });
                prop_assert!(!in_train, "held-out entry found in train");
            }
        }

        #[test]
        fn build_is_idempotent(t in arb_tensor()) {
            let records: Vec<RawRecord> = t.entries.iter().map(|e| RawRecord {
                user: t.user_ids[e.user].clone(),
                item: t.item_ids[e.item].clone(),
                ctx: e.ctx.clone(),
                amplitude: e.amplitude,
            }).collect();
            let rebuilt = InteractionTensor::from_records(&records, &t.schema).unwrap();
            prop_assert_eq!(rebuilt.p(), t.p());
            prop_assert_eq!(rebuilt.total_amplitude(), t.total_amplitude());
            // Same coordinates modulo index relabeling.
            let key = |t: &InteractionTensor| {
                let mut v: Vec<(String, String, Vec<Option<usize>>, u64)> = t.entries.iter().map(|e| (
                    t.user_ids[e.user].clone(),
                    t.item_ids[e.item].clone(),
                    e.ctx.clone(),
                    e.amplitude.to_bits(),
                )).collect();
                v.sort();
                v
            };
            prop_assert_eq!(key(&rebuilt), key(&t));
        }
    }
}
