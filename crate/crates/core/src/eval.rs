//! Offline evaluation: HR@k / MRR@k over leave-one-out splits, repeated
//! cross-validation and exhaustive grid search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{fit, Hyperparams, ModelKind, Scorer};
use crate::tensor::{InteractionTensor, SplitPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Hr,
    Mrr,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Hr => write!(f, "HR"),
            Metric::Mrr => write!(f, "MRR"),
        }
    }
}

/// 1 if `target` appears within the first `k` ranked items, else 0.
pub fn hr_at_k(ranked: &[usize], target: usize, k: usize) -> f64 {
    if ranked.iter().take(k).any(|&i| i == target) {
        1.0
    } else {
        0.0
    }
}

/// `1 / rank` of `target` if it appears within the first `k` ranked items,
/// else 0.
pub fn mrr_at_k(ranked: &[usize], target: usize, k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .position(|&i| i == target)
        .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
}

/// Top-`k_max` item indices by descending score, ties broken by ascending
/// item index for determinism.
pub fn rank_items(scores: &[f64], k_max: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must not be NaN")
            .then(a.cmp(&b))
    });
    order.truncate(k_max);
    order
}

/// One `(metric, k)` result with its per-repetition raw values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricCell {
    pub metric: Metric,
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub raw: Vec<f64>,
}

/// Per-metric means and standard deviations over repetitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub repetitions: usize,
    pub cells: Vec<MetricCell>,
}

impl EvalReport {
    pub fn get(&self, metric: Metric, k: usize) -> Option<&MetricCell> {
        self.cells.iter().find(|c| c.metric == metric && c.k == k)
    }

    pub fn mean(&self, metric: Metric, k: usize) -> f64 {
        self.get(metric, k).map_or(f64::NAN, |c| c.mean)
    }

    /// Aggregates single-repetition reports into one with mean and sample
    /// standard deviation per cell.
    pub fn aggregate(reports: &[EvalReport]) -> EvalReport {
        assert!(!reports.is_empty());
        let template = &reports[0];
        let reps = reports.len();
        let cells = template
            .cells
            .iter()
            .map(|cell| {
                let raw: Vec<f64> = reports
                    .iter()
                    .map(|r| r.mean(cell.metric, cell.k))
                    .collect();
                let mean = raw.iter().sum::<f64>() / reps as f64;
                let std = if reps > 1 {
                    (raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (reps - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                MetricCell {
                    metric: cell.metric,
                    k: cell.k,
                    mean,
                    std,
                    raw,
                }
            })
            .collect();
        EvalReport {
            repetitions: reps,
            cells,
        }
    }

    /// Tab-separated table with columns metric, k, mean, std; one row per cell.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tk\tmean\tstd\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\n",
                cell.metric, cell.k, cell.mean, cell.std
            ));
        }
        out
    }
}

/// Evaluates a trained model on a leave-one-out split: one ranked list per
/// held-out `(user, context)` pair, metrics averaged over test users.
///
/// Unless `retarget` is set, the user's training items are excluded from the
/// ranking (repeat-consumption datasets set `retarget`).
pub fn evaluate<S: Scorer + Sync>(
    model: &S,
    split: &SplitPair,
    k_list: &[usize],
    retarget: bool,
) -> EvalReport {
    let k_max = k_list.iter().copied().max().unwrap_or(0);
    let histories = split.train.user_histories();

    let per_test: Vec<Vec<f64>> = split
        .test
        .par_iter()
        .map(|held| {
            let exclude: &[usize] = if retarget { &[] } else { &histories[held.user] };
            let scores = model.score_items(held.user, &held.ctx, exclude);
            let ranked = rank_items(&scores, k_max);
            let mut vals = Vec::with_capacity(k_list.len() * 2);
            for &k in k_list {
                vals.push(hr_at_k(&ranked, held.item, k));
            }
            for &k in k_list {
                vals.push(mrr_at_k(&ranked, held.item, k));
            }
            vals
        })
        .collect();

    let count = per_test.len().max(1) as f64;
    let mut cells = Vec::with_capacity(k_list.len() * 2);
    for (slot, &k) in k_list.iter().enumerate() {
        let mean = per_test.iter().map(|v| v[slot]).sum::<f64>() / count;
        cells.push(MetricCell {
            metric: Metric::Hr,
            k,
            mean,
            std: 0.0,
            raw: vec![mean],
        });
    }
    for (slot, &k) in k_list.iter().enumerate() {
        let mean = per_test
            .iter()
            .map(|v| v[k_list.len() + slot])
            .sum::<f64>()
            / count;
        cells.push(MetricCell {
            metric: Metric::Mrr,
            k,
            mean,
            std: 0.0,
            raw: vec![mean],
        });
    }
    EvalReport {
        repetitions: 1,
        cells,
    }
}

/// Repeated leave-one-out evaluation: one split per seed, a fresh model
/// trained on each train side, metrics aggregated with mean and sample
/// standard deviation.
pub fn cross_validate(
    t: &InteractionTensor,
    hp: &Hyperparams,
    kind: ModelKind,
    seeds: &[u64],
    k_list: &[usize],
    retarget: bool,
) -> Result<EvalReport> {
    let reports: Vec<EvalReport> = seeds
        .par_iter()
        .map(|&seed| {
            let split = t.leave_one_out_split(seed);
            let model = fit(&split.train, hp, kind, seed)?;
            Ok(evaluate(&model, &split, k_list, retarget))
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::aggregate(&reports))
}

/// Generic variant of [`cross_validate`] for scorers that are not factor
/// models (e.g. item-item similarity).
pub fn cross_validate_with<S, F>(
    t: &InteractionTensor,
    seeds: &[u64],
    k_list: &[usize],
    retarget: bool,
    train: F,
) -> Result<EvalReport>
where
    S: Scorer + Sync,
    F: Fn(&InteractionTensor, u64) -> Result<S> + Sync,
{
    let reports: Vec<EvalReport> = seeds
        .par_iter()
        .map(|&seed| {
            let split = t.leave_one_out_split(seed);
            let model = train(&split.train, seed)?;
            Ok(evaluate(&model, &split, k_list, retarget))
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::aggregate(&reports))
}

/// Grid-search objective: maximize `metric` at cutoff `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub metric: Metric,
    pub k: usize,
}

/// Candidate lists per hyperparameter; the Cartesian product is swept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    pub base: Hyperparams,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub cg_steps: Vec<usize>,
    pub objective: Objective,
}

impl Grid {
    /// The default grid: `alpha` and `lambda` on coarse log scales, `nu` at
    /// its three natural anchors, and two or three CG steps.
    pub fn default_for(base: Hyperparams, kind: ModelKind) -> Grid {
        let cg_steps = if kind == ModelKind::Ttf {
            vec![2, 3]
        } else {
            vec![base.cg_steps]
        };
        Grid {
            alpha: vec![1.0, 10.0, 40.0, 100.0],
            lambda: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            nu: vec![0.0, 0.5, 1.0],
            cg_steps,
            objective: Objective {
                metric: Metric::Mrr,
                k: 5,
            },
            base,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.alpha.is_empty()
            || self.lambda.is_empty()
            || self.nu.is_empty()
            || self.cg_steps.is_empty()
        {
            return Err(Error::SchemaViolation(
                "grid candidate lists must be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Cartesian product in enumeration order: alpha, lambda, nu, cg_steps
    /// from outermost to innermost.
    pub fn points(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &alpha in &self.alpha {
            for &lambda in &self.lambda {
                for &nu in &self.nu {
                    for &cg_steps in &self.cg_steps {
                        out.push(Hyperparams {
                            alpha,
                            lambda,
                            nu,
                            cg_steps,
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparams: Hyperparams,
    pub objective: f64,
    pub report: EvalReport,
}

/// Exhaustive sweep of the grid on a single leave-one-out split.
///
/// Returns the winning hyperparameters and the full leaderboard sorted by
/// descending objective, ties resolved by grid enumeration order.
pub fn grid_search(
    t: &InteractionTensor,
    grid: &Grid,
    kind: ModelKind,
    seed: u64,
    k_list: &[usize],
    retarget: bool,
) -> Result<(Hyperparams, Vec<GridPoint>)> {
    grid.validate()?;
    let mut k_list = k_list.to_vec();
    if !k_list.contains(&grid.objective.k) {
        k_list.push(grid.objective.k);
    }
    let split = t.leave_one_out_split(seed);

    let points = grid.points();
    let mut leaderboard: Vec<GridPoint> = points
        .par_iter()
        .map(|hp| {
            let model = fit(&split.train, hp, kind, seed)?;
            let report = evaluate(&model, &split, &k_list, retarget);
            Ok(GridPoint {
                hyperparams: hp.clone(),
                objective: report.mean(grid.objective.metric, grid.objective.k),
                report,
            })
        })
        .collect::<Result<_>>()?;

    // Stable sort keeps enumeration order among ties.
    leaderboard.sort_by(|a, b| b.objective.partial_cmp(&a.objective).unwrap());
    let best = leaderboard[0].hyperparams.clone();
    Ok((best, leaderboard))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ContextSchema, HeldOut, InteractionTensor, RawRecord};

    #[test]
    fn hr_examples() {
        let ranked: Vec<usize> = (0..10).collect();
        assert_eq!(hr_at_k(&ranked, 0, 5), 1.0);
        assert_eq!(hr_at_k(&ranked, 5, 5), 0.0); // rank 6
        assert_eq!(hr_at_k(&ranked, 4, 5), 1.0); // rank 5, boundary inclusive
    }

    #[test]
    fn mrr_examples() {
        let ranked: Vec<usize> = (0..30).collect();
        assert_eq!(mrr_at_k(&ranked, 0, 5), 1.0);
        assert_eq!(mrr_at_k(&ranked, 3, 5), 0.25);
        assert_eq!(mrr_at_k(&ranked, 20, 20), 0.0); // rank 21
    }

    #[test]
    fn rank_breaks_ties_by_index() {
        let scores = vec![1.0, 2.0, 2.0, 0.5];
        assert_eq!(rank_items(&scores, 4), vec![1, 2, 0, 3]);
    }

    struct UniformScorer {
        n: usize,
    }

    impl Scorer for UniformScorer {
        fn n_items(&self) -> usize {
            self.n
        }
        fn score_items(&self, _u: usize, _ctx: &[Option<usize>], exclude: &[usize]) -> Vec<f64> {
            let mut s = vec![0.5; self.n];
            for &i in exclude {
                s[i] = f64::NEG_INFINITY;
            }
            s
        }
    }

    fn toy_split(n: usize, users: usize) -> SplitPair {
        // one train entry and one distinct test entry per user
        let schema = ContextSchema::empty();
        let records: Vec<RawRecord> = (0..users)
            .flat_map(|u| {
                vec![RawRecord {
                    user: format!("u{u}"),
                    item: format!("i{}", 2 * u % n),
                    ctx: vec![],
                    amplitude: 1.0,
                }]
            })
            .collect();
        // make sure all n items exist
        let mut records = records;
        for i in 0..n {
            records.push(RawRecord {
                user: "filler".into(),
                item: format!("i{i}"),
                ctx: vec![],
                amplitude: 1.0,
            });
        }
        let train = InteractionTensor::from_records(&records, &schema).unwrap();
        let item_index = |name: &str| train.item_ids.iter().position(|x| x == name).unwrap();
        let test = (0..users)
            .map(|u| HeldOut {
                user: u,
                item: item_index(&format!("i{}", (2 * u + 1) % n)),
                ctx: vec![],
            })
            .collect();
        SplitPair { train, test }
    }

    #[test]
    fn uniform_scores_hit_by_index_tiebreak() {
        // 100 items, all scored equally, retarget on: the ranked list is
        // exactly items 0..k-1, so HR@20 equals the fraction of targets
        // with index < 20.
        let split = toy_split(100, 50);
        let model = UniformScorer { n: 100 };
        let report = evaluate(&model, &split, &[20], true);
        let expected = split
            .test
            .iter()
            .filter(|h| h.item < 20)
            .count() as f64
            / split.test.len() as f64;
        assert!((report.mean(Metric::Hr, 20) - expected).abs() < 1e-12);
    }

    #[test]
    fn mrr_bounded_by_hr_and_monotone_in_k() {
        let split = toy_split(40, 30);
        let model = UniformScorer { n: 40 };
        let report = evaluate(&model, &split, &[5, 20], true);
        assert!(report.mean(Metric::Mrr, 5) <= report.mean(Metric::Hr, 5) + 1e-12);
        assert!(report.mean(Metric::Mrr, 20) <= report.mean(Metric::Hr, 20) + 1e-12);
        assert!(report.mean(Metric::Mrr, 5) <= report.mean(Metric::Mrr, 20) + 1e-12);
    }

    struct OracleScorer {
        n: usize,
        targets: Vec<usize>,
    }

    impl Scorer for OracleScorer {
        fn n_items(&self) -> usize {
            self.n
        }
        fn score_items(&self, u: usize, _ctx: &[Option<usize>], exclude: &[usize]) -> Vec<f64> {
            let mut s = vec![0.0; self.n];
            s[self.targets[u]] = 1.0;
            for &i in exclude {
                s[i] = f64::NEG_INFINITY;
            }
            s
        }
    }

    #[test]
    fn perfect_model_has_unit_hit_rate() {
        let split = toy_split(40, 20);
        let targets: Vec<usize> = {
            let mut t = vec![0; split.train.m];
            for h in &split.test {
                t[h.user] = h.item;
            }
            t
        };
        let model = OracleScorer { n: 40, targets };
        let report = evaluate(&model, &split, &[5], true);
        assert_eq!(report.mean(Metric::Hr, 5), 1.0);
        assert_eq!(report.mean(Metric::Mrr, 5), 1.0);
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let mk = |v: f64| EvalReport {
            repetitions: 1,
            cells: vec![MetricCell {
                metric: Metric::Hr,
                k: 5,
                mean: v,
                std: 0.0,
                raw: vec![v],
            }],
        };
        let agg = EvalReport::aggregate(&[mk(0.2), mk(0.4)]);
        let cell = agg.get(Metric::Hr, 5).unwrap();
        assert!((cell.mean - 0.3).abs() < 1e-12);
        assert!((cell.std - 0.1414213562373095).abs() < 1e-9);
        assert_eq!(agg.repetitions, 2);
    }

    #[test]
    fn aggregate_mean_within_raw_range() {
        let mk = |v: f64| EvalReport {
            repetitions: 1,
            cells: vec![MetricCell {
                metric: Metric::Mrr,
                k: 20,
                mean: v,
                std: 0.0,
                raw: vec![v],
            }],
        };
        let agg = EvalReport::aggregate(&[mk(0.1), mk(0.5), mk(0.3)]);
        let cell = agg.get(Metric::Mrr, 20).unwrap();
        assert!(cell.mean >= 0.1 && cell.mean <= 0.5);
    }

    #[test]
    fn cross_validate_identical_seeds_has_zero_std() {
        let records: Vec<RawRecord> = (0..30)
            .map(|i| RawRecord {
                user: format!("u{}", i % 6),
                item: format!("i{}", (i * 7) % 8),
                ctx: vec![],
                amplitude: 1.0,
            })
            .collect();
        let t = InteractionTensor::from_records(&records, &ContextSchema::empty()).unwrap();
        let hp = Hyperparams {
            k: 2,
            iterations: 2,
            ..Hyperparams::default()
        };
        let report =
            cross_validate(&t, &hp, crate::models::ModelKind::Wmf, &[9, 9, 9], &[5], false)
                .unwrap();
        assert_eq!(report.repetitions, 3);
        for cell in &report.cells {
            assert_eq!(cell.std, 0.0, "{}@{} should have zero std", cell.metric, cell.k);
        }
    }

    fn small_training_tensor() -> InteractionTensor {
        let records: Vec<RawRecord> = (0..40)
            .map(|i| RawRecord {
                user: format!("u{}", i % 8),
                item: format!("i{}", (i * 3) % 10),
                ctx: vec![],
                amplitude: 1.0,
            })
            .collect();
        InteractionTensor::from_records(&records, &ContextSchema::empty()).unwrap()
    }

    #[test]
    fn single_point_grid_wins_trivially() {
        let t = small_training_tensor();
        let base = Hyperparams {
            k: 2,
            iterations: 2,
            ..Hyperparams::default()
        };
        let grid = Grid {
            base: base.clone(),
            alpha: vec![7.0],
            lambda: vec![0.02],
            nu: vec![0.0],
            cg_steps: vec![3],
            objective: Objective {
                metric: Metric::Mrr,
                k: 5,
            },
        };
        let (best, board) =
            grid_search(&t, &grid, crate::models::ModelKind::Wmf, 3, &[5], false).unwrap();
        assert_eq!(board.len(), 1);
        assert_eq!(best.alpha, 7.0);
        assert_eq!(best.lambda, 0.02);
    }

    #[test]
    fn leaderboard_sorted_and_full_cardinality() {
        let t = small_training_tensor();
        let base = Hyperparams {
            k: 2,
            iterations: 2,
            ..Hyperparams::default()
        };
        let grid = Grid {
            base,
            alpha: vec![1.0, 40.0],
            lambda: vec![0.01, 0.1, 1.0],
            nu: vec![0.0],
            cg_steps: vec![3],
            objective: Objective {
                metric: Metric::Hr,
                k: 5,
            },
        };
        let (best, board) =
            grid_search(&t, &grid, crate::models::ModelKind::Wmf, 3, &[5], false).unwrap();
        assert_eq!(board.len(), 6);
        for pair in board.windows(2) {
            assert!(pair[0].objective >= pair[1].objective, "leaderboard unsorted");
        }
        assert_eq!(best, board[0].hyperparams);
    }

    #[test]
    fn tsv_shape() {
        let split = toy_split(10, 5);
        let model = UniformScorer { n: 10 };
        let report = evaluate(&model, &split, &[5, 20], true);
        let tsv = report.to_tsv();
        assert_eq!(tsv.lines().count(), 5); // header + 2 metrics x 2 k
        assert!(tsv.starts_with("metric\tk\tmean\tstd"));
    }
}
