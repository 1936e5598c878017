//! CSV ingestion, preprocessing pipelines and synthetic fixture generators.
//!
//! The pipeline is: load -> binarize (ratings datasets) -> derive date
//! contexts -> core filtering to a fixpoint -> encode into an
//! [`InteractionTensor`] with a value-index map per context feature. The
//! encoded tensor can be written as a canonical interaction CSV plus a JSON
//! schema sidecar and reloaded without re-running the pipeline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ContextFeature, ContextSchema, InteractionTensor, RawRecord};

/// Column mapping and preprocessing knobs for a CSV dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub user_col: String,
    pub item_col: String,
    #[serde(default)]
    pub rating_col: Option<String>,
    #[serde(default)]
    pub date_col: Option<String>,
    #[serde(default)]
    pub context_cols: Vec<String>,
    /// Keep rows with rating >= threshold (inclusive); `None` passes all
    /// rows through (implicit-feedback datasets).
    #[serde(default)]
    pub rating_threshold: Option<f64>,
    #[serde(default = "default_min_user_items")]
    pub min_user_items: usize,
    #[serde(default)]
    pub min_item_interactions: usize,
    /// Context cell contents treated as missing, besides the empty string.
    #[serde(default = "default_missing_markers")]
    pub missing_markers: Vec<String>,
    /// Derive `season` and `weekday` context features from the date column.
    #[serde(default)]
    pub derive_date_contexts: bool,
    /// Field delimiter, e.g. "," or "\t".
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
}

fn default_min_user_items() -> usize {
    3
}

fn default_delimiter() -> String {
    ",".to_string()
}

fn default_missing_markers() -> Vec<String> {
    vec![String::new(), "unknown".to_string()]
}

/// One parsed CSV row; context values are still strings at this stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub user: String,
    pub item: String,
    pub rating: Option<f64>,
    pub ctx: Vec<Option<String>>,
}

/// Names of the context features a spec produces (mapped columns followed by
/// derived date features).
pub fn feature_names(spec: &DatasetSpec) -> Vec<String> {
    let mut names = spec.context_cols.clone();
    if spec.derive_date_contexts {
        names.push("season".to_string());
        names.push("weekday".to_string());
    }
    names
}

/// Loads and types the raw CSV rows. Unmapped or marker-valued context cells
/// become missing; malformed ratings and dates are reported with their line
/// number.
pub fn load_interactions_csv(spec: &DatasetSpec) -> Result<Vec<CsvRecord>> {
    let delimiter = *spec.delimiter.as_bytes().first().unwrap_or(&b',');
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(delimiter)
        .from_path(&spec.path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let user_idx = col(&spec.user_col)?;
    let item_idx = col(&spec.item_col)?;
    let rating_idx = spec.rating_col.as_deref().map(col).transpose()?;
    let date_idx = spec.date_col.as_deref().map(col).transpose()?;
    let ctx_idx: Vec<usize> = spec
        .context_cols
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    if spec.derive_date_contexts && date_idx.is_none() {
        return Err(Error::MissingColumn(
            "date column required to derive date contexts".into(),
        ));
    }

    let is_missing = |cell: &str| -> bool {
        cell.is_empty() || spec.missing_markers.iter().any(|m| m == cell)
    };

    let mut records = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let line = row_idx + 2; // header is line 1
        let row = row?;
        let cell = |idx: usize| row.get(idx).unwrap_or("").trim().to_string();

        let rating = match rating_idx {
            Some(idx) => {
                let raw = cell(idx);
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("unparsable rating '{raw}'"),
                    })?)
                }
            }
            None => None,
        };

        let mut ctx: Vec<Option<String>> = ctx_idx
            .iter()
            .map(|&idx| {
                let raw = cell(idx);
                (!is_missing(&raw)).then_some(raw)
            })
            .collect();

        if spec.derive_date_contexts {
            let raw = cell(date_idx.expect("checked above"));
            if is_missing(&raw) {
                ctx.push(None);
                ctx.push(None);
            } else {
                let date = parse_date(&raw).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unparsable date '{raw}'"),
                })?;
                let (season, weekday) = date_contexts(date);
                ctx.push(Some(season.name().to_string()));
                ctx.push(Some(weekday_name(weekday).to_string()));
            }
        }

        records.push(CsvRecord {
            user: cell(user_idx),
            item: cell(item_idx),
            rating,
            ctx,
        });
    }
    Ok(records)
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    // Accept a plain date or anything that starts with one (timestamps).
    let head = raw.get(..10).unwrap_or(raw);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

/// Keeps rows whose rating clears the threshold (inclusive). Without a
/// threshold the records pass through untouched.
pub fn binarize(records: Vec<CsvRecord>, threshold: Option<f64>) -> Vec<CsvRecord> {
    match threshold {
        None => records,
        Some(th) => records
            .into_iter()
            .filter(|r| r.rating.is_some_and(|v| v >= th))
            .collect(),
    }
}

/// Iterates the item filter (min interactions) and the user filter (min
/// distinct items) until a fixpoint.
pub fn filter_core(
    mut records: Vec<CsvRecord>,
    min_user_items: usize,
    min_item_interactions: usize,
) -> Vec<CsvRecord> {
    loop {
        let before = records.len();

        if min_item_interactions > 0 {
            let mut item_counts: HashMap<&str, usize> = HashMap::new();
            for r in &records {
                *item_counts.entry(r.item.as_str()).or_insert(0) += 1;
            }
            let keep: BTreeSet<String> = item_counts
                .iter()
                .filter(|(_, &c)| c >= min_item_interactions)
                .map(|(i, _)| i.to_string())
                .collect();
            records.retain(|r| keep.contains(&r.item));
        }

        if min_user_items > 0 {
            let mut user_items: HashMap<&str, BTreeSet<&str>> = HashMap::new();
            for r in &records {
                user_items
                    .entry(r.user.as_str())
                    .or_default()
                    .insert(r.item.as_str());
            }
            let keep: BTreeSet<String> = user_items
                .iter()
                .filter(|(_, items)| items.len() >= min_user_items)
                .map(|(u, _)| u.to_string())
                .collect();
            records.retain(|r| keep.contains(&r.user));
        }

        if records.len() == before {
            return records;
        }
    }
}

/// Meteorological season of a date: Dec-Feb winter, Mar-May spring, Jun-Aug
/// summer, Sep-Nov autumn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
        }
    }
}

pub const SEASON_NAMES: [&str; 4] = ["winter", "spring", "summer", "autumn"];
pub const WEEKDAY_NAMES: [&str; 7] = [
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];

fn weekday_name(w: Weekday) -> &'static str {
    WEEKDAY_NAMES[w.num_days_from_monday() as usize]
}

/// Date-derived context features: meteorological season and ISO weekday.
pub fn date_contexts(date: NaiveDate) -> (Season, Weekday) {
    let season = match date.month() {
        12 | 1 | 2 => Season::Winter,
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        _ => Season::Autumn,
    };
    (season, date.weekday())
}

/// Per-feature value-to-index vocabulary of an encoded dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueMaps {
    /// `values[f][idx]` is the original string of index `idx`.
    pub values: Vec<Vec<String>>,
}

/// Encodes string-valued records into a tensor: context vocabularies are the
/// sorted distinct observed values (derived date features use their fixed
/// calendars), users and items are reindexed densely.
pub fn encode(
    records: &[CsvRecord],
    feature_names: &[String],
    derived_date_features: bool,
) -> Result<(InteractionTensor, ValueMaps)> {
    let d = feature_names.len();
    for r in records {
        if r.ctx.len() != d {
            return Err(Error::SchemaViolation(format!(
                "record has {} context values, expected {d}",
                r.ctx.len()
            )));
        }
    }

    let fixed_vocab = |f: usize| -> Option<Vec<String>> {
        if derived_date_features && f >= d - 2 {
            if f == d - 2 {
                Some(SEASON_NAMES.iter().map(|s| s.to_string()).collect())
            } else {
                Some(WEEKDAY_NAMES.iter().map(|s| s.to_string()).collect())
            }
        } else {
            None
        }
    };

    let mut values: Vec<Vec<String>> = Vec::with_capacity(d);
    let mut allows_missing = vec![false; d];
    for f in 0..d {
        let vocab = match fixed_vocab(f) {
            Some(v) => v,
            None => {
                let distinct: BTreeSet<String> = records
                    .iter()
                    .filter_map(|r| r.ctx[f].clone())
                    .collect();
                distinct.into_iter().collect()
            }
        };
        if vocab.is_empty() {
            return Err(Error::SchemaViolation(format!(
                "context feature '{}' has no observed values",
                feature_names[f]
            )));
        }
        allows_missing[f] = records.iter().any(|r| r.ctx[f].is_none());
        values.push(vocab);
    }

    let index: Vec<BTreeMap<&str, usize>> = values
        .iter()
        .map(|vocab| {
            vocab
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i))
                .collect()
        })
        .collect();

    let schema = ContextSchema::new(
        feature_names
            .iter()
            .enumerate()
            .map(|(f, name)| ContextFeature {
                name: name.clone(),
                cardinality: values[f].len(),
                allows_missing: allows_missing[f],
            })
            .collect(),
    )?;

    let raw: Vec<RawRecord> = records
        .iter()
        .map(|r| {
            let ctx = r
                .ctx
                .iter()
                .enumerate()
                .map(|(f, v)| match v {
                    Some(s) => index[f].get(s.as_str()).copied().map(Some).ok_or_else(|| {
                        Error::SchemaViolation(format!(
                            "value '{s}' not in vocabulary of feature '{}'",
                            feature_names[f]
                        ))
                    }),
                    None => Ok(None),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RawRecord {
                user: r.user.clone(),
                item: r.item.clone(),
                ctx,
                amplitude: 1.0,
            })
        })
        .collect::<Result<_>>()?;

    let tensor = InteractionTensor::from_records(&raw, &schema)?;
    Ok((tensor, ValueMaps { values }))
}

/// Runs the full pipeline for a dataset spec.
pub fn preprocess(spec: &DatasetSpec) -> Result<(InteractionTensor, ValueMaps)> {
    let records = load_interactions_csv(spec)?;
    let records = binarize(records, spec.rating_threshold);
    let records = filter_core(records, spec.min_user_items, spec.min_item_interactions);
    encode(&records, &feature_names(spec), spec.derive_date_contexts)
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalSidecar {
    features: Vec<ContextFeature>,
    value_maps: Vec<Vec<String>>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

/// Writes the canonical interaction CSV (`user,item,ctx_<name>..,amplitude`
/// with dense indices, empty cells for missing) and its JSON schema sidecar.
pub fn write_canonical(
    t: &InteractionTensor,
    maps: &ValueMaps,
    csv_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    let mut header = vec!["user".to_string(), "item".to_string()];
    header.extend(t.schema.features.iter().map(|f| format!("ctx_{}", f.name)));
    header.push("amplitude".to_string());
    writeln!(file, "{}", header.join(","))?;
    for e in &t.entries {
        let mut row = vec![e.user.to_string(), e.item.to_string()];
        row.extend(e.ctx.iter().map(|v| match v {
            Some(c) => c.to_string(),
            None => String::new(),
        }));
        row.push(format_amplitude(e.amplitude));
        writeln!(file, "{}", row.join(","))?;
    }
    file.flush()?;

    let sidecar = CanonicalSidecar {
        features: t.schema.features.clone(),
        value_maps: maps.values.clone(),
        user_ids: t.user_ids.clone(),
        item_ids: t.item_ids.clone(),
    };
    let out = std::fs::File::create(sidecar_path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(out), &sidecar)?;
    Ok(())
}

fn format_amplitude(a: f64) -> String {
    if a == a.trunc() && a.abs() < 1e15 {
        format!("{}", a as i64)
    } else {
        format!("{a}")
    }
}

/// Reloads a canonical interaction file and its sidecar.
pub fn load_canonical(csv_path: &Path, sidecar_path: &Path) -> Result<(InteractionTensor, ValueMaps)> {
    let sidecar: CanonicalSidecar =
        serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(sidecar_path)?))?;
    let schema = ContextSchema::new(sidecar.features.clone())?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)?;
    let d = schema.d();
    let mut records = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let line = row_idx + 2;
        let row = row?;
        let parse_idx = |cell: &str, what: &str| -> Result<usize> {
            cell.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("unparsable {what} index '{cell}'"),
            })
        };
        let user = parse_idx(row.get(0).unwrap_or(""), "user")?;
        let item = parse_idx(row.get(1).unwrap_or(""), "item")?;
        let mut ctx = Vec::with_capacity(d);
        for f in 0..d {
            let cell = row.get(2 + f).unwrap_or("").trim();
            ctx.push(if cell.is_empty() {
                None
            } else {
                Some(parse_idx(cell, "context")?)
            });
        }
        let amp_cell = row.get(2 + d).unwrap_or("1");
        let amplitude = amp_cell.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("unparsable amplitude '{amp_cell}'"),
        })?;
        records.push(RawRecord {
            user: sidecar
                .user_ids
                .get(user)
                .cloned()
                .unwrap_or_else(|| user.to_string()),
            item: sidecar
                .item_ids
                .get(item)
                .cloned()
                .unwrap_or_else(|| item.to_string()),
            ctx,
            amplitude,
        });
    }
    let tensor = InteractionTensor::from_records(&records, &schema)?;
    Ok((
        tensor,
        ValueMaps {
            values: sidecar.value_maps,
        },
    ))
}

/// What signal a synthetic fixture plants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthSignal {
    /// Positives drawn from a planted low-rank user-item model; context
    /// values are uniform and independent of the items, so contexts carry
    /// no information.
    None,
    /// Positives drawn from the same low-rank model with per-context gating
    /// of the latent dimensions, so context-aware models have recoverable
    /// signal.
    ContextOffset,
}

/// Parameters of a synthetic fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    pub cardinalities: Vec<usize>,
    pub signal: SynthSignal,
    pub interactions_per_user: usize,
    pub seed: u64,
}

/// Generates a synthetic interaction tensor. Deterministic per spec.
///
/// Both signals share a planted rank-4 taste model; the `ContextOffset`
/// signal additionally gates the latent dimensions per context value, so
/// the context effect is a transformation inside the latent space (and
/// therefore recoverable from frozen user/item factors).
pub fn synth_fixture(spec: &SynthSpec) -> InteractionTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let schema = ContextSchema::with_cardinalities(&spec.cardinalities);
    let d = schema.d();

    let rank = 4;
    let latent = |rng: &mut ChaCha8Rng, count: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                (0..rank)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect::<Vec<f64>>()
            })
            .collect()
    };
    let user_taste = latent(&mut rng, spec.m);
    let item_taste = latent(&mut rng, spec.n);

    // Context value v of feature f amplifies latent dimension (v + f) mod
    // rank and damps the others.
    let (boost, damp, temperature) = (4.0, 0.6, 2.5);
    let gate = |f: usize, v: usize, r: usize| -> f64 {
        if r == (v + f) % rank {
            boost
        } else {
            damp
        }
    };

    let mut records = Vec::new();
    for u in 0..spec.m {
        // Distinct items per user, so the stacked and collapsed views of
        // the fixture carry the same information.
        let mut taken = vec![false; spec.n];
        for _ in 0..spec.interactions_per_user.min(spec.n) {
            let ctx: Vec<Option<usize>> = (0..d)
                .map(|f| Some(rng.gen_range(0..schema.features[f].cardinality)))
                .collect();
            let gates: Vec<f64> = (0..rank)
                .map(|r| match spec.signal {
                    SynthSignal::None => 1.0,
                    SynthSignal::ContextOffset => ctx
                        .iter()
                        .enumerate()
                        .map(|(f, v)| gate(f, v.unwrap(), r))
                        .product(),
                })
                .collect();
            let weights: Vec<f64> = (0..spec.n)
                .map(|i| {
                    if taken[i] {
                        return 0.0;
                    }
                    let score: f64 = (0..rank)
                        .map(|r| user_taste[u][r] * gates[r] * item_taste[i][r])
                        .sum();
                    (temperature * score).exp()
                })
                .collect();
            let item = sample_categorical(&mut rng, &weights);
            taken[item] = true;
            records.push(RawRecord {
                user: format!("u{u}"),
                item: format!("i{item}"),
                ctx,
                amplitude: 1.0,
            });
        }
    }
    // Make the item space dense even if an item was never drawn.
    for i in 0..spec.n {
        if !records.iter().any(|r| r.item == format!("i{i}")) {
            records.push(RawRecord {
                user: "u0".to_string(),
                item: format!("i{i}"),
                ctx: (0..d).map(|_| Some(0)).collect(),
                amplitude: 1.0,
            });
        }
    }

    InteractionTensor::from_records(&records, &schema).expect("fixture records are valid")
}

fn sample_categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_csv(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    fn spec_for(path: PathBuf) -> DatasetSpec {
        DatasetSpec {
            path,
            user_col: "user".into(),
            item_col: "item".into(),
            rating_col: Some("rating".into()),
            date_col: None,
            context_cols: vec!["weather".into()],
            rating_threshold: Some(3.0),
            min_user_items: 0,
            min_item_interactions: 0,
            missing_markers: default_missing_markers(),
            derive_date_contexts: false,
            delimiter: ",".into(),
        }
    }

    #[test]
    fn header_only_file_yields_no_records() {
        let (_d, path) = write_csv("user,item,rating,weather\n");
        let records = load_interactions_csv(&spec_for(path)).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn empty_context_cell_is_missing() {
        let (_d, path) = write_csv("user,item,rating,weather\nu1,i1,4,\nu2,i2,5,sunny\n");
        let records = load_interactions_csv(&spec_for(path)).unwrap();
        assert_eq!(records[0].ctx[0], None);
        assert_eq!(records[1].ctx[0], Some("sunny".to_string()));
    }

    #[test]
    fn unknown_marker_is_missing() {
        let (_d, path) = write_csv("user,item,rating,weather\nu1,i1,4,unknown\n");
        let records = load_interactions_csv(&spec_for(path)).unwrap();
        assert_eq!(records[0].ctx[0], None);
    }

    #[test]
    fn malformed_rating_names_line() {
        let (_d, path) = write_csv("user,item,rating,weather\nu1,i1,4,sunny\nu2,i2,abc,rainy\n");
        match load_interactions_csv(&spec_for(path)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_reported() {
        let (_d, path) = write_csv("user,item,rating\nu1,i1,4\n");
        assert!(matches!(
            load_interactions_csv(&spec_for(path)),
            Err(Error::MissingColumn(_))
        ));
    }

    fn rec(user: &str, item: &str, rating: Option<f64>) -> CsvRecord {
        CsvRecord {
            user: user.into(),
            item: item.into(),
            rating,
            ctx: vec![],
        }
    }

    #[test]
    fn binarize_threshold_inclusive() {
        let records = vec![rec("u", "a", Some(3.0)), rec("u", "b", Some(2.0))];
        let kept = binarize(records, Some(3.0));
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].item, "a");
    }

    #[test]
    fn binarize_pass_through_without_threshold() {
        let records = vec![rec("u", "a", None), rec("v", "b", None)];
        assert_eq!(binarize(records.clone(), None), records);
    }

    #[test]
    fn filter_core_removes_small_users() {
        let records = vec![
            rec("u", "a", None),
            rec("u", "b", None),
            rec("u", "c", None),
            rec("v", "a", None),
            rec("v", "b", None),
        ];
        let kept = filter_core(records, 3, 0);
        assert!(kept.iter().all(|r| r.user == "u"));
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn filter_core_cascades_to_fixpoint() {
        // item b has 1 interaction -> dropped; user v then has only item a
        // left and falls below the 2-item minimum -> dropped too.
        let records = vec![
            rec("u", "a", None),
            rec("u", "a", None),
            rec("u", "c", None),
            rec("u", "c", None),
            rec("v", "a", None),
            rec("v", "b", None),
        ];
        let kept = filter_core(records, 2, 2);
        assert!(kept.iter().all(|r| r.user == "u"));
        assert!(kept.iter().all(|r| r.item != "b"));
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn filter_core_empty_input() {
        assert!(filter_core(vec![], 3, 10).is_empty());
    }

    #[test]
    fn filter_core_idempotent() {
        let records = vec![
            rec("u", "a", None),
            rec("u", "b", None),
            rec("u", "c", None),
            rec("w", "a", None),
        ];
        let once = filter_core(records, 3, 0);
        let twice = filter_core(once.clone(), 3, 0);
        assert_eq!(once, twice);
    }

    #[test]
    fn date_context_examples() {
        let d = NaiveDate::from_ymd_opt(2019, 1, 15).unwrap();
        let (season, weekday) = date_contexts(d);
        assert_eq!(season, Season::Winter);
        assert_eq!(weekday, Weekday::Tue);

        let d = NaiveDate::from_ymd_opt(2019, 12, 1).unwrap();
        let (season, weekday) = date_contexts(d);
        assert_eq!(season, Season::Winter);
        assert_eq!(weekday, Weekday::Sun);

        let d = NaiveDate::from_ymd_opt(2019, 6, 30).unwrap();
        let (season, weekday) = date_contexts(d);
        assert_eq!(season, Season::Summer);
        assert_eq!(weekday, Weekday::Sun);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec {
            m: 10,
            n: 8,
            cardinalities: vec![3],
            signal: SynthSignal::ContextOffset,
            interactions_per_user: 5,
            seed: 7,
        };
        let a = synth_fixture(&spec);
        let b = synth_fixture(&spec);
        assert_eq!(a.entries, b.entries);
    }

    #[test]
    fn canonical_round_trip() {
        let spec = SynthSpec {
            m: 6,
            n: 5,
            cardinalities: vec![2, 3],
            signal: SynthSignal::None,
            interactions_per_user: 4,
            seed: 3,
        };
        let t = synth_fixture(&spec);
        let maps = ValueMaps {
            values: vec![
                vec!["a".into(), "b".into()],
                vec!["x".into(), "y".into(), "z".into()],
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("interactions.csv");
        let sidecar = dir.path().join("schema.json");
        write_canonical(&t, &maps, &csv_path, &sidecar).unwrap();
        let (loaded, loaded_maps) = load_canonical(&csv_path, &sidecar).unwrap();
        assert_eq!(loaded.m, t.m);
        assert_eq!(loaded.n, t.n);
        assert_eq!(loaded.p(), t.p());
        assert_eq!(loaded.entries, t.entries);
        assert_eq!(loaded_maps.values, maps.values);
    }

    #[test]
    fn chi_square_independence_of_none_fixture() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let spec = SynthSpec {
            m: 50,
            n: 20,
            cardinalities: vec![3],
            signal: SynthSignal::None,
            interactions_per_user: 40,
            seed: 11,
        };
        let t = synth_fixture(&spec);
        // contingency of item x context value weighted by amplitude
        let l = 3;
        let mut table = vec![vec![0.0; l]; t.n];
        for e in &t.entries {
            table[e.item][e.ctx[0].unwrap()] += e.amplitude;
        }
        let total: f64 = table.iter().flatten().sum();
        let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<f64> = (0..l).map(|c| table.iter().map(|r| r[c]).sum()).collect();
        let mut chi2 = 0.0;
        let mut rows_used = 0;
        for i in 0..t.n {
            if row_sums[i] == 0.0 {
                continue;
            }
            rows_used += 1;
            for c in 0..l {
                let expected = row_sums[i] * col_sums[c] / total;
                if expected > 0.0 {
                    let diff = table[i][c] - expected;
                    chi2 += diff * diff / expected;
                }
            }
        }
        let df = ((rows_used - 1) * (l - 1)) as f64;
        let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.999);
        assert!(
            chi2 < critical,
            "chi2 {chi2:.2} exceeds critical {critical:.2} at df {df}"
        );
    }
}
