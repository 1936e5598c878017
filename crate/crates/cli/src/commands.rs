//! Subcommand implementations. Machine-readable artifacts go to files,
//! progress lines to stderr.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use tenrec::baselines::itemknn_train;
use tenrec::datasets::{self, ValueMaps};
use tenrec::eval::{self, EvalReport, Metric};
use tenrec::models::{
    fit, load_factor_model, posthoc_context_fit, prepare_tensor, save_model, Hyperparams,
    ModelKind, SavedModel,
};
use tenrec::tensor::InteractionTensor;

use crate::config::{DatasetConfig, ModelChoice, RunConfig};
use crate::CliError;

fn runtime<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::runtime(format!("{what}: {e}"))
}

pub fn load_dataset(config: &RunConfig) -> Result<(InteractionTensor, Option<ValueMaps>), CliError> {
    match &config.dataset {
        DatasetConfig::Csv(spec) => {
            let (tensor, maps) = datasets::preprocess(spec).map_err(runtime("preprocess"))?;
            Ok((tensor, Some(maps)))
        }
        DatasetConfig::Canonical { csv, sidecar } => {
            let (tensor, maps) =
                datasets::load_canonical(csv, sidecar).map_err(runtime("load canonical"))?;
            Ok((tensor, Some(maps)))
        }
        DatasetConfig::Synthetic(spec) => Ok((datasets::synth_fixture(spec), None)),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(runtime("create output directory"))
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config_sha256: String,
    version: String,
    wall_time_ms: u128,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config_path: &Path,
    started: Instant,
) -> Result<(), CliError> {
    let bytes = std::fs::read(config_path).map_err(runtime("read config for manifest"))?;
    let sha = Sha256::digest(&bytes);
    let manifest = Manifest {
        command: command.to_string(),
        config_sha256: format!("{sha:x}"),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_ms: started.elapsed().as_millis(),
    };
    let file = std::fs::File::create(dir.join("manifest.json")).map_err(runtime("manifest"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)
        .map_err(runtime("manifest"))?;
    Ok(())
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<(), CliError> {
    std::fs::write(dir.join("report.tsv"), report.to_tsv()).map_err(runtime("write report.tsv"))?;
    let file = std::fs::File::create(dir.join("report.json")).map_err(runtime("report.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), report)
        .map_err(runtime("report.json"))?;
    Ok(())
}

pub fn cmd_preprocess(
    config_path: &Path,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_dir(out_dir)?;
    let (tensor, maps) = load_dataset(config)?;
    let maps = maps.unwrap_or(ValueMaps { values: vec![] });
    eprintln!(
        "preprocessed: {} users, {} items, {} interactions, {} context features",
        tensor.m,
        tensor.n,
        tensor.p(),
        tensor.schema.d()
    );
    datasets::write_canonical(
        &tensor,
        &maps,
        &out_dir.join("interactions.csv"),
        &out_dir.join("schema.json"),
    )
    .map_err(runtime("write canonical"))?;
    write_manifest(out_dir, "preprocess", config_path, started)
}

pub fn cmd_train(
    config_path: &Path,
    config: &RunConfig,
    out_dir: &Path,
    seed: Option<u64>,
    split_seed: Option<u64>,
) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_dir(out_dir)?;
    let (tensor, _) = load_dataset(config)?;
    let seed = seed.unwrap_or(config.seeds[0]);
    let train_tensor = match split_seed {
        Some(s) => tensor.leave_one_out_split(s).train,
        None => tensor,
    };

    let saved = match config.model_choice()? {
        ModelChoice::Factor(kind) => {
            eprintln!("training {} (seed {seed})", config.model);
            let model =
                fit(&train_tensor, &config.hyperparams, kind, seed).map_err(runtime("train"))?;
            SavedModel::Factor(model)
        }
        ModelChoice::ItemKnn => {
            eprintln!("building item similarity model (N = {})", config.neighbors);
            SavedModel::Similarity(itemknn_train(&train_tensor, config.neighbors))
        }
    };
    save_model(&out_dir.join("model.json"), &saved).map_err(runtime("save model"))?;
    write_manifest(out_dir, "train", config_path, started)
}

fn tuned_hyperparams(
    config: &RunConfig,
    tensor: &InteractionTensor,
    kind: ModelKind,
) -> Result<(Hyperparams, Option<Vec<eval::GridPoint>>), CliError> {
    match &config.grid {
        None => Ok((config.hyperparams.clone(), None)),
        Some(grid_config) => {
            let grid = grid_config.to_grid(config.hyperparams.clone(), kind);
            eprintln!(
                "grid search over {} configurations (objective {}@{})",
                grid.points().len(),
                grid.objective.metric,
                grid.objective.k
            );
            let (best, leaderboard) = eval::grid_search(
                tensor,
                &grid,
                kind,
                config.seeds[0],
                &config.k_list,
                config.retarget,
            )
            .map_err(runtime("grid search"))?;
            eprintln!(
                "grid winner: alpha={} lambda={} nu={} cg_steps={}",
                best.alpha, best.lambda, best.nu, best.cg_steps
            );
            Ok((best, Some(leaderboard)))
        }
    }
}

/// The full experiment: preprocess, optional grid search, repeated
/// cross-validation, report and final model artifacts.
pub fn cmd_evaluate(
    config_path: &Path,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_dir(out_dir)?;
    let (tensor, _) = load_dataset(config)?;

    let report;
    let saved: SavedModel;
    match config.model_choice()? {
        ModelChoice::Factor(kind) => {
            let (hp, leaderboard) = tuned_hyperparams(config, &tensor, kind)?;
            if let Some(board) = leaderboard {
                write_leaderboard(out_dir, &board)?;
            }
            eprintln!(
                "cross-validating {} over {} repetitions",
                config.model,
                config.seeds.len()
            );
            report = eval::cross_validate(
                &tensor,
                &hp,
                kind,
                &config.seeds,
                &config.k_list,
                config.retarget,
            )
            .map_err(runtime("cross-validate"))?;
            let model = fit(&tensor, &hp, kind, config.seeds[0]).map_err(runtime("train"))?;
            saved = SavedModel::Factor(model);
        }
        ModelChoice::ItemKnn => {
            let neighbors = config.neighbors;
            report = eval::cross_validate_with(
                &tensor,
                &config.seeds,
                &config.k_list,
                config.retarget,
                |train, _seed| Ok(itemknn_train(train, neighbors)),
            )
            .map_err(runtime("cross-validate"))?;
            saved = SavedModel::Similarity(itemknn_train(&tensor, neighbors));
        }
    }

    for cell in &report.cells {
        eprintln!(
            "{}@{}: {:.4} ({:.4})",
            cell.metric, cell.k, cell.mean, cell.std
        );
    }
    write_report(out_dir, &report)?;
    save_model(&out_dir.join("model.json"), &saved).map_err(runtime("save model"))?;
    write_manifest(out_dir, "evaluate", config_path, started)
}

fn write_leaderboard(dir: &Path, board: &[eval::GridPoint]) -> Result<(), CliError> {
    let file =
        std::fs::File::create(dir.join("leaderboard.json")).map_err(runtime("leaderboard"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), board)
        .map_err(runtime("leaderboard"))?;
    let mut tsv = String::from("rank\talpha\tlambda\tnu\tcg_steps\tobjective\n");
    for (rank, point) in board.iter().enumerate() {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\n",
            rank + 1,
            point.hyperparams.alpha,
            point.hyperparams.lambda,
            point.hyperparams.nu,
            point.hyperparams.cg_steps,
            point.objective
        ));
    }
    std::fs::write(dir.join("leaderboard.tsv"), tsv).map_err(runtime("leaderboard"))?;
    Ok(())
}

pub fn cmd_grid(config_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_dir(out_dir)?;
    let (tensor, _) = load_dataset(config)?;
    let grid_config = config.grid.clone().unwrap_or_else(|| {
        crate::config::GridConfig {
            alpha: vec![],
            lambda: vec![],
            nu: vec![],
            cg_steps: vec![],
            neighbors: vec![],
            objective_metric: Metric::Mrr,
            objective_k: 5,
        }
    });

    match config.model_choice()? {
        ModelChoice::Factor(kind) => {
            let grid = grid_config.to_grid(config.hyperparams.clone(), kind);
            let (best, board) = eval::grid_search(
                &tensor,
                &grid,
                kind,
                config.seeds[0],
                &config.k_list,
                config.retarget,
            )
            .map_err(runtime("grid search"))?;
            write_leaderboard(out_dir, &board)?;
            let file =
                std::fs::File::create(out_dir.join("best.json")).map_err(runtime("best.json"))?;
            serde_json::to_writer_pretty(std::io::BufWriter::new(file), &best)
                .map_err(runtime("best.json"))?;
            eprintln!(
                "best configuration: alpha={} lambda={} nu={} cg_steps={}",
                best.alpha, best.lambda, best.nu, best.cg_steps
            );
        }
        ModelChoice::ItemKnn => {
            // The similarity baseline has a single hyperparameter: the
            // neighbor cap.
            let caps = if grid_config.neighbors.is_empty() {
                vec![50, 100, 200, 500]
            } else {
                grid_config.neighbors.clone()
            };
            let split = tensor.leave_one_out_split(config.seeds[0]);
            let mut k_list = config.k_list.clone();
            if !k_list.contains(&grid_config.objective_k) {
                k_list.push(grid_config.objective_k);
            }
            let mut board: Vec<(usize, f64)> = caps
                .iter()
                .map(|&cap| {
                    let model = itemknn_train(&split.train, cap);
                    let report = eval::evaluate(&model, &split, &k_list, config.retarget);
                    (
                        cap,
                        report.mean(grid_config.objective_metric, grid_config.objective_k),
                    )
                })
                .collect();
            board.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let mut tsv = String::from("rank\tneighbors\tobjective\n");
            for (rank, (cap, value)) in board.iter().enumerate() {
                tsv.push_str(&format!("{}\t{}\t{:.6}\n", rank + 1, cap, value));
            }
            std::fs::write(out_dir.join("leaderboard.tsv"), tsv)
                .map_err(runtime("leaderboard"))?;
            let file =
                std::fs::File::create(out_dir.join("best.json")).map_err(runtime("best.json"))?;
            serde_json::to_writer_pretty(
                std::io::BufWriter::new(file),
                &serde_json::json!({ "neighbors": board[0].0 }),
            )
            .map_err(runtime("best.json"))?;
            eprintln!("best neighbor cap: {}", board[0].0);
        }
    }
    write_manifest(out_dir, "grid", config_path, started)
}

#[derive(Serialize)]
struct PercentageCell {
    metric: Metric,
    k: usize,
    percent: f64,
}

#[derive(Serialize)]
struct PosthocReport<'a> {
    report: &'a EvalReport,
    percentage_of_reference: Option<Vec<PercentageCell>>,
}

/// Post-hoc experiment: frozen user/item factors from a saved WMF model,
/// context factors fitted per split, evaluated like any other model.
pub fn cmd_posthoc(
    config_path: &Path,
    config: &RunConfig,
    out_dir: &Path,
    base_flag: Option<&Path>,
    reference_flag: Option<&Path>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let ModelChoice::Factor(kind) = config.model_choice()? else {
        return Err(CliError::usage(
            "invalid config: field 'model': post-hoc fitting needs a factor model".into(),
        ));
    };
    if kind == ModelKind::Wmf {
        return Err(CliError::usage(
            "invalid config: field 'model': post-hoc fitting needs a context-aware model".into(),
        ));
    }
    let base_path = base_flag
        .map(Path::to_path_buf)
        .or_else(|| config.base_model.clone())
        .ok_or_else(|| {
            CliError::usage("invalid config: field 'base_model' is required for posthoc".into())
        })?;
    let base = load_factor_model(&base_path)
        .map_err(|e| CliError::usage(format!("cannot load base model: {e}")))?;
    if base.k() != config.hyperparams.k {
        return Err(CliError::usage(format!(
            "base model k={} does not match configured k={}",
            base.k(),
            config.hyperparams.k
        )));
    }

    ensure_dir(out_dir)?;
    let (tensor, _) = load_dataset(config)?;
    if base.m() != tensor.m || base.n() != tensor.n {
        return Err(CliError::usage(format!(
            "base model covers {}x{} users/items but the dataset has {}x{}",
            base.m(),
            base.n(),
            tensor.m,
            tensor.n
        )));
    }

    let hp = &config.hyperparams;
    let mut reports = Vec::with_capacity(config.seeds.len());
    let mut first_model = None;
    for &seed in &config.seeds {
        let split = tensor.leave_one_out_split(seed);
        let prepared = prepare_tensor(&split.train, hp, kind);
        let model =
            posthoc_context_fit(&base, &prepared, hp, kind).map_err(runtime("posthoc fit"))?;
        reports.push(eval::evaluate(&model, &split, &config.k_list, config.retarget));
        if first_model.is_none() {
            first_model = Some(model);
        }
    }
    let report = EvalReport::aggregate(&reports);

    let reference = reference_flag
        .map(Path::to_path_buf)
        .or_else(|| config.reference_report.clone());
    let percentage = match reference {
        None => None,
        Some(path) => {
            let file = std::fs::File::open(&path).map_err(runtime("reference report"))?;
            let reference: EvalReport = serde_json::from_reader(std::io::BufReader::new(file))
                .map_err(runtime("reference report"))?;
            Some(
                report
                    .cells
                    .iter()
                    .map(|cell| PercentageCell {
                        metric: cell.metric,
                        k: cell.k,
                        percent: 100.0 * cell.mean / reference.mean(cell.metric, cell.k),
                    })
                    .collect::<Vec<_>>(),
            )
        }
    };

    // TSV with the percentage column mirroring the reference experiment.
    let mut tsv = String::from("metric\tk\tmean\tstd\tpct_of_reference\n");
    for (idx, cell) in report.cells.iter().enumerate() {
        let pct = percentage
            .as_ref()
            .map(|p| format!("{:.1}", p[idx].percent))
            .unwrap_or_else(|| "-".to_string());
        tsv.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}\n",
            cell.metric, cell.k, cell.mean, cell.std, pct
        ));
    }
    std::fs::write(out_dir.join("report.tsv"), tsv).map_err(runtime("report.tsv"))?;
    let file = std::fs::File::create(out_dir.join("report.json")).map_err(runtime("report"))?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(file),
        &PosthocReport {
            report: &report,
            percentage_of_reference: percentage,
        },
    )
    .map_err(runtime("report"))?;

    if let Some(model) = first_model {
        save_model(&out_dir.join("model.json"), &SavedModel::Factor(model))
            .map_err(runtime("save model"))?;
    }
    for cell in &report.cells {
        eprintln!("{}@{}: {:.4} ({:.4})", cell.metric, cell.k, cell.mean, cell.std);
    }
    write_manifest(out_dir, "posthoc", config_path, started)
}

/// Prints a JSON report as the TSV table.
pub fn cmd_report(input: &Path) -> Result<(), CliError> {
    let file = std::fs::File::open(input)
        .map_err(|e| CliError::usage(format!("cannot open report '{}': {e}", input.display())))?;
    let report: EvalReport = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| CliError::usage(format!("invalid report: {e}")))?;
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(report.to_tsv().as_bytes())
        .map_err(runtime("stdout"))?;
    Ok(())
}

