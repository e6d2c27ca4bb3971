//! Full pipeline runs over a hyperparameter grid.
//!
//! For every split seed the dataset is prepared, the SPPMI matrix built,
//! and one model trained per `(mode, d, alpha)` cell. Within each
//! `(mode, d)` the alpha with the best validation Recall@`selection_n` is
//! kept and its test-set report written.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::ingest::{
    prepare, write_prepared, DatasetKind, MatrixStats, PrepareParams, SplitDataset,
};
use crate::model::{FactorModel, Hyperparams, ModelExtra};
use crate::solver::{fit, ItemSweep, Mode, TrainConfig};
use crate::sppmi::{
    build_sppmi, count_cooccurrences_with, sppmi_sparsity, CooccurrenceOptions, SppmiMatrix,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub input: PathBuf,
    #[serde(default = "default_rating_threshold")]
    pub rating_threshold: f64,
    #[serde(default)]
    pub min_users_per_item: usize,
    #[serde(default)]
    pub min_items_per_user: usize,
    #[serde(default)]
    pub binarize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_frac: f64,
    pub val_frac: f64,
    pub seeds: Vec<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            test_frac: 0.2,
            val_frac: 0.1,
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SppmiSection {
    pub k: u32,
    pub max_items_per_user: Option<usize>,
}

impl Default for SppmiSection {
    fn default() -> Self {
        Self {
            k: 1,
            max_items_per_user: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub modes: Vec<Mode>,
    pub d: Vec<usize>,
    pub alpha: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub init_scale: f64,
    /// Seed for factor initialization (independent of the split seed).
    pub model_seed: u64,
    pub tolerance: Option<f64>,
    pub item_sweep: ItemSweep,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            modes: vec![Mode::Wmf, Mode::Cemf],
            d: vec![30],
            alpha: vec![1.0, 10.0, 40.0, 100.0],
            lambda: 0.01,
            iterations: 20,
            init_scale: 0.01,
            model_seed: 0,
            tolerance: None,
            item_sweep: ItemSweep::GaussSeidel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n: Vec<usize>,
    /// Validation Recall@`selection_n` picks alpha.
    pub selection_n: usize,
    /// Exclude validation items from test-time candidates.
    pub exclude_validation: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n: vec![5, 10, 20, 50, 100],
            selection_n: 10,
            exclude_validation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub sppmi: SppmiSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub eval: EvalSection,
    pub output_dir: PathBuf,
    /// Grid cells trained concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_rating_threshold() -> f64 {
    4.0
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.grid.modes.is_empty() || self.grid.d.is_empty() || self.grid.alpha.is_empty() {
            return bad("grid must list at least one mode, d and alpha");
        }
        if self.split.seeds.is_empty() {
            return bad("at least one split seed is required");
        }
        if self.eval.n.is_empty() || self.eval.n.contains(&0) || self.eval.selection_n == 0 {
            return bad("evaluation n values must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !self.dataset.input.exists() {
            return Err(Error::InvalidParameter(format!(
                "dataset input {} does not exist",
                self.dataset.input.display()
            )));
        }
        for &d in &self.grid.d {
            self.hyperparams(d, self.grid.alpha[0]).validate()?;
        }
        Ok(())
    }

    fn hyperparams(&self, d: usize, alpha: f64) -> Hyperparams {
        Hyperparams {
            d,
            alpha,
            lambda: self.grid.lambda,
            k: self.sppmi.k,
            n_iterations: self.grid.iterations,
            init_scale: self.grid.init_scale,
            seed: self.grid.model_seed,
        }
    }

    fn prepare_params(&self, seed: u64) -> PrepareParams {
        PrepareParams {
            dataset: self.dataset.kind,
            input: self.dataset.input.clone(),
            test_frac: self.split.test_frac,
            val_frac: self.split.val_frac,
            seed,
            binarize: self.dataset.binarize,
            min_users_per_item: self.dataset.min_users_per_item,
            min_items_per_user: self.dataset.min_items_per_user,
            rating_threshold: self.dataset.rating_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mode: Mode,
    pub d: usize,
    pub alpha: f64,
    pub validation_recall: Option<f64>,
    pub sweeps: usize,
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub mode: Mode,
    pub d: usize,
    pub alpha: f64,
    pub validation_recall: f64,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub train: MatrixStats,
    pub validation: MatrixStats,
    pub test: MatrixStats,
    pub sppmi_nnz: usize,
    pub sppmi_sparsity_percent: Option<f64>,
    pub cells: Vec<CellResult>,
    pub selected: Vec<Selection>,
}

/// Side-by-side test metrics of the two modes for one `(seed, d, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub wmf_precision: f64,
    pub cemf_precision: f64,
    pub wmf_recall: f64,
    pub cemf_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    /// Logarithm used for PMI values.
    pub log_base: String,
    pub seeds: Vec<SeedSummary>,
    pub comparison: Vec<Comparison>,
}

pub const SUMMARY_FILE: &str = "summary.json";

struct CellOutcome {
    result: CellResult,
    trained: Option<(FactorModel, ModelExtra, EvalReport)>,
}

/// Runs the whole grid and writes every artifact under `output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("config.json"), config)?;

    let mut seeds = Vec::new();
    for &seed in &config.split.seeds {
        log::info!("split seed {seed}: preparing data");
        let seed_dir = out.join(format!("seed-{seed}"));
        let (split, manifest) = prepare(&config.prepare_params(seed))?;
        write_prepared(seed_dir.join("data"), &split, &manifest)?;

        let stats = count_cooccurrences_with(
            &split.train,
            CooccurrenceOptions {
                max_items_per_user: config.sppmi.max_items_per_user,
                seed,
            },
        );
        let sppmi = build_sppmi(&stats, config.sppmi.k)?;
        sppmi.save(seed_dir.join("data").join("sppmi.tsv"))?;
        let sparsity = sppmi_sparsity(&sppmi).ok();
        log::info!(
            "split seed {seed}: {} SPPMI pairs ({:.2}% sparse)",
            sppmi.nnz(),
            sparsity.unwrap_or(f64::NAN)
        );

        let outcomes = run_cells(config, &split, &sppmi);
        let mut selected = Vec::new();
        for &mode in &config.grid.modes {
            for &d in &config.grid.d {
                let best = outcomes
                    .iter()
                    .filter(|o| o.result.mode == mode && o.result.d == d)
                    .filter_map(|o| Some((o.result.validation_recall?, o)))
                    .fold(None::<(f64, &CellOutcome)>, |acc, (r, o)| match acc {
                        Some((best, _)) if best >= r => acc,
                        _ => Some((r, o)),
                    });
                let Some((validation_recall, outcome)) = best else {
                    log::warn!("split seed {seed}: no successful cell for {mode} d={d}");
                    continue;
                };
                let (model, extra, report) = outcome.trained.as_ref().expect("successful cell");
                let cell_dir = seed_dir.join(format!("{mode}-d{d}"));
                model.save(cell_dir.join("model"), extra.clone())?;
                write_json(&cell_dir.join("report.json"), report)?;
                let csv_path = cell_dir.join("report.csv");
                fs::write(&csv_path, report.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
                selected.push(Selection {
                    mode,
                    d,
                    alpha: outcome.result.alpha,
                    validation_recall,
                    test: report.clone(),
                });
            }
        }

        seeds.push(SeedSummary {
            seed,
            train: manifest.train,
            validation: manifest.validation,
            test: manifest.test,
            sppmi_nnz: sppmi.nnz(),
            sppmi_sparsity_percent: sparsity,
            cells: outcomes.into_iter().map(|o| o.result).collect(),
            selected,
        });
    }

    let summary = ExperimentSummary {
        config: config.clone(),
        log_base: "e".to_string(),
        comparison: compare(&seeds, &config.grid.d, &config.eval.n),
        seeds,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn compare(seeds: &[SeedSummary], d_values: &[usize], n_values: &[usize]) -> Vec<Comparison> {
    let mut rows = Vec::new();
    for s in seeds {
        let find = |mode: Mode, d: usize| s.selected.iter().find(|x| x.mode == mode && x.d == d);
        for &d in d_values {
            let (Some(w), Some(c)) = (find(Mode::Wmf, d), find(Mode::Cemf, d)) else {
                continue;
            };
            for &n in n_values {
                let (Some(wm), Some(cm)) = (w.test.overall.at(n), c.test.overall.at(n)) else {
                    continue;
                };
                rows.push(Comparison {
                    seed: s.seed,
                    d,
                    n,
                    wmf_precision: wm.precision,
                    cemf_precision: cm.precision,
                    wmf_recall: wm.recall,
                    cemf_recall: cm.recall,
                });
            }
        }
    }
    rows
}

/// Trains every grid cell, up to `workers` at a time. Results come back in
/// grid order (mode, d, alpha).
fn run_cells(
    config: &ExperimentConfig,
    split: &SplitDataset,
    sppmi: &SppmiMatrix,
) -> Vec<CellOutcome> {
    let cells: Vec<(Mode, usize, f64)> = config
        .grid
        .modes
        .iter()
        .flat_map(|&m| {
            config
                .grid
                .d
                .iter()
                .flat_map(move |&d| config.grid.alpha.iter().map(move |&a| (m, d, a)))
        })
        .collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CellOutcome>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let workers = config.workers.min(cells.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(mode, d, alpha)) = cells.get(idx) else {
                    break;
                };
                let outcome = run_cell(config, split, sppmi, mode, d, alpha);
                slots.lock().expect("no panics while holding the lock")[idx] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|o| o.expect("every cell ran"))
        .collect()
}

fn run_cell(
    config: &ExperimentConfig,
    split: &SplitDataset,
    sppmi: &SppmiMatrix,
    mode: Mode,
    d: usize,
    alpha: f64,
) -> CellOutcome {
    let train_config = TrainConfig {
        hyperparams: config.hyperparams(d, alpha),
        mode,
        item_sweep: config.grid.item_sweep,
        tolerance: config.grid.tolerance,
    };
    let run = || -> Result<(f64, FactorModel, ModelExtra, EvalReport)> {
        let fitted = fit(&split.train, Some(sppmi), &train_config)?;
        let val = evaluate(
            &fitted.model,
            &split.train,
            &split.validation,
            None,
            &[config.eval.selection_n],
        )?;
        let recall = val
            .overall
            .at(config.eval.selection_n)
            .map(|m| m.recall)
            .ok_or_else(|| Error::EmptyDataset("validation set has no users to evaluate".into()))?;
        let exclude = config.eval.exclude_validation.then_some(&split.validation);
        let test = evaluate(
            &fitted.model,
            &split.train,
            &split.test,
            exclude,
            &config.eval.n,
        )?;
        let extra = ModelExtra {
            mode: mode.to_string(),
            sweeps: fitted.trace.len(),
            sppmi_nnz: if mode == Mode::Cemf { sppmi.nnz() } else { 0 },
            loss_trace: fitted.trace,
        };
        Ok((recall, fitted.model, extra, test))
    };
    log::info!("training {mode} d={d} alpha={alpha}");
    match run() {
        Ok((recall, model, extra, test)) => CellOutcome {
            result: CellResult {
                mode,
                d,
                alpha,
                validation_recall: Some(recall),
                sweeps: extra.sweeps,
                final_loss: extra.loss_trace.last().map(|l| l.total),
                error: None,
            },
            trained: Some((model, extra, test)),
        },
        Err(e) => {
            log::warn!("cell {mode} d={d} alpha={alpha} failed: {e}");
            CellOutcome {
                result: CellResult {
                    mode,
                    d,
                    alpha,
                    validation_recall: None,
                    sweeps: 0,
                    final_loss: None,
                    error: Some(e.to_string()),
                },
                trained: None,
            }
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}
