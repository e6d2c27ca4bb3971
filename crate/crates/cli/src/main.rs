mod args;

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cemf_core::eval::{evaluate, EvalReport, Recommendations};
use cemf_core::experiment::{run_experiment, ExperimentConfig};
use cemf_core::ingest::{prepare, read_id_map, write_prepared, PrepareParams};
use cemf_core::sppmi::{count_cooccurrences_with, sppmi_sparsity, CooccurrenceOptions};
use cemf_core::{
    build_sppmi, fit, FactorModel, Hyperparams, InteractionMatrix, ItemSweep, ModelExtra,
    SppmiMatrix, TrainConfig,
};
use clap::Parser;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use args::{
    Cli, Command, EvaluateArgs, ExperimentArgs, Overlay, PrepareArgs, RecommendArgs, SppmiArgs,
    TrainArgs,
};

const SECTIONS: [&str; 6] = [
    "prepare",
    "sppmi",
    "train",
    "evaluate",
    "recommend",
    "experiment",
];

#[derive(Debug)]
enum CliError {
    Core(cemf_core::Error),
    Missing(&'static str),
    Config(String),
    Usage(String),
    Io(PathBuf, io::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Missing(_) => "missing_argument",
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Io(..) => "io",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Missing(name) => write!(f, "--{name} is required (flag or config key)"),
            CliError::Config(m) | CliError::Usage(m) => f.write_str(m),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

impl From<cemf_core::Error> for CliError {
    fn from(e: cemf_core::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return fail(
                &CliError::Usage(e.render().to_string().trim().to_string()),
                2,
            )
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, 1),
    }
}

fn fail(e: &CliError, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
    ExitCode::from(code)
}

fn run(cli: Cli) -> CliResult<()> {
    let table = match &cli.config {
        Some(path) => Some(read_config(path)?),
        None => None,
    };
    let table = table.as_ref();
    match cli.command {
        Command::Prepare(a) => cmd_prepare(merged(a, table, "prepare")?),
        Command::Sppmi(a) => cmd_sppmi(merged(a, table, "sppmi")?),
        Command::Train(a) => cmd_train(merged(a, table, "train")?),
        Command::Evaluate(a) => cmd_evaluate(merged(a, table, "evaluate")?),
        Command::Recommend(a) => cmd_recommend(merged(a, table, "recommend")?),
        Command::Experiment(a) => cmd_experiment(a, table),
    }
}

fn read_config(path: &Path) -> CliResult<toml::Table> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(key) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(CliError::Config(format!(
            "{}: unknown section `{key}`, expected one of {}",
            path.display(),
            SECTIONS.join(", ")
        )));
    }
    Ok(table)
}

fn section<T: DeserializeOwned + Default>(table: Option<&toml::Table>, name: &str) -> CliResult<T> {
    match table.and_then(|t| t.get(name)) {
        Some(value) => value
            .clone()
            .try_into()
            .map_err(|e| CliError::Config(format!("[{name}]: {e}"))),
        None => Ok(T::default()),
    }
}

fn merged<T: DeserializeOwned + Default + Overlay>(
    mut flags: T,
    table: Option<&toml::Table>,
    name: &str,
) -> CliResult<T> {
    flags.overlay(section(table, name)?);
    Ok(flags)
}

fn need<T>(value: Option<T>, name: &'static str) -> CliResult<T> {
    value.ok_or(CliError::Missing(name))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(cemf_core::Error::from)?;
    fs::write(path, text + "\n").map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    println!(
        "{}",
        serde_json::to_string(value).map_err(cemf_core::Error::from)?
    );
    Ok(())
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
        }
        _ => Ok(()),
    }
}

/// `path` with `suffix` appended to its file name.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn cmd_prepare(a: PrepareArgs) -> CliResult<()> {
    let defaults = PrepareParams::new(need(a.dataset, "dataset")?, need(a.input, "input")?);
    let out = need(a.out, "out")?;
    let params = PrepareParams {
        test_frac: a.test_frac.unwrap_or(defaults.test_frac),
        val_frac: a.val_frac.unwrap_or(defaults.val_frac),
        seed: a.seed.unwrap_or(defaults.seed),
        binarize: a.binarize.unwrap_or(defaults.binarize),
        min_users_per_item: a.min_users_per_item.unwrap_or(defaults.min_users_per_item),
        min_items_per_user: a.min_items_per_user.unwrap_or(defaults.min_items_per_user),
        rating_threshold: a.rating_threshold.unwrap_or(defaults.rating_threshold),
        ..defaults
    };
    let (split, manifest) = prepare(&params)?;
    write_prepared(&out, &split, &manifest)?;
    print_json(&json!({
        "out": out,
        "train": manifest.train,
        "validation": manifest.validation,
        "test": manifest.test,
    }))
}

#[derive(Serialize)]
struct SppmiManifest<'a> {
    train: &'a Path,
    k: u32,
    max_items_per_user: Option<usize>,
    seed: u64,
    n_items: usize,
    cooccurrence_total: u64,
    nnz: usize,
    sparsity_percent: Option<f64>,
}

fn cmd_sppmi(a: SppmiArgs) -> CliResult<()> {
    let train_path = need(a.train, "train")?;
    let out = need(a.out, "out")?;
    let k = a.k.unwrap_or(1);
    let seed = a.seed.unwrap_or(0);
    let train = InteractionMatrix::load(&train_path)?;
    let stats = count_cooccurrences_with(
        &train,
        CooccurrenceOptions {
            max_items_per_user: a.max_items_per_user,
            seed,
        },
    );
    let s = build_sppmi(&stats, k)?;
    create_parent(&out)?;
    s.save(&out)?;
    let manifest = SppmiManifest {
        train: &train_path,
        k,
        max_items_per_user: a.max_items_per_user,
        seed,
        n_items: s.n_items(),
        cooccurrence_total: stats.total(),
        nnz: s.nnz(),
        sparsity_percent: sppmi_sparsity(&s).ok(),
    };
    write_json(&sidecar(&out, ".json"), &manifest)?;
    print_json(&json!({ "nnz": manifest.nnz, "sparsity_percent": manifest.sparsity_percent }))
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let train_path = need(a.train.clone(), "train")?;
    let mode = need(a.mode, "mode")?;
    let out = need(a.out.clone(), "out")?;
    let defaults = Hyperparams::default();
    let hyperparams = Hyperparams {
        d: a.d.unwrap_or(defaults.d),
        alpha: a.alpha.unwrap_or(defaults.alpha),
        lambda: a.lambda.unwrap_or(defaults.lambda),
        n_iterations: a.iters.unwrap_or(defaults.n_iterations),
        init_scale: a.init_scale.unwrap_or(defaults.init_scale),
        seed: a.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let train = InteractionMatrix::load(&train_path)?;
    let sppmi = match &a.sppmi {
        Some(path) => Some(SppmiMatrix::load(path)?),
        None => None,
    };
    let config = TrainConfig {
        hyperparams,
        mode,
        item_sweep: a.item_sweep.unwrap_or(ItemSweep::GaussSeidel),
        tolerance: a.tolerance,
    };
    let result = fit(&train, sppmi.as_ref(), &config)?;
    let extra = ModelExtra {
        mode: mode.to_string(),
        sweeps: result.trace.len(),
        sppmi_nnz: match mode {
            cemf_core::Mode::Cemf => sppmi.as_ref().map_or(0, SppmiMatrix::nnz),
            cemf_core::Mode::Wmf => 0,
        },
        loss_trace: result.trace.clone(),
    };
    result.model.save(&out, extra)?;
    write_json(
        &out.join("train.json"),
        &json!({ "args": a, "config": config }),
    )?;
    print_json(&json!({
        "out": out,
        "sweeps": result.trace.len(),
        "converged": result.converged,
        "final_loss": result.trace.last().map(|l| l.total),
    }))
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    model: &'a Path,
    train: &'a Path,
    test: &'a Path,
    val: Option<&'a Path>,
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult<()> {
    let model_dir = need(a.model, "model")?;
    let train_path = need(a.train, "train")?;
    let test_path = need(a.test, "test")?;
    let out = need(a.out, "out")?;
    let n_values = a.n.unwrap_or_else(|| vec![5, 10, 20, 50, 100]);

    let (model, _) = FactorModel::load(&model_dir)?;
    let train = InteractionMatrix::load(&train_path)?;
    let test = InteractionMatrix::load(&test_path)?;
    let validation = match &a.val {
        Some(path) => Some(InteractionMatrix::load(path)?),
        None => None,
    };
    let report = evaluate(&model, &train, &test, validation.as_ref(), &n_values)?;

    create_parent(&out)?;
    let output = EvaluateOutput {
        model: &model_dir,
        train: &train_path,
        test: &test_path,
        val: a.val.as_deref(),
        report: &report,
    };
    write_json(&out, &output)?;
    let csv_path = out.with_extension("csv");
    fs::write(&csv_path, report.to_csv()).map_err(|e| CliError::Io(csv_path.clone(), e))?;
    print_json(&json!({ "report": out, "csv": csv_path, "overall": report.overall }))
}

fn cmd_recommend(a: RecommendArgs) -> CliResult<()> {
    let model_dir = need(a.model, "model")?;
    let train_path = need(a.train, "train")?;
    let n = need(a.n, "n")?;
    let (model, _) = FactorModel::load(&model_dir)?;
    let mut exclude = vec![InteractionMatrix::load(&train_path)?];
    for path in a.exclude.iter().flatten() {
        exclude.push(InteractionMatrix::load(path)?);
    }
    for m in &exclude {
        model.check_dims(m.n_users(), m.n_items())?;
    }
    let users = a.users.unwrap_or_else(|| (0..model.n_users()).collect());
    if let Some(&u) = users.iter().find(|&&u| u >= model.n_users()) {
        return Err(CliError::Usage(format!(
            "user {u} out of range (model has {} users)",
            model.n_users()
        )));
    }
    let user_ids = a.users_map.as_ref().map(read_id_map).transpose()?;
    let item_ids = a.items_map.as_ref().map(read_id_map).transpose()?;

    let exclude_refs: Vec<&InteractionMatrix> = exclude.iter().collect();
    let lists = Recommendations::compute(&model, &exclude_refs, n);
    let mut sink: Box<dyn Write> = match &a.out {
        Some(path) => {
            create_parent(path)?;
            Box::new(fs::File::create(path).map_err(|e| CliError::Io(path.clone(), e))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let io_err = |e| {
        CliError::Io(
            a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>")),
            e,
        )
    };
    let mut w = BufWriter::new(&mut sink);
    writeln!(w, "user\trank\titem\tscore").map_err(io_err)?;
    for &u in &users {
        let user = user_ids
            .as_ref()
            .map_or_else(|| u.to_string(), |ids| ids[u].clone());
        for (rank, &i) in lists.lists[u].iter().enumerate() {
            let item = item_ids
                .as_ref()
                .map_or_else(|| i.to_string(), |ids| ids[i as usize].clone());
            let score = model.score(u, i as usize);
            writeln!(w, "{user}\t{}\t{item}\t{score}", rank + 1).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn cmd_experiment(a: ExperimentArgs, table: Option<&toml::Table>) -> CliResult<()> {
    let mut section: toml::Table = match table.and_then(|t| t.get("experiment")) {
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(CliError::Config("[experiment] must be a table".into())),
        None => {
            return Err(CliError::Config(
                "experiment needs --config with an [experiment] table".into(),
            ))
        }
    };
    if let Some(dir) = a.output_dir {
        section.insert(
            "output_dir".into(),
            dir.to_string_lossy().into_owned().into(),
        );
    }
    if let Some(w) = a.workers {
        section.insert("workers".into(), toml::Value::Integer(w as i64));
    }
    if let Some(seeds) = a.seeds {
        let split = section
            .entry("split")
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(split) = split else {
            return Err(CliError::Config(
                "[experiment.split] must be a table".into(),
            ));
        };
        let seeds = seeds
            .into_iter()
            .map(|s| i64::try_from(s).map(toml::Value::Integer))
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage("seeds must fit in a signed 64-bit integer".into()))?;
        split.insert("seeds".into(), toml::Value::Array(seeds));
    }
    let config: ExperimentConfig = toml::Value::Table(section)
        .try_into()
        .map_err(|e| CliError::Config(format!("[experiment]: {e}")))?;
    let summary = run_experiment(&config)?;
    print_json(&json!({
        "output_dir": config.output_dir,
        "comparison": summary.comparison,
    }))
}
