//! Subcommand arguments. Every field is optional on the command line so a
//! `--config` file can supply it; flags win over file values.

use std::path::PathBuf;

use cemf_core::ingest::DatasetKind;
use cemf_core::{ItemSweep, Mode};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "cemf",
    version,
    about = "Implicit-feedback matrix factorization pipeline"
)]
pub struct Cli {
    /// TOML file with one table per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw dataset, filter it and split it per user.
    Prepare(PrepareArgs),
    /// Build the item co-occurrence SPPMI matrix from a training split.
    Sppmi(SppmiArgs),
    /// Fit a WMF or CEMF model.
    Train(TrainArgs),
    /// Precision@n and Recall@n of a model on a held-out split.
    Evaluate(EvaluateArgs),
    /// Top-n lists for some or all users.
    Recommend(RecommendArgs),
    /// Run a full hyperparameter grid over several split seeds.
    Experiment(ExperimentArgs),
}

/// Fills every unset field of `self` from `file`.
pub trait Overlay {
    fn overlay(&mut self, file: Self);
}

macro_rules! overlay {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl Overlay for $ty {
            fn overlay(&mut self, file: Self) {
                $(
                    if self.$field.is_none() {
                        self.$field = file.$field;
                    }
                )+
            }
        }
    };
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareArgs {
    #[arg(long)]
    pub dataset: Option<DatasetKind>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Store every interaction as 1.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub binarize: Option<bool>,
    #[arg(long)]
    pub min_users_per_item: Option<usize>,
    #[arg(long)]
    pub min_items_per_user: Option<usize>,
    /// MovieLens only: ratings below this are dropped.
    #[arg(long)]
    pub rating_threshold: Option<f64>,
}

overlay!(PrepareArgs {
    dataset,
    input,
    out,
    test_frac,
    val_frac,
    seed,
    binarize,
    min_users_per_item,
    min_items_per_user,
    rating_threshold,
});

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SppmiArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Shift: entries are PMI − ln k.
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subsample users with more items than this.
    #[arg(long)]
    pub max_items_per_user: Option<usize>,
    /// Seed for the subsampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

overlay!(SppmiArgs {
    train,
    k,
    out,
    max_items_per_user,
    seed,
});

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Required for `--mode cemf`.
    #[arg(long)]
    pub sppmi: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Standard deviation of the initial factors.
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Stop early once the relative loss decrease drops below this.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// `gauss_seidel` or `jacobi`.
    #[arg(long)]
    pub item_sweep: Option<ItemSweep>,
    /// Model directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay!(TrainArgs {
    train,
    sppmi,
    mode,
    d,
    alpha,
    lambda,
    iters,
    seed,
    init_scale,
    tolerance,
    item_sweep,
    out,
});

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Validation split; its items are excluded from the candidates.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// JSON report path; the CSV goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay!(EvaluateArgs {
    model,
    train,
    test,
    val,
    n,
    out,
});

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Items in this split are never recommended.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Further splits to exclude.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Dense user indices, comma separated. Defaults to every user.
    #[arg(long, value_delimiter = ',')]
    pub users: Option<Vec<usize>>,
    /// Print external user ids from this map.
    #[arg(long)]
    pub users_map: Option<PathBuf>,
    /// Print external item ids from this map.
    #[arg(long)]
    pub items_map: Option<PathBuf>,
    /// TSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

overlay!(RecommendArgs {
    model,
    train,
    exclude,
    n,
    users,
    users_map,
    items_map,
    out,
});

/// The grid itself lives in the `[experiment]` table of `--config`.
#[derive(Debug, Default, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}
