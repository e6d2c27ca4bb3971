//! Dataset loading, activity filtering and per-user train/validation/test
//! splitting.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::InteractionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Ratings,
    PlayCounts,
    Transactions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub value: f64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEvents {
    pub source: SourceKind,
    pub records: Vec<RawRecord>,
    /// Input records dropped by the loader (below threshold, non-positive,
    /// or unattributable).
    pub rejected: usize,
}

impl RawEvents {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn non_empty(self, what: &str) -> Result<Self> {
        if self.records.is_empty() {
            Err(Error::EmptyDataset(what.to_string()))
        } else {
            Ok(self)
        }
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(idx, line)| (idx + 1, line)))
}

/// Reads `userId,movieId,rating[,timestamp]` lines (an optional `userId`
/// header is skipped). Ratings at or above `rating_threshold` become a
/// value of 1; the rest are dropped.
pub fn load_movielens(path: impl AsRef<Path>, rating_threshold: f64) -> Result<RawEvents> {
    let path = path.as_ref();
    let mut records = Vec::new();
    let mut rejected = 0;
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || (line_no == 1 && line.to_ascii_lowercase().starts_with("userid")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                "expected `userId,movieId,rating,timestamp`",
            ));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad rating `{}`", fields[2])))?;
        if !rating.is_finite() || rating < 0.0 {
            return Err(Error::parse(
                path,
                line_no,
                format!("bad rating `{}`", fields[2]),
            ));
        }
        let timestamp = match fields.get(3) {
            Some(t) if !t.is_empty() => Some(
                t.parse::<i64>()
                    .map_err(|_| Error::parse(path, line_no, format!("bad timestamp `{t}`")))?,
            ),
            _ => None,
        };
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(path, line_no, "empty user or movie id"));
        }
        if rating >= rating_threshold {
            records.push(RawRecord {
                user: fields[0].to_string(),
                item: fields[1].to_string(),
                value: 1.0,
                timestamp,
            });
        } else {
            rejected += 1;
        }
    }
    RawEvents {
        source: SourceKind::Ratings,
        records,
        rejected,
    }
    .non_empty("no ratings at or above the threshold")
}

/// Reads `user\tsong\tcount` triplets; non-positive counts are rejected
/// and tallied.
pub fn load_play_counts(path: impl AsRef<Path>) -> Result<RawEvents> {
    let path = path.as_ref();
    let mut records = Vec::new();
    let mut rejected = 0;
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [user, song, count] = fields.as_slice() else {
            return Err(Error::parse(
                path,
                line_no,
                "expected `user\\tsong\\tcount`",
            ));
        };
        let count: f64 = count
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad play count `{count}`")))?;
        if user.is_empty() || song.is_empty() {
            return Err(Error::parse(path, line_no, "empty user or song id"));
        }
        if count > 0.0 && count.is_finite() {
            records.push(RawRecord {
                user: user.to_string(),
                item: song.to_string(),
                value: count,
                timestamp: None,
            });
        } else {
            rejected += 1;
        }
    }
    if rejected > 0 {
        log::warn!(
            "{}: rejected {rejected} non-positive play counts",
            path.display()
        );
    }
    RawEvents {
        source: SourceKind::PlayCounts,
        records,
        rejected,
    }
    .non_empty("no positive play counts")
}

fn find_column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| {
        let h = h.trim().trim_start_matches('\u{feff}');
        names.iter().any(|n| h.eq_ignore_ascii_case(n))
    })
}

/// Reads an invoice-line CSV with a header naming `InvoiceNo`, `StockCode`,
/// `Quantity` and `CustomerID` columns.
///
/// Lines without a customer or with `Quantity <= 0` are dropped. Each
/// `(customer, stock code)` pair gets the number of distinct invoices it
/// appears on.
pub fn load_transactions(path: impl AsRef<Path>) -> Result<RawEvents> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let column = |names: &[&str]| {
        find_column(&headers, names)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column `{}`", names[0])))
    };
    let invoice_col = column(&["InvoiceNo", "Invoice"])?;
    let stock_col = column(&["StockCode"])?;
    let quantity_col = column(&["Quantity"])?;
    let customer_col = column(&["CustomerID", "Customer ID"])?;

    let mut order: Vec<(String, String)> = Vec::new();
    let mut invoices: HashMap<(String, String), HashSet<String>> = HashMap::new();
    let mut rejected = 0;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |idx: usize| row.get(idx).map(str::trim).unwrap_or("");
        let quantity: f64 = field(quantity_col).parse().map_err(|_| {
            Error::parse(
                path,
                line,
                format!("bad quantity `{}`", field(quantity_col)),
            )
        })?;
        let customer = field(customer_col);
        if customer.is_empty() || !(quantity > 0.0) {
            rejected += 1;
            continue;
        }
        let (invoice, stock) = (field(invoice_col), field(stock_col));
        if invoice.is_empty() || stock.is_empty() {
            return Err(Error::parse(
                path,
                line,
                "empty invoice number or stock code",
            ));
        }
        let key = (customer.to_string(), stock.to_string());
        let seen = invoices.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            HashSet::new()
        });
        seen.insert(invoice.to_string());
    }

    let records = order
        .into_iter()
        .map(|key| {
            let value = invoices[&key].len() as f64;
            RawRecord {
                user: key.0,
                item: key.1,
                value,
                timestamp: None,
            }
        })
        .collect();
    RawEvents {
        source: SourceKind::Transactions,
        records,
        rejected,
    }
    .non_empty("no attributable positive transactions")
}

/// Drops items with fewer than `min_users_per_item` distinct users, then
/// users with fewer than `min_items_per_user` distinct surviving items.
///
/// One pass only: removing users may push some items back under the item
/// threshold, and they are kept.
pub fn filter_activity(
    events: RawEvents,
    min_users_per_item: usize,
    min_items_per_user: usize,
    binarize: bool,
) -> Result<RawEvents> {
    let RawEvents {
        source,
        records,
        rejected,
    } = events;

    let mut users_per_item: HashMap<&str, HashSet<&str>> = HashMap::new();
    for r in &records {
        users_per_item.entry(&r.item).or_default().insert(&r.user);
    }
    let keep_item: HashSet<String> = users_per_item
        .into_iter()
        .filter(|(_, users)| users.len() >= min_users_per_item)
        .map(|(item, _)| item.to_string())
        .collect();

    let mut items_per_user: HashMap<&str, HashSet<&str>> = HashMap::new();
    for r in records.iter().filter(|r| keep_item.contains(&r.item)) {
        items_per_user.entry(&r.user).or_default().insert(&r.item);
    }
    let keep_user: HashSet<String> = items_per_user
        .into_iter()
        .filter(|(_, items)| items.len() >= min_items_per_user)
        .map(|(user, _)| user.to_string())
        .collect();

    let before = records.len();
    let records: Vec<RawRecord> = records
        .into_iter()
        .filter(|r| keep_item.contains(&r.item) && keep_user.contains(&r.user))
        .map(|mut r| {
            if binarize {
                r.value = 1.0;
            }
            r
        })
        .collect();
    log::info!(
        "activity filter kept {} of {before} records ({} items, {} users)",
        records.len(),
        keep_item.len(),
        keep_user.len()
    );
    RawEvents {
        source,
        records,
        rejected,
    }
    .non_empty("every record was removed by the activity filter")
}

/// Train/validation/test matrices over shared index spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
    /// External key of each dense user index.
    pub user_ids: Vec<String>,
    /// External key of each dense item index.
    pub item_ids: Vec<String>,
}

/// Per user, `⌈test_frac·n⌉` interactions go to test, then
/// `round(val_frac·rest)` to validation, and the remainder to train.
///
/// Users with a single interaction, and users who would end up without any
/// training interaction, keep everything in train. Duplicate
/// `(user, item)` records are merged by summing their values. Indices are
/// assigned in first-seen order.
pub fn split_per_user(
    events: &RawEvents,
    test_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_frac must lie in (0, 1), got {test_frac}"
        )));
    }
    if !(0.0..1.0).contains(&val_frac) {
        return Err(Error::InvalidParameter(format!(
            "val_frac must lie in [0, 1), got {val_frac}"
        )));
    }
    if events.is_empty() {
        return Err(Error::EmptyDataset("no events to split".into()));
    }

    let mut user_index: HashMap<&str, u32> = HashMap::new();
    let mut item_index: HashMap<&str, u32> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut per_user: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut slot: HashMap<(u32, u32), usize> = HashMap::new();
    for r in &events.records {
        let u = *user_index.entry(&r.user).or_insert_with(|| {
            user_ids.push(r.user.clone());
            per_user.push(Vec::new());
            (user_ids.len() - 1) as u32
        });
        let i = *item_index.entry(&r.item).or_insert_with(|| {
            item_ids.push(r.item.clone());
            (item_ids.len() - 1) as u32
        });
        match slot.get(&(u, i)) {
            Some(&pos) => per_user[u as usize][pos].1 += r.value,
            None => {
                slot.insert((u, i), per_user[u as usize].len());
                per_user[u as usize].push((i, r.value));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, items) in per_user.iter().enumerate() {
        let u = u as u32;
        let n = items.len();
        let sizes = split_sizes(n, test_frac, val_frac);
        let Some((n_test, n_val)) = sizes else {
            train.extend(items.iter().map(|&(i, r)| (u, i, r)));
            continue;
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (rank, &pos) in order.iter().enumerate() {
            let (i, r) = items[pos];
            if rank < n_test {
                test.push((u, i, r));
            } else if rank < n_test + n_val {
                validation.push((u, i, r));
            } else {
                train.push((u, i, r));
            }
        }
    }

    let (n_users, n_items) = (user_ids.len(), item_ids.len());
    Ok(SplitDataset {
        train: InteractionMatrix::from_triplets(n_users, n_items, train)?,
        validation: InteractionMatrix::from_triplets(n_users, n_items, validation)?,
        test: InteractionMatrix::from_triplets(n_users, n_items, test)?,
        user_ids,
        item_ids,
    })
}

/// `(test, validation)` sizes for a user with `n` interactions, or `None`
/// when everything stays in train.
fn split_sizes(n: usize, test_frac: f64, val_frac: f64) -> Option<(usize, usize)> {
    if n < 2 {
        return None;
    }
    // the epsilon absorbs products like 0.2·10 = 2.0000000000000004
    let n_test = ((test_frac * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let rest = n - n_test;
    let n_val = ((val_frac * rest as f64).round() as usize).min(rest);
    (rest > n_val).then_some((n_test, n_val))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    MovieLens,
    TasteProfile,
    OnlineRetail,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "movielens" => Ok(DatasetKind::MovieLens),
            "tasteprofile" => Ok(DatasetKind::TasteProfile),
            "onlineretail" => Ok(DatasetKind::OnlineRetail),
            other => Err(Error::InvalidParameter(format!(
                "unknown dataset `{other}`"
            ))),
        }
    }
}

/// Everything needed to turn a raw dataset file into a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareParams {
    pub dataset: DatasetKind,
    pub input: PathBuf,
    pub test_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
    pub binarize: bool,
    pub min_users_per_item: usize,
    pub min_items_per_user: usize,
    /// Only used for MovieLens ratings.
    pub rating_threshold: f64,
}

impl PrepareParams {
    pub fn new(dataset: DatasetKind, input: impl Into<PathBuf>) -> Self {
        Self {
            dataset,
            input: input.into(),
            test_frac: 0.2,
            val_frac: 0.1,
            seed: 0,
            binarize: false,
            min_users_per_item: 0,
            min_items_per_user: 0,
            rating_threshold: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixStats {
    pub n_users: usize,
    pub n_items: usize,
    pub nnz: usize,
    pub sparsity_percent: f64,
}

impl From<&InteractionMatrix> for MatrixStats {
    fn from(m: &InteractionMatrix) -> Self {
        Self {
            n_users: m.n_users(),
            n_items: m.n_items(),
            nnz: m.nnz(),
            sparsity_percent: m.sparsity_percent(),
        }
    }
}

/// Parameters and resulting sizes of a prepared split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareManifest {
    pub params: PrepareParams,
    pub rejected_records: usize,
    pub filtered_records: usize,
    pub train: MatrixStats,
    pub validation: MatrixStats,
    pub test: MatrixStats,
}

pub fn load_events(params: &PrepareParams) -> Result<RawEvents> {
    match params.dataset {
        DatasetKind::MovieLens => load_movielens(&params.input, params.rating_threshold),
        DatasetKind::TasteProfile => load_play_counts(&params.input),
        DatasetKind::OnlineRetail => load_transactions(&params.input),
    }
}

/// Load, filter and split.
pub fn prepare(params: &PrepareParams) -> Result<(SplitDataset, PrepareManifest)> {
    let raw = load_events(params)?;
    let rejected_records = raw.rejected;
    let filtered = filter_activity(
        raw,
        params.min_users_per_item,
        params.min_items_per_user,
        params.binarize,
    )?;
    let split = split_per_user(&filtered, params.test_frac, params.val_frac, params.seed)?;
    let manifest = PrepareManifest {
        params: params.clone(),
        rejected_records,
        filtered_records: filtered.len(),
        train: (&split.train).into(),
        validation: (&split.validation).into(),
        test: (&split.test).into(),
    };
    Ok((split, manifest))
}

pub const TRAIN_FILE: &str = "train.tsv";
pub const VAL_FILE: &str = "val.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const USERS_MAP: &str = "users.map";
pub const ITEMS_MAP: &str = "items.map";
pub const MANIFEST_FILE: &str = "manifest.json";

impl SplitDataset {
    /// Writes the three matrices and both id maps into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.train.save(dir.join(TRAIN_FILE))?;
        self.validation.save(dir.join(VAL_FILE))?;
        self.test.save(dir.join(TEST_FILE))?;
        write_id_map(&dir.join(USERS_MAP), &self.user_ids)?;
        write_id_map(&dir.join(ITEMS_MAP), &self.item_ids)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let split = Self {
            train: InteractionMatrix::load(dir.join(TRAIN_FILE))?,
            validation: InteractionMatrix::load(dir.join(VAL_FILE))?,
            test: InteractionMatrix::load(dir.join(TEST_FILE))?,
            user_ids: read_id_map(dir.join(USERS_MAP))?,
            item_ids: read_id_map(dir.join(ITEMS_MAP))?,
        };
        let dims = |m: &InteractionMatrix| (m.n_users(), m.n_items());
        let expected = (split.user_ids.len(), split.item_ids.len());
        if [&split.train, &split.validation, &split.test]
            .iter()
            .any(|m| dims(m) != expected)
        {
            return Err(Error::DimensionMismatch(format!(
                "{}: split matrices disagree with the id maps",
                dir.display()
            )));
        }
        Ok(split)
    }
}

/// Writes a split plus its manifest.
pub fn write_prepared(
    dir: impl AsRef<Path>,
    split: &SplitDataset,
    manifest: &PrepareManifest,
) -> Result<()> {
    let dir = dir.as_ref();
    split.save(dir)?;
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// One `index\tkey` line per id.
pub fn write_id_map(path: &Path, ids: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (idx, id) in ids.iter().enumerate() {
        writeln!(out, "{idx}\t{id}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_id_map(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut ids = Vec::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (idx, key) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line_no, "expected `index\\tkey`"))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad index `{idx}`")))?;
        if idx != ids.len() {
            return Err(Error::parse(
                path,
                line_no,
                "indices must be dense and ascending",
            ));
        }
        ids.push(key.to_string());
    }
    Ok(ids)
}
