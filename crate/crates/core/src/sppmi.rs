//! Item co-occurrence statistics and the shifted positive PMI matrix.
//!
//! Every user contributes each unordered pair `{i, j}` (`i != j`) of its
//! interaction list exactly once. For pair counts `#(i,j)`, marginals
//! `#(i) = Σ_j #(i,j)` and `|D| = Σ #(i,j)`, the stored value is
//!
//! ```text
//! s_ij = ln(#(i,j)·|D| / (#(i)·#(j))) − ln k
//! ```
//!
//! kept only where it is strictly positive.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{parse_fields, InteractionMatrix};

/// Pair counts over unordered item pairs, stored once with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceStats {
    n_items: usize,
    /// Row `i` of the strict upper triangle: `pair_ptr[i]..pair_ptr[i+1]`.
    pair_ptr: Vec<usize>,
    pair_items: Vec<u32>,
    pair_counts: Vec<u32>,
    item_counts: Vec<u64>,
    total: u64,
}

impl CooccurrenceStats {
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// `|D|`, the number of unordered pairs drawn.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// `#(i)`.
    pub fn item_count(&self, i: usize) -> u64 {
        self.item_counts[i]
    }

    pub fn item_counts(&self) -> &[u64] {
        &self.item_counts
    }

    /// `#(i,j)`, symmetric in its arguments; zero on the diagonal.
    pub fn pair_count(&self, i: usize, j: usize) -> u64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if lo == hi {
            return 0;
        }
        let range = self.pair_ptr[lo]..self.pair_ptr[lo + 1];
        match self.pair_items[range.clone()].binary_search(&(hi as u32)) {
            Ok(pos) => self.pair_counts[range.start + pos] as u64,
            Err(_) => 0,
        }
    }

    /// Number of distinct unordered pairs with a nonzero count.
    pub fn n_pairs(&self) -> usize {
        self.pair_items.len()
    }

    /// `(i, j, #(i,j))` with `i < j`, ordered by `(i, j)`.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        (0..self.n_items).flat_map(move |i| {
            let range = self.pair_ptr[i]..self.pair_ptr[i + 1];
            self.pair_items[range.clone()]
                .iter()
                .zip(&self.pair_counts[range])
                .map(move |(&j, &c)| (i as u32, j, c as u64))
        })
    }
}

/// Options for [`count_cooccurrences_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CooccurrenceOptions {
    /// Users with more items than this contribute a uniformly sampled
    /// subset of this size. `None` counts every user in full.
    pub max_items_per_user: Option<usize>,
    /// Seed for the per-user subsampling.
    pub seed: u64,
}

/// Counts co-occurrences over every user's full interaction list.
pub fn count_cooccurrences(train: &InteractionMatrix) -> CooccurrenceStats {
    count_cooccurrences_with(train, CooccurrenceOptions::default())
}

pub fn count_cooccurrences_with(
    train: &InteractionMatrix,
    options: CooccurrenceOptions,
) -> CooccurrenceStats {
    match options.max_items_per_user {
        Some(cap) if (0..train.n_users()).any(|u| train.user_degree(u) > cap) => {
            count_pairs(&truncate_users(train, cap, options.seed))
        }
        _ => count_pairs(train),
    }
}

fn truncate_users(train: &InteractionMatrix, cap: usize, seed: u64) -> InteractionMatrix {
    let mut triplets = Vec::with_capacity(train.nnz());
    for u in 0..train.n_users() {
        let (items, values) = train.user_row(u);
        if items.len() <= cap {
            triplets.extend(items.iter().zip(values).map(|(&i, &r)| (u as u32, i, r)));
        } else {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (u as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for pos in sample(&mut rng, items.len(), cap) {
                triplets.push((u as u32, items[pos], values[pos]));
            }
        }
    }
    InteractionMatrix::from_triplets(train.n_users(), train.n_items(), triplets)
        .expect("subset of a valid matrix is valid")
}

/// Item-major accumulation: row `i` of the upper triangle is gathered from
/// the users of `i` into a dense scratch buffer, so no global pair map is
/// materialized. Rows are independent and computed in parallel.
fn count_pairs(train: &InteractionMatrix) -> CooccurrenceStats {
    let n_items = train.n_items();
    let rows: Vec<Vec<(u32, u32)>> = (0..n_items)
        .into_par_iter()
        .map_init(
            || (vec![0u32; n_items], Vec::<u32>::new()),
            |(scratch, touched), i| {
                for &u in train.item_col(i).0 {
                    let items = train.user_row(u as usize).0;
                    // rows are sorted, so everything after `i` is the j > i part
                    let start = items.partition_point(|&j| j as usize <= i);
                    for &j in &items[start..] {
                        if scratch[j as usize] == 0 {
                            touched.push(j);
                        }
                        scratch[j as usize] += 1;
                    }
                }
                touched.sort_unstable();
                let row: Vec<(u32, u32)> = touched
                    .iter()
                    .map(|&j| (j, std::mem::take(&mut scratch[j as usize])))
                    .collect();
                touched.clear();
                row
            },
        )
        .collect();

    let mut pair_ptr = Vec::with_capacity(n_items + 1);
    pair_ptr.push(0);
    let n_pairs: usize = rows.iter().map(Vec::len).sum();
    let mut pair_items = Vec::with_capacity(n_pairs);
    let mut pair_counts = Vec::with_capacity(n_pairs);
    let mut item_counts = vec![0u64; n_items];
    let mut total = 0u64;
    for (i, row) in rows.into_iter().enumerate() {
        for (j, c) in row {
            pair_items.push(j);
            pair_counts.push(c);
            item_counts[i] += c as u64;
            item_counts[j as usize] += c as u64;
            total += c as u64;
        }
        pair_ptr.push(pair_items.len());
    }

    CooccurrenceStats {
        n_items,
        pair_ptr,
        pair_items,
        pair_counts,
        item_counts,
        total,
    }
}

/// Sparse symmetric item×item matrix with strictly positive off-diagonal
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SppmiMatrix {
    n_items: usize,
    /// Upper-triangle entries `(i, j, s_ij)` with `i < j`, sorted.
    upper: Vec<(u32, u32, f64)>,
    /// Both triangles, compressed by row, for neighbour lookups.
    nbr_ptr: Vec<usize>,
    nbr_items: Vec<u32>,
    nbr_values: Vec<f64>,
}

impl SppmiMatrix {
    pub fn empty(n_items: usize) -> Self {
        Self::from_upper(n_items, Vec::new()).expect("empty SPPMI matrix is valid")
    }

    /// Builds the matrix from one triangle. Entries with `i > j` are
    /// mirrored to `(j, i)`.
    pub fn from_upper(n_items: usize, entries: Vec<(u32, u32, f64)>) -> Result<Self> {
        let mut upper: Vec<(u32, u32, f64)> = entries
            .into_iter()
            .map(|(i, j, s)| if i < j { (i, j, s) } else { (j, i, s) })
            .collect();
        for &(i, j, s) in &upper {
            if i == j {
                return Err(Error::InvalidMatrix(format!("diagonal entry ({i}, {i})")));
            }
            if j as usize >= n_items {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) out of range for {n_items} items"
                )));
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) must be finite and > 0, got {s}"
                )));
            }
        }
        upper.sort_unstable_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = upper
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::InvalidMatrix(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let mut nbr_ptr = vec![0usize; n_items + 1];
        for &(i, j, _) in &upper {
            nbr_ptr[i as usize + 1] += 1;
            nbr_ptr[j as usize + 1] += 1;
        }
        for i in 0..n_items {
            nbr_ptr[i + 1] += nbr_ptr[i];
        }
        let mut next = nbr_ptr.clone();
        let mut nbr_items = vec![0u32; 2 * upper.len()];
        let mut nbr_values = vec![0f64; 2 * upper.len()];
        let mut push = |row: u32, col: u32, s: f64| {
            let slot = next[row as usize];
            nbr_items[slot] = col;
            nbr_values[slot] = s;
            next[row as usize] += 1;
        };
        // lower-triangle neighbours first so every row ends up sorted
        for &(i, j, s) in &upper {
            push(j, i, s);
        }
        for &(i, j, s) in &upper {
            push(i, j, s);
        }
        for i in 0..n_items {
            let range = nbr_ptr[i]..nbr_ptr[i + 1];
            debug_assert!(nbr_items[range].windows(2).all(|w| w[0] < w[1]));
        }

        Ok(Self {
            n_items,
            upper,
            nbr_ptr,
            nbr_items,
            nbr_values,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of stored unordered pairs.
    pub fn nnz(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn upper(&self) -> &[(u32, u32, f64)] {
        &self.upper
    }

    /// Neighbours `j` of `i` with `s_ij > 0` (ascending) and their values.
    pub fn neighbors(&self, i: usize) -> (&[u32], &[f64]) {
        let range = self.nbr_ptr[i]..self.nbr_ptr[i + 1];
        (&self.nbr_items[range.clone()], &self.nbr_values[range])
    }

    /// `s_ij`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (items, values) = self.neighbors(i);
        match items.binary_search(&(j as u32)) {
            Ok(pos) => values[pos],
            Err(_) => 0.0,
        }
    }

    /// Header `M M NNZ` then `i\tj\ts_ij` per stored pair with `i < j`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.n_items, self.n_items, self.nnz())?;
        for &(i, j, s) in &self.upper {
            writeln!(out, "{i}\t{j}\t{s}")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_tsv(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_tsv(BufReader::new(file), path)
    }

    pub fn read_tsv<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (n_items, nnz) = loop {
            let Some((idx, line)) = lines.next() else {
                return Err(Error::parse(origin, 1, "missing `M M NNZ` header"));
            };
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let dims = parse_fields::<usize>(&line, 3)
                .filter(|d| d[0] == d[1])
                .ok_or_else(|| Error::parse(origin, idx + 1, "malformed `M M NNZ` header"))?;
            break (dims[0], dims[2]);
        };
        let mut entries = Vec::with_capacity(nnz);
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let parsed = match fields.as_slice() {
                [i, j, s] => i
                    .parse::<u32>()
                    .ok()
                    .zip(j.parse::<u32>().ok())
                    .zip(s.parse::<f64>().ok()),
                _ => None,
            };
            let Some(((i, j), s)) = parsed else {
                return Err(Error::parse(origin, idx + 1, "expected `i\\tj\\tvalue`"));
            };
            if i >= j {
                return Err(Error::parse(origin, idx + 1, "entries must satisfy i < j"));
            }
            entries.push((i, j, s));
        }
        if entries.len() != nnz {
            return Err(Error::InvalidMatrix(format!(
                "{}: header declares {nnz} entries, found {}",
                origin.display(),
                entries.len()
            )));
        }
        Self::from_upper(n_items, entries)
    }
}

/// Converts pair counts into the SPPMI matrix with shift `ln k`.
///
/// Statistics without any pair (`|D| = 0`) give an empty matrix.
pub fn build_sppmi(stats: &CooccurrenceStats, k: u32) -> Result<SppmiMatrix> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let shift = (k as f64).ln();
    let total = stats.total() as f64;
    let entries: Vec<(u32, u32, f64)> = stats
        .pairs()
        .filter_map(|(i, j, c)| {
            let pmi = (c as f64 * total
                / (stats.item_count(i as usize) as f64 * stats.item_count(j as usize) as f64))
                .ln();
            let s = pmi - shift;
            (s > 0.0).then_some((i, j, s))
        })
        .collect();
    SppmiMatrix::from_upper(stats.n_items(), entries)
}

/// Share of off-diagonal cells without an entry, in percent.
pub fn sppmi_sparsity(s: &SppmiMatrix) -> Result<f64> {
    let m = s.n_items();
    if m < 2 {
        return Err(Error::UndefinedSparsity(m));
    }
    let cells = m as f64 * (m as f64 - 1.0);
    Ok(100.0 * (1.0 - 2.0 * s.nnz() as f64 / cells))
}
