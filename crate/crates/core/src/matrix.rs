//! Sparse user×item interaction storage.
//!
//! Entries are kept twice: compressed by user (row access) and compressed by
//! item (column access). Both views are sorted by the minor index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Nonnegative event counts `r_ui` for `n_users × n_items`.
///
/// Only strictly positive entries are stored. The binary preference
/// `p_ui` is 1 exactly when an entry exists.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    row_ptr: Vec<usize>,
    row_items: Vec<u32>,
    row_values: Vec<f64>,
    col_ptr: Vec<usize>,
    col_users: Vec<u32>,
    col_values: Vec<f64>,
}

impl InteractionMatrix {
    /// Builds a matrix from `(user, item, count)` triplets in any order.
    pub fn from_triplets(
        n_users: usize,
        n_items: usize,
        mut triplets: Vec<(u32, u32, f64)>,
    ) -> Result<Self> {
        if n_users > u32::MAX as usize || n_items > u32::MAX as usize {
            return Err(Error::InvalidMatrix("dimensions exceed u32 range".into()));
        }
        for &(u, i, r) in &triplets {
            if u as usize >= n_users || i as usize >= n_items {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({u}, {i}) out of range for {n_users}x{n_items}"
                )));
            }
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({u}, {i}) has non-positive or non-finite count {r}"
                )));
            }
        }
        triplets.sort_unstable_by_key(|&(u, i, _)| (u, i));
        if let Some(w) = triplets
            .windows(2)
            .find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1)
        {
            return Err(Error::InvalidMatrix(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let nnz = triplets.len();
        let mut row_ptr = vec![0usize; n_users + 1];
        for &(u, _, _) in &triplets {
            row_ptr[u as usize + 1] += 1;
        }
        for u in 0..n_users {
            row_ptr[u + 1] += row_ptr[u];
        }
        let row_items: Vec<u32> = triplets.iter().map(|t| t.1).collect();
        let row_values: Vec<f64> = triplets.iter().map(|t| t.2).collect();

        let mut col_ptr = vec![0usize; n_items + 1];
        for &(_, i, _) in &triplets {
            col_ptr[i as usize + 1] += 1;
        }
        for i in 0..n_items {
            col_ptr[i + 1] += col_ptr[i];
        }
        let mut next = col_ptr.clone();
        let mut col_users = vec![0u32; nnz];
        let mut col_values = vec![0f64; nnz];
        // rows are visited in ascending user order, so each column stays sorted
        for &(u, i, r) in &triplets {
            let slot = next[i as usize];
            col_users[slot] = u;
            col_values[slot] = r;
            next[i as usize] += 1;
        }

        Ok(Self {
            n_users,
            n_items,
            row_ptr,
            row_items,
            row_values,
            col_ptr,
            col_users,
            col_values,
        })
    }

    /// An `n_users × n_items` matrix with no entries.
    pub fn empty(n_users: usize, n_items: usize) -> Self {
        Self::from_triplets(n_users, n_items, Vec::new()).expect("empty matrix is valid")
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.row_items.len()
    }

    /// Items of user `u` (ascending) and their counts.
    pub fn user_row(&self, u: usize) -> (&[u32], &[f64]) {
        let range = self.row_ptr[u]..self.row_ptr[u + 1];
        (&self.row_items[range.clone()], &self.row_values[range])
    }

    /// Users of item `i` (ascending) and their counts.
    pub fn item_col(&self, i: usize) -> (&[u32], &[f64]) {
        let range = self.col_ptr[i]..self.col_ptr[i + 1];
        (&self.col_users[range.clone()], &self.col_values[range])
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.row_ptr[u + 1] - self.row_ptr[u]
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.col_ptr[i + 1] - self.col_ptr[i]
    }

    /// Count `r_ui`, zero when absent.
    pub fn get(&self, u: usize, i: usize) -> f64 {
        let (items, values) = self.user_row(u);
        match items.binary_search(&(i as u32)) {
            Ok(pos) => values[pos],
            Err(_) => 0.0,
        }
    }

    /// Binary preference `p_ui`.
    pub fn preference(&self, u: usize, i: usize) -> f64 {
        if self.contains(u, i) {
            1.0
        } else {
            0.0
        }
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.user_row(u).0.binary_search(&(i as u32)).is_ok()
    }

    /// All entries in user-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.n_users).flat_map(move |u| {
            let (items, values) = self.user_row(u);
            items
                .iter()
                .zip(values)
                .map(move |(&i, &r)| (u as u32, i, r))
        })
    }

    /// Percentage of the `N·M` cells with no entry.
    pub fn sparsity_percent(&self) -> f64 {
        let cells = self.n_users as f64 * self.n_items as f64;
        if cells == 0.0 {
            return 100.0;
        }
        100.0 * (1.0 - self.nnz() as f64 / cells)
    }

    /// Writes the `N M NNZ` header followed by one `user\titem\tcount` line per entry.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.n_users, self.n_items, self.nnz())?;
        for (u, i, r) in self.triplets() {
            writeln!(out, "{u}\t{i}\t{r}")?;
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

    /// Parses the triplet format; `origin` only labels error messages.
    pub fn read_tsv<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (n_users, n_items, nnz) = loop {
            match lines.next() {
                None => return Err(Error::parse(origin, 1, "missing `N M NNZ` header")),
                Some((idx, line)) => {
                    let line = line.map_err(|e| Error::io(origin, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let dims = parse_fields::<usize>(&line, 3).ok_or_else(|| {
                        Error::parse(origin, idx + 1, "malformed `N M NNZ` header")
                    })?;
                    break (dims[0], dims[1], dims[2]);
                }
            }
        };

        let mut triplets = Vec::with_capacity(nnz);
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(u), Some(i), Some(r), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::parse(
                    origin,
                    idx + 1,
                    "expected `user\\titem\\tcount`",
                ));
            };
            let u: u32 = u
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, idx + 1, format!("bad user index `{u}`")))?;
            let i: u32 = i
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, idx + 1, format!("bad item index `{i}`")))?;
            let r: f64 = r
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, idx + 1, format!("bad count `{r}`")))?;
            triplets.push((u, i, r));
        }
        if triplets.len() != nnz {
            return Err(Error::InvalidMatrix(format!(
                "{}: header declares {nnz} entries, found {}",
                origin.display(),
                triplets.len()
            )));
        }
        Self::from_triplets(n_users, n_items, triplets)
    }
}

pub(crate) fn parse_fields<T: std::str::FromStr>(line: &str, expected: usize) -> Option<Vec<T>> {
    let fields: Vec<T> = line
        .split_whitespace()
        .map(|f| f.parse().ok())
        .collect::<Option<_>>()?;
    (fields.len() == expected).then_some(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> InteractionMatrix {
        InteractionMatrix::from_triplets(
            3,
            4,
            vec![
                (2, 1, 1.0),
                (0, 3, 2.0),
                (0, 1, 5.0),
                (1, 0, 1.0),
                (2, 3, 7.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn row_and_column_views_agree() {
        let m = sample();
        assert_eq!(m.nnz(), 5);
        assert_eq!(m.user_row(0), (&[1u32, 3][..], &[5.0, 2.0][..]));
        assert_eq!(m.item_col(3), (&[0u32, 2][..], &[2.0, 7.0][..]));
        assert_eq!(m.item_col(2).0.len(), 0);
        assert_eq!(m.get(2, 3), 7.0);
        assert_eq!(m.get(1, 3), 0.0);
        assert_eq!(m.preference(0, 1), 1.0);
        assert_eq!(m.preference(0, 0), 0.0);
        for i in 0..m.n_items() {
            let (users, values) = m.item_col(i);
            for (&u, &r) in users.iter().zip(values) {
                assert_eq!(m.get(u as usize, i), r);
            }
        }
    }

    #[test]
    fn rejects_invalid_entries() {
        assert!(InteractionMatrix::from_triplets(2, 2, vec![(0, 2, 1.0)]).is_err());
        assert!(InteractionMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(InteractionMatrix::from_triplets(2, 2, vec![(0, 0, 0.0)]).is_err());
        assert!(InteractionMatrix::from_triplets(2, 2, vec![(0, 0, -1.0)]).is_err());
        assert!(InteractionMatrix::from_triplets(2, 2, vec![(0, 0, f64::NAN)]).is_err());
        assert!(InteractionMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0)]).is_err());
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("3 4 5\n0\t1\t5\n"));
        let back = InteractionMatrix::read_tsv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        back.write_tsv(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn read_reports_line_numbers() {
        let text = "2 2 2\n0\t1\t1\n1\tx\t1\n";
        match InteractionMatrix::read_tsv(text.as_bytes(), Path::new("t.tsv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let short = "2 2 3\n0\t1\t1\n";
        assert!(matches!(
            InteractionMatrix::read_tsv(short.as_bytes(), Path::new("t.tsv")),
            Err(Error::InvalidMatrix(_))
        ));
    }

    #[test]
    fn sparsity() {
        assert!((sample().sparsity_percent() - 100.0 * (1.0 - 5.0 / 12.0)).abs() < 1e-12);
    }
}
