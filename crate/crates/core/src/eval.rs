//! Top-n recommendation and Precision@n / Recall@n.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::InteractionMatrix;
use crate::model::{dot, FactorModel};

/// Higher score first, ties to the lower item index.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    item: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // -0.0 and 0.0 tie; total_cmp only orders NaNs
        self.score
            .partial_cmp(&other.score)
            .unwrap_or_else(|| self.score.total_cmp(&other.score))
            .then_with(|| other.item.cmp(&self.item))
    }
}

/// The `n` best-scored items for `u` that appear in none of `exclude`,
/// with their scores, best first.
pub fn recommend_scored(
    model: &FactorModel,
    exclude: &[&InteractionMatrix],
    u: usize,
    n: usize,
) -> Vec<(u32, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let xu = model.user(u);
    let excluded: Vec<&[u32]> = exclude.iter().map(|m| m.user_row(u).0).collect();
    let mut cursors = vec![0usize; excluded.len()];
    let mut heap: BinaryHeap<Reverse<Candidate>> = BinaryHeap::with_capacity(n + 1);
    for i in 0..model.n_items() as u32 {
        // exclusion lists are sorted, so a forward cursor per list suffices
        let mut skip = false;
        for (list, cur) in excluded.iter().zip(cursors.iter_mut()) {
            while *cur < list.len() && list[*cur] < i {
                *cur += 1;
            }
            if *cur < list.len() && list[*cur] == i {
                skip = true;
            }
        }
        if skip {
            continue;
        }
        let cand = Candidate {
            score: dot(xu, model.item(i as usize)),
            item: i,
        };
        if heap.len() < n {
            heap.push(Reverse(cand));
        } else if let Some(Reverse(worst)) = heap.peek() {
            if cand > *worst {
                heap.pop();
                heap.push(Reverse(cand));
            }
        }
    }
    let mut best: Vec<Candidate> = heap.into_iter().map(|Reverse(c)| c).collect();
    best.sort_unstable_by(|a, b| b.cmp(a));
    best.into_iter().map(|c| (c.item, c.score)).collect()
}

/// Top-`n` items for user `u` among items it has no training interaction
/// with. Returns fewer than `n` when not enough items are eligible.
pub fn recommend_top_n(
    model: &FactorModel,
    train: &InteractionMatrix,
    u: usize,
    n: usize,
) -> Vec<u32> {
    recommend_scored(model, &[train], u, n)
        .into_iter()
        .map(|(i, _)| i)
        .collect()
}

/// Ranked lists `S_u(n)` for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct Recommendations {
    pub n: usize,
    pub lists: Vec<Vec<u32>>,
}

impl Recommendations {
    /// Computes lists of length `n` for every user in parallel.
    pub fn compute(model: &FactorModel, exclude: &[&InteractionMatrix], n: usize) -> Self {
        let lists = (0..model.n_users())
            .into_par_iter()
            .map(|u| {
                recommend_scored(model, exclude, u, n)
                    .into_iter()
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Self { n, lists }
    }

    /// The first `n` entries of user `u`'s list.
    pub fn top(&self, u: usize, n: usize) -> &[u32] {
        let list = &self.lists[u];
        &list[..n.min(list.len())]
    }
}

/// Training-activity bucket of a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityGroup {
    /// Fewer than 20 training interactions.
    Low,
    /// 20 to 100 inclusive.
    Medium,
    /// More than 100.
    High,
}

impl ActivityGroup {
    pub const ALL: [ActivityGroup; 3] = [
        ActivityGroup::Low,
        ActivityGroup::Medium,
        ActivityGroup::High,
    ];

    pub fn of(train_interactions: usize) -> Self {
        match train_interactions {
            0..=19 => ActivityGroup::Low,
            20..=100 => ActivityGroup::Medium,
            _ => ActivityGroup::High,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityGroup::Low => "low",
            ActivityGroup::Medium => "medium",
            ActivityGroup::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtN {
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Means over the users that have at least one ground-truth item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub evaluated_users: usize,
    /// Users in scope whose ground-truth set is empty.
    pub skipped_users: usize,
    /// `None` when no user was evaluated.
    pub metrics: Option<Vec<MetricsAtN>>,
}

impl MetricSet {
    pub fn at(&self, n: usize) -> Option<MetricsAtN> {
        self.metrics.as_ref()?.iter().find(|m| m.n == n).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: ActivityGroup,
    #[serde(flatten)]
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_values: Vec<usize>,
    pub overall: MetricSet,
    pub groups: Vec<GroupMetrics>,
}

fn check_n_values(
    recs: &Recommendations,
    test: &InteractionMatrix,
    n_values: &[usize],
) -> Result<()> {
    if n_values.is_empty() || n_values.contains(&0) {
        return Err(Error::InvalidParameter(
            "n values must be a non-empty list of positive integers".into(),
        ));
    }
    let max_n = *n_values.iter().max().unwrap();
    if recs.n < max_n {
        return Err(Error::InvalidParameter(format!(
            "recommendation lists hold {} items, need {max_n}",
            recs.n
        )));
    }
    if recs.lists.len() != test.n_users() {
        return Err(Error::DimensionMismatch(format!(
            "{} recommendation lists for {} users",
            recs.lists.len(),
            test.n_users()
        )));
    }
    Ok(())
}

/// Precision and recall over the users accepted by `in_scope`.
///
/// Per-user hit counts are computed in parallel; the means are then summed
/// in ascending user order.
fn metric_set<F>(
    recs: &Recommendations,
    test: &InteractionMatrix,
    n_values: &[usize],
    in_scope: F,
) -> MetricSet
where
    F: Fn(usize) -> bool + Sync,
{
    let per_user: Vec<Option<(usize, Vec<usize>)>> = (0..test.n_users())
        .into_par_iter()
        .map(|u| {
            if !in_scope(u) {
                return None;
            }
            let truth = test.user_row(u).0;
            let hits = n_values
                .iter()
                .map(|&n| {
                    recs.top(u, n)
                        .iter()
                        .filter(|i| truth.binary_search(i).is_ok())
                        .count()
                })
                .collect();
            Some((truth.len(), hits))
        })
        .collect();

    let mut evaluated = 0;
    let mut skipped = 0;
    let mut precision = vec![0.0; n_values.len()];
    let mut recall = vec![0.0; n_values.len()];
    for (truth_len, hits) in per_user.into_iter().flatten() {
        if truth_len == 0 {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        for (k, (&n, &h)) in n_values.iter().zip(&hits).enumerate() {
            precision[k] += h as f64 / n as f64;
            recall[k] += h as f64 / truth_len as f64;
        }
    }
    let metrics = (evaluated > 0).then(|| {
        n_values
            .iter()
            .enumerate()
            .map(|(k, &n)| MetricsAtN {
                n,
                precision: precision[k] / evaluated as f64,
                recall: recall[k] / evaluated as f64,
            })
            .collect()
    });
    MetricSet {
        evaluated_users: evaluated,
        skipped_users: skipped,
        metrics,
    }
}

/// Precision@n and Recall@n over all users with a non-empty test set.
pub fn precision_recall_at_n(
    recs: &Recommendations,
    test: &InteractionMatrix,
    n_values: &[usize],
) -> Result<MetricSet> {
    check_n_values(recs, test, n_values)?;
    Ok(metric_set(recs, test, n_values, |_| true))
}

/// The same metrics restricted to each training-activity group.
pub fn group_report(
    recs: &Recommendations,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    n_values: &[usize],
) -> Result<Vec<GroupMetrics>> {
    check_n_values(recs, test, n_values)?;
    if train.n_users() != test.n_users() {
        return Err(Error::DimensionMismatch(
            "train and test user counts differ".into(),
        ));
    }
    Ok(ActivityGroup::ALL
        .iter()
        .map(|&group| GroupMetrics {
            group,
            metrics: metric_set(recs, test, n_values, |u| {
                ActivityGroup::of(train.user_degree(u)) == group
            }),
        })
        .collect())
}

/// Ranks every user's unseen items and scores them against `test`.
///
/// Items in `train` are always excluded; items in `validation`, when
/// given, are excluded as well.
pub fn evaluate(
    model: &FactorModel,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    validation: Option<&InteractionMatrix>,
    n_values: &[usize],
) -> Result<EvalReport> {
    model.check_dims(train.n_users(), train.n_items())?;
    model.check_dims(test.n_users(), test.n_items())?;
    let mut exclude = vec![train];
    if let Some(v) = validation {
        model.check_dims(v.n_users(), v.n_items())?;
        exclude.push(v);
    }
    let max_n = n_values.iter().copied().max().unwrap_or(0);
    let recs = Recommendations::compute(model, &exclude, max_n);
    Ok(EvalReport {
        n_values: n_values.to_vec(),
        overall: precision_recall_at_n(&recs, test, n_values)?,
        groups: group_report(&recs, train, test, n_values)?,
    })
}

impl EvalReport {
    /// Rows `group,users,n,metric,value`; groups without users are omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,users,n,metric,value\n");
        let sets = std::iter::once(("all", &self.overall))
            .chain(self.groups.iter().map(|g| (g.group.name(), &g.metrics)));
        for (name, set) in sets {
            for m in set.metrics.iter().flatten() {
                let users = set.evaluated_users;
                let _ = writeln!(out, "{name},{users},{},precision,{}", m.n, m.precision);
                let _ = writeln!(out, "{name},{users},{},recall,{}", m.n, m.recall);
            }
        }
        out
    }

    pub fn group(&self, group: ActivityGroup) -> Option<&MetricSet> {
        self.groups
            .iter()
            .find(|g| g.group == group)
            .map(|g| &g.metrics)
    }
}
