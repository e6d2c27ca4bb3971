//! Brute-force reference implementations used by the integration tests.
//!
//! Everything here works on plain dense arrays built directly from the
//! generated data, never on the sparse structures under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use cemf_core::{FactorModel, Hyperparams, InteractionMatrix, SppmiMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random problem with dense copies of its data.
pub struct Instance {
    pub n_users: usize,
    pub n_items: usize,
    /// `counts[u][i]`, zero when unobserved.
    pub counts: Vec<Vec<f64>>,
    /// Full symmetric SPPMI values, zero diagonal.
    pub s_dense: Vec<Vec<f64>>,
    pub train: InteractionMatrix,
    pub sppmi: SppmiMatrix,
    pub hp: Hyperparams,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random counts in 1..=5 with random density, random positive symmetric
/// SPPMI values, and random hyperparameters with `λ > 0`.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_users: usize,
    max_items: usize,
    max_d: usize,
) -> Instance {
    let n_users = rng.random_range(1..=max_users);
    let n_items = rng.random_range(2..=max_items);
    let density = rng.random_range(0.15..0.6);
    let mut counts = vec![vec![0.0; n_items]; n_users];
    let mut triplets = Vec::new();
    for (u, row) in counts.iter_mut().enumerate() {
        for (i, cell) in row.iter_mut().enumerate() {
            if rng.random_bool(density) {
                *cell = rng.random_range(1..=5) as f64;
                triplets.push((u as u32, i as u32, *cell));
            }
        }
    }
    let s_density = rng.random_range(0.0..0.6);
    let mut s_dense = vec![vec![0.0; n_items]; n_items];
    let mut upper = Vec::new();
    for i in 0..n_items {
        for j in i + 1..n_items {
            if rng.random_bool(s_density) {
                let v = rng.random_range(0.05..2.5);
                s_dense[i][j] = v;
                s_dense[j][i] = v;
                upper.push((i as u32, j as u32, v));
            }
        }
    }
    let alphas = [0.0, 0.5, 1.0, 5.0, 10.0];
    let lambdas = [0.01, 0.1, 1.0];
    let hp = Hyperparams {
        d: rng.random_range(1..=max_d),
        alpha: alphas[rng.random_range(0..alphas.len())],
        lambda: lambdas[rng.random_range(0..lambdas.len())],
        k: 1,
        n_iterations: 15,
        init_scale: rng.random_range(0.05..1.0),
        seed: rng.random(),
    };
    Instance {
        n_users,
        n_items,
        counts,
        s_dense,
        train: InteractionMatrix::from_triplets(n_users, n_items, triplets).unwrap(),
        sppmi: SppmiMatrix::from_upper(n_items, upper).unwrap(),
        hp,
    }
}

fn col(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// The full objective evaluated cell by cell.
pub fn dense_loss(x: &DMatrix<f64>, y: &DMatrix<f64>, inst: &Instance, hp: &Hyperparams) -> f64 {
    let mut total = 0.0;
    for u in 0..inst.n_users {
        let xu = col(x, u);
        for i in 0..inst.n_items {
            let r = inst.counts[u][i];
            let c = 1.0 + hp.alpha * r;
            let p = if r > 0.0 { 1.0 } else { 0.0 };
            let e = p - dot(&xu, &col(y, i));
            total += c * e * e;
        }
    }
    for i in 0..inst.n_items {
        for j in i + 1..inst.n_items {
            let s = inst.s_dense[i][j];
            if s > 0.0 {
                let e = s - dot(&col(y, i), &col(y, j));
                total += e * e;
            }
        }
    }
    let norms: f64 = x.iter().chain(y.iter()).map(|v| v * v).sum();
    total + hp.lambda * norms
}

/// Minimizer over `x_u` from the dense normal equations over all items.
pub fn dense_user_solve(
    model: &FactorModel,
    inst: &Instance,
    hp: &Hyperparams,
    u: usize,
) -> DVector<f64> {
    let d = model.d();
    let mut a = DMatrix::<f64>::identity(d, d) * hp.lambda;
    let mut b = DVector::<f64>::zeros(d);
    for i in 0..inst.n_items {
        let yi = DVector::from_vec(col(&model.y, i));
        let r = inst.counts[u][i];
        let c = 1.0 + hp.alpha * r;
        a += &yi * yi.transpose() * c;
        if r > 0.0 {
            b += &yi * c;
        }
    }
    a.lu().solve(&b).expect("regularized system is invertible")
}

/// Minimizer over `y_i` from the dense normal equations, reading the
/// neighbour vectors from `model.y` as given.
pub fn dense_item_solve(
    model: &FactorModel,
    inst: &Instance,
    hp: &Hyperparams,
    i: usize,
) -> DVector<f64> {
    let d = model.d();
    let mut a = DMatrix::<f64>::identity(d, d) * hp.lambda;
    let mut b = DVector::<f64>::zeros(d);
    for u in 0..inst.n_users {
        let xu = DVector::from_vec(col(&model.x, u));
        let r = inst.counts[u][i];
        let c = 1.0 + hp.alpha * r;
        a += &xu * xu.transpose() * c;
        if r > 0.0 {
            b += &xu * c;
        }
    }
    for j in 0..inst.n_items {
        let s = inst.s_dense[i][j];
        if j != i && s > 0.0 {
            let yj = DVector::from_vec(col(&model.y, j));
            a += &yj * yj.transpose();
            b += &yj * s;
        }
    }
    a.lu().solve(&b).expect("regularized system is invertible")
}

/// Which factor column a finite-difference gradient is taken over.
#[derive(Clone, Copy)]
pub enum Block {
    User(usize),
    Item(usize),
}

/// Central-difference gradient of [`dense_loss`] with respect to one column.
pub fn fd_gradient(
    model: &FactorModel,
    inst: &Instance,
    hp: &Hyperparams,
    block: Block,
    step: f64,
) -> Vec<f64> {
    let d = model.d();
    (0..d)
        .map(|k| {
            let eval = |delta: f64| {
                let mut x = model.x.clone();
                let mut y = model.y.clone();
                match block {
                    Block::User(u) => x[(k, u)] += delta,
                    Block::Item(i) => y[(k, i)] += delta,
                }
                dense_loss(&x, &y, inst, hp)
            };
            (eval(step) - eval(-step)) / (2.0 * step)
        })
        .collect()
}

/// Co-occurrence counts from explicit enumeration of every 2-subset of
/// every user's item list.
pub struct BruteCooccurrence {
    pub pairs: BTreeMap<(usize, usize), u64>,
    pub item_counts: Vec<u64>,
    pub total: u64,
}

pub fn brute_cooccurrence(lists: &[Vec<usize>], n_items: usize) -> BruteCooccurrence {
    let mut pairs = BTreeMap::new();
    let mut total = 0;
    for items in lists {
        let mut items = items.clone();
        items.sort_unstable();
        items.dedup();
        for a in 0..items.len() {
            for b in a + 1..items.len() {
                *pairs.entry((items[a], items[b])).or_insert(0) += 1;
                total += 1;
            }
        }
    }
    let mut item_counts = vec![0u64; n_items];
    for (&(i, j), &c) in &pairs {
        item_counts[i] += c;
        item_counts[j] += c;
    }
    BruteCooccurrence {
        pairs,
        item_counts,
        total,
    }
}

/// Kept pairs decided with exact integer arithmetic
/// (`#(i,j)·|D| > k·#(i)·#(j)`), values from a sum of logarithms.
pub fn brute_sppmi(co: &BruteCooccurrence, k: u32) -> BTreeMap<(usize, usize), f64> {
    co.pairs
        .iter()
        .filter(|(&(i, j), &c)| {
            (c as u128) * (co.total as u128)
                > (k as u128) * (co.item_counts[i] as u128) * (co.item_counts[j] as u128)
        })
        .map(|(&(i, j), &c)| {
            let v = (c as f64).ln() + (co.total as f64).ln()
                - (co.item_counts[i] as f64).ln()
                - (co.item_counts[j] as f64).ln()
                - (k as f64).ln();
            ((i, j), v)
        })
        .collect()
}

/// Precision@n and Recall@n by full sort and explicit sets.
pub fn brute_metrics(
    model: &FactorModel,
    train: &[HashSet<usize>],
    test: &[HashSet<usize>],
    n: usize,
) -> Option<(f64, f64)> {
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut evaluated = 0usize;
    for u in 0..model.n_users() {
        if test[u].is_empty() {
            continue;
        }
        let ranked = brute_ranking(model, &train[u], u);
        let hits = ranked
            .iter()
            .take(n)
            .filter(|i| test[u].contains(i))
            .count();
        precision += hits as f64 / n as f64;
        recall += hits as f64 / test[u].len() as f64;
        evaluated += 1;
    }
    (evaluated > 0).then(|| (precision / evaluated as f64, recall / evaluated as f64))
}

/// Every eligible item, best first, ties to the lower index.
pub fn brute_ranking(model: &FactorModel, exclude: &HashSet<usize>, u: usize) -> Vec<usize> {
    let xu = col(&model.x, u);
    let mut scored: Vec<(f64, usize)> = (0..model.n_items())
        .filter(|i| !exclude.contains(i))
        .map(|i| (dot(&xu, &col(&model.y, i)), i))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, i)| i).collect()
}
