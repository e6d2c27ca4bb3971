//! Alternating least squares for the joint objective
//!
//! ```text
//! L(X, Y) = Σ_{u,i} c_ui (p_ui − x_uᵀy_i)²
//!         + Σ_{i<j, s_ij>0} (s_ij − y_iᵀy_j)²
//!         + λ (Σ_u ‖x_u‖² + Σ_i ‖y_i‖²)
//! ```
//!
//! With an empty SPPMI matrix this is plain weighted matrix factorization.
//!
//! Every block update solves its exact normal equations. Unobserved cells
//! are never materialized: the `Σ_i c_ui y_i y_iᵀ` term is split into the
//! shared Gram matrix `YYᵀ` plus `(c_ui − 1) y_i y_iᵀ` over observed items.

use std::borrow::Cow;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Side};
use crate::matrix::InteractionMatrix;
use crate::model::{column, confidence, dot, FactorModel, Hyperparams};
use crate::sppmi::SppmiMatrix;

/// Which objective to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Wmf,
    Cemf,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Wmf => "wmf",
            Mode::Cemf => "cemf",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wmf" => Ok(Mode::Wmf),
            "cemf" => Ok(Mode::Cemf),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

/// How the item half-sweep treats neighbour vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemSweep {
    /// In place, ascending item index; every update sees the newest
    /// neighbour vectors. Each single update is non-increasing in the loss.
    #[default]
    GaussSeidel,
    /// All items read the item factors from the start of the half-sweep and
    /// are updated in parallel. No per-update descent guarantee when the
    /// SPPMI matrix is non-empty.
    Jacobi,
}

impl std::str::FromStr for ItemSweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gauss_seidel" => Ok(ItemSweep::GaussSeidel),
            "jacobi" => Ok(ItemSweep::Jacobi),
            other => Err(Error::InvalidParameter(format!(
                "unknown item sweep `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyperparams: Hyperparams,
    pub mode: Mode,
    #[serde(default)]
    pub item_sweep: ItemSweep,
    /// Stop once the relative decrease of the total loss over a sweep
    /// drops below this value.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl TrainConfig {
    pub fn new(hyperparams: Hyperparams, mode: Mode) -> Self {
        Self {
            hyperparams,
            mode,
            item_sweep: ItemSweep::GaussSeidel,
            tolerance: None,
        }
    }
}

/// The objective split into its three terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub interaction: f64,
    pub embedding: f64,
    pub regularization: f64,
    pub total: f64,
}

/// Draws `X` and `Y` i.i.d. from `N(0, init_scale²)`; `X` first, column by column.
pub fn init_model(n_users: usize, n_items: usize, hp: &Hyperparams) -> FactorModel {
    let d = hp.d;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut draw = |len: usize| -> Vec<f64> {
        if hp.init_scale == 0.0 {
            return vec![0.0; len];
        }
        let normal = Normal::new(0.0, hp.init_scale).expect("init_scale validated as finite");
        (0..len).map(|_| normal.sample(&mut rng)).collect()
    };
    let x = DMatrix::from_vec(d, n_users, draw(d * n_users));
    let y = DMatrix::from_vec(d, n_items, draw(d * n_items));
    FactorModel {
        x,
        y,
        hyperparams: *hp,
    }
}

/// Entries accumulated per partial sum. Partials are always combined in
/// chunk order, so sequential and parallel accumulation agree bitwise.
const CHUNK: usize = 256;

/// Lower triangle of `Σ w_k v_k v_kᵀ` and `Σ t_k v_k` over one run of entries.
struct Partial {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Partial {
    fn zeros(d: usize) -> Self {
        Self {
            a: vec![0.0; d * d],
            b: vec![0.0; d],
        }
    }

    /// Adds `w·v vᵀ` (lower triangle) and `t·v`.
    #[inline]
    fn add(&mut self, v: &[f64], w: f64, t: f64) {
        let d = v.len();
        for q in 0..d {
            let wq = w * v[q];
            let col = &mut self.a[q * d..(q + 1) * d];
            for p in q..d {
                col[p] += wq * v[p];
            }
            self.b[q] += t * v[q];
        }
    }

    fn merge(&mut self, other: &Partial) {
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += y;
        }
        for (x, y) in self.b.iter_mut().zip(&other.b) {
            *x += y;
        }
    }
}

/// Accumulates over `idx` with per-entry `(weight, target)` from `coef`,
/// reading vectors as columns of `vectors`.
fn accumulate<F>(vectors: &DMatrix<f64>, idx: &[u32], coef: F, parallel: bool) -> Partial
where
    F: Fn(usize) -> (f64, f64) + Sync,
{
    let d = vectors.nrows();
    let chunk_sum = |start: usize| {
        let end = (start + CHUNK).min(idx.len());
        let mut part = Partial::zeros(d);
        for k in start..end {
            let (w, t) = coef(k);
            part.add(column(vectors, idx[k] as usize), w, t);
        }
        part
    };
    let starts: Vec<usize> = (0..idx.len()).step_by(CHUNK).collect();
    let partials: Vec<Partial> = if parallel && starts.len() > 1 {
        starts.par_iter().map(|&s| chunk_sum(s)).collect()
    } else {
        starts.iter().map(|&s| chunk_sum(s)).collect()
    };
    let mut iter = partials.into_iter();
    let mut total = iter.next().unwrap_or_else(|| Partial::zeros(d));
    for p in iter {
        total.merge(&p);
    }
    total
}

/// `fixed · fixedᵀ + λI`, the part of every normal matrix shared by all
/// rows of one half-sweep.
fn regularized_gram(fixed: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut g = fixed * fixed.transpose();
    for q in 0..g.nrows() {
        g[(q, q)] += lambda;
    }
    g
}

/// Solves `(base + Σ parts.a) v = Σ parts.b` into `out`.
fn solve_into(
    base: &DMatrix<f64>,
    parts: &[&Partial],
    out: &mut [f64],
    side: Side,
    index: usize,
) -> Result<()> {
    let d = base.nrows();
    let mut a = base.clone();
    let mut b = DVector::zeros(d);
    {
        let slice = a.as_mut_slice();
        for part in parts {
            for q in 0..d {
                for p in q..d {
                    slice[q * d + p] += part.a[q * d + p];
                }
                b[q] += part.b[q];
            }
        }
    }
    let chol = Cholesky::new(a).ok_or(Error::Singular { side, index })?;
    chol.solve_mut(&mut b);
    out.copy_from_slice(b.as_slice());
    Ok(())
}

/// Interaction-only least-squares half-sweep: every column of `target` is
/// solved against `fixed` in parallel.
fn interaction_half_sweep<'m, L>(
    target: &mut DMatrix<f64>,
    fixed: &DMatrix<f64>,
    lists: L,
    hp: &Hyperparams,
    side: Side,
) -> Result<()>
where
    L: Fn(usize) -> (&'m [u32], &'m [f64]) + Sync,
{
    let d = target.nrows();
    let base = regularized_gram(fixed, hp.lambda);
    let alpha = hp.alpha;
    target
        .as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .try_for_each(|(index, out)| {
            let (idx, counts) = lists(index);
            if idx.is_empty() {
                // zero right-hand side
                out.fill(0.0);
                return Ok(());
            }
            let part = accumulate(
                fixed,
                idx,
                |k| {
                    let c = confidence(counts[k], alpha);
                    (c - 1.0, c)
                },
                false,
            );
            solve_into(&base, &[&part], out, side, index)
        })
}

/// Recomputes every user vector with the item vectors held fixed.
pub fn update_users(
    model: &mut FactorModel,
    train: &InteractionMatrix,
    hp: &Hyperparams,
) -> Result<()> {
    model.check_dims(train.n_users(), train.n_items())?;
    let FactorModel { x, y, .. } = model;
    interaction_half_sweep(x, y, |u| train.user_row(u), hp, Side::User)
}

/// Item half-sweep of plain weighted matrix factorization.
pub fn update_items_wmf(
    model: &mut FactorModel,
    train: &InteractionMatrix,
    hp: &Hyperparams,
) -> Result<()> {
    model.check_dims(train.n_users(), train.n_items())?;
    let FactorModel { x, y, .. } = model;
    interaction_half_sweep(y, x, |i| train.item_col(i), hp, Side::Item)
}

/// Item half-sweep of the joint objective, in place and in ascending item
/// order.
pub fn update_items(
    model: &mut FactorModel,
    train: &InteractionMatrix,
    sppmi: &SppmiMatrix,
    hp: &Hyperparams,
) -> Result<()> {
    update_items_with(model, train, sppmi, hp, ItemSweep::GaussSeidel)
}

pub fn update_items_with(
    model: &mut FactorModel,
    train: &InteractionMatrix,
    sppmi: &SppmiMatrix,
    hp: &Hyperparams,
    sweep: ItemSweep,
) -> Result<()> {
    check_item_inputs(model, train, sppmi)?;
    let d = model.d();
    let FactorModel { x, y, .. } = model;
    let system = ItemSystem::new(x, train, sppmi, hp);
    match sweep {
        ItemSweep::GaussSeidel => {
            let mut scratch = vec![0.0; d];
            for i in 0..y.ncols() {
                system.solve(i, y, &mut scratch, true)?;
                y.as_mut_slice()[i * d..(i + 1) * d].copy_from_slice(&scratch);
            }
            Ok(())
        }
        ItemSweep::Jacobi => {
            let stale = y.clone();
            y.as_mut_slice()
                .par_chunks_mut(d)
                .enumerate()
                .try_for_each(|(i, out)| system.solve(i, &stale, out, false))
        }
    }
}

/// Re-solves the single item vector `y_i` with everything else fixed.
pub fn update_item(
    model: &mut FactorModel,
    train: &InteractionMatrix,
    sppmi: &SppmiMatrix,
    hp: &Hyperparams,
    i: usize,
) -> Result<()> {
    check_item_inputs(model, train, sppmi)?;
    let d = model.d();
    let mut scratch = vec![0.0; d];
    ItemSystem::new(&model.x, train, sppmi, hp).solve(i, &model.y, &mut scratch, true)?;
    model.y.as_mut_slice()[i * d..(i + 1) * d].copy_from_slice(&scratch);
    Ok(())
}

fn check_item_inputs(
    model: &FactorModel,
    train: &InteractionMatrix,
    sppmi: &SppmiMatrix,
) -> Result<()> {
    model.check_dims(train.n_users(), train.n_items())?;
    if sppmi.n_items() != train.n_items() {
        return Err(Error::DimensionMismatch(format!(
            "SPPMI matrix has {} items, interactions have {}",
            sppmi.n_items(),
            train.n_items()
        )));
    }
    Ok(())
}

/// Normal equations of the item subproblems for fixed user factors.
struct ItemSystem<'a> {
    base: DMatrix<f64>,
    x: &'a DMatrix<f64>,
    train: &'a InteractionMatrix,
    sppmi: &'a SppmiMatrix,
    alpha: f64,
}

impl<'a> ItemSystem<'a> {
    fn new(
        x: &'a DMatrix<f64>,
        train: &'a InteractionMatrix,
        sppmi: &'a SppmiMatrix,
        hp: &Hyperparams,
    ) -> Self {
        Self {
            base: regularized_gram(x, hp.lambda),
            x,
            train,
            sppmi,
            alpha: hp.alpha,
        }
    }

    /// Solves for `y_i`, reading neighbour vectors from `y_now`.
    fn solve(&self, i: usize, y_now: &DMatrix<f64>, out: &mut [f64], parallel: bool) -> Result<()> {
        let (users, counts) = self.train.item_col(i);
        let user_part = (!users.is_empty()).then(|| {
            accumulate(
                self.x,
                users,
                |k| {
                    let c = confidence(counts[k], self.alpha);
                    (c - 1.0, c)
                },
                parallel,
            )
        });
        let (nbrs, values) = self.sppmi.neighbors(i);
        let nbr_part =
            (!nbrs.is_empty()).then(|| accumulate(y_now, nbrs, |k| (1.0, values[k]), parallel));
        let parts: Vec<&Partial> = user_part.iter().chain(nbr_part.iter()).collect();
        if parts.is_empty() {
            out.fill(0.0);
            return Ok(());
        }
        solve_into(&self.base, &parts, out, Side::Item, i)
    }
}

/// Evaluates the objective without forming any dense N×M product.
///
/// `Σ_{u,i} (x_uᵀy_i)²` equals the elementwise product sum of `XXᵀ` and
/// `YYᵀ`; observed cells then replace their `(x_uᵀy_i)²` contribution by
/// `c_ui (1 − x_uᵀy_i)²`.
pub fn loss(
    model: &FactorModel,
    train: &InteractionMatrix,
    sppmi: &SppmiMatrix,
    hp: &Hyperparams,
) -> LossBreakdown {
    let gx = &model.x * model.x.transpose();
    let gy = &model.y * model.y.transpose();
    let all_pairs: f64 = gx.iter().zip(gy.iter()).map(|(a, b)| a * b).sum();

    let observed = chunked_sum(train.n_users(), |u| {
        let (items, counts) = train.user_row(u);
        let xu = model.user(u);
        items
            .iter()
            .zip(counts)
            .map(|(&i, &r)| {
                let s = dot(xu, model.item(i as usize));
                confidence(r, hp.alpha) * (1.0 - s) * (1.0 - s) - s * s
            })
            .sum()
    });

    let upper = sppmi.upper();
    let embedding = chunked_sum(upper.len(), |k| {
        let (i, j, s) = upper[k];
        let e = s - dot(model.item(i as usize), model.item(j as usize));
        e * e
    });

    let norms = model.x.norm_squared() + model.y.norm_squared();
    let interaction = all_pairs + observed;
    let regularization = hp.lambda * norms;
    LossBreakdown {
        interaction,
        embedding,
        regularization,
        total: interaction + embedding + regularization,
    }
}

/// Parallel sum with a fixed reduction order.
fn chunked_sum<F>(len: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    const BLOCK: usize = 1024;
    let partials: Vec<f64> = (0..len.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| (b * BLOCK..((b + 1) * BLOCK).min(len)).map(&term).sum())
        .collect();
    partials.iter().sum()
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: FactorModel,
    /// Loss after every completed sweep.
    pub trace: Vec<LossBreakdown>,
    /// Whether the tolerance criterion stopped training early.
    pub converged: bool,
}

/// Step-by-step ALS driver.
pub struct Trainer<'a> {
    train: &'a InteractionMatrix,
    sppmi: Cow<'a, SppmiMatrix>,
    config: TrainConfig,
    model: FactorModel,
    trace: Vec<LossBreakdown>,
}

impl<'a> Trainer<'a> {
    /// Initializes a fresh model. `sppmi` is required for [`Mode::Cemf`]
    /// and ignored for [`Mode::Wmf`].
    pub fn new(
        train: &'a InteractionMatrix,
        sppmi: Option<&'a SppmiMatrix>,
        config: TrainConfig,
    ) -> Result<Self> {
        config.hyperparams.validate()?;
        let model = init_model(train.n_users(), train.n_items(), &config.hyperparams);
        Self::with_model(train, sppmi, config, model)
    }

    /// Continues from an existing model.
    pub fn with_model(
        train: &'a InteractionMatrix,
        sppmi: Option<&'a SppmiMatrix>,
        config: TrainConfig,
        model: FactorModel,
    ) -> Result<Self> {
        config.hyperparams.validate()?;
        if let Some(tol) = config.tolerance {
            if !(tol >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "tolerance must be >= 0, got {tol}"
                )));
            }
        }
        if model.d() != config.hyperparams.d {
            return Err(Error::DimensionMismatch(format!(
                "model has d = {}, config has d = {}",
                model.d(),
                config.hyperparams.d
            )));
        }
        model.check_dims(train.n_users(), train.n_items())?;
        let sppmi = match (config.mode, sppmi) {
            (Mode::Cemf, Some(s)) => {
                if s.n_items() != train.n_items() {
                    return Err(Error::DimensionMismatch(format!(
                        "SPPMI matrix has {} items, interactions have {}",
                        s.n_items(),
                        train.n_items()
                    )));
                }
                Cow::Borrowed(s)
            }
            (Mode::Cemf, None) => {
                return Err(Error::InvalidParameter(
                    "cemf mode requires an SPPMI matrix".into(),
                ))
            }
            (Mode::Wmf, _) => Cow::Owned(SppmiMatrix::empty(train.n_items())),
        };
        Ok(Self {
            train,
            sppmi,
            config,
            model,
            trace: Vec::new(),
        })
    }

    pub fn model(&self) -> &FactorModel {
        &self.model
    }

    pub fn trace(&self) -> &[LossBreakdown] {
        &self.trace
    }

    pub fn sppmi(&self) -> &SppmiMatrix {
        &self.sppmi
    }

    /// Current objective value.
    pub fn loss(&self) -> LossBreakdown {
        loss(
            &self.model,
            self.train,
            &self.sppmi,
            &self.config.hyperparams,
        )
    }

    /// One user half-sweep followed by one item half-sweep.
    pub fn sweep(&mut self) -> Result<LossBreakdown> {
        let hp = self.config.hyperparams;
        let sweep = self.trace.len() + 1;
        update_users(&mut self.model, self.train, &hp)?;
        self.check_finite(sweep)?;
        match self.config.mode {
            Mode::Wmf => update_items_wmf(&mut self.model, self.train, &hp)?,
            Mode::Cemf => update_items_with(
                &mut self.model,
                self.train,
                &self.sppmi,
                &hp,
                self.config.item_sweep,
            )?,
        }
        self.check_finite(sweep)?;
        let l = self.loss();
        log::debug!(
            "sweep {sweep}: total {:.6} (interaction {:.6}, embedding {:.6}, reg {:.6})",
            l.total,
            l.interaction,
            l.embedding,
            l.regularization
        );
        self.trace.push(l);
        Ok(l)
    }

    fn check_finite(&self, sweep: usize) -> Result<()> {
        match self.model.first_non_finite() {
            Some((side, index)) => Err(Error::NonFinite { sweep, side, index }),
            None => Ok(()),
        }
    }

    pub fn finish(self, converged: bool) -> FitResult {
        FitResult {
            model: self.model,
            trace: self.trace,
            converged,
        }
    }
}

/// Initializes and runs up to `n_iterations` sweeps.
pub fn fit(
    train: &InteractionMatrix,
    sppmi: Option<&SppmiMatrix>,
    config: &TrainConfig,
) -> Result<FitResult> {
    let mut trainer = Trainer::new(train, sppmi, *config)?;
    let mut previous: Option<f64> = None;
    for _ in 0..config.hyperparams.n_iterations {
        let current = trainer.sweep()?.total;
        if let (Some(tol), Some(prev)) = (config.tolerance, previous) {
            let scale = prev.abs().max(f64::MIN_POSITIVE);
            if (prev - current) / scale < tol {
                log::info!(
                    "converged after {} sweeps (loss {current:.6})",
                    trainer.trace().len()
                );
                return Ok(trainer.finish(true));
            }
        }
        previous = Some(current);
    }
    Ok(trainer.finish(false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(d: usize, alpha: f64, lambda: f64) -> Hyperparams {
        Hyperparams {
            d,
            alpha,
            lambda,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_seeded() {
        let h = hp(3, 1.0, 0.1);
        let a = init_model(4, 5, &h);
        assert_eq!(a, init_model(4, 5, &h));
        let b = init_model(4, 5, &Hyperparams { seed: 1, ..h });
        assert!(a.x.iter().zip(b.x.iter()).any(|(p, q)| p != q));
        let z = init_model(
            4,
            5,
            &Hyperparams {
                init_scale: 0.0,
                ..h
            },
        );
        assert!(z.x.iter().chain(z.y.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_items_give_zero_users() {
        let h = hp(2, 1.0, 0.1);
        let train = InteractionMatrix::from_triplets(2, 2, vec![(0, 0, 1.0)]).unwrap();
        let mut model = init_model(
            2,
            2,
            &Hyperparams {
                init_scale: 0.0,
                ..h
            },
        );
        update_users(&mut model, &train, &h).unwrap();
        assert!(model.x.iter().all(|&v| v == 0.0));

        // user 1 has no interactions: x_1 = 0 for any Y
        let mut model = init_model(
            2,
            2,
            &Hyperparams {
                init_scale: 1.0,
                ..h
            },
        );
        update_users(&mut model, &train, &h).unwrap();
        assert_eq!(model.user(1), &[0.0, 0.0]);
        assert!(model.user(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn scalar_user_update() {
        let h = hp(1, 1.0, 0.5);
        let train = InteractionMatrix::from_triplets(1, 1, vec![(0, 0, 1.0)]).unwrap();
        let mut model = FactorModel::new(
            DMatrix::from_vec(1, 1, vec![0.0]),
            DMatrix::from_vec(1, 1, vec![2.0]),
            h,
        )
        .unwrap();
        update_users(&mut model, &train, &h).unwrap();
        // (2·4 + 0.5)⁻¹ · (2·2·1)
        assert!((model.user(0)[0] - 4.0 / 8.5).abs() < 1e-15);
        assert!((model.user(0)[0] - 0.470_588_235_294_117_6).abs() < 1e-12);
    }

    #[test]
    fn scalar_item_update_with_neighbour() {
        let h = hp(1, 1.0, 0.1);
        // no users at all, so the interaction term vanishes entirely
        let train = InteractionMatrix::empty(0, 2);
        let s = SppmiMatrix::from_upper(2, vec![(0, 1, 3f64.ln())]).unwrap();
        let mut model = FactorModel::new(
            DMatrix::zeros(1, 0),
            DMatrix::from_vec(1, 2, vec![5.0, 1.0]),
            h,
        )
        .unwrap();
        update_items(&mut model, &train, &s, &h).unwrap();
        // y_0 = (1 + 0.1)⁻¹ · ln 3 with y_1 = 1
        let y0 = 3f64.ln() / 1.1;
        assert!((model.item(0)[0] - y0).abs() < 1e-14);
        assert!((y0 - 0.998_738_444_243_736).abs() < 1e-12);
        // y_1 then sees the updated y_0
        let y1 = y0 * 3f64.ln() / (y0 * y0 + 0.1);
        assert!((model.item(1)[0] - y1).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_reported() {
        let h = hp(2, 0.0, 0.0);
        let train = InteractionMatrix::from_triplets(1, 1, vec![(0, 0, 1.0)]).unwrap();
        let mut model = FactorModel::new(
            DMatrix::zeros(2, 1),
            DMatrix::from_vec(2, 1, vec![1.0, 0.0]),
            h,
        )
        .unwrap();
        assert!(matches!(
            update_users(&mut model, &train, &h),
            Err(Error::Singular {
                side: Side::User,
                index: 0
            })
        ));
    }

    #[test]
    fn cemf_requires_sppmi() {
        let train = InteractionMatrix::from_triplets(1, 2, vec![(0, 0, 1.0)]).unwrap();
        let cfg = TrainConfig::new(hp(2, 1.0, 0.1), Mode::Cemf);
        assert!(matches!(
            fit(&train, None, &cfg),
            Err(Error::InvalidParameter(_))
        ));
        let wrong = SppmiMatrix::empty(3);
        assert!(matches!(
            fit(&train, Some(&wrong), &cfg),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn tolerance_stops_early() {
        let train = InteractionMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 1.0), (0, 1, 1.0), (1, 1, 2.0), (2, 2, 1.0)],
        )
        .unwrap();
        let mut cfg = TrainConfig::new(
            Hyperparams {
                n_iterations: 200,
                ..hp(2, 1.0, 0.1)
            },
            Mode::Wmf,
        );
        cfg.tolerance = Some(1e-4);
        let res = fit(&train, None, &cfg).unwrap();
        assert!(res.converged);
        assert!(res.trace.len() < 200);
        cfg.tolerance = None;
        let res = fit(&train, None, &cfg).unwrap();
        assert_eq!(res.trace.len(), 200);
        assert!(!res.converged);
    }

    #[test]
    fn loss_at_zero_model() {
        let h = hp(2, 3.0, 0.5);
        let train = InteractionMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (1, 2, 1.0)]).unwrap();
        let s = SppmiMatrix::from_upper(3, vec![(0, 1, 0.5), (1, 2, 2.0)]).unwrap();
        let model = init_model(
            2,
            3,
            &Hyperparams {
                init_scale: 0.0,
                ..h
            },
        );
        let l = loss(&model, &train, &s, &h);
        assert_eq!(l.interaction, 2.0 * (1.0 + 3.0));
        assert_eq!(l.embedding, 0.25 + 4.0);
        assert_eq!(l.regularization, 0.0);
        assert_eq!(l.total, 8.0 + 4.25);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("WMF".parse::<Mode>().unwrap(), Mode::Wmf);
        assert_eq!("cemf".parse::<Mode>().unwrap(), Mode::Cemf);
        assert!("als".parse::<Mode>().is_err());
    }
}
