//! Coupled PARAFAC2 decomposition of cross-covariance slices.
//!
//! Given L slices `Ω_ℓ` (shape d_ℓ × d), finds `{U_ℓ}`, diagonal `{Σ_ℓ}` and a
//! shared `V` with `Ω_ℓ ≈ U_ℓ Σ_ℓ Vᵀ` under the uniqueness constraint that
//! `U_ℓᵀU_ℓ` is constant across ℓ. The constraint is enforced by construction
//! through the parameterization `U_ℓ = Q_ℓ H` with column-orthonormal `Q_ℓ`
//! and a shared coupling matrix `H`.
//!
//! One ALS sweep:
//!
//! 1. For each ℓ, `Q_ℓ ← polar(Ω_ℓ V Σ_ℓ Hᵀ)` — the orthogonal Procrustes
//!    solution given the other factors.
//! 2. Project `B_ℓ = Q_ℓᵀ Ω_ℓ` and run one CP-ALS cycle for `H`, `{diag Σ_ℓ}`
//!    and `V` on the stacked k × d × L array `B_ℓ ≈ H Σ_ℓ Vᵀ`.
//! 3. Renormalize the columns of `H` and `V` to unit length, absorbing all
//!    scale into the sigma vectors.
//!
//! Every step solves its subproblem exactly, so the squared reconstruction
//! error is non-increasing sweep to sweep.

mod storage;

pub use storage::{load_model, save_model, ModelMeta};

use crate::covariance::CovarianceSlice;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor for the relative-change denominator in the convergence test.
const CONVERGENCE_FLOOR: f64 = 1e-30;
/// Iteration cap handed to the SVD; exceeding it is a numerical breakdown.
const SVD_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Seeded Gaussian draws, orthonormalized.
    Random,
    /// V from the top-k eigenvectors of Σ_ℓ Ω_ℓᵀΩ_ℓ, Q_ℓ from the polar
    /// factor of Ω_ℓV. Deterministic; ignores the seed.
    Svd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rank: usize,
    pub max_sweeps: usize,
    /// Convergence threshold on the relative change of squared error.
    pub rel_tol: f64,
    pub seed: u64,
    pub init: InitStrategy,
    /// Monotone extrapolated line search between sweeps. Plain ALS crawls
    /// through swamps on this problem class; the extrapolation step is only
    /// ever accepted when it strictly lowers the squared error, so every
    /// guarantee of the plain iteration is kept.
    #[serde(default = "default_line_search")]
    pub line_search: bool,
}

fn default_line_search() -> bool {
    true
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rank: 64,
            max_sweeps: 2000,
            rel_tol: 1e-8,
            seed: 0,
            init: InitStrategy::Random,
            line_search: true,
        }
    }
}

/// A fitted coupled decomposition. `U_ℓ = q[ℓ] * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parafac2Model {
    pub rank: usize,
    /// Shared right factor, d × k, unit-norm columns.
    pub v: DMatrix<f64>,
    /// Shared coupling factor, k × k, unit-norm columns.
    pub h: DMatrix<f64>,
    /// Per-group column-orthonormal factors, d_ℓ × k.
    pub q: Vec<DMatrix<f64>>,
    /// Per-group pseudo-singular values, length k.
    pub sigma: Vec<DVector<f64>>,
    /// Relative reconstruction error in [0, 1].
    pub fit: f64,
    /// Number of ALS sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Squared reconstruction error after init and after every sweep.
    pub error_history: Vec<f64>,
}

impl Parafac2Model {
    pub fn group_count(&self) -> usize {
        self.q.len()
    }

    /// `U_ℓ = Q_ℓ H` for one group.
    pub fn u(&self, index: usize) -> Result<DMatrix<f64>, Parafac2Error> {
        let q = self.q.get(index).ok_or(Parafac2Error::IndexOutOfRange {
            index,
            len: self.q.len(),
        })?;
        Ok(q * &self.h)
    }

    /// Largest entry of `|U_ℓᵀU_ℓ − HᵀH|` over all groups: how far the model
    /// strays from the coupling constraint. Zero up to rounding by
    /// construction.
    pub fn coupling_deviation(&self) -> f64 {
        let hth = self.h.transpose() * &self.h;
        let mut worst = 0.0f64;
        for q in &self.q {
            let qtq = q.transpose() * q;
            let utu = self.h.transpose() * qtq * &self.h;
            for (a, b) in utu.iter().zip(hth.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// Largest entry of `|Q_ℓᵀQ_ℓ − I|` over all groups.
    pub fn orthonormality_deviation(&self) -> f64 {
        let eye = DMatrix::<f64>::identity(self.rank, self.rank);
        let mut worst = 0.0f64;
        for q in &self.q {
            let qtq = q.transpose() * q;
            for (a, b) in qtq.iter().zip(eye.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Error)]
pub enum Parafac2Error {
    #[error("no covariance slices given")]
    EmptySliceList,
    #[error("rank {rank} exceeds the smallest usable dimension {max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("slice for group {group:?} is all zero")]
    ZeroInput { group: String },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("group index {index} out of range for {len} groups")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("matrix i/o failure: {0}")]
    Matrix(#[from] crate::model_io::ModelIoError),
    #[error("model metadata: {0}")]
    Metadata(String),
}

fn validate_slices(slices: &[CovarianceSlice]) -> Result<usize, Parafac2Error> {
    let first = slices.first().ok_or(Parafac2Error::EmptySliceList)?;
    let d = first.shared_dim();
    for s in slices {
        if s.shared_dim() != d {
            return Err(Parafac2Error::ShapeMismatch(format!(
                "slice {:?} has {} shared columns, expected {}",
                s.group_id,
                s.shared_dim(),
                d
            )));
        }
    }
    Ok(d)
}

fn validate_options(
    slices: &[CovarianceSlice],
    opts: &SolverOptions,
) -> Result<usize, Parafac2Error> {
    let d = validate_slices(slices)?;
    if opts.rank == 0 {
        return Err(Parafac2Error::InvalidOptions("rank must be at least 1".into()));
    }
    if opts.max_sweeps == 0 {
        return Err(Parafac2Error::InvalidOptions("max_sweeps must be at least 1".into()));
    }
    if !(opts.rel_tol > 0.0) {
        return Err(Parafac2Error::InvalidOptions("rel_tol must be positive".into()));
    }
    let max_rank = slices
        .iter()
        .map(|s| s.control_dim())
        .min()
        .unwrap_or(0)
        .min(d);
    if opts.rank > max_rank {
        return Err(Parafac2Error::RankTooLarge {
            rank: opts.rank,
            max: max_rank,
        });
    }
    Ok(d)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthonormal_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Closest column-orthonormal matrix to `m` in Frobenius norm: `U Vᵀ` from the
/// thin SVD `m = U D Vᵀ`.
fn polar_factor(m: DMatrix<f64>) -> Result<DMatrix<f64>, Parafac2Error> {
    let svd = m
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Parafac2Error::NumericalBreakdown("SVD did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(u * v_t)
}

/// Solves `G X = rhs` for symmetric positive semi-definite `G`, preferring
/// Cholesky and falling back to an SVD least-squares solve when `G` is
/// rank-deficient.
fn solve_gram(g: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, Parafac2Error> {
    if let Some(chol) = g.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let svd = g
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Parafac2Error::NumericalBreakdown("SVD did not converge".into()))?;
    svd.solve(rhs, 1e-12)
        .map_err(|e| Parafac2Error::NumericalBreakdown(e.to_string()))
}

fn scale_columns(m: &mut DMatrix<f64>, s: &DVector<f64>) {
    for r in 0..s.len() {
        let mut col = m.column_mut(r);
        col *= s[r];
    }
}

fn sigma_gram(sigma: &[DVector<f64>], k: usize) -> DMatrix<f64> {
    let mut g = DMatrix::<f64>::zeros(k, k);
    for s in sigma {
        for i in 0..k {
            for j in 0..k {
                g[(i, j)] += s[i] * s[j];
            }
        }
    }
    g
}

fn squared_error(model: &Parafac2Model, slices: &[CovarianceSlice]) -> f64 {
    let mut total = 0.0;
    for (idx, slice) in slices.iter().enumerate() {
        let mut core = model.h.clone();
        scale_columns(&mut core, &model.sigma[idx]);
        let rec = &model.q[idx] * core * model.v.transpose();
        total += (&slice.omega - rec).norm_squared();
    }
    total
}

fn total_norm_squared(slices: &[CovarianceSlice]) -> f64 {
    slices.iter().map(|s| s.omega.norm_squared()).sum()
}

fn check_finite(model: &Parafac2Model) -> Result<(), Parafac2Error> {
    let finite_mat = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
    if !finite_mat(&model.v) || !finite_mat(&model.h) {
        return Err(Parafac2Error::NumericalBreakdown("non-finite factor".into()));
    }
    for q in &model.q {
        if !finite_mat(q) {
            return Err(Parafac2Error::NumericalBreakdown("non-finite factor".into()));
        }
    }
    for s in &model.sigma {
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Parafac2Error::NumericalBreakdown("non-finite sigma".into()));
        }
    }
    Ok(())
}

/// Builds the starting point for the ALS iteration.
pub fn init_model(
    slices: &[CovarianceSlice],
    opts: &SolverOptions,
) -> Result<Parafac2Model, Parafac2Error> {
    let d = validate_options(slices, opts)?;
    let k = opts.rank;

    let (v, q) = match opts.init {
        InitStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let v = orthonormal_columns(gaussian(&mut rng, d, k));
            let q = slices
                .iter()
                .map(|s| orthonormal_columns(gaussian(&mut rng, s.control_dim(), k)))
                .collect::<Vec<_>>();
            (v, q)
        }
        InitStrategy::Svd => {
            let mut gram = DMatrix::<f64>::zeros(d, d);
            for s in slices {
                gram += s.omega.transpose() * &s.omega;
            }
            let eig = gram.symmetric_eigen();
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| {
                eig.eigenvalues[b]
                    .partial_cmp(&eig.eigenvalues[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut v = DMatrix::<f64>::zeros(d, k);
            for (col, &src) in order.iter().take(k).enumerate() {
                v.set_column(col, &eig.eigenvectors.column(src));
            }
            let q = slices
                .iter()
                .map(|s| polar_factor(&s.omega * &v))
                .collect::<Result<Vec<_>, _>>()?;
            (v, q)
        }
    };

    let mut model = Parafac2Model {
        rank: k,
        v,
        h: DMatrix::identity(k, k),
        q,
        sigma: vec![DVector::from_element(k, 1.0); slices.len()],
        fit: 0.0,
        iterations: 0,
        converged: false,
        error_history: Vec::new(),
    };
    let err = squared_error(&model, slices);
    let total = total_norm_squared(slices);
    model.fit = if total > 0.0 { (err / total).sqrt() } else { 0.0 };
    model.error_history.push(err);
    Ok(model)
}

fn sweep_in_place(
    model: &mut Parafac2Model,
    slices: &[CovarianceSlice],
) -> Result<(), Parafac2Error> {
    let k = model.rank;
    let l = slices.len();

    // (a) Procrustes update of each Q_ℓ.
    for idx in 0..l {
        let mut target = &slices[idx].omega * &model.v; // d_ℓ × k
        scale_columns(&mut target, &model.sigma[idx]);
        let target = target * model.h.transpose();
        model.q[idx] = polar_factor(target)?;
    }

    // (b) One CP-ALS cycle on the projected slices B_ℓ = Q_ℓᵀΩ_ℓ.
    let projected: Vec<DMatrix<f64>> = (0..l)
        .map(|idx| model.q[idx].transpose() * &slices[idx].omega)
        .collect();
    let vtv = model.v.transpose() * &model.v;

    // H given Σ, V.
    let mut numer_h = DMatrix::<f64>::zeros(k, k);
    for idx in 0..l {
        let mut bv = &projected[idx] * &model.v;
        scale_columns(&mut bv, &model.sigma[idx]);
        numer_h += bv;
    }
    let gram_h = sigma_gram(&model.sigma, k).component_mul(&vtv);
    model.h = solve_gram(&gram_h, &numer_h.transpose())?.transpose();

    // Each σ_ℓ given H, V.
    let hth = model.h.transpose() * &model.h;
    let gram_s = hth.component_mul(&vtv);
    for idx in 0..l {
        let t = model.h.transpose() * &projected[idx] * &model.v;
        let rhs = DMatrix::from_column_slice(k, 1, t.diagonal().as_slice());
        let solved = solve_gram(&gram_s, &rhs)?;
        model.sigma[idx] = DVector::from_column_slice(solved.as_slice());
    }

    // V given H, Σ.
    let hth = model.h.transpose() * &model.h;
    let mut numer_v = DMatrix::<f64>::zeros(model.v.nrows(), k);
    for idx in 0..l {
        let mut bh = projected[idx].transpose() * &model.h;
        scale_columns(&mut bh, &model.sigma[idx]);
        numer_v += bh;
    }
    let gram_v = sigma_gram(&model.sigma, k).component_mul(&hth);
    model.v = solve_gram(&gram_v, &numer_v.transpose())?.transpose();

    // (c) Unit-norm columns for H and V; scale lives in sigma.
    renormalize_columns(model);

    check_finite(model)
}

/// Gauge normalization: unit-norm columns for H and V, scale absorbed into
/// the sigma vectors. Leaves every reconstruction unchanged.
fn renormalize_columns(model: &mut Parafac2Model) {
    for r in 0..model.rank {
        let hn = model.h.column(r).norm();
        let vn = model.v.column(r).norm();
        if hn > 0.0 {
            let mut col = model.h.column_mut(r);
            col /= hn;
        }
        if vn > 0.0 {
            let mut col = model.v.column_mut(r);
            col /= vn;
        }
        let scale = hn * vn;
        for s in &mut model.sigma {
            s[r] *= scale;
        }
    }
}

/// Runs one full ALS sweep and returns the updated model with refreshed fit
/// diagnostics.
pub fn als_sweep(
    model: &Parafac2Model,
    slices: &[CovarianceSlice],
) -> Result<Parafac2Model, Parafac2Error> {
    check_model_shapes(model, slices)?;
    let mut next = model.clone();
    sweep_in_place(&mut next, slices)?;
    let err = squared_error(&next, slices);
    let total = total_norm_squared(slices);
    next.fit = if total > 0.0 { (err / total).sqrt() } else { 0.0 };
    next.error_history.push(err);
    next.iterations += 1;
    Ok(next)
}

fn check_model_shapes(
    model: &Parafac2Model,
    slices: &[CovarianceSlice],
) -> Result<(), Parafac2Error> {
    if model.q.len() != slices.len() || model.sigma.len() != slices.len() {
        return Err(Parafac2Error::ShapeMismatch(format!(
            "model holds {} groups, slices hold {}",
            model.q.len(),
            slices.len()
        )));
    }
    let d = validate_slices(slices)?;
    if model.v.nrows() != d || model.v.ncols() != model.rank {
        return Err(Parafac2Error::ShapeMismatch(format!(
            "V is {}×{}, expected {}×{}",
            model.v.nrows(),
            model.v.ncols(),
            d,
            model.rank
        )));
    }
    for (idx, (q, s)) in model.q.iter().zip(slices).enumerate() {
        if q.nrows() != s.control_dim() || q.ncols() != model.rank {
            return Err(Parafac2Error::ShapeMismatch(format!(
                "Q[{idx}] is {}×{}, expected {}×{}",
                q.nrows(),
                q.ncols(),
                s.control_dim(),
                model.rank
            )));
        }
    }
    Ok(())
}

/// Fixes the sign gauge: flips V's column r (compensating in the sigma
/// vectors) so that Σ_ℓ sigma_ℓ[r] ≥ 0 for every component.
fn fix_signs(model: &mut Parafac2Model) {
    for r in 0..model.rank {
        let total: f64 = model.sigma.iter().map(|s| s[r]).sum();
        if total < 0.0 {
            let mut col = model.v.column_mut(r);
            col.neg_mut();
            for s in &mut model.sigma {
                s[r] = -s[r];
            }
        }
    }
}

/// Fits the coupled decomposition by alternating least squares.
///
/// Non-convergence within `max_sweeps` is not an error; the returned model
/// carries `converged = false` along with its diagnostics.
pub fn decompose(
    slices: &[CovarianceSlice],
    opts: &SolverOptions,
) -> Result<Parafac2Model, Parafac2Error> {
    validate_options(slices, opts)?;
    for s in slices {
        if s.omega.norm_squared() == 0.0 {
            return Err(Parafac2Error::ZeroInput {
                group: s.group_id.clone(),
            });
        }
    }

    let mut model = init_model(slices, opts)?;
    let total = total_norm_squared(slices);
    let mut prev = model.error_history[0];

    for sweep in 1..=opts.max_sweeps {
        sweep_in_place(&mut model, slices)?;
        let err = squared_error(&model, slices);
        if !err.is_finite() {
            return Err(Parafac2Error::NumericalBreakdown(
                "non-finite reconstruction error".into(),
            ));
        }
        model.error_history.push(err);
        model.iterations = sweep;
        if (prev - err).abs() / prev.max(CONVERGENCE_FLOOR) < opts.rel_tol {
            model.converged = true;
            break;
        }
        prev = err;
    }

    fix_signs(&mut model);
    let err = *model.error_history.last().expect("history non-empty");
    model.fit = (err / total).sqrt();
    Ok(model)
}

/// Returns `Q_ℓ H Σ_ℓ Vᵀ`, shape d_ℓ × d.
pub fn reconstruct(model: &Parafac2Model, index: usize) -> Result<DMatrix<f64>, Parafac2Error> {
    if index >= model.q.len() {
        return Err(Parafac2Error::IndexOutOfRange {
            index,
            len: model.q.len(),
        });
    }
    let mut core = model.h.clone();
    scale_columns(&mut core, &model.sigma[index]);
    Ok(&model.q[index] * core * model.v.transpose())
}

/// Relative reconstruction error over all slices:
/// `sqrt(Σ_ℓ‖Ω_ℓ − U_ℓΣ_ℓVᵀ‖²) / sqrt(Σ_ℓ‖Ω_ℓ‖²)`.
pub fn fit_error(
    model: &Parafac2Model,
    slices: &[CovarianceSlice],
) -> Result<f64, Parafac2Error> {
    check_model_shapes(model, slices)?;
    let total = total_norm_squared(slices);
    if total == 0.0 {
        return Err(Parafac2Error::ZeroInput {
            group: "<all slices>".into(),
        });
    }
    Ok((squared_error(model, slices) / total).sqrt())
}



#[cfg(test)]
mod tests_helpers_reexport {
    use super::*;
    use rand::Rng;

    pub fn planted_pub(l: usize, d_l: usize, d: usize, k: usize, seed: u64) -> Vec<crate::covariance::CovarianceSlice> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit_cols = |rows: usize| {
            let mut m = gaussian(&mut rng, rows, k);
            for c in 0..k {
                let n = m.column(c).norm();
                let mut col = m.column_mut(c);
                col /= n;
            }
            m
        };
        let h = unit_cols(k);
        let v = unit_cols(d);
        let mut slices = Vec::new();
        for idx in 0..l {
            let q = orthonormal_columns(gaussian(&mut rng, d_l, k));
            let sigma = DVector::from_fn(k, |_, _| 1.0 + 2.0 * rng.random::<f64>());
            let mut core = h.clone();
            scale_columns(&mut core, &sigma);
            let omega = &q * core * v.transpose();
            slices.push(crate::covariance::CovarianceSlice { group_id: format!("g{idx}"), omega, m: 1 });
        }
        slices
    }
}
