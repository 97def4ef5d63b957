//! Orthogonal appearance subspace: PCA/RPCA initialization, incremental
//! update with mean tracking and a forgetting factor, and drift-triggered
//! reinitialization from a buffer of past optimal patches.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::prox::soft_threshold;
use crate::solver::orthonormality_deviation;

/// Relative cutoff below which singular values are treated as zero.
const RANK_TOL_REL: f64 = 1e-10;

/// Default forgetting factor for incremental updates.
pub const DEFAULT_FORGETTING: f64 = 0.95;

/// Default RPCA sparsity weight `1/sqrt(max(rows, cols))`.
pub fn default_rpca_lambda(rows: usize, cols: usize) -> f64 {
    1.0 / (rows.max(cols) as f64).sqrt()
}

/// Default RPCA convergence settings.
pub const RPCA_TOL: f64 = 1e-7;
pub const RPCA_MAX_ITER: usize = 500;

/// The generative appearance model: observations are `mean + basis * c`
/// plus noise. The basis columns are orthonormal, singular values are kept
/// in descending order, and `n_observed` is the forgetting-discounted
/// effective sample count driving the mean update.
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    singular_values: DVector<f64>,
    n_observed: f64,
    forgetting: f64,
}

impl SubspaceModel {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    /// Effective (forgetting-discounted) sample count. Fractional once a
    /// forgetting factor below 1 has been applied.
    pub fn n_observed(&self) -> f64 {
        self.n_observed
    }

    pub fn forgetting(&self) -> f64 {
        self.forgetting
    }

    /// Ambient dimension N.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of basis columns.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn with_forgetting(mut self, forgetting: f64) -> Result<Self> {
        if !forgetting.is_finite() || forgetting <= 0.0 || forgetting > 1.0 {
            return Err(Error::InvalidParam(format!(
                "forgetting must be in (0, 1], got {forgetting}"
            )));
        }
        self.forgetting = forgetting;
        Ok(self)
    }

    /// Textual dump of the model (dimensions, mean, singular values, one
    /// basis row per line) for debugging and test goldens.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let (n, k) = (self.dim(), self.rank());
        writeln!(out, "{n} {k}").unwrap();
        let line =
            |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "{}", line(self.mean.as_slice())).unwrap();
        writeln!(out, "{}", line(self.singular_values.as_slice())).unwrap();
        for i in 0..n {
            let row: Vec<f64> = (0..k).map(|j| self.basis[(i, j)]).collect();
            writeln!(out, "{}", line(&row)).unwrap();
        }
        out
    }

    /// Sequential Karhunen-Loeve update with mean tracking: the new batch is
    /// centered on its own mean, augmented with the mean-correction vector,
    /// orthogonalized against the current basis, and merged through an SVD
    /// of the small coefficient matrix with the previous singular values
    /// discounted by the forgetting factor. The top `k_max` components are
    /// retained.
    pub fn incremental_update(&self, new_patches: &DMatrix<f64>, k_max: usize) -> Result<Self> {
        let n = self.dim();
        let m = new_patches.ncols();
        if new_patches.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "incremental_update: model dim {n}, patches have {} rows",
                new_patches.nrows()
            )));
        }
        if m == 0 {
            return Err(Error::EmptyInput("incremental_update: no new patches"));
        }
        if k_max == 0 {
            return Err(Error::InvalidParam("k_max must be >= 1".to_string()));
        }

        let f = self.forgetting;
        let n_eff = f * self.n_observed;
        let m_f = m as f64;
        let total = n_eff + m_f;

        let batch_mean = row_means(new_patches);
        let new_mean = (&self.mean * n_eff + &batch_mean * m_f) / total;

        // augmented batch: self-centered columns plus the mean-correction
        // vector, which carries the scatter between old and new means
        let mut aug = DMatrix::zeros(n, m + 1);
        for j in 0..m {
            for i in 0..n {
                aug[(i, j)] = new_patches[(i, j)] - batch_mean[i];
            }
        }
        let corr_scale = (n_eff * m_f / total).sqrt();
        for i in 0..n {
            aug[(i, m)] = corr_scale * (batch_mean[i] - self.mean[i]);
        }

        let coeffs = self.basis.tr_mul(&aug); // K x (m+1)
        let resid = &aug - &self.basis * &coeffs;
        let ortho = orthonormal_columns(&resid, &self.basis);
        let r = ortho.ncols();

        // small matrix [[f*S, U^T aug], [0, Q^T aug]]
        let k = self.rank();
        let mut small = DMatrix::zeros(k + r, k + m + 1);
        for i in 0..k {
            small[(i, i)] = f * self.singular_values[i];
        }
        for j in 0..(m + 1) {
            for i in 0..k {
                small[(i, k + j)] = coeffs[(i, j)];
            }
        }
        if r > 0 {
            let bottom = ortho.tr_mul(&aug); // r x (m+1)
            for j in 0..(m + 1) {
                for i in 0..r {
                    small[(k + i, k + j)] = bottom[(i, j)];
                }
            }
        }

        let svd = thin_svd(&small);
        let u_small = svd.u;
        let sigma = svd.singular_values;
        let keep = retained_rank(&sigma, k_max, 0.0);
        if keep == 0 {
            return Err(Error::DegenerateInitialization);
        }

        let joint = join_columns(&self.basis, &ortho);
        let mut basis = &joint * u_small.columns(0, keep);
        fix_column_signs(&mut basis);
        let singular_values = DVector::from_fn(keep, |i, _| sigma[i]);

        Ok(Self {
            mean: new_mean,
            basis,
            singular_values,
            n_observed: total,
            forgetting: f,
        })
    }
}

fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    let cols = m.ncols() as f64;
    DVector::from_fn(m.nrows(), |i, _| m.row(i).sum() / cols)
}

/// Number of leading singular values above the relative rank cutoff and the
/// absolute `floor`, capped at `k_max`. The floor lets callers reject
/// variation that is pure rounding residue of a much larger data scale.
fn retained_rank(sigma: &DVector<f64>, k_max: usize, floor: f64) -> usize {
    if sigma.len() == 0 {
        return 0;
    }
    let cutoff = (sigma[0] * RANK_TOL_REL).max(floor);
    sigma.iter().take(k_max).filter(|&&s| s > cutoff && s > 0.0).count()
}

/// Makes the largest-magnitude entry of each column positive so that bases
/// are deterministic across runs and platforms.
fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut lead = 0.0_f64;
        for i in 0..m.nrows() {
            if m[(i, j)].abs() > lead.abs() {
                lead = m[(i, j)];
            }
        }
        if lead < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

fn join_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    if b.ncols() > 0 {
        out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    }
    out
}

/// Orthonormal basis of the columns of `cols` against `against` and among
/// themselves: two-pass modified Gram-Schmidt, dropping columns whose
/// residual norm falls below a relative cutoff.
fn orthonormal_columns(cols: &DMatrix<f64>, against: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cols.nrows();
    let scale = cols
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let drop_tol = scale * 1e-12;

    let mut kept: Vec<DVector<f64>> = Vec::new();
    for j in 0..cols.ncols() {
        let mut v = cols.column(j).clone_owned();
        for _ in 0..2 {
            for q in against.column_iter() {
                let proj = q.dot(&v);
                v.axpy(-proj, &q, 1.0);
            }
            for q in &kept {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > drop_tol {
            kept.push(v / norm);
        }
    }

    let mut out = DMatrix::zeros(n, kept.len());
    for (j, q) in kept.iter().enumerate() {
        out.column_mut(j).copy_from(q);
    }
    out
}

fn check_finite_matrix(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Mean + truncated SVD of the centered columns of `data`.
fn model_from_data(data: &DMatrix<f64>, k_max: usize, n_observed: f64) -> Result<SubspaceModel> {
    if k_max == 0 {
        return Err(Error::InvalidParam("k_max must be >= 1".to_string()));
    }
    let mean = row_means(data);
    let mut centered = data.clone();
    for j in 0..centered.ncols() {
        for i in 0..centered.nrows() {
            centered[(i, j)] -= mean[i];
        }
    }
    let svd = thin_svd(&centered);
    let sigma = svd.singular_values;
    // variation below rounding residue of the raw data scale is no rank
    let keep = retained_rank(&sigma, k_max, data.norm() * 1e-13);
    if keep == 0 {
        return Err(Error::DegenerateInitialization);
    }
    let mut basis = svd.u.columns(0, keep).clone_owned();
    fix_column_signs(&mut basis);
    Ok(SubspaceModel {
        mean,
        basis,
        singular_values: DVector::from_fn(keep, |i, _| sigma[i]),
        n_observed,
        forgetting: DEFAULT_FORGETTING,
    })
}

/// PCA initialization: mean of the frames plus the leading left singular
/// vectors of the centered frame matrix.
pub fn pca_init(frames: &DMatrix<f64>, k_max: usize) -> Result<SubspaceModel> {
    check_finite_matrix(frames, "frames")?;
    if frames.ncols() < 2 {
        return Err(Error::DegenerateInitialization);
    }
    model_from_data(frames, k_max, frames.ncols() as f64)
}

/// Low-rank/sparse decomposition `Y = Z + E`.
#[derive(Debug, Clone)]
pub struct RpcaResult {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub iterations: usize,
    /// `||Y - Z - E||_F / ||Y||_F` at the last iterate.
    pub final_residual: f64,
    /// `||Z||_* + lambda ||E||_1` after each outer iteration, with `Z` taken
    /// as the feasible completion `Y - E` (the raw iterate differs from it
    /// by the current constraint gap, which vanishes at convergence).
    pub objective_history: Vec<f64>,
}

/// Robust PCA via the inexact augmented Lagrangian method: singular-value
/// thresholding for the low-rank block, soft thresholding for the sparse
/// block, then a dual and penalty update. Non-convergence is not an error;
/// the last iterate comes back flagged with its residual.
pub fn rpca(
    y: &DMatrix<f64>,
    lambda_rpca: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RpcaResult> {
    check_finite_matrix(y, "rpca input")?;
    if !(lambda_rpca > 0.0) || !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidParam(
            "rpca requires lambda > 0, tol > 0, max_iter >= 1".to_string(),
        ));
    }
    let (n, k) = y.shape();
    let norm_f = y.norm();
    if norm_f == 0.0 {
        return Ok(RpcaResult {
            low_rank: DMatrix::zeros(n, k),
            sparse: DMatrix::zeros(n, k),
            iterations: 0,
            final_residual: 0.0,
            objective_history: Vec::new(),
        });
    }

    let two_norm = thin_svd(y).singular_values[0];
    let inf_norm = y.amax();
    let dual_scale = two_norm.max(inf_norm / lambda_rpca);
    let mut dual = y / dual_scale;
    let mut mu = 1.25 / two_norm;
    let mu_max = mu * 1e7;
    let rho = 1.5;

    let mut low_rank = DMatrix::zeros(n, k);
    let mut sparse = DMatrix::zeros(n, k);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut residual = 1.0;

    for iter in 1..=max_iter {
        // Z step: singular value thresholding at 1/mu
        let target = y - &sparse + &dual / mu;
        let svd = thin_svd(&target);
        let thr = 1.0 / mu;
        let rank = svd.singular_values.iter().filter(|&&s| s > thr).count();
        low_rank.fill(0.0);
        for r in 0..rank {
            let s = svd.singular_values[r] - thr;
            let u_col = svd.u.column(r);
            let v_col = svd.v.column(r);
            for j in 0..k {
                let sv = s * v_col[j];
                for i in 0..n {
                    low_rank[(i, j)] += u_col[i] * sv;
                }
            }
        }

        // E step: soft thresholding at lambda/mu
        let e_thr = lambda_rpca / mu;
        let mut e_l1 = 0.0;
        for j in 0..k {
            for i in 0..n {
                let v =
                    soft_threshold(y[(i, j)] - low_rank[(i, j)] + dual[(i, j)] / mu, e_thr);
                sparse[(i, j)] = v;
                e_l1 += v.abs();
            }
        }
        // dual and penalty update
        let gap = y - &low_rank - &sparse;
        dual += &gap * mu;
        mu = (mu * rho).min(mu_max);

        let feasible_nuclear = thin_svd(&(y - &sparse)).singular_values.sum();
        history.push(feasible_nuclear + lambda_rpca * e_l1);
        residual = gap.norm() / norm_f;
        iterations = iter;
        if residual < tol {
            break;
        }
    }

    Ok(RpcaResult {
        low_rank,
        sparse,
        iterations,
        final_residual: residual,
        objective_history: history,
    })
}

/// RPCA initialization: decompose the frames, then build the model from the
/// low-rank part (its row mean and the SVD of its centered columns), so
/// that on corruption-free data the result matches [`pca_init`].
pub fn rpca_init(frames: &DMatrix<f64>, k_max: usize, lambda_rpca: f64) -> Result<SubspaceModel> {
    check_finite_matrix(frames, "frames")?;
    if frames.ncols() < 2 {
        return Err(Error::DegenerateInitialization);
    }
    let decomp = rpca(frames, lambda_rpca, RPCA_TOL, RPCA_MAX_ITER)?;
    model_from_data(&decomp.low_rank, k_max, frames.ncols() as f64)
}

/// Reinitialization trigger: fraction of exactly nonzero entries of the
/// solved outlier vector strictly exceeds `thr`.
pub fn reinit_needed(e: &DVector<f64>, thr: f64) -> bool {
    if e.len() == 0 {
        return false;
    }
    let nonzero = e.iter().filter(|v| **v != 0.0).count() as f64;
    nonzero / e.len() as f64 > thr
}

/// Optimal-patch history backing dictionary reinitialization: the patches
/// from the initial frames plus a rolling window of the most recent ones.
#[derive(Debug, Clone)]
pub struct PatchBuffer {
    initial: Vec<DVector<f64>>,
    recent: VecDeque<DVector<f64>>,
    recent_cap: usize,
}

impl PatchBuffer {
    /// Default size of the recent-patch window.
    pub const DEFAULT_RECENT_CAP: usize = 20;

    pub fn new(initial: Vec<DVector<f64>>) -> Self {
        Self {
            initial,
            recent: VecDeque::new(),
            recent_cap: Self::DEFAULT_RECENT_CAP,
        }
    }

    pub fn with_recent_cap(mut self, cap: usize) -> Self {
        self.recent_cap = cap.max(1);
        while self.recent.len() > self.recent_cap {
            self.recent.pop_front();
        }
        self
    }

    /// Appends an optimal patch, evicting the oldest once the window is
    /// full.
    pub fn push_recent(&mut self, patch: DVector<f64>) {
        if self.recent.len() == self.recent_cap {
            self.recent.pop_front();
        }
        self.recent.push_back(patch);
    }

    pub fn total(&self) -> usize {
        self.initial.len() + self.recent.len()
    }

    /// Stacks initial then recent patches as matrix columns.
    pub fn assemble(&self) -> Result<DMatrix<f64>> {
        let total = self.total();
        if total < 2 {
            return Err(Error::InsufficientHistory { have: total });
        }
        let n = self
            .initial
            .first()
            .or_else(|| self.recent.front())
            .map(|p| p.len())
            .unwrap_or(0);
        let mut out = DMatrix::zeros(n, total);
        for (j, p) in self.initial.iter().chain(self.recent.iter()).enumerate() {
            out.column_mut(j).copy_from(p);
        }
        Ok(out)
    }
}

/// Rebuilds the dictionary by RPCA over the stored history (initial
/// patches plus the latest window of optimal patches).
pub fn reinitialize(
    history: &PatchBuffer,
    k_max: usize,
    lambda_rpca: f64,
) -> Result<SubspaceModel> {
    let y = history.assemble()?;
    rpca_init(&y, k_max, lambda_rpca)
}

/// Largest principal angle (radians) between the column spaces of two
/// orthonormal bases, via the sine route: the singular values of
/// `b - a (a^T b)` are the sines of the angles, which stays accurate for
/// tiny angles where the cosine route saturates. Directions of `b` outside
/// `span(a)` read as pi/2.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * a.tr_mul(b);
    let sigma = thin_svd(&residual).singular_values;
    if sigma.len() == 0 {
        return std::f64::consts::FRAC_PI_2;
    }
    sigma[0].clamp(-1.0, 1.0).asin()
}

/// Max deviation of the model basis from orthonormality.
pub fn basis_deviation(model: &SubspaceModel) -> f64 {
    orthonormality_deviation(model.basis())
}
