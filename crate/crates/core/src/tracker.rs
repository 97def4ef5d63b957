//! Affine particle-filter tracker: Gaussian state propagation around the
//! previous MAP state, observation likelihoods from the sparse solver,
//! occlusion-aware incremental model updates, and RPCA reinitialization
//! when the outlier ratio spikes.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{state_to_bbox, warp_crop, BBox, GrayFrame};
use crate::solver::{lss_distance, solve_prevalidated, ModelWeights, SolveOpts, SolveResult};
use crate::subspace::{
    default_rpca_lambda, pca_init, reinit_needed, reinitialize, rpca_init, PatchBuffer,
    SubspaceModel,
};

/// Six-parameter affine warp of the template onto the image: translation of
/// the template center, rotation, width scale, height/width ratio, and
/// shear. The linear part is
/// `R(theta) * Shear(skew) * diag(scale, scale*aspect)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineState {
    pub tx: f64,
    pub ty: f64,
    pub theta: f64,
    pub scale: f64,
    pub aspect: f64,
    pub skew: f64,
}

impl AffineState {
    pub fn new(tx: f64, ty: f64, theta: f64, scale: f64, aspect: f64, skew: f64) -> Result<Self> {
        let s = Self { tx, ty, theta, scale, aspect, skew };
        s.validate()?;
        Ok(s)
    }

    /// Axis-aligned state whose warped template hull reproduces `bbox`.
    pub fn from_bbox(bbox: &BBox, side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidParam("side must be >= 1".to_string()));
        }
        let (cx, cy) = bbox.center();
        Self::new(cx, cy, 0.0, bbox.w / side as f64, bbox.h / bbox.w, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.tx, self.ty, self.theta, self.scale, self.aspect, self.skew]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFinite("affine state"));
        }
        if !(self.scale > 0.0) || !(self.aspect > 0.0) {
            return Err(Error::InvalidParam(format!(
                "scale and aspect must be > 0, got {} and {}",
                self.scale, self.aspect
            )));
        }
        // det = scale^2 * aspect
        let det = self.scale * self.scale * self.aspect;
        if det.abs() <= 1e-12 {
            return Err(Error::DegenerateTransform { det });
        }
        Ok(())
    }

    /// Linear part of the warp.
    pub fn warp_matrix(&self) -> Matrix2<f64> {
        let (sin, cos) = self.theta.sin_cos();
        let sx = self.scale;
        let sy = self.scale * self.aspect;
        // R(theta) * Shear(skew) * diag(sx, sy)
        Matrix2::new(
            cos * sx,
            (cos * self.skew - sin) * sy,
            sin * sx,
            (sin * self.skew + cos) * sy,
        )
    }
}

/// Per-parameter Gaussian standard deviations of the motion model plus the
/// particle count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionParams {
    pub sigma: [f64; 6],
    pub n_particles: usize,
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidParam("motion sigma entries must be >= 0".to_string()));
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidParam("n_particles must be >= 1".to_string()));
        }
        Ok(())
    }
}

impl Default for MotionParams {
    fn default() -> Self {
        Self { sigma: [4.0, 4.0, 0.01, 0.01, 0.002, 0.001], n_particles: 600 }
    }
}

/// Which decomposition builds the initial dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryInit {
    Pca,
    Rpca,
}

impl Default for DictionaryInit {
    fn default() -> Self {
        Self::Pca
    }
}

/// Tracker configuration; defaults follow the empirical settings
/// (lambda 0.5, gamma 0.1, beta 0.1, L 2, tau 0.05, 32x32 patches, 16 basis
/// vectors, update every 5 frames, reinit threshold 0.5, 10 init frames,
/// 600 particles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub weights: ModelWeights,
    /// Shape of the observation likelihood exp(-tau * d).
    pub tau: f64,
    pub patch_side: usize,
    pub k_max: usize,
    pub update_interval: usize,
    pub reinit_thr: f64,
    pub init_frames: usize,
    pub motion: MotionParams,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            weights: ModelWeights::default(),
            tau: 0.05,
            patch_side: 32,
            k_max: 16,
            update_interval: 5,
            reinit_thr: 0.5,
            init_frames: 10,
            motion: MotionParams::default(),
            seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.motion.validate()?;
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParam("tau must be > 0".to_string()));
        }
        if self.patch_side == 0 || self.k_max == 0 || self.update_interval == 0 {
            return Err(Error::InvalidParam(
                "patch_side, k_max, update_interval must be >= 1".to_string(),
            ));
        }
        if !(self.reinit_thr > 0.0 && self.reinit_thr < 1.0) {
            return Err(Error::InvalidParam("reinit_thr must be in (0, 1)".to_string()));
        }
        if self.init_frames < 2 {
            return Err(Error::InvalidParam("init_frames must be >= 2".to_string()));
        }
        Ok(())
    }

    fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }
}

/// One tracked frame: the MAP state, its box, likelihood, the outlier
/// ratio of the solved noise vector, and whether reinitialization fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame_index: usize,
    pub state: AffineState,
    pub bbox: BBox,
    pub likelihood: f64,
    pub noise_ratio: f64,
    pub solver_iterations: usize,
    pub reinit_fired: bool,
}

/// Draws `n_particles` states, each parameter independently Gaussian around
/// the previous MAP state. Deterministic for a given RNG state; scale and
/// aspect are clamped to stay positive.
pub fn propagate(
    prev: &AffineState,
    motion: &MotionParams,
    rng: &mut ChaCha8Rng,
) -> Vec<AffineState> {
    let normal = StandardNormal;
    (0..motion.n_particles)
        .map(|_| {
            let mut draw = [0.0_f64; 6];
            for (slot, sigma) in draw.iter_mut().zip(motion.sigma.iter()) {
                let z: f64 = normal.sample(rng);
                *slot = sigma * z;
            }
            AffineState {
                tx: prev.tx + draw[0],
                ty: prev.ty + draw[1],
                theta: prev.theta + draw[2],
                scale: (prev.scale + draw[3]).max(1e-6),
                aspect: (prev.aspect + draw[4]).max(1e-6),
                skew: prev.skew + draw[5],
            }
        })
        .collect()
}

/// Centers the patch on the model mean, solves the sparse representation,
/// and maps the least-soft-threshold-squares distance through the Gaussian
/// kernel `exp(-tau * d)`.
pub fn likelihood(
    patch: &DVector<f64>,
    model: &SubspaceModel,
    cfg: &TrackerConfig,
) -> Result<(f64, SolveResult)> {
    if patch.len() != cfg.patch_len() || patch.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "patch has {} entries, expected side^2 = {} matching model dim {}",
            patch.len(),
            cfg.patch_len(),
            model.dim()
        )));
    }
    let y = patch - model.mean();
    // the model maintains the basis orthonormality invariant, so the
    // per-particle Gram re-check inside `solve` is skipped
    let result = solve_prevalidated(&y, model.basis(), &cfg.weights, &SolveOpts::default())?;
    let d = lss_distance(&y, model.basis(), &result, &cfg.weights)?;
    Ok(((-cfg.tau * d).exp(), result))
}

/// Index of the maximal likelihood; ties break toward the lowest index.
pub fn select_map(likelihoods: &[f64]) -> Result<usize> {
    if likelihoods.is_empty() {
        return Err(Error::EmptyInput("select_map candidate list"));
    }
    let mut best = 0;
    for (i, &p) in likelihoods.iter().enumerate().skip(1) {
        if p > likelihoods[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Keeps observed pixels where the solver saw no outlier and substitutes
/// the model mean where it did: `y_i` if `e_i == 0`, `mu_i` otherwise.
pub fn occlusion_repair(
    y: &DVector<f64>,
    e: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<DVector<f64>> {
    if y.len() != e.len() || y.len() != mu.len() {
        return Err(Error::DimensionMismatch(format!(
            "occlusion_repair: y {}, e {}, mu {}",
            y.len(),
            e.len(),
            mu.len()
        )));
    }
    Ok(DVector::from_fn(y.len(), |i, _| if e[i] == 0.0 { y[i] } else { mu[i] }))
}

/// The tracker state machine. Build with [`Tracker::init`], then feed
/// frames through [`Tracker::step`].
pub struct Tracker {
    cfg: TrackerConfig,
    model: SubspaceModel,
    state: AffineState,
    frame_index: usize,
    update_buffer: Vec<DVector<f64>>,
    history: PatchBuffer,
    rng: ChaCha8Rng,
    update_count: usize,
    reinit_count: usize,
    /// Re-arms only after the noise ratio drops back below the threshold,
    /// so one occlusion event triggers at most one reinitialization.
    reinit_armed: bool,
    parallel: bool,
}

impl Tracker {
    /// Builds the appearance model from the annotated initial frames
    /// (exactly `cfg.init_frames` of them) and stores their patches as the
    /// permanent head of the reinitialization history.
    pub fn init(
        frames: &[(GrayFrame, AffineState)],
        cfg: TrackerConfig,
        init_method: DictionaryInit,
    ) -> Result<Self> {
        cfg.validate()?;
        if frames.len() != cfg.init_frames {
            return Err(Error::InvalidParam(format!(
                "init needs exactly {} annotated frames, got {}",
                cfg.init_frames,
                frames.len()
            )));
        }
        let side = cfg.patch_side;
        let mut patches = Vec::with_capacity(frames.len());
        for (frame, state) in frames {
            patches.push(warp_crop(frame, state, side)?);
        }
        let mut data = DMatrix::zeros(cfg.patch_len(), patches.len());
        for (j, p) in patches.iter().enumerate() {
            data.column_mut(j).copy_from(p);
        }
        let model = match init_method {
            DictionaryInit::Pca => pca_init(&data, cfg.k_max)?,
            DictionaryInit::Rpca => {
                let lambda = default_rpca_lambda(data.nrows(), data.ncols());
                rpca_init(&data, cfg.k_max, lambda)?
            }
        };
        let state = frames.last().unwrap().1;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            model,
            state,
            frame_index: frames.len(),
            update_buffer: Vec::new(),
            history: PatchBuffer::new(patches),
            rng,
            update_count: 0,
            reinit_count: 0,
            reinit_armed: true,
            parallel: false,
        })
    }

    pub fn model(&self) -> &SubspaceModel {
        &self.model
    }

    pub fn state(&self) -> &AffineState {
        &self.state
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Incremental updates performed so far.
    pub fn update_count(&self) -> usize {
        self.update_count
    }

    /// Reinitializations performed so far.
    pub fn reinit_count(&self) -> usize {
        self.reinit_count
    }

    /// Evaluate particles on the rayon pool instead of serially. Particle
    /// results are collected positionally, so outputs are identical either
    /// way.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    /// Tracks one frame: propagate, warp, score, select the MAP particle,
    /// buffer the repaired optimal patch, update the model every
    /// `update_interval` frames, and reinitialize the dictionary when the
    /// outlier ratio of the optimal candidate exceeds the threshold.
    pub fn step(&mut self, frame: &GrayFrame) -> Result<TrackRecord> {
        let side = self.cfg.patch_side;
        let particles = propagate(&self.state, &self.cfg.motion, &mut self.rng);

        let model = &self.model;
        let cfg = &self.cfg;
        let evaluate = |state: &AffineState| -> Result<(DVector<f64>, f64, SolveResult)> {
            let patch = warp_crop(frame, state, side)?;
            let (p, result) = likelihood(&patch, model, cfg)?;
            Ok((patch, p, result))
        };
        let evaluated: Vec<(DVector<f64>, f64, SolveResult)> = if self.parallel {
            particles.par_iter().map(evaluate).collect::<Result<_>>()?
        } else {
            particles.iter().map(evaluate).collect::<Result<_>>()?
        };

        let likelihoods: Vec<f64> = evaluated.iter().map(|(_, p, _)| *p).collect();
        let best = select_map(&likelihoods)?;
        let best_state = particles[best];
        let (patch, p_best, result) = &evaluated[best];

        let n = patch.len() as f64;
        let noise_ratio = result.e.iter().filter(|v| **v != 0.0).count() as f64 / n;

        let repaired = occlusion_repair(patch, &result.e, self.model.mean())?;
        self.update_buffer.push(repaired);
        self.history.push_recent(patch.clone());

        if self.update_buffer.len() == self.cfg.update_interval {
            let mut batch = DMatrix::zeros(self.model.dim(), self.update_buffer.len());
            for (j, p) in self.update_buffer.iter().enumerate() {
                batch.column_mut(j).copy_from(p);
            }
            self.model = self.model.incremental_update(&batch, self.cfg.k_max)?;
            self.update_count += 1;
            self.update_buffer.clear();
        }

        let mut reinit_fired = false;
        if reinit_needed(&result.e, self.cfg.reinit_thr) {
            if self.reinit_armed {
                let lambda = default_rpca_lambda(self.model.dim(), self.history.total());
                self.model = reinitialize(&self.history, self.cfg.k_max, lambda)?;
                self.update_buffer.clear();
                self.reinit_armed = false;
                self.reinit_count += 1;
                reinit_fired = true;
            }
        } else {
            self.reinit_armed = true;
        }

        let record = TrackRecord {
            frame_index: self.frame_index,
            state: best_state,
            bbox: state_to_bbox(&best_state, side),
            likelihood: *p_best,
            noise_ratio,
            solver_iterations: result.iterations,
            reinit_fired,
        };
        self.state = best_state;
        self.frame_index += 1;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::max_principal_angle;
    use rand::Rng;

    fn rng_with(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn base_state() -> AffineState {
        AffineState { tx: 40.0, ty: 30.0, theta: 0.0, scale: 1.5, aspect: 1.0, skew: 0.0 }
    }

    // -- synthetic scene helpers -------------------------------------------

    fn target_texture(u: f64, v: f64) -> f64 {
        0.55 + 0.22 * (0.55 * u).sin() * (0.47 * v).cos() + 0.14 * (0.23 * u + 0.31 * v).sin()
    }

    fn background_texture(x: f64, y: f64) -> f64 {
        0.22 + 0.08 * (0.12 * x + 0.05 * y).sin() + 0.05 * (0.07 * y).cos()
    }

    /// Renders a frame with the target (box of `size` pixels) centered at
    /// (cx, cy); `gain` scales the target texture.
    fn render_frame(w: usize, h: usize, cx: f64, cy: f64, size: f64, gain: f64) -> GrayFrame {
        let half = size / 2.0;
        let pixels = DMatrix::from_fn(h, w, |r, c| {
            let (x, y) = (c as f64, r as f64);
            if x >= cx - half && x < cx + half && y >= cy - half && y < cy + half {
                (gain * target_texture(x - cx, y - cy)).clamp(0.0, 1.0)
            } else {
                background_texture(x, y)
            }
        });
        GrayFrame::from_pixels(pixels).unwrap()
    }

    fn test_config(side: usize, n_particles: usize, seed: u64) -> TrackerConfig {
        TrackerConfig {
            patch_side: side,
            motion: MotionParams { sigma: [1.5, 1.5, 0.005, 0.005, 0.001, 0.001], n_particles },
            seed,
            ..TrackerConfig::default()
        }
    }

    fn init_tracker(size: f64, cfg: TrackerConfig) -> Tracker {
        let (cx, cy) = (40.0, 30.0);
        let frames: Vec<(GrayFrame, AffineState)> = (0..cfg.init_frames)
            .map(|t| {
                let gain = 0.97 + 0.006 * t as f64;
                let state = AffineState {
                    scale: size / cfg.patch_side as f64,
                    ..base_state()
                };
                (render_frame(96, 72, cx, cy, size, gain), state)
            })
            .collect();
        Tracker::init(&frames, cfg, DictionaryInit::Pca).unwrap()
    }

    // -- propagate ----------------------------------------------------------

    #[test]
    fn propagate_zero_sigma_is_identity() {
        let motion = MotionParams { sigma: [0.0; 6], n_particles: 20 };
        let mut rng = rng_with(1);
        let particles = propagate(&base_state(), &motion, &mut rng);
        assert_eq!(particles.len(), 20);
        assert!(particles.iter().all(|p| *p == base_state()));
    }

    #[test]
    fn propagate_is_deterministic_per_seed() {
        let motion = MotionParams::default();
        let a = propagate(&base_state(), &motion, &mut rng_with(7));
        let b = propagate(&base_state(), &motion, &mut rng_with(7));
        assert_eq!(a, b);
    }

    #[test]
    fn propagate_sample_std_matches_sigma() {
        let motion = MotionParams {
            sigma: [4.0, 4.0, 0.01, 0.01, 0.002, 0.001],
            n_particles: 10_000,
        };
        let mut rng = rng_with(3);
        let particles = propagate(&base_state(), &motion, &mut rng);
        let mean = particles.iter().map(|p| p.tx).sum::<f64>() / 10_000.0;
        let var = particles.iter().map(|p| (p.tx - mean).powi(2)).sum::<f64>() / 9_999.0;
        let std = var.sqrt();
        // 3-sigma band for the sample std of n = 10^4 draws
        assert!((std - 4.0).abs() < 0.12, "sample std {std}");
    }

    // -- likelihood / select_map / repair ------------------------------------

    #[test]
    fn likelihood_of_mean_patch_is_one() {
        let tracker = init_tracker(24.0, test_config(16, 50, 1));
        let patch = tracker.model().mean().clone();
        let (p, result) = likelihood(&patch, tracker.model(), tracker.config()).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(result.alpha.amax(), 0.0);
        assert_eq!(result.e.amax(), 0.0);
    }

    #[test]
    fn likelihood_prefers_in_subspace_patch() {
        let tracker = init_tracker(24.0, test_config(16, 50, 1));
        let model = tracker.model();
        let k = model.rank();
        let mut coeff = DVector::zeros(k);
        coeff[0] = 3.0;
        let in_subspace = model.mean() + model.basis() * &coeff;
        let norm = (in_subspace.clone() - model.mean()).norm();

        let mut rng = rng_with(5);
        let mut random_dir = DVector::from_fn(model.dim(), |_, _| rng.random_range(-1.0..1.0));
        random_dir /= random_dir.norm();
        let random_patch = model.mean() + random_dir * norm;

        let (p_in, _) = likelihood(&in_subspace, model, tracker.config()).unwrap();
        let (p_rand, _) = likelihood(&random_patch, model, tracker.config()).unwrap();
        assert!(p_in > p_rand, "in-subspace {p_in} vs random {p_rand}");
    }

    #[test]
    fn likelihood_monotone_in_distance() {
        // p = exp(-tau d) is strictly decreasing in d
        let tracker = init_tracker(24.0, test_config(16, 50, 1));
        let model = tracker.model();
        let near = model.mean() + DVector::from_element(model.dim(), 0.01);
        let far = model.mean() + DVector::from_element(model.dim(), 0.2);
        let (p_near, _) = likelihood(&near, model, tracker.config()).unwrap();
        let (p_far, _) = likelihood(&far, model, tracker.config()).unwrap();
        assert!(p_near > p_far);
        assert!(p_near > 0.0 && p_near <= 1.0);
        assert!(p_far > 0.0 && p_far <= 1.0);
    }

    #[test]
    fn select_map_examples() {
        assert_eq!(select_map(&[0.4]).unwrap(), 0);
        assert_eq!(select_map(&[0.1, 0.9, 0.3]).unwrap(), 1);
        assert_eq!(select_map(&[0.5, 0.5]).unwrap(), 0);
        assert!(select_map(&[]).is_err());
    }

    #[test]
    fn tau_rescaling_keeps_argmax() {
        let tracker = init_tracker(24.0, test_config(16, 50, 1));
        let model = tracker.model();
        let cfg = *tracker.config();
        let mut scaled = cfg;
        scaled.tau *= 7.5;

        let mut rng = rng_with(11);
        let patches: Vec<DVector<f64>> = (0..6)
            .map(|_| {
                DVector::from_fn(model.dim(), |i, _| {
                    (model.mean()[i] + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0)
                })
            })
            .collect();
        let p1: Vec<f64> =
            patches.iter().map(|p| likelihood(p, model, &cfg).unwrap().0).collect();
        let p2: Vec<f64> =
            patches.iter().map(|p| likelihood(p, model, &scaled).unwrap().0).collect();
        assert_ne!(p1, p2);
        assert_eq!(select_map(&p1).unwrap(), select_map(&p2).unwrap());
    }

    #[test]
    fn occlusion_repair_examples() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mu = DVector::from_element(3, 9.0);
        let zero = DVector::zeros(3);
        assert_eq!(occlusion_repair(&y, &zero, &mu).unwrap(), y);

        let all = DVector::from_element(3, 0.1);
        assert_eq!(occlusion_repair(&y, &all, &mu).unwrap(), mu);

        let e = DVector::from_vec(vec![0.0, 0.5, 0.0]);
        assert_eq!(
            occlusion_repair(&y, &e, &mu).unwrap(),
            DVector::from_vec(vec![1.0, 9.0, 3.0])
        );
        assert!(occlusion_repair(&y, &DVector::zeros(2), &mu).is_err());
    }

    // -- init ----------------------------------------------------------------

    #[test]
    fn init_rejects_identical_frames() {
        let cfg = test_config(16, 50, 1);
        let frame = render_frame(96, 72, 40.0, 30.0, 24.0, 1.0);
        let state = AffineState { scale: 1.5, ..base_state() };
        let frames: Vec<_> = (0..cfg.init_frames).map(|_| (frame.clone(), state)).collect();
        assert!(matches!(
            Tracker::init(&frames, cfg, DictionaryInit::Pca),
            Err(Error::DegenerateInitialization)
        ));
    }

    #[test]
    fn init_recovers_constructed_rank() {
        // patches are mean + 3-dimensional variation by construction
        let cfg = test_config(8, 50, 1);
        let n = 64;
        let mut rng = rng_with(2);
        let g = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let w = g.qr().q();
        let frames: Vec<(GrayFrame, AffineState)> = (0..cfg.init_frames)
            .map(|_| {
                let c = DVector::from_fn(3, |_, _| rng.random_range(-0.05..0.05));
                let patch = DVector::from_element(n, 0.5) + &w * c;
                let pixels = DMatrix::from_fn(8, 8, |r, col| patch[r * 8 + col]);
                let state = AffineState {
                    tx: 4.0,
                    ty: 4.0,
                    theta: 0.0,
                    scale: 1.0,
                    aspect: 1.0,
                    skew: 0.0,
                };
                (GrayFrame::from_pixels(pixels).unwrap(), state)
            })
            .collect();
        let tracker = Tracker::init(&frames, cfg, DictionaryInit::Pca).unwrap();
        assert_eq!(tracker.model().rank(), 3);
    }

    #[test]
    fn init_rpca_matches_pca_on_clean_frames() {
        let pca = init_tracker(24.0, test_config(16, 50, 1));
        let (cx, cy) = (40.0, 30.0);
        let cfg = test_config(16, 50, 1);
        let frames: Vec<(GrayFrame, AffineState)> = (0..cfg.init_frames)
            .map(|t| {
                let gain = 0.97 + 0.006 * t as f64;
                let state = AffineState { scale: 24.0 / 16.0, ..base_state() };
                (render_frame(96, 72, cx, cy, 24.0, gain), state)
            })
            .collect();
        let rob = Tracker::init(&frames, cfg, DictionaryInit::Rpca).unwrap();
        let angle = max_principal_angle(rob.model().basis(), pca.model().basis());
        assert!(angle < 1e-4, "principal angle {angle}");
    }

    // -- step ----------------------------------------------------------------

    #[test]
    fn step_tracks_static_target() {
        let cfg = test_config(16, 300, 9);
        let mut tracker = init_tracker(24.0, cfg);
        let (cx, cy) = (40.0, 30.0);
        for t in 0..50 {
            let gain = 1.0 + 0.004 * (t as f64 * 0.7).sin();
            let frame = render_frame(96, 72, cx, cy, 24.0, gain);
            let record = tracker.step(&frame).unwrap();
            let (bx, by) = record.bbox.center();
            let cle = ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt();
            assert!(cle < 1.0, "frame {t}: CLE {cle}");
            assert!(record.likelihood > 0.0 && record.likelihood <= 1.0);
        }
    }

    #[test]
    fn step_update_cadence() {
        let cfg = test_config(16, 60, 4);
        let mut tracker = init_tracker(24.0, cfg);
        for t in 0..23 {
            let gain = 1.0 + 0.004 * (t as f64 * 0.9).cos();
            let frame = render_frame(96, 72, 40.0, 30.0, 24.0, gain);
            tracker.step(&frame).unwrap();
        }
        // 23 frames at interval 5: updates after frames 5, 10, 15, 20
        assert_eq!(tracker.update_count(), 4);
    }

    #[test]
    fn step_deterministic_under_seed_and_parallelism() {
        let runs: Vec<Vec<TrackRecord>> = [false, true]
            .iter()
            .map(|&par| {
                let cfg = test_config(16, 80, 21);
                let mut tracker = init_tracker(24.0, cfg);
                tracker.set_parallel(par);
                (0..12)
                    .map(|t| {
                        let gain = 1.0 + 0.005 * (t as f64).sin();
                        let frame = render_frame(96, 72, 40.0, 30.0, 24.0, gain);
                        tracker.step(&frame).unwrap()
                    })
                    .collect()
            })
            .collect();
        // bitwise identical records regardless of parallel evaluation
        let as_json = |records: &Vec<TrackRecord>| {
            records
                .iter()
                .map(|r| format!("{r:?}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(as_json(&runs[0]), as_json(&runs[1]));
    }

    #[test]
    fn occlusion_raises_noise_ratio_and_fires_reinit_once() {
        let cfg = test_config(16, 120, 33);
        let mut tracker = init_tracker(24.0, cfg);
        let (cx, cy) = (40.0, 30.0);
        let mut fires = 0;
        let mut saw_high_ratio = false;
        for t in 0..30 {
            let gain = 1.0 + 0.004 * (t as f64).sin();
            let mut frame = render_frame(96, 72, cx, cy, 24.0, gain);
            if (10..20).contains(&t) {
                // cover ~70% of the target with a flat occluder
                let pixels = DMatrix::from_fn(72, 96, |r, c| {
                    let (x, y) = (c as f64, r as f64);
                    if x >= cx - 12.0 && x < cx + 5.0 && y >= cy - 12.0 && y < cy + 12.0 {
                        0.95
                    } else {
                        frame.get(r, c)
                    }
                });
                frame = GrayFrame::from_pixels(pixels).unwrap();
            }
            let record = tracker.step(&frame).unwrap();
            if (10..20).contains(&t) && record.noise_ratio > 0.5 {
                saw_high_ratio = true;
            }
            if record.reinit_fired {
                fires += 1;
            }
        }
        assert!(saw_high_ratio, "no occluded frame exceeded the noise threshold");
        assert!(fires <= 1, "reinit fired {fires} times for one occlusion event");
        assert_eq!(fires, tracker.reinit_count());
    }

    #[test]
    fn from_bbox_round_trips_through_state_to_bbox() {
        let bbox = BBox::new(12.0, 20.0, 48.0, 36.0).unwrap();
        let state = AffineState::from_bbox(&bbox, 32).unwrap();
        let back = state_to_bbox(&state, 32);
        assert!((back.x - bbox.x).abs() < 1e-9);
        assert!((back.y - bbox.y).abs() < 1e-9);
        assert!((back.w - bbox.w).abs() < 1e-9);
        assert!((back.h - bbox.h).abs() < 1e-9);
    }

    #[test]
    fn affine_state_validation() {
        assert!(AffineState::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(AffineState::new(0.0, 0.0, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(AffineState::new(f64::NAN, 0.0, 0.0, 1.0, 1.0, 0.0).is_err());
    }
}
