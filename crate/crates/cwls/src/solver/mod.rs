//! Constrained wrapped least-squares attitude solver.
//!
//! The estimator minimizes
//!
//! ```text
//!   || [ wrap(vec(Psi - H R Xb)) ; vec(P - H R Xb) ] ||^2_{Q^-1}
//! ```
//!
//! over orthogonal `R`, where the wrap operator removes the integer
//! ambiguities from the phase residual. The search runs in three stages:
//! per-baseline candidate directions from sphere-circle intersections, an
//! inter-baseline angle filter plus SVD orthogonalization (multi-baseline
//! only), and a Gauss-Newton refinement that alternates between unwrapping
//! the phase at the current estimate and re-solving the smooth problem.

mod candidates;
mod circles;
mod refine;
mod wahba;
pub mod wrap;

pub use candidates::{angle_filter, Candidate, CandidateSet};
pub use circles::{circle_pair_intersections, enumerate_circles, IntersectionKind, SphereCircle};
pub use refine::{gauss_newton_rotation, sphere_constrained_wls, RefineResult};
pub use wahba::{assemble_coarse_rotation, wahba_orthogonalize};
pub use wrap::{round_half_down, split_phase, wrap, wrap_matrix, wrap_vector};

pub(crate) use candidates::search_candidates_single;
pub(crate) use refine::{refine_multi, refine_single, whitened_kron};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::Error;
use crate::obs_model::{
    angles_from_direction, rotation_to_euler, ArrayGeometry, Attitude, DdEpoch, DesignMatrix,
};
use crate::Result;

// ── Parameters ──────────────────────────────────────────────────────────────

/// Which covariance enters the weighted norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum QMode {
    /// The full correlated double-difference covariance.
    Full,
    /// Its diagonal only. In this regime the wrapped objective equals the
    /// integer-minimized unwrapped objective exactly.
    Diagonal,
}

/// Which observations enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ObsMode {
    PhaseAndCode,
    PhaseOnly,
}

/// Tuning knobs for the solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    /// Distinct candidate basins kept per baseline after ranking (K). At
    /// centimeter-level noise the true basin routinely ranks behind a few
    /// dozen aliases in the coarse cost, so the default is sized for that
    /// regime; mm-level noise would be satisfied by 8.
    pub keep_best: usize,
    /// Near-miss gap tolerance for circle pairs; `None` derives
    /// `max(3 * sqrt(2) * sigma/lambda, 1e-3)` from the phase covariance.
    pub delta_gap: Option<f64>,
    /// Inter-baseline angle tolerance in radians; `None` scales with the
    /// phase noise (floor 1 degree), since candidate direction errors grow
    /// roughly like `sigma / d`.
    pub angle_tol: Option<f64>,
    pub q_mode: QMode,
    pub obs_mode: ObsMode,
    /// Outer unwrap/refine iteration cap.
    pub max_refine_iters: usize,
    /// Angle-step convergence threshold for the refinement.
    pub step_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            keep_best: 32,
            delta_gap: None,
            angle_tol: None,
            q_mode: QMode::Full,
            obs_mode: ObsMode::PhaseAndCode,
            max_refine_iters: 50,
            step_tol: 1e-12,
        }
    }
}

// ── Weights ─────────────────────────────────────────────────────────────────

/// Cholesky factors of the epoch covariances, shared across the many
/// objective evaluations of one solve.
#[derive(Debug, Clone)]
pub struct Weights {
    l_phase: DMatrix<f64>,
    l_code: DMatrix<f64>,
    bl_phase: Vec<DMatrix<f64>>,
    bl_code: Vec<DMatrix<f64>>,
}

impl Weights {
    pub fn new(epoch: &DdEpoch, q_mode: QMode) -> Result<Self> {
        let factor = |q: &DMatrix<f64>, ctx: &'static str| -> Result<DMatrix<f64>> {
            let q = match q_mode {
                QMode::Full => q.clone(),
                QMode::Diagonal => DMatrix::from_diagonal(&q.diagonal()),
            };
            q.cholesky()
                .map(|c| c.l())
                .ok_or(Error::NotPositiveDefinite { context: ctx })
        };
        let l_phase = factor(&epoch.q_phase, "Q_phase")?;
        let l_code = factor(&epoch.q_code, "Q_code")?;
        let mut bl_phase = Vec::new();
        let mut bl_code = Vec::new();
        for a in 0..epoch.num_baselines() {
            bl_phase.push(factor(&epoch.q_phase_block(a), "Q_phase block")?);
            bl_code.push(factor(&epoch.q_code_block(a), "Q_code block")?);
        }
        Ok(Self {
            l_phase,
            l_code,
            bl_phase,
            bl_code,
        })
    }

    /// `sigma / lambda` of the phase observable, recovered from the leading
    /// covariance entry (`Q[0,0] = 4 sigma^2 / lambda^2`).
    pub fn phase_sigma_cycles(&self) -> f64 {
        (self.l_phase[(0, 0)].powi(2) / 4.0).sqrt()
    }

    /// Lower Cholesky factor of the full phase covariance.
    pub fn phase_factor(&self) -> &DMatrix<f64> {
        &self.l_phase
    }

    /// Lower Cholesky factor of the full code covariance.
    pub fn code_factor(&self) -> &DMatrix<f64> {
        &self.l_code
    }

    /// Per-baseline phase factor.
    pub fn baseline_phase_factor(&self, a: usize) -> &DMatrix<f64> {
        &self.bl_phase[a]
    }

    /// Per-baseline code factor.
    pub fn baseline_code_factor(&self, a: usize) -> &DMatrix<f64> {
        &self.bl_code[a]
    }
}

pub(crate) fn whiten_in_place(l: &DMatrix<f64>, v: &mut DVector<f64>) {
    let ok = l.solve_lower_triangular_mut(v);
    debug_assert!(ok, "triangular solve failed");
}

pub(crate) fn whiten_matrix(l: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(m)
        .expect("triangular solve failed")
}

// ── Problem views ───────────────────────────────────────────────────────────

/// One baseline's slice of an epoch, with its whitening factors.
///
/// `psi` is the reduced phase (fractional part); keeping the solver on the
/// reduced phase makes its output exactly invariant under integer shifts of
/// the raw observations.
pub(crate) struct BaselineProblem<'a> {
    pub psi: DVector<f64>,
    pub rho: DVector<f64>,
    pub h: &'a DesignMatrix,
    pub d: f64,
    pub l_phase: &'a DMatrix<f64>,
    pub l_code: &'a DMatrix<f64>,
    pub obs_mode: ObsMode,
}

impl BaselineProblem<'_> {
    pub fn dd_rows(&self) -> usize {
        self.psi.len()
    }

    pub fn model(&self, r: &Vector3<f64>) -> DVector<f64> {
        self.h.matrix() * (r * self.d)
    }

    /// Wrapped weighted squared cost of a direction candidate.
    pub fn wrapped_cost(&self, r: &Vector3<f64>) -> f64 {
        let model = self.model(r);
        let mut pv = DVector::from_fn(self.dd_rows(), |i, _| wrap(self.psi[i] - model[i]));
        whiten_in_place(self.l_phase, &mut pv);
        let mut cost = pv.norm_squared();
        if self.obs_mode == ObsMode::PhaseAndCode {
            let mut cv = &self.rho - &model;
            whiten_in_place(self.l_code, &mut cv);
            cost += cv.norm_squared();
        }
        cost
    }
}

/// The full multi-baseline problem on reduced phase.
pub(crate) struct MultiProblem<'a> {
    pub phase: DMatrix<f64>,
    pub code: DMatrix<f64>,
    pub h: &'a DesignMatrix,
    pub xb3: DMatrix<f64>,
    pub l_phase: &'a DMatrix<f64>,
    pub l_code: &'a DMatrix<f64>,
    pub obs_mode: ObsMode,
}

impl MultiProblem<'_> {
    pub fn model(&self, rot: &Matrix3<f64>) -> DMatrix<f64> {
        self.h.matrix() * rot * &self.xb3
    }

    pub fn wrapped_cost(&self, rot: &Matrix3<f64>) -> f64 {
        let model = self.model(rot);
        let (s, a) = self.phase.shape();
        let mut pv = DVector::from_fn(s * a, |k, _| {
            let (row, col) = (k % s, k / s);
            wrap(self.phase[(row, col)] - model[(row, col)])
        });
        whiten_in_place(self.l_phase, &mut pv);
        let mut cost = pv.norm_squared();
        if self.obs_mode == ObsMode::PhaseAndCode {
            let mut cv = DVector::from_fn(s * a, |k, _| {
                let (row, col) = (k % s, k / s);
                self.code[(row, col)] - model[(row, col)]
            });
            whiten_in_place(self.l_code, &mut cv);
            cost += cv.norm_squared();
        }
        cost
    }
}

// ── Public objective operations ─────────────────────────────────────────────

/// The C-WLS objective for a full rotation hypothesis.
pub fn cwls_objective(
    rot: &Matrix3<f64>,
    epoch: &DdEpoch,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
    q_mode: QMode,
    obs_mode: ObsMode,
) -> Result<f64> {
    let weights = Weights::new(epoch, q_mode)?;
    let problem = MultiProblem {
        phase: epoch.phase.clone(),
        code: epoch.code.clone(),
        h,
        xb3: geometry.embedded(),
        l_phase: &weights.l_phase,
        l_code: &weights.l_code,
        obs_mode,
    };
    Ok(problem.wrapped_cost(rot))
}

/// The integer matrix implied by a rotation hypothesis:
/// `round(Psi - H R Xb)` with the half-down convention.
pub fn ambiguity_from_rotation(
    rot: &Matrix3<f64>,
    phase: &DMatrix<f64>,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
) -> DMatrix<i64> {
    let model = h.matrix() * rot * geometry.embedded();
    DMatrix::from_fn(phase.nrows(), phase.ncols(), |i, j| {
        round_half_down(phase[(i, j)] - model[(i, j)]) as i64
    })
}

/// Wrapped phase residuals `wrap(Psi - H R Xb)`, all in `(-1/2, 1/2]`.
pub fn wrapped_residuals(
    rot: &Matrix3<f64>,
    phase: &DMatrix<f64>,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
) -> DMatrix<f64> {
    let model = h.matrix() * rot * geometry.embedded();
    DMatrix::from_fn(phase.nrows(), phase.ncols(), |i, j| {
        wrap(phase[(i, j)] - model[(i, j)])
    })
}

// ── Reports ─────────────────────────────────────────────────────────────────

/// Per-stage diagnostics of one solve.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct Diagnostics {
    /// Candidate pool size per baseline before truncation.
    pub pool_sizes: Vec<usize>,
    /// Mean integer hypotheses per double-difference row, per baseline.
    pub circles_per_row: Vec<f64>,
    /// Candidates kept per baseline (after top-K).
    pub kept: Vec<usize>,
    /// Candidate tuples before the angle filter (multi-baseline).
    pub tuples_total: usize,
    /// Tuples surviving the angle filter.
    pub tuples_after_filter: usize,
    /// Outer refinement iterations of the winning candidate.
    pub refine_iterations: usize,
    pub converged: bool,
    /// The angle tolerance had to be doubled once.
    pub angle_filter_widened: bool,
    /// Even the widened filter was empty; the best per-baseline candidates
    /// were used unfiltered and the result should be treated as low
    /// confidence.
    pub angle_filter_bypassed: bool,
}

/// Solution of one epoch.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub attitude: Attitude,
    /// Full 3x3 rotation. For a single baseline only the first column (the
    /// baseline direction) is observable; the remaining columns are a
    /// deterministic orthonormal completion.
    pub rotation: Matrix3<f64>,
    /// Recovered integer ambiguities, `S x A`.
    pub ambiguities: DMatrix<i64>,
    /// Final weighted cost.
    pub cost: f64,
    pub diagnostics: Diagnostics,
}

/// Deterministic orthonormal completion of a unit direction into a rotation
/// whose first column is the direction.
pub fn complete_rotation(r: &Vector3<f64>) -> Matrix3<f64> {
    let pick = if r.x.abs() <= r.y.abs() && r.x.abs() <= r.z.abs() {
        Vector3::x()
    } else if r.y.abs() <= r.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let c2 = (pick - r * pick.dot(r)).normalize();
    let c3 = r.cross(&c2);
    Matrix3::from_columns(&[*r, c2, c3])
}

fn effective_delta_gap(params: &SolverParams, weights: &Weights) -> f64 {
    params
        .delta_gap
        .unwrap_or_else(|| (3.0 * std::f64::consts::SQRT_2 * weights.phase_sigma_cycles()).max(1e-3))
}

/// Angular scale of a candidate direction's noise displacement: the
/// circle-plane noise `2 sqrt(2) sigma_cycles / (d |h~|)` in radians.
fn direction_sigma(weights: &Weights, d: f64, h: &DesignMatrix) -> f64 {
    let h_mean = (0..h.num_rows()).map(|s| h.row_norm(s)).sum::<f64>() / h.num_rows() as f64;
    2.0 * std::f64::consts::SQRT_2 * weights.phase_sigma_cycles() / (d * h_mean)
}

/// Candidate-merge radius: two pool entries closer than this are the same
/// objective basin observed through different satellite pairs.
fn dedup_tolerance(weights: &Weights, d: f64, h: &DesignMatrix) -> f64 {
    (2.0 * direction_sigma(weights, d, h)).max(3e-3)
}

/// Angle tolerance scaled to the noise level. A pair angle compounds two
/// noisy directions; six direction sigmas cover the bulk of true tuples.
/// 1 degree is the floor, which is also the default at mm-level noise.
fn effective_angle_tol(
    params: &SolverParams,
    weights: &Weights,
    geometry: &ArrayGeometry,
    h: &DesignMatrix,
) -> f64 {
    params.angle_tol.unwrap_or_else(|| {
        let d_min = (0..geometry.num_baselines())
            .map(|a| geometry.baseline_length(a))
            .fold(f64::INFINITY, f64::min);
        (6.0 * direction_sigma(weights, d_min, h)).max(1f64.to_radians())
    })
}

// ── Single-baseline solve ───────────────────────────────────────────────────

/// Full single-baseline pipeline: candidate search, top-K ranking, and
/// refinement of every kept candidate; returns the minimum-cost solution.
pub fn solve_single_baseline(
    epoch: &DdEpoch,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
    params: &SolverParams,
) -> Result<SolveReport> {
    if geometry.num_baselines() != 1 || epoch.num_baselines() != 1 {
        return Err(Error::invalid("solve_single_baseline needs exactly one baseline"));
    }
    let weights = Weights::new(epoch, params.q_mode)?;
    let (base, frac) = split_phase(&epoch.phase);
    let problem = BaselineProblem {
        psi: frac.column(0).into_owned(),
        rho: epoch.code_column(0),
        h,
        d: geometry.baseline_length(0),
        l_phase: &weights.bl_phase[0],
        l_code: &weights.bl_code[0],
        obs_mode: params.obs_mode,
    };
    let delta_gap = effective_delta_gap(params, &weights);
    let dedup = dedup_tolerance(&weights, problem.d, h);
    let set = search_candidates_single(&problem, params.keep_best, delta_gap, dedup)
        .map_err(|e| match e {
            Error::EmptyCandidatePool { .. } => Error::EmptyCandidatePool { baseline: 0 },
            other => other,
        })?;

    let mut best: Option<(Vector3<f64>, RefineResult)> = None;
    for cand in &set.candidates {
        let refined = refine_single(&problem, cand.direction, params);
        let better = match &best {
            None => true,
            Some((_, cur)) => refined.cost < cur.cost,
        };
        if better {
            best = Some((refined.direction(), refined));
        }
    }
    let (r_hat, refined) = best.ok_or(Error::EmptyCandidatePool { baseline: 0 })?;

    let model = problem.model(&r_hat);
    let n_frac = DVector::from_fn(problem.dd_rows(), |i, _| {
        round_half_down(problem.psi[i] - model[i]) as i64
    });
    let ambiguities =
        DMatrix::from_fn(problem.dd_rows(), 1, |i, _| base[(i, 0)] + n_frac[i]);

    let (yaw, pitch) = angles_from_direction(&r_hat);
    let attitude = Attitude::new(yaw, pitch, 0.0);
    Ok(SolveReport {
        attitude,
        rotation: complete_rotation(&r_hat),
        ambiguities,
        cost: refined.cost,
        diagnostics: Diagnostics {
            pool_sizes: vec![set.pool_size],
            circles_per_row: vec![set.mean_circles_per_row],
            kept: vec![set.candidates.len()],
            tuples_total: set.candidates.len(),
            tuples_after_filter: set.candidates.len(),
            refine_iterations: refined.iterations,
            converged: refined.converged,
            ..Default::default()
        },
    })
}

// ── Multi-baseline solve ────────────────────────────────────────────────────

/// Full multi-baseline pipeline: per-baseline search and top-K, angle
/// filter, coarse assembly, SVD orthogonalization, and refinement over all
/// surviving tuples; returns the minimum-cost solution.
pub fn solve_multi_baseline(
    epoch: &DdEpoch,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
    params: &SolverParams,
) -> Result<SolveReport> {
    let a = geometry.num_baselines();
    if a < 2 || epoch.num_baselines() != a {
        return Err(Error::invalid("solve_multi_baseline needs at least two baselines"));
    }
    let weights = Weights::new(epoch, params.q_mode)?;
    let (base, frac) = split_phase(&epoch.phase);
    let delta_gap = effective_delta_gap(params, &weights);

    let mut sets = Vec::with_capacity(a);
    for j in 0..a {
        let bp = BaselineProblem {
            psi: frac.column(j).into_owned(),
            rho: epoch.code_column(j),
            h,
            d: geometry.baseline_length(j),
            l_phase: &weights.bl_phase[j],
            l_code: &weights.bl_code[j],
            obs_mode: params.obs_mode,
        };
        let dedup = dedup_tolerance(&weights, bp.d, h);
        let set = search_candidates_single(&bp, params.keep_best, delta_gap, dedup)
            .map_err(|e| match e {
                Error::EmptyCandidatePool { .. } => Error::EmptyCandidatePool { baseline: j },
                other => other,
            })?;
        sets.push(set);
    }

    let tuples_total: usize = sets.iter().map(|s| s.candidates.len()).product();
    let angle_tol = effective_angle_tol(params, &weights, geometry, h);
    let mut widened = false;
    let mut bypassed = false;
    let mut tuples = angle_filter(&sets, geometry, angle_tol);
    if tuples.is_empty() {
        widened = true;
        tuples = angle_filter(&sets, geometry, 2.0 * angle_tol);
    }
    if tuples.is_empty() {
        // Last resort: the per-baseline best candidates, unfiltered.
        bypassed = true;
        tuples = vec![vec![0; a]];
    }
    let tuples_after_filter = tuples.len();

    let problem = MultiProblem {
        phase: frac.clone(),
        code: epoch.code.clone(),
        h,
        xb3: geometry.embedded(),
        l_phase: &weights.l_phase,
        l_code: &weights.l_code,
        obs_mode: params.obs_mode,
    };

    let mut best: Option<RefineResult> = None;
    for tuple in &tuples {
        let dirs: Vec<Vector3<f64>> = tuple
            .iter()
            .enumerate()
            .map(|(j, &idx)| sets[j].candidates[idx].direction)
            .collect();
        let coarse = match assemble_coarse_rotation(&dirs, geometry) {
            Ok(c) => c,
            Err(Error::SingularGram) => continue,
            Err(e) => return Err(e),
        };
        let (rot0, _) = wahba_orthogonalize(&coarse);
        let refined = refine_multi(&problem, rot0, params);
        let better = match &best {
            None => true,
            Some(cur) => refined.cost < cur.cost,
        };
        if better {
            best = Some(refined);
        }
    }
    let refined = best.ok_or(Error::EmptyAfterFilter)?;
    let rot = refined.rotation;

    let model = problem.model(&rot);
    let ambiguities = DMatrix::from_fn(frac.nrows(), a, |i, j| {
        base[(i, j)] + round_half_down(frac[(i, j)] - model[(i, j)]) as i64
    });

    Ok(SolveReport {
        attitude: rotation_to_euler(&rot),
        rotation: rot,
        ambiguities,
        cost: refined.cost,
        diagnostics: Diagnostics {
            pool_sizes: sets.iter().map(|s| s.pool_size).collect(),
            circles_per_row: sets.iter().map(|s| s.mean_circles_per_row).collect(),
            kept: sets.iter().map(|s| s.candidates.len()).collect(),
            tuples_total,
            tuples_after_filter,
            refine_iterations: refined.iterations,
            converged: refined.converged,
            angle_filter_widened: widened,
            angle_filter_bypassed: bypassed,
        },
    })
}

/// Dispatches on the baseline count.
pub fn solve(
    epoch: &DdEpoch,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
    params: &SolverParams,
) -> Result<SolveReport> {
    if geometry.num_baselines() == 1 {
        solve_single_baseline(epoch, h, geometry, params)
    } else {
        solve_multi_baseline(epoch, h, geometry, params)
    }
}

/// Refines a single-baseline direction estimate from `r0` by the
/// unwrap/Gauss-Newton alternation. Standalone entry point for the solver's
/// refinement stage.
pub fn refine_direction(
    epoch: &DdEpoch,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
    params: &SolverParams,
    r0: Vector3<f64>,
) -> Result<RefineResult> {
    if geometry.num_baselines() != 1 {
        return Err(Error::invalid("refine_direction needs exactly one baseline"));
    }
    let weights = Weights::new(epoch, params.q_mode)?;
    let (_, frac) = split_phase(&epoch.phase);
    let problem = BaselineProblem {
        psi: frac.column(0).into_owned(),
        rho: epoch.code_column(0),
        h,
        d: geometry.baseline_length(0),
        l_phase: &weights.bl_phase[0],
        l_code: &weights.bl_code[0],
        obs_mode: params.obs_mode,
    };
    Ok(refine_single(&problem, r0, params))
}

/// Refines a rotation estimate from `rot0` against the whole epoch; the
/// multi-baseline refinement stage as a standalone entry point. Works for a
/// single baseline too (roll is then dropped from the parameters).
#[allow(clippy::missing_panics_doc)]
pub fn refine_rotation(
    epoch: &DdEpoch,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
    params: &SolverParams,
    rot0: Matrix3<f64>,
) -> Result<RefineResult> {
    let weights = Weights::new(epoch, params.q_mode)?;
    let (_, frac) = split_phase(&epoch.phase);
    let problem = MultiProblem {
        phase: frac,
        code: epoch.code.clone(),
        h,
        xb3: geometry.embedded(),
        l_phase: &weights.l_phase,
        l_code: &weights.l_code,
        obs_mode: params.obs_mode,
    };
    Ok(refine_multi(&problem, rot0, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs_model::GPS_L1_WAVELENGTH;
    use crate::simulator::{gen_constellation, sample_attitude, synthesize_epoch};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn noise_free_instance(
        seed: u64,
        baselines: usize,
    ) -> (DdEpoch, DesignMatrix, ArrayGeometry, Matrix3<f64>, DMatrix<i64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let geometry = if baselines == 1 {
            ArrayGeometry::single(1.0).unwrap()
        } else {
            ArrayGeometry::orthogonal(baselines, 1.0).unwrap()
        };
        let truth = sample_attitude(&mut rng);
        let (los, h) = loop {
            let los = gen_constellation(6, 10f64.to_radians(), GPS_L1_WAVELENGTH, &mut rng);
            if let Ok(h) = crate::obs_model::build_design_matrix(&los) {
                break (los, h);
            }
        };
        let (epoch, n_true) =
            synthesize_epoch(&truth, &geometry, &los, &h, 0.0, 0.0, &mut rng).unwrap();
        (epoch, h, geometry, truth.rotation_matrix(), n_true)
    }

    #[test]
    fn objective_is_zero_at_truth_on_exact_data() {
        for baselines in [1usize, 2, 3] {
            let (epoch, h, geometry, rot, _) = noise_free_instance(11, baselines);
            for obs in [ObsMode::PhaseOnly, ObsMode::PhaseAndCode] {
                let cost =
                    cwls_objective(&rot, &epoch, &h, &geometry, QMode::Full, obs).unwrap();
                assert!(cost < 1e-18, "cost {cost:.3e} at truth");
            }
        }
    }

    #[test]
    fn ambiguity_recovery_and_wrap_identity() {
        let (epoch, h, geometry, rot, n_true) = noise_free_instance(12, 2);
        assert_eq!(ambiguity_from_rotation(&rot, &epoch.phase, &h, &geometry), n_true);

        // wrap(psi - model) == psi - model - round(psi - model) elementwise
        // for an arbitrary rotation.
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let other = sample_attitude(&mut rng).rotation_matrix();
        let n = ambiguity_from_rotation(&other, &epoch.phase, &h, &geometry);
        let res = wrapped_residuals(&other, &epoch.phase, &h, &geometry);
        let model = h.matrix() * other * geometry.embedded();
        for i in 0..res.nrows() {
            for j in 0..res.ncols() {
                let direct = epoch.phase[(i, j)] - model[(i, j)] - n[(i, j)] as f64;
                assert_relative_eq!(res[(i, j)], direct, epsilon = 1e-12);
                assert!(res[(i, j)] > -0.5 && res[(i, j)] <= 0.5);
            }
        }
    }

    #[test]
    fn half_cycle_residual_keeps_positive_sign() {
        // An observation exactly half a cycle above the model rounds down:
        // the implied integer is 0 and the residual +1/2.
        let (epoch, h, geometry, rot, n_true) = noise_free_instance(14, 1);
        let mut phase = epoch.phase.clone();
        phase[(0, 0)] += 0.5;
        let n = ambiguity_from_rotation(&rot, &phase, &h, &geometry);
        assert_eq!(n[(0, 0)], n_true[(0, 0)]);
        let res = wrapped_residuals(&rot, &phase, &h, &geometry);
        assert_relative_eq!(res[(0, 0)], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn solve_rejects_mismatched_baseline_count() {
        let (epoch, h, geometry, _, _) = noise_free_instance(15, 2);
        let params = SolverParams::default();
        assert!(solve_single_baseline(&epoch, &h, &geometry, &params).is_err());
        let (epoch1, h1, geometry1, _, _) = noise_free_instance(16, 1);
        assert!(solve_multi_baseline(&epoch1, &h1, &geometry1, &params).is_err());
    }

    #[test]
    fn weights_sigma_recovery() {
        let (epoch, _, _, _, _) = noise_free_instance(17, 1);
        // Noise-free synthesis weights with the 1 mm nominal.
        let w = Weights::new(&epoch, QMode::Full).unwrap();
        assert_relative_eq!(
            w.phase_sigma_cycles(),
            1e-3 / GPS_L1_WAVELENGTH,
            max_relative = 1e-10
        );
    }
}
