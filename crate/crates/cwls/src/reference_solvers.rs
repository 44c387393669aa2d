//! Reference estimators used as correctness baselines.
//!
//! - [`oracle_solver`]: constrained weighted least squares on the
//!   unambiguous phase (true integers known). Upper bound for every other
//!   estimator.
//! - [`brute_force_cils`]: exact enumeration of the constrained integer
//!   least-squares problem over a bounded integer box, solving the
//!   rotation subproblem for every integer hypothesis.
//! - [`afm_grid_search`]: ambiguity-function grid search over attitude
//!   angles on the phase-only wrapped objective.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::Error;
use crate::obs_model::{ArrayGeometry, DdEpoch, DesignMatrix};
use crate::solver::{
    self, complete_rotation, gauss_newton_rotation, sphere_constrained_wls, split_phase,
    wahba_orthogonalize, whiten_in_place, whiten_matrix, whitened_kron, BaselineProblem,
    MultiProblem, ObsMode, QMode, RefineResult, SolverParams,
};
use crate::Result;

/// Default budget for the brute-force integer enumeration.
pub const CILS_ENUMERATION_LIMIT: u128 = 10_000_000;

/// Output of a constrained rotation estimate.
#[derive(Debug, Clone)]
pub struct RotationEstimate {
    /// Full rotation; only the first `q` columns are observable.
    pub rotation: Matrix3<f64>,
    pub cost: f64,
    pub converged: bool,
}

// ── Oracle ──────────────────────────────────────────────────────────────────

/// Inputs for the oracle: the unambiguous phase `Phi = Psi - N_true` plus
/// the epoch the observations came from. In practice only the simulator can
/// build this, because only it knows the true integers.
pub struct OracleInput<'a> {
    pub phi: DMatrix<f64>,
    pub epoch: &'a DdEpoch,
    pub h: &'a DesignMatrix,
    pub geometry: &'a ArrayGeometry,
}

impl<'a> OracleInput<'a> {
    pub fn new(
        epoch: &'a DdEpoch,
        h: &'a DesignMatrix,
        geometry: &'a ArrayGeometry,
        n_true: &DMatrix<i64>,
    ) -> Result<Self> {
        if n_true.shape() != epoch.phase.shape() {
            return Err(Error::invalid("n_true dimensions do not match the epoch"));
        }
        let phi = DMatrix::from_fn(epoch.phase.nrows(), epoch.phase.ncols(), |i, j| {
            epoch.phase[(i, j)] - n_true[(i, j)] as f64
        });
        Ok(Self {
            phi,
            epoch,
            h,
            geometry,
        })
    }
}

/// Constrained weighted least squares on unambiguous observations.
///
/// For a single baseline the problem is a quadratic on the unit sphere and
/// is solved exactly in closed form. For two or more baselines it is solved
/// by Gauss-Newton over Euler angles from a deterministic multi-start
/// schedule seeded at the orthogonalized unconstrained solution.
pub fn oracle_solver(
    input: &OracleInput<'_>,
    q_mode: QMode,
    obs_mode: ObsMode,
) -> Result<RotationEstimate> {
    let weights = solver::Weights::new(input.epoch, q_mode)?;
    let xb3 = input.geometry.embedded();
    if input.geometry.q() == 1 {
        let (m, g) = sphere_normal_system(
            &input.phi.column(0).into_owned(),
            &input.epoch.code_column(0),
            input.h,
            input.geometry.baseline_length(0),
            weights.phase_factor(),
            weights.code_factor(),
            obs_mode,
        );
        let r = sphere_constrained_wls(&m, &g);
        let rotation = complete_rotation(&r);
        let cost = fixed_phase_cost(&rotation, input, &weights, &xb3, obs_mode);
        return Ok(RotationEstimate {
            rotation,
            cost,
            converged: true,
        });
    }

    let rot0 = float_rotation_start(
        &input.phi,
        &input.epoch.code,
        input.h,
        &xb3,
        input.geometry.q(),
        weights.phase_factor(),
        weights.code_factor(),
        obs_mode,
    );
    let mut best: Option<RefineResult> = None;
    for start in multi_start_schedule(&rot0) {
        let res = gauss_newton_rotation(
            &input.phi,
            &input.epoch.code,
            input.h,
            &xb3,
            weights.phase_factor(),
            weights.code_factor(),
            obs_mode,
            start,
            1e-13,
        );
        let better = best.as_ref().map_or(true, |b| res.cost < b.cost);
        if better {
            best = Some(res);
        }
    }
    let best = best.expect("non-empty start schedule");
    Ok(RotationEstimate {
        rotation: best.rotation,
        cost: best.cost,
        converged: best.converged,
    })
}

/// Stacked whitened normal system for the sphere-constrained problem:
/// minimize `|b - A r|^2` with `A = [L_psi^-1 dH; L_rho^-1 dH]`.
fn sphere_normal_system(
    phi: &DVector<f64>,
    rho: &DVector<f64>,
    h: &DesignMatrix,
    d: f64,
    l_phase: &DMatrix<f64>,
    l_code: &DMatrix<f64>,
    obs_mode: ObsMode,
) -> (Matrix3<f64>, Vector3<f64>) {
    let wh_p = whiten_matrix(l_phase, h.matrix()) * d;
    let mut wphi = phi.clone();
    whiten_in_place(l_phase, &mut wphi);
    let mut m_dyn = wh_p.transpose() * &wh_p;
    let mut g_dyn = wh_p.transpose() * &wphi;
    if obs_mode == ObsMode::PhaseAndCode {
        let wh_c = whiten_matrix(l_code, h.matrix()) * d;
        let mut wrho = rho.clone();
        whiten_in_place(l_code, &mut wrho);
        m_dyn += wh_c.transpose() * &wh_c;
        g_dyn += wh_c.transpose() * &wrho;
    }
    let m = Matrix3::from_iterator(m_dyn.iter().copied());
    let g = Vector3::new(g_dyn[0], g_dyn[1], g_dyn[2]);
    (m, g)
}

/// Evaluates the oracle's smooth objective (unambiguous phase, no wrap) at
/// an arbitrary rotation, for dominance comparisons against other
/// estimators.
pub fn oracle_objective(
    input: &OracleInput<'_>,
    rot: &Matrix3<f64>,
    q_mode: QMode,
    obs_mode: ObsMode,
) -> Result<f64> {
    let weights = solver::Weights::new(input.epoch, q_mode)?;
    let xb3 = input.geometry.embedded();
    Ok(fixed_phase_cost(rot, input, &weights, &xb3, obs_mode))
}

fn fixed_phase_cost(
    rot: &Matrix3<f64>,
    input: &OracleInput<'_>,
    weights: &solver::Weights,
    xb3: &DMatrix<f64>,
    obs_mode: ObsMode,
) -> f64 {
    let model = input.h.matrix() * rot * xb3;
    let (s, a) = input.phi.shape();
    let stack = |m: &DMatrix<f64>, model: &DMatrix<f64>| {
        DVector::from_fn(s * a, |k, _| {
            m[(k % s, k / s)] - model[(k % s, k / s)]
        })
    };
    let mut pv = stack(&input.phi, &model);
    whiten_in_place(weights.phase_factor(), &mut pv);
    let mut cost = pv.norm_squared();
    if obs_mode == ObsMode::PhaseAndCode {
        let mut cv = stack(&input.epoch.code, &model);
        whiten_in_place(weights.code_factor(), &mut cv);
        cost += cv.norm_squared();
    }
    cost
}

/// Unconstrained (linear) least-squares rotation followed by SVD
/// orthogonalization; the standard float initialization.
#[allow(clippy::too_many_arguments)]
fn float_rotation_start(
    phi: &DMatrix<f64>,
    code: &DMatrix<f64>,
    h: &DesignMatrix,
    xb3: &DMatrix<f64>,
    q: usize,
    l_phase: &DMatrix<f64>,
    l_code: &DMatrix<f64>,
    obs_mode: ObsMode,
) -> Matrix3<f64> {
    let kp = whitened_kron(l_phase, h.matrix(), xb3);
    let (s, a) = phi.shape();
    let stack = |m: &DMatrix<f64>| DVector::from_fn(s * a, |k, _| m[(k % s, k / s)]);
    let mut wphi = stack(phi);
    whiten_in_place(l_phase, &mut wphi);
    // Only the first q rotation columns are observable.
    let cols: Vec<usize> = (0..q).flat_map(|j| (0..3).map(move |i| i + 3 * j)).collect();
    let kp_red = kp.select_columns(cols.iter());
    let mut normal = kp_red.transpose() * &kp_red;
    let mut rhs = kp_red.transpose() * &wphi;
    if obs_mode == ObsMode::PhaseAndCode {
        let kc = whitened_kron(l_code, h.matrix(), xb3);
        let kc_red = kc.select_columns(cols.iter());
        let mut wrho = stack(code);
        whiten_in_place(l_code, &mut wrho);
        normal += kc_red.transpose() * &kc_red;
        rhs += kc_red.transpose() * &wrho;
    }
    let Some(sol) = normal.lu().solve(&rhs) else {
        return Matrix3::identity();
    };
    if q == 1 {
        let dir = Vector3::new(sol[0], sol[1], sol[2]);
        let n = dir.norm();
        if n > 1e-12 {
            return complete_rotation(&(dir / n));
        }
        return Matrix3::identity();
    }
    let mut float = Matrix3::identity();
    for j in 0..q {
        for i in 0..3 {
            float[(i, j)] = sol[3 * j + i];
        }
    }
    if q == 2 {
        let c = float.column(0).cross(&float.column(1));
        float.set_column(2, &c);
    }
    let (rot, _) = wahba_orthogonalize(&float);
    rot
}

/// Deterministic multi-start schedule around an initial rotation.
fn multi_start_schedule(rot0: &Matrix3<f64>) -> Vec<Matrix3<f64>> {
    let mut starts = vec![*rot0];
    let tilt = 15f64.to_radians();
    for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
        for sign in [1.0, -1.0] {
            starts.push(axis_rotation(&axis, sign * tilt) * rot0);
        }
    }
    for turn in [90f64, 180.0, 270.0] {
        starts.push(axis_rotation(&Vector3::z(), turn.to_radians()) * rot0);
    }
    starts.push(axis_rotation(&Vector3::x(), std::f64::consts::PI) * rot0);
    starts
}

fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle)
        .into_inner()
}

// ── Brute-force constrained integer least squares ───────────────────────────

/// Exact C-ILS solution over a bounded integer box.
#[derive(Debug, Clone)]
pub struct CilsSolution {
    pub rotation: Matrix3<f64>,
    pub ambiguities: DMatrix<i64>,
    pub cost: f64,
    /// Box center used for the enumeration.
    pub center: DMatrix<i64>,
}

/// Enumerates every integer matrix in a box of radius `box_radius` around
/// `round(Psi - H R_init Xb)` (R_init from the code-only float solution),
/// solves the constrained rotation subproblem for each, and returns the
/// global minimum, with ties broken by lexicographic integer order.
pub fn brute_force_cils(
    epoch: &DdEpoch,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
    q_mode: QMode,
    obs_mode: ObsMode,
    box_radius: i64,
) -> Result<CilsSolution> {
    let s = epoch.num_dd_rows();
    let a = epoch.num_baselines();
    let cells = s * a;
    let width = (2 * box_radius + 1) as u128;
    let count = width
        .checked_pow(cells as u32)
        .ok_or(Error::BoxTooLarge {
            count: u128::MAX,
            limit: CILS_ENUMERATION_LIMIT,
        })?;
    if count > CILS_ENUMERATION_LIMIT {
        return Err(Error::BoxTooLarge {
            count,
            limit: CILS_ENUMERATION_LIMIT,
        });
    }

    let weights = solver::Weights::new(epoch, q_mode)?;
    let xb3 = geometry.embedded();
    let q = geometry.q();

    // Code-only float solution for the box center.
    let r_init = float_rotation_start(
        &epoch.code,
        &epoch.code,
        h,
        &xb3,
        q,
        weights.code_factor(),
        weights.code_factor(),
        ObsMode::PhaseOnly,
    );
    let model0 = h.matrix() * r_init * &xb3;
    let center = DMatrix::from_fn(s, a, |i, j| {
        solver::round_half_down(epoch.phase[(i, j)] - model0[(i, j)]) as i64
    });

    let solve_for = |n: &DMatrix<i64>| -> (Matrix3<f64>, f64) {
        let phi = DMatrix::from_fn(s, a, |i, j| epoch.phase[(i, j)] - n[(i, j)] as f64);
        if q == 1 {
            let (m, g) = sphere_normal_system(
                &phi.column(0).into_owned(),
                &epoch.code_column(0),
                h,
                geometry.baseline_length(0),
                weights.phase_factor(),
                weights.code_factor(),
                obs_mode,
            );
            let r = sphere_constrained_wls(&m, &g);
            let rot = complete_rotation(&r);
            let input = OracleInput {
                phi,
                epoch,
                h,
                geometry,
            };
            let cost = fixed_phase_cost(&rot, &input, &weights, &xb3, obs_mode);
            (rot, cost)
        } else {
            let rot0 = float_rotation_start(
                &phi,
                &epoch.code,
                h,
                &xb3,
                q,
                weights.phase_factor(),
                weights.code_factor(),
                obs_mode,
            );
            let res = gauss_newton_rotation(
                &phi,
                &epoch.code,
                h,
                &xb3,
                weights.phase_factor(),
                weights.code_factor(),
                obs_mode,
                rot0,
                1e-13,
            );
            (res.rotation, res.cost)
        }
    };

    let offsets_of = |k: u128| -> DMatrix<i64> {
        let mut digits = vec![0i64; cells];
        let mut kk = k;
        for d in digits.iter_mut() {
            *d = (kk % width) as i64 - box_radius;
            kk /= width;
        }
        DMatrix::from_vec(s, a, digits)
    };

    use rayon::prelude::*;
    let best = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let n = &center + offsets_of(k as u128);
            let (rot, cost) = solve_for(&n);
            (cost, n, rot)
        })
        .reduce_with(|x, y| {
            match x.0.total_cmp(&y.0) {
                std::cmp::Ordering::Less => x,
                std::cmp::Ordering::Greater => y,
                std::cmp::Ordering::Equal => {
                    if lex_le(&x.1, &y.1) {
                        x
                    } else {
                        y
                    }
                }
            }
        })
        .expect("non-empty enumeration");

    Ok(CilsSolution {
        rotation: best.2,
        ambiguities: best.1,
        cost: best.0,
        center,
    })
}

fn lex_le(x: &DMatrix<i64>, y: &DMatrix<i64>) -> bool {
    for (xi, yi) in x.iter().zip(y.iter()) {
        match xi.cmp(yi) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

// ── Ambiguity function method ───────────────────────────────────────────────

/// AFM grid-search result.
#[derive(Debug, Clone)]
pub struct AfmResult {
    pub rotation: Matrix3<f64>,
    /// Raw grid argmin before refinement.
    pub grid_rotation: Matrix3<f64>,
    pub ambiguities: DMatrix<i64>,
    pub cost: f64,
}

/// Exhaustive grid search of the phase-only wrapped objective over yaw in
/// `(-pi, pi]` and pitch in `[-pi/2, pi/2]` (plus roll for two or more
/// baselines), refined from the grid argmin.
pub fn afm_grid_search(
    epoch: &DdEpoch,
    h: &DesignMatrix,
    geometry: &ArrayGeometry,
    step: f64,
    params: &SolverParams,
) -> Result<AfmResult> {
    if !(step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    let weights = solver::Weights::new(epoch, params.q_mode)?;
    let (base, frac) = split_phase(&epoch.phase);
    let mut afm_params = *params;
    afm_params.obs_mode = ObsMode::PhaseOnly;

    let n_yaw = (std::f64::consts::TAU / step).round() as usize;
    let n_pitch = (std::f64::consts::PI / step).round() as usize + 1;
    let yaw_at = |i: usize| -std::f64::consts::PI + (i + 1) as f64 * step;
    let pitch_at = |j: usize| -std::f64::consts::FRAC_PI_2 + j as f64 * step;

    if geometry.q() == 1 {
        let bp = BaselineProblem {
            psi: frac.column(0).into_owned(),
            rho: epoch.code_column(0),
            h,
            d: geometry.baseline_length(0),
            l_phase: weights.baseline_phase_factor(0),
            l_code: weights.baseline_code_factor(0),
            obs_mode: ObsMode::PhaseOnly,
        };
        let mut best = (f64::INFINITY, Vector3::x());
        for i in 0..n_yaw {
            for j in 0..n_pitch {
                let r = crate::obs_model::direction_from_angles(yaw_at(i), pitch_at(j));
                let c = bp.wrapped_cost(&r);
                if c < best.0 {
                    best = (c, r);
                }
            }
        }
        let grid_rotation = complete_rotation(&best.1);
        let refined = solver::refine_single(&bp, best.1, &afm_params);
        let r_hat = refined.direction();
        let model = bp.model(&r_hat);
        let ambiguities = DMatrix::from_fn(bp.dd_rows(), 1, |i, _| {
            base[(i, 0)] + solver::round_half_down(bp.psi[i] - model[i]) as i64
        });
        return Ok(AfmResult {
            rotation: refined.rotation,
            grid_rotation,
            ambiguities,
            cost: refined.cost,
        });
    }

    let mp = MultiProblem {
        phase: frac.clone(),
        code: epoch.code.clone(),
        h,
        xb3: geometry.embedded(),
        l_phase: weights.phase_factor(),
        l_code: weights.code_factor(),
        obs_mode: ObsMode::PhaseOnly,
    };
    let mut best = (f64::INFINITY, Matrix3::identity());
    for i in 0..n_yaw {
        for j in 0..n_pitch {
            for k in 0..n_yaw {
                let rot = crate::obs_model::euler_to_rotation(yaw_at(i), pitch_at(j), yaw_at(k));
                let c = mp.wrapped_cost(&rot);
                if c < best.0 {
                    best = (c, rot);
                }
            }
        }
    }
    let grid_rotation = best.1;
    let refined = solver::refine_multi(&mp, best.1, &afm_params);
    let model = mp.model(&refined.rotation);
    let (s, a) = frac.shape();
    let ambiguities = DMatrix::from_fn(s, a, |i, j| {
        base[(i, j)] + solver::round_half_down(frac[(i, j)] - model[(i, j)]) as i64
    });
    Ok(AfmResult {
        rotation: refined.rotation,
        grid_rotation,
        ambiguities,
        cost: refined.cost,
    })
}

/// Geodesic angle between two rotations restricted to their first `q`
/// columns; the equality metric for estimator comparisons.
pub fn rotation_distance(r1: &Matrix3<f64>, r2: &Matrix3<f64>, q: usize) -> f64 {
    if q == 1 {
        let a = r1.column(0);
        let b = r2.column(0);
        let cross = Vector3::new(
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        );
        return cross.norm().atan2(a.dot(&b));
    }
    let rel = r1.transpose() * r2;
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos()
}
