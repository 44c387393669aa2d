//! Iterative refinement of coarse attitude estimates.
//!
//! The refinement alternates two steps until the implied integers stop
//! changing: (i) unwrap the phase at the current estimate,
//! `phi = psi + round(model - psi)`, which turns the wrapped objective into
//! a smooth weighted least-squares problem inside the current integer cell;
//! (ii) take Gauss-Newton steps on that smooth problem over the angle
//! parameterization, with a step-halving line search. The wrapped cost is
//! tracked across outer iterations and uphill moves are rejected, so the
//! reported cost never exceeds the cost at the starting point.
//!
//! Near pitch = +-pi/2 the angle parameterization degenerates, so the
//! problem is conjugated by a fixed axis swap chosen from the starting
//! estimate before optimizing.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::obs_model::{
    angles_from_direction, direction_from_angles, euler_rotation_partials, euler_to_rotation,
    rotation_to_euler, DesignMatrix,
};
use crate::solver::wrap::round_half_down;
use crate::solver::{whiten_in_place, whiten_matrix, BaselineProblem, MultiProblem, ObsMode, SolverParams};

/// Outcome of a refinement or fixed-phase Gauss-Newton run.
#[derive(Debug, Clone)]
pub struct RefineResult {
    /// Full rotation; for direction problems the first column is the
    /// estimated baseline direction.
    pub rotation: Matrix3<f64>,
    /// Final cost. For the unwrap refinements this is the wrapped objective;
    /// for [`gauss_newton_rotation`] it is the smooth fixed-phase objective.
    pub cost: f64,
    /// Outer iterations consumed.
    pub iterations: usize,
    pub converged: bool,
}

impl RefineResult {
    pub fn direction(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }
}

const MAX_INNER_STEPS: usize = 30;
const MAX_HALVINGS: usize = 30;

// ── Frame selection ─────────────────────────────────────────────────────────

/// A fixed conjugating rotation that keeps the working estimate away from
/// the pitch singularity: `|(G^T r).z|` is at most `1/sqrt(3)` for one of
/// the three axis swaps.
fn pick_frame(first_col: &Vector3<f64>) -> Matrix3<f64> {
    let rx90 = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
    let ry90 = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
    for g in [Matrix3::identity(), rx90, ry90] {
        if (g.transpose() * first_col).z.abs() < 0.8 {
            return g;
        }
    }
    Matrix3::identity()
}

// ── Direction Gauss-Newton (single baseline) ────────────────────────────────

/// Gauss-Newton on (yaw, pitch) for a fixed unwrapped phase vector.
/// Returns the direction, the fixed-phase cost, the last accepted step
/// norm, and whether the step tolerance was reached.
fn gn_direction_fixed(
    bp: &BaselineProblem<'_>,
    phi: &DVector<f64>,
    r0: Vector3<f64>,
    frame: &Matrix3<f64>,
    step_tol: f64,
) -> (Vector3<f64>, f64, f64, bool) {
    let s = bp.dd_rows();
    let use_code = bp.obs_mode == ObsMode::PhaseAndCode;
    let rows = if use_code { 2 * s } else { s };

    // Whitened design and observations; the residual is then affine in r.
    let wh_p = whiten_matrix(bp.l_phase, bp.h.matrix());
    let mut wphi = phi.clone();
    whiten_in_place(bp.l_phase, &mut wphi);
    let (wh_c, wrho) = if use_code {
        let wh_c = whiten_matrix(bp.l_code, bp.h.matrix());
        let mut wrho = bp.rho.clone();
        whiten_in_place(bp.l_code, &mut wrho);
        (wh_c, wrho)
    } else {
        (DMatrix::zeros(0, 3), DVector::zeros(0))
    };

    let residual = |r: &Vector3<f64>| -> DVector<f64> {
        let mut res = DVector::zeros(rows);
        let mp = &wh_p * (r * bp.d);
        for i in 0..s {
            res[i] = wphi[i] - mp[i];
        }
        if use_code {
            let mc = &wh_c * (r * bp.d);
            for i in 0..s {
                res[s + i] = wrho[i] - mc[i];
            }
        }
        res
    };

    let (mut yaw, mut pitch) = angles_from_direction(&(frame.transpose() * r0));
    let dir_at = |yaw: f64, pitch: f64| frame * direction_from_angles(yaw, pitch);
    let mut cost = residual(&dir_at(yaw, pitch)).norm_squared();
    let mut last_step = f64::INFINITY;
    let mut hit_tol = false;

    for _ in 0..MAX_INNER_STEPS {
        let (sa, ca) = yaw.sin_cos();
        let (sb, cb) = pitch.sin_cos();
        let d_yaw = frame * Vector3::new(-sa * cb, ca * cb, 0.0);
        let d_pitch = frame * Vector3::new(-ca * sb, -sa * sb, -cb);
        let res = residual(&dir_at(yaw, pitch));
        let mut j = DMatrix::zeros(rows, 2);
        let jp1 = &wh_p * (d_yaw * bp.d);
        let jp2 = &wh_p * (d_pitch * bp.d);
        for i in 0..s {
            j[(i, 0)] = -jp1[i];
            j[(i, 1)] = -jp2[i];
        }
        if use_code {
            let jc1 = &wh_c * (d_yaw * bp.d);
            let jc2 = &wh_c * (d_pitch * bp.d);
            for i in 0..s {
                j[(s + i, 0)] = -jc1[i];
                j[(s + i, 1)] = -jc2[i];
            }
        }
        let jtj = j.transpose() * &j;
        let rhs = -(j.transpose() * &res);
        let Some(delta) = jtj.lu().solve(&rhs) else {
            break;
        };

        // Step-halving line search on the fixed-phase cost.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial_cost =
                residual(&dir_at(yaw + t * delta[0], pitch + t * delta[1])).norm_squared();
            if trial_cost < cost {
                yaw += t * delta[0];
                pitch += t * delta[1];
                cost = trial_cost;
                last_step = t * delta.norm();
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            hit_tol = true;
            last_step = 0.0;
            break;
        }
        if last_step < step_tol {
            hit_tol = true;
            break;
        }
    }
    (dir_at(yaw, pitch), cost, last_step, hit_tol)
}

/// Refines a single-baseline direction candidate by alternating phase
/// unwrapping with Gauss-Newton on the smooth subproblem.
pub(crate) fn refine_single(
    bp: &BaselineProblem<'_>,
    r0: Vector3<f64>,
    params: &SolverParams,
) -> RefineResult {
    let frame = pick_frame(&r0);
    let s = bp.dd_rows();
    let mut r = r0;
    let mut best_r = r0;
    let mut best_cost = bp.wrapped_cost(&r0);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=params.max_refine_iters {
        iterations = it;
        let model = bp.model(&r);
        let m = DVector::from_fn(s, |i, _| round_half_down(model[i] - bp.psi[i]));
        let phi = &bp.psi + &m;
        let (r_new, _, last_step, _) = gn_direction_fixed(bp, &phi, r, &frame, params.step_tol);
        let wrapped = bp.wrapped_cost(&r_new);
        if wrapped < best_cost {
            best_cost = wrapped;
            best_r = r_new;
        } else if wrapped > best_cost * (1.0 + 1e-12) + 1e-300 {
            // Uphill in the wrapped objective: reject and stop at the best.
            break;
        }
        r = r_new;
        let model_new = bp.model(&r);
        let stable = (0..s).all(|i| round_half_down(model_new[i] - bp.psi[i]) == m[i]);
        if stable && last_step < params.step_tol {
            converged = true;
            break;
        }
    }

    RefineResult {
        rotation: super::complete_rotation(&best_r),
        cost: best_cost,
        iterations,
        converged,
    }
}

// ── Rotation Gauss-Newton (multi baseline) ──────────────────────────────────

/// Whitened linear map from vec(Rp) (column-major, 9 entries) to the
/// whitened model vector: `L^-1 (Xb^T (x) (H G))`.
pub(crate) fn whitened_kron(l: &DMatrix<f64>, hg: &DMatrix<f64>, xb3: &DMatrix<f64>) -> DMatrix<f64> {
    let s = hg.nrows();
    let a = xb3.ncols();
    let mut k = DMatrix::zeros(s * a, 9);
    for col_a in 0..a {
        for row_s in 0..s {
            let row = col_a * s + row_s;
            for i in 0..3 {
                for j in 0..3 {
                    k[(row, i + 3 * j)] = hg[(row_s, i)] * xb3[(j, col_a)];
                }
            }
        }
    }
    whiten_matrix(l, &k)
}

fn vec9(m: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_iterator(9, m.iter().copied())
}

struct RotationGn {
    kp: DMatrix<f64>,
    kc: DMatrix<f64>,
    wphi: DVector<f64>,
    wrho: DVector<f64>,
    use_code: bool,
    n_params: usize,
}

impl RotationGn {
    fn residual(&self, rp: &Matrix3<f64>) -> DVector<f64> {
        let v = vec9(rp);
        let mut parts = &self.wphi - &self.kp * &v;
        if self.use_code {
            let code_part = &self.wrho - &self.kc * &v;
            parts = DVector::from_iterator(
                parts.len() + code_part.len(),
                parts.iter().copied().chain(code_part.iter().copied()),
            );
        }
        parts
    }

    /// Runs GN on the Euler angles of Rp. Returns angles, cost, last step,
    /// and whether the step tolerance was reached.
    fn run(&self, start: (f64, f64, f64), step_tol: f64) -> ((f64, f64, f64), f64, f64, bool) {
        let (mut yaw, mut pitch, mut roll) = start;
        let mut cost = self
            .residual(&euler_to_rotation(yaw, pitch, roll))
            .norm_squared();
        let mut last_step = f64::INFINITY;
        let mut hit_tol = false;

        for _ in 0..MAX_INNER_STEPS {
            let res = self.residual(&euler_to_rotation(yaw, pitch, roll));
            let partials = euler_rotation_partials(yaw, pitch, roll);
            let rows = res.len();
            let mut j = DMatrix::zeros(rows, self.n_params);
            for (idx, dr) in partials.iter().take(self.n_params).enumerate() {
                let v = vec9(dr);
                let mut col = -(&self.kp * &v);
                if self.use_code {
                    let code_col = -(&self.kc * &v);
                    col = DVector::from_iterator(
                        rows,
                        col.iter().copied().chain(code_col.iter().copied()),
                    );
                }
                j.set_column(idx, &col);
            }
            let jtj = j.transpose() * &j;
            let rhs = -(j.transpose() * &res);
            let Some(delta) = jtj.lu().solve(&rhs) else {
                break;
            };

            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let dy = t * delta[0];
                let dp = t * delta[1];
                let dg = if self.n_params > 2 { t * delta[2] } else { 0.0 };
                let trial = self
                    .residual(&euler_to_rotation(yaw + dy, pitch + dp, roll + dg))
                    .norm_squared();
                if trial < cost {
                    yaw += dy;
                    pitch += dp;
                    roll += dg;
                    cost = trial;
                    last_step = t * delta.norm();
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                hit_tol = true;
                last_step = 0.0;
                break;
            }
            if last_step < step_tol {
                hit_tol = true;
                break;
            }
        }
        ((yaw, pitch, roll), cost, last_step, hit_tol)
    }
}

fn build_rotation_gn(
    phi: &DMatrix<f64>,
    code: &DMatrix<f64>,
    h: &DesignMatrix,
    xb3: &DMatrix<f64>,
    l_phase: &DMatrix<f64>,
    l_code: &DMatrix<f64>,
    obs_mode: ObsMode,
    frame: &Matrix3<f64>,
) -> RotationGn {
    let use_code = obs_mode == ObsMode::PhaseAndCode;
    let hg: DMatrix<f64> = (h.matrix() * frame).resize(h.num_rows(), 3, 0.0);
    let kp = whitened_kron(l_phase, &hg, xb3);
    let (s, a) = phi.shape();
    let stack = |m: &DMatrix<f64>| {
        DVector::from_fn(s * a, |k, _| m[(k % s, k / s)])
    };
    let mut wphi = stack(phi);
    whiten_in_place(l_phase, &mut wphi);
    let (kc, wrho) = if use_code {
        let kc = whitened_kron(l_code, &hg, xb3);
        let mut wrho = stack(code);
        whiten_in_place(l_code, &mut wrho);
        (kc, wrho)
    } else {
        (DMatrix::zeros(0, 9), DVector::zeros(0))
    };
    // With a single body column only the first rotation column is
    // observable, so roll is dropped from the parameter set.
    let n_params = if xb3.ncols() == 1 { 2 } else { 3 };
    RotationGn {
        kp,
        kc,
        wphi,
        wrho,
        use_code,
        n_params,
    }
}

/// Solves the smooth fixed-phase constrained least-squares problem over the
/// rotation by Gauss-Newton on Euler angles, starting from `rot0`.
///
/// This is the inner solver of the multi-baseline refinement; it is public
/// because the reference estimators reuse it on unambiguous phase. The cost
/// it reports is the smooth objective, not the wrapped one.
#[allow(clippy::too_many_arguments)]
pub fn gauss_newton_rotation(
    phi: &DMatrix<f64>,
    code: &DMatrix<f64>,
    h: &DesignMatrix,
    xb3: &DMatrix<f64>,
    l_phase: &DMatrix<f64>,
    l_code: &DMatrix<f64>,
    obs_mode: ObsMode,
    rot0: Matrix3<f64>,
    step_tol: f64,
) -> RefineResult {
    let frame = pick_frame(&rot0.column(0).into_owned());
    let gn = build_rotation_gn(phi, code, h, xb3, l_phase, l_code, obs_mode, &frame);
    let rp0 = frame.transpose() * rot0;
    let att0 = rotation_to_euler(&rp0);
    let (angles, cost, _, hit) = gn.run((att0.yaw, att0.pitch, att0.roll), step_tol);
    RefineResult {
        rotation: frame * euler_to_rotation(angles.0, angles.1, angles.2),
        cost,
        iterations: 1,
        converged: hit,
    }
}

/// Refines a rotation estimate against the full epoch by alternating phase
/// unwrapping with Gauss-Newton over Euler angles.
pub(crate) fn refine_multi(
    mp: &MultiProblem<'_>,
    rot0: Matrix3<f64>,
    params: &SolverParams,
) -> RefineResult {
    let frame = pick_frame(&rot0.column(0).into_owned());
    let (s, a) = mp.phase.shape();
    let mut rot = rot0;
    let mut best_rot = rot0;
    let mut best_cost = mp.wrapped_cost(&rot0);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=params.max_refine_iters {
        iterations = it;
        let model = mp.model(&rot);
        let m = DMatrix::from_fn(s, a, |i, j| round_half_down(model[(i, j)] - mp.phase[(i, j)]));
        let phi = &mp.phase + &m;
        let gn = build_rotation_gn(
            &phi,
            &mp.code,
            mp.h,
            &mp.xb3,
            mp.l_phase,
            mp.l_code,
            mp.obs_mode,
            &frame,
        );
        let rp = frame.transpose() * rot;
        let att = rotation_to_euler(&rp);
        let (angles, _, last_step, _) = gn.run((att.yaw, att.pitch, att.roll), params.step_tol);
        let rot_new = frame * euler_to_rotation(angles.0, angles.1, angles.2);
        let wrapped = mp.wrapped_cost(&rot_new);
        if wrapped < best_cost {
            best_cost = wrapped;
            best_rot = rot_new;
        } else if wrapped > best_cost * (1.0 + 1e-12) + 1e-300 {
            break;
        }
        rot = rot_new;
        let model_new = mp.model(&rot);
        let stable = (0..s).all(|i| {
            (0..a).all(|j| round_half_down(model_new[(i, j)] - mp.phase[(i, j)]) == m[(i, j)])
        });
        if stable && last_step < params.step_tol {
            converged = true;
            break;
        }
    }

    RefineResult {
        rotation: best_rot,
        cost: best_cost,
        iterations,
        converged,
    }
}

// ── Sphere-constrained weighted least squares ───────────────────────────────

/// Global minimizer of `r^T M r - 2 g^T r` over the unit sphere.
///
/// Solved through the eigendecomposition of the symmetric 3x3 `M` and the
/// secular equation `sum_i (g_i / (lambda_i + mu))^2 = 1` on
/// `mu > -lambda_min`, with the hard case (`g` orthogonal to the smallest
/// eigenspace) handled explicitly. Because the problem is a quadratic on the
/// sphere, the result is the exact global optimum, which the reference
/// estimators rely on.
pub fn sphere_constrained_wls(m: &Matrix3<f64>, g: &Vector3<f64>) -> Vector3<f64> {
    let eig = m.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs: Vec<Vector3<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let gt: Vec<f64> = vecs.iter().map(|v| v.dot(g)).collect();

    let scale = lam[2].abs().max(lam[0].abs()).max(1.0);
    let degenerate_tol = 1e-13 * scale;
    let g_scale = g.norm().max(1e-300);

    // Components in the smallest eigenspace (within tolerance).
    let in_min: Vec<bool> = lam.iter().map(|&l| l - lam[0] <= degenerate_tol).collect();
    let g_min_norm: f64 = (0..3)
        .filter(|&i| in_min[i])
        .map(|i| gt[i] * gt[i])
        .sum::<f64>()
        .sqrt();

    let norm2_at = |mu: f64| -> f64 {
        (0..3)
            .map(|i| {
                let d = lam[i] + mu;
                let t = gt[i] / d;
                t * t
            })
            .sum()
    };

    if g_min_norm <= 1e-14 * g_scale {
        // Possible hard case: evaluate the limit using the non-degenerate
        // components only.
        let rest: f64 = (0..3)
            .filter(|&i| !in_min[i])
            .map(|i| {
                let t = gt[i] / (lam[i] - lam[0]);
                t * t
            })
            .sum();
        if rest <= 1.0 {
            let mut r = Vector3::zeros();
            for i in 0..3 {
                if !in_min[i] {
                    r += vecs[i] * (gt[i] / (lam[i] - lam[0]));
                }
            }
            let tau = (1.0 - rest).max(0.0).sqrt();
            // Deterministic sign for the free component.
            let v0 = vecs[0];
            let sign = if v0.x != 0.0 {
                v0.x.signum()
            } else if v0.y != 0.0 {
                v0.y.signum()
            } else {
                v0.z.signum()
            };
            r += v0 * (tau * sign);
            return r.normalize();
        }
    }

    // Regular case: phi(mu) = |r(mu)|^2 is strictly decreasing on
    // (-lambda_min, inf) from +inf to 0; bracket and bisect.
    let mut eps = 1e-12 * scale.max(1e-12);
    let mut lo = -lam[0] + eps;
    for _ in 0..200 {
        if norm2_at(lo) > 1.0 {
            break;
        }
        eps *= 0.5;
        lo = -lam[0] + eps;
        if eps < 1e-300 {
            break;
        }
    }
    let mut hi = lo + scale.max(g_scale);
    for _ in 0..200 {
        if norm2_at(hi) < 1.0 {
            break;
        }
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm2_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.abs().max(1.0) {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut r = Vector3::zeros();
    for i in 0..3 {
        r += vecs[i] * (gt[i] / (lam[i] + mu));
    }
    r.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-2 && n <= 1.0 {
                return v / n;
            }
        }
    }

    /// Brute-force check of the sphere solver against dense sampling plus
    /// local polish.
    #[test]
    fn sphere_solver_beats_dense_sampling() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let a = nalgebra::Matrix3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let m = a.transpose() * a + Matrix3::identity() * rng.random_range(0.0..0.5);
            let g = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let f = |r: &Vector3<f64>| (m * r).dot(r) - 2.0 * g.dot(r);
            let r_star = sphere_constrained_wls(&m, &g);
            assert!((r_star.norm() - 1.0).abs() < 1e-12);
            let f_star = f(&r_star);
            for _ in 0..500 {
                let q = random_unit(&mut rng);
                assert!(
                    f_star <= f(&q) + 1e-9 * (1.0 + f_star.abs()),
                    "sampled point beats solver: {} < {}",
                    f(&q),
                    f_star
                );
            }
        }
    }

    #[test]
    fn sphere_solver_hard_case() {
        // g lies in the span of the larger eigenvectors; with g small the
        // minimizer picks up a component along the smallest eigenvector.
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0));
        let g = Vector3::new(0.0, 0.3, 0.3);
        let r = sphere_constrained_wls(&m, &g);
        assert!((r.norm() - 1.0).abs() < 1e-12);
        let f = |r: &Vector3<f64>| (m * r).dot(r) - 2.0 * g.dot(r);
        let f_star = f(&r);
        let mut rng = StdRng::seed_from_u64(10);
        for _ in 0..2000 {
            let q = random_unit(&mut rng);
            assert!(f_star <= f(&q) + 1e-9);
        }
        // Zero g: the minimizer is the smallest eigenvector.
        let r0 = sphere_constrained_wls(&m, &Vector3::zeros());
        assert_relative_eq!(r0.x.abs(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn frame_keeps_pole_away() {
        for v in [
            Vector3::z(),
            -Vector3::z(),
            Vector3::new(0.1, 0.1, 0.99).normalize(),
            Vector3::x(),
        ] {
            let g = pick_frame(&v);
            assert!((g.transpose() * v).z.abs() < 0.8);
            assert_relative_eq!(g.determinant(), 1.0, epsilon = 1e-14);
        }
    }
}
