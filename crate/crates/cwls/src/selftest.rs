//! Fast invariant suite behind `cwls selftest`.
//!
//! Each check is deterministic (fixed seeds) and the whole suite runs in a
//! few seconds.

use nalgebra::{Matrix3, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::obs_model::{build_design_matrix, ArrayGeometry, GPS_L1_WAVELENGTH};
use crate::reference_solvers::rotation_distance;
use crate::simulator::{gen_constellation, sample_attitude, synthesize_epoch};
use crate::solver::{
    circle_pair_intersections, cwls_objective, round_half_down, solve, wahba_orthogonalize,
    ObsMode, QMode, SolverParams, SphereCircle,
};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the whole suite; all checks always execute.
pub fn run() -> Vec<CheckResult> {
    vec![
        check_wrap(),
        check_intersections(),
        check_wahba(),
        check_diagonal_q_equivalence(),
        check_noise_free_solve(),
    ]
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

/// Verifies a wrap implementation against the half-down convention.
/// Parameterized so the suite's own sensitivity is testable.
pub fn wrap_convention_holds(wrap_fn: impl Fn(f64) -> f64) -> bool {
    let cases = [
        (0.5, 0.5),
        (-0.5, 0.5),
        (1.5, 0.5),
        (-1.5, 0.5),
        (0.25, 0.25),
        (-0.25, -0.25),
        (3.0, 0.0),
        (-3.0, 0.0),
    ];
    for (x, want) in cases {
        if (wrap_fn(x) - want).abs() > 1e-15 {
            return false;
        }
    }
    let mut rng = StdRng::seed_from_u64(100);
    for _ in 0..1000 {
        let x: f64 = rng.random_range(-50.0..50.0);
        let w = wrap_fn(x);
        if !(w > -0.5 && w <= 0.5) {
            return false;
        }
        let n = x - w;
        if (n - n.round()).abs() > 1e-9 {
            return false;
        }
    }
    true
}

fn check_wrap() -> CheckResult {
    let passed = wrap_convention_holds(crate::solver::wrap);
    CheckResult {
        name: "wrap half-down convention",
        passed,
        detail: String::from("boundary cases and integer remainders"),
    }
}

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

/// Uniform random rotation via normalized quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let q = nalgebra::Vector4::<f64>::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            let q = nalgebra::Unit::new_normalize(nalgebra::Quaternion::new(
                q[0], q[1], q[2], q[3],
            ));
            return q.to_rotation_matrix().into_inner();
        }
    }
}

fn check_intersections() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut produced = 0;
    for _ in 0..1000 {
        let cs = SphereCircle::new(
            random_unit(&mut rng) * rng.random_range(0.5..10.0),
            rng.random_range(-1.0..1.0),
            0,
            0,
        );
        let cm = SphereCircle::new(
            random_unit(&mut rng) * rng.random_range(0.5..10.0),
            rng.random_range(-1.0..1.0),
            1,
            0,
        );
        let Ok(points) = circle_pair_intersections(&cs, &cm, 0.0) else {
            continue;
        };
        for (q, _) in points {
            produced += 1;
            let e1 = (cs.axis.dot(&q) - cs.cos_theta * cs.axis.norm()).abs();
            let e2 = (cm.axis.dot(&q) - cm.cos_theta * cm.axis.norm()).abs();
            let e3 = (q.norm() - 1.0).abs();
            worst = worst.max(e1).max(e2).max(e3 * 100.0);
        }
    }
    CheckResult {
        name: "circle intersection geometry",
        passed: produced > 100 && worst < 1e-10,
        detail: format!("{produced} points, worst residual {worst:.2e}"),
    }
}

fn check_wahba() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(102);
    let mut ok = true;
    let mut worst_ortho: f64 = 0.0;
    for _ in 0..100 {
        let coarse = Matrix3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let (fixed, _) = wahba_orthogonalize(&coarse);
        worst_ortho = worst_ortho
            .max((fixed.transpose() * fixed - Matrix3::identity()).norm())
            .max((fixed.determinant() - 1.0).abs());
        let d_star = (fixed - coarse).norm();
        for _ in 0..1000 {
            let q = random_rotation(&mut rng);
            if (q - coarse).norm() < d_star - 1e-9 {
                ok = false;
            }
        }
    }
    CheckResult {
        name: "svd orthogonalization optimality",
        passed: ok && worst_ortho < 1e-10,
        detail: format!("orthogonality residual {worst_ortho:.2e}"),
    }
}

fn check_diagonal_q_equivalence() -> CheckResult {
    // With a diagonal weight the wrapped cost equals the integer-minimized
    // unwrapped cost, checked by enumeration.
    let mut rng = StdRng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let los = gen_constellation(4, 10f64.to_radians(), GPS_L1_WAVELENGTH, &mut rng);
        let Ok(h) = build_design_matrix(&los) else {
            continue;
        };
        let geometry = ArrayGeometry::single(1.0).unwrap();
        let att = sample_attitude(&mut rng);
        let (epoch, _) = synthesize_epoch(
            &att,
            &geometry,
            &los,
            &h,
            0.003,
            0.3,
            &mut rng,
        )
        .unwrap();
        let rot = random_rotation(&mut rng);
        let wrapped =
            cwls_objective(&rot, &epoch, &h, &geometry, QMode::Diagonal, ObsMode::PhaseOnly)
                .unwrap();
        // Enumerate integers around the rounded residual.
        let model = h.matrix() * rot * geometry.embedded();
        let s = epoch.num_dd_rows();
        let diag = epoch.q_phase.diagonal();
        let center: Vec<f64> = (0..s)
            .map(|i| round_half_down(epoch.phase[(i, 0)] - model[(i, 0)]))
            .collect();
        let mut best = f64::INFINITY;
        let radius = 3i64;
        let width = (2 * radius + 1) as usize;
        for k in 0..width.pow(s as u32) {
            let mut kk = k;
            let mut cost = 0.0;
            for i in 0..s {
                let off = (kk % width) as i64 - radius;
                kk /= width;
                let res = epoch.phase[(i, 0)] - model[(i, 0)] - (center[i] + off as f64);
                cost += res * res / diag[i];
            }
            best = best.min(cost);
        }
        worst = worst.max((wrapped - best).abs() / best.max(1.0));
    }
    CheckResult {
        name: "diagonal-weight integer elimination",
        passed: worst < 1e-10,
        detail: format!("worst relative gap {worst:.2e}"),
    }
}

fn check_noise_free_solve() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    let mut all_exact = true;
    for &a in &[1usize, 2, 3] {
        let geometry = if a == 1 {
            ArrayGeometry::single(1.0).unwrap()
        } else {
            ArrayGeometry::orthogonal(a, 1.0).unwrap()
        };
        for _ in 0..2 {
            let los = gen_constellation(6, 10f64.to_radians(), GPS_L1_WAVELENGTH, &mut rng);
            let Ok(h) = build_design_matrix(&los) else {
                continue;
            };
            let att = sample_attitude(&mut rng);
            let (epoch, n_true) =
                synthesize_epoch(&att, &geometry, &los, &h, 0.0, 0.0, &mut rng).unwrap();
            match solve(&epoch, &h, &geometry, &SolverParams::default()) {
                Ok(report) => {
                    if report.ambiguities != n_true {
                        all_exact = false;
                    }
                    let q = geometry.q();
                    worst = worst.max(rotation_distance(
                        &report.rotation,
                        &att.rotation_matrix(),
                        q,
                    ));
                }
                Err(_) => all_exact = false,
            }
        }
    }
    CheckResult {
        name: "noise-free exact recovery",
        passed: all_exact && worst < 1e-8,
        detail: format!("worst rotation error {worst:.2e} rad"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_clean_build() {
        let results = run();
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn wrap_check_catches_symmetric_rounding() {
        // A wrap built on round-half-away-from-zero must fail the check.
        assert!(!wrap_convention_holds(|x| x - x.round()));
        // A sign-flipped wrap must fail too.
        assert!(!wrap_convention_holds(|x| round_half_down(x) - x));
        assert!(wrap_convention_holds(crate::solver::wrap));
    }
}
