//! Sphere-circle enumeration and pairwise intersection.
//!
//! Each double-difference phase row constrains the baseline direction to a
//! circle on the unit sphere: the locus of unit vectors r with
//! `h~_s^T r = (psi_s - N) / d_a`, one circle per admissible integer `N`.
//! Candidate directions are the pairwise intersections of circles from
//! different satellites.

use nalgebra::{DVector, Vector3};

use crate::error::Error;
use crate::obs_model::DesignMatrix;
use crate::Result;

/// Minimum sine of the angle between two circle axes before the pair is
/// rejected as collinear.
const MIN_AXIS_SINE: f64 = 1e-6;

/// One constraint circle on the unit sphere.
#[derive(Debug, Clone)]
pub struct SphereCircle {
    /// Design-matrix row `h~_s` (cycles per meter, not unit norm).
    pub axis: Vector3<f64>,
    /// Cached `axis / |axis|`.
    pub unit_axis: Vector3<f64>,
    /// `cos(theta_s) = (psi_s - N) / (d_a |h~_s|)`.
    pub cos_theta: f64,
    /// Circle radius on the unit sphere.
    pub sin_theta: f64,
    /// Circle center `cos(theta_s) * axis / |axis|`.
    pub center: Vector3<f64>,
    /// Originating double-difference row (0-based).
    pub sat: usize,
    /// Integer hypothesis `N` for that row.
    pub integer: i64,
}

impl SphereCircle {
    pub fn new(axis: Vector3<f64>, cos_theta: f64, sat: usize, integer: i64) -> Self {
        let unit_axis = axis / axis.norm();
        let cos_theta = cos_theta.clamp(-1.0, 1.0);
        let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        Self {
            axis,
            unit_axis,
            cos_theta,
            sin_theta,
            center: cos_theta * unit_axis,
            sat,
            integer,
        }
    }
}

/// Enumerates every admissible circle for one baseline: for each row `s` and
/// each integer `N` with `|psi_s - N| <= d_a |h~_s|`, one circle.
pub fn enumerate_circles(
    psi: &DVector<f64>,
    h: &DesignMatrix,
    baseline_length: f64,
) -> Vec<SphereCircle> {
    let mut out = Vec::new();
    for s in 0..h.num_rows() {
        let bound = baseline_length * h.row_norm(s);
        if !(bound > 0.0) {
            continue;
        }
        let lo = (psi[s] - bound).ceil() as i64;
        let hi = (psi[s] + bound).floor() as i64;
        for n in lo..=hi {
            let cos_theta = (psi[s] - n as f64) / bound;
            out.push(SphereCircle::new(
                h.row_vector(s),
                cos_theta,
                s,
                n,
            ));
        }
    }
    out
}

/// Where an intersection candidate came from, in deterministic rank order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IntersectionKind {
    /// `q1 = p_c - sqrt(1 - |p_c|^2) v1`.
    CrossingNeg,
    /// `q2 = p_c + sqrt(1 - |p_c|^2) v1`.
    CrossingPos,
    /// Tangency or near-miss at the peak point `p1`.
    PeakLow,
    /// Tangency or near-miss at the peak point `p2`.
    PeakHigh,
}

/// Intersects two circles from distinct satellites.
///
/// Returns zero, one, or two unit vectors. When the circles do not cross but
/// one of the peak-point plane distances is within `delta_gap`, the
/// corresponding peak point is returned as a near-miss candidate to protect
/// against intersections destroyed by noise.
pub fn circle_pair_intersections(
    cs: &SphereCircle,
    cm: &SphereCircle,
    delta_gap: f64,
) -> Result<Vec<(Vector3<f64>, IntersectionKind)>> {
    let us = cs.unit_axis;
    let um = cm.unit_axis;
    let cross = us.cross(&um);
    let sin_axes = cross.norm();
    if sin_axes <= MIN_AXIS_SINE {
        return Err(Error::CollinearAxes {
            angle: sin_axes.atan2(us.dot(&um)),
        });
    }
    let v1 = cross / sin_axes;
    let v2 = v1.cross(&um).normalize();

    // Peak points of circle m with respect to circle s, and their signed
    // distances from the plane of circle s.
    let p1 = cm.center - cm.sin_theta * v2;
    let p2 = cm.center + cm.sin_theta * v2;
    let d1 = (p1 - cs.center).dot(&us);
    let d2 = (p2 - cs.center).dot(&us);

    let mut out = Vec::with_capacity(2);
    if d1 * d2 < 0.0 {
        // The plane-intersection line, anchored at its closest point to the
        // origin (the solution of both plane equations within span(us, um)).
        let c_axes = us.dot(&um);
        let denom = 1.0 - c_axes * c_axes;
        let a = (cs.cos_theta - c_axes * cm.cos_theta) / denom;
        let b = (cm.cos_theta - c_axes * cs.cos_theta) / denom;
        let pc = a * us + b * um;
        let half = (1.0 - pc.norm_squared()).max(0.0).sqrt();
        out.push((pc - half * v1, IntersectionKind::CrossingNeg));
        out.push((pc + half * v1, IntersectionKind::CrossingPos));
    } else if d1 == 0.0 || d2 == 0.0 {
        if d1 == 0.0 {
            out.push((p1, IntersectionKind::PeakLow));
        }
        if d2 == 0.0 {
            out.push((p2, IntersectionKind::PeakHigh));
        }
    } else {
        if d1.abs() < delta_gap {
            out.push((p1, IntersectionKind::PeakLow));
        }
        if d2.abs() < delta_gap {
            out.push((p2, IntersectionKind::PeakHigh));
        }
    }
    Ok(out)
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

    #[test]
    fn circle_count_small_case() {
        // d |h~| = 2.4, psi = 0.3: N in {-2..2}, five circles.
        let h = DesignMatrix::from_matrix(nalgebra::DMatrix::from_row_slice(
            1,
            3,
            &[2.4, 0.0, 0.0],
        ))
        .unwrap();
        let psi = DVector::from_element(1, 0.3);
        let circles = enumerate_circles(&psi, &h, 1.0);
        assert_eq!(circles.len(), 5);
        let ints: Vec<i64> = circles.iter().map(|c| c.integer).collect();
        assert_eq!(ints, vec![-2, -1, 0, 1, 2]);
        // psi - N = 0 gives a great circle.
        let great = circles.iter().find(|c| c.integer == 0).unwrap();
        assert_eq!(great.cos_theta, 0.3 / 2.4);
        let zero = SphereCircle::new(Vector3::new(2.4, 0.0, 0.0), 0.0, 0, 0);
        assert_eq!(zero.sin_theta, 1.0);
    }

    #[test]
    fn circle_invariant_center_radius() {
        let c = SphereCircle::new(Vector3::new(3.0, -1.0, 2.0), 0.6, 2, -4);
        assert_relative_eq!(
            c.center.norm_squared() + c.sin_theta * c.sin_theta,
            1.0,
            epsilon = 1e-12
        );
        assert!((c.unit_axis.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn great_circles_orthogonal_axes() {
        let cs = SphereCircle::new(Vector3::x() * 2.0, 0.0, 0, 0);
        let cm = SphereCircle::new(Vector3::y() * 5.0, 0.0, 1, 0);
        let pts = circle_pair_intersections(&cs, &cm, 1e-3).unwrap();
        assert_eq!(pts.len(), 2);
        let expected = Vector3::x().cross(&Vector3::y());
        assert_relative_eq!(pts[0].0, -expected, epsilon = 1e-14);
        assert_relative_eq!(pts[1].0, expected, epsilon = 1e-14);
    }

    #[test]
    fn point_circle_misses() {
        // cos(theta_s) = 1 degenerates circle s to the single point us; any
        // circle m not through that point yields no candidates.
        let cs = SphereCircle::new(Vector3::x(), 1.0, 0, 0);
        let cm = SphereCircle::new(Vector3::y(), 0.5, 1, 0);
        let pts = circle_pair_intersections(&cs, &cm, 1e-9).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn collinear_axes_rejected() {
        let cs = SphereCircle::new(Vector3::z() * 2.0, 0.3, 0, 0);
        let cm = SphereCircle::new(Vector3::z() * 7.0, -0.2, 1, 0);
        assert!(matches!(
            circle_pair_intersections(&cs, &cm, 1e-3),
            Err(Error::CollinearAxes { .. })
        ));
        // Antiparallel axes are collinear too.
        let cm2 = SphereCircle::new(Vector3::z() * -7.0, -0.2, 1, 0);
        assert!(circle_pair_intersections(&cs, &cm2, 1e-3).is_err());
    }

    #[test]
    fn intersections_lie_on_both_circles() {
        // Plane-membership oracle over random pairs.
        let mut rng = StdRng::seed_from_u64(42);
        let mut crossing = 0;
        for _ in 0..1000 {
            let axis_s = random_unit(&mut rng) * rng.random_range(0.5..10.0);
            let axis_m = random_unit(&mut rng) * rng.random_range(0.5..10.0);
            let cs = SphereCircle::new(axis_s, rng.random_range(-1.0..1.0), 0, 0);
            let cm = SphereCircle::new(axis_m, rng.random_range(-1.0..1.0), 1, 0);
            let Ok(pts) = circle_pair_intersections(&cs, &cm, 0.0) else {
                continue;
            };
            for (q, kind) in &pts {
                assert!(matches!(
                    kind,
                    IntersectionKind::CrossingNeg | IntersectionKind::CrossingPos
                ));
                crossing += 1;
                assert!((q.norm() - 1.0).abs() < 1e-12, "unit norm violated");
                let plane_s = cs.axis.dot(q) - cs.cos_theta * cs.axis.norm();
                let plane_m = cm.axis.dot(q) - cm.cos_theta * cm.axis.norm();
                assert!(plane_s.abs() < 1e-10, "plane s residual {plane_s:.2e}");
                assert!(plane_m.abs() < 1e-10, "plane m residual {plane_m:.2e}");
            }
        }
        assert!(crossing > 200, "too few crossing pairs sampled: {crossing}");
    }

    #[test]
    fn near_miss_peaks_returned_within_gap() {
        // Two small circles around +x and a nearby axis, separated so they
        // just fail to intersect; the facing peak must appear once the gap
        // tolerance covers the miss distance.
        let cs = SphereCircle::new(Vector3::x(), 0.995, 0, 0);
        let axis_m = Vector3::new(0.8, 0.6, 0.0);
        let cm = SphereCircle::new(axis_m, 0.995, 1, 0);
        let none = circle_pair_intersections(&cs, &cm, 1e-6).unwrap();
        assert!(none.is_empty());
        let some = circle_pair_intersections(&cs, &cm, 0.5).unwrap();
        assert!(!some.is_empty());
        for (p, kind) in &some {
            assert!(matches!(
                kind,
                IntersectionKind::PeakLow | IntersectionKind::PeakHigh
            ));
            // Peaks lie on circle m exactly.
            assert_relative_eq!(
                cm.unit_axis.dot(p),
                cm.cos_theta,
                epsilon = 1e-12
            );
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
    }
}
