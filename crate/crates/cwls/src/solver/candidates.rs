//! Candidate direction pools and the inter-baseline angle filter.

use nalgebra::Vector3;

use crate::error::Error;
use crate::obs_model::ArrayGeometry;
use crate::solver::circles::{circle_pair_intersections, enumerate_circles, IntersectionKind};
use crate::solver::BaselineProblem;
use crate::Result;

/// One ranked candidate direction for a baseline.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub direction: Vector3<f64>,
    /// Wrapped weighted cost of the candidate under the per-baseline
    /// covariance block.
    pub cost: f64,
    pub kind: IntersectionKind,
    /// Satellite (double-difference row) pair that produced the candidate.
    pub sats: (usize, usize),
    /// Integer hypotheses of the two circles.
    pub integers: (i64, i64),
}

/// Ranked, truncated candidate pool for one baseline.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    /// Ascending by cost; at most K entries.
    pub candidates: Vec<Candidate>,
    /// Pool size before truncation.
    pub pool_size: usize,
    /// Satellite pairs skipped because their circle axes were collinear.
    pub collinear_pairs_skipped: usize,
    /// Mean admissible integer hypotheses per double-difference row: the
    /// complexity driver of the candidate stage.
    pub mean_circles_per_row: f64,
}

/// Builds the candidate pool for one baseline from all circle-pair
/// combinations across distinct satellites, ranks by the wrapped objective,
/// and keeps the best `keep` entries that are pairwise more than
/// `dedup_tol` apart.
///
/// The deduplication matters: the same objective basin reappears once per
/// satellite pair (the true direction, in particular, is an intersection of
/// every correctly-unwrapped pair), and without it the kept set collapses
/// to copies of one or two basins.
///
/// Ordering is fully deterministic: ties in cost break by satellite pair,
/// then integer pair, then intersection branch.
pub(crate) fn search_candidates_single(
    bp: &BaselineProblem<'_>,
    keep: usize,
    delta_gap: f64,
    dedup_tol: f64,
) -> Result<CandidateSet> {
    let circles = enumerate_circles(&bp.psi, bp.h, bp.d);
    let s_rows = bp.dd_rows();
    let mean_circles_per_row = circles.len() as f64 / s_rows as f64;
    let mut by_sat: Vec<Vec<usize>> = vec![Vec::new(); s_rows];
    for (idx, c) in circles.iter().enumerate() {
        by_sat[c.sat].push(idx);
    }

    let mut pool: Vec<Candidate> = Vec::new();
    let mut collinear = 0usize;
    for s in 0..s_rows {
        for m in s + 1..s_rows {
            let mut pair_collinear = false;
            'family: for &ci in &by_sat[s] {
                for &cj in &by_sat[m] {
                    match circle_pair_intersections(&circles[ci], &circles[cj], delta_gap) {
                        Ok(points) => {
                            for (dir, kind) in points {
                                pool.push(Candidate {
                                    direction: dir,
                                    cost: bp.wrapped_cost(&dir),
                                    kind,
                                    sats: (s, m),
                                    integers: (circles[ci].integer, circles[cj].integer),
                                });
                            }
                        }
                        Err(Error::CollinearAxes { .. }) => {
                            // Axes depend only on the satellite pair, not on
                            // the integer hypothesis: skip the whole family.
                            pair_collinear = true;
                            break 'family;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            if pair_collinear {
                collinear += 1;
            }
        }
    }

    if pool.is_empty() {
        return Err(Error::EmptyCandidatePool { baseline: 0 });
    }
    let pool_size = pool.len();
    pool.sort_by(|x, y| {
        x.cost
            .total_cmp(&y.cost)
            .then(x.sats.cmp(&y.sats))
            .then(x.integers.cmp(&y.integers))
            .then(x.kind.cmp(&y.kind))
    });
    let cos_tol = dedup_tol.cos();
    let mut kept: Vec<Candidate> = Vec::with_capacity(keep.max(1));
    for cand in pool {
        if kept.len() >= keep.max(1) {
            break;
        }
        if kept
            .iter()
            .all(|k| k.direction.dot(&cand.direction) < cos_tol)
        {
            kept.push(cand);
        }
    }
    Ok(CandidateSet {
        candidates: kept,
        pool_size,
        collinear_pairs_skipped: collinear,
        mean_circles_per_row,
    })
}

/// Retains every candidate tuple whose pairwise angles match the body-frame
/// inter-baseline angles within `delta_theta`.
///
/// Returns tuples of candidate indices, one per baseline, in lexicographic
/// order. An empty result signals the caller to widen or bypass the filter.
pub fn angle_filter(
    sets: &[CandidateSet],
    geometry: &ArrayGeometry,
    delta_theta: f64,
) -> Vec<Vec<usize>> {
    let a = sets.len();
    let mut out = Vec::new();
    let mut idx = vec![0usize; a];
    if sets.iter().any(|s| s.candidates.is_empty()) {
        return out;
    }
    'outer: loop {
        let ok = (0..a).all(|i| {
            (i + 1..a).all(|j| {
                let ri = &sets[i].candidates[idx[i]].direction;
                let rj = &sets[j].candidates[idx[j]].direction;
                let angle = ri.dot(rj).clamp(-1.0, 1.0).acos();
                (angle - geometry.inter_baseline_angle(i, j)).abs() < delta_theta
            })
        });
        if ok {
            out.push(idx.clone());
        }
        // Advance the mixed-radix counter.
        for pos in (0..a).rev() {
            idx[pos] += 1;
            if idx[pos] < sets[pos].candidates.len() {
                continue 'outer;
            }
            idx[pos] = 0;
        }
        break;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs_model::ArrayGeometry;

    fn dummy_set(dirs: &[Vector3<f64>]) -> CandidateSet {
        CandidateSet {
            candidates: dirs
                .iter()
                .enumerate()
                .map(|(i, d)| Candidate {
                    direction: *d,
                    cost: i as f64,
                    kind: IntersectionKind::CrossingNeg,
                    sats: (0, 1),
                    integers: (0, 0),
                })
                .collect(),
            pool_size: dirs.len(),
            collinear_pairs_skipped: 0,
            mean_circles_per_row: 0.0,
        }
    }

    #[test]
    fn angle_filter_rejects_wrong_separation() {
        // Orthogonal body geometry: a 45-degree candidate pair must fail for
        // any tolerance below pi/4.
        let geom = ArrayGeometry::orthogonal(2, 1.0).unwrap();
        let sets = vec![
            dummy_set(&[Vector3::x()]),
            dummy_set(&[Vector3::new(1.0, 1.0, 0.0).normalize()]),
        ];
        assert!(angle_filter(&sets, &geom, std::f64::consts::FRAC_PI_4 - 0.01).is_empty());
        assert_eq!(
            angle_filter(&sets, &geom, std::f64::consts::FRAC_PI_4 + 0.01).len(),
            1
        );
    }

    #[test]
    fn angle_filter_accepts_true_tuples() {
        let geom = ArrayGeometry::orthogonal(3, 1.0).unwrap();
        let sets = vec![
            dummy_set(&[Vector3::x(), Vector3::new(1.0, 0.2, 0.0).normalize()]),
            dummy_set(&[Vector3::y()]),
            dummy_set(&[Vector3::z()]),
        ];
        let tuples = angle_filter(&sets, &geom, 1e-6);
        assert_eq!(tuples, vec![vec![0, 0, 0]]);
    }

    #[test]
    fn pass_rate_monotone_in_tolerance() {
        let geom = ArrayGeometry::orthogonal(2, 1.0).unwrap();
        let dirs1 = vec![Vector3::x(), Vector3::new(0.9, 0.1, 0.1).normalize()];
        let dirs2 = vec![
            Vector3::y(),
            Vector3::new(0.3, 0.9, 0.0).normalize(),
            Vector3::new(0.0, 0.7, 0.7).normalize(),
        ];
        let sets = vec![dummy_set(&dirs1), dummy_set(&dirs2)];
        let mut last = 0;
        for deg in [0.5f64, 2.0, 5.0, 15.0, 45.0, 90.0] {
            let n = angle_filter(&sets, &geom, deg.to_radians()).len();
            assert!(n >= last, "pass count decreased at {deg} deg");
            last = n;
        }
        assert_eq!(last, 6);
    }
}
