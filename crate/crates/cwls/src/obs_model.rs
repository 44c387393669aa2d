//! Double-difference observation model shared by the solvers and the
//! simulator.
//!
//! Conventions used throughout the crate:
//!
//! - Satellite 0 is the reference satellite, antenna 0 the reference
//!   antenna. A platform tracking `S+1` satellites with `A+1` antennas
//!   yields `S` double-difference rows per baseline and `A` baselines.
//! - All phase quantities are stored in cycles. Pseudo-ranges are converted
//!   to cycles on ingestion (divide by the wavelength), so one design matrix
//!   serves both observation types.
//! - The rotation is kept as a full 3x3 matrix. For `q = min(3, A) < 3`
//!   only its first `q` columns enter the model; the body-frame baseline
//!   matrix is zero-padded to 3 rows so that `R * Xb` is well formed for
//!   every `q`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::Error;
use crate::Result;

/// GPS L1 carrier wavelength in meters (c / 1575.42 MHz).
pub const GPS_L1_WAVELENGTH: f64 = 299_792_458.0 / 1_575_420_000.0;

/// Minimum pairwise angle between line-of-sight vectors (radians).
const MIN_LOS_ANGLE: f64 = 1e-6;

/// Smallest acceptable singular value of the design matrix.
const MIN_DESIGN_SINGULAR_VALUE: f64 = 1e-9;

// ── Line-of-sight set ───────────────────────────────────────────────────────

/// Unit line-of-sight vectors from the receiver to each tracked satellite.
///
/// Index 0 is the reference satellite used for double differencing.
#[derive(Debug, Clone)]
pub struct LosSet {
    los: Vec<Vector3<f64>>,
    wavelength: f64,
}

impl LosSet {
    /// Validates unit norms, pairwise separation, and the satellite count.
    pub fn new(los: Vec<Vector3<f64>>, wavelength: f64) -> Result<Self> {
        if los.len() < 2 {
            return Err(Error::invalid("need at least 2 satellites"));
        }
        if !(wavelength > 0.0) {
            return Err(Error::invalid("wavelength must be positive"));
        }
        for (i, h) in los.iter().enumerate() {
            if (h.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "line-of-sight vector {i} is not unit norm (|1 - norm| = {:.3e})",
                    (h.norm() - 1.0).abs()
                )));
            }
        }
        for i in 0..los.len() {
            for j in i + 1..los.len() {
                let angle = los[i].cross(&los[j]).norm().atan2(los[i].dot(&los[j]));
                if angle <= MIN_LOS_ANGLE {
                    return Err(Error::invalid(format!(
                        "line-of-sight vectors {i} and {j} coincide (angle {angle:.3e} rad)"
                    )));
                }
            }
        }
        Ok(Self { los, wavelength })
    }

    /// Builds the set from raw (not necessarily unit) direction vectors.
    pub fn from_directions(dirs: Vec<Vector3<f64>>, wavelength: f64) -> Result<Self> {
        let mut los = Vec::with_capacity(dirs.len());
        for (i, d) in dirs.into_iter().enumerate() {
            let n = d.norm();
            if !(n > 0.0) {
                return Err(Error::invalid(format!("direction {i} has zero norm")));
            }
            los.push(d / n);
        }
        Self::new(los, wavelength)
    }

    /// Number of tracked satellites, `S + 1`.
    pub fn num_satellites(&self) -> usize {
        self.los.len()
    }

    /// Number of double-difference rows, `S`.
    pub fn num_dd_rows(&self) -> usize {
        self.los.len() - 1
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn vectors(&self) -> &[Vector3<f64>] {
        &self.los
    }
}

// ── Design matrix ───────────────────────────────────────────────────────────

/// The `S x 3` double-difference design matrix in cycles per meter.
///
/// Row `s` is `(h^s - h^0)^T / lambda`; row norms are cached because the
/// candidate search uses them repeatedly.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    h: DMatrix<f64>,
    row_norms: Vec<f64>,
    sigma_min: f64,
}

/// Builds the design matrix from a line-of-sight set.
///
/// Fails with [`Error::DegenerateGeometry`] when the matrix does not have
/// full column rank, which makes the geometry unusable for 3-D solving.
pub fn build_design_matrix(los: &LosSet) -> Result<DesignMatrix> {
    let s = los.num_dd_rows();
    let lambda = los.wavelength();
    let h0 = los.vectors()[0];
    let mut h = DMatrix::zeros(s, 3);
    let mut row_norms = Vec::with_capacity(s);
    for (i, hs) in los.vectors()[1..].iter().enumerate() {
        let row = (hs - h0) / lambda;
        h.set_row(i, &row.transpose());
        row_norms.push(row.norm());
    }
    let sigma_min = if s >= 3 {
        h.clone().svd(false, false).singular_values.min()
    } else {
        0.0
    };
    if s >= 3 && sigma_min <= MIN_DESIGN_SINGULAR_VALUE {
        return Err(Error::DegenerateGeometry { sigma_min });
    }
    Ok(DesignMatrix {
        h,
        row_norms,
        sigma_min,
    })
}

impl DesignMatrix {
    /// Builds directly from an `S x 3` matrix (for file ingestion).
    pub fn from_matrix(h: DMatrix<f64>) -> Result<Self> {
        if h.ncols() != 3 || h.nrows() < 1 {
            return Err(Error::invalid("design matrix must be S x 3 with S >= 1"));
        }
        let row_norms = (0..h.nrows()).map(|i| h.row(i).norm()).collect();
        let sigma_min = if h.nrows() >= 3 {
            h.clone().svd(false, false).singular_values.min()
        } else {
            0.0
        };
        Ok(Self {
            h,
            row_norms,
            sigma_min,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn num_rows(&self) -> usize {
        self.h.nrows()
    }

    /// Cached norm of row `s` (0-based).
    pub fn row_norm(&self, s: usize) -> f64 {
        self.row_norms[s]
    }

    /// Row `s` as a 3-vector.
    pub fn row_vector(&self, s: usize) -> Vector3<f64> {
        Vector3::new(self.h[(s, 0)], self.h[(s, 1)], self.h[(s, 2)])
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }
}

// ── Array geometry ──────────────────────────────────────────────────────────

/// Body-frame baseline matrix `Xb` (`q x A`, meters) with cached lengths
/// and inter-baseline angles.
///
/// The canonical body frame puts baseline 1 on the x axis and baseline 2 in
/// the x-y plane, so entries below the diagonal are exactly zero.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    xb: DMatrix<f64>,
    lengths: Vec<f64>,
    angles: DMatrix<f64>,
}

impl ArrayGeometry {
    pub fn new(xb: DMatrix<f64>) -> Result<Self> {
        let q = xb.nrows();
        let a = xb.ncols();
        if a == 0 || q != 3.min(a) {
            return Err(Error::invalid(format!(
                "body-frame matrix must be min(3, A) x A, got {q} x {a}"
            )));
        }
        for i in 0..q {
            for j in 0..a.min(q) {
                if i > j && xb[(i, j)] != 0.0 {
                    return Err(Error::invalid(
                        "body-frame matrix must be upper triangular in its leading block",
                    ));
                }
            }
        }
        if a == 1 && xb[(0, 0)] <= 0.0 {
            return Err(Error::invalid("single-baseline length must be positive"));
        }
        let lengths: Vec<f64> = (0..a).map(|j| xb.column(j).norm()).collect();
        if lengths.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::invalid("all baseline lengths must be positive"));
        }
        let mut angles = DMatrix::zeros(a, a);
        for i in 0..a {
            for j in 0..a {
                if i != j {
                    let c = xb.column(i).dot(&xb.column(j)) / (lengths[i] * lengths[j]);
                    angles[(i, j)] = c.clamp(-1.0, 1.0).acos();
                    if i < j && angles[(i, j)] < 1e-9 {
                        return Err(Error::invalid(format!(
                            "baselines {i} and {j} are collinear"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            xb,
            lengths,
            angles,
        })
    }

    /// A single baseline of length `d` meters along the body x axis.
    pub fn single(d: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, d))
    }

    /// `A` mutually perpendicular baselines of length `d` (A in 1..=3).
    pub fn orthogonal(a: usize, d: f64) -> Result<Self> {
        if !(1..=3).contains(&a) {
            return Err(Error::invalid("orthogonal preset needs A in 1..=3"));
        }
        Self::new(DMatrix::identity(a.min(3), a) * d)
    }

    pub fn num_baselines(&self) -> usize {
        self.xb.ncols()
    }

    /// `q = min(3, A)`, the column dimension of the rotation.
    pub fn q(&self) -> usize {
        self.xb.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.xb
    }

    /// The body-frame matrix zero-padded to 3 rows, so `R * xb_embedded()`
    /// is valid with a full 3x3 rotation.
    pub fn embedded(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(3, self.num_baselines());
        for j in 0..self.num_baselines() {
            for i in 0..self.q() {
                out[(i, j)] = self.xb[(i, j)];
            }
        }
        out
    }

    /// Baseline `a` embedded in 3-space.
    pub fn baseline_vector(&self, a: usize) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        for i in 0..self.q() {
            v[i] = self.xb[(i, a)];
        }
        v
    }

    /// Length of baseline `a` in meters.
    pub fn baseline_length(&self, a: usize) -> f64 {
        self.lengths[a]
    }

    /// Angle between baselines `a` and `k` in radians.
    pub fn inter_baseline_angle(&self, a: usize, k: usize) -> f64 {
        self.angles[(a, k)]
    }
}

// ── Epoch ───────────────────────────────────────────────────────────────────

/// One epoch of double-difference observations.
///
/// `phase` and `code` are `S x A` in cycles; the covariances are
/// `(A*S) x (A*S)` over the column-stacked vectorization. Phase and code are
/// uncorrelated, so the joint covariance is block diagonal.
#[derive(Debug, Clone)]
pub struct DdEpoch {
    pub phase: DMatrix<f64>,
    pub code: DMatrix<f64>,
    pub q_phase: DMatrix<f64>,
    pub q_code: DMatrix<f64>,
}

impl DdEpoch {
    pub fn new(
        phase: DMatrix<f64>,
        code: DMatrix<f64>,
        q_phase: DMatrix<f64>,
        q_code: DMatrix<f64>,
    ) -> Result<Self> {
        let (s, a) = phase.shape();
        if code.shape() != (s, a) {
            return Err(Error::invalid("phase and code dimensions differ"));
        }
        let n = s * a;
        if q_phase.shape() != (n, n) || q_code.shape() != (n, n) {
            return Err(Error::invalid("covariance dimensions do not match A*S"));
        }
        if q_phase.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite { context: "Q_phase" });
        }
        if q_code.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite { context: "Q_code" });
        }
        Ok(Self {
            phase,
            code,
            q_phase,
            q_code,
        })
    }

    pub fn num_dd_rows(&self) -> usize {
        self.phase.nrows()
    }

    pub fn num_baselines(&self) -> usize {
        self.phase.ncols()
    }

    /// Phase column for baseline `a`.
    pub fn phase_column(&self, a: usize) -> DVector<f64> {
        self.phase.column(a).into_owned()
    }

    /// Code column for baseline `a`.
    pub fn code_column(&self, a: usize) -> DVector<f64> {
        self.code.column(a).into_owned()
    }

    /// The `S x S` diagonal block of `Q_phase` for baseline `a`.
    pub fn q_phase_block(&self, a: usize) -> DMatrix<f64> {
        let s = self.num_dd_rows();
        self.q_phase.view((a * s, a * s), (s, s)).into_owned()
    }

    /// The `S x S` diagonal block of `Q_code` for baseline `a`.
    pub fn q_code_block(&self, a: usize) -> DMatrix<f64> {
        let s = self.num_dd_rows();
        self.q_code.view((a * s, a * s), (s, s)).into_owned()
    }
}

/// Builds the double-difference covariance pair `(Q_phase, Q_code)` in
/// cycles^2 by propagating iid undifferenced Gaussian noise (standard
/// deviation `sigma` meters per antenna-satellite pair) through the single-
/// and double-difference operators.
///
/// The result has Kronecker structure `(sigma/lambda)^2 * (I_A + 1 1^T) (x)
/// (I_S + 1 1^T)`: within a baseline the common reference satellite couples
/// rows (block `2 sigma^2 (I + 1 1^T)`), and across baselines the common
/// reference antenna couples blocks with half that weight.
pub fn build_dd_covariance(
    sigma_phase_m: f64,
    sigma_code_m: f64,
    num_dd_rows: usize,
    num_baselines: usize,
    wavelength: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(sigma_phase_m > 0.0) || !(sigma_code_m > 0.0) {
        return Err(Error::invalid("noise standard deviations must be positive"));
    }
    if !(wavelength > 0.0) {
        return Err(Error::invalid("wavelength must be positive"));
    }
    let build = |sigma_m: f64| {
        let unit = sigma_m / wavelength;
        let var = unit * unit;
        let n = num_dd_rows * num_baselines;
        DMatrix::from_fn(n, n, |r, c| {
            let (ba, sa) = (r / num_dd_rows, r % num_dd_rows);
            let (bk, sk) = (c / num_dd_rows, c % num_dd_rows);
            let ant = if ba == bk { 2.0 } else { 1.0 };
            let sat = if sa == sk { 2.0 } else { 1.0 };
            var * ant * sat
        })
    };
    Ok((build(sigma_phase_m), build(sigma_code_m)))
}

// ── Attitude ────────────────────────────────────────────────────────────────

/// Yaw-pitch-roll Euler angles in radians, each wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attitude {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Set when the source rotation was within 1e-7 of pitch = +-pi/2, where
    /// yaw and roll are not separable; roll is then 0 by convention.
    pub gimbal_lock: bool,
}

impl Attitude {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            yaw: wrap_angle(yaw),
            pitch: wrap_angle(pitch),
            roll: wrap_angle(roll),
            gimbal_lock: false,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        euler_to_rotation(self.yaw, self.pitch, self.roll)
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x % two_pi;
    if y <= -std::f64::consts::PI {
        y += two_pi;
    } else if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// The yaw-pitch-roll rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
///
/// For `q < 3` only the first `q` columns enter the observation model; the
/// full matrix is returned so callers can slice as needed.
pub fn euler_to_rotation(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let (sa, ca) = yaw.sin_cos();
    let (sb, cb) = pitch.sin_cos();
    let (sg, cg) = roll.sin_cos();
    Matrix3::new(
        ca * cb,
        ca * sb * sg - sa * cg,
        ca * sb * cg + sa * sg,
        sa * cb,
        sa * sb * sg + ca * cg,
        sa * sb * cg - ca * sg,
        -sb,
        cb * sg,
        cb * cg,
    )
}

/// Partial derivatives of [`euler_to_rotation`] with respect to yaw, pitch,
/// and roll, used by the Gauss-Newton refinement.
pub fn euler_rotation_partials(yaw: f64, pitch: f64, roll: f64) -> [Matrix3<f64>; 3] {
    let (sa, ca) = yaw.sin_cos();
    let (sb, cb) = pitch.sin_cos();
    let (sg, cg) = roll.sin_cos();
    let d_yaw = Matrix3::new(
        -sa * cb,
        -sa * sb * sg - ca * cg,
        -sa * sb * cg + ca * sg,
        ca * cb,
        ca * sb * sg - sa * cg,
        ca * sb * cg + sa * sg,
        0.0,
        0.0,
        0.0,
    );
    let d_pitch = Matrix3::new(
        -ca * sb,
        ca * cb * sg,
        ca * cb * cg,
        -sa * sb,
        sa * cb * sg,
        sa * cb * cg,
        -cb,
        -sb * sg,
        -sb * cg,
    );
    let d_roll = Matrix3::new(
        0.0,
        ca * sb * cg + sa * sg,
        -ca * sb * sg + sa * cg,
        0.0,
        sa * sb * cg - ca * sg,
        -sa * sb * sg - ca * cg,
        0.0,
        cb * cg,
        -cb * sg,
    );
    [d_yaw, d_pitch, d_roll]
}

/// Recovers Euler angles from a rotation matrix.
///
/// Near pitch = +-pi/2 the decomposition is singular; the result carries the
/// `gimbal_lock` flag, roll is fixed at 0, and yaw absorbs the remaining
/// in-plane rotation.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> Attitude {
    let sb = -r[(2, 0)];
    let cb = (r[(2, 1)].powi(2) + r[(2, 2)].powi(2)).sqrt();
    if cb < 1e-7 {
        let pitch = if sb >= 0.0 {
            std::f64::consts::FRAC_PI_2
        } else {
            -std::f64::consts::FRAC_PI_2
        };
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        return Attitude {
            yaw,
            pitch,
            roll: 0.0,
            gimbal_lock: true,
        };
    }
    Attitude {
        yaw: r[(1, 0)].atan2(r[(0, 0)]),
        pitch: sb.clamp(-1.0, 1.0).asin(),
        roll: r[(2, 1)].atan2(r[(2, 2)]),
        gimbal_lock: false,
    }
}

/// Direction vector of a single baseline for the given yaw and pitch: the
/// first column of the rotation matrix (roll does not affect it).
pub fn direction_from_angles(yaw: f64, pitch: f64) -> Vector3<f64> {
    let (sa, ca) = yaw.sin_cos();
    let (sb, cb) = pitch.sin_cos();
    Vector3::new(ca * cb, sa * cb, -sb)
}

/// Inverse of [`direction_from_angles`]; pitch lands in `[-pi/2, pi/2]`.
pub fn angles_from_direction(r: &Vector3<f64>) -> (f64, f64) {
    let cb = (r.x * r.x + r.y * r.y).sqrt();
    if cb < 1e-300 {
        return (0.0, if r.z <= 0.0 { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 });
    }
    (r.y.atan2(r.x), (-r.z).clamp(-1.0, 1.0).asin())
}
