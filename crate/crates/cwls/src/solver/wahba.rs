//! Coarse rotation assembly from per-baseline direction estimates and the
//! closed-form SVD orthogonalization.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::Error;
use crate::obs_model::ArrayGeometry;
use crate::Result;

/// Builds the coarse (generally non-orthogonal) rotation estimate from one
/// direction candidate per baseline.
///
/// With two baselines the system is rank deficient in 3-D, so a third
/// synthetic column is appended to both sides: the normalized cross product
/// of the two directions and of the two body-frame baselines. The coarse
/// estimate is then the least-squares fit `X * Xb^T (Xb Xb^T)^-1`.
pub fn assemble_coarse_rotation(
    directions: &[Vector3<f64>],
    geometry: &ArrayGeometry,
) -> Result<Matrix3<f64>> {
    let a = geometry.num_baselines();
    if directions.len() != a || a < 2 {
        return Err(Error::invalid(
            "assembly needs one direction per baseline and at least two baselines",
        ));
    }
    let augment = a == 2;
    let cols = if augment { 3 } else { a };
    let mut x_ref = DMatrix::zeros(3, cols);
    let mut x_body = DMatrix::zeros(3, cols);
    for j in 0..a {
        let d = geometry.baseline_length(j);
        x_ref.set_column(j, &(directions[j] * d));
        x_body.set_column(j, &geometry.baseline_vector(j));
    }
    if augment {
        let cr = directions[0].cross(&directions[1]);
        let cb = geometry
            .baseline_vector(0)
            .cross(&geometry.baseline_vector(1));
        if cr.norm() < 1e-12 || cb.norm() < 1e-12 {
            return Err(Error::SingularGram);
        }
        x_ref.set_column(2, &(cr / cr.norm()));
        x_body.set_column(2, &(cb / cb.norm()));
    }
    let gram = &x_body * x_body.transpose();
    let gram3 = Matrix3::from_iterator(gram.iter().copied());
    let inv = gram3.try_inverse().ok_or(Error::SingularGram)?;
    let prod = &x_ref * x_body.transpose();
    let prod3 = Matrix3::from_iterator(prod.iter().copied());
    Ok(prod3 * inv)
}

/// Nearest rotation to an arbitrary 3x3 matrix.
///
/// `R = U diag(1, 1, det(U) det(V)) V^T` from the SVD of the input; the
/// determinant correction keeps the result in SO(3). The boolean flags rank
/// deficiency (two vanishing singular values), where the minimizer is not
/// unique; the SVD-based representative is still returned.
pub fn wahba_orthogonalize(coarse: &Matrix3<f64>) -> (Matrix3<f64>, bool) {
    let svd = coarse.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let sv = svd.singular_values;
    let det_sign = u.determinant().signum() * v_t.determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det_sign));
    let rank_deficient = sv[1] <= 1e-12 * sv[0].max(1e-300);
    (u * fix * v_t, rank_deficient)
}
