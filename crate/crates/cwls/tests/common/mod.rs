//! Shared helpers for the integration suites.

use cwls::obs_model::{
    build_design_matrix, ArrayGeometry, Attitude, DdEpoch, DesignMatrix, LosSet,
    GPS_L1_WAVELENGTH,
};
use cwls::simulator::{gen_constellation, sample_attitude, synthesize_epoch, trial_seed};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[allow(dead_code)]
pub struct Instance {
    pub epoch: DdEpoch,
    pub h: DesignMatrix,
    pub geometry: ArrayGeometry,
    pub los: LosSet,
    pub n_true: DMatrix<i64>,
    pub truth: Attitude,
}

/// Deterministic random instance: fresh sky, attitude, and noise.
pub fn gen_instance(
    num_satellites: usize,
    geometry: &ArrayGeometry,
    sigma_phase_m: f64,
    variance_ratio: f64,
    seed: u64,
    trial: usize,
) -> Instance {
    let mut rng = ChaCha12Rng::seed_from_u64(trial_seed(seed, trial));
    let truth = sample_attitude(&mut rng);
    let (los, h) = loop {
        let los = gen_constellation(
            num_satellites,
            10f64.to_radians(),
            GPS_L1_WAVELENGTH,
            &mut rng,
        );
        if let Ok(h) = build_design_matrix(&los) {
            break (los, h);
        }
    };
    let (epoch, n_true) = synthesize_epoch(
        &truth,
        geometry,
        &los,
        &h,
        sigma_phase_m,
        sigma_phase_m * variance_ratio.sqrt(),
        &mut rng,
    )
    .expect("positive weighting sigmas");
    Instance {
        epoch,
        h,
        geometry: geometry.clone(),
        los,
        n_true,
        truth,
    }
}

/// Prints the verdict line and panics on failure so the test harness
/// reports it.
#[allow(dead_code)]
pub fn verdict(name: &str, passed: bool, detail: &str) {
    println!(
        "{} {} — {}",
        if passed { "PASS" } else { "FAIL" },
        name,
        detail
    );
    assert!(passed, "{name}: {detail}");
}
