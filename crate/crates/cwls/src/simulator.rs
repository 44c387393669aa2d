//! Synthetic constellations, epochs with known ground truth, and the Monte
//! Carlo campaign runner.
//!
//! Trials are fully reproducible: every trial derives its own RNG stream
//! from `(campaign seed, trial index)`, so results do not depend on the
//! execution schedule and a campaign can run on any number of threads and
//! produce identical output.

use std::time::Instant;

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::Error;
use crate::obs_model::{
    build_dd_covariance, build_design_matrix, ArrayGeometry, Attitude, DdEpoch, DesignMatrix,
    LosSet, GPS_L1_WAVELENGTH,
};
use crate::reference_solvers::{afm_grid_search, brute_force_cils, oracle_solver, OracleInput};
use crate::solver::{self, SolveReport, SolverParams};
use crate::Result;

/// Minimum pairwise satellite separation enforced by rejection sampling.
const MIN_SAT_SEPARATION: f64 = 2.0 * std::f64::consts::PI / 180.0;

/// One Monte Carlo scenario: a fixed geometry, satellite count, and noise
/// level, repeated over `trials` independent epochs.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Tracked satellites, `S + 1`.
    pub num_satellites: usize,
    pub geometry: ArrayGeometry,
    /// Undifferenced phase noise, meters. Zero means noise-free.
    pub sigma_phase_m: f64,
    /// `sigma_code^2 / sigma_phase^2`.
    pub variance_ratio: f64,
    /// Elevation mask in radians.
    pub elevation_mask: f64,
    pub trials: usize,
    pub seed: u64,
    pub wavelength: f64,
    pub params: SolverParams,
    /// AFM grid step in radians.
    pub afm_step: f64,
    /// Brute-force integer box radius.
    pub cils_box: i64,
    /// Record wall-clock timings (off by default so reports stay
    /// byte-identical across runs).
    pub measure_timing: bool,
}

impl ScenarioConfig {
    pub fn new(num_satellites: usize, geometry: ArrayGeometry, sigma_phase_mm: f64) -> Self {
        Self {
            num_satellites,
            geometry,
            sigma_phase_m: sigma_phase_mm * 1e-3,
            variance_ratio: 1e4,
            elevation_mask: 10f64.to_radians(),
            trials: 10_000,
            seed: 0,
            wavelength: GPS_L1_WAVELENGTH,
            params: SolverParams::default(),
            afm_step: 2f64.to_radians(),
            cils_box: 3,
            measure_timing: false,
        }
    }

    pub fn sigma_code_m(&self) -> f64 {
        self.sigma_phase_m * self.variance_ratio.sqrt()
    }
}

/// Estimation methods the campaign can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The wrapped least-squares solver.
    Cwls,
    /// Ambiguity-function grid search.
    Afm,
    /// Brute-force constrained integer least squares.
    Cils,
    /// Oracle with the true integers.
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cwls => "cwls",
            Method::Afm => "afm",
            Method::Cils => "cils",
            Method::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cwls" | "proposed" | "wrapped" => Ok(Method::Cwls),
            "afm" => Ok(Method::Afm),
            "cils" => Ok(Method::Cils),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Result of one method on one trial.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// The solver produced an estimate at all.
    pub solved: bool,
    /// Every integer ambiguity recovered exactly.
    pub success: bool,
    /// Absolute Euler errors in radians (roll absent for one baseline).
    pub euler_err: [Option<f64>; 3],
    pub wall_ms: Option<f64>,
    /// Mean candidate-pool size per baseline (wrapped solver only).
    pub candidates: Option<f64>,
}

/// Everything recorded about one trial.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub trial_seed: u64,
    pub truth_yaw: f64,
    pub truth_pitch: f64,
    pub truth_roll: f64,
    pub outcomes: Vec<MethodOutcome>,
}

/// Aggregate of one method over a campaign.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub trials: usize,
    pub successes: usize,
    pub success_rate_pct: f64,
    /// RMSE over success cases only, degrees; absent when no successes (or
    /// roll for single-baseline runs).
    pub rmse_yaw_deg: Option<f64>,
    pub rmse_pitch_deg: Option<f64>,
    pub rmse_roll_deg: Option<f64>,
    pub mean_wall_ms: Option<f64>,
    pub mean_candidates: Option<f64>,
}

/// Campaign output: per-method aggregates plus the raw per-trial records.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub summaries: Vec<MethodSummary>,
    pub records: Vec<TrialRecord>,
}

// ── Constellation and epoch synthesis ───────────────────────────────────────

/// Draws a constellation of unit line-of-sight vectors above the elevation
/// mask, area-uniform on the spherical cap, with a minimum pairwise
/// separation enforced by rejection (relaxed if 1000 retries fail).
pub fn gen_constellation(
    num_satellites: usize,
    mask: f64,
    wavelength: f64,
    rng: &mut impl Rng,
) -> LosSet {
    let mut min_sep = MIN_SAT_SEPARATION;
    let mut tries = 0usize;
    let mut dirs: Vec<Vector3<f64>> = Vec::with_capacity(num_satellites);
    while dirs.len() < num_satellites {
        let az = rng.random_range(0.0..std::f64::consts::TAU);
        let sin_el = rng.random_range(mask.sin()..1.0);
        let cos_el = (1.0 - sin_el * sin_el).max(0.0).sqrt();
        let v = Vector3::new(cos_el * az.sin(), cos_el * az.cos(), sin_el);
        let ok = dirs.iter().all(|u| {
            u.cross(&v).norm().atan2(u.dot(&v)) > min_sep
        });
        if ok {
            dirs.push(v);
        } else {
            tries += 1;
            if tries > 1000 {
                tries = 0;
                min_sep = (min_sep * 0.5).max(1e-5);
            }
        }
    }
    LosSet::new(dirs, wavelength).expect("separation enforced by construction")
}

/// Uniform random attitude. Pitch stays a hair inside (-pi/2, pi/2) so the
/// Euler decomposition of the estimate remains well conditioned.
pub fn sample_attitude(rng: &mut impl Rng) -> Attitude {
    let pitch_lim = std::f64::consts::FRAC_PI_2 - 2e-3;
    Attitude::new(
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        rng.random_range(-pitch_lim..pitch_lim),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// Synthesizes one double-difference epoch with known truth.
///
/// Noise is drawn per undifferenced antenna-satellite pair and propagated
/// through the differencing operators, so its covariance is exactly the
/// matrix reported in the epoch. True integers are uniform in [-100, 100].
pub fn synthesize_epoch(
    attitude: &Attitude,
    geometry: &ArrayGeometry,
    los: &LosSet,
    h: &DesignMatrix,
    sigma_phase_m: f64,
    sigma_code_m: f64,
    rng: &mut impl Rng,
) -> Result<(DdEpoch, DMatrix<i64>)> {
    let s = los.num_dd_rows();
    let a = geometry.num_baselines();
    let lambda = los.wavelength();
    let rot = attitude.rotation_matrix();
    let model = h.matrix() * rot * geometry.embedded();

    let n_true = DMatrix::from_fn(s, a, |_, _| rng.random_range(-100..=100));

    let dd_noise = |sigma: f64, rng: &mut dyn rand::RngCore| -> DMatrix<f64> {
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        // Undifferenced errors: antennas 0..=A by satellites 0..=S.
        let undiff: Vec<Vec<f64>> = (0..=a)
            .map(|_| (0..=s).map(|_| normal.sample(rng)).collect())
            .collect();
        DMatrix::from_fn(s, a, |row, col| {
            let (ant, sat) = (col + 1, row + 1);
            (undiff[ant][sat] - undiff[0][sat] - undiff[ant][0] + undiff[0][0]) / lambda
        })
    };

    let eta = dd_noise(sigma_phase_m, rng);
    let eps = dd_noise(sigma_code_m, rng);
    let phase = &model + n_true.map(|n| n as f64) + eta;
    let code = &model + eps;

    // Weighting uses a 1 mm nominal when the configured noise is zero;
    // residuals are exactly zero then, so the weights only need to exist.
    let sigma_phase_w = if sigma_phase_m > 0.0 { sigma_phase_m } else { 1e-3 };
    let sigma_code_w = if sigma_code_m > 0.0 {
        sigma_code_m
    } else {
        sigma_phase_w * 100.0
    };
    let (q_phase, q_code) = build_dd_covariance(sigma_phase_w, sigma_code_w, s, a, lambda)?;
    let epoch = DdEpoch::new(phase, code, q_phase, q_code)?;
    Ok((epoch, n_true))
}

// ── Campaign ────────────────────────────────────────────────────────────────

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial RNG seed derived from the campaign seed and the trial index.
pub fn trial_seed(campaign_seed: u64, trial: usize) -> u64 {
    splitmix64(campaign_seed ^ splitmix64(trial as u64 + 1))
}

fn euler_errors(truth: &Attitude, est: &Attitude, single_baseline: bool) -> [Option<f64>; 3] {
    let d = |x: f64, y: f64| Some(crate::obs_model::wrap_angle(x - y).abs());
    [
        d(est.yaw, truth.yaw),
        d(est.pitch, truth.pitch),
        if single_baseline {
            None
        } else {
            d(est.roll, truth.roll)
        },
    ]
}

/// Runs one trial: fresh constellation, fresh attitude, fresh noise, then
/// every requested method on the identical epoch.
pub fn run_trial(cfg: &ScenarioConfig, methods: &[Method], trial: usize) -> TrialRecord {
    let seed = trial_seed(cfg.seed, trial);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let truth = sample_attitude(&mut rng);
    let single = cfg.geometry.num_baselines() == 1;

    // Redraw the constellation until the design matrix is usable.
    let (los, h) = loop {
        let los = gen_constellation(
            cfg.num_satellites,
            cfg.elevation_mask,
            cfg.wavelength,
            &mut rng,
        );
        match build_design_matrix(&los) {
            Ok(h) => break (los, h),
            Err(_) => continue,
        }
    };
    let (epoch, n_true) = synthesize_epoch(
        &truth,
        &cfg.geometry,
        &los,
        &h,
        cfg.sigma_phase_m,
        cfg.sigma_code_m(),
        &mut rng,
    )
    .expect("synthesis cannot fail with positive weighting sigmas");

    let mut outcomes = Vec::with_capacity(methods.len());
    for &method in methods {
        let t0 = Instant::now();
        let run: Result<(Attitude, DMatrix<i64>, Option<f64>)> = match method {
            Method::Cwls => solver::solve(&epoch, &h, &cfg.geometry, &cfg.params).map(
                |report: SolveReport| {
                    let pools = &report.diagnostics.pool_sizes;
                    let mean_pool =
                        pools.iter().sum::<usize>() as f64 / pools.len().max(1) as f64;
                    (report.attitude, report.ambiguities, Some(mean_pool))
                },
            ),
            Method::Afm => afm_grid_search(&epoch, &h, &cfg.geometry, cfg.afm_step, &cfg.params)
                .map(|res| {
                    let att = attitude_of(&res.rotation, single);
                    (att, res.ambiguities, None)
                }),
            Method::Cils => brute_force_cils(
                &epoch,
                &h,
                &cfg.geometry,
                cfg.params.q_mode,
                cfg.params.obs_mode,
                cfg.cils_box,
            )
            .map(|res| {
                let att = attitude_of(&res.rotation, single);
                (att, res.ambiguities, None)
            }),
            Method::Oracle => OracleInput::new(&epoch, &h, &cfg.geometry, &n_true)
                .and_then(|input| oracle_solver(&input, cfg.params.q_mode, cfg.params.obs_mode))
                .map(|est| {
                    let att = attitude_of(&est.rotation, single);
                    let n_hat = solver::ambiguity_from_rotation(
                        &est.rotation,
                        &epoch.phase,
                        &h,
                        &cfg.geometry,
                    );
                    (att, n_hat, None)
                }),
        };
        let wall_ms = cfg
            .measure_timing
            .then(|| t0.elapsed().as_secs_f64() * 1e3);
        let outcome = match run {
            Ok((att, n_hat, candidates)) => MethodOutcome {
                method,
                solved: true,
                success: n_hat == n_true,
                euler_err: euler_errors(&truth, &att, single),
                wall_ms,
                candidates,
            },
            Err(_) => MethodOutcome {
                method,
                solved: false,
                success: false,
                euler_err: [None, None, None],
                wall_ms,
                candidates: None,
            },
        };
        outcomes.push(outcome);
    }

    TrialRecord {
        trial,
        trial_seed: seed,
        truth_yaw: truth.yaw,
        truth_pitch: truth.pitch,
        truth_roll: truth.roll,
        outcomes,
    }
}

fn attitude_of(rotation: &nalgebra::Matrix3<f64>, single_baseline: bool) -> Attitude {
    if single_baseline {
        let r = rotation.column(0).into_owned();
        let (yaw, pitch) = crate::obs_model::angles_from_direction(&r);
        Attitude::new(yaw, pitch, 0.0)
    } else {
        crate::obs_model::rotation_to_euler(rotation)
    }
}

/// Thread pool sized by the `CWLS_THREADS` environment variable
/// (0 or unset = automatic).
pub fn campaign_pool() -> rayon::ThreadPool {
    let threads = std::env::var("CWLS_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Runs all trials of one scenario and aggregates per-method statistics.
///
/// Per-trial solver errors count as failures; the campaign itself never
/// aborts. Identical `(config, seed)` produce identical results on any
/// thread count.
pub fn run_campaign(cfg: &ScenarioConfig, methods: &[Method]) -> CampaignResult {
    let pool = campaign_pool();
    let records: Vec<TrialRecord> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, methods, t))
            .collect()
    });
    let summaries = summarize(&records, methods, cfg.measure_timing);
    CampaignResult { summaries, records }
}

/// Sequential, order-stable aggregation of trial records.
pub fn summarize(
    records: &[TrialRecord],
    methods: &[Method],
    timing: bool,
) -> Vec<MethodSummary> {
    methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let mut successes = 0usize;
            let mut sq = [0.0f64; 3];
            let mut n_err = [0usize; 3];
            let mut wall = 0.0f64;
            let mut cand_sum = 0.0f64;
            let mut cand_n = 0usize;
            for rec in records {
                let o = &rec.outcomes[mi];
                debug_assert_eq!(o.method, method);
                if o.success {
                    successes += 1;
                    for k in 0..3 {
                        if let Some(e) = o.euler_err[k] {
                            sq[k] += e * e;
                            n_err[k] += 1;
                        }
                    }
                }
                if let Some(w) = o.wall_ms {
                    wall += w;
                }
                if let Some(c) = o.candidates {
                    cand_sum += c;
                    cand_n += 1;
                }
            }
            let rmse = |k: usize| {
                (n_err[k] > 0)
                    .then(|| (sq[k] / n_err[k] as f64).sqrt().to_degrees())
            };
            MethodSummary {
                method,
                trials: records.len(),
                successes,
                success_rate_pct: if records.is_empty() {
                    0.0
                } else {
                    100.0 * successes as f64 / records.len() as f64
                },
                rmse_yaw_deg: rmse(0),
                rmse_pitch_deg: rmse(1),
                rmse_roll_deg: rmse(2),
                mean_wall_ms: (timing && !records.is_empty())
                    .then(|| wall / records.len() as f64),
                mean_candidates: (cand_n > 0).then(|| cand_sum / cand_n as f64),
            }
        })
        .collect()
}
