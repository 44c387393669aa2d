//! Grid campaign driver and report output (JSON and plot-ready CSV).

use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::io::config::CampaignConfig;
use crate::obs_model::{ArrayGeometry, GPS_L1_WAVELENGTH};
use crate::simulator::{run_campaign, MethodSummary, ScenarioConfig, TrialRecord};
use crate::solver::{QMode, SolverParams};
use crate::Result;

/// One grid cell: a (baseline count, satellite count, noise level) triple.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CellReport {
    pub baselines: usize,
    /// Tracked satellites (S+1).
    pub sats: usize,
    /// Double-difference rows per baseline (S).
    pub dd_rows: usize,
    pub sigma_phase_mm: f64,
    pub methods: Vec<MethodSummary>,
    /// Per-trial records, present only with `verbose_records`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<TrialRecord>>,
}

/// Full campaign report serialized to `report.json`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub cells: Vec<CellReport>,
}

/// Report plus the raw records needed for the CSV writers.
#[derive(Debug, Clone)]
pub struct GridOutput {
    pub report: CampaignReport,
    /// Aligned with `report.cells`.
    pub cell_records: Vec<Vec<TrialRecord>>,
}

/// Builds the scenario for one grid cell.
pub fn scenario_for_cell(
    cfg: &CampaignConfig,
    baselines: usize,
    sats: usize,
    sigma_phase_mm: f64,
) -> Result<ScenarioConfig> {
    let geometry = if baselines == 1 {
        ArrayGeometry::single(cfg.baseline_length_m)?
    } else {
        ArrayGeometry::orthogonal(baselines, cfg.baseline_length_m)?
    };
    let params = SolverParams {
        keep_best: cfg.keep_best,
        angle_tol: cfg.delta_theta_deg.map(f64::to_radians),
        q_mode: if cfg.diagonal_q {
            QMode::Diagonal
        } else {
            QMode::Full
        },
        ..SolverParams::default()
    };
    Ok(ScenarioConfig {
        num_satellites: sats,
        geometry,
        sigma_phase_m: sigma_phase_mm * 1e-3,
        variance_ratio: cfg.variance_ratio,
        elevation_mask: cfg.elevation_mask_deg.to_radians(),
        trials: cfg.trials,
        seed: cfg.seed,
        wavelength: GPS_L1_WAVELENGTH,
        params,
        afm_step: cfg.afm_step_deg.to_radians(),
        cils_box: cfg.cils_box,
        measure_timing: cfg.timing,
    })
}

/// Runs the whole grid. Cells execute sequentially (trials inside each cell
/// run in parallel), so memory stays bounded and progress is observable.
pub fn run_grid(cfg: &CampaignConfig, mut progress: impl FnMut(&CellReport)) -> Result<GridOutput> {
    let mut cells = Vec::new();
    let mut cell_records = Vec::new();
    for &baselines in &cfg.baselines {
        for &sats in &cfg.sats {
            for &sigma in &cfg.sigma_phase_mm {
                let scenario = scenario_for_cell(cfg, baselines, sats, sigma)?;
                let result = run_campaign(&scenario, &cfg.methods);
                let cell = CellReport {
                    baselines,
                    sats,
                    dd_rows: sats - 1,
                    sigma_phase_mm: sigma,
                    methods: result.summaries,
                    records: cfg.verbose_records.then(|| result.records.clone()),
                };
                progress(&cell);
                cells.push(cell);
                cell_records.push(result.records);
            }
        }
    }
    Ok(GridOutput {
        report: CampaignReport {
            config: cfg.clone(),
            cells,
        },
        cell_records,
    })
}

fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::invalid(format!(
            "refusing to overwrite {} (use --force)",
            path.display()
        )));
    }
    Ok(())
}

/// Writes `report.json`, one `success_rate_b<A>.csv` per baseline count
/// (rows: satellite count and method; columns: noise levels), and
/// `error_cdf.csv` with sorted per-angle success-case errors.
pub fn write_outputs(out: &GridOutput, dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let cfg = &out.report.config;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    check_writable(&json_path, force)?;
    let mut json = serde_json::to_string_pretty(&out.report)
        .map_err(|e| Error::invalid(format!("json serialization failed: {e}")))?;
    json.push('\n');

    let mut csv_paths = Vec::new();
    let mut csv_bodies = Vec::new();
    for &baselines in &cfg.baselines {
        let path = dir.join(format!("success_rate_b{baselines}.csv"));
        check_writable(&path, force)?;
        let mut body = String::from("sats,method");
        for sigma in &cfg.sigma_phase_mm {
            body.push_str(&format!(",{sigma}mm"));
        }
        body.push('\n');
        for &sats in &cfg.sats {
            for method in &cfg.methods {
                body.push_str(&format!("{sats},{}", method.name()));
                for &sigma in &cfg.sigma_phase_mm {
                    let rate = out
                        .report
                        .cells
                        .iter()
                        .find(|c| {
                            c.baselines == baselines
                                && c.sats == sats
                                && c.sigma_phase_mm == sigma
                        })
                        .and_then(|c| {
                            c.methods
                                .iter()
                                .find(|m| m.method == *method)
                                .map(|m| m.success_rate_pct)
                        })
                        .unwrap_or(0.0);
                    body.push_str(&format!(",{rate:.4}"));
                }
                body.push('\n');
            }
        }
        csv_paths.push(path);
        csv_bodies.push(body);
    }

    let cdf_path = dir.join("error_cdf.csv");
    check_writable(&cdf_path, force)?;
    let mut cdf = String::from("baselines,sats,sigma_phase_mm,method,angle,rank,abs_error_deg\n");
    const ANGLES: [&str; 3] = ["yaw", "pitch", "roll"];
    for (cell, records) in out.report.cells.iter().zip(&out.cell_records) {
        for (mi, method) in cfg.methods.iter().enumerate() {
            for (k, angle) in ANGLES.iter().enumerate() {
                let mut errs: Vec<f64> = records
                    .iter()
                    .filter(|r| r.outcomes[mi].success)
                    .filter_map(|r| r.outcomes[mi].euler_err[k])
                    .map(|e| e.to_degrees())
                    .collect();
                errs.sort_by(f64::total_cmp);
                for (rank, e) in errs.iter().enumerate() {
                    cdf.push_str(&format!(
                        "{},{},{},{},{},{},{:.9e}\n",
                        cell.baselines,
                        cell.sats,
                        cell.sigma_phase_mm,
                        method.name(),
                        angle,
                        rank + 1,
                        e
                    ));
                }
            }
        }
    }

    std::fs::write(&json_path, json)?;
    written.push(json_path);
    for (path, body) in csv_paths.into_iter().zip(csv_bodies) {
        std::fs::write(&path, body)?;
        written.push(path);
    }
    std::fs::write(&cdf_path, cdf)?;
    written.push(cdf_path);
    Ok(written)
}
