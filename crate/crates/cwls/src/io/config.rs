//! Campaign configuration: `key = value` text format with comma-separated
//! lists for grid axes.

use crate::error::Error;
use crate::simulator::Method;
use crate::Result;

#[derive(Debug, Clone, serde::Serialize)]
pub struct CampaignConfig {
    /// Tracked satellite counts (grid axis).
    pub sats: Vec<usize>,
    /// Baseline counts (one success-rate table per entry).
    pub baselines: Vec<usize>,
    /// Undifferenced phase noise levels in millimeters (grid axis).
    pub sigma_phase_mm: Vec<f64>,
    pub variance_ratio: f64,
    pub elevation_mask_deg: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub baseline_length_m: f64,
    pub keep_best: usize,
    /// Angle-filter tolerance override; absent = noise-scaled default.
    pub delta_theta_deg: Option<f64>,
    pub afm_step_deg: f64,
    pub cils_box: i64,
    pub diagonal_q: bool,
    pub timing: bool,
    /// Include per-trial records in report.json.
    pub verbose_records: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            sats: vec![4, 5, 6, 7, 8],
            baselines: vec![1],
            sigma_phase_mm: vec![9.0, 7.0, 5.0, 3.0, 1.0],
            variance_ratio: 1e4,
            elevation_mask_deg: 10.0,
            trials: 10_000,
            seed: 42,
            methods: vec![Method::Cwls],
            baseline_length_m: 1.0,
            keep_best: 32,
            delta_theta_deg: None,
            afm_step_deg: 2.0,
            cils_box: 3,
            diagonal_q: false,
            timing: false,
            verbose_records: false,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize, what: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|t| {
            t.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {what} entry '{}'", t.trim()),
            })
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(value: &str, line: usize, what: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what}: '{}'", value.trim()),
    })
}

impl CampaignConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let lno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: lno,
                message: "expected 'key = value'".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "sats" => cfg.sats = parse_list(value, lno, "sats")?,
                "baselines" => cfg.baselines = parse_list(value, lno, "baselines")?,
                "sigma_psi_mm" | "sigma_phase_mm" => {
                    cfg.sigma_phase_mm = parse_list(value, lno, "sigma")?
                }
                "variance_ratio" => cfg.variance_ratio = parse_scalar(value, lno, "ratio")?,
                "elevation_mask_deg" => {
                    cfg.elevation_mask_deg = parse_scalar(value, lno, "mask")?
                }
                "trials" => cfg.trials = parse_scalar(value, lno, "trials")?,
                "seed" => cfg.seed = parse_scalar(value, lno, "seed")?,
                "methods" => {
                    cfg.methods = value
                        .split(',')
                        .map(|m| m.parse())
                        .collect::<Result<Vec<Method>>>()
                        .map_err(|e| Error::Parse {
                            line: lno,
                            message: e.to_string(),
                        })?
                }
                "baseline_length_m" => {
                    cfg.baseline_length_m = parse_scalar(value, lno, "length")?
                }
                "keep_best" => cfg.keep_best = parse_scalar(value, lno, "keep_best")?,
                "delta_theta_deg" => {
                    cfg.delta_theta_deg = Some(parse_scalar(value, lno, "delta_theta")?)
                }
                "afm_step_deg" => cfg.afm_step_deg = parse_scalar(value, lno, "afm step")?,
                "cils_box" => cfg.cils_box = parse_scalar(value, lno, "cils box")?,
                "diagonal_q" => cfg.diagonal_q = parse_scalar(value, lno, "diagonal_q")?,
                "timing" => cfg.timing = parse_scalar(value, lno, "timing")?,
                "verbose_records" => {
                    cfg.verbose_records = parse_scalar(value, lno, "verbose_records")?
                }
                other => {
                    return Err(Error::Parse {
                        line: lno,
                        message: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sats.iter().any(|&s| s < 2) {
            return Err(Error::invalid("every satellite count must be >= 2"));
        }
        if self.baselines.iter().any(|&a| !(1..=3).contains(&a)) {
            return Err(Error::invalid(
                "baseline counts must be 1..=3 (orthogonal presets)",
            ));
        }
        if self.sigma_phase_mm.iter().any(|&s| s < 0.0) {
            return Err(Error::invalid("sigma must be non-negative"));
        }
        if !(0.0..90.0).contains(&self.elevation_mask_deg) {
            return Err(Error::invalid("elevation mask must be in [0, 90) degrees"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("need at least one method"));
        }
        Ok(())
    }
}
