//! File formats and report emission.

pub mod config;
pub mod epoch_file;
pub mod report;

pub use config::CampaignConfig;
pub use epoch_file::EpochFile;
pub use report::{run_grid, write_outputs, CampaignReport, CellReport, GridOutput};
