//! Campaign runner for the adversarial attack bench: configuration, run
//! records, campaign execution and reporting.

pub mod campaign;
pub mod config;
pub mod records;
pub mod report;

pub use campaign::{run_campaign, CampaignError, CampaignOutput};
pub use config::{load_config, parse_config, CampaignConfig, ConfigError};
pub use records::{format_rate, hit_rate, read_records, write_records, RecordError, RunRecord};
pub use report::{compute_stats, render_report, Report};
