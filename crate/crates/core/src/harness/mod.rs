//! Campaign configuration, Monte-Carlo orchestration, result tables and CDFs.

pub mod campaign;
pub mod cdf;
pub mod config;
pub mod table;

pub use campaign::{
    drop_seed, run_campaign, run_drop, summary_csv, CampaignOutput, DropContext, DropReport, SchemeOutcome, SUMMARY_HEADER,
};
pub use cdf::{emit_cdf, empirical_cdf, GroupKey, Metric};
pub use config::{load_config, parse_config, CampaignSpec, CsiMode};
pub use table::{ResultRow, ResultTable};
