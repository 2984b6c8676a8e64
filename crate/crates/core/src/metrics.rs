//! Per-episode outcomes and their aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::TerminalReason;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub scenario_id: u32,
    pub seed: u64,
    pub success: bool,
    pub steps: u64,
    pub terminal: TerminalReason,
    pub cumulative_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub success_rate_percent: f64,
    /// Mean over all episodes, failures included.
    pub avg_steps: f64,
    pub episodes: usize,
}

impl SummaryStats {
    pub fn from_records(records: &[EpisodeRecord]) -> Result<Self> {
        Ok(Self {
            success_rate_percent: success_rate(records)?,
            avg_steps: avg_timesteps(records)?,
            episodes: records.len(),
        })
    }
}

/// `100 · successes / total`.
pub fn success_percent(successes: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::Domain("success rate of zero episodes".into()));
    }
    if successes > total {
        return Err(Error::Domain(format!("{successes} successes out of {total} episodes")));
    }
    Ok(100.0 * successes as f64 / total as f64)
}

pub fn success_rate(records: &[EpisodeRecord]) -> Result<f64> {
    success_percent(records.iter().filter(|r| r.success).count(), records.len())
}

pub fn avg_timesteps(records: &[EpisodeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Domain("average steps of zero episodes".into()));
    }
    Ok(records.iter().map(|r| r.steps as f64).sum::<f64>() / records.len() as f64)
}
