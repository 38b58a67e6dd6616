//! `campaign`: simulate a polarity-alternating run and estimate d_n.

use std::path::PathBuf;

use clap::Args;
use nedm_core::comagnetometer::run_campaign;
use nedm_core::inference::{campaign_estimator, EstimatorSettings};
use serde::{Deserialize, Serialize};

use super::{Context, Outcome};
use crate::config::{load_config, FileConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::output::{cycles_csv, sha256_hex, to_json};

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// TOML file with `[campaign]`, `[units]` and `[constants]` sections.
    #[arg(long)]
    pub config: PathBuf,
    /// Cycle table (CSV).
    #[arg(long)]
    pub output: PathBuf,
    /// Summary record (JSON); printed to stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRun {
    pub config: FileConfig,
    pub output: PathBuf,
    pub summary: Option<PathBuf>,
}

impl CampaignArgs {
    pub fn resolve(&self) -> CliResult<CampaignRun> {
        let mut config = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            config.campaign.seed = seed;
        }
        let cycles = config.campaign.cycles;
        if cycles < 2 || cycles % 2 != 0 {
            return Err(CliError::Usage(format!(
                "campaign.cycles = {cycles}: the estimator needs a positive even number of cycles"
            )));
        }
        Ok(CampaignRun {
            config,
            output: self.output.clone(),
            summary: self.summary.clone(),
        })
    }
}

#[derive(Debug, Serialize)]
struct CampaignSummary<'a> {
    dn_hat_e_cm: f64,
    standard_error_e_cm: f64,
    degenerate: bool,
    birge_ratio: Option<f64>,
    pairs: usize,
    true_dn_e_cm: f64,
    seed: u64,
    cycle_table_sha256: String,
    manifest: &'a Manifest,
}

pub fn campaign(run: &CampaignRun, manifest: &Manifest, ctx: &Context) -> CliResult<Outcome> {
    let cfg = &run.config.campaign;
    let units = run.config.units.resolve()?;
    let constants = run.config.constants.resolve()?;
    let records = run_campaign(cfg, &units, &constants)?;
    let settings = EstimatorSettings {
        e_field_v_per_cm: cfg.e_field_v_per_cm,
        free_time_s: cfg.free_time_s,
        visibility: cfg.visibility,
        f_hg_reference: None,
    };
    let estimate = campaign_estimator(&records, &settings, &units)?;
    let table = cycles_csv(&records);
    ctx.emit(Some(&run.output), table.clone())?;
    let summary = CampaignSummary {
        dn_hat_e_cm: estimate.dn_hat,
        standard_error_e_cm: estimate.standard_error,
        degenerate: estimate.degenerate,
        birge_ratio: estimate.birge_ratio,
        pairs: estimate.pairs,
        true_dn_e_cm: cfg.true_dn_e_cm,
        seed: cfg.seed,
        cycle_table_sha256: sha256_hex(table.as_bytes()),
        manifest,
    };
    Ok(Outcome::ok(ctx.emit(run.summary.as_deref(), to_json(&summary))?))
}
