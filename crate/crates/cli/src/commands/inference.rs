//! `dataset`, `fit` and `bound`.

use std::path::PathBuf;

use clap::Args;
use nedm_core::inference::{self as inf, BoundSpec, FlipDataset, SearchBox};
use nedm_core::weak_measurement::DipoleState;
use serde::{Deserialize, Serialize};

use super::{digest, read_verified, Context, Outcome};
use crate::config::{load_config, InferenceSection};
use crate::error::{CliError, CliResult, EXIT_NONCONVERGENT};
use crate::manifest::InputDigest;
use crate::output::{dataset_csv, parse_dataset, to_json};
use crate::quantity;

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long, value_parser = quantity::dipole, allow_hyphen_values = true)]
    pub dn: f64,
    #[arg(long, value_parser = quantity::dipole)]
    pub delta: f64,
    /// Largest kick; the design is ξ_max·i/points for i = 1..points.
    #[arg(long, value_parser = quantity::kick)]
    pub xi_max: f64,
    #[arg(long, default_value_t = 8)]
    pub points: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRun {
    pub dn_e_cm: f64,
    pub delta_e_cm: f64,
    pub xi: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub output: PathBuf,
}

impl DatasetArgs {
    pub fn resolve(&self) -> CliResult<DatasetRun> {
        let state = DipoleState::new(self.dn, self.delta)?;
        if self.points == 0 || self.trials == 0 {
            return Err(CliError::Usage("--points and --trials must be at least 1".into()));
        }
        if !(self.xi_max > 0.0) {
            return Err(CliError::Usage("--xi-max must be positive".into()));
        }
        let n = self.points;
        Ok(DatasetRun {
            dn_e_cm: state.d_n,
            delta_e_cm: state.delta,
            xi: (1..=n).map(|i| self.xi_max * i as f64 / n as f64).collect(),
            trials: self.trials,
            seed: self.seed,
            output: self.output.clone(),
        })
    }
}

pub fn dataset(run: &DatasetRun, ctx: &Context) -> CliResult<Outcome> {
    let state = DipoleState::new(run.dn_e_cm, run.delta_e_cm)?;
    let data = FlipDataset::simulate(&state, &run.xi, run.trials, run.seed)?;
    ctx.emit(Some(&run.output), dataset_csv(&data))?;
    Ok(Outcome::ok(String::new()))
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Flip-count table with header `xi,trials,flips`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// TOML file; only its `[inference]` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub cl: Option<f64>,
    #[arg(long, value_parser = quantity::dipole, allow_hyphen_values = true)]
    pub dn_min: Option<f64>,
    #[arg(long, value_parser = quantity::dipole)]
    pub dn_max: Option<f64>,
    #[arg(long, value_parser = quantity::dipole)]
    pub delta_min: Option<f64>,
    #[arg(long, value_parser = quantity::dipole)]
    pub delta_max: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl SearchArgs {
    /// Command-line flags over the config section.
    fn settings(&self) -> CliResult<InferenceSection> {
        let base = match &self.config {
            Some(path) => load_config(path)?.inference,
            None => InferenceSection::default(),
        };
        Ok(InferenceSection {
            cl: self.cl.or(base.cl),
            grid_points: self.grid_points.or(base.grid_points),
            resolution: self.resolution.or(base.resolution),
            dn_min_e_cm: self.dn_min.or(base.dn_min_e_cm),
            dn_max_e_cm: self.dn_max.or(base.dn_max_e_cm),
            delta_min_e_cm: self.delta_min.or(base.delta_min_e_cm),
            delta_max_e_cm: self.delta_max.or(base.delta_max_e_cm),
        })
    }

    fn load(&self) -> CliResult<(InputDigest, FlipDataset)> {
        let input = digest(&self.dataset)?;
        let data = parse_dataset(&read_verified(&input)?)?;
        Ok((input, data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRun {
    pub dataset: InputDigest,
    pub search: SearchBox,
    pub output: Option<PathBuf>,
}

pub fn resolve_fit(args: &SearchArgs) -> CliResult<FitRun> {
    let (input, data) = args.load()?;
    let s = args.settings()?;
    let mut search = SearchBox::for_dataset(&data);
    search.dn = (s.dn_min_e_cm.unwrap_or(search.dn.0), s.dn_max_e_cm.unwrap_or(search.dn.1));
    search.delta = (
        s.delta_min_e_cm.unwrap_or(search.delta.0),
        s.delta_max_e_cm.unwrap_or(search.delta.1),
    );
    search.cl = s.cl.unwrap_or(search.cl);
    search.grid_points = s.grid_points.unwrap_or(search.grid_points);
    search.resolution = s.resolution.unwrap_or(search.resolution);
    Ok(FitRun {
        dataset: input,
        search,
        output: args.output.clone(),
    })
}

#[derive(Debug, Serialize)]
struct FitReport {
    dn_hat_e_cm: f64,
    delta_hat_e_cm: f64,
    max_log_likelihood: f64,
    cl: f64,
    dn_interval_e_cm: (f64, f64),
    delta_interval_e_cm: (f64, f64),
    converged: bool,
    dn_at_boundary: bool,
    delta_at_boundary: bool,
    diagnostic: Option<String>,
    search: SearchBox,
}

pub fn fit(run: &FitRun, ctx: &Context) -> CliResult<Outcome> {
    let data = parse_dataset(&read_verified(&run.dataset)?)?;
    let r = inf::fit(&data, &run.search)?;
    let report = FitReport {
        dn_hat_e_cm: r.dn_hat,
        delta_hat_e_cm: r.delta_hat,
        max_log_likelihood: r.max_log_likelihood,
        cl: r.cl,
        dn_interval_e_cm: r.dn_interval,
        delta_interval_e_cm: r.delta_interval,
        converged: r.converged,
        dn_at_boundary: r.dn_at_boundary,
        delta_at_boundary: r.delta_at_boundary,
        diagnostic: r.diagnostic,
        search: run.search,
    };
    let stdout = ctx.emit(run.output.as_deref(), to_json(&report))?;
    Ok(Outcome {
        stdout,
        exit_code: if r.converged { 0 } else { EXIT_NONCONVERGENT },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRun {
    pub dataset: InputDigest,
    pub spec: BoundSpec,
    pub output: Option<PathBuf>,
}

/// Defaults: CL 0.95, Δ profiled over `[0, 1/ξ_max]`.
pub fn resolve_bound(args: &SearchArgs) -> CliResult<BoundRun> {
    let (input, data) = args.load()?;
    let s = args.settings()?;
    if s.dn_min_e_cm.is_some_and(|d| d != 0.0) {
        return Err(CliError::Usage("upper bounds search d_n from 0; --dn-min is not accepted".into()));
    }
    let xi_max = data.max_abs_xi();
    if xi_max == 0.0 {
        return Err(CliError::Usage("dataset has no non-zero xi".into()));
    }
    let mut spec = BoundSpec::new(
        s.cl.unwrap_or(0.95),
        (s.delta_min_e_cm.unwrap_or(0.0), s.delta_max_e_cm.unwrap_or(1.0 / xi_max)),
    );
    spec.dn_max = s.dn_max_e_cm;
    spec.grid_points = s.grid_points.unwrap_or(spec.grid_points);
    spec.resolution = s.resolution.unwrap_or(spec.resolution);
    Ok(BoundRun {
        dataset: input,
        spec,
        output: args.output.clone(),
    })
}

#[derive(Debug, Serialize)]
struct BoundReport {
    bound_e_cm: f64,
    cl: f64,
    dn_hat_e_cm: f64,
    delta_hat_e_cm: f64,
    max_log_likelihood: f64,
    threshold: f64,
    delta_profile_e_cm: (f64, f64),
}

pub fn bound(run: &BoundRun, ctx: &Context) -> CliResult<Outcome> {
    let data = parse_dataset(&read_verified(&run.dataset)?)?;
    let b = inf::upper_bound(&data, &run.spec)?;
    let report = BoundReport {
        bound_e_cm: b.bound,
        cl: b.cl,
        dn_hat_e_cm: b.dn_hat,
        delta_hat_e_cm: b.delta_hat,
        max_log_likelihood: b.max_log_likelihood,
        threshold: b.threshold,
        delta_profile_e_cm: run.spec.delta,
    };
    Ok(Outcome::ok(ctx.emit(run.output.as_deref(), to_json(&report))?))
}
