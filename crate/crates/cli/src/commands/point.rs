//! Single-state commands: `transition`, `contrast` and `scan`.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nedm_core::ensemble::{expected_stochastic_fraction, simulate_quantum, simulate_stochastic, two_proportion_z, EnsembleRun};
use nedm_core::quantities::{xi_from_pulse, PulseProfile, UnitSystem};
use nedm_core::weak_measurement::{
    flip_probability, flip_probability_quadrature, required_nodes, DipoleState, QuadratureRule, QuadratureSpec,
    MAX_HERMITE_NODES,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Context, Outcome};
use crate::error::{CliError, CliResult};
use crate::output::{float, scan_csv, to_json, ScanRow};
use crate::quantity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RuleChoice {
    /// Gauss–Hermite while the node count allows it, trapezoid beyond.
    Auto,
    GaussHermite,
    Trapezoid,
}

/// Quadrature settings for the numerical oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub rule: RuleChoice,
    /// `None`: at least 200 and never fewer than the resolution minimum.
    pub nodes: Option<usize>,
}

impl OracleSettings {
    pub fn spec(&self, state: &DipoleState, xi: f64) -> QuadratureSpec {
        let n = self
            .nodes
            .unwrap_or_else(|| required_nodes(xi * state.delta).max(200));
        let rule = match self.rule {
            RuleChoice::GaussHermite => QuadratureRule::GaussHermite,
            RuleChoice::Trapezoid => QuadratureRule::Trapezoid,
            RuleChoice::Auto if n <= MAX_HERMITE_NODES => QuadratureRule::GaussHermite,
            RuleChoice::Auto => QuadratureRule::Trapezoid,
        };
        QuadratureSpec {
            node_count: n,
            rule,
            ..QuadratureSpec::default()
        }
    }

    pub fn evaluate(&self, state: &DipoleState, xi: f64) -> CliResult<f64> {
        Ok(flip_probability_quadrature(state, xi, &self.spec(state, xi))?)
    }
}

#[derive(Debug, Args)]
pub struct StateArgs {
    /// Dipole expectation value, e.g. `1e-26` or `1e-26 e*cm`.
    #[arg(long, value_parser = quantity::dipole, allow_hyphen_values = true)]
    pub dn: f64,
    /// Dipole uncertainty Δ (e·cm).
    #[arg(long, value_parser = quantity::dipole)]
    pub delta: f64,
}

impl StateArgs {
    fn state(&self) -> CliResult<DipoleState> {
        Ok(DipoleState::new(self.dn, self.delta)?)
    }
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value = "auto")]
    pub rule: RuleChoice,
    #[arg(long)]
    pub nodes: Option<usize>,
}

impl OracleArgs {
    fn settings(&self) -> OracleSettings {
        OracleSettings {
            rule: self.rule,
            nodes: self.nodes,
        }
    }
}

#[derive(Debug, Args)]
pub struct TransitionArgs {
    #[command(flatten)]
    pub state: StateArgs,
    /// Kick parameter ξ in rad per e·cm.
    #[arg(long, value_parser = quantity::kick, required_unless_present = "field_time", conflicts_with = "field_time", allow_hyphen_values = true)]
    pub xi: Option<f64>,
    /// Time integral of the field (V·s/cm); ξ = g κ ∫E dt.
    #[arg(long, value_parser = quantity::field_time, allow_hyphen_values = true)]
    pub field_time: Option<f64>,
    /// Geometric factor g used with `--field-time`.
    #[arg(long, default_value_t = UnitSystem::spin_half_geometric_factor())]
    pub geometric_factor: f64,
    /// Also evaluate the amplitude integral numerically.
    #[arg(long)]
    pub check_oracle: bool,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Write the record here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRun {
    pub dn_e_cm: f64,
    pub delta_e_cm: f64,
    pub xi: f64,
    pub field_time_v_s_per_cm: Option<f64>,
    pub geometric_factor: Option<f64>,
    pub oracle: Option<OracleSettings>,
    pub output: Option<PathBuf>,
}

impl TransitionArgs {
    pub fn resolve(&self) -> CliResult<TransitionRun> {
        let state = self.state.state()?;
        let (xi, field_time, g) = match (self.xi, self.field_time) {
            (Some(xi), _) => (xi, None, None),
            (None, Some(ft)) => {
                let units = UnitSystem::new(UnitSystem::standard_kappa(), self.geometric_factor)?;
                let xi = xi_from_pulse(&PulseProfile::from_integral(ft)?, &units)?;
                (xi, Some(ft), Some(self.geometric_factor))
            }
            (None, None) => return Err(CliError::Usage("one of --xi or --field-time is required".into())),
        };
        Ok(TransitionRun {
            dn_e_cm: state.d_n,
            delta_e_cm: state.delta,
            xi,
            field_time_v_s_per_cm: field_time,
            geometric_factor: g,
            oracle: self.check_oracle.then(|| self.oracle.settings()),
            output: self.output.clone(),
        })
    }
}

#[derive(Debug, Serialize)]
struct TransitionReport {
    dn_e_cm: f64,
    delta_e_cm: f64,
    xi: f64,
    p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_quadrature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_diff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadrature: Option<QuadratureSpec>,
}

pub fn transition(run: &TransitionRun, ctx: &Context) -> CliResult<Outcome> {
    let state = DipoleState::new(run.dn_e_cm, run.delta_e_cm)?;
    let p = flip_probability(&state, run.xi);
    let mut report = TransitionReport {
        dn_e_cm: state.d_n,
        delta_e_cm: state.delta,
        xi: run.xi,
        p,
        p_quadrature: None,
        abs_diff: None,
        quadrature: None,
    };
    if let Some(oracle) = &run.oracle {
        let q = oracle.evaluate(&state, run.xi)?;
        report.p_quadrature = Some(q);
        report.abs_diff = Some((p - q).abs());
        report.quadrature = Some(oracle.spec(&state, run.xi));
    }
    Ok(Outcome::ok(ctx.emit(run.output.as_deref(), to_json(&report))?))
}

#[derive(Debug, Args)]
pub struct ContrastArgs {
    #[command(flatten)]
    pub state: StateArgs,
    #[arg(long, value_parser = quantity::kick, allow_hyphen_values = true)]
    pub xi: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRun {
    pub dn_e_cm: f64,
    pub delta_e_cm: f64,
    pub xi: f64,
    pub trials: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ContrastArgs {
    pub fn resolve(&self) -> CliResult<ContrastRun> {
        let state = self.state.state()?;
        if self.trials == 0 {
            return Err(CliError::Usage("--trials must be at least 1".into()));
        }
        Ok(ContrastRun {
            dn_e_cm: state.d_n,
            delta_e_cm: state.delta,
            xi: self.xi,
            trials: self.trials,
            seed: self.seed,
            output: self.output.clone(),
        })
    }
}

pub const CONTRAST_HEADER: &str = "model,trials,flips,fraction,standard_error,expected_fraction,z_vs_quantum";

fn contrast_row(run: &EnsembleRun, expected: f64, z: f64) -> String {
    format!(
        "{},{},{},{},{},{},{}\n",
        run.model.name(),
        run.trials,
        run.flips,
        float(run.fraction()),
        float(run.standard_error()),
        float(expected),
        float(z)
    )
}

pub fn contrast(run: &ContrastRun, ctx: &Context) -> CliResult<Outcome> {
    let state = DipoleState::new(run.dn_e_cm, run.delta_e_cm)?;
    let quantum = simulate_quantum(&state, run.xi, run.trials, run.seed)?;
    let stochastic = simulate_stochastic(&state, run.xi, run.trials, run.seed)?;
    let mut table = String::from(CONTRAST_HEADER);
    table.push('\n');
    table.push_str(&contrast_row(&quantum, flip_probability(&state, run.xi), 0.0));
    table.push_str(&contrast_row(
        &stochastic,
        expected_stochastic_fraction(&state, run.xi),
        two_proportion_z(&stochastic, &quantum),
    ));
    Ok(Outcome::ok(ctx.emit(run.output.as_deref(), table)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long, value_parser = quantity::dipole, default_value = "1e-26", allow_hyphen_values = true)]
    pub dn: f64,
    #[arg(long, value_parser = quantity::dipole, default_value = "1e-26")]
    pub delta: f64,
    #[arg(long, value_parser = quantity::kick, default_value = "0")]
    pub xi_min: f64,
    #[arg(long, value_parser = quantity::kick, default_value = "3e26")]
    pub xi_max: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    #[arg(long, value_enum, default_value = "linear")]
    pub spacing: Spacing,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRun {
    pub dn_e_cm: f64,
    pub delta_e_cm: f64,
    pub xi_min: f64,
    pub xi_max: f64,
    pub points: usize,
    pub spacing: Spacing,
    pub oracle: OracleSettings,
    pub output: PathBuf,
}

impl ScanArgs {
    pub fn resolve(&self) -> CliResult<ScanRun> {
        let state = DipoleState::new(self.dn, self.delta)?;
        if self.points == 0 {
            return Err(CliError::Usage("--points must be at least 1".into()));
        }
        if self.xi_min > self.xi_max {
            return Err(CliError::Usage("--xi-min exceeds --xi-max".into()));
        }
        if self.spacing == Spacing::Log && self.xi_min <= 0.0 {
            return Err(CliError::Usage("log spacing needs --xi-min > 0".into()));
        }
        Ok(ScanRun {
            dn_e_cm: state.d_n,
            delta_e_cm: state.delta,
            xi_min: self.xi_min,
            xi_max: self.xi_max,
            points: self.points,
            spacing: self.spacing,
            oracle: self.oracle.settings(),
            output: self.output.clone(),
        })
    }
}

impl ScanRun {
    /// Ascending ξ values, endpoints exact.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.xi_min];
        }
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    return self.xi_max;
                }
                let t = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.xi_min + (self.xi_max - self.xi_min) * t,
                    Spacing::Log => (self.xi_min.ln() + (self.xi_max.ln() - self.xi_min.ln()) * t).exp(),
                }
            })
            .collect()
    }
}

pub fn scan(run: &ScanRun, ctx: &Context) -> CliResult<Outcome> {
    let state = DipoleState::new(run.dn_e_cm, run.delta_e_cm)?;
    let mut rows = run
        .grid()
        .into_par_iter()
        .map(|xi| {
            let p_closed = flip_probability(&state, xi);
            let p_quadrature = run.oracle.evaluate(&state, xi)?;
            Ok(ScanRow {
                xi,
                p_closed,
                p_quadrature,
                abs_diff: (p_closed - p_quadrature).abs(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    rows.sort_by(|a, b| a.xi.total_cmp(&b.xi));
    ctx.emit(Some(&run.output), scan_csv(&rows))?;
    Ok(Outcome::ok(String::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan_run(points: usize, spacing: Spacing, lo: f64, hi: f64) -> ScanRun {
        ScanRun {
            dn_e_cm: 1e-26,
            delta_e_cm: 1e-26,
            xi_min: lo,
            xi_max: hi,
            points,
            spacing,
            oracle: OracleSettings {
                rule: RuleChoice::Auto,
                nodes: None,
            },
            output: PathBuf::from("unused.csv"),
        }
    }

    #[test]
    fn grids() {
        assert_eq!(scan_run(1, Spacing::Linear, 2.0, 5.0).grid(), vec![2.0]);
        let g = scan_run(5, Spacing::Linear, 0.0, 4.0).grid();
        assert_eq!(g, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let l = scan_run(3, Spacing::Log, 1.0, 100.0).grid();
        assert!((l[1] - 10.0).abs() < 1e-12);
        assert_eq!(l[2], 100.0);
    }

    #[test]
    fn auto_rule_switches_to_trapezoid_for_wide_states() {
        let o = OracleSettings {
            rule: RuleChoice::Auto,
            nodes: None,
        };
        let narrow = DipoleState::new(0.0, 1.0).unwrap();
        assert_eq!(o.spec(&narrow, 1.0).rule, QuadratureRule::GaussHermite);
        assert_eq!(o.spec(&narrow, 1.0).node_count, 200);
        let wide = DipoleState::new(0.0, 100.0).unwrap();
        assert_eq!(o.spec(&wide, 1.0).rule, QuadratureRule::Trapezoid);
        assert!(o.spec(&wide, 1.0).node_count >= required_nodes(100.0));
    }
}
