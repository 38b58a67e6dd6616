//! Alternating-polarity Ramsey campaign with a ¹⁹⁹Hg comagnetometer.
//!
//! Per cycle the neutrons precess in `B` (nominal + offset + white drift)
//! and a signed `E`; the mercury precesses in the same `B`. The readout
//! reference follows the measured mercury frequency, so the neutron phase
//! relative to it sits at the working point whatever `B` does. The phase is
//! reconstructed from the counted asymmetry and turned back into a neutron
//! frequency, and `R = f_n / f_Hg` is recorded.
//!
//! The readout is single-valued only while the EDM phase `2 d_n |E| g κ T`
//! keeps the fringe within half a period of the working point; larger
//! signals alias onto a neighbouring branch.

use std::f64::consts::PI;

use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Result};
use crate::quantities::{PhysicalConstants, UnitSystem};
use crate::spin_dynamics::{asymmetry, ramsey_phase, up_probability, RamseyConfig};
use crate::streams::{domain, Substream};

/// How neutrons are counted in each cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// `N↑ ~ Binomial(n, p)`, `N↓ = n − N↑`.
    #[default]
    Binomial,
    /// Total `~ Poisson(n)`, then binomial split. Totals may exceed `n`.
    PoissonTotal,
    /// No counting noise: counts are rounded expectations and the phase is
    /// read from the exact fringe.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub true_dn_e_cm: f64,
    pub b_nominal_t: f64,
    /// White, cycle-to-cycle standard deviation of B.
    pub b_drift_sd_t: f64,
    /// Common-mode shift added to B in every cycle.
    pub b_offset_t: f64,
    pub e_field_v_per_cm: f64,
    pub free_time_s: f64,
    pub neutrons_per_cycle: u64,
    pub cycles: u64,
    pub visibility: f64,
    pub delta_r_sys: f64,
    /// Relative Gaussian noise on the measured mercury frequency.
    pub f_hg_noise_sd_rel: f64,
    /// Phase (relative to the mercury-locked reference) the fringe is read at.
    pub working_point_rad: f64,
    pub counting: CountingMode,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            true_dn_e_cm: 0.0,
            b_nominal_t: 1.036e-6,
            b_drift_sd_t: 1e-12,
            b_offset_t: 0.0,
            e_field_v_per_cm: 1.1e4,
            free_time_s: 180.0,
            neutrons_per_cycle: 10_000,
            cycles: 100,
            visibility: 1.0,
            delta_r_sys: 0.0,
            f_hg_noise_sd_rel: 1e-7,
            working_point_rad: PI / 2.0,
            counting: CountingMode::Binomial,
            seed: 0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("true_dn_e_cm", self.true_dn_e_cm)?;
        ensure_finite("b_nominal_t", self.b_nominal_t)?;
        ensure_finite("b_drift_sd_t", self.b_drift_sd_t)?;
        ensure_finite("b_offset_t", self.b_offset_t)?;
        ensure_finite("e_field_v_per_cm", self.e_field_v_per_cm)?;
        ensure_finite("free_time_s", self.free_time_s)?;
        ensure_finite("visibility", self.visibility)?;
        ensure_finite("delta_r_sys", self.delta_r_sys)?;
        ensure_finite("f_hg_noise_sd_rel", self.f_hg_noise_sd_rel)?;
        ensure_finite("working_point_rad", self.working_point_rad)?;
        if self.cycles < 2 || self.cycles % 2 != 0 {
            return Err(invalid("cycles", "must be even and at least 2"));
        }
        if self.neutrons_per_cycle == 0 {
            return Err(invalid("neutrons_per_cycle", "must be at least 1"));
        }
        if self.e_field_v_per_cm <= 0.0 {
            return Err(invalid("e_field_v_per_cm", "must be positive"));
        }
        if self.free_time_s <= 0.0 {
            return Err(invalid("free_time_s", "must be positive"));
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(invalid("visibility", "must lie in (0, 1]"));
        }
        if self.b_drift_sd_t < 0.0 {
            return Err(invalid("b_drift_sd_t", "must be non-negative"));
        }
        if self.f_hg_noise_sd_rel < 0.0 {
            return Err(invalid("f_hg_noise_sd_rel", "must be non-negative"));
        }
        if self.b_nominal_t + self.b_offset_t <= 0.0 {
            return Err(invalid("b_nominal_t", "total field must be positive"));
        }
        Ok(())
    }

    /// All noise sources switched off.
    pub fn noiseless(mut self) -> Self {
        self.b_drift_sd_t = 0.0;
        self.f_hg_noise_sd_rel = 0.0;
        self.counting = CountingMode::Exact;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub index: u64,
    pub polarity: i8,
    pub n_up: u64,
    pub n_down: u64,
    pub f_n: f64,
    pub f_hg: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

/// `R ≈ |γ_n|/|γ_Hg| + sign(E)·d_n g κ |E| / (π f_Hg) + ΔR_sys`.
pub fn ratio_r(
    constants: &PhysicalConstants,
    units: &UnitSystem,
    d_n: f64,
    e_signed: f64,
    f_hg: f64,
    delta_r_sys: f64,
) -> Result<f64> {
    ensure_finite("d_n", d_n)?;
    ensure_finite("e_signed", e_signed)?;
    ensure_finite("f_hg", f_hg)?;
    ensure_finite("delta_r_sys", delta_r_sys)?;
    if f_hg <= 0.0 {
        return Err(invalid("f_hg", "must be positive"));
    }
    Ok(constants.gamma_ratio() + d_n * units.coupling() * e_signed / (PI * f_hg) + delta_r_sys)
}

/// `π f_Hg (R₊ − R₋) / (2 E g κ)`: the EDM from one polarity pair.
pub fn extract_dn_pair(r_plus: f64, r_minus: f64, e: f64, f_hg: f64, units: &UnitSystem) -> Result<f64> {
    ensure_finite("r_plus", r_plus)?;
    ensure_finite("r_minus", r_minus)?;
    if !(e.is_finite() && e > 0.0) {
        return Err(invalid("e", "must be positive"));
    }
    if !(f_hg.is_finite() && f_hg > 0.0) {
        return Err(invalid("f_hg", "must be positive"));
    }
    Ok(PI * f_hg * (r_plus - r_minus) / (2.0 * e * units.coupling()))
}

/// Independent substream for cycle `index`.
pub fn cycle_stream(seed: u64, index: u64) -> Substream {
    Substream::new(seed, domain::CAMPAIGN_CYCLES, index)
}

/// Phase on the fringe branch closest to `working_point` whose cosine is
/// `asym / visibility` (clamped to [−1, 1]).
pub fn resolve_phase(asym: f64, visibility: f64, working_point: f64) -> f64 {
    let c = (asym / visibility).clamp(-1.0, 1.0).acos();
    let tau = 2.0 * PI;
    [c, -c]
        .into_iter()
        .map(|base| base + tau * ((working_point - base) / tau).round())
        .min_by(|a, b| {
            (a - working_point)
                .abs()
                .total_cmp(&(b - working_point).abs())
        })
        .unwrap_or(c)
}

/// One Ramsey cycle at the given polarity (+1: E parallel to B).
pub fn simulate_cycle(
    config: &CampaignConfig,
    units: &UnitSystem,
    constants: &PhysicalConstants,
    index: u64,
    polarity: i8,
    rng: &mut Substream,
) -> Result<CycleRecord> {
    if polarity != 1 && polarity != -1 {
        return Err(invalid("polarity", "must be +1 or -1"));
    }
    let t = config.free_time_s;
    let tau_t = 2.0 * PI * t;

    // Draw order is fixed so every cycle consumes its stream identically.
    let z_b: f64 = StandardNormal.sample(rng);
    let z_hg: f64 = StandardNormal.sample(rng);

    let b = config.b_nominal_t + config.b_offset_t + config.b_drift_sd_t * z_b;
    let f_hg_true = constants.gamma_hg.abs() * b / (2.0 * PI);
    let ramsey = RamseyConfig {
        b_field: b,
        e_field: f64::from(polarity) * config.e_field_v_per_cm,
        free_time: t,
        visibility: config.visibility,
    };
    let phi_total = ramsey_phase(&ramsey, config.true_dn_e_cm, units, constants)?
        + tau_t * config.delta_r_sys * f_hg_true;
    let f_n_true = phi_total / tau_t;
    let f_hg = f_hg_true * (1.0 + config.f_hg_noise_sd_rel * z_hg);

    let f_ref = constants.gamma_ratio() * f_hg - config.working_point_rad / tau_t;
    let phi_rel = tau_t * (f_n_true - f_ref);
    let p = up_probability(phi_rel, config.visibility)?;

    let n = config.neutrons_per_cycle;
    let (n_up, n_down, readout) = match config.counting {
        CountingMode::Exact => {
            let up = ((n as f64) * p).round() as u64;
            (up, n - up, 2.0 * p - 1.0)
        }
        CountingMode::Binomial => {
            let up = sample_binomial(n, p, rng)?;
            (up, n - up, asymmetry(up, n - up)?)
        }
        CountingMode::PoissonTotal => {
            let total = if n > 0 {
                Poisson::new(n as f64)
                    .map_err(|e| invalid("neutrons_per_cycle", e.to_string()))?
                    .sample(rng) as u64
            } else {
                0
            };
            let up = sample_binomial(total, p, rng)?;
            let readout = if total == 0 { 0.0 } else { asymmetry(up, total - up)? };
            (up, total - up, readout)
        }
    };

    let phi_hat = resolve_phase(readout, config.visibility, config.working_point_rad);
    let f_n = f_ref + phi_hat / tau_t;
    Ok(CycleRecord {
        index,
        polarity,
        n_up,
        n_down,
        f_n,
        f_hg,
        r: f_n / f_hg,
    })
}

fn sample_binomial(n: u64, p: f64, rng: &mut Substream) -> Result<u64> {
    Ok(Binomial::new(n, p)
        .map_err(|e| invalid("binomial probability", e.to_string()))?
        .sample(rng))
}

/// All cycles with polarity `+, −, +, −, …`; each cycle on its own substream.
pub fn run_campaign(
    config: &CampaignConfig,
    units: &UnitSystem,
    constants: &PhysicalConstants,
) -> Result<Vec<CycleRecord>> {
    config.validate()?;
    units.validate()?;
    constants.validate()?;
    (0..config.cycles)
        .into_par_iter()
        .map(|i| {
            let polarity = if i % 2 == 0 { 1 } else { -1 };
            let mut rng = cycle_stream(config.seed, i);
            simulate_cycle(config, units, constants, i, polarity, &mut rng)
        })
        .collect()
}
