//! Unit conventions and physical constants.
//!
//! Internally ħ = 1. Dipoles are in e·cm, electric fields in V/cm, times in
//! seconds and magnetic fields in tesla. A dipole `d` in a field `E` for a
//! time `t` accumulates the phase `d · E · t · κ` with κ = e·V/ħ, so the
//! product `d · ξ` is a dimensionless rotation angle.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Result};

/// Elementary charge in coulomb (exact, SI 2019).
pub const ELEMENTARY_CHARGE_C: f64 = 1.602_176_634e-19;
/// Reduced Planck constant in J·s (CODATA 2018).
pub const HBAR_J_S: f64 = 1.054_571_817e-34;
/// Neutron gyromagnetic ratio |γ_n| in rad s⁻¹ T⁻¹ (CODATA 2018).
pub const GAMMA_NEUTRON: f64 = 1.832_471_71e8;
/// Measured ratio γ_n/γ_Hg for neutrons and ¹⁹⁹Hg (Afach et al., PLB 739, 2014).
pub const GAMMA_RATIO_N_HG: f64 = 3.842_457_4;
/// ¹⁹⁹Hg gyromagnetic ratio |γ_Hg| in rad s⁻¹ T⁻¹, from the two values above.
pub const GAMMA_MERCURY: f64 = 4.769_009_826_888_387e7;

/// Conversion between dipole × field × time and accumulated phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// κ: radians per (e·cm × V/cm × s).
    pub phase_per_edm_field_time: f64,
    /// g: dimensionless factor multiplying the field integral in ξ.
    pub geometric_factor: f64,
}

impl UnitSystem {
    pub fn new(phase_per_edm_field_time: f64, geometric_factor: f64) -> Result<Self> {
        ensure_finite("phase_per_edm_field_time", phase_per_edm_field_time)?;
        ensure_finite("geometric_factor", geometric_factor)?;
        if phase_per_edm_field_time <= 0.0 {
            return Err(invalid("phase_per_edm_field_time", "must be positive"));
        }
        if geometric_factor <= 0.0 {
            return Err(invalid("geometric_factor", "must be positive"));
        }
        Ok(Self {
            phase_per_edm_field_time,
            geometric_factor,
        })
    }

    /// κ = e·(1 V)/ħ: one e·cm in one V/cm for one second.
    pub fn standard_kappa() -> f64 {
        ELEMENTARY_CHARGE_C / HBAR_J_S
    }

    /// g = 1/(2·√(j(j+1))) for a spin-1/2 particle, i.e. 1/√3.
    pub fn spin_half_geometric_factor() -> f64 {
        let j = 0.5_f64;
        1.0 / (2.0 * (j * (j + 1.0)).sqrt())
    }

    /// g·κ: radians per (e·cm × V/cm × s) including the geometric factor.
    pub fn coupling(&self) -> f64 {
        self.geometric_factor * self.phase_per_edm_field_time
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.phase_per_edm_field_time, self.geometric_factor).map(|_| ())
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            phase_per_edm_field_time: Self::standard_kappa(),
            geometric_factor: Self::spin_half_geometric_factor(),
        }
    }
}

/// Gyromagnetic constants for the neutron and the mercury comagnetometer.
///
/// `mu_n` is expressed so that `mu_n · B` is an angular frequency (rad/s);
/// the default `|γ_n|/2` makes the Larmor frequency `(1/π)|mu_n·B|` equal to
/// `|γ_n|·B/2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub gamma_n: f64,
    pub gamma_hg: f64,
    pub mu_n: f64,
}

impl PhysicalConstants {
    pub fn new(gamma_n: f64, gamma_hg: f64, mu_n: f64) -> Result<Self> {
        ensure_finite("gamma_n", gamma_n)?;
        ensure_finite("gamma_hg", gamma_hg)?;
        ensure_finite("mu_n", mu_n)?;
        if gamma_hg == 0.0 {
            return Err(invalid("gamma_hg", "must be non-zero"));
        }
        Ok(Self {
            gamma_n,
            gamma_hg,
            mu_n,
        })
    }

    /// |γ_n| / |γ_Hg|, the magnetic part of the frequency ratio R.
    pub fn gamma_ratio(&self) -> f64 {
        self.gamma_n.abs() / self.gamma_hg.abs()
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.gamma_n, self.gamma_hg, self.mu_n).map(|_| ())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gamma_n: GAMMA_NEUTRON,
            gamma_hg: GAMMA_MERCURY,
            mu_n: GAMMA_NEUTRON / 2.0,
        }
    }
}

/// Applied electric-field pulse. Only `∫E dt` enters the physics (adiabatic
/// switching); the sampled envelope is kept for bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseProfile {
    field_time_integral: f64,
    envelope: Option<Vec<(f64, f64)>>,
}

impl PulseProfile {
    /// Profile known only through its integral, in (V/cm)·s.
    pub fn from_integral(field_time_integral: f64) -> Result<Self> {
        ensure_finite("field_time_integral", field_time_integral)?;
        Ok(Self {
            field_time_integral,
            envelope: None,
        })
    }

    /// Constant field `amplitude` (V/cm) held for `duration` seconds.
    pub fn rectangular(amplitude: f64, duration: f64) -> Result<Self> {
        ensure_finite("amplitude", amplitude)?;
        ensure_finite("duration", duration)?;
        if duration < 0.0 {
            return Err(invalid("duration", "must be non-negative"));
        }
        Ok(Self {
            field_time_integral: amplitude * duration,
            envelope: Some(vec![(0.0, amplitude), (duration, amplitude)]),
        })
    }

    /// Sampled envelope `(t, E(t))`, integrated with the trapezoid rule.
    pub fn from_samples(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(invalid("pulse envelope", "needs at least two samples"));
        }
        for &(t, e) in &samples {
            ensure_finite("pulse sample time", t)?;
            ensure_finite("pulse sample field", e)?;
        }
        if samples.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(invalid("pulse envelope", "sample times must be non-decreasing"));
        }
        let integral = samples
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum::<f64>();
        ensure_finite("field_time_integral", integral)?;
        Ok(Self {
            field_time_integral: integral,
            envelope: Some(samples),
        })
    }

    /// This pulse followed by `next`.
    pub fn then(&self, next: &PulseProfile) -> PulseProfile {
        let envelope = match (&self.envelope, &next.envelope) {
            (Some(a), Some(b)) => {
                let end = a.last().map(|s| s.0).unwrap_or(0.0);
                let start = b.first().map(|s| s.0).unwrap_or(0.0);
                let mut joined = a.clone();
                joined.extend(b.iter().map(|&(t, e)| (t - start + end, e)));
                Some(joined)
            }
            _ => None,
        };
        PulseProfile {
            field_time_integral: self.field_time_integral + next.field_time_integral,
            envelope,
        }
    }

    pub fn field_time_integral(&self) -> f64 {
        self.field_time_integral
    }

    pub fn envelope(&self) -> Option<&[(f64, f64)]> {
        self.envelope.as_deref()
    }
}

/// Phase accumulated by `dipole` (e·cm) under a field integral (V/cm·s):
/// `dipole · g · κ · ∫E dt`.
pub fn phase_factor(dipole: f64, field_time_integral: f64, units: &UnitSystem) -> Result<f64> {
    ensure_finite("dipole", dipole)?;
    ensure_finite("field_time_integral", field_time_integral)?;
    units.validate()?;
    Ok(dipole * units.geometric_factor * units.phase_per_edm_field_time * field_time_integral)
}

/// Kick parameter ξ (rad per e·cm) of a pulse: `g · κ · ∫E dt`.
pub fn xi_from_pulse(profile: &PulseProfile, units: &UnitSystem) -> Result<f64> {
    let integral = ensure_finite("field_time_integral", profile.field_time_integral())?;
    units.validate()?;
    Ok(units.geometric_factor * units.phase_per_edm_field_time * integral)
}
