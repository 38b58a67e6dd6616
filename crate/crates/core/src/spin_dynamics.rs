//! Two-level spin evolution and Ramsey bookkeeping.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::quantities::{PhysicalConstants, UnitSystem};

pub const X_AXIS: [f64; 3] = [1.0, 0.0, 0.0];
pub const Y_AXIS: [f64; 3] = [0.0, 1.0, 0.0];
pub const Z_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

const NORM_TOLERANCE: f64 = 1e-12;
const AXIS_TOLERANCE: f64 = 1e-9;

/// Spin-1/2 state in the σ_z basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spinor {
    up: Complex64,
    down: Complex64,
}

impl Spinor {
    pub fn spin_up() -> Self {
        Self {
            up: Complex64::new(1.0, 0.0),
            down: Complex64::new(0.0, 0.0),
        }
    }

    pub fn spin_down() -> Self {
        Self {
            up: Complex64::new(0.0, 0.0),
            down: Complex64::new(1.0, 0.0),
        }
    }

    /// Normalises the given amplitudes; rejects the zero vector.
    pub fn new(up: Complex64, down: Complex64) -> Result<Self> {
        let norm = (up.norm_sqr() + down.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid("spinor", "amplitudes must be finite and not both zero"));
        }
        Ok(Self {
            up: up / norm,
            down: down / norm,
        })
    }

    pub fn up_amplitude(&self) -> Complex64 {
        self.up
    }

    pub fn down_amplitude(&self) -> Complex64 {
        self.down
    }

    pub fn norm_sqr(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    pub fn up_probability(&self) -> f64 {
        self.up.norm_sqr()
    }

    pub fn down_probability(&self) -> f64 {
        self.down.norm_sqr()
    }

    fn renormalised(self) -> Self {
        let n2 = self.norm_sqr();
        if (n2 - 1.0).abs() <= NORM_TOLERANCE * 0.5 {
            self
        } else {
            let n = n2.sqrt();
            Self {
                up: self.up / n,
                down: self.down / n,
            }
        }
    }
}

/// Applies `exp(-i · angle · (axis·σ) / 2)`.
pub fn rotate(state: &Spinor, axis: [f64; 3], angle: f64) -> Result<Spinor> {
    ensure_finite("angle", angle)?;
    let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > AXIS_TOLERANCE {
        return Err(Error::NonUnitAxis { norm });
    }
    let [nx, ny, nz] = axis;
    let (s, c) = (0.5 * angle).sin_cos();
    let minus_i_s = Complex64::new(0.0, -s);
    let off_minus = Complex64::new(nx, -ny);
    let off_plus = Complex64::new(nx, ny);
    let up = state.up * c + minus_i_s * (state.up * nz + off_minus * state.down);
    let down = state.down * c + minus_i_s * (off_plus * state.up - state.down * nz);
    Ok(Spinor { up, down }.renormalised())
}

/// Larmor frequencies `(1/π)|μ_n B ± d_n E g κ|` in Hz for the field
/// orientations parallel (+) and antiparallel (−). `mu_n · b` must be an
/// angular frequency.
pub fn larmor_frequencies(mu_n: f64, b: f64, d_n: f64, e: f64, units: &UnitSystem) -> (f64, f64) {
    let magnetic = mu_n * b;
    let electric = d_n * e * units.coupling();
    (
        (magnetic + electric).abs() / PI,
        (magnetic - electric).abs() / PI,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyConfig {
    /// Magnetic field, T.
    pub b_field: f64,
    /// Signed electric field, V/cm. Positive means parallel to B.
    pub e_field: f64,
    /// Free precession time, s.
    pub free_time: f64,
    pub visibility: f64,
}

impl RamseyConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("b_field", self.b_field)?;
        ensure_finite("e_field", self.e_field)?;
        ensure_finite("free_time", self.free_time)?;
        ensure_finite("visibility", self.visibility)?;
        if self.free_time < 0.0 {
            return Err(invalid("free_time", "must be non-negative"));
        }
        check_visibility(self.visibility)
    }
}

fn check_visibility(visibility: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(invalid("visibility", format!("{visibility} is outside [0, 1]")));
    }
    Ok(())
}

/// Total phase accumulated during free precession, `2π f T`, where `f` is
/// the Larmor frequency for the configured (signed) E.
pub fn ramsey_phase(
    config: &RamseyConfig,
    d_n: f64,
    units: &UnitSystem,
    constants: &PhysicalConstants,
) -> Result<f64> {
    config.validate()?;
    ensure_finite("d_n", d_n)?;
    let (f, _) = larmor_frequencies(constants.mu_n, config.b_field, d_n, config.e_field, units);
    Ok(2.0 * PI * f * config.free_time)
}

/// Probability of counting the neutron as spin-up after the second pulse.
pub fn up_probability(phi: f64, visibility: f64) -> Result<f64> {
    ensure_finite("phi", phi)?;
    check_visibility(visibility)?;
    Ok((0.5 * (1.0 + visibility * phi.cos())).clamp(0.0, 1.0))
}

/// `(N↑ − N↓)/(N↑ + N↓)`.
pub fn asymmetry(n_up: u64, n_down: u64) -> Result<f64> {
    asymmetry_from_rates(n_up as f64, n_down as f64)
}

/// Asymmetry for real-valued (expected) counts.
pub fn asymmetry_from_rates(n_up: f64, n_down: f64) -> Result<f64> {
    ensure_finite("n_up", n_up)?;
    ensure_finite("n_down", n_down)?;
    if n_up < 0.0 || n_down < 0.0 {
        return Err(invalid("counts", "must be non-negative"));
    }
    let total = n_up + n_down;
    if total == 0.0 {
        return Err(Error::ZeroCounts);
    }
    Ok(((n_up - n_down) / total).clamp(-1.0, 1.0))
}

/// Explicit spinor route through a Ramsey sequence: π/2 about x, free
/// precession by `phi` about z, π/2 about −x (second pulse phase-reversed).
/// Returns the spin-up probability, which equals `(1 + cos φ)/2`.
pub fn ramsey_sequence_probability(phi: f64) -> Result<f64> {
    let tipped = rotate(&Spinor::spin_up(), X_AXIS, PI / 2.0)?;
    let precessed = rotate(&tipped, Z_AXIS, phi)?;
    let read = rotate(&precessed, [-1.0, 0.0, 0.0], PI / 2.0)?;
    Ok(read.up_probability())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probabilities_close(a: &Spinor, b: &Spinor, tol: f64) -> bool {
        (a.up_probability() - b.up_probability()).abs() < tol
            && (a.down_probability() - b.down_probability()).abs() < tol
    }

    #[test]
    fn z_rotation_of_up_is_phase_only() {
        let s = rotate(&Spinor::spin_up(), Z_AXIS, 1.234).unwrap();
        assert!(probabilities_close(&s, &Spinor::spin_up(), 1e-15));
    }

    #[test]
    fn pi_about_y_swaps_poles() {
        let s = rotate(&Spinor::spin_up(), Y_AXIS, PI).unwrap();
        assert!(probabilities_close(&s, &Spinor::spin_down(), 1e-15));
    }

    #[test]
    fn non_unit_axis_rejected() {
        let err = rotate(&Spinor::spin_up(), [1.0, 1.0, 0.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::NonUnitAxis { .. }));
    }

    #[test]
    fn larmor_examples() {
        let u = UnitSystem::default();
        assert_eq!(larmor_frequencies(5.0, 0.0, 0.0, 1e4, &u), (0.0, 0.0));
        let (a, b) = larmor_frequencies(9e7, 1e-6, 0.0, 1e4, &u);
        assert_eq!(a, b);
        assert!((a - 90.0 / PI).abs() < 1e-12);
        let plus = larmor_frequencies(9e7, 1e-6, 1e-22, 1e4, &u);
        let minus = larmor_frequencies(9e7, 1e-6, 1e-22, -1e4, &u);
        assert_eq!(plus.0, minus.1);
        assert_eq!(plus.1, minus.0);
        assert!(plus.0 > plus.1);
    }

    #[test]
    fn ramsey_phase_examples() {
        let u = UnitSystem::default();
        let c = PhysicalConstants::default();
        let mut cfg = RamseyConfig {
            b_field: 1e-6,
            e_field: 1e4,
            free_time: 0.0,
            visibility: 1.0,
        };
        assert_eq!(ramsey_phase(&cfg, 1e-22, &u, &c).unwrap(), 0.0);
        cfg.free_time = 100.0;
        let one = ramsey_phase(&cfg, 1e-22, &u, &c).unwrap();
        cfg.free_time = 200.0;
        let two = ramsey_phase(&cfg, 1e-22, &u, &c).unwrap();
        assert!((two / one - 2.0).abs() < 1e-15);

        // φ(+E) − φ(−E) = 2·(d E κ g/π)·2π T
        cfg.free_time = 100.0;
        let plus = ramsey_phase(&cfg, 1e-22, &u, &c).unwrap();
        cfg.e_field = -1e4;
        let minus = ramsey_phase(&cfg, 1e-22, &u, &c).unwrap();
        let expected = 2.0 * (1e-22 * 1e4 * u.coupling() / PI) * 2.0 * PI * 100.0;
        assert!(((plus - minus) / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn up_probability_examples() {
        assert_eq!(up_probability(0.0, 1.0).unwrap(), 1.0);
        assert!(up_probability(PI, 1.0).unwrap().abs() < 1e-16);
        for v in [0.0, 0.3, 1.0] {
            assert!((up_probability(PI / 2.0, v).unwrap() - 0.5).abs() < 1e-16);
        }
        assert!(up_probability(0.0, 1.5).is_err());
    }

    #[test]
    fn asymmetry_examples() {
        assert_eq!(asymmetry(500, 500).unwrap(), 0.0);
        assert_eq!(asymmetry(1000, 0).unwrap(), 1.0);
        assert_eq!(asymmetry(750, 250).unwrap(), 0.5);
        assert_eq!(asymmetry(0, 0), Err(Error::ZeroCounts));
    }

    #[test]
    fn explicit_ramsey_matches_fringe_at_fixed_points() {
        for phi in [0.0, PI / 3.0, PI / 2.0, PI, 4.0, 1.0e4 + 0.1] {
            let p = ramsey_sequence_probability(phi).unwrap();
            assert!((p - up_probability(phi, 1.0).unwrap()).abs() < 1e-10, "phi = {phi}");
        }
    }

    fn unit_axis() -> impl Strategy<Value = [f64; 3]> {
        (-1.0f64..1.0, 0.0f64..(2.0 * PI)).prop_map(|(z, az)| {
            let r = (1.0 - z * z).sqrt();
            [r * az.cos(), r * az.sin(), z]
        })
    }

    proptest! {
        #[test]
        fn rotations_preserve_norm(axis in unit_axis(), a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let mut s = Spinor::new(Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.9)).unwrap();
            for _ in 0..20 {
                s = rotate(&s, axis, a).unwrap();
                s = rotate(&s, Z_AXIS, b).unwrap();
                prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn same_axis_rotations_compose(a in -10.0f64..10.0, b in -10.0f64..10.0,
                                       ur in -1.0f64..1.0, ui in -1.0f64..1.0, dr in -1.0f64..1.0) {
            prop_assume!(ur.abs() + ui.abs() + dr.abs() > 1e-3);
            let s = Spinor::new(Complex64::new(ur, ui), Complex64::new(dr, 0.5)).unwrap();
            let stepwise = rotate(&rotate(&s, Y_AXIS, a).unwrap(), Y_AXIS, b).unwrap();
            let direct = rotate(&s, Y_AXIS, a + b).unwrap();
            prop_assert!((stepwise.up_amplitude() - direct.up_amplitude()).norm() < 1e-12);
            prop_assert!((stepwise.down_amplitude() - direct.down_amplitude()).norm() < 1e-12);
        }

        #[test]
        fn asymmetry_of_expected_counts(n in 1.0f64..1e9, p in 0.0f64..=1.0) {
            let a = asymmetry_from_rates(n * p, n * (1.0 - p)).unwrap();
            prop_assert!((a - (2.0 * p - 1.0)).abs() < 1e-12);
        }
    }
}
