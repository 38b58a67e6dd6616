//! Spin-flip probability of a neutron whose scalar dipole is spread over a
//! Gaussian of eigenvalues.
//!
//! The neutron starts spin-up with dipole wavefunction weight `w(d)`, a
//! normalised Gaussian of mean `d_n` and standard deviation `Δ`. An adiabatic
//! field pulse with kick parameter ξ rotates each dipole eigencomponent by
//! `d·ξ`, so the amplitude to end spin-down is `∫ w(d) sin(d ξ) dd` and
//!
//! ```text
//! P = sin²(d_n ξ) · exp(−ξ² Δ²)
//! ```
//!
//! Δ here is the standard deviation of `w` itself. A Gaussian *amplitude*
//! `exp(−(d−d_n)²/2Δ²)` would have a density of width Δ/√2 and give the
//! exponent −ξ²Δ²/2 instead; this module keeps the closed form above as the
//! normative result and chooses the weight convention to match it.
//!
//! [`flip_probability`] is the closed form; [`flip_probability_quadrature`]
//! evaluates the amplitude integral numerically and serves as its oracle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Expectation value and quantum uncertainty of the scalar dipole, in e·cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleState {
    pub d_n: f64,
    pub delta: f64,
}

impl DipoleState {
    pub fn new(d_n: f64, delta: f64) -> Result<Self> {
        let s = Self { d_n, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("d_n", self.d_n)?;
        ensure_finite("delta", self.delta)?;
        if self.delta < 0.0 {
            return Err(invalid("delta", "must be non-negative"));
        }
        Ok(())
    }

    /// Same state with both parameters multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            d_n: self.d_n * s,
            delta: self.delta * s,
        }
    }
}

/// Closed-form flip probability `sin²(d_n ξ)·exp(−ξ²Δ²)`.
///
/// Exactly zero whenever `d_n = 0`, whatever Δ.
pub fn flip_probability(state: &DipoleState, xi: f64) -> f64 {
    debug_assert!(xi.is_finite());
    let s = (state.d_n * xi).sin();
    let spread = xi * state.delta;
    s * s * (-spread * spread).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Gauss–Hermite nodes for the Gaussian weight.
    GaussHermite,
    /// Uniform trapezoid over `mean ± halfwidth·Δ`.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub node_count: usize,
    /// Half-width of the trapezoid window in units of Δ.
    pub integration_halfwidth: f64,
    pub rule: QuadratureRule,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            node_count: 200,
            integration_halfwidth: 12.0,
            rule: QuadratureRule::GaussHermite,
        }
    }
}

/// Nodes the amplitude integral needs before the oscillation is resolved.
pub fn required_nodes(xi_delta: f64) -> usize {
    (10.0 * (1.0 + xi_delta.abs())).ceil() as usize
}

/// Largest Gauss–Hermite rule this module builds; the orthonormal
/// recurrence overflows not far beyond it.
pub const MAX_HERMITE_NODES: usize = 600;

/// Gauss–Hermite rule for the weight `exp(−x²)`, nodes in ascending order.
///
/// Roots are bracketed by Sturm bisection on the Jacobi matrix, then
/// polished by Newton on the orthonormal recurrence. Nodes are exactly
/// antisymmetric.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("node_count", "must be at least 2"));
        }
        if n > MAX_HERMITE_NODES {
            return Err(invalid(
                "node_count",
                format!("Gauss-Hermite supports at most {MAX_HERMITE_NODES} nodes; use the trapezoid rule"),
            ));
        }
        const PI_M4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
        let nf = n as f64;
        // Orthonormal recurrence: returns (p_n(z), p_n'(z)).
        let evaluate = |z: f64| {
            let mut p1 = PI_M4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            (p1, (2.0 * nf).sqrt() * p2)
        };
        // Sturm count of Jacobi-matrix eigenvalues below z; the matrix has a
        // zero diagonal and off-diagonal entries sqrt(k/2).
        let count_below = |z: f64| {
            let mut d = -z;
            let mut count = usize::from(d < 0.0);
            for k in 1..n {
                let denom = if d == 0.0 { f64::MIN_POSITIVE } else { d };
                d = -z - 0.5 * k as f64 / denom;
                count += usize::from(d < 0.0);
            }
            count
        };
        let bound = (2.0 * (nf - 1.0)).sqrt() + 1.0;
        let half = n / 2;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        // Positive roots occupy ascending indices n - half .. n.
        for i in (n - half)..n {
            let (mut lo, mut hi) = (0.0, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if count_below(mid) > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut z = 0.5 * (lo + hi);
            for _ in 0..2 {
                let (p, dp) = evaluate(z);
                let step = p / dp;
                if step.is_finite() && step.abs() < hi - lo + 1e-12 {
                    z -= step;
                }
            }
            if !z.is_finite() {
                return Err(Error::NonConvergent(format!(
                    "Gauss-Hermite root {i} of {n} did not converge"
                )));
            }
            let derivative = evaluate(z).1;
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (derivative * derivative);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            let derivative = evaluate(0.0).1;
            x[half] = 0.0;
            w[half] = 2.0 / (derivative * derivative);
        }
        Ok(Self {
            nodes: x,
            weights: w,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `E[cos(b·Z)]` for standard normal Z, by the requested rule.
///
/// The node sets are symmetric, so each pair `(x, −x)` contributes
/// `sin(a + b x) + sin(a − b x) = 2 sin a cos(b x)` to the amplitude and the
/// odd part cancels identically.
fn gaussian_cosine_moment(b: f64, spec: &QuadratureSpec) -> Result<f64> {
    match spec.rule {
        QuadratureRule::GaussHermite => {
            let rule = GaussHermite::new(spec.node_count)?;
            // Z = √2·x turns exp(−x²)/√π into the standard normal density.
            let scale = std::f64::consts::SQRT_2 * b;
            let sum: f64 = rule
                .nodes()
                .iter()
                .zip(rule.weights())
                .map(|(x, w)| w * (scale * x).cos())
                .sum();
            Ok(sum / PI.sqrt())
        }
        QuadratureRule::Trapezoid => {
            let h = spec.integration_halfwidth;
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid("integration_halfwidth", "must be positive"));
            }
            let n = spec.node_count;
            let step = 2.0 * h / (n - 1) as f64;
            let norm = 1.0 / (2.0 * PI).sqrt();
            let sum: f64 = (0..n)
                .map(|k| {
                    let z = -h + step * k as f64;
                    let end = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                    end * norm * (-0.5 * z * z).exp() * (b * z).cos()
                })
                .sum();
            Ok(sum * step)
        }
    }
}

/// Spin-down amplitude `∫ w(d) sin(d ξ) dd` by numerical quadrature.
pub fn flip_amplitude_quadrature(
    state: &DipoleState,
    xi: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    state.validate()?;
    ensure_finite("xi", xi)?;
    if spec.node_count < 2 {
        return Err(invalid("node_count", "must be at least 2"));
    }
    let base = (state.d_n * xi).sin();
    if state.delta == 0.0 {
        return Ok(base);
    }
    let xi_delta = (xi * state.delta).abs();
    let required = required_nodes(xi_delta);
    if spec.node_count < required {
        return Err(Error::InsufficientNodes {
            nodes: spec.node_count,
            required,
            xi_delta,
        });
    }
    Ok(base * gaussian_cosine_moment(xi * state.delta, spec)?)
}

/// `|∫ w(d) sin(d ξ) dd|²`: the quadrature oracle for [`flip_probability`].
pub fn flip_probability_quadrature(
    state: &DipoleState,
    xi: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let a = flip_amplitude_quadrature(state, xi, spec)?;
    Ok(a * a)
}

/// Vector dipole expectation from the scalar one via the projection
/// `⟨D_i⟩ = ⟨𝒟⟩ / (j(j+1)) · ⟨J_i⟩`.
pub fn wigner_eckart_dipole(scalar_ev: f64, spin_ev: [f64; 3], j: f64) -> Result<[f64; 3]> {
    ensure_finite("scalar_ev", scalar_ev)?;
    ensure_finite("j", j)?;
    for c in spin_ev {
        ensure_finite("spin_ev", c)?;
    }
    let twice = 2.0 * j;
    if j <= 0.0 || twice.fract() != 0.0 {
        return Err(invalid("j", format!("{j} is not a positive half-integer")));
    }
    let factor = scalar_ev / (j * (j + 1.0));
    Ok(spin_ev.map(|c| factor * c))
}
