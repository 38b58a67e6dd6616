//! Monte Carlo contrast between the quantum prediction and the "definite
//! value" ensemble reading of the dipole uncertainty.
//!
//! * quantum: every neutron flips with the single probability
//!   [`flip_probability`], which vanishes identically when `d_n = 0`.
//! * stochastic: every neutron carries its own dipole `d ~ N(d_n, Δ)` and
//!   flips with `sin²(d ξ)`.
//!
//! Each trial draws from its own substream keyed by `(seed, trial)`, so the
//! flip count is the same at any thread count.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Result};
use crate::streams::{domain, Substream};
use crate::weak_measurement::{flip_probability, DipoleState};

/// Trials per parallel work item. Fixed so chunking never depends on the pool.
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Quantum,
    Stochastic,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Quantum => "quantum",
            Model::Stochastic => "stochastic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub model: Model,
    pub trials: u64,
    pub flips: u64,
    pub seed: u64,
    pub xi: f64,
    pub state: DipoleState,
}

impl EnsembleRun {
    pub fn fraction(&self) -> f64 {
        self.flips as f64 / self.trials as f64
    }

    /// Binomial standard error of the observed fraction.
    pub fn standard_error(&self) -> f64 {
        let p = self.fraction();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

fn check_inputs(state: &DipoleState, xi: f64, trials: u64) -> Result<()> {
    state.validate()?;
    ensure_finite("xi", xi)?;
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    Ok(())
}

fn count_parallel<F>(trials: u64, per_trial: F) -> u64
where
    F: Fn(u64) -> bool + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(trials);
            (start..end).filter(|&i| per_trial(i)).count() as u64
        })
        .sum()
}

/// Each trial flips with the single quantum probability.
pub fn simulate_quantum(state: &DipoleState, xi: f64, trials: u64, seed: u64) -> Result<EnsembleRun> {
    check_inputs(state, xi, trials)?;
    let p = flip_probability(state, xi);
    let flips = if p == 0.0 {
        // u < 0 never holds; skip the draws.
        0
    } else {
        count_parallel(trials, |i| {
            Substream::new(seed, domain::QUANTUM_TRIALS, i).uniform() < p
        })
    };
    Ok(EnsembleRun {
        model: Model::Quantum,
        trials,
        flips,
        seed,
        xi,
        state: *state,
    })
}

/// Each trial samples a definite dipole `d ~ N(d_n, Δ)` and flips with `sin²(d ξ)`.
pub fn simulate_stochastic(
    state: &DipoleState,
    xi: f64,
    trials: u64,
    seed: u64,
) -> Result<EnsembleRun> {
    check_inputs(state, xi, trials)?;
    let (mean, sd) = (state.d_n, state.delta);
    let flips = count_parallel(trials, |i| {
        let mut rng = Substream::new(seed, domain::STOCHASTIC_TRIALS, i);
        let z: f64 = StandardNormal.sample(&mut rng);
        let d = mean + sd * z;
        let s = (d * xi).sin();
        rng.uniform() < s * s
    });
    Ok(EnsembleRun {
        model: Model::Stochastic,
        trials,
        flips,
        seed,
        xi,
        state: *state,
    })
}

/// Gaussian average of `sin²(d ξ)`: `½(1 − cos(2 d_n ξ)·exp(−2 ξ²Δ²))`.
pub fn expected_stochastic_fraction(state: &DipoleState, xi: f64) -> f64 {
    let spread = xi * state.delta;
    // 1 − cos(2a)e^{−2b²} written to keep precision when both terms are tiny
    let a = state.d_n * xi;
    let damp = (-2.0 * spread * spread).exp_m1();
    let s = a.sin();
    // cos 2a = 1 − 2 sin²a
    0.5 * (2.0 * s * s - damp * (1.0 - 2.0 * s * s))
}

/// Two-proportion z statistic (pooled) between two runs.
pub fn two_proportion_z(a: &EnsembleRun, b: &EnsembleRun) -> f64 {
    let (n1, n2) = (a.trials as f64, b.trials as f64);
    let pooled = (a.flips + b.flips) as f64 / (n1 + n2);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (a.fraction() - b.fraction()) / se
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn deterministic_without_spread() {
        let s = DipoleState::new(0.0, 0.0).unwrap();
        assert_eq!(simulate_stochastic(&s, 1e13, 10_000, 3).unwrap().flips, 0);
        assert_eq!(simulate_quantum(&s, 1e13, 10_000, 3).unwrap().flips, 0);
    }

    #[test]
    fn cp_null_quantum_never_flips() {
        let s = DipoleState::new(0.0, 1e-15).unwrap();
        let run = simulate_quantum(&s, 1e15, 1_000_000, 11).unwrap();
        assert_eq!(run.flips, 0);
    }

    #[test]
    fn certain_flip() {
        let s = DipoleState::new(PI / 2.0, 0.0).unwrap();
        assert_eq!(flip_probability(&s, 1.0), 1.0);
        let run = simulate_quantum(&s, 1.0, 10_000, 5).unwrap();
        assert_eq!(run.flips, 10_000);
    }

    #[test]
    fn zero_trials_rejected() {
        let s = DipoleState::new(0.0, 1.0).unwrap();
        assert!(simulate_quantum(&s, 1.0, 0, 0).is_err());
        assert!(simulate_stochastic(&s, 1.0, 0, 0).is_err());
    }

    #[test]
    fn expected_fraction_examples() {
        // ½(1 − e^(−0.0002)) = 9.9990000666633334667e−5
        let s = DipoleState::new(0.0, 0.01).unwrap();
        let f = expected_stochastic_fraction(&s, 1.0);
        assert!((f / 9.999_000_066_663_333e-5 - 1.0).abs() < 1e-13);

        let point = DipoleState::new(0.4, 0.0).unwrap();
        assert!((expected_stochastic_fraction(&point, 2.0) - (0.8f64).sin().powi(2)).abs() < 1e-15);

        let wide = DipoleState::new(0.3, 50.0).unwrap();
        assert_eq!(expected_stochastic_fraction(&wide, 1.0), 0.5);
    }

    #[test]
    fn expected_fraction_matches_gauss_average() {
        // Independent route: E[sin²(dξ)] by dense midpoint sum over ±12σ.
        for (a, b) in [(0.0, 0.3), (0.7, 0.2), (1.3, 1.1)] {
            let n = 20_000;
            let h = 24.0 / n as f64;
            let avg: f64 = (0..n)
                .map(|k| {
                    let z = -12.0 + h * (k as f64 + 0.5);
                    (-0.5 * z * z).exp() / (2.0 * PI).sqrt() * (a + b * z).sin().powi(2) * h
                })
                .sum();
            let f = expected_stochastic_fraction(&DipoleState::new(a, b).unwrap(), 1.0);
            assert!((avg - f).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn seeds_reproduce() {
        let s = DipoleState::new(0.0, 0.1).unwrap();
        let a = simulate_stochastic(&s, 1.0, 200_000, 42).unwrap();
        let b = simulate_stochastic(&s, 1.0, 200_000, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_stochastic(&s, 1.0, 200_000, 43).unwrap();
        assert_ne!(a.flips, c.flips);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let s = DipoleState::new(0.2, 0.3).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    (
                        simulate_stochastic(&s, 1.0, 300_000, 9).unwrap(),
                        simulate_quantum(&s, 1.0, 300_000, 9).unwrap(),
                    )
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn stochastic_mean_converges_over_seeds() {
        let s = DipoleState::new(0.1, 0.2).unwrap();
        let p = expected_stochastic_fraction(&s, 1.0);
        let trials = 20_000;
        let bound = 5.0 * (p * (1.0 - p) / trials as f64).sqrt();
        for seed in 0..100 {
            let run = simulate_stochastic(&s, 1.0, trials, seed).unwrap();
            assert!((run.fraction() - p).abs() <= bound, "seed {seed}");
        }
    }
}
