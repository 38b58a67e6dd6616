//! Likelihood inference on flip counts and on comagnetometer campaigns.
//!
//! Joint `(d_n, Δ)` estimation uses the binomial likelihood of flip counts
//! recorded at several kick strengths ξ. Since `sin²(d_n ξ)` and
//! `exp(−ξ²Δ²)` depend on ξ differently, a design with two or more distinct
//! ξ separates the two parameters.
//!
//! The optimiser works in the dimensionless coordinates `u = d_n·ξ_max`,
//! `v = Δ·ξ_max`: a log-spaced coarse grid over the search box followed by
//! coordinate-wise golden-section refinement. Everything is evaluated in a
//! fixed order, so results are bitwise reproducible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::comagnetometer::{extract_dn_pair, CycleRecord};
use crate::ensemble::simulate_quantum;
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::quantities::UnitSystem;
use crate::streams::{derive_seed, domain};
use crate::weak_measurement::{flip_probability, DipoleState};

/// Probability clamp for the log-likelihood.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipPoint {
    pub xi: f64,
    pub trials: u64,
    pub flips: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipDataset {
    points: Vec<FlipPoint>,
}

impl FlipDataset {
    pub fn new(points: Vec<FlipPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDataset("no points".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.xi.is_finite() {
                return Err(Error::InvalidDataset(format!("point {i}: xi is not finite")));
            }
            if p.flips > p.trials {
                return Err(Error::InvalidDataset(format!(
                    "point {i}: flips {} exceed trials {}",
                    p.flips, p.trials
                )));
            }
        }
        Ok(Self { points })
    }

    /// Quantum-model data: `trials` neutrons at every ξ, one derived seed per point.
    pub fn simulate(state: &DipoleState, xis: &[f64], trials: u64, seed: u64) -> Result<Self> {
        let points = xis
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let run = simulate_quantum(state, xi, trials, derive_seed(seed, domain::DATASET_POINTS, i as u64))?;
                Ok(FlipPoint {
                    xi,
                    trials,
                    flips: run.flips,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[FlipPoint] {
        &self.points
    }

    /// Number of distinct non-zero |ξ| values.
    pub fn distinct_xi(&self) -> usize {
        let mut xs: Vec<f64> = self
            .points
            .iter()
            .map(|p| p.xi.abs())
            .filter(|&x| x > 0.0)
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    }

    pub fn max_abs_xi(&self) -> f64 {
        self.points.iter().map(|p| p.xi.abs()).fold(0.0, f64::max)
    }

    pub fn total_trials(&self) -> u64 {
        self.points.iter().map(|p| p.trials).sum()
    }

    /// Every point has either no flips or only flips.
    pub fn is_saturated(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.flips == 0 || p.flips == p.trials)
    }

    /// Same counts with every ξ divided by `s`.
    pub fn rescaled_xi(&self, s: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| FlipPoint { xi: p.xi / s, ..*p })
                .collect(),
        }
    }
}

fn point_log_likelihood(p: f64, trials: u64, flips: u64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let ln_p = p.max(PROBABILITY_FLOOR).ln();
    let ln_q = if p < 0.5 {
        (-p).ln_1p()
    } else {
        (1.0 - p).max(PROBABILITY_FLOOR).ln()
    };
    let k = flips as f64;
    let miss = (trials - flips) as f64;
    let mut ll = 0.0;
    if flips > 0 {
        ll += k * ln_p;
    }
    if trials > flips {
        ll += miss * ln_q;
    }
    ll
}

/// `Σ k ln p + (n − k) ln(1 − p)` with `p = flip_probability(d_n, Δ, ξ)`.
pub fn log_likelihood(d_n: f64, delta: f64, dataset: &FlipDataset) -> f64 {
    let state = DipoleState { d_n, delta };
    dataset
        .points
        .iter()
        .map(|pt| point_log_likelihood(flip_probability(&state, pt.xi), pt.trials, pt.flips))
        .sum()
}

/// The likelihood in scaled coordinates `u = d_n·s`, `v = Δ·s`.
struct ScaledLikelihood<'a> {
    dataset: &'a FlipDataset,
    ratios: Vec<f64>,
    scale: f64,
}

impl<'a> ScaledLikelihood<'a> {
    fn new(dataset: &'a FlipDataset) -> Result<Self> {
        let scale = dataset.max_abs_xi();
        if scale == 0.0 {
            return Err(Error::InvalidDataset("all xi are zero".into()));
        }
        Ok(Self {
            dataset,
            ratios: dataset.points.iter().map(|p| p.xi / scale).collect(),
            scale,
        })
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        let state = DipoleState { d_n: u, delta: v };
        self.dataset
            .points
            .iter()
            .zip(&self.ratios)
            .map(|(pt, &r)| point_log_likelihood(flip_probability(&state, r), pt.trials, pt.flips))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    /// `(low, high)` for d_n in e·cm.
    pub dn: (f64, f64),
    /// `(low, high)` for Δ in e·cm; low ≥ 0.
    pub delta: (f64, f64),
    /// Coarse grid points per axis.
    pub grid_points: usize,
    /// Refinement stops when steps fall below `resolution × box width`.
    pub resolution: f64,
    /// Confidence level of the reported two-sided profile intervals.
    pub cl: f64,
}

impl SearchBox {
    /// `d_n ∈ [0, (π/2)/ξ_max]`, `Δ ∈ [0, 3/ξ_max]`.
    pub fn for_dataset(dataset: &FlipDataset) -> Self {
        let xi = dataset.max_abs_xi();
        let xi = if xi > 0.0 { xi } else { 1.0 };
        Self {
            dn: (0.0, std::f64::consts::FRAC_PI_2 / xi),
            delta: (0.0, 3.0 / xi),
            grid_points: 41,
            resolution: 1e-9,
            cl: 0.682_689_492_137_085_9,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("dn bounds", self.dn), ("delta bounds", self.delta)] {
            ensure_finite(name, lo)?;
            ensure_finite(name, hi)?;
            if hi <= lo {
                return Err(invalid(name, "high must exceed low"));
            }
        }
        if self.delta.0 < 0.0 {
            return Err(invalid("delta bounds", "low must be non-negative"));
        }
        if self.grid_points < 2 {
            return Err(invalid("grid_points", "must be at least 2"));
        }
        if !(self.resolution > 0.0 && self.resolution < 1.0) {
            return Err(invalid("resolution", "must lie in (0, 1)"));
        }
        if !(self.cl > 0.0 && self.cl < 1.0) {
            return Err(invalid("cl", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub dn_hat: f64,
    pub delta_hat: f64,
    pub max_log_likelihood: f64,
    pub cl: f64,
    pub dn_interval: (f64, f64),
    pub delta_interval: (f64, f64),
    pub converged: bool,
    pub dn_at_boundary: bool,
    pub delta_at_boundary: bool,
    pub diagnostic: Option<String>,
}

/// Coarse-grid axis: log-spaced when the range is positive, with an exact 0
/// prepended when the range starts at 0.
fn grid_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let geometric = |a: f64, b: f64, m: usize| -> Vec<f64> {
        if m == 1 {
            return vec![b];
        }
        let (la, lb) = (a.ln(), b.ln());
        (0..m)
            .map(|i| {
                if i == m - 1 {
                    b
                } else {
                    (la + (lb - la) * i as f64 / (m - 1) as f64).exp()
                }
            })
            .collect()
    };
    if lo > 0.0 {
        geometric(lo, hi, n)
    } else if lo == 0.0 {
        let mut axis = vec![0.0];
        axis.extend(geometric(hi * 1e-4, hi, n - 1));
        axis
    } else {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation on `[a, b]`; the endpoints are also
/// candidates so boundary maxima are returned exactly.
fn golden_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (fa, fb) = (f(a), f(b));
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for cand in [(a, fa), (b, fb)] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

/// Grid scan plus golden refinement of `f` over `[lo, hi]`.
fn maximize_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize, tol: f64) -> (f64, f64) {
    let axis = grid_axis(lo, hi, points);
    let values: Vec<f64> = axis.iter().map(|&x| f(x)).collect();
    let best = argmax(&values);
    let left = axis[best.saturating_sub(1)];
    let right = axis[(best + 1).min(axis.len() - 1)];
    let refined = golden_max(&f, left, right, tol);
    if refined.1 >= values[best] {
        refined
    } else {
        (axis[best], values[best])
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct Optimum {
    u: f64,
    v: f64,
    value: f64,
    converged: bool,
}

const PROFILE_POINTS: usize = 24;
const MAX_SWEEPS: usize = 2000;

/// Box in scaled coordinates.
#[derive(Clone, Copy)]
struct ScaledBox {
    u: (f64, f64),
    v: (f64, f64),
    grid: usize,
    res: f64,
}

impl ScaledBox {
    fn from_search(search: &SearchBox, scale: f64) -> Self {
        Self {
            u: (search.dn.0 * scale, search.dn.1 * scale),
            v: (search.delta.0 * scale, search.delta.1 * scale),
            grid: search.grid_points,
            res: search.resolution,
        }
    }

    fn tol_u(&self) -> f64 {
        self.res * (self.u.1 - self.u.0)
    }

    fn tol_v(&self) -> f64 {
        self.res * (self.v.1 - self.v.0)
    }
}

fn maximize_2d(lik: &ScaledLikelihood<'_>, b: &ScaledBox) -> Optimum {
    let us = grid_axis(b.u.0, b.u.1, b.grid);
    let vs = grid_axis(b.v.0, b.v.1, b.grid);
    let values: Vec<f64> = (0..us.len() * vs.len())
        .into_par_iter()
        .map(|k| lik.eval(us[k / vs.len()], vs[k % vs.len()]))
        .collect();
    let k = argmax(&values);
    let (iu, iv) = (k / vs.len(), k % vs.len());
    let (mut u, mut v, mut value) = (us[iu], vs[iv], values[k]);

    let spacing = |axis: &[f64], i: usize| {
        let l = axis[i.saturating_sub(1)];
        let r = axis[(i + 1).min(axis.len() - 1)];
        (r - l).max(f64::MIN_POSITIVE)
    };
    let mut wu = spacing(&us, iu);
    let mut wv = spacing(&vs, iv);
    let (tol_u, tol_v) = (b.tol_u(), b.tol_v());
    let mut converged = false;

    for _ in 0..MAX_SWEEPS {
        let (nu, fu) = golden_max(
            |x| lik.eval(x, v),
            (u - wu).max(b.u.0),
            (u + wu).min(b.u.1),
            0.1 * tol_u,
        );
        let step_u = if fu > value {
            let s = (nu - u).abs();
            u = nu;
            value = fu;
            s
        } else {
            0.0
        };
        let (nv, fv) = golden_max(
            |y| lik.eval(u, y),
            (v - wv).max(b.v.0),
            (v + wv).min(b.v.1),
            0.1 * tol_v,
        );
        let step_v = if fv > value {
            let s = (nv - v).abs();
            v = nv;
            value = fv;
            s
        } else {
            0.0
        };
        if step_u < tol_u && step_v < tol_v {
            converged = true;
            break;
        }
        wu = (4.0 * step_u).max(2.0 * tol_u);
        wv = (4.0 * step_v).max(2.0 * tol_v);
    }
    Optimum {
        u,
        v,
        value,
        converged,
    }
}

/// `max_v ℓ(u, v)` over `[v.0, v.1]`.
fn profile_over_v(lik: &ScaledLikelihood<'_>, u: f64, v: (f64, f64), tol: f64) -> f64 {
    maximize_1d(|y| lik.eval(u, y), v.0, v.1, PROFILE_POINTS, tol).1
}

/// `max_u ℓ(u, v)` over `[u.0, u.1]`.
fn profile_over_u(lik: &ScaledLikelihood<'_>, v: f64, u: (f64, f64), tol: f64) -> f64 {
    maximize_1d(|x| lik.eval(x, v), u.0, u.1, PROFILE_POINTS, tol).1
}

/// Profile log-likelihood of `d_n`, maximised over Δ in `delta_range`.
pub fn profile_log_likelihood_dn(dataset: &FlipDataset, d_n: f64, delta_range: (f64, f64)) -> Result<f64> {
    let lik = ScaledLikelihood::new(dataset)?;
    let s = lik.scale;
    let v = (delta_range.0 * s, delta_range.1 * s);
    Ok(profile_over_v(&lik, d_n * s, v, 1e-10 * (v.1 - v.0)))
}

/// Profile log-likelihood of Δ, maximised over `d_n` in `dn_range`.
pub fn profile_log_likelihood_delta(dataset: &FlipDataset, delta: f64, dn_range: (f64, f64)) -> Result<f64> {
    let lik = ScaledLikelihood::new(dataset)?;
    let s = lik.scale;
    let u = (dn_range.0 * s, dn_range.1 * s);
    Ok(profile_over_u(&lik, delta * s, u, 1e-10 * (u.1 - u.0)))
}

/// Two-sided Wilks threshold on `2Δℓ` for one parameter at confidence `cl`.
pub fn two_sided_threshold(cl: f64) -> f64 {
    let z = standard_normal_quantile(0.5 * (1.0 + cl));
    z * z
}

/// One-sided threshold: `(Φ⁻¹(cl))²`, zero at `cl = 0.5`.
pub fn one_sided_threshold(cl: f64) -> f64 {
    let z = standard_normal_quantile(cl).max(0.0);
    z * z
}

fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// First point beyond `start` (towards `limit`) where `excess` turns
/// positive, located by geometric stepping and bisection. `None` if the
/// excess never turns positive before `limit`.
fn first_crossing<F: Fn(f64) -> f64>(excess: F, start: f64, limit: f64, tol: f64) -> Option<f64> {
    let span = limit - start;
    if span == 0.0 {
        return None;
    }
    let dir = span.signum();
    let mut inner = start;
    let mut step = (span.abs() * 1e-7).max(tol);
    let mut outer;
    loop {
        outer = start + dir * step;
        if dir * (outer - limit) >= 0.0 {
            outer = limit;
        }
        if excess(outer) > 0.0 {
            break;
        }
        if outer == limit {
            return None;
        }
        inner = outer;
        step *= 2.0;
    }
    while (outer - inner).abs() > tol {
        let mid = 0.5 * (inner + outer);
        if excess(mid) > 0.0 {
            outer = mid;
        } else {
            inner = mid;
        }
    }
    Some(outer)
}

/// Maximum-likelihood estimate of `(d_n, Δ)` with two-sided profile intervals.
pub fn fit(dataset: &FlipDataset, search: &SearchBox) -> Result<FitResult> {
    search.validate()?;
    if dataset.distinct_xi() < 2 {
        return Err(Error::InvalidDataset(
            "joint (d_n, delta) fit needs at least two distinct non-zero xi values".into(),
        ));
    }
    let lik = ScaledLikelihood::new(dataset)?;
    let s = lik.scale;
    let b = ScaledBox::from_search(search, s);
    let opt = maximize_2d(&lik, &b);

    let q = two_sided_threshold(search.cl);
    let (tol_u, tol_v) = (b.tol_u(), b.tol_v());
    let prof_u = |x: f64| 2.0 * (opt.value - profile_over_v(&lik, x, b.v, 0.1 * tol_v)) - q;
    let prof_v = |y: f64| 2.0 * (opt.value - profile_over_u(&lik, y, b.u, 0.1 * tol_u)) - q;
    let u_lo = first_crossing(prof_u, opt.u, b.u.0, tol_u).unwrap_or(b.u.0);
    let u_hi = first_crossing(prof_u, opt.u, b.u.1, tol_u).unwrap_or(b.u.1);
    let v_lo = first_crossing(prof_v, opt.v, b.v.0, tol_v).unwrap_or(b.v.0);
    let v_hi = first_crossing(prof_v, opt.v, b.v.1, tol_v).unwrap_or(b.v.1);

    let saturated = dataset.is_saturated();
    let mut diagnostic = None;
    if saturated {
        diagnostic = Some(
            "likelihood is flat: every point has zero or full flips, so the parameters are not jointly identified"
                .to_string(),
        );
    } else if !opt.converged {
        diagnostic = Some(format!(
            "refinement did not reach resolution {} within {MAX_SWEEPS} sweeps",
            search.resolution
        ));
    }
    let near = |x: f64, (lo, hi): (f64, f64), tol: f64| (x - lo).abs() <= tol || (hi - x).abs() <= tol;

    Ok(FitResult {
        dn_hat: opt.u / s,
        delta_hat: opt.v / s,
        max_log_likelihood: opt.value,
        cl: search.cl,
        dn_interval: (u_lo.min(opt.u) / s, u_hi.max(opt.u) / s),
        delta_interval: (v_lo.min(opt.v) / s, v_hi.max(opt.v) / s),
        converged: opt.converged && !saturated,
        dn_at_boundary: near(opt.u, b.u, tol_u),
        delta_at_boundary: near(opt.v, b.v, tol_v),
        diagnostic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub cl: f64,
    /// Range of Δ the profile maximises over, e·cm.
    pub delta: (f64, f64),
    /// Largest d_n searched; defaults to `(π/2)/ξ_max`.
    pub dn_max: Option<f64>,
    pub grid_points: usize,
    pub resolution: f64,
}

impl BoundSpec {
    pub fn new(cl: f64, delta: (f64, f64)) -> Self {
        Self {
            cl,
            delta,
            dn_max: None,
            grid_points: 41,
            resolution: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub bound: f64,
    pub cl: f64,
    pub dn_hat: f64,
    pub delta_hat: f64,
    pub max_log_likelihood: f64,
    pub threshold: f64,
}

/// One-sided profile-likelihood upper bound on `d_n`: the smallest
/// `d* ≥ d̂` with `2[ℓ̂ − max_Δ ℓ(d*, Δ)]` above `(Φ⁻¹(cl))²`.
pub fn upper_bound(dataset: &FlipDataset, spec: &BoundSpec) -> Result<UpperBound> {
    if !(0.5..1.0).contains(&spec.cl) {
        return Err(invalid("cl", "must lie in [0.5, 1)"));
    }
    let lik = ScaledLikelihood::new(dataset)?;
    let s = lik.scale;
    let dn_max = spec
        .dn_max
        .unwrap_or(std::f64::consts::FRAC_PI_2 / dataset.max_abs_xi());
    let search = SearchBox {
        dn: (0.0, dn_max),
        delta: spec.delta,
        grid_points: spec.grid_points,
        resolution: spec.resolution,
        cl: spec.cl,
    };
    search.validate()?;
    let b = ScaledBox::from_search(&search, s);
    let opt = maximize_2d(&lik, &b);
    let q = one_sided_threshold(spec.cl);
    let excess = |x: f64| 2.0 * (opt.value - profile_over_v(&lik, x, b.v, 0.1 * b.tol_v())) - q;
    let crossing = first_crossing(excess, opt.u, b.u.1, b.tol_u()).ok_or_else(|| {
        Error::NonConvergent(format!(
            "profile likelihood stays below the CL {} threshold up to d_n = {dn_max}",
            spec.cl
        ))
    })?;
    Ok(UpperBound {
        bound: crossing / s,
        cl: spec.cl,
        dn_hat: opt.u / s,
        delta_hat: opt.v / s,
        max_log_likelihood: opt.value,
        threshold: q,
    })
}

/// What the campaign estimator needs to know about the readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub e_field_v_per_cm: f64,
    pub free_time_s: f64,
    pub visibility: f64,
    /// Mercury frequency used in the extraction. `None` takes the harmonic
    /// mean of the pair's measured values.
    pub f_hg_reference: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignEstimate {
    pub dn_hat: f64,
    pub standard_error: f64,
    pub pairs: usize,
    /// `sqrt(χ²/ndf)` of the pair estimates around the weighted mean.
    pub birge_ratio: Option<f64>,
    /// The pair estimates show no statistical scatter (noiseless input); the
    /// standard error is then reported as 0.
    pub degenerate: bool,
}

fn cycle_variance_r(rec: &CycleRecord, settings: &EstimatorSettings) -> Result<f64> {
    let total = rec.n_up + rec.n_down;
    if total == 0 {
        return Err(Error::ZeroCounts);
    }
    let a = (rec.n_up as f64 - rec.n_down as f64) / total as f64;
    let vis = settings.visibility;
    if a.abs() >= vis {
        return Err(Error::PhaseUnresolvable {
            index: rec.index,
            asymmetry: a,
            visibility: vis,
        });
    }
    // Var(A) = (1 − A²)/N, dφ/dA = 1/sqrt(V² − A²), f_n = φ/(2πT) + const
    let var_phi = (1.0 - a * a) / (total as f64 * (vis * vis - a * a));
    let denom = 2.0 * std::f64::consts::PI * settings.free_time_s * rec.f_hg;
    Ok(var_phi / (denom * denom))
}

/// Inverse-variance weighted mean of per-pair EDM estimates.
///
/// Records are paired in order `(0, 1), (2, 3), …`; each pair must contain
/// one cycle of each polarity. Per-cycle variances come from counting
/// statistics propagated through `A → φ → f_n → R`.
pub fn campaign_estimator(
    records: &[CycleRecord],
    settings: &EstimatorSettings,
    units: &UnitSystem,
) -> Result<CampaignEstimate> {
    if records.len() < 2 {
        return Err(Error::UnpairedPolarity {
            index: records.first().map(|r| r.index).unwrap_or(0),
        });
    }
    if records.len() % 2 != 0 {
        return Err(Error::UnpairedPolarity {
            index: records[records.len() - 1].index,
        });
    }
    if !(settings.free_time_s > 0.0) {
        return Err(invalid("free_time_s", "must be positive"));
    }
    if !(settings.visibility > 0.0 && settings.visibility <= 1.0) {
        return Err(invalid("visibility", "must lie in (0, 1]"));
    }

    let mut estimates = Vec::with_capacity(records.len() / 2);
    for pair in records.chunks_exact(2) {
        let (plus, minus) = match (pair[0].polarity, pair[1].polarity) {
            (1, -1) => (&pair[0], &pair[1]),
            (-1, 1) => (&pair[1], &pair[0]),
            _ => return Err(Error::UnpairedPolarity { index: pair[0].index }),
        };
        let f_hg = settings
            .f_hg_reference
            .unwrap_or(2.0 / (1.0 / plus.f_hg + 1.0 / minus.f_hg));
        let d = extract_dn_pair(plus.r, minus.r, settings.e_field_v_per_cm, f_hg, units)?;
        let scale = std::f64::consts::PI * f_hg / (2.0 * settings.e_field_v_per_cm * units.coupling());
        let var = scale * scale
            * (cycle_variance_r(plus, settings)? + cycle_variance_r(minus, settings)?);
        estimates.push((d, var));
    }

    let weight_sum: f64 = estimates.iter().map(|(_, v)| 1.0 / v).sum();
    let dn_hat = estimates.iter().map(|(d, v)| d / v).sum::<f64>() / weight_sum;
    let propagated = (1.0 / weight_sum).sqrt();
    let birge_ratio = (estimates.len() > 1).then(|| {
        let chi2: f64 = estimates
            .iter()
            .map(|(d, v)| (d - dn_hat) * (d - dn_hat) / v)
            .sum();
        (chi2 / (estimates.len() - 1) as f64).sqrt()
    });
    let degenerate = birge_ratio.is_some_and(|b| b < 1e-6);
    Ok(CampaignEstimate {
        dn_hat,
        standard_error: if degenerate { 0.0 } else { propagated },
        pairs: estimates.len(),
        birge_ratio,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comagnetometer::{run_campaign, CampaignConfig};
    use crate::quantities::PhysicalConstants;
    use proptest::prelude::*;

    fn ladder(xi_max: f64, n: usize) -> Vec<f64> {
        (1..=n).map(|i| xi_max * i as f64 / n as f64).collect()
    }

    /// Direct binomial log-likelihood, written independently of the crate.
    fn brute_log_likelihood(d: f64, delta: f64, data: &FlipDataset) -> f64 {
        data.points()
            .iter()
            .map(|p| {
                let prob = (d * p.xi).sin().powi(2) * (-(p.xi * delta).powi(2)).exp();
                let (k, n) = (p.flips as f64, p.trials as f64);
                let lp = if k > 0.0 { k * prob.max(1e-300).ln() } else { 0.0 };
                let lq = if n > k { (n - k) * (1.0 - prob).max(1e-300).ln() } else { 0.0 };
                lp + lq
            })
            .sum()
    }

    #[test]
    fn zero_flip_dataset_at_null_is_zero() {
        let data = FlipDataset::new(vec![
            FlipPoint { xi: 1.0, trials: 100, flips: 0 },
            FlipPoint { xi: 2.0, trials: 50, flips: 0 },
        ])
        .unwrap();
        assert_eq!(log_likelihood(0.0, 0.3, &data), 0.0);
    }

    #[test]
    fn single_point_optimum_is_empirical_fraction() {
        let data = FlipDataset::new(vec![FlipPoint { xi: 1.0, trials: 1000, flips: 250 }]).unwrap();
        // sin²(d) = 0.25 at d = π/6
        let at = log_likelihood(std::f64::consts::FRAC_PI_6, 0.0, &data);
        for d in [0.50, 0.52, 0.53, 0.54] {
            assert!(log_likelihood(d, 0.0, &data) < at);
        }
        let expected = 250.0 * 0.25f64.ln() + 750.0 * 0.75f64.ln();
        assert!((at - expected).abs() < 1e-9);
    }

    #[test]
    fn invalid_datasets_rejected() {
        assert!(FlipDataset::new(vec![]).is_err());
        assert!(FlipDataset::new(vec![FlipPoint { xi: 1.0, trials: 1, flips: 2 }]).is_err());
        assert!(FlipDataset::new(vec![FlipPoint { xi: f64::NAN, trials: 1, flips: 0 }]).is_err());
        let single = FlipDataset::new(vec![
            FlipPoint { xi: 1.0, trials: 10, flips: 2 },
            FlipPoint { xi: 1.0, trials: 10, flips: 3 },
        ])
        .unwrap();
        let err = fit(&single, &SearchBox::for_dataset(&single)).unwrap_err();
        assert!(matches!(err, Error::InvalidDataset(_)));
    }

    #[test]
    fn grid_oracle_agreement() {
        let xi_max = 3.0e25;
        let truth = DipoleState::new(0.3 / xi_max, 1.0 / xi_max).unwrap();
        let data = FlipDataset::simulate(&truth, &ladder(xi_max, 8), 200_000, 5).unwrap();
        let search = SearchBox::for_dataset(&data);
        let fitted = fit(&data, &search).unwrap();
        assert!(fitted.converged);

        let n = 50;
        let mut grid = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let d = search.dn.1 * i as f64 / (n - 1) as f64;
                let delta = search.delta.1 * j as f64 / (n - 1) as f64;
                grid.push((d, delta, brute_log_likelihood(d, delta, &data)));
            }
        }
        let best = grid.iter().map(|g| g.2).fold(f64::NEG_INFINITY, f64::max);
        assert!(fitted.max_log_likelihood >= best - 1e-6);
        // Implementation reproduces the brute-force ordering.
        for w in grid.windows(2) {
            let a = log_likelihood(w[0].0, w[0].1, &data);
            let b = log_likelihood(w[1].0, w[1].1, &data);
            if (w[0].2 - w[1].2).abs() > 1e-6 * w[0].2.abs().max(1.0) {
                assert_eq!(a < b, w[0].2 < w[1].2);
            }
            assert!((a - w[0].2).abs() <= 1e-9 * w[0].2.abs().max(1.0));
        }
    }

    #[test]
    fn zero_flip_fit_sits_on_boundary() {
        let data = FlipDataset::new(
            ladder(1e25, 4)
                .into_iter()
                .map(|xi| FlipPoint { xi, trials: 10_000, flips: 0 })
                .collect(),
        )
        .unwrap();
        let r = fit(&data, &SearchBox::for_dataset(&data)).unwrap();
        assert_eq!(r.dn_hat, 0.0);
        assert!(r.dn_at_boundary);
        assert!(!r.converged);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn fit_is_scale_covariant() {
        let xi_max = 2.0;
        let truth = DipoleState::new(0.3 / xi_max, 1.0 / xi_max).unwrap();
        let data = FlipDataset::simulate(&truth, &ladder(xi_max, 8), 100_000, 2).unwrap();
        let a = fit(&data, &SearchBox::for_dataset(&data)).unwrap();
        let s = 1e26;
        let scaled = data.rescaled_xi(s);
        let b = fit(&scaled, &SearchBox::for_dataset(&scaled)).unwrap();
        assert!((b.dn_hat / (s * a.dn_hat) - 1.0).abs() < 1e-6);
        assert!((b.delta_hat / (s * a.delta_hat) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fit_is_bitwise_reproducible_across_pools() {
        let truth = DipoleState::new(0.2, 0.7).unwrap();
        let data = FlipDataset::simulate(&truth, &ladder(1.0, 6), 50_000, 8).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit(&data, &SearchBox::for_dataset(&data)).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn bounds_are_nested_in_cl() {
        let data = FlipDataset::new(
            ladder(1.0, 5)
                .into_iter()
                .map(|xi| FlipPoint { xi, trials: 100_000, flips: 0 })
                .collect(),
        )
        .unwrap();
        let b50 = upper_bound(&data, &BoundSpec::new(0.5, (0.0, 0.1))).unwrap();
        let b90 = upper_bound(&data, &BoundSpec::new(0.9, (0.0, 0.1))).unwrap();
        let b95 = upper_bound(&data, &BoundSpec::new(0.95, (0.0, 0.1))).unwrap();
        assert!(b50.bound <= b90.bound && b90.bound <= b95.bound);
        assert!(b95.bound > 0.0 && b95.bound.is_finite());
        assert!(upper_bound(&data, &BoundSpec::new(0.3, (0.0, 0.1))).is_err());
    }

    #[test]
    fn zero_flip_bound_matches_small_angle_formula() {
        // For zero flips and Δ ≈ 0: 2 Σ n sin²(d ξ) ≈ q  ⇒  d ≈ sqrt(q / (2 Σ n ξ²)).
        let xis = ladder(1.0, 8);
        let n = 1_000_000u64;
        let data = FlipDataset::new(
            xis.iter().map(|&xi| FlipPoint { xi, trials: n, flips: 0 }).collect(),
        )
        .unwrap();
        let b = upper_bound(&data, &BoundSpec::new(0.95, (0.0, 1e-6))).unwrap();
        let q = 1.644_853_626_951_472_2f64.powi(2);
        let sum: f64 = xis.iter().map(|x| n as f64 * x * x).sum();
        let approx = (q / (2.0 * sum)).sqrt();
        assert!((b.bound / approx - 1.0).abs() < 1e-4, "{} vs {}", b.bound, approx);
    }

    #[test]
    fn bound_fails_cleanly_when_box_too_small() {
        let data = FlipDataset::new(vec![FlipPoint { xi: 1.0, trials: 10, flips: 0 }]).unwrap();
        let mut spec = BoundSpec::new(0.95, (0.0, 0.1));
        spec.dn_max = Some(1e-6);
        assert!(matches!(upper_bound(&data, &spec), Err(Error::NonConvergent(_))));
    }

    #[test]
    fn thresholds() {
        assert!((two_sided_threshold(0.682_689_492_137_085_9) - 1.0).abs() < 1e-9);
        assert!((one_sided_threshold(0.95) - 2.705_543_454_095_404).abs() < 1e-9);
        assert_eq!(one_sided_threshold(0.5), 0.0);
    }

    #[test]
    fn noiseless_campaign_estimate_is_exact_and_degenerate() {
        let cfg = CampaignConfig {
            true_dn_e_cm: 1e-22,
            cycles: 20,
            b_drift_sd_t: 0.0,
            ..CampaignConfig::default()
        }
        .noiseless();
        let units = UnitSystem::default();
        let recs = run_campaign(&cfg, &units, &PhysicalConstants::default()).unwrap();
        let settings = EstimatorSettings {
            e_field_v_per_cm: cfg.e_field_v_per_cm,
            free_time_s: cfg.free_time_s,
            visibility: cfg.visibility,
            f_hg_reference: None,
        };
        let est = campaign_estimator(&recs, &settings, &units).unwrap();
        assert!((est.dn_hat / 1e-22 - 1.0).abs() < 1e-10);
        assert!(est.degenerate);
        assert_eq!(est.standard_error, 0.0);
        assert_eq!(est.pairs, 10);
    }

    #[test]
    fn lone_polarity_rejected() {
        let cfg = CampaignConfig { cycles: 4, ..CampaignConfig::default() };
        let units = UnitSystem::default();
        let recs = run_campaign(&cfg, &units, &PhysicalConstants::default()).unwrap();
        let settings = EstimatorSettings {
            e_field_v_per_cm: cfg.e_field_v_per_cm,
            free_time_s: cfg.free_time_s,
            visibility: cfg.visibility,
            f_hg_reference: None,
        };
        assert!(campaign_estimator(&recs[..1], &settings, &units).is_err());
        assert!(campaign_estimator(&recs[..3], &settings, &units).is_err());
        let same = [recs[0], recs[2]];
        assert!(matches!(
            campaign_estimator(&same, &settings, &units),
            Err(Error::UnpairedPolarity { .. })
        ));
        assert!(campaign_estimator(&recs, &settings, &units).is_ok());
    }

    #[test]
    fn phase_guard_rejects_saturated_asymmetry() {
        let cfg = CampaignConfig {
            working_point_rad: 0.0,
            cycles: 2,
            ..CampaignConfig::default()
        }
        .noiseless();
        let units = UnitSystem::default();
        let recs = run_campaign(&cfg, &units, &PhysicalConstants::default()).unwrap();
        let settings = EstimatorSettings {
            e_field_v_per_cm: cfg.e_field_v_per_cm,
            free_time_s: cfg.free_time_s,
            visibility: 1.0,
            f_hg_reference: None,
        };
        assert!(matches!(
            campaign_estimator(&recs, &settings, &units),
            Err(Error::PhaseUnresolvable { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn likelihood_ignores_point_order(seed in 0u64..1000, rot in 0usize..6, d in 0.0f64..1.0, delta in 0.0f64..2.0) {
            let truth = DipoleState::new(0.3, 0.5).unwrap();
            let data = FlipDataset::simulate(&truth, &ladder(1.0, 6), 500, seed).unwrap();
            let mut pts = data.points().to_vec();
            pts.rotate_left(rot);
            pts.reverse();
            let shuffled = FlipDataset::new(pts).unwrap();
            let a = log_likelihood(d, delta, &data);
            let b = log_likelihood(d, delta, &shuffled);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
