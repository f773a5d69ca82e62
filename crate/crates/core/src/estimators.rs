//! Joint CFO/SFO estimation from a two-symbol preamble by exhaustive search.
//!
//! Two least-squares objectives share the inter-symbol phase ramp
//! `Xi_k(eps, eta) = exp(j 2pi (N + N_g)/N (k eta + eps (1 + eta)))`:
//!
//! * the proposed estimator minimises `sum_k |R_1(k) - Xi_k R_0(k)|^2`;
//! * the Nguyen-Le estimator minimises `sum_k |Y(k) - Xi_k|^2` with the
//!   ratio observable `Y(k) = X_0(k) R_1(k) / (X_1(k) R_0(k))`.
//!
//! The noise variances of the underlying Gaussian likelihoods only scale the
//! objectives, so they never enter the search.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Result, SyncError};
use crate::ofdm_model::{OfdmConfig, PreambleObservation};

/// Below this `|X_1(k) R_0(k)|` the ratio observable is treated as undefined.
pub const DEGENERATE_THRESHOLD: f64 = 1e-30;

/// Rectangular (eps, eta) search lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    eps_values: Vec<f64>,
    eta_values: Vec<f64>,
}

impl GridSpec {
    pub fn new(eps_values: Vec<f64>, eta_values: Vec<f64>) -> Result<Self> {
        check_axis("eps_values", &eps_values)?;
        check_axis("eta_values", &eta_values)?;
        Ok(Self {
            eps_values,
            eta_values,
        })
    }

    /// `eps = i/100`, `eta = i/100000`, `i = -50..=50`.
    pub fn reference() -> Self {
        Self::symmetric(0.01, 0.5, 1e-5, 5e-4).expect("default grid is valid")
    }

    /// Symmetric lattices `{-max, ..., 0, ..., max}` with the given steps.
    pub fn symmetric(eps_step: f64, eps_max: f64, eta_step: f64, eta_max: f64) -> Result<Self> {
        Self::new(
            symmetric_axis("grid-cfo", eps_step, eps_max)?,
            symmetric_axis("grid-sfo", eta_step, eta_max)?,
        )
    }

    pub fn eps_values(&self) -> &[f64] {
        &self.eps_values
    }

    pub fn eta_values(&self) -> &[f64] {
        &self.eta_values
    }

    pub fn len(&self) -> usize {
        self.eps_values.len() * self.eta_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_axis(field: &'static str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(SyncError::InvalidConfig {
            field,
            reason: "grid axis is empty".into(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SyncError::InvalidConfig {
            field,
            reason: "grid values must be finite".into(),
        });
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SyncError::InvalidConfig {
            field,
            reason: "grid values must be strictly ascending".into(),
        });
    }
    Ok(())
}

fn symmetric_axis(field: &'static str, step: f64, max: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(SyncError::InvalidConfig {
            field,
            reason: format!("step must be positive, got {step}"),
        });
    }
    if !(max >= 0.0) || !max.is_finite() {
        return Err(SyncError::InvalidConfig {
            field,
            reason: format!("max must be non-negative, got {max}"),
        });
    }
    let half = (max / step).round();
    if half > 1e6 {
        return Err(SyncError::InvalidConfig {
            field,
            reason: "lattice too large".into(),
        });
    }
    let half = half as i64;
    // Exact reciprocal steps (0.01, 1e-5) divide so that 21 * 0.01 lands on 0.21.
    let inverse = 1.0 / step;
    let divide = (inverse - inverse.round()).abs() < 1e-9 * inverse;
    Ok((-half..=half)
        .map(|i| {
            if divide {
                i as f64 / inverse.round()
            } else {
                i as f64 * step
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Proposed,
    NguyenLe,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::NguyenLe => "nguyen_le",
        }
    }
}

/// Lattice argmin of a cost surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMinimum {
    pub eps_index: usize,
    pub eta_index: usize,
    pub eps: f64,
    pub eta: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationResult {
    pub method: Method,
    pub eps_hat: f64,
    pub eta_hat: f64,
    pub cost: f64,
}

impl EstimationResult {
    fn from_minimum(method: Method, min: GridMinimum) -> Self {
        Self {
            method,
            eps_hat: min.eps,
            eta_hat: min.eta,
            cost: min.cost,
        }
    }
}

/// Phase-ramp exponent scale `2pi (N + N_g) / N`.
fn ramp_scale(config: &OfdmConfig) -> f64 {
    2.0 * PI * config.symbol_spacing() as f64 / config.n() as f64
}

/// Diagonal entry of the inter-symbol rotation for subcarrier `k`.
pub fn xi_entry(k: i64, eps: f64, eta: f64, config: &OfdmConfig) -> Complex64 {
    Complex64::cis(ramp_scale(config) * (k as f64 * eta + eps * (1.0 + eta)))
}

/// Full diagonal of the rotation over the modulated subcarriers.
pub fn xi_vector(eps: f64, eta: f64, config: &OfdmConfig) -> Vec<Complex64> {
    config
        .subcarriers()
        .into_iter()
        .map(|k| xi_entry(k, eps, eta, config))
        .collect()
}

fn proposed_cost_with(obs: &PreambleObservation, xi: &[Complex64]) -> f64 {
    obs.r1
        .iter()
        .zip(&obs.r0)
        .zip(xi)
        .map(|((r1, r0), x)| (r1 - x * r0).norm_sqr())
        .sum()
}

fn nguyenle_cost_with(y: &[Complex64], xi: &[Complex64]) -> f64 {
    y.iter().zip(xi).map(|(y, x)| (y - x).norm_sqr()).sum()
}

pub fn proposed_cost(obs: &PreambleObservation, eps: f64, eta: f64, config: &OfdmConfig) -> f64 {
    proposed_cost_with(obs, &xi_vector(eps, eta, config))
}

/// `Y(k) = X_0(k) R_1(k) / (X_1(k) R_0(k))`.
pub fn nguyenle_observable(obs: &PreambleObservation) -> Result<Vec<Complex64>> {
    let half = (obs.r0.len() / 2) as i64;
    obs.r0
        .iter()
        .zip(&obs.r1)
        .zip(obs.training.x0.iter().zip(&obs.training.x1))
        .enumerate()
        .map(|(pos, ((r0, r1), (x0, x1)))| {
            let denom = x1 * r0;
            let magnitude = denom.norm();
            if !(magnitude >= DEGENERATE_THRESHOLD) {
                return Err(SyncError::DegenerateObservation {
                    subcarrier: pos as i64 - half,
                    magnitude,
                });
            }
            Ok(x0 * r1 / denom)
        })
        .collect()
}

pub fn nguyenle_cost(y: &[Complex64], eps: f64, eta: f64, config: &OfdmConfig) -> f64 {
    nguyenle_cost_with(y, &xi_vector(eps, eta, config))
}

/// Exhaustive row-major scan (eps outer, eta inner). The first strict minimum
/// wins, so ties go to the smaller eps, then the smaller eta.
pub fn grid_search<F>(cost: F, grid: &GridSpec) -> Result<GridMinimum>
where
    F: Fn(f64, f64) -> f64,
{
    let mut best: Option<GridMinimum> = None;
    for (eps_index, &eps) in grid.eps_values.iter().enumerate() {
        for (eta_index, &eta) in grid.eta_values.iter().enumerate() {
            let c = cost(eps, eta);
            if !c.is_finite() {
                return Err(SyncError::NonFiniteCost { eps, eta });
            }
            if best.is_none_or(|b| c < b.cost) {
                best = Some(GridMinimum {
                    eps_index,
                    eta_index,
                    eps,
                    eta,
                    cost: c,
                });
            }
        }
    }
    // GridSpec guarantees at least one lattice point.
    Ok(best.expect("non-empty grid"))
}

/// Precomputed rotations for every lattice point, reused across observations.
///
/// Table entries are produced by [`xi_entry`], so searches through a table
/// are bit-identical to [`grid_search`] over [`proposed_cost`] or
/// [`nguyenle_cost`].
#[derive(Debug, Clone)]
pub struct JointSearch {
    config: OfdmConfig,
    grid: GridSpec,
    xi: Vec<Complex64>,
}

impl JointSearch {
    pub fn new(config: &OfdmConfig, grid: &GridSpec) -> Self {
        let mut xi = Vec::with_capacity(grid.len() * config.k());
        for &eps in &grid.eps_values {
            for &eta in &grid.eta_values {
                xi.extend(xi_vector(eps, eta, config));
            }
        }
        Self {
            config: *config,
            grid: grid.clone(),
            xi,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.config
    }

    fn search<F>(&self, cost: F) -> Result<GridMinimum>
    where
        F: Fn(&[Complex64]) -> f64,
    {
        let k = self.config.k();
        let cols = self.grid.eta_values.len();
        let mut best: Option<GridMinimum> = None;
        for (point, xi) in self.xi.chunks_exact(k).enumerate() {
            let (eps_index, eta_index) = (point / cols, point % cols);
            let (eps, eta) = (self.grid.eps_values[eps_index], self.grid.eta_values[eta_index]);
            let c = cost(xi);
            if !c.is_finite() {
                return Err(SyncError::NonFiniteCost { eps, eta });
            }
            if best.is_none_or(|b| c < b.cost) {
                best = Some(GridMinimum {
                    eps_index,
                    eta_index,
                    eps,
                    eta,
                    cost: c,
                });
            }
        }
        Ok(best.expect("non-empty grid"))
    }

    fn check_len(&self, obs: &PreambleObservation) -> Result<()> {
        for (what, len) in [("R0", obs.r0.len()), ("R1", obs.r1.len())] {
            if len != self.config.k() {
                return Err(SyncError::LengthMismatch {
                    what,
                    expected: self.config.k(),
                    actual: len,
                });
            }
        }
        Ok(())
    }

    pub fn proposed_minimum(&self, obs: &PreambleObservation) -> Result<GridMinimum> {
        self.check_len(obs)?;
        self.search(|xi| proposed_cost_with(obs, xi))
    }

    pub fn proposed(&self, obs: &PreambleObservation) -> Result<EstimationResult> {
        Ok(EstimationResult::from_minimum(Method::Proposed, self.proposed_minimum(obs)?))
    }

    pub fn nguyen_le(&self, obs: &PreambleObservation) -> Result<EstimationResult> {
        self.check_len(obs)?;
        let y = nguyenle_observable(obs)?;
        let min = self.search(|xi| nguyenle_cost_with(&y, xi))?;
        Ok(EstimationResult::from_minimum(Method::NguyenLe, min))
    }
}

pub fn estimate_proposed(obs: &PreambleObservation, grid: &GridSpec, config: &OfdmConfig) -> Result<EstimationResult> {
    let min = grid_search(|eps, eta| proposed_cost(obs, eps, eta, config), grid)?;
    Ok(EstimationResult::from_minimum(Method::Proposed, min))
}

pub fn estimate_nguyenle(obs: &PreambleObservation, grid: &GridSpec, config: &OfdmConfig) -> Result<EstimationResult> {
    let y = nguyenle_observable(obs)?;
    let min = grid_search(|eps, eta| nguyenle_cost(&y, eps, eta, config), grid)?;
    Ok(EstimationResult::from_minimum(Method::NguyenLe, min))
}

/// Off-lattice refinement: independent three-point parabolic fits along each
/// axis through the argmin and its neighbours. Axes at the lattice edge, or
/// with a non-convex triple, keep the lattice value. The vertex is clamped to
/// half a step on either side.
pub fn refine_quadratic<F>(cost: F, grid: &GridSpec, min: &GridMinimum) -> (f64, f64)
where
    F: Fn(f64, f64) -> f64,
{
    let eps = refine_axis(&grid.eps_values, min.eps_index, min.cost, |e| cost(e, min.eta));
    let eta = refine_axis(&grid.eta_values, min.eta_index, min.cost, |h| cost(min.eps, h));
    (eps, eta)
}

fn refine_axis<F: Fn(f64) -> f64>(axis: &[f64], index: usize, centre_cost: f64, cost: F) -> f64 {
    let centre = axis[index];
    if index == 0 || index + 1 >= axis.len() {
        return centre;
    }
    let (lo, hi) = (axis[index - 1], axis[index + 1]);
    let step = 0.5 * (hi - lo);
    let (c_lo, c_hi) = (cost(lo), cost(hi));
    let curvature = c_lo - 2.0 * centre_cost + c_hi;
    if !(curvature > 0.0) {
        return centre;
    }
    let shift = 0.5 * (c_lo - c_hi) / curvature;
    centre + shift.clamp(-0.5, 0.5) * step
}

/// `N = R_1 - Xi(eps, eta) R_0` at the true offsets.
pub fn residual_n_vector(obs: &PreambleObservation, true_eps: f64, true_eta: f64, config: &OfdmConfig) -> Vec<Complex64> {
    obs.r1
        .iter()
        .zip(&obs.r0)
        .zip(xi_vector(true_eps, true_eta, config))
        .map(|((r1, r0), x)| r1 - x * r0)
        .collect()
}

/// `E = Y - Xi(eps, eta) 1` at the true offsets.
pub fn residual_e_vector(
    obs: &PreambleObservation,
    true_eps: f64,
    true_eta: f64,
    config: &OfdmConfig,
) -> Result<Vec<Complex64>> {
    let y = nguyenle_observable(obs)?;
    Ok(y.iter()
        .zip(xi_vector(true_eps, true_eta, config))
        .map(|(y, x)| y - x)
        .collect())
}

pub fn squared_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
