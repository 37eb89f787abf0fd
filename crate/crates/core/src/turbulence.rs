//! Lognormal probability distribution of the transmittance coefficient (PDTC)
//! for a free-space arm in weak-to-moderate turbulence.
//!
//! The density of the transmittance η for mean transmittance η₀ and
//! log-irradiance variance σ² is
//!
//! ```text
//! P(η) = 1 / (√(2π) σ η) · exp(-(ln(η/η₀) + σ²/2)² / (2σ²))
//! ```
//!
//! which has first moment η₀ on (0, ∞). Both arms are independent, so the
//! joint density is the product of the marginals.
//!
//! Integration is done on a uniform midpoint grid over (0, 1]. The part of
//! the lognormal that lies above η = 1 is dropped and the grid masses are
//! renormalised to sum to one; the dropped mass is reported in
//! [`Discretized::tail_mass`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::db_to_transmittance;

/// Largest log-irradiance variance for which the lognormal model is used.
pub const MAX_SIGMA2: f64 = 1.2;

/// Production grid step.
pub const DEFAULT_GRID_STEP: f64 = 0.001;
/// Coarse grid step used by fast test and CI runs.
pub const COARSE_GRID_STEP: f64 = 0.005;

/// Lognormal description of one free-space arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Mean transmittance η₀, excluding detector efficiency.
    pub eta0: f64,
    /// Log-irradiance variance σ².
    pub sigma2: f64,
}

impl ChannelModel {
    pub fn new(eta0: f64, sigma2: f64) -> Result<Self> {
        let ch = Self { eta0, sigma2 };
        ch.validate()?;
        Ok(ch)
    }

    /// Channel with the given mean loss in dB.
    pub fn from_loss_db(loss_db: f64, sigma2: f64) -> Result<Self> {
        Self::new(db_to_transmittance(loss_db), sigma2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta0 must lie in (0, 1], got {}",
                self.eta0
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2 <= MAX_SIGMA2) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must lie in (0, {MAX_SIGMA2}], got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// Density without input checks; callers validate once up front.
    #[inline]
    pub(crate) fn density_unchecked(&self, eta: f64) -> f64 {
        let sigma = self.sigma2.sqrt();
        let z = (eta / self.eta0).ln() + 0.5 * self.sigma2;
        (-z * z / (2.0 * self.sigma2)).exp() / ((2.0 * PI).sqrt() * sigma * eta)
    }
}

/// Lognormal PDTC evaluated at `eta`.
pub fn pdtc_density(eta: f64, channel: &ChannelModel) -> Result<f64> {
    channel.validate()?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!(
            "transmittance must be positive and finite, got {eta}"
        )));
    }
    Ok(channel.density_unchecked(eta))
}

/// Joint PDTC of two independent arms.
pub fn joint_pdtc(eta_a: f64, eta_b: f64, ch_a: &ChannelModel, ch_b: &ChannelModel) -> Result<f64> {
    Ok(pdtc_density(eta_a, ch_a)? * pdtc_density(eta_b, ch_b)?)
}

/// Ordered transmittance sample points in (0, 1] with a uniform spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmittanceGrid {
    points: Vec<f64>,
    step: f64,
}

impl TransmittanceGrid {
    /// Midpoint grid covering (0, 1]: `(i + 1/2)·step` for `i = 0..⌊1/step⌋`.
    /// η = 0 is never a grid point.
    pub fn uniform(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid step must lie in (0, 1], got {step}"
            )));
        }
        let n = (1.0 / step + 1e-9).floor() as usize;
        let points = (0..n).map(|i| (i as f64 + 0.5) * step).collect();
        Ok(Self { points, step })
    }

    /// A grid consisting of one point.
    pub fn single(eta: f64, step: f64) -> Result<Self> {
        Self::from_points(vec![eta], step)
    }

    pub fn from_points(points: Vec<f64>, step: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("grid has no points".into()));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if points.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidParameter(
                "grid points must lie in (0, 1]".into(),
            ));
        }
        for w in points.windows(2) {
            let gap = w[1] - w[0];
            if !(gap > 0.0) {
                return Err(Error::InvalidParameter(
                    "grid points must be strictly increasing".into(),
                ));
            }
            if (gap - step).abs() > 1e-9 * step.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "grid spacing {gap} does not match step {step}"
                )));
            }
        }
        Ok(Self { points, step })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest grid point, clamped to the grid; an exact midpoint
    /// between two points resolves to the lower index.
    pub fn nearest_index(&self, eta: f64) -> usize {
        let last = self.points.len() - 1;
        let x = (eta - self.points[0]) / self.step;
        if !(x > 0.0) {
            return 0;
        }
        let i = (x - 0.5).ceil();
        if i >= last as f64 {
            last
        } else {
            i as usize
        }
    }
}

/// Probability masses of one channel on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    /// Renormalised masses, one per grid point, summing to one.
    pub masses: Vec<f64>,
    /// Mass dropped by the truncation to (0, 1] before renormalisation,
    /// estimated as `1 - Σ P(ηᵢ)·step`.
    pub tail_mass: f64,
}

/// Midpoint-rule masses `P(ηᵢ)·step`, renormalised over the truncated domain.
pub fn discretize(channel: &ChannelModel, grid: &TransmittanceGrid) -> Result<Discretized> {
    channel.validate()?;
    let raw: Vec<f64> = grid
        .points()
        .iter()
        .map(|&eta| channel.density_unchecked(eta) * grid.step())
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Domain(format!(
            "channel (eta0={}, sigma2={}) places no probability mass on the grid",
            channel.eta0, channel.sigma2
        )));
    }
    Ok(Discretized {
        masses: raw.iter().map(|m| m / total).collect(),
        tail_mass: 1.0 - total,
    })
}
