//! Detector, post-processing and decoy-state parameters.
//!
//! [`SystemParams::default`] carries the reference free-space system
//! (η_D = 0.5, e_dZ = 0.003, e_dX = 0.03, f_EC = 1.1, Y₀ = 7·10⁻⁷, γ = 5.3).
//! [`reference_points`] lists the three reference decoy settings for
//! N = 10¹², 10¹³ and 10¹⁴ pulses together with the channel loss they were
//! tuned for.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detector and post-processing constants shared by both parties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    /// Detector efficiency η_D.
    pub eta_d: f64,
    /// Z-basis misalignment probability.
    pub e_dz: f64,
    /// X-basis misalignment probability.
    pub e_dx: f64,
    /// Dark-count probability per pulse per detector.
    pub y0: f64,
    /// Error-correction inefficiency, multiplies the Shannon limit.
    pub f_ec: f64,
    /// Total number of pulses N sent in the run.
    pub n_pulses: u64,
    /// Width of the statistical bounds in standard deviations.
    pub gamma: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            eta_d: 0.5,
            e_dz: 0.003,
            e_dx: 0.03,
            y0: 7e-7,
            f_ec: 1.1,
            n_pulses: 10_000_000_000_000,
            gamma: 5.3,
        }
    }
}

impl SystemParams {
    pub fn with_pulses(mut self, n_pulses: u64) -> Self {
        self.n_pulses = n_pulses;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(invalid(format!(
                "eta_d must lie in (0, 1], got {}",
                self.eta_d
            )));
        }
        // Misalignment above one half would make the (1 - 2e) coincidence
        // factor negative.
        for (name, v) in [("e_dz", self.e_dz), ("e_dx", self.e_dx)] {
            if !(0.0..=0.5).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0, 0.5], got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.y0) {
            return Err(invalid(format!("y0 must lie in [0, 1], got {}", self.y0)));
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(invalid(format!("f_ec must be >= 1, got {}", self.f_ec)));
        }
        if self.n_pulses == 0 {
            return Err(invalid("n_pulses must be >= 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// One of the three intensities used for parameter estimation in the X basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Mu,
    Nu,
    Vacuum,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Mu, Intensity::Nu, Intensity::Vacuum];

    pub(crate) const fn index(self) -> usize {
        match self {
            Intensity::Mu => 0,
            Intensity::Nu => 1,
            Intensity::Vacuum => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Intensity::Mu => "mu",
            Intensity::Nu => "nu",
            Intensity::Vacuum => "vac",
        }
    }
}

/// The party whose intensity is being looked up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Alice,
    Bob,
}

/// Four-intensity decoy settings `{s, μ, ν, ω = 0}` and the send probabilities.
///
/// Intensities are kept per party; the send probabilities are shared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoyParams {
    pub s_a: f64,
    pub s_b: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub nu_a: f64,
    pub nu_b: f64,
    #[serde(default)]
    pub omega: f64,
    pub p_s: f64,
    pub p_mu: f64,
    pub p_nu: f64,
}

impl DecoyParams {
    pub fn symmetric(s: f64, mu: f64, nu: f64, p_s: f64, p_mu: f64, p_nu: f64) -> Self {
        Self {
            s_a: s,
            s_b: s,
            mu_a: mu,
            mu_b: mu,
            nu_a: nu,
            nu_b: nu,
            omega: 0.0,
            p_s,
            p_mu,
            p_nu,
        }
    }

    /// Probability of sending the vacuum state, `1 - p_s - p_mu - p_nu`.
    pub fn p_vacuum(&self) -> f64 {
        1.0 - self.p_s - self.p_mu - self.p_nu
    }

    pub fn probability(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Mu => self.p_mu,
            Intensity::Nu => self.p_nu,
            Intensity::Vacuum => self.p_vacuum(),
        }
    }

    pub fn intensity(&self, k: Intensity, party: Party) -> f64 {
        match (k, party) {
            (Intensity::Mu, Party::Alice) => self.mu_a,
            (Intensity::Mu, Party::Bob) => self.mu_b,
            (Intensity::Nu, Party::Alice) => self.nu_a,
            (Intensity::Nu, Party::Bob) => self.nu_b,
            (Intensity::Vacuum, _) => self.omega,
        }
    }

    pub fn signal(&self, party: Party) -> f64 {
        match party {
            Party::Alice => self.s_a,
            Party::Bob => self.s_b,
        }
    }

    /// True when exchanging Alice and Bob leaves the settings unchanged.
    pub fn is_symmetric(&self) -> bool {
        self.s_a == self.s_b && self.mu_a == self.mu_b && self.nu_a == self.nu_b
    }

    /// Same settings with Alice's and Bob's intensities exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            s_a: self.s_b,
            s_b: self.s_a,
            mu_a: self.mu_b,
            mu_b: self.mu_a,
            nu_a: self.nu_b,
            nu_b: self.nu_a,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega != 0.0 {
            return Err(invalid(format!(
                "omega is the vacuum intensity and must be 0, got {}",
                self.omega
            )));
        }
        for (party, s, mu, nu) in [
            ("A", self.s_a, self.mu_a, self.nu_a),
            ("B", self.s_b, self.mu_b, self.nu_b),
        ] {
            if !(s.is_finite() && s > mu && mu > nu && nu > 0.0) {
                return Err(invalid(format!(
                    "party {party}: intensities must satisfy s > mu > nu > 0, got s={s} mu={mu} nu={nu}"
                )));
            }
        }
        for (name, p) in [("p_s", self.p_s), ("p_mu", self.p_mu), ("p_nu", self.p_nu)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.p_s + self.p_mu + self.p_nu > 1.0 {
            return Err(invalid(format!(
                "send probabilities sum to {} > 1",
                self.p_s + self.p_mu + self.p_nu
            )));
        }
        Ok(())
    }
}

/// A reference decoy setting and the design point it was tuned for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub n_pulses: u64,
    /// Total design loss over both arms, in dB, excluding detector efficiency.
    pub design_loss_db: f64,
    pub decoy: DecoyParams,
}

impl ReferencePoint {
    /// Per-arm transmittance of the design point (the loss split evenly).
    pub fn design_eta(&self) -> f64 {
        db_to_transmittance(self.design_loss_db / 2.0)
    }

    pub fn system(&self) -> SystemParams {
        SystemParams::default().with_pulses(self.n_pulses)
    }
}

pub fn reference_points() -> [ReferencePoint; 3] {
    [
        ReferencePoint {
            n_pulses: 1_000_000_000_000,
            design_loss_db: 28.0,
            decoy: DecoyParams::symmetric(0.353, 0.229, 0.051, 0.527, 0.055, 0.285),
        },
        ReferencePoint {
            n_pulses: 10_000_000_000_000,
            design_loss_db: 34.0,
            decoy: DecoyParams::symmetric(0.450, 0.200, 0.037, 0.573, 0.066, 0.219),
        },
        ReferencePoint {
            n_pulses: 100_000_000_000_000,
            design_loss_db: 40.0,
            decoy: DecoyParams::symmetric(0.499, 0.198, 0.026, 0.466, 0.123, 0.295),
        },
    ]
}

/// `10^(-db/10)`.
pub fn db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn transmittance_to_db(eta: f64) -> f64 {
    -10.0 * eta.log10()
}

fn invalid(msg: String) -> Error {
    Error::InvalidParameter(msg)
}
