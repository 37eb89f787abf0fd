//! Sifted-coincidence and error probabilities for polarisation-encoded
//! MDI QKD with a linear-optics Bell-state analyser.
//!
//! All quantities are per pulse pair with the send probabilities and the
//! pulse count N factored out; [`crate::finite_key`] puts them back.
//!
//! Z basis (signal pairs):
//!
//! ```text
//! n_z1 = ½ (1 - 2e_dZ)(1 - e^{-u_A})(1 - e^{-u_B})
//! n_z2 = ½ (1 - e^{-(1-e_dZ)u_A} e^{-(1-e_dZ)u_B}) (e_dZ u_A + e_dZ u_B + 2Y₀)
//! n_Z  = n_z1 + n_z2,   m_Z = n_z2
//! ```
//!
//! with `u = η η_D s`. X basis, for intensities `k_A = i`, `k_B = j` and
//! `u = η η_D k`:
//!
//! ```text
//! dark     = u_A e^{-u_A} Y₀ + u_B e^{-u_B} Y₀
//! one_each = u_A u_B e^{-u_A - u_B}
//! two_one  = e^{-u_A - u_B} (u_A² + u_B²) / 2
//! n_c1 = ½ (dark + ½ one_each (1 - 2e_dX) + ¼ two_one)      (ψ⁻)
//! n_w1 = ½ (dark + one_each e_dX + ¼ two_one)               (ψ⁺)
//! n_X  = 2 (n_c1 + n_w1),   m_X = 2 n_w1
//! ```
//!
//! Three-photon events are ignored, so the model degrades when `η η_D k`
//! approaches one; [`model_validity_exceeded`] flags that regime.

use crate::error::Result;
use crate::params::{DecoyParams, Intensity, Party, SystemParams};

/// Largest `η·η_D·k` for which the truncated photon-number model is trusted.
pub const VALIDITY_LIMIT: f64 = 0.5;

/// Sifted probability `n` and error probability `m` for one basis/intensity pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counts {
    pub n: f64,
    pub m: f64,
}

impl Counts {
    #[inline]
    fn add_scaled(&mut self, other: &Counts, w: f64) {
        self.n += w * other.n;
        self.m += w * other.m;
    }
}

/// Value indexed by an (Alice, Bob) pair of decoy intensities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMap<T>(pub [[T; 3]; 3]);

impl<T> PairMap<T> {
    pub fn from_fn(mut f: impl FnMut(Intensity, Intensity) -> T) -> Self {
        use Intensity::*;
        PairMap([
            [f(Mu, Mu), f(Mu, Nu), f(Mu, Vacuum)],
            [f(Nu, Mu), f(Nu, Nu), f(Nu, Vacuum)],
            [f(Vacuum, Mu), f(Vacuum, Nu), f(Vacuum, Vacuum)],
        ])
    }

    #[inline]
    pub fn get(&self, a: Intensity, b: Intensity) -> &T {
        &self.0[a.index()][b.index()]
    }

    #[inline]
    pub fn get_mut(&mut self, a: Intensity, b: Intensity) -> &mut T {
        &mut self.0[a.index()][b.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Intensity, Intensity, &T)> {
        Intensity::ALL.into_iter().flat_map(move |a| {
            Intensity::ALL
                .into_iter()
                .map(move |b| (a, b, self.get(a, b)))
        })
    }
}

/// Sifted counts for the Z basis and all nine X-basis intensity pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SiftedCounts {
    pub z: Counts,
    pub x: PairMap<Counts>,
}

impl SiftedCounts {
    /// `self += w · other`, used for probability-weighted averaging.
    #[inline]
    pub fn add_scaled(&mut self, other: &SiftedCounts, w: f64) {
        self.z.add_scaled(&other.z, w);
        for (dst, src) in self
            .x
            .0
            .iter_mut()
            .flatten()
            .zip(other.x.0.iter().flatten())
        {
            dst.add_scaled(src, w);
        }
    }

    pub fn add(&mut self, other: &SiftedCounts) {
        self.z.n += other.z.n;
        self.z.m += other.z.m;
        for (dst, src) in self
            .x
            .0
            .iter_mut()
            .flatten()
            .zip(other.x.0.iter().flatten())
        {
            dst.n += src.n;
            dst.m += src.m;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = Counts> + '_ {
        std::iter::once(self.z).chain(self.x.0.iter().flatten().copied())
    }
}

/// The two Z-basis coincidence lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTerms {
    /// Opposite polarisations sent (correct bits).
    pub n_z1: f64,
    /// Same polarisation sent (errors).
    pub n_z2: f64,
}

/// ψ⁻ and ψ⁺ announcement probabilities for one X-basis intensity pair,
/// for opposite polarisations sent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEvents {
    pub n_c1: f64,
    pub n_w1: f64,
}

pub fn z_terms(eta_a: f64, eta_b: f64, sys: &SystemParams, decoy: &DecoyParams) -> ZTerms {
    z_terms_from(
        eta_a * sys.eta_d * decoy.s_a,
        eta_b * sys.eta_d * decoy.s_b,
        sys,
    )
}

#[inline]
fn z_terms_from(ua: f64, ub: f64, sys: &SystemParams) -> ZTerms {
    let e = sys.e_dz;
    let n_z1 = 0.5 * (1.0 - 2.0 * e) * (-(-ua).exp_m1()) * (-(-ub).exp_m1());
    let n_z2 = 0.5 * (-(-(1.0 - e) * (ua + ub)).exp_m1()) * (e * ua + e * ub + 2.0 * sys.y0);
    ZTerms { n_z1, n_z2 }
}

/// `(n_Z, m_Z)` for signal pulses from both parties.
pub fn z_counts(eta_a: f64, eta_b: f64, sys: &SystemParams, decoy: &DecoyParams) -> Result<Counts> {
    sys.validate()?;
    check_transmittances(eta_a, eta_b)?;
    let t = z_terms(eta_a, eta_b, sys, decoy);
    Ok(Counts {
        n: t.n_z1 + t.n_z2,
        m: t.n_z2,
    })
}

pub fn psi_events(
    eta_a: f64,
    eta_b: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
    pair: (Intensity, Intensity),
) -> PsiEvents {
    let ua = eta_a * sys.eta_d * decoy.intensity(pair.0, Party::Alice);
    let ub = eta_b * sys.eta_d * decoy.intensity(pair.1, Party::Bob);
    psi_events_from(ua, (-ua).exp(), ub, (-ub).exp(), sys)
}

#[inline]
fn psi_events_from(ua: f64, ea: f64, ub: f64, eb: f64, sys: &SystemParams) -> PsiEvents {
    let dark = ua * ea * sys.y0 + ub * eb * sys.y0;
    let both = ea * eb;
    let one_each = ua * ub * both;
    let two_one = both * (ua * ua + ub * ub) * 0.5;
    PsiEvents {
        n_c1: 0.5 * (dark + 0.5 * one_each * (1.0 - 2.0 * sys.e_dx) + 0.25 * two_one),
        n_w1: 0.5 * (dark + one_each * sys.e_dx + 0.25 * two_one),
    }
}

#[inline]
fn x_from_events(ev: PsiEvents) -> Counts {
    Counts {
        n: 2.0 * (ev.n_c1 + ev.n_w1),
        m: 2.0 * ev.n_w1,
    }
}

/// `(n_X, m_X)` for the intensity pair `(i, j)` = (Alice, Bob).
pub fn x_counts(
    eta_a: f64,
    eta_b: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
    pair: (Intensity, Intensity),
) -> Result<Counts> {
    sys.validate()?;
    check_transmittances(eta_a, eta_b)?;
    Ok(x_from_events(psi_events(eta_a, eta_b, sys, decoy, pair)))
}

/// Z counts and all nine X-basis pairs at a static channel.
pub fn all_sifted_counts(
    eta_a: f64,
    eta_b: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
) -> Result<SiftedCounts> {
    sys.validate()?;
    decoy.validate()?;
    check_transmittances(eta_a, eta_b)?;
    Ok(sifted_counts_unchecked(eta_a, eta_b, sys, decoy))
}

/// Hot-path variant of [`all_sifted_counts`]; inputs must already be valid.
#[inline]
pub fn sifted_counts_unchecked(
    eta_a: f64,
    eta_b: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
) -> SiftedCounts {
    let ta = eta_a * sys.eta_d;
    let tb = eta_b * sys.eta_d;
    let z = z_terms_from(ta * decoy.s_a, tb * decoy.s_b, sys);

    // e^{-u} per party and intensity, shared by the nine pairs.
    let ua = [ta * decoy.mu_a, ta * decoy.nu_a, ta * decoy.omega];
    let ub = [tb * decoy.mu_b, tb * decoy.nu_b, tb * decoy.omega];
    let ea = ua.map(|u| (-u).exp());
    let eb = ub.map(|u| (-u).exp());

    let mut x = PairMap::<Counts>::default();
    for i in 0..3 {
        for j in 0..3 {
            x.0[i][j] = x_from_events(psi_events_from(ua[i], ea[i], ub[j], eb[j], sys));
        }
    }
    SiftedCounts {
        z: Counts {
            n: z.n_z1 + z.n_z2,
            m: z.n_z2,
        },
        x,
    }
}

/// True when some `η·η_D·k` exceeds [`VALIDITY_LIMIT`] for the largest
/// transmittance of interest.
pub fn model_validity_exceeded(max_eta: f64, sys: &SystemParams, decoy: &DecoyParams) -> bool {
    max_eta * sys.eta_d * decoy.s_a.max(decoy.s_b) > VALIDITY_LIMIT
}

fn check_transmittances(eta_a: f64, eta_b: f64) -> Result<()> {
    for eta in [eta_a, eta_b] {
        if !(0.0..=1.0).contains(&eta) {
            return Err(crate::error::Error::InvalidParameter(format!(
                "transmittance must lie in [0, 1], got {eta}"
            )));
        }
    }
    Ok(())
}
