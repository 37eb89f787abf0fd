//! Finite-size bounds on the decoy gains, the single-photon-pair yield and
//! phase error, and the resulting secret key rate.
//!
//! Gains `Q_X^{ij} = n_X^{ij}` and error gains `T_X^{ij} = m_X^{ij}` are
//! widened by `γ·√(Q / (N p_i p_j))`. The ν and μ pairs are combined into
//!
//! ```text
//! Q̲_M1 = e^{ν_A+ν_B} Q̲_νν − e^{ν_A} Q̄_νω − e^{ν_B} Q̄_ων + Q̲_ωω
//! Q̄_M2 = e^{μ_A+μ_B} Q̄_μμ − e^{μ_A} Q̲_μω − e^{μ_B} Q̲_ωμ + Q̄_ωω
//! ```
//!
//! giving
//!
//! ```text
//! Y¹¹_min = (μ_A/(ν_A ν_B) Q̲_M1 − ν_A/(μ_A μ_B) Q̄_M2) / (μ_A − ν_A)
//! e¹¹_max = (e^{ν_A+ν_B} T̄_νν − e^{ν_A} T̲_νω − e^{ν_B} T̲_ων + T̄_ωω) / (ν_A ν_B Y¹¹_min)
//! R       = P_s² (s_A s_B e^{−(s_A+s_B)} Y¹¹_min [1 − H₂(e¹¹_max)] − f_EC Q_Z H₂(E_Z))
//! ```
//!
//! Negative intermediates are clamped at zero and the rate is clamped at zero.

use crate::error::{Error, Result};
use crate::noise::{PairMap, SiftedCounts};
use crate::params::{DecoyParams, Intensity, SystemParams};

/// A gain with its γ-sigma confidence interval.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundedGain {
    pub central: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateResult {
    /// Secret bits per pulse, clamped at zero.
    pub rate: f64,
    pub y11_lower: f64,
    /// Upper bound on the single-photon-pair phase error, in [0, 1]. Reported
    /// as 0.5 when the yield bound is zero.
    pub e11_upper: f64,
    /// Z-basis signal gain.
    pub q_z: f64,
    /// Z-basis error rate, with 0/0 taken as 0.
    pub e_z: f64,
}

/// Binary Shannon entropy in bits; zero at both endpoints.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// `1 − H₂(e)` for `e < ½`, zero otherwise.
#[inline]
fn privacy_factor(e11: f64) -> f64 {
    if e11 < 0.5 {
        1.0 - binary_entropy(e11)
    } else {
        0.0
    }
}

/// `gain ± γ·√(gain / (N·p_i·p_j))`, lower end clamped at zero.
pub fn apply_bounds(
    gain: f64,
    n_pulses: u64,
    p_i: f64,
    p_j: f64,
    gamma: f64,
) -> Result<BoundedGain> {
    let samples = n_pulses as f64 * p_i * p_j;
    if !(samples > 0.0) {
        return Err(Error::DegenerateStatistics(format!(
            "N·p_i·p_j = {samples}"
        )));
    }
    if !(gain >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gain must be non-negative, got {gain}"
        )));
    }
    Ok(bounds_unchecked(gain, samples, gamma))
}

#[inline]
fn bounds_unchecked(gain: f64, samples: f64, gamma: f64) -> BoundedGain {
    let w = gamma * (gain / samples).sqrt();
    BoundedGain {
        central: gain,
        lower: (gain - w).max(0.0),
        upper: gain + w,
    }
}

/// Bounded gains `Q` and error gains `T` for the nine X-basis pairs.
pub fn gain_bounds(
    counts: &SiftedCounts,
    sys: &SystemParams,
    decoy: &DecoyParams,
) -> Result<(PairMap<BoundedGain>, PairMap<BoundedGain>)> {
    check_statistics(sys, decoy)?;
    Ok(gain_bounds_unchecked(counts, sys, decoy))
}

#[inline]
fn gain_bounds_unchecked(
    counts: &SiftedCounts,
    sys: &SystemParams,
    decoy: &DecoyParams,
) -> (PairMap<BoundedGain>, PairMap<BoundedGain>) {
    let n = sys.n_pulses as f64;
    let p = Intensity::ALL.map(|k| decoy.probability(k));
    let mut q = PairMap::<BoundedGain>::default();
    let mut t = PairMap::<BoundedGain>::default();
    for i in 0..3 {
        for j in 0..3 {
            let samples = n * p[i] * p[j];
            let c = counts.x.0[i][j];
            q.0[i][j] = bounds_unchecked(c.n, samples, sys.gamma);
            t.0[i][j] = bounds_unchecked(c.m, samples, sys.gamma);
        }
    }
    (q, t)
}

/// `(Q̲_M1, Q̄_M2)`, each clamped at zero.
pub fn decoy_combinations(q: &PairMap<BoundedGain>, decoy: &DecoyParams) -> (f64, f64) {
    use Intensity::*;
    let (mu_a, mu_b, nu_a, nu_b) = (decoy.mu_a, decoy.mu_b, decoy.nu_a, decoy.nu_b);
    let q_m1 = (nu_a + nu_b).exp() * q.get(Nu, Nu).lower
        - nu_a.exp() * q.get(Nu, Vacuum).upper
        - nu_b.exp() * q.get(Vacuum, Nu).upper
        + q.get(Vacuum, Vacuum).lower;
    let q_m2 = (mu_a + mu_b).exp() * q.get(Mu, Mu).upper
        - mu_a.exp() * q.get(Mu, Vacuum).lower
        - mu_b.exp() * q.get(Vacuum, Mu).lower
        + q.get(Vacuum, Vacuum).upper;
    (q_m1.max(0.0), q_m2.max(0.0))
}

/// Lower bound on the single-photon-pair yield, clamped at zero.
pub fn y11_lower_bound(q: &PairMap<BoundedGain>, decoy: &DecoyParams) -> Result<f64> {
    if decoy.mu_a == decoy.nu_a {
        return Err(Error::DegenerateDecoy {
            mu: decoy.mu_a,
            nu: decoy.nu_a,
        });
    }
    Ok(y11_unchecked(q, decoy))
}

#[inline]
fn y11_unchecked(q: &PairMap<BoundedGain>, decoy: &DecoyParams) -> f64 {
    let (q_m1, q_m2) = decoy_combinations(q, decoy);
    let (mu_a, mu_b, nu_a, nu_b) = (decoy.mu_a, decoy.mu_b, decoy.nu_a, decoy.nu_b);
    let y = (mu_a / (nu_a * nu_b) * q_m1 - nu_a / (mu_a * mu_b) * q_m2) / (mu_a - nu_a);
    y.max(0.0)
}

/// Upper bound on the single-photon-pair phase error rate, clamped to [0, 1].
pub fn e11_upper_bound(
    t: &PairMap<BoundedGain>,
    y11_lower: f64,
    decoy: &DecoyParams,
) -> Result<f64> {
    if !(y11_lower > 0.0) {
        return Err(Error::ZeroYield);
    }
    Ok(e11_unchecked(t, y11_lower, decoy))
}

#[inline]
fn e11_unchecked(t: &PairMap<BoundedGain>, y11_lower: f64, decoy: &DecoyParams) -> f64 {
    use Intensity::*;
    let (nu_a, nu_b) = (decoy.nu_a, decoy.nu_b);
    let num = (nu_a + nu_b).exp() * t.get(Nu, Nu).upper
        - nu_a.exp() * t.get(Nu, Vacuum).lower
        - nu_b.exp() * t.get(Vacuum, Nu).lower
        + t.get(Vacuum, Vacuum).upper;
    (num / (nu_a * nu_b * y11_lower)).clamp(0.0, 1.0)
}

/// `P_s² s_A s_B e^{−(s_A+s_B)}`: the rate with perfect single-photon yield
/// and no error correction cost.
pub fn single_photon_cap(decoy: &DecoyParams) -> f64 {
    decoy.p_s * decoy.p_s * decoy.s_a * decoy.s_b * (-(decoy.s_a + decoy.s_b)).exp()
}

/// Finite secret key rate for a set of sifted counts (static or averaged).
pub fn secure_key_rate(
    counts: &SiftedCounts,
    sys: &SystemParams,
    decoy: &DecoyParams,
) -> Result<KeyRateResult> {
    sys.validate()?;
    decoy.validate()?;
    check_statistics(sys, decoy)?;
    for e in counts.entries() {
        if !(e.n >= 0.0 && e.m >= 0.0 && e.n.is_finite() && e.m.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sifted counts must be non-negative, got {e:?}"
            )));
        }
    }
    Ok(secure_key_rate_unchecked(counts, sys, decoy))
}

/// [`secure_key_rate`] without validation, for inner loops over inputs that
/// were validated once up front.
#[inline]
pub fn secure_key_rate_unchecked(
    counts: &SiftedCounts,
    sys: &SystemParams,
    decoy: &DecoyParams,
) -> KeyRateResult {
    let q_z = counts.z.n;
    let e_z = if q_z > 0.0 { counts.z.m / q_z } else { 0.0 };
    let (q, t) = gain_bounds_unchecked(counts, sys, decoy);
    let y11 = y11_unchecked(&q, decoy);
    if !(y11 > 0.0) {
        return KeyRateResult {
            rate: 0.0,
            y11_lower: 0.0,
            e11_upper: 0.5,
            q_z,
            e_z,
        };
    }
    let e11 = e11_unchecked(&t, y11, decoy);
    let s_pair = decoy.s_a * decoy.s_b * (-(decoy.s_a + decoy.s_b)).exp();
    let rate = decoy.p_s
        * decoy.p_s
        * (s_pair * y11 * privacy_factor(e11) - sys.f_ec * q_z * binary_entropy(e_z));
    KeyRateResult {
        rate: rate.max(0.0),
        y11_lower: y11,
        e11_upper: e11,
        q_z,
        e_z,
    }
}

/// Asymptotic rate bound from single-photon estimates, clamped at zero:
/// `P_s² (s_A s_B e^{−(s_A+s_B)} Y¹¹ [1 − H₂(e¹¹)] − f_EC Q_Z H₂(E_Z))`.
///
/// `q_z` is the signal-pair gain with send probabilities factored out, as in
/// [`SiftedCounts`].
pub fn asymptotic_key_rate(
    y11: f64,
    e11: f64,
    q_z: f64,
    e_z: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
) -> f64 {
    let s_pair = decoy.s_a * decoy.s_b * (-(decoy.s_a + decoy.s_b)).exp();
    let rate = decoy.p_s
        * decoy.p_s
        * (s_pair * y11 * privacy_factor(e11) - sys.f_ec * q_z * binary_entropy(e_z));
    rate.max(0.0)
}

pub(crate) fn check_statistics(sys: &SystemParams, decoy: &DecoyParams) -> Result<()> {
    let n = sys.n_pulses as f64;
    for k in Intensity::ALL {
        let p = decoy.probability(k);
        if !(n * p * p > 0.0) {
            return Err(Error::DegenerateStatistics(format!(
                "send probability of the {} state is {p}",
                k.name()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sifted_counts_unchecked, Counts};
    use crate::params::reference_points;
    use proptest::prelude::*;

    fn reference() -> (SystemParams, DecoyParams) {
        let r = reference_points()[1];
        (r.system(), r.decoy)
    }

    #[test]
    fn zero_gamma_collapses_interval() {
        let b = apply_bounds(3e-6, 1_000_000, 0.2, 0.3, 0.0).unwrap();
        assert_eq!(b.lower, b.central);
        assert_eq!(b.upper, b.central);
    }

    #[test]
    fn zero_sample_is_an_error() {
        assert!(matches!(
            apply_bounds(1e-6, 1000, 0.0, 0.3, 5.3),
            Err(Error::DegenerateStatistics(_))
        ));
        let (sys, mut d) = reference();
        d.p_nu = 1.0 - d.p_s - d.p_mu;
        let c = sifted_counts_unchecked(0.04, 0.04, &sys, &d);
        assert!(matches!(
            secure_key_rate(&c, &sys, &d),
            Err(Error::DegenerateStatistics(_))
        ));
    }

    #[test]
    fn lower_bound_is_clamped() {
        let b = apply_bounds(1e-12, 10, 0.1, 0.1, 5.3).unwrap();
        assert_eq!(b.lower, 0.0);
        assert!(b.upper > b.central);
    }

    #[test]
    fn entropy_properties() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        for i in 1..100 {
            let x = i as f64 / 100.0;
            assert!((binary_entropy(x) - binary_entropy(1.0 - x)).abs() < 1e-14);
        }
    }

    #[test]
    fn all_zero_gains_give_zero_yield() {
        let (_, d) = reference();
        let q = PairMap::<BoundedGain>::default();
        assert_eq!(y11_lower_bound(&q, &d).unwrap(), 0.0);
        assert_eq!(e11_upper_bound(&q, 1e-4, &d).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_decoy_and_zero_yield_are_errors() {
        let (_, mut d) = reference();
        let q = PairMap::<BoundedGain>::default();
        assert!(matches!(
            e11_upper_bound(&q, 0.0, &d),
            Err(Error::ZeroYield)
        ));
        d.nu_a = d.mu_a;
        assert!(matches!(
            y11_lower_bound(&q, &d),
            Err(Error::DegenerateDecoy { .. })
        ));
    }

    #[test]
    fn zero_yield_gives_zero_rate() {
        let (sys, d) = reference();
        let mut c = SiftedCounts::default();
        c.z = Counts { n: 1e-5, m: 1e-7 };
        let r = secure_key_rate(&c, &sys, &d).unwrap();
        assert_eq!(r.y11_lower, 0.0);
        assert_eq!(r.rate, 0.0);
    }

    #[test]
    fn saturated_phase_error_leaves_no_key() {
        let (sys, d) = reference();
        let rate = asymptotic_key_rate(1e-3, 0.5, 1e-5, 0.01, &sys, &d);
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn asymptotic_rate_without_errors() {
        let (sys, d) = reference();
        let y = 2e-4;
        let r = asymptotic_key_rate(y, 0.0, 1e-5, 0.0, &sys, &d);
        assert!((r - single_photon_cap(&d) * y).abs() <= 1e-15 * r);
    }

    #[test]
    fn reference_point_has_positive_rate() {
        let (sys, d) = reference();
        let c = sifted_counts_unchecked(0.04, 0.04, &sys, &d);
        let r = secure_key_rate(&c, &sys, &d).unwrap();
        assert!(r.rate > 0.0);
        assert!(r.e11_upper > 0.0 && r.e11_upper < 0.5);
        assert!(r.e_z > 0.0 && r.e_z < 0.05);
    }

    #[test]
    fn asymptotic_matches_finite_rate_in_the_large_n_limit() {
        let (sys, d) = reference();
        let c = sifted_counts_unchecked(0.04, 0.04, &sys, &d);
        let big = secure_key_rate(&c, &sys.with_pulses(u64::MAX / 4), &d).unwrap();
        let exact = secure_key_rate(&c, &sys.with_gamma(0.0), &d).unwrap();
        let asym = asymptotic_key_rate(
            exact.y11_lower,
            exact.e11_upper,
            exact.q_z,
            exact.e_z,
            &sys,
            &d,
        );
        assert_eq!(asym, exact.rate);
        assert!(
            ((big.rate - asym) / asym).abs() < 1e-3,
            "{} vs {}",
            big.rate,
            asym
        );
    }

    #[test]
    fn raising_nu_nu_gain_never_lowers_yield() {
        let (sys, d) = reference();
        let c = sifted_counts_unchecked(0.04, 0.04, &sys, &d);
        let (q, _) = gain_bounds(&c, &sys, &d).unwrap();
        let base = y11_lower_bound(&q, &d).unwrap();
        let mut prev = base;
        for k in 1..=20 {
            let mut q2 = q;
            let g = q2.get_mut(Intensity::Nu, Intensity::Nu);
            let bump = (g.upper - g.central) * k as f64 / 20.0;
            g.central += bump;
            g.lower += bump;
            g.upper += bump;
            let y = y11_lower_bound(&q2, &d).unwrap();
            assert!(y >= prev);
            prev = y;
        }
        assert!(prev > base);
    }

    proptest! {
        #[test]
        fn bounds_are_ordered(gain in 0.0f64..1.0, n in 1u64..u64::MAX / 2, pi in 1e-3f64..1.0, pj in 1e-3f64..1.0, g in 0.0f64..10.0) {
            let b = apply_bounds(gain, n, pi, pj, g).unwrap();
            prop_assert!(0.0 <= b.lower && b.lower <= b.central && b.central <= b.upper);
        }

        #[test]
        fn rate_is_capped(ea in 1e-4f64..1.0, eb in 1e-4f64..1.0, idx in 0usize..3, gamma in 0.0f64..6.0) {
            let r = reference_points()[idx];
            let sys = r.system().with_gamma(gamma);
            let c = sifted_counts_unchecked(ea, eb, &sys, &r.decoy);
            let k = secure_key_rate(&c, &sys, &r.decoy).unwrap();
            prop_assert!(k.rate >= 0.0 && k.rate <= single_photon_cap(&r.decoy));
            prop_assert!((0.0..=1.0).contains(&k.e11_upper));
        }

        #[test]
        fn asymptotic_rate_falls_with_phase_error(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let (sys, d) = reference();
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = asymptotic_key_rate(2e-4, lo, 1e-5, 0.01, &sys, &d);
            let b = asymptotic_key_rate(2e-4, hi, 1e-5, 0.01, &sys, &d);
            prop_assert!(b <= a);
        }
    }
}
