//! Turbulence averaging over the joint transmittance distribution.
//!
//! Sifted and error counts are averaged first and the finite-key chain is
//! applied once to the averages. The rate-averaging form is available as
//! [`averaged_rate_asymptotic`] for comparison.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finite_key::{
    asymptotic_key_rate, check_statistics, secure_key_rate_unchecked, KeyRateResult,
};
use crate::noise::{model_validity_exceeded, sifted_counts_unchecked, SiftedCounts};
use crate::params::{db_to_transmittance, DecoyParams, SystemParams};
use crate::policy::{parameter_fingerprint, AttenuationTable};
use crate::turbulence::{discretize, ChannelModel, TransmittanceGrid};

/// Joint cells lighter than this are skipped.
pub const DEFAULT_MASS_CUTOFF: f64 = 1e-15;

#[derive(Debug, Clone)]
pub enum AttenuationMode {
    Baseline,
    /// Attenuate the stronger arm by the table value before evaluating counts.
    Dynamic(Arc<AttenuationTable>),
}

impl AttenuationMode {
    pub fn is_dynamic(&self) -> bool {
        matches!(self, AttenuationMode::Dynamic(_))
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub channel_a: ChannelModel,
    pub channel_b: ChannelModel,
    pub system: SystemParams,
    pub decoy: DecoyParams,
    pub grid: TransmittanceGrid,
    pub mode: AttenuationMode,
    pub mass_cutoff: f64,
}

impl ScenarioConfig {
    /// Both arms share one channel model.
    pub fn symmetric(
        channel: ChannelModel,
        system: SystemParams,
        decoy: DecoyParams,
        grid: TransmittanceGrid,
        mode: AttenuationMode,
    ) -> Self {
        Self {
            channel_a: channel,
            channel_b: channel,
            system,
            decoy,
            grid,
            mode,
            mass_cutoff: DEFAULT_MASS_CUTOFF,
        }
    }

    pub fn with_mode(mut self, mode: AttenuationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.channel_a.validate()?;
        self.channel_b.validate()?;
        self.system.validate()?;
        self.decoy.validate()?;
        check_statistics(&self.system, &self.decoy)?;
        if !(self.mass_cutoff >= 0.0 && self.mass_cutoff < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mass cutoff must lie in [0, 1), got {}",
                self.mass_cutoff
            )));
        }
        if let AttenuationMode::Dynamic(table) = &self.mode {
            let expected = parameter_fingerprint(&self.system, &self.decoy);
            if table.fingerprint() != expected {
                return Err(Error::FingerprintMismatch {
                    expected,
                    found: table.fingerprint().to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Probability-weighted counts and integration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedCounts {
    pub counts: SiftedCounts,
    /// Joint mass actually accumulated (one minus the skipped mass).
    pub total_mass: f64,
    pub skipped_cells: usize,
    /// Mass each channel loses to the truncation at η = 1, before renormalising.
    pub tail_mass_a: f64,
    pub tail_mass_b: f64,
    /// True if a weighted cell lies outside the photon-number model's validity range.
    pub validity_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRate {
    pub result: KeyRateResult,
    pub averaged: AveragedCounts,
}

trait Accumulator: Send + Default {
    fn merge(&mut self, other: &Self);
}

impl Accumulator for SiftedCounts {
    fn merge(&mut self, other: &Self) {
        self.add(other);
    }
}

impl Accumulator for f64 {
    fn merge(&mut self, other: &Self) {
        *self += *other;
    }
}

#[inline]
fn attenuate(eta_a: f64, eta_b: f64, mode: &AttenuationMode) -> (f64, f64) {
    match mode {
        AttenuationMode::Baseline => (eta_a, eta_b),
        AttenuationMode::Dynamic(table) => {
            let db = table.query(eta_a, eta_b);
            if db == 0.0 {
                (eta_a, eta_b)
            } else if eta_a >= eta_b {
                (eta_a * db_to_transmittance(db), eta_b)
            } else {
                (eta_a, eta_b * db_to_transmittance(db))
            }
        }
    }
}

struct Row<T> {
    acc: T,
    mass: f64,
    skipped: usize,
    max_eta: f64,
}

/// Row-parallel weighted sum over the joint grid. Each row is summed in
/// column order and rows are merged in row order, so the result does not
/// depend on the number of workers.
fn integrate<T, F>(cfg: &ScenarioConfig, cell: F) -> Result<(T, AveragedCounts)>
where
    T: Accumulator,
    F: Fn(&mut T, f64, f64, f64) + Sync,
{
    cfg.validate()?;
    let da = discretize(&cfg.channel_a, &cfg.grid)?;
    let db = discretize(&cfg.channel_b, &cfg.grid)?;
    let pts = cfg.grid.points();
    let rows: Vec<Row<T>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut row = Row {
                acc: T::default(),
                mass: 0.0,
                skipped: 0,
                max_eta: 0.0,
            };
            for j in 0..pts.len() {
                let w = da.masses[i] * db.masses[j];
                if w == 0.0 || w < cfg.mass_cutoff {
                    row.skipped += 1;
                    continue;
                }
                let (ea, eb) = attenuate(pts[i], pts[j], &cfg.mode);
                cell(&mut row.acc, ea, eb, w);
                row.mass += w;
                row.max_eta = row.max_eta.max(ea).max(eb);
            }
            row
        })
        .collect();

    let mut acc = T::default();
    let mut total_mass = 0.0;
    let mut skipped_cells = 0;
    let mut max_eta: f64 = 0.0;
    for r in &rows {
        acc.merge(&r.acc);
        total_mass += r.mass;
        skipped_cells += r.skipped;
        max_eta = max_eta.max(r.max_eta);
    }
    let validity_exceeded = model_validity_exceeded(max_eta, &cfg.system, &cfg.decoy);
    if validity_exceeded {
        log::warn!("weighted transmittance {max_eta:.3} is outside the photon-number model's validity range");
    }
    let diag = AveragedCounts {
        counts: SiftedCounts::default(),
        total_mass,
        skipped_cells,
        tail_mass_a: da.tail_mass,
        tail_mass_b: db.tail_mass,
        validity_exceeded,
    };
    Ok((acc, diag))
}

/// PDTC-weighted sifted and error counts.
pub fn integrate_counts(cfg: &ScenarioConfig) -> Result<AveragedCounts> {
    let (sys, decoy) = (&cfg.system, &cfg.decoy);
    let (counts, mut diag) = integrate(cfg, |acc: &mut SiftedCounts, ea, eb, w| {
        acc.add_scaled(&sifted_counts_unchecked(ea, eb, sys, decoy), w);
    })?;
    diag.counts = counts;
    Ok(diag)
}

/// Finite key rate of the averaged counts.
pub fn averaged_key_rate(cfg: &ScenarioConfig) -> Result<AveragedRate> {
    let averaged = integrate_counts(cfg)?;
    let result = secure_key_rate_unchecked(&averaged.counts, &cfg.system, &cfg.decoy);
    Ok(AveragedRate { result, averaged })
}

/// Mass-weighted sum of per-cell asymptotic rates. Each cell uses the
/// single-photon estimates from its expected counts, without statistical
/// widening.
pub fn averaged_rate_asymptotic(cfg: &ScenarioConfig) -> Result<f64> {
    let exact = cfg.system.with_gamma(0.0);
    let (sys, decoy) = (&cfg.system, &cfg.decoy);
    let (rate, _) = integrate(cfg, |acc: &mut f64, ea, eb, w| {
        let c = sifted_counts_unchecked(ea, eb, &exact, decoy);
        let est = secure_key_rate_unchecked(&c, &exact, decoy);
        *acc += w * asymptotic_key_rate(est.y11_lower, est.e11_upper, est.q_z, est.e_z, sys, decoy);
    })?;
    Ok(rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::all_sifted_counts;
    use crate::params::reference_points;
    use crate::policy::{build_table, SearchSettings};
    use crate::turbulence::COARSE_GRID_STEP;

    fn reference() -> (SystemParams, DecoyParams) {
        let r = reference_points()[1];
        (r.system(), r.decoy)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn single_cell_grid_is_pointwise() {
        let (sys, d) = reference();
        let grid = TransmittanceGrid::single(0.04, 0.001).unwrap();
        let ch = ChannelModel::new(0.04, 0.5).unwrap();
        let cfg = ScenarioConfig::symmetric(ch, sys, d, grid, AttenuationMode::Baseline);
        let avg = integrate_counts(&cfg).unwrap();
        assert_eq!(avg.counts, all_sifted_counts(0.04, 0.04, &sys, &d).unwrap());
        let r = averaged_key_rate(&cfg).unwrap();
        assert_eq!(r.result, secure_key_rate_unchecked(&avg.counts, &sys, &d));
        let asym = averaged_rate_asymptotic(&cfg).unwrap();
        let exact = sys.with_gamma(0.0);
        let est =
            secure_key_rate_unchecked(&sifted_counts_unchecked(0.04, 0.04, &exact, &d), &exact, &d);
        assert_eq!(
            asym,
            asymptotic_key_rate(est.y11_lower, est.e11_upper, est.q_z, est.e_z, &sys, &d)
        );
    }

    #[test]
    fn weak_turbulence_concentrates_on_mean() {
        let (sys, d) = reference();
        let grid = TransmittanceGrid::uniform(0.001).unwrap();
        let ch = ChannelModel::new(0.04, 0.001).unwrap();
        let cfg = ScenarioConfig::symmetric(ch, sys, d, grid, AttenuationMode::Baseline);
        let avg = integrate_counts(&cfg).unwrap();
        let point = all_sifted_counts(0.04, 0.04, &sys, &d).unwrap();
        assert!(rel(avg.counts.z.n, point.z.n) < 0.01);
        assert!(rel(avg.counts.z.m, point.z.m) < 0.01);
        for (a, p) in avg
            .counts
            .x
            .0
            .iter()
            .flatten()
            .zip(point.x.0.iter().flatten())
        {
            if p.n > 0.0 {
                assert!(rel(a.n, p.n) < 0.01 && rel(a.m, p.m) < 0.01);
            }
        }
    }

    #[test]
    fn averaged_counts_are_probabilities() {
        let (sys, d) = reference();
        let grid = TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap();
        let ch = ChannelModel::from_loss_db(8.0, 1.2).unwrap();
        let cfg = ScenarioConfig::symmetric(ch, sys, d, grid, AttenuationMode::Baseline);
        let avg = integrate_counts(&cfg).unwrap();
        for c in avg.counts.entries() {
            assert!(0.0 <= c.m && c.m <= c.n && c.n <= 1.0);
        }
        assert!((avg.total_mass - 1.0).abs() < 1e-9);
        assert!(avg.tail_mass_a >= 0.0);
    }

    #[test]
    fn zero_table_matches_baseline_bitwise() {
        let (sys, d) = reference();
        let grid = TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap();
        let table =
            AttenuationTable::zeros(grid.clone(), grid.clone(), parameter_fingerprint(&sys, &d))
                .unwrap();
        let ch = ChannelModel::from_loss_db(11.0, 0.8).unwrap();
        let base = ScenarioConfig::symmetric(ch, sys, d, grid, AttenuationMode::Baseline);
        let dynamic = base
            .clone()
            .with_mode(AttenuationMode::Dynamic(Arc::new(table)));
        assert_eq!(
            averaged_key_rate(&base).unwrap(),
            averaged_key_rate(&dynamic).unwrap()
        );
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let (sys, d) = reference();
        let grid = TransmittanceGrid::uniform(0.1).unwrap();
        let table = build_table(&grid, &grid, &sys, &d, &SearchSettings::default()).unwrap();
        let ch = ChannelModel::from_loss_db(11.0, 0.8).unwrap();
        let cfg = ScenarioConfig::symmetric(
            ch,
            sys.with_gamma(3.0),
            d,
            grid,
            AttenuationMode::Dynamic(Arc::new(table)),
        );
        assert!(matches!(
            integrate_counts(&cfg),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn masking_negligible_cells_is_harmless() {
        let (sys, d) = reference();
        let grid = TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap();
        let ch = ChannelModel::from_loss_db(14.0, 0.2).unwrap();
        let mut full = ScenarioConfig::symmetric(ch, sys, d, grid, AttenuationMode::Baseline);
        full.mass_cutoff = 0.0;
        let masked = ScenarioConfig {
            mass_cutoff: 1e-15,
            ..full.clone()
        };
        let (a, b) = (
            averaged_key_rate(&full).unwrap(),
            averaged_key_rate(&masked).unwrap(),
        );
        assert!(b.averaged.skipped_cells > a.averaged.skipped_cells);
        assert!(rel(b.result.rate, a.result.rate) < 1e-9);
        let (a, b) = (
            averaged_rate_asymptotic(&full).unwrap(),
            averaged_rate_asymptotic(&masked).unwrap(),
        );
        assert!(rel(b, a) < 1e-9);
    }

    #[test]
    fn counts_first_differs_from_rate_averaging() {
        let (sys, d) = reference();
        let grid = TransmittanceGrid::uniform(COARSE_GRID_STEP).unwrap();
        let ch = ChannelModel::from_loss_db(11.0, 1.0).unwrap();
        let inf = sys.with_gamma(0.0).with_pulses(u64::MAX / 4);
        let cfg = ScenarioConfig::symmetric(ch, inf, d, grid, AttenuationMode::Baseline);
        let counts_first = averaged_key_rate(&cfg).unwrap().result.rate;
        let rate_avg = averaged_rate_asymptotic(&cfg).unwrap();
        assert!(counts_first > 0.0 && rate_avg > 0.0);
        assert_ne!(counts_first, rate_avg);
    }
}
