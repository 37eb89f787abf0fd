//! TOML run configuration. Every section is optional; missing sections take
//! the reference system (N = 10¹³ row) and the defaults of the core crate.

use std::path::{Path, PathBuf};

use mdi_atten_core::sweep::{LOSS_LADDER_DB, SIGMA2_LADDER};
use mdi_atten_core::turbulence::COARSE_GRID_STEP;
use mdi_atten_core::{
    reference_points, DecoyParams, OptimizerSettings, SearchSettings, SystemParams,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub system: SystemParams,
    pub decoy: DecoyParams,
    pub grid: GridConfig,
    pub search: SearchSettings,
    pub sweep: SweepConfig,
    pub optimize: OptimizerSettings,
    pub profile: ProfileConfig,
}

impl Default for Config {
    fn default() -> Self {
        let r = reference_points()[1];
        Self {
            system: r.system(),
            decoy: r.decoy,
            grid: GridConfig::default(),
            search: SearchSettings::default(),
            sweep: SweepConfig::default(),
            optimize: OptimizerSettings {
                design_eta: r.design_eta(),
                ..Default::default()
            },
            profile: ProfileConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Transmittance spacing for tables and averaging.
    pub step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            step: COARSE_GRID_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub sigma2: Vec<f64>,
    /// Mean per-arm losses in dB.
    pub loss_db: Vec<f64>,
    pub include_baseline: bool,
    /// Attenuation tables, one dynamic mode each. Relative paths resolve
    /// against the output directory.
    pub tables: Vec<PathBuf>,
    pub mass_cutoff: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigma2: SIGMA2_LADDER.to_vec(),
            loss_db: LOSS_LADDER_DB.to_vec(),
            include_baseline: true,
            tables: Vec::new(),
            mass_cutoff: mdi_atten_core::integrator::DEFAULT_MASS_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub eta_a: f64,
    pub eta_b: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            eta_a: 0.15,
            eta_b: 0.04,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let e = |x: mdi_atten_core::Error| x.to_string();
        self.system.validate().map_err(e)?;
        self.decoy.validate().map_err(e)?;
        self.search.validate().map_err(e)?;
        if !(self.grid.step > 0.0 && self.grid.step <= 1.0) {
            return Err(format!(
                "grid.step must lie in (0, 1], got {}",
                self.grid.step
            ));
        }
        if self
            .sweep
            .sigma2
            .iter()
            .any(|&s| !(s > 0.0 && s <= mdi_atten_core::turbulence::MAX_SIGMA2))
        {
            return Err("sweep.sigma2 values must lie in (0, 1.2]".into());
        }
        if self
            .sweep
            .loss_db
            .iter()
            .any(|&l| !(l >= 0.0 && l.is_finite()))
        {
            return Err("sweep.loss_db values must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.sweep.mass_cutoff) {
            return Err(format!(
                "sweep.mass_cutoff must lie in [0, 1), got {}",
                self.sweep.mass_cutoff
            ));
        }
        for (name, v) in [
            ("profile.eta_a", self.profile.eta_a),
            ("profile.eta_b", self.profile.eta_b),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(Config::parse(&text).unwrap(), c);
    }

    #[test]
    fn sections_override_defaults() {
        let c = Config::parse(
            "[system]\ngamma = 3.0\n[grid]\nstep = 0.1\n[search]\nmin_insertion_db = 2.0\nvoa = \"bypass\"\n",
        )
        .unwrap();
        assert_eq!(c.system.gamma, 3.0);
        assert_eq!(c.system.eta_d, 0.5);
        assert_eq!(c.grid.step, 0.1);
        assert_eq!(c.search.voa, mdi_atten_core::VoaMode::Bypass);
    }

    #[test]
    fn unknown_and_invalid_fields_are_rejected() {
        assert!(Config::parse("[system]\ngama = 3.0\n").is_err());
        assert!(Config::parse("[grid]\nstep = 0.0\n").is_err());
        assert!(Config::parse("[sweep]\nsigma2 = [2.0]\n").is_err());
        assert!(Config::parse("[system\n").is_err());
    }
}
