//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use mdi_atten_core::params::db_to_transmittance;
use mdi_atten_core::{
    build_table, reference_points, AttenuationMode, AttenuationTable, ChannelModel, DecoyParams,
    ScenarioConfig, SearchSettings, SystemParams, TransmittanceGrid,
};

/// System and decoy settings of the middle reference row.
pub fn reference() -> (SystemParams, DecoyParams) {
    let r = reference_points()[1];
    (r.system(), r.decoy)
}

/// Table on a `step` grid for the reference settings.
pub fn table(step: f64) -> AttenuationTable {
    let (sys, decoy) = reference();
    let grid = TransmittanceGrid::uniform(step).expect("valid step");
    build_table(&grid, &grid, &sys, &decoy, &SearchSettings::default()).expect("table builds")
}

/// Symmetric scenario at `loss_db` per arm and `sigma2`, optionally dynamic.
pub fn scenario(
    loss_db: f64,
    sigma2: f64,
    step: f64,
    table: Option<Arc<AttenuationTable>>,
) -> ScenarioConfig {
    let (sys, decoy) = reference();
    let channel = ChannelModel::new(db_to_transmittance(loss_db), sigma2).expect("valid channel");
    let grid = TransmittanceGrid::uniform(step).expect("valid step");
    let mode = match table {
        Some(t) => AttenuationMode::Dynamic(t),
        None => AttenuationMode::Baseline,
    };
    ScenarioConfig::symmetric(channel, sys, decoy, grid, mode)
}
