//! Turbulence sweeps: averaged key rate against σ² for several mean losses
//! and attenuation modes, with a versioned CSV encoding.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{averaged_key_rate, AttenuationMode, ScenarioConfig, DEFAULT_MASS_CUTOFF};
use crate::params::{DecoyParams, SystemParams};
use crate::policy::{check_major, fmt_f64, AttenuationTable};
use crate::turbulence::{ChannelModel, TransmittanceGrid};

pub const SWEEP_FORMAT: &str = "mdi-atten-sweep";
pub const SWEEP_FORMAT_MAJOR: u32 = 1;
pub const SWEEP_FORMAT_VERSION: &str = "1.0";
pub const SWEEP_COLUMNS: &str = "sigma2,eta0_db,mode,rate";

/// The turbulence ladder swept by default.
pub const SIGMA2_LADDER: [f64; 7] = [0.001, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
/// Mean per-arm losses swept by default, in dB.
pub const LOSS_LADDER_DB: [f64; 4] = [8.0, 11.0, 14.0, 17.0];

/// Label used in the `mode` column for a dynamic run with the given insertion loss.
pub fn mode_label(insertion_db: Option<f64>) -> String {
    match insertion_db {
        None => "baseline".into(),
        Some(0.0) => "dynamic".into(),
        Some(x) => format!("dynamic_ins_{x}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma2: f64,
    /// Mean per-arm loss in dB.
    pub eta0_db: f64,
    pub mode: String,
    pub rate: f64,
}

/// A dynamic mode and the table it uses.
#[derive(Debug, Clone)]
pub struct DynamicMode {
    pub label: String,
    pub table: Arc<AttenuationTable>,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub system: SystemParams,
    pub decoy: DecoyParams,
    pub grid: TransmittanceGrid,
    pub sigma2: Vec<f64>,
    pub loss_db: Vec<f64>,
    pub include_baseline: bool,
    pub dynamic: Vec<DynamicMode>,
    pub mass_cutoff: f64,
}

impl SweepPlan {
    pub fn new(system: SystemParams, decoy: DecoyParams, grid: TransmittanceGrid) -> Self {
        Self {
            system,
            decoy,
            grid,
            sigma2: SIGMA2_LADDER.to_vec(),
            loss_db: LOSS_LADDER_DB.to_vec(),
            include_baseline: true,
            dynamic: Vec::new(),
            mass_cutoff: DEFAULT_MASS_CUTOFF,
        }
    }
}

/// One row per (loss, σ², mode), ordered by loss, then σ², then mode
/// (baseline first, then dynamic modes in plan order).
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    let mut modes: Vec<(String, AttenuationMode)> = Vec::new();
    if plan.include_baseline {
        modes.push((mode_label(None), AttenuationMode::Baseline));
    }
    for d in &plan.dynamic {
        modes.push((d.label.clone(), AttenuationMode::Dynamic(d.table.clone())));
    }
    let mut rows = Vec::with_capacity(plan.loss_db.len() * plan.sigma2.len() * modes.len());
    for &loss in &plan.loss_db {
        for &s2 in &plan.sigma2 {
            let channel = ChannelModel::from_loss_db(loss, s2)?;
            for (label, mode) in &modes {
                let mut cfg = ScenarioConfig::symmetric(
                    channel,
                    plan.system,
                    plan.decoy,
                    plan.grid.clone(),
                    mode.clone(),
                );
                cfg.mass_cutoff = plan.mass_cutoff;
                let rate = averaged_key_rate(&cfg)?.result.rate;
                log::debug!("loss {loss} dB, sigma2 {s2}, {label}: {rate:e}");
                rows.push(SweepRow {
                    sigma2: s2,
                    eta0_db: loss,
                    mode: label.clone(),
                    rate,
                });
            }
        }
    }
    Ok(rows)
}

/// Metadata written as the first line of a sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepHeader {
    pub format: String,
    pub format_version: String,
    pub grid_step: f64,
    pub coarse_grid: bool,
    pub mass_cutoff: f64,
    pub fingerprint: String,
}

impl SweepHeader {
    pub fn new(grid_step: f64, mass_cutoff: f64, fingerprint: String) -> Self {
        Self {
            format: SWEEP_FORMAT.into(),
            format_version: SWEEP_FORMAT_VERSION.into(),
            grid_step,
            coarse_grid: grid_step > crate::turbulence::DEFAULT_GRID_STEP,
            mass_cutoff,
            fingerprint,
        }
    }
}

pub fn write_sweep_csv<W: Write>(mut w: W, header: &SweepHeader, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "# {}", serde_json::to_string(header)?)?;
    writeln!(w, "{SWEEP_COLUMNS}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(r.sigma2),
            fmt_f64(r.eta0_db),
            r.mode,
            fmt_f64(r.rate)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: BufRead>(r: R) -> Result<(SweepHeader, Vec<SweepRow>)> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format("empty sweep file".into()))??;
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("sweep file must start with a '#' JSON header".into()))?;
    let header: SweepHeader = serde_json::from_str(json.trim())?;
    if header.format != SWEEP_FORMAT {
        return Err(Error::Format(format!(
            "unexpected format '{}'",
            header.format
        )));
    }
    check_major(&header.format_version, SWEEP_FORMAT_MAJOR)?;
    match lines.next() {
        Some(Ok(l)) if l.trim() == SWEEP_COLUMNS => {}
        _ => {
            return Err(Error::Format(format!(
                "missing '{SWEEP_COLUMNS}' column header"
            )))
        }
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!(
                "row {k}: expected 4 columns, found {}",
                cols.len()
            )));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("row {k}: {e}")))
        };
        rows.push(SweepRow {
            sigma2: num(cols[0])?,
            eta0_db: num(cols[1])?,
            mode: cols[2].to_string(),
            rate: num(cols[3])?,
        });
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::reference_points;
    use crate::policy::{build_table, parameter_fingerprint, SearchSettings};

    #[test]
    fn labels() {
        assert_eq!(mode_label(None), "baseline");
        assert_eq!(mode_label(Some(0.0)), "dynamic");
        assert_eq!(mode_label(Some(2.0)), "dynamic_ins_2");
        assert_eq!(mode_label(Some(2.5)), "dynamic_ins_2.5");
    }

    #[test]
    fn sweep_rows_and_csv_round_trip() {
        let r = reference_points()[1];
        let (sys, d) = (r.system(), r.decoy);
        let grid = TransmittanceGrid::uniform(0.02).unwrap();
        let table = build_table(&grid, &grid, &sys, &d, &SearchSettings::default()).unwrap();
        let mut plan = SweepPlan::new(sys, d, grid);
        plan.sigma2 = vec![0.2, 1.0];
        plan.loss_db = vec![8.0];
        plan.dynamic.push(DynamicMode {
            label: mode_label(Some(0.0)),
            table: Arc::new(table),
        });
        let rows = run_sweep(&plan).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].mode, "baseline");
        assert_eq!(rows[1].mode, "dynamic");
        assert!(rows[1].rate >= rows[0].rate);

        let header = SweepHeader::new(0.02, plan.mass_cutoff, parameter_fingerprint(&sys, &d));
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &header, &rows).unwrap();
        let (h, back) = read_sweep_csv(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, rows);
        assert!(h.coarse_grid);

        let text = String::from_utf8(buf)
            .unwrap()
            .replace("\"format_version\":\"1.0\"", "\"format_version\":\"2.0\"");
        assert!(matches!(
            read_sweep_csv(text.as_bytes()),
            Err(Error::UnsupportedVersion { .. })
        ));
    }
}
