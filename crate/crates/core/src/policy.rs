//! Lookup-table attenuation policy.
//!
//! For a measured pair of transmittances the relay attenuates the stronger
//! arm by whichever amount on a fixed dB ladder maximises the static-channel
//! finite key rate. Tabulating that optimum over a transmittance grid gives
//! the [`AttenuationTable`] consulted during turbulence averaging.
//!
//! Insertion loss is modelled by [`VoaMode`]: an inline attenuator always
//! costs at least `min_insertion_db` on the arm it acts on, a bypassed one
//! costs nothing when disengaged. With `min_insertion_db = 0` the two coincide.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::finite_key::{secure_key_rate_unchecked, KeyRateResult};
use crate::noise::sifted_counts_unchecked;
use crate::params::{db_to_transmittance, DecoyParams, SystemParams};
use crate::turbulence::TransmittanceGrid;

pub const TABLE_FORMAT: &str = "mdi-atten-table";
pub const TABLE_FORMAT_MAJOR: u32 = 1;
pub const TABLE_FORMAT_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoaMode {
    /// The attenuator stays in the stronger arm; every setting costs at least
    /// the insertion loss.
    #[default]
    Inline,
    /// The attenuator can be switched out of the path at no cost.
    Bypass,
}

/// The dB ladder swept when searching for the optimal attenuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSettings {
    pub step_db: f64,
    pub max_db: f64,
    pub min_insertion_db: f64,
    pub voa: VoaMode,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            step_db: 0.1,
            max_db: 20.0,
            min_insertion_db: 0.0,
            voa: VoaMode::Inline,
        }
    }
}

impl SearchSettings {
    pub fn with_insertion(mut self, db: f64) -> Self {
        self.min_insertion_db = db;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_db > 0.0 && self.step_db.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "search step must be positive, got {}",
                self.step_db
            )));
        }
        if !(self.min_insertion_db >= 0.0
            && self.max_db >= self.min_insertion_db
            && self.max_db.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= min_insertion_db <= max_db, got {} and {}",
                self.min_insertion_db, self.max_db
            )));
        }
        Ok(())
    }

    /// Candidate attenuations in ascending order.
    pub fn candidates(&self) -> Vec<f64> {
        let start = self.min_insertion_db;
        let n = ((self.max_db - start) / self.step_db + 1e-9).floor() as usize;
        let mut out = Vec::with_capacity(n + 2);
        if self.voa == VoaMode::Bypass && start > 0.0 {
            out.push(0.0);
        }
        out.extend((0..=n).map(|k| start + k as f64 * self.step_db));
        out
    }
}

/// The chosen attenuation for one transmittance pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationChoice {
    /// Attenuation applied to the stronger arm, in dB.
    pub attenuation_db: f64,
    /// Static finite key rate at that attenuation.
    pub rate: f64,
    /// Static finite key rate with no attenuator in either arm.
    pub unattenuated_rate: f64,
    /// True when the optimum sits at the top of the ladder.
    pub at_cap: bool,
}

/// One point of an attenuation sweep at fixed transmittances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub attenuation_db: f64,
    pub result: KeyRateResult,
    /// Phase-error estimate from the expected counts, without the
    /// statistical widening (γ = 0). It tracks the interference visibility.
    pub e11_expected: f64,
}

struct Ladder {
    db: Vec<f64>,
    factor: Vec<f64>,
}

impl Ladder {
    fn new(search: &SearchSettings) -> Self {
        let db = search.candidates();
        let factor = db.iter().map(|&a| db_to_transmittance(a)).collect();
        Self { db, factor }
    }
}

/// Rate with the stronger arm scaled by `factor`. For party-symmetric decoy
/// settings the stronger arm is always evaluated as Alice so that swapped
/// inputs give bit-identical results.
#[inline]
fn static_rate(
    eta_a: f64,
    eta_b: f64,
    factor: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
) -> KeyRateResult {
    let a_stronger = eta_a >= eta_b;
    let (strong, weak) = if a_stronger {
        (eta_a, eta_b)
    } else {
        (eta_b, eta_a)
    };
    let strong = strong * factor;
    let counts = if a_stronger || decoy.is_symmetric() {
        sifted_counts_unchecked(strong, weak, sys, decoy)
    } else {
        sifted_counts_unchecked(weak, strong, sys, decoy)
    };
    secure_key_rate_unchecked(&counts, sys, decoy)
}

fn optimal_unchecked(
    eta_a: f64,
    eta_b: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
    ladder: &Ladder,
) -> AttenuationChoice {
    let mut best_db = ladder.db[0];
    let mut best_rate = f64::NEG_INFINITY;
    let mut best_idx = 0;
    for (k, (&db, &f)) in ladder.db.iter().zip(&ladder.factor).enumerate() {
        let r = static_rate(eta_a, eta_b, f, sys, decoy).rate;
        if r > best_rate {
            best_rate = r;
            best_db = db;
            best_idx = k;
        }
    }
    let unattenuated_rate = if ladder.db[0] == 0.0 {
        static_rate(eta_a, eta_b, ladder.factor[0], sys, decoy).rate
    } else {
        static_rate(eta_a, eta_b, 1.0, sys, decoy).rate
    };
    AttenuationChoice {
        attenuation_db: best_db,
        rate: best_rate,
        unattenuated_rate,
        at_cap: ladder.db.len() > 1 && best_idx == ladder.db.len() - 1,
    }
}

fn validate_inputs(sys: &SystemParams, decoy: &DecoyParams, search: &SearchSettings) -> Result<()> {
    sys.validate()?;
    decoy.validate()?;
    search.validate()?;
    crate::finite_key::check_statistics(sys, decoy)
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "transmittance must lie in [0, 1], got {eta}"
        )));
    }
    Ok(())
}

/// Sweep the attenuation ladder on the stronger arm and keep the best rate;
/// ties go to the smallest attenuation.
pub fn optimal_attenuation(
    eta_a: f64,
    eta_b: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
    search: &SearchSettings,
) -> Result<AttenuationChoice> {
    validate_inputs(sys, decoy, search)?;
    check_eta(eta_a)?;
    check_eta(eta_b)?;
    Ok(optimal_unchecked(
        eta_a,
        eta_b,
        sys,
        decoy,
        &Ladder::new(search),
    ))
}

/// Rate, yield and phase-error bounds at every rung of the ladder.
pub fn attenuation_profile(
    eta_a: f64,
    eta_b: f64,
    sys: &SystemParams,
    decoy: &DecoyParams,
    search: &SearchSettings,
) -> Result<Vec<ProfilePoint>> {
    validate_inputs(sys, decoy, search)?;
    check_eta(eta_a)?;
    check_eta(eta_b)?;
    let exact = sys.with_gamma(0.0);
    let ladder = Ladder::new(search);
    Ok(ladder
        .db
        .iter()
        .zip(&ladder.factor)
        .map(|(&db, &f)| ProfilePoint {
            attenuation_db: db,
            result: static_rate(eta_a, eta_b, f, sys, decoy),
            e11_expected: static_rate(eta_a, eta_b, f, &exact, decoy).e11_upper,
        })
        .collect())
}

/// SHA-256 over the canonical JSON of the parameters a table depends on.
pub fn parameter_fingerprint(sys: &SystemParams, decoy: &DecoyParams) -> String {
    let json = serde_json::to_string(&(sys, decoy)).expect("parameters serialise");
    sha256_hex(json.as_bytes())
}

/// Lower-case hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Optimal attenuation (dB) on a grid of transmittance pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationTable {
    grid_a: TransmittanceGrid,
    grid_b: TransmittanceGrid,
    /// Row-major over (Alice index, Bob index).
    values: Vec<f64>,
    search: SearchSettings,
    fingerprint: String,
}

impl AttenuationTable {
    pub fn from_parts(
        grid_a: TransmittanceGrid,
        grid_b: TransmittanceGrid,
        values: Vec<f64>,
        search: SearchSettings,
        fingerprint: String,
    ) -> Result<Self> {
        if values.is_empty() || grid_a.is_empty() || grid_b.is_empty() {
            return Err(Error::EmptyTable);
        }
        if values.len() != grid_a.len() * grid_b.len() {
            return Err(Error::InvalidParameter(format!(
                "table has {} values for a {}x{} grid",
                values.len(),
                grid_a.len(),
                grid_b.len()
            )));
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "table values must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            grid_a,
            grid_b,
            values,
            search,
            fingerprint,
        })
    }

    /// A table that never attenuates.
    pub fn zeros(
        grid_a: TransmittanceGrid,
        grid_b: TransmittanceGrid,
        fingerprint: String,
    ) -> Result<Self> {
        let n = grid_a.len() * grid_b.len();
        Self::from_parts(
            grid_a,
            grid_b,
            vec![0.0; n],
            SearchSettings::default(),
            fingerprint,
        )
    }

    pub fn grid_a(&self) -> &TransmittanceGrid {
        &self.grid_a
    }

    pub fn grid_b(&self) -> &TransmittanceGrid {
        &self.grid_b
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn search(&self) -> &SearchSettings {
        &self.search
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid_b.len() + j]
    }

    /// Stored attenuation of the nearest grid cell.
    #[inline]
    pub fn query(&self, eta_a: f64, eta_b: f64) -> f64 {
        self.value(
            self.grid_a.nearest_index(eta_a),
            self.grid_b.nearest_index(eta_b),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = TableHeader {
            format: TABLE_FORMAT.into(),
            format_version: TABLE_FORMAT_VERSION.into(),
            grid_a: GridSpec {
                step: self.grid_a.step(),
                len: self.grid_a.len(),
            },
            grid_b: GridSpec {
                step: self.grid_b.step(),
                len: self.grid_b.len(),
            },
            search: self.search,
            fingerprint: self.fingerprint.clone(),
        };
        writeln!(w, "# {}", serde_json::to_string(&header)?)?;
        writeln!(w, "etaA,etaB,attenuation_db")?;
        for (i, &ea) in self.grid_a.points().iter().enumerate() {
            for (j, &eb) in self.grid_b.points().iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{}",
                    fmt_f64(ea),
                    fmt_f64(eb),
                    fmt_f64(self.value(i, j))
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("empty table file".into()))??;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("table file must start with a '#' JSON header".into()))?;
        let header: TableHeader = serde_json::from_str(json.trim())?;
        if header.format != TABLE_FORMAT {
            return Err(Error::Format(format!(
                "unexpected format '{}'",
                header.format
            )));
        }
        check_major(&header.format_version, TABLE_FORMAT_MAJOR)?;
        match lines.next() {
            Some(Ok(l)) if l.trim() == "etaA,etaB,attenuation_db" => {}
            _ => {
                return Err(Error::Format(
                    "missing 'etaA,etaB,attenuation_db' column header".into(),
                ))
            }
        }
        let (na, nb) = (header.grid_a.len, header.grid_b.len);
        if na == 0 || nb == 0 {
            return Err(Error::EmptyTable);
        }
        let mut a_pts = Vec::with_capacity(na);
        let mut b_pts = Vec::with_capacity(nb);
        let mut values = Vec::with_capacity(na * nb);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = |name: &str| -> Result<f64> {
                cols.next()
                    .ok_or_else(|| Error::Format(format!("row {k}: missing {name}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {k}: bad {name}: {e}")))
            };
            let (ea, eb, v) = (next("etaA")?, next("etaB")?, next("attenuation_db")?);
            let (i, j) = (k / nb, k % nb);
            if i >= na {
                return Err(Error::Format(format!("more than {} rows", na * nb)));
            }
            if j == 0 {
                a_pts.push(ea);
            } else if a_pts[i] != ea {
                return Err(Error::Format(format!(
                    "row {k}: etaA changes inside a block"
                )));
            }
            if i == 0 {
                b_pts.push(eb);
            } else if b_pts[j] != eb {
                return Err(Error::Format(format!(
                    "row {k}: etaB does not repeat the first block"
                )));
            }
            values.push(v);
        }
        if values.len() != na * nb {
            return Err(Error::Format(format!(
                "expected {} rows, found {}",
                na * nb,
                values.len()
            )));
        }
        let grid_a = TransmittanceGrid::from_points(a_pts, header.grid_a.step)?;
        let grid_b = TransmittanceGrid::from_points(b_pts, header.grid_b.step)?;
        Self::from_parts(grid_a, grid_b, values, header.search, header.fingerprint)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridSpec {
    step: f64,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableHeader {
    format: String,
    format_version: String,
    grid_a: GridSpec,
    grid_b: GridSpec,
    search: SearchSettings,
    fingerprint: String,
}

/// Table plus the per-cell rates found while building it.
#[derive(Debug, Clone)]
pub struct TableBuild {
    pub table: AttenuationTable,
    pub optimal_rates: Vec<f64>,
    pub unattenuated_rates: Vec<f64>,
    /// Cells whose optimum sat at the top of the ladder.
    pub cap_hits: usize,
}

impl TableBuild {
    /// CSV of `etaA,etaB,rate_unattenuated,rate_optimal`.
    pub fn write_rates<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "etaA,etaB,rate_unattenuated,rate_optimal")?;
        let t = &self.table;
        for (i, &ea) in t.grid_a.points().iter().enumerate() {
            for (j, &eb) in t.grid_b.points().iter().enumerate() {
                let k = i * t.grid_b.len() + j;
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_f64(ea),
                    fmt_f64(eb),
                    fmt_f64(self.unattenuated_rates[k]),
                    fmt_f64(self.optimal_rates[k])
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn build_table(
    grid_a: &TransmittanceGrid,
    grid_b: &TransmittanceGrid,
    sys: &SystemParams,
    decoy: &DecoyParams,
    search: &SearchSettings,
) -> Result<AttenuationTable> {
    Ok(build_table_detailed(grid_a, grid_b, sys, decoy, search)?.table)
}

/// Fill every cell with [`optimal_attenuation`]. Rows are computed in
/// parallel on the current rayon pool; each cell depends only on its own
/// inputs, so the result does not depend on the worker count.
pub fn build_table_detailed(
    grid_a: &TransmittanceGrid,
    grid_b: &TransmittanceGrid,
    sys: &SystemParams,
    decoy: &DecoyParams,
    search: &SearchSettings,
) -> Result<TableBuild> {
    validate_inputs(sys, decoy, search)?;
    let ladder = Ladder::new(search);
    let rows: Vec<Vec<AttenuationChoice>> = grid_a
        .points()
        .par_iter()
        .map(|&ea| {
            grid_b
                .points()
                .iter()
                .map(|&eb| optimal_unchecked(ea, eb, sys, decoy, &ladder))
                .collect()
        })
        .collect();
    let cells: Vec<AttenuationChoice> = rows.into_iter().flatten().collect();
    let cap_hits = cells.iter().filter(|c| c.at_cap).count();
    if cap_hits > 0 {
        log::warn!(
            "{cap_hits} cells reached the {} dB search cap",
            search.max_db
        );
    }
    let table = AttenuationTable::from_parts(
        grid_a.clone(),
        grid_b.clone(),
        cells.iter().map(|c| c.attenuation_db).collect(),
        *search,
        parameter_fingerprint(sys, decoy),
    )?;
    Ok(TableBuild {
        table,
        optimal_rates: cells.iter().map(|c| c.rate).collect(),
        unattenuated_rates: cells.iter().map(|c| c.unattenuated_rate).collect(),
        cap_hits,
    })
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn check_major(version: &str, supported: u32) -> Result<()> {
    let major = version
        .split('.')
        .next()
        .and_then(|m| m.parse::<u32>().ok());
    if major != Some(supported) {
        return Err(Error::UnsupportedVersion {
            found: version.into(),
            supported,
        });
    }
    Ok(())
}
