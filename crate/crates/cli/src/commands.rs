use std::path::{Path, PathBuf};
use std::sync::Arc;

use mdi_atten_core::policy::fmt_f64;
use mdi_atten_core::sweep::{mode_label, write_sweep_csv, DynamicMode, SweepHeader};
use mdi_atten_core::{
    attenuation_profile, build_table_detailed, optimize_decoy, parameter_fingerprint, run_sweep,
    AttenuationTable, DecoyDocument, Error, SweepPlan, TransmittanceGrid, VoaMode,
};

use crate::config::Config;
use crate::manifest::Recorder;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ARTIFACT: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
const EXIT_RUNTIME: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn artifact(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ARTIFACT,
            message: message.into(),
        }
    }

    fn io(context: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: format!("{}: {e}", context.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::FingerprintMismatch { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Format(_)
            | Error::EmptyTable => EXIT_ARTIFACT,
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::Io(_) => EXIT_RUNTIME,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CmdResult = Result<(), CliError>;

fn insertion_suffix(search: &mdi_atten_core::SearchSettings) -> String {
    match (search.min_insertion_db > 0.0, search.voa) {
        (false, _) => String::new(),
        (true, VoaMode::Inline) => format!("_ins{}", search.min_insertion_db),
        (true, VoaMode::Bypass) => format!("_bypass_ins{}", search.min_insertion_db),
    }
}

fn sweep_label(table: &AttenuationTable) -> String {
    let s = table.search();
    match s.voa {
        VoaMode::Bypass if s.min_insertion_db > 0.0 => {
            format!("dynamic_bypass_ins_{}", s.min_insertion_db)
        }
        _ => mode_label(Some(s.min_insertion_db)),
    }
}

pub fn build_table(cfg: &Config, out: &Path) -> CmdResult {
    let suffix = insertion_suffix(&cfg.search);
    let mut rec = Recorder::new("build-table", &format!("table{suffix}"));
    let grid = TransmittanceGrid::uniform(cfg.grid.step)?;
    log::info!("building a {0}x{0} table", grid.len());
    let build = build_table_detailed(&grid, &grid, &cfg.system, &cfg.decoy, &cfg.search)?;
    if build.cap_hits > 0 {
        log::warn!(
            "{} cells hit the {} dB cap",
            build.cap_hits,
            cfg.search.max_db
        );
    }
    let mut table = Vec::new();
    build.table.write_to(&mut table)?;
    rec.write(out, &format!("table{suffix}.csv"), &table)
        .map_err(|e| CliError::io(out, e))?;
    let mut rates = Vec::new();
    build.write_rates(&mut rates)?;
    rec.write(out, &format!("rates{suffix}.csv"), &rates)
        .map_err(|e| CliError::io(out, e))?;
    rec.finish(out, cfg).map_err(|e| CliError::io(out, e))?;
    Ok(())
}

fn resolve(out: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

pub fn sweep(cfg: &Config, out: &Path) -> CmdResult {
    let mut rec = Recorder::new("sweep", "sweep");
    let expected = parameter_fingerprint(&cfg.system, &cfg.decoy);
    let mut dynamic: Vec<DynamicMode> = Vec::new();
    for p in &cfg.sweep.tables {
        let path = resolve(out, p);
        if !path.exists() {
            return Err(CliError::artifact(format!(
                "missing table {}",
                path.display()
            )));
        }
        let table = AttenuationTable::load(&path).map_err(|e| match e {
            Error::Io(io) => CliError::artifact(format!("{}: {io}", path.display())),
            other => {
                let mut c = CliError::from(other);
                c.message = format!("{}: {}", path.display(), c.message);
                c
            }
        })?;
        if table.fingerprint() != expected {
            return Err(CliError::artifact(format!(
                "{} was built for parameter fingerprint {}, configuration has {expected}",
                path.display(),
                table.fingerprint()
            )));
        }
        let label = sweep_label(&table);
        if dynamic.iter().any(|d| d.label == label) {
            return Err(CliError::config(format!(
                "two tables map to the sweep mode '{label}'"
            )));
        }
        dynamic.push(DynamicMode {
            label,
            table: Arc::new(table),
        });
    }
    if !cfg.sweep.include_baseline && dynamic.is_empty() {
        return Err(CliError::config(
            "sweep has no modes: enable the baseline or list tables",
        ));
    }
    let grid = TransmittanceGrid::uniform(cfg.grid.step)?;
    let plan = SweepPlan {
        system: cfg.system,
        decoy: cfg.decoy,
        grid,
        sigma2: cfg.sweep.sigma2.clone(),
        loss_db: cfg.sweep.loss_db.clone(),
        include_baseline: cfg.sweep.include_baseline,
        dynamic,
        mass_cutoff: cfg.sweep.mass_cutoff,
    };
    log::info!(
        "sweeping {} losses x {} sigma2 values",
        plan.loss_db.len(),
        plan.sigma2.len()
    );
    let rows = run_sweep(&plan)?;
    let header = SweepHeader::new(cfg.grid.step, cfg.sweep.mass_cutoff, expected);
    let mut bytes = Vec::new();
    write_sweep_csv(&mut bytes, &header, &rows)?;
    rec.write(out, "sweep.csv", &bytes)
        .map_err(|e| CliError::io(out, e))?;
    rec.finish(out, cfg).map_err(|e| CliError::io(out, e))?;
    Ok(())
}

pub fn optimize(cfg: &Config, out: &Path) -> CmdResult {
    let mut rec = Recorder::new("optimize", "optimize");
    let settings = cfg.optimize;
    let result = optimize_decoy(&cfg.system, &settings)?;
    log::info!(
        "best rate {:e} after {} evaluations",
        result.rate,
        result.evaluations
    );
    let doc = DecoyDocument::new(&result, &settings);
    let mut json = serde_json::to_string_pretty(&doc).map_err(|e| CliError {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    })?;
    json.push('\n');
    rec.write(out, "decoy.json", json.as_bytes())
        .map_err(|e| CliError::io(out, e))?;
    let mut history = String::from("generation,best_rate\n");
    for (g, r) in result.history.iter().enumerate() {
        history.push_str(&format!("{g},{}\n", fmt_f64(*r)));
    }
    rec.write(out, "optimize_history.csv", history.as_bytes())
        .map_err(|e| CliError::io(out, e))?;
    rec.finish(out, cfg).map_err(|e| CliError::io(out, e))?;
    Ok(())
}

pub fn profile(cfg: &Config, out: &Path) -> CmdResult {
    let mut rec = Recorder::new("profile", "profile");
    let (a, b) = (cfg.profile.eta_a, cfg.profile.eta_b);
    let points = attenuation_profile(a, b, &cfg.system, &cfg.decoy, &cfg.search)?;
    let mut csv = format!(
        "# {{\"format\":\"mdi-atten-profile\",\"format_version\":\"1.0\",\"eta_a\":{},\"eta_b\":{}}}\n",
        fmt_f64(a),
        fmt_f64(b)
    );
    csv.push_str("attenuation_db,rate,y11_lower,e11_upper,e11_expected\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(p.attenuation_db),
            fmt_f64(p.result.rate),
            fmt_f64(p.result.y11_lower),
            fmt_f64(p.result.e11_upper),
            fmt_f64(p.e11_expected)
        ));
    }
    rec.write(out, "profile.csv", csv.as_bytes())
        .map_err(|e| CliError::io(out, e))?;
    rec.finish(out, cfg).map_err(|e| CliError::io(out, e))?;
    Ok(())
}
