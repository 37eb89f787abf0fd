use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use mdi_atten_core::sha256_hex;
use serde::Serialize;

use crate::config::Config;

pub const MANIFEST_FORMAT: &str = "mdi-atten-manifest";
pub const MANIFEST_FORMAT_VERSION: &str = "1.0";

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    /// File name relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to reproduce one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub format_version: &'static str,
    pub command: String,
    pub library_version: &'static str,
    pub config: Config,
    pub parameter_fingerprint: String,
    pub grid_step: f64,
    pub coarse_grid: bool,
    pub threads: usize,
    pub artifacts: Vec<Artifact>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
}

pub struct Recorder {
    command: String,
    stem: String,
    started: Instant,
    started_unix_s: u64,
    artifacts: Vec<Artifact>,
}

impl Recorder {
    /// `stem` names the manifest file, `{stem}.manifest.json`.
    pub fn new(command: &str, stem: &str) -> Self {
        Self {
            command: command.into(),
            stem: stem.into(),
            started: Instant::now(),
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            artifacts: Vec::new(),
        }
    }

    /// Write an artefact into `dir` and remember its digest.
    pub fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        std::fs::write(dir.join(name), bytes)?;
        self.artifacts.push(Artifact {
            path: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn finish(self, dir: &Path, config: &Config) -> std::io::Result<RunManifest> {
        let manifest = RunManifest {
            format: MANIFEST_FORMAT,
            format_version: MANIFEST_FORMAT_VERSION,
            command: self.command.clone(),
            library_version: mdi_atten_core::VERSION,
            config: config.clone(),
            parameter_fingerprint: mdi_atten_core::parameter_fingerprint(
                &config.system,
                &config.decoy,
            ),
            grid_step: config.grid.step,
            coarse_grid: config.grid.step > mdi_atten_core::turbulence::DEFAULT_GRID_STEP,
            threads: rayon::current_num_threads(),
            artifacts: self.artifacts,
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join(format!("{}.manifest.json", self.stem)), text)?;
        Ok(manifest)
    }
}
