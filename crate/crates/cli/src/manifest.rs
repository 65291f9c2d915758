use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Recorded with every output. The copy embedded in reports carries no
/// timings so that reruns are byte-identical; timings go to the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// Arguments after the program name.
    pub argv: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C, argv: &[String]) -> CliResult<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config)?,
            argv: argv.to_vec(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub manifest: RunManifest,
    pub working_directory: String,
    pub outputs: Vec<String>,
    pub timings: Vec<PhaseTiming>,
}

#[derive(Default)]
pub struct Timer {
    phases: Vec<PhaseTiming>,
}

impl Timer {
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.phases.push(PhaseTiming {
            phase: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn sidecar(self, manifest: &RunManifest, outputs: &[&Path]) -> Sidecar {
        Sidecar {
            manifest: manifest.clone(),
            working_directory: std::env::current_dir()
                .map(|d| d.display().to_string())
                .unwrap_or_default(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            timings: self.phases,
        }
    }
}

/// Accepts a sidecar, a report with an embedded `manifest`, or a bare manifest.
pub fn load_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let inner = value.get("manifest").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| CliError::usage(format!("{}: not a run manifest: {e}", path.display())))
}
