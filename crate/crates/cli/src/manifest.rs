//! `manifest.json`: everything needed to rerun a command and to reload its outputs.

use std::path::{Path, PathBuf};

use dpcer::cer::Hyperparams;
use dpcer::Graph;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperparamRecord {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub n_nodes: usize,
    /// Hex edge bitstring.
    pub g0: String,
}

impl HyperparamRecord {
    pub fn new(h: &Hyperparams) -> Self {
        HyperparamRecord { a: h.a, b: h.b, c: h.c, n_nodes: h.n_nodes(), g0: h.g0.to_hex() }
    }

    pub fn hyperparams(&self) -> Result<Hyperparams, CliError> {
        let g0 = Graph::from_hex(self.n_nodes, &self.g0)?;
        Ok(Hyperparams::new(self.a, self.b, self.c, g0)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub workers: Option<usize>,
    pub config: RunConfig,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
    pub hyperparams: Option<HyperparamRecord>,
    pub seconds: f64,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, workers: Option<usize>) -> Self {
        Manifest {
            tool: env!("CARGO_BIN_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: std::env::args().collect(),
            workers,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            hyperparams: None,
            seconds: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        crate::write_file(&dir.join("manifest.json"), &(text + "\n"))
    }

    pub fn read(dir: &Path) -> Result<Manifest, CliError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
