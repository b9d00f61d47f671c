//! Run configuration: JSON object or `key=value` lines, then `--set` overrides.

use std::path::Path;

use dpcer::cer::Shape;
use dpcer::consensus::BlockingKind;
use dpcer::gibbs::{ChainConfig, ReshuffleMode, ScanOrder};
use dpcer::partition::EviOptions;
use dpcer::Parallelism;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: Option<u64>,
    pub reshuffle: ReshuffleMode,
    pub scan: ScanOrder,
    pub restarts: usize,
    pub n_sub: usize,
    pub blocking: BlockingKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        let chain = ChainConfig::default();
        let shape = Shape::default();
        RunConfig {
            a: shape.a,
            b: shape.b,
            c: shape.c,
            n_iter: chain.n_iter,
            burn_in: chain.burn_in,
            thin: chain.thin,
            seed: None,
            reshuffle: chain.reshuffle,
            scan: chain.scan,
            restarts: EviOptions::default().restarts,
            n_sub: 10,
            blocking: BlockingKind::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file, then `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut map = match serde_json::to_value(RunConfig::default()) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("RunConfig serializes to an object"),
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let parsed = if text.trim_start().starts_with('{') {
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::Usage(format!("{}: expected a JSON object", path.display()))),
                    Err(e) => return Err(CliError::Usage(format!("{}: {e}", path.display()))),
                }
            } else {
                parse_key_values(text.lines(), &path.display().to_string())?
            };
            map.extend(parsed);
        }
        map.extend(parse_key_values(overrides.iter().map(String::as_str), "--set")?);
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Usage("a seed is required (--seed or seed=...)".into()))
    }

    pub fn shape(&self) -> Shape {
        Shape { a: self.a, b: self.b, c: self.c }
    }

    pub fn chain(&self, parallelism: Parallelism) -> Result<ChainConfig, CliError> {
        Ok(ChainConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            reshuffle: self.reshuffle,
            scan: self.scan,
            seed: self.seed()?,
            parallelism,
        })
    }

    pub fn evi(&self, parallelism: Parallelism) -> Result<EviOptions, CliError> {
        Ok(EviOptions { restarts: self.restarts, seed: self.seed()?, parallelism, ..EviOptions::default() })
    }
}

fn parse_key_values<'a, I: Iterator<Item = &'a str>>(lines: I, origin: &str) -> Result<Map<String, Value>, CliError> {
    let mut map = Map::new();
    for (n, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key=value, got {line:?}", n + 1)))?;
        let value = value.trim();
        // Numbers and booleans keep their JSON type; anything else is a string.
        let v = serde_json::from_str::<Value>(value)
            .ok()
            .filter(|v| v.is_number() || v.is_boolean() || v.is_null())
            .unwrap_or_else(|| Value::String(value.to_string()));
        map.insert(key.trim().replace('-', "_"), v);
    }
    Ok(map)
}
