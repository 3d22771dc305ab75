use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub status: &'a str,
    pub argv: &'a [String],
    pub versions: BTreeMap<&'static str, &'static str>,
    /// hash of the compact JSON form of `config`
    pub config_sha256: String,
    pub config: &'a RunConfig,
    pub inputs: Vec<InputFile>,
    pub outputs: &'a [String],
    pub timings_s: &'a BTreeMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

fn input_file(path: &Path) -> Result<InputFile, CliError> {
    let data = std::fs::read(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(InputFile {
        path: path.display().to_string(),
        bytes: data.len() as u64,
        sha256: sha256_hex(&data),
    })
}

/// Writes `config.json` and `manifest.json` into the output directory.
pub fn write(ctx: &mut Context, command: &str, argv: &[String], status: &str) -> Result<(), CliError> {
    let config_json = serde_json::to_string_pretty(&ctx.cfg).expect("config serializes");
    ctx.write("config.json", &config_json)?;
    let mut inputs = ctx.cfg.inputs().iter().map(|p| input_file(p)).collect::<Result<Vec<_>, _>>()?;
    inputs.extend(ctx.extra_inputs.iter().map(|p| input_file(p)).collect::<Result<Vec<_>, _>>()?);
    let mut versions = BTreeMap::new();
    versions.insert("outflow-cli", env!("CARGO_PKG_VERSION"));
    versions.insert("outflow-core", outflow_core::VERSION);
    let mut outputs = ctx.outputs.clone();
    outputs.push("manifest.json".into());
    let m = Manifest {
        command,
        status,
        argv,
        versions,
        config_sha256: config_hash(&ctx.cfg),
        config: &ctx.cfg,
        inputs,
        outputs: &outputs,
        timings_s: &ctx.timings,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    ctx.write("manifest.json", &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_strings() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
