//! Run manifest: what was run, with which resolved configuration, what it
//! produced and how long each stage took. Re-running the recorded command
//! with the recorded configuration reproduces every CSV and SVG byte for
//! byte; only the wall-clock entries differ.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub wall_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Flag values as given on the command line.
    pub args: BTreeMap<String, String>,
    /// Digest of the resolved configuration (canonical TOML serialisation).
    pub config_sha256: String,
    /// The fully resolved configuration the run used.
    pub config: ExperimentConfig,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
}

/// Column documentation for one emitted CSV, collected into `schema.json`.
#[derive(Debug, Serialize)]
pub struct FileSchema {
    pub file: String,
    pub columns: Vec<ColumnSchema>,
}

#[derive(Debug, Serialize)]
pub struct ColumnSchema {
    pub name: String,
    pub description: String,
}

/// Output sink: writes files under the run directory and records a checksum
/// for each, so the manifest can list everything the run produced.
pub struct RunWriter {
    root: PathBuf,
    manifest: RunManifest,
    schemas: Vec<FileSchema>,
}

impl RunWriter {
    pub fn new(
        root: &Path,
        command: &str,
        args: BTreeMap<String, String>,
        config: &ExperimentConfig,
    ) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        let canonical =
            toml::to_string_pretty(config).expect("configuration always serialises");
        Ok(RunWriter {
            root: root.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                args,
                config_sha256: sha256_hex(canonical.as_bytes()),
                config: config.clone(),
                stages: Vec::new(),
                outputs: Vec::new(),
            },
            schemas: Vec::new(),
        })
    }

    /// Write one output file and record its checksum.
    pub fn write_file(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, contents)?;
        self.manifest.outputs.push(OutputRecord {
            file: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    /// Document the columns of a CSV this run emitted.
    pub fn describe(&mut self, file: &str, columns: &[(&str, &str)]) {
        self.schemas.push(FileSchema {
            file: file.to_string(),
            columns: columns
                .iter()
                .map(|(name, description)| ColumnSchema {
                    name: name.to_string(),
                    description: description.to_string(),
                })
                .collect(),
        });
    }

    /// Run a stage, record its wall time, and print a progress line.
    pub fn stage<T, E>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<T, E>,
    ) -> Result<T, E> {
        let start = Instant::now();
        let out = f()?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        println!("  stage {name}: {wall_ms:.0} ms");
        self.manifest.stages.push(StageRecord { name: name.to_string(), wall_ms });
        Ok(out)
    }

    /// Write `schema.json` and `manifest.json` and finish the run.
    pub fn finish(mut self) -> std::io::Result<()> {
        let schema = serde_json::to_string_pretty(&self.schemas).expect("schema serialises");
        self.write_file("schema.json", &schema)?;
        let manifest =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        // The manifest itself is not listed in its own outputs.
        std::fs::write(self.root.join("manifest.json"), &manifest)?;
        println!(
            "  wrote {} output files + manifest.json to {}",
            self.manifest.outputs.len(),
            self.root.display()
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
