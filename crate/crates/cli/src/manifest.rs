//! Run manifest and stage timings.
//!
//! The manifest holds only what is a function of config and inputs, so two
//! identical runs write identical manifests. Wall-clock timings go to a
//! separate file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cellmig::dataio::format_key_values;
use cellmig::sampler::RNG_ALGORITHM;
use cellmig::{par, Execution};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Failure;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TIMINGS_FILE: &str = "timings.txt";

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::io("checksum", path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug)]
pub struct Manifest {
    entries: Vec<(String, String)>,
    inputs: Vec<PathBuf>,
    timings: Vec<(String, f64)>,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        let mut entries = vec![
            ("tool".to_string(), env!("CARGO_PKG_NAME").to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("command".to_string(), config.command.name().to_string()),
            ("rng".to_string(), RNG_ALGORITHM.to_string()),
        ];
        entries.extend(config.settings.echo());
        Self {
            entries,
            inputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn record(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn add_inputs<'a>(&mut self, files: impl IntoIterator<Item = &'a Path>) {
        self.inputs.extend(files.into_iter().map(Path::to_path_buf));
    }

    /// Runs `f` as a named stage, recording its duration.
    pub fn stage<T>(&mut self, name: &'static str, f: impl FnOnce(&mut Self) -> Result<T, Failure>) -> Result<T, Failure> {
        let start = Instant::now();
        let out = f(self);
        self.timings.push((name.to_string(), start.elapsed().as_secs_f64() * 1e3));
        log::info!("{name}: {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
        out
    }

    /// Writes the manifest and timings into `dir`. Outputs already in `dir`
    /// are listed with their checksums.
    pub fn write(mut self, dir: &Path, exec: Execution, status: Result<(), &Failure>) -> Result<(), Failure> {
        match status {
            Ok(()) => self.record("status", "ok"),
            Err(f) => {
                self.record("status", "error");
                self.record("error.stage", f.stage);
                self.record("error.message", f.message.replace('\n', " "));
            }
        }
        let inputs = std::mem::take(&mut self.inputs);
        let sums = par::map(exec, &inputs, |p| sha256_file(p));
        for (i, (path, sum)) in inputs.iter().zip(sums).enumerate() {
            self.record(format!("input.{i}.path"), path.display());
            self.record(format!("input.{i}.sha256"), sum?);
        }
        let outputs = list_files(dir)?;
        for (i, rel) in outputs.iter().enumerate() {
            self.record(format!("output.{i}.path"), rel);
            self.record(format!("output.{i}.sha256"), sha256_file(&dir.join(rel))?);
        }
        write_file(&dir.join(MANIFEST_FILE), format_key_values(&self.entries).as_bytes())?;
        let timings: Vec<(String, String)> = self
            .timings
            .iter()
            .map(|(name, ms)| (format!("stage.{name}.ms"), format!("{ms:.3}")))
            .collect();
        write_file(&dir.join(TIMINGS_FILE), format_key_values(&timings).as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::io("write", path, e))
}

/// Files under `dir`, relative and '/'-separated, sorted, excluding the
/// manifest and timings.
fn list_files(dir: &Path) -> Result<Vec<String>, Failure> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), Failure> {
        let entries = std::fs::read_dir(dir).map_err(|e| Failure::io("manifest", dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Failure::io("manifest", dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.retain(|p| p != MANIFEST_FILE && p != TIMINGS_FILE);
    out.sort();
    Ok(out)
}
