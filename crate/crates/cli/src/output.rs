use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Everything needed to rerun a subcommand. No timestamps or absolute paths,
/// so identical runs produce identical manifests.
#[derive(Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(subcommand: &'static str) -> Manifest {
        Manifest {
            tool: "protolens",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    /// Records an input by file name and content digest.
    pub fn input(&mut self, path: &Path, bytes: &[u8]) -> &mut Self {
        self.inputs.insert(file_name(path), sha256_hex(bytes));
        self
    }

    pub fn output(&mut self, name: &str, bytes: &[u8]) -> &mut Self {
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Collects files for an output directory and writes them, plus a manifest
/// listing their digests, once everything has been produced.
pub struct OutDir {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutDir {
    pub fn new(dir: &Path) -> OutDir {
        OutDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn finish(self, mut manifest: Manifest) -> Result<()> {
        for (name, bytes) in &self.files {
            manifest.output(name, bytes);
        }
        for (name, bytes) in &self.files {
            write_atomic(&self.dir.join(name), bytes)?;
        }
        write_atomic(&self.dir.join("manifest.json"), manifest.to_json().as_bytes())
    }
}

/// Writes a single report file and `<file>.manifest.json` beside it.
pub fn write_report(path: &Path, bytes: &[u8], mut manifest: Manifest) -> Result<()> {
    manifest.output(&file_name(path), bytes);
    write_atomic(path, bytes)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".manifest.json");
    write_atomic(Path::new(&side), manifest.to_json().as_bytes())
}
