//! Atomic file output and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lmphc_core::{Error, Result};

/// Version string of the build: package version and `git describe`.
pub const GIT_DESCRIBE: &str = env!("LMPHC_GIT_DESCRIBE");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the files of one run and writes them atomically.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

#[derive(Serialize)]
struct FileEntry<'a> {
    file: &'a str,
    sha256: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_sha256: String,
    package_version: &'a str,
    core_version: &'a str,
    git_describe: &'a str,
    config: std::collections::BTreeMap<&'a str, &'a str>,
    files: Vec<FileEntry<'a>>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` through a temporary file and a rename.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.files.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, command: &str, seed: u64, echo: &str) -> Result<()> {
        let config: std::collections::BTreeMap<&str, &str> = echo
            .lines()
            .filter(|l| !l.starts_with('#'))
            .filter_map(|l| l.split_once('='))
            .collect();
        let files = std::mem::take(&mut self.files);
        let m = Manifest {
            command,
            seed,
            config_sha256: sha256_hex(echo.as_bytes()),
            package_version: env!("CARGO_PKG_VERSION"),
            core_version: lmphc_core::VERSION,
            git_describe: GIT_DESCRIBE,
            config,
            files: files.iter().map(|(f, h)| FileEntry { file: f, sha256: h }).collect(),
        };
        self.write_json("manifest.json", &m)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |e| Error::Io { path: p, source: e }
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}
