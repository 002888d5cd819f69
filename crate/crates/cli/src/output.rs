//! Byte-stable artifacts: CSV tables, sorted-key JSON and the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// A CSV table with a fixed header.
#[derive(Clone, Debug)]
pub struct Table {
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Table {
        Table { header: header.iter().map(|s| s.as_ref().to_string()).collect(), body: String::new() }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        let _ = writeln!(self.body, "{}", cells.join(","));
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header.join(","), self.body)
    }
}

/// Pretty JSON with keys sorted at every level and a trailing newline.
pub fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v: Value = serde_json::to_value(value).map_err(|e| CliError::io(format!("serializing JSON: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::io(format!("serializing JSON: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let ctx = |e: std::io::Error| CliError::io(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(ctx)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(ctx)?;
    f.write_all(contents).map_err(ctx)?;
    f.sync_all().map_err(ctx)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(ctx)
}

/// Collects the artifacts of one invocation and writes the manifest last.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn new(dir: PathBuf) -> Artifacts {
        Artifacts { dir, checksums: BTreeMap::new() }
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        self.checksums.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(path)
    }

    pub fn finish(self, manifest: ManifestBody) -> Result<PathBuf, CliError> {
        let full = Manifest {
            tool: "brwre",
            version: env!("CARGO_PKG_VERSION"),
            checksums: self.checksums,
            body: manifest,
        };
        let path = self.dir.join("manifest.json");
        write_atomic(&path, json(&full)?.as_bytes())?;
        Ok(path)
    }
}

/// Per-command part of the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct ManifestBody {
    pub command: String,
    pub config: Value,
    pub seeds: Value,
    pub approx_sampling: bool,
    pub statuses: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    checksums: BTreeMap<String, String>,
    #[serde(flatten)]
    body: ManifestBody,
}
