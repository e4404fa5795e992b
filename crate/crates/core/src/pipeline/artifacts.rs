//! Run artifacts: manifests, content hashes, and loss-curve CSVs.
//!
//! Everything written here is byte-reproducible for a fixed seed and config,
//! with one exception: the manifest's `timestamp_unix` line. Reproducibility
//! checks must compare manifests with that single line stripped.

use crate::error::Result;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const TIMESTAMP_KEY: &str = "timestamp_unix";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the raw config file bytes (or of the empty string when a run
/// uses pure defaults).
pub fn config_hash(config_bytes: &[u8]) -> String {
    hex(&Sha256::digest(config_bytes))
}

/// Content hash of the crate version, in git blob form so it matches
/// `git hash-object` on a file holding the version string.
pub fn code_version() -> String {
    let body = env!("CARGO_PKG_VERSION");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()));
    h.update(body);
    hex(&h.finalize())
}

/// Key/value manifest describing a run. `timestamp_unix` is appended last so
/// the deterministic portion is a stable prefix.
pub fn write_manifest(dir: &Path, entries: &[(&str, String)]) -> Result<PathBuf> {
    let mut text = String::new();
    for (k, v) in entries {
        assert_ne!(*k, TIMESTAMP_KEY, "timestamp is appended automatically");
        text.push_str(&format!("{k} = {v}\n"));
    }
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    text.push_str(&format!("{TIMESTAMP_KEY} = {now}\n"));
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, text)?;
    Ok(path)
}

/// Standard manifest fields shared by every subcommand.
pub fn base_manifest(command: &str, seed: u64, config_bytes: &[u8]) -> Vec<(&'static str, String)> {
    vec![
        ("command", command.to_string()),
        ("seed", seed.to_string()),
        ("config_sha256", config_hash(config_bytes)),
        ("code_version", code_version()),
        ("rng", crate::rng::RNG_ALGORITHM.to_string()),
    ]
}

/// True if `dir` already holds a manifest — i.e. a prior run's artifacts that
/// must not be silently overwritten.
pub fn manifest_exists(dir: &Path) -> bool {
    dir.join(MANIFEST_NAME).is_file()
}

/// Line-buffered CSV writer. Rows use `Display` formatting of f64 (shortest
/// round-trip), so files are byte-stable across reruns.
pub struct CsvLog {
    out: std::io::BufWriter<fs::File>,
}

impl CsvLog {
    pub fn create(dir: &Path, name: &str, header: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let f = fs::File::create(dir.join(name))?;
        let mut out = std::io::BufWriter::new(f);
        writeln!(out, "{header}")?;
        Ok(Self { out })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_stable_except_for_the_timestamp_line() {
        let dir = std::env::temp_dir().join(format!("rose-manifest-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let entries = base_manifest("eval", 7, b"iterations = 3\n");
        let p1 = write_manifest(&dir, &entries).unwrap();
        let a = fs::read_to_string(&p1).unwrap();
        let p2 = write_manifest(&dir, &entries).unwrap();
        let b = fs::read_to_string(&p2).unwrap();
        let strip = |s: &str| {
            s.lines()
                .filter(|l| !l.starts_with(TIMESTAMP_KEY))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.lines().any(|l| l.starts_with("rng = splitmix64")));
        assert!(manifest_exists(&dir));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn version_hash_matches_git_blob_construction() {
        // Same construction as `git hash-object` in a sha256 repository:
        // sha256("blob {len}\0" + contents).
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", env!("CARGO_PKG_VERSION").len()));
        h.update(env!("CARGO_PKG_VERSION"));
        assert_eq!(code_version(), hex(&h.finalize()));
    }
}
