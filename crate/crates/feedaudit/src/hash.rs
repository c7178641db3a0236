//! Content hashing for report provenance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use sha1::{Digest, Sha1};

/// The hash git would assign the bytes as a blob:
/// `sha1("blob {len}\0" + bytes)`, hex-encoded.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut hasher = Sha1::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(40);
    for byte in digest {
        write!(out, "{byte:02x}").expect("writing to a String cannot fail");
    }
    out
}

/// Collects the blob hash of every input file a command reads, keyed by the
/// path as given, for the report's provenance block.
#[derive(Debug, Default)]
pub struct InputHashes {
    entries: BTreeMap<String, String>,
}

impl InputHashes {
    /// Reads a file, records its hash, and returns the bytes.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes =
            std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.entries
            .insert(path.display().to_string(), git_blob_sha1(&bytes));
        Ok(bytes)
    }

    /// Records already-loaded bytes under a label.
    pub fn record(&mut self, label: &str, bytes: &[u8]) {
        self.entries.insert(label.to_string(), git_blob_sha1(bytes));
    }

    /// The collected map, for embedding into a report.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }
}
