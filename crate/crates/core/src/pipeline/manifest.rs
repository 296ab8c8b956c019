use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST: &str = "manifest.csv";
const HEADER: [&str; 3] = ["kind", "name", "value"];

/// Every emitted file (path relative to the output directory, SHA-256 of its
/// contents) and the status of every analysis and stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub files: BTreeMap<String, String>,
    pub status: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    /// Writes `contents` to `root/rel`, creating parent directories, and
    /// records its hash.
    pub fn emit(&mut self, root: &Path, rel: &str, contents: &[u8]) -> Result<()> {
        let path = root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.insert(rel.to_string(), sha256_hex(contents));
        Ok(())
    }

    /// Hashes a file that already exists under `root`.
    pub fn record(&mut self, root: &Path, rel: &str) -> Result<()> {
        let path = root.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn set_status(&mut self, name: impl Into<String>, status: impl Into<String>) {
        self.status.insert(name.into(), status.into());
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for (k, v) in &self.files {
            w.write_record(["file", k, v]).expect("in-memory write");
        }
        for (k, v) in &self.status {
            w.write_record(["status", k, v]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let bad = |e: csv::Error| Error::Data(format!("manifest: {e}"));
        if r.headers().map_err(bad)?.iter().ne(HEADER) {
            return Err(Error::Data("manifest: unexpected header".into()));
        }
        let mut m = Manifest::default();
        for rec in r.records() {
            let rec = rec.map_err(bad)?;
            let map = match &rec[0] {
                "file" => &mut m.files,
                "status" => &mut m.status,
                other => return Err(Error::Data(format!("manifest: unknown entry kind `{other}`"))),
            };
            map.insert(rec[1].to_string(), rec[2].to_string());
        }
        Ok(m)
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let path = root.join(MANIFEST);
        std::fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))
    }

    /// Reads `root/manifest.csv`, or an empty manifest if there is none.
    pub fn read_or_default(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::from_csv(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Re-hashes every listed file; returns the paths whose contents no
    /// longer match.
    pub fn verify(&self, root: &Path) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for (rel, hash) in &self.files {
            let path = root.join(rel);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if &sha256_hex(&bytes) != hash {
                stale.push(rel.clone());
            }
        }
        Ok(stale)
    }
}
