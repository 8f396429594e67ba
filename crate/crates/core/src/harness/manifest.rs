//! Run manifests: what was run, with which configuration and seeds, on which inputs.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full argument list (without the program name); replaying it reproduces the run.
    pub args: Vec<String>,
    pub seed: u64,
    /// Effective configuration after defaults were applied.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Outputs relative to the run directory.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(tool: &str, version: &str, command: &str, args: Vec<String>, seed: u64, config: serde_json::Value) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            tool: tool.into(),
            version: version.into(),
            command: command.into(),
            args,
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Hashes every regular file under `dir` (except the manifest), sorted by relative path.
    pub fn record_outputs(&mut self, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        collect_files(dir, dir, &mut files)?;
        files.sort();
        self.outputs = files
            .into_iter()
            .filter(|rel| rel != Path::new(MANIFEST_FILE))
            .map(|rel| {
                Ok(FileDigest {
                    sha256: sha256_file(&dir.join(&rel))?,
                    path: rel,
                })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Checks that every recorded input still has the recorded hash.
    pub fn verify_inputs(&self) -> Result<()> {
        for d in &self.inputs {
            let now = sha256_file(&d.path)?;
            if now != d.sha256 {
                return Err(Error::Validation(format!("input {} changed since the run", d.path.display())));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse("manifest", e.to_string()))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn outputs_sorted_and_inputs_verified() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("b.txt"), b"b").unwrap();
        std::fs::write(dir.path().join("sub/a.txt"), b"a").unwrap();
        let mut m = RunManifest::new("t", "0", "cmd", vec![], 3, serde_json::json!({}));
        m.add_input(&dir.path().join("b.txt")).unwrap();
        m.save(dir.path()).unwrap();
        m.record_outputs(dir.path()).unwrap();
        let names: Vec<_> = m.outputs.iter().map(|d| d.path.clone()).collect();
        assert_eq!(names, vec![PathBuf::from("b.txt"), PathBuf::from("sub/a.txt")]);
        m.verify_inputs().unwrap();
        std::fs::write(dir.path().join("b.txt"), b"changed").unwrap();
        assert!(m.verify_inputs().is_err());
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
    }
}
