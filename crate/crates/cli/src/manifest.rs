//! Run manifests: what a run read, what it wrote, and hashes of both.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: &str = "nbci-run-v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Effective settings after merging the config file and flags.
    pub settings: serde_json::Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Hash over subcommand, settings and input hashes.
    pub input_hash: String,
}

/// Outcome of comparing a run against the manifest it replaces.
#[derive(Debug, PartialEq)]
pub enum Rerun {
    First,
    InputsChanged,
    Reproduced,
    Diverged(Vec<PathBuf>),
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn is_manifest(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with("manifest.json"))
}

/// SHA-256 of a file, or of a directory's files (relative path and content
/// hash, in sorted order). Manifest files are skipped.
pub fn hash_path(path: &Path) -> io::Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for rel in files {
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(hash_path(&path.join(&rel))?.as_bytes());
            h.update(b"\n");
        }
        Ok(hex(&h.finalize()))
    } else {
        Ok(hex(&Sha256::digest(fs::read(path)?)))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if !is_manifest(&p) {
            out.push(p.strip_prefix(root).expect("child of root").to_path_buf());
        }
    }
    Ok(())
}

pub fn artifacts(paths: &[PathBuf]) -> io::Result<Vec<Artifact>> {
    paths
        .iter()
        .map(|p| {
            Ok(Artifact {
                path: p.clone(),
                sha256: hash_path(p)?,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        config: Option<PathBuf>,
        seed: Option<u64>,
        settings: serde_json::Value,
        inputs: Vec<Artifact>,
    ) -> Self {
        let mut h = Sha256::new();
        h.update(subcommand.as_bytes());
        h.update([0]);
        h.update(settings.to_string().as_bytes());
        for a in &inputs {
            h.update([0]);
            h.update(a.path.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(a.sha256.as_bytes());
        }
        RunManifest {
            version: MANIFEST_VERSION.into(),
            subcommand: subcommand.into(),
            config,
            seed,
            settings,
            inputs,
            outputs: Vec::new(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            input_hash: hex(&h.finalize()),
        }
    }

    /// Compare with the manifest previously stored at `path`, then replace it.
    pub fn write(&self, path: &Path) -> io::Result<Rerun> {
        let status = match fs::read_to_string(path).ok().and_then(|s| serde_json::from_str::<RunManifest>(&s).ok()) {
            None => Rerun::First,
            Some(old) if old.input_hash != self.input_hash => Rerun::InputsChanged,
            Some(old) => {
                let diverged: Vec<PathBuf> = self
                    .outputs
                    .iter()
                    .filter(|a| !old.outputs.contains(a))
                    .map(|a| a.path.clone())
                    .chain(
                        old.outputs
                            .iter()
                            .filter(|a| !self.outputs.iter().any(|b| b.path == a.path))
                            .map(|a| a.path.clone()),
                    )
                    .collect();
                if diverged.is_empty() {
                    Rerun::Reproduced
                } else {
                    Rerun::Diverged(diverged)
                }
            }
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string_pretty(self).expect("manifest serialises"))?;
        Ok(status)
    }
}

/// Default manifest location for a run whose main output is `out`.
pub fn default_path(subcommand: &str, out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) if p.is_dir() => p.join("run.manifest.json"),
        Some(p) => {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            p.with_file_name(format!("{stem}.manifest.json"))
        }
        None => PathBuf::from(format!("nbci-{subcommand}.manifest.json")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_hash_ignores_manifests_and_tracks_content() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("a.csv"), "1,2\n").unwrap();
        let h1 = hash_path(d.path()).unwrap();
        fs::write(d.path().join("manifest.json"), "{}").unwrap();
        assert_eq!(hash_path(d.path()).unwrap(), h1);
        fs::write(d.path().join("a.csv"), "1,3\n").unwrap();
        assert_ne!(hash_path(d.path()).unwrap(), h1);
    }

    #[test]
    fn rerun_detection() {
        let d = tempfile::tempdir().unwrap();
        let out = d.path().join("out.json");
        let path = d.path().join("m.json");
        let run = |content: &str, seed: u64| {
            fs::write(&out, content).unwrap();
            let mut m = RunManifest::new("eval", None, Some(seed), serde_json::json!({"seed": seed}), vec![]);
            m.outputs = artifacts(std::slice::from_ref(&out)).unwrap();
            m.write(&path).unwrap()
        };
        assert_eq!(run("x", 1), Rerun::First);
        assert_eq!(run("x", 1), Rerun::Reproduced);
        assert_eq!(run("y", 1), Rerun::Diverged(vec![out.clone()]));
        assert_eq!(run("y", 2), Rerun::InputsChanged);
    }

    #[test]
    fn default_locations() {
        assert_eq!(default_path("eval", None), PathBuf::from("nbci-eval.manifest.json"));
        assert_eq!(
            default_path("rce", Some(Path::new("/tmp/x/report.json"))),
            PathBuf::from("/tmp/x/report.manifest.json")
        );
    }
}
