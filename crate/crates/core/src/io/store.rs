//! JSON files, datasets and output directories with run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::synthetic::Scene;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of how an output directory was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// File name to lowercase hex SHA-256.
    pub artifacts: BTreeMap<String, String>,
    pub version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::json("<memory>", e))?;
    out.push(b'\n');
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Reads and validates one scene file.
pub fn read_scene(path: &Path) -> Result<Scene> {
    let scene: Scene = read_json(path)?;
    scene.validate()?;
    Ok(scene)
}

pub fn scene_file_name(index: usize) -> String {
    format!("scene_{index:05}.json")
}

/// Reads the scenes listed in a dataset manifest, in file-name order, after
/// checking their hashes.
pub fn read_dataset(dir: &Path) -> Result<Vec<Scene>> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let mut scenes = Vec::new();
    for (name, hash) in manifest.artifacts.iter().filter(|(n, _)| n.starts_with("scene_") && n.ends_with(".json")) {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != *hash {
            return Err(Error::InvalidParameter(format!("{} does not match its manifest hash", path.display())));
        }
        let scene: Scene = serde_json::from_slice(&bytes).map_err(|e| Error::json(&path, e))?;
        scene.validate()?;
        scenes.push(scene);
    }
    if scenes.is_empty() {
        return Err(Error::InvalidParameter(format!("dataset {} lists no scenes", dir.display())));
    }
    Ok(scenes)
}

/// Sole writer of an output directory. Files are hashed as written and the
/// manifest is written last by [`OutputDir::finish`].
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), artifacts: BTreeMap::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        if name == MANIFEST_FILE || name.contains(['/', '\\']) {
            return Err(Error::InvalidParameter(format!("invalid artifact name {name:?}")));
        }
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_bytes(name, &to_json_bytes(value)?)
    }

    pub fn write_scenes(&mut self, scenes: &[Scene]) -> Result<()> {
        for (i, s) in scenes.iter().enumerate() {
            self.write_json(&scene_file_name(i), s)?;
        }
        Ok(())
    }

    /// Writes the manifest and returns it.
    pub fn finish(self, command: &str, config: serde_json::Value, seed: Option<u64>) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            seed,
            artifacts: self.artifacts,
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, to_json_bytes(&manifest)?).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}
