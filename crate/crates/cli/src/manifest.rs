//! Run manifest and the per-stage run context.
//!
//! Every stage reads upstream artifacts through [`StageRun::read_artifact`],
//! which compares the file hash against the one recorded when the producing
//! stage wrote it, and writes its own artifacts atomically through
//! [`StageRun::write`]. The manifest itself is deterministic; wall times go to
//! a separate `timings.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{LoadedConfig, PipelineConfig};
use crate::error::{StageError, StageResult};
use crate::Stage;

pub const MANIFEST_FORMAT: &str = "floodmap.manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
/// Artifact keys with this prefix live in the models directory.
pub const MODELS_PREFIX: &str = "models/";
/// Artifact keys with this prefix are configured input paths.
pub const PATHS_PREFIX: &str = "paths.";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    /// Effective configuration of the latest stage, every threshold included.
    pub config: Value,
    pub overrides: BTreeMap<String, Value>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    fn new(cfg: &LoadedConfig) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            config_hash: cfg.hash.clone(),
            config: serde_json::to_value(&cfg.config).expect("config serializes"),
            overrides: cfg.overrides.clone(),
            stages: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> StageResult<Option<Self>> {
        match fs::read(path) {
            Ok(bytes) => {
                let m: Manifest = serde_json::from_slice(&bytes)
                    .map_err(|e| StageError::validation(format!("{}: {e}", path.display())))?;
                if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
                    return Err(StageError::validation(format!("{}: unsupported manifest", path.display())));
                }
                Ok(Some(m))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StageError::input(format!("reading {}: {e}", path.display()))),
        }
    }

    /// The stage that recorded `key` as an output, with the recorded hash.
    pub fn producer(&self, key: &str) -> Option<(&str, &str)> {
        self.stages
            .iter()
            .find_map(|(name, r)| r.outputs.get(key).map(|h| (name.as_str(), h.as_str())))
    }
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Hash of a directory's regular files, by sorted file name.
pub fn hash_dir(dir: &Path) -> std::io::Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.update(name.as_bytes());
        h.update([0]);
        h.update(sha256_hex(&fs::read(&p)?).as_bytes());
        h.update([b'\n']);
    }
    Ok(hex::encode(h.finalize()))
}

pub struct StageRun<'a> {
    pub cfg: &'a LoadedConfig,
    pub stage: Stage,
    pub force: bool,
    out_dir: PathBuf,
    manifest: Manifest,
    record: StageRecord,
    deferred: Option<StageError>,
}

impl<'a> StageRun<'a> {
    pub fn open(cfg: &'a LoadedConfig, stage: Stage, force: bool) -> StageResult<Self> {
        let out_dir = cfg.output_dir();
        let manifest = Manifest::load(&out_dir.join(MANIFEST_FILE))?.unwrap_or_else(|| Manifest::new(cfg));
        Ok(Self {
            cfg,
            stage,
            force,
            out_dir,
            manifest,
            record: StageRecord {
                status: "ok".into(),
                config_hash: cfg.hash.clone(),
                seed: cfg.config.seed,
                ..StageRecord::default()
            },
            deferred: None,
        })
    }

    pub fn config(&self) -> &'a PipelineConfig {
        &self.cfg.config
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.cfg.resolve(p)
    }

    pub fn artifact_path(&self, key: &str) -> PathBuf {
        match key.strip_prefix(MODELS_PREFIX) {
            Some(rest) => self.cfg.models_dir().join(rest),
            None => self.out_dir.join(key),
        }
    }

    /// Reads a configured input file and records its hash under `paths.<name>`.
    pub fn read_input(&mut self, name: &str, path: &Path) -> StageResult<Vec<u8>> {
        let full = self.resolve(path);
        let bytes = fs::read(&full).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StageError::missing(&full),
            _ => StageError::input(format!("reading {}: {e}", full.display())),
        })?;
        self.record.inputs.insert(format!("{PATHS_PREFIX}{name}"), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// Records the hash of a configured input directory.
    pub fn hash_input_dir(&mut self, name: &str, path: &Path) -> StageResult<PathBuf> {
        let full = self.resolve(path);
        if !full.is_dir() {
            return Err(StageError::missing(&full));
        }
        let h = hash_dir(&full).map_err(|e| StageError::input(format!("reading {}: {e}", full.display())))?;
        self.record.inputs.insert(format!("{PATHS_PREFIX}{name}"), h);
        Ok(full)
    }

    /// Reads an artifact written by an upstream stage, refusing (unless
    /// forced) when its hash differs from the manifest or it was never
    /// recorded.
    pub fn read_artifact(&mut self, key: &str) -> StageResult<Vec<u8>> {
        let path = self.artifact_path(key);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StageError::missing(&path),
            _ => StageError::input(format!("reading {}: {e}", path.display())),
        })?;
        let hash = sha256_hex(&bytes);
        let problem = match self.manifest.producer(key) {
            Some((_, recorded)) if recorded == hash => None,
            Some((stage, _)) => Some(format!("{key} changed since stage {stage} wrote it")),
            None => Some(format!("{key} is not recorded in the run manifest")),
        };
        if let Some(p) = problem {
            if !self.force {
                return Err(StageError::validation(format!("{p}; re-run the producing stage or pass --force")));
            }
            self.warn(format!("{p} (forced)"));
        }
        self.record.inputs.insert(key.to_string(), hash);
        Ok(bytes)
    }

    pub fn write(&mut self, key: &str, bytes: &[u8]) -> StageResult<()> {
        let path = self.artifact_path(key);
        atomic_write(&path, bytes).map_err(|e| StageError::internal(format!("writing {}: {e}", path.display())))?;
        self.record.outputs.insert(key.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes a configured output path (fixture generation).
    pub fn write_path(&mut self, name: &str, path: &Path, bytes: &[u8]) -> StageResult<()> {
        let full = self.resolve(path);
        atomic_write(&full, bytes).map_err(|e| StageError::internal(format!("writing {}: {e}", full.display())))?;
        self.record.outputs.insert(format!("{PATHS_PREFIX}{name}"), sha256_hex(bytes));
        Ok(())
    }

    pub fn record_output_hash(&mut self, key: &str, hash: String) {
        self.record.outputs.insert(key.to_string(), hash);
    }

    pub fn count(&mut self, name: &str, value: impl Serialize) {
        self.record.counts.insert(name.to_string(), serde_json::to_value(value).expect("count serializes"));
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{}: {msg}", self.stage.name());
        self.record.warnings.push(msg);
    }

    /// Fails the stage after its artifacts and manifest entry are written.
    pub fn fail_after_writing(&mut self, err: StageError) {
        self.record.status = match &err {
            StageError::Input(m) => format!("input error: {m}"),
            StageError::Validation(m) => format!("validation error: {m}"),
            StageError::Internal(m) => format!("internal error: {m}"),
        };
        self.deferred = Some(err);
    }

    pub fn finish(mut self, elapsed: Duration) -> StageResult<()> {
        let name = self.stage.name().to_string();
        self.manifest.config_hash = self.cfg.hash.clone();
        self.manifest.config = serde_json::to_value(&self.cfg.config).expect("config serializes");
        self.manifest.overrides = self.cfg.overrides.clone();
        self.manifest.stages.insert(name.clone(), self.record);
        let mut json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        json.push('\n');
        let path = self.out_dir.join(MANIFEST_FILE);
        atomic_write(&path, json.as_bytes()).map_err(|e| StageError::internal(format!("writing {}: {e}", path.display())))?;

        let tpath = self.out_dir.join(TIMINGS_FILE);
        let mut timings: BTreeMap<String, f64> = fs::read(&tpath)
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default();
        timings.insert(name, elapsed.as_secs_f64());
        let mut t = serde_json::to_string_pretty(&timings).expect("timings serialize");
        t.push('\n');
        atomic_write(&tpath, t.as_bytes()).map_err(|e| StageError::internal(format!("writing {}: {e}", tpath.display())))?;
        match self.deferred {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
