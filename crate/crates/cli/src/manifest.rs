//! Run directories and the manifest written into each of them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATE_DIR_ENV: &str = "QMOVES_STATE_DIR";
pub const DEFAULT_STATE_DIR: &str = "qmoves-state";

/// `flag`, else `$QMOVES_STATE_DIR`, else `./qmoves-state`.
pub fn state_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(STATE_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_STATE_DIR))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: RunConfig,
    pub config_hash: String,
    pub args: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started: String,
    pub wall_seconds: f64,
    pub version: String,
    pub rng: Vec<String>,
}

/// An open run: a fresh directory plus the manifest fields collected so far.
pub struct Run {
    dir: PathBuf,
    clock: Instant,
    manifest: RunManifest,
}

impl Run {
    /// Creates `<parent>/<UTC timestamp>-<config hash>`, suffixed if it already exists.
    pub fn create(
        parent: &Path,
        command: &str,
        config: &RunConfig,
        args: serde_json::Value,
    ) -> CliResult<Self> {
        let now = chrono::Utc::now();
        let hash = config.short_hash();
        let stem = format!("{}-{hash}", now.format("%Y%m%dT%H%M%S%.3fZ"));
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        let mut dir = parent.join(&stem);
        let mut n = 1;
        loop {
            match std::fs::create_dir(&dir) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    dir = parent.join(format!("{stem}-{n}"));
                    n += 1;
                }
                Err(e) => return Err(CliError::io(&dir, e)),
            }
        }
        let dir = dir.canonicalize().map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            clock: Instant::now(),
            manifest: RunManifest {
                command: command.to_owned(),
                status: "running".into(),
                error: None,
                config: config.clone(),
                config_hash: hash,
                args,
                inputs: Vec::new(),
                outputs: Vec::new(),
                started: now.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                wall_seconds: 0.0,
                version: env!("CARGO_PKG_VERSION").to_owned(),
                rng: Vec::new(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    pub fn rng(&mut self, id: impl Into<String>) {
        self.manifest.rng.push(id.into());
    }

    /// Writes `contents` to `name` inside the run directory and records it.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.manifest.outputs.push(path.clone());
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
        let text = serde_json::to_string_pretty(value).expect("value serializes");
        self.write(name, text)
    }

    /// Records an output written elsewhere.
    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.to_path_buf());
    }

    /// Writes the manifest, recording `outcome`, and returns its path.
    pub fn finish(mut self, outcome: Result<(), &CliError>) -> CliResult<PathBuf> {
        self.manifest.wall_seconds = self.clock.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => self.manifest.status = "ok".into(),
            Err(e) => {
                self.manifest.status = "error".into();
                self.manifest.error = Some(e.to_string());
            }
        }
        self.checkpoint()
    }

    /// Writes the manifest as it stands, for long-running commands.
    pub fn checkpoint(&mut self) -> CliResult<PathBuf> {
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn set_status(&mut self, status: &str) {
        self.manifest.status = status.to_owned();
        self.manifest.wall_seconds = self.clock.elapsed().as_secs_f64();
    }
}
