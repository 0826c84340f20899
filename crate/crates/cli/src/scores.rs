//! Append-only JSON-lines leaderboard with a single writer thread.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

use crate::error::{CliError, CliResult};

pub const SCORES_FILE: &str = "scores.jsonl";
pub const PROTOCOL_DIR: &str = "protocols";
pub const MAX_NAME_CHARS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Human,
    CdSingle,
    CdDouble,
    Geodesic,
    Optimizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreEntry {
    pub name: String,
    #[serde(rename = "T")]
    pub duration: f64,
    pub fidelity: f64,
    pub source: Source,
    pub ts: String,
    /// Content hash of the submitted samples; the samples live in `protocols/<hash>.json`.
    pub protocol: String,
}

/// Trimmed name, 1 to 32 characters, no control characters.
pub fn validate_name(name: &str) -> CliResult<String> {
    let name = name.trim();
    if name.is_empty() {
        return Err(CliError::Config("name must not be empty".into()));
    }
    if name.chars().count() > MAX_NAME_CHARS {
        return Err(CliError::Config(format!(
            "name longer than {MAX_NAME_CHARS} characters"
        )));
    }
    if name.chars().any(char::is_control) {
        return Err(CliError::Config("name contains control characters".into()));
    }
    Ok(name.to_owned())
}

/// `sha256:` plus the first 16 hex digits of the canonical sample JSON.
pub fn protocol_hash(protocol_json: &str) -> String {
    format!(
        "sha256:{}",
        hex::encode(&Sha256::digest(protocol_json.as_bytes())[..8])
    )
}

/// A validated score waiting for its timestamp.
#[derive(Debug, Clone)]
pub struct Submission {
    pub name: String,
    pub duration: f64,
    pub fidelity: f64,
    pub source: Source,
    /// Canonical JSON of the submitted protocol.
    pub protocol_json: String,
}

struct Job {
    submission: Submission,
    reply: oneshot::Sender<CliResult<ScoreEntry>>,
}

/// Readers share the in-memory list; only the writer thread touches the file.
#[derive(Clone)]
pub struct ScoreBook {
    entries: Arc<RwLock<Vec<ScoreEntry>>>,
    jobs: mpsc::Sender<Job>,
    path: PathBuf,
}

impl ScoreBook {
    /// Loads `<state_dir>/scores.jsonl` and starts the writer.
    pub fn open(state_dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(state_dir.join(PROTOCOL_DIR))
            .map_err(|e| CliError::io(state_dir, e))?;
        let path = state_dir.join(SCORES_FILE);
        let entries = load(&path)?;
        let last = entries
            .iter()
            .filter_map(|e| DateTime::parse_from_rfc3339(&e.ts).ok())
            .map(|t| t.with_timezone(&Utc))
            .max();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        terminate_last_line(&path, &mut file)?;
        let entries = Arc::new(RwLock::new(entries));
        let (jobs, rx) = mpsc::channel();
        let writer = Writer {
            file,
            protocols: state_dir.join(PROTOCOL_DIR),
            last,
            entries: Arc::clone(&entries),
        };
        std::thread::Builder::new()
            .name("score-writer".into())
            .spawn(move || writer.run(rx))
            .map_err(|e| CliError::io(&path, e))?;
        Ok(Self {
            entries,
            jobs,
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub async fn append(&self, submission: Submission) -> CliResult<ScoreEntry> {
        let (reply, rx) = oneshot::channel();
        self.jobs
            .send(Job { submission, reply })
            .map_err(|_| CliError::Numeric("score writer stopped".into()))?;
        rx.await
            .map_err(|_| CliError::Numeric("score writer stopped".into()))?
    }

    /// Entries sorted by fidelity descending, then oldest first; optionally only those
    /// at duration `T` (relative tolerance 1e-9).
    pub fn list(&self, duration: Option<f64>) -> Vec<ScoreEntry> {
        let mut out: Vec<ScoreEntry> = self
            .entries
            .read()
            .expect("score list lock")
            .iter()
            .filter(|e| duration.is_none_or(|t| (e.duration - t).abs() <= 1e-9 * t.abs().max(1.0)))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            b.fidelity
                .total_cmp(&a.fidelity)
                .then_with(|| a.ts.cmp(&b.ts))
        });
        out
    }
}

fn load(path: &Path) -> CliResult<Vec<ScoreEntry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::io(path, e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(path, e))?;
    let mut entries = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        // Torn lines from a crash are kept in the file but not served.
        match serde_json::from_str(line) {
            Ok(e) => entries.push(e),
            Err(e) => eprintln!("skipping {} line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(entries)
}

fn terminate_last_line(path: &Path, file: &mut File) -> CliResult<()> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.last().is_some_and(|&b| b != b'\n') {
        file.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

struct Writer {
    file: File,
    protocols: PathBuf,
    last: Option<DateTime<Utc>>,
    entries: Arc<RwLock<Vec<ScoreEntry>>>,
}

impl Writer {
    fn run(mut self, rx: mpsc::Receiver<Job>) {
        for job in rx {
            let result = self.write(job.submission);
            let _ = job.reply.send(result);
        }
    }

    fn write(&mut self, s: Submission) -> CliResult<ScoreEntry> {
        let now = Utc::now();
        let ts = match self.last {
            Some(last) if last > now => last,
            _ => now,
        };
        let hash = protocol_hash(&s.protocol_json);
        let file_name = format!("{}.json", hash.trim_start_matches("sha256:"));
        let protocol_path = self.protocols.join(file_name);
        if !protocol_path.exists() {
            std::fs::write(&protocol_path, &s.protocol_json)
                .map_err(|e| CliError::io(&protocol_path, e))?;
        }
        let entry = ScoreEntry {
            name: s.name,
            duration: s.duration,
            fidelity: s.fidelity,
            source: s.source,
            ts: ts.to_rfc3339_opts(SecondsFormat::Millis, true),
            protocol: hash,
        };
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| CliError::io("scores", e))?;
        self.last = Some(ts);
        self.entries
            .write()
            .expect("score list lock")
            .push(entry.clone());
        Ok(entry)
    }
}
