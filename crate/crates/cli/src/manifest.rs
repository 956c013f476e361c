//! Run manifests and the output directory layout.
//!
//! A run lives in `<root>/<id>/` where `id` is a hash prefix of the
//! schema, version and full argument set. `<root>/latest` holds the id of
//! the most recent top-level run.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use plap_core::io::{sha256_hex, Artifact};
use plap_core::Error;

use crate::args::Command;

pub const SCHEMA: &str = "plap.run/1";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const OUT_ENV: &str = "PLAP_OUT";
const ID_LEN: usize = 16;

/// Exit codes of the binary.
pub const EXIT_ARGS: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_REGIME: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub code: String,
    pub exit: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: &str, exit: i32, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            exit,
            message: message.into(),
        }
    }

    pub fn args(message: impl Into<String>) -> Self {
        Self::new("InvalidArgument", EXIT_ARGS, message)
    }

    /// One line: `error code=<code> exit=<n> reason=<json string>`.
    pub fn line(&self, run: Option<&str>) -> String {
        let reason = Value::String(self.message.replace('\n', " "));
        match run {
            Some(id) => format!("error code={} exit={} run={id} reason={reason}", self.code, self.exit),
            None => format!("error code={} exit={} reason={reason}", self.code, self.exit),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::InvalidParameter(_) | Error::ConvexityViolation(_) => EXIT_ARGS,
            Error::RegimeMismatch(_) | Error::EuclideanCritical => EXIT_REGIME,
            _ => EXIT_SOLVER,
        };
        Failure::new(e.code(), exit, e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: String,
    pub run_id: String,
    pub params: Command,
    /// Parameters after parsing and defaulting: model descriptor, problem,
    /// solver configuration, tolerances.
    pub resolved: Map<String, Value>,
    pub status: Status,
    pub error: Option<Failure>,
    pub outputs: Vec<Artifact>,
    /// Ids of child runs, in output order.
    pub children: Vec<String>,
    pub summary: Map<String, Value>,
    /// No seeds or clocks enter the outputs.
    pub deterministic: bool,
    pub wall_clock_s: f64,
}

pub fn run_id(cmd: &Command) -> String {
    let key = serde_json::json!({ "schema": SCHEMA, "version": VERSION, "params": cmd });
    sha256_hex(key.to_string().as_bytes())[..ID_LEN].to_string()
}

pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("plap-runs"))
}

/// Outputs and results collected while a command runs.
#[derive(Debug, Default)]
pub struct Run {
    pub outputs: Vec<(String, Vec<u8>)>,
    pub resolved: Map<String, Value>,
    pub summary: Map<String, Value>,
    pub children: Vec<String>,
}

impl Run {
    pub fn emit(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((name.into(), bytes.into()));
    }

    pub fn resolve(&mut self, key: &str, value: impl Serialize) {
        self.resolved
            .insert(key.into(), serde_json::to_value(value).expect("serializable"));
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.into(), serde_json::to_value(value).expect("serializable"));
    }

    pub fn emit_json(&mut self, name: &str, value: &impl Serialize) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.emit(name, text);
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new("Io", EXIT_SOLVER, format!("{}: {e}", path.display()))
}

/// Write outputs and the manifest into `<root>/<id>/`.
pub fn finish(
    root: &Path,
    cmd: &Command,
    run: Run,
    result: &Result<(), Failure>,
    elapsed: f64,
) -> Result<(RunManifest, PathBuf), Failure> {
    let id = run_id(cmd);
    let dir = root.join(&id);
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    let mut outputs = Vec::with_capacity(run.outputs.len());
    for (name, bytes) in &run.outputs {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_failure(&path, e))?;
        outputs.push(Artifact::of(name, bytes));
    }
    let manifest = RunManifest {
        schema: SCHEMA.into(),
        version: VERSION.into(),
        run_id: id,
        params: cmd.clone(),
        resolved: run.resolved,
        status: if result.is_ok() { Status::Ok } else { Status::Error },
        error: result.as_ref().err().cloned(),
        outputs,
        children: run.children,
        summary: run.summary,
        deterministic: true,
        wall_clock_s: elapsed,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
    Ok((manifest, dir))
}

/// Point `<root>/latest` at `id`, holding the root lock while writing.
pub fn set_latest(root: &Path, id: &str) -> Result<(), Failure> {
    let lock_path = root.join(".lock");
    let lock = File::create(&lock_path).map_err(|e| io_failure(&lock_path, e))?;
    lock.lock().map_err(|e| io_failure(&lock_path, e))?;
    let tmp = root.join(".latest.tmp");
    let mut f = File::create(&tmp).map_err(|e| io_failure(&tmp, e))?;
    writeln!(f, "{id}").map_err(|e| io_failure(&tmp, e))?;
    drop(f);
    let latest = root.join("latest");
    fs::rename(&tmp, &latest).map_err(|e| io_failure(&latest, e))?;
    lock.unlock().map_err(|e| io_failure(&lock_path, e))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::args(format!("{}: {e}", path.display())))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| Failure::args(format!("manifest {}: {e}", path.display())))?;
    if m.schema != SCHEMA {
        return Err(Failure::args(format!("manifest schema {} is not {SCHEMA}", m.schema)));
    }
    Ok(m)
}
