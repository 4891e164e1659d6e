//! `mdht`: command-line driver. Every run writes its artifacts and a
//! `manifest.json` into `--out`; failures print a JSON error on stderr and
//! exit with 2 (bad input), 3 (guard), 4 (unconverged) or 1 (anything else).

mod args;
mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use mdht_core::model::ModelFile;
use mdht_core::HypothesisModel;
use serde_json::{json, Value};

use args::{Command, RunArgs};

#[derive(Debug)]
pub enum CliError {
    Core(mdht_core::Error),
    Usage(String),
    /// The run finished but its own checks did not pass.
    CheckFailed(String),
}

impl From<mdht_core::Error> for CliError {
    fn from(e: mdht_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "invalid_argument",
            CliError::CheckFailed(_) => "check_failed",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Usage(s) | CliError::CheckFailed(s) => s.clone(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            "invalid_argument" | "validation" | "parse" => 2,
            "guard_exceeded" => 3,
            "unconverged" => 4,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// What a command hands back: files written and a short JSON summary.
pub struct Report {
    pub outputs: Vec<String>,
    pub summary: Value,
    /// Set when artifacts were written but some solver did not converge.
    pub unconverged: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = RunArgs::parse();
    let started = Instant::now();
    let mut model_file: Option<ModelFile> = None;
    let result = std::fs::create_dir_all(&args.out)
        .map_err(CliError::from)
        .and_then(|_| prepare(&mut args, &mut model_file))
        .and_then(|model| commands::run(&args, model.as_ref()));
    let wall = started.elapsed().as_secs_f64();
    let (status, code) = match &result {
        Ok(r) if r.unconverged.is_some() => ("unconverged", 4),
        Ok(_) => ("ok", 0),
        Err(e) => (e.kind(), e.exit_code()),
    };
    let manifest = json!({
        "tool": "mdht",
        "version": env!("CARGO_PKG_VERSION"),
        "command": args.command,
        "args": &args,
        "model": model_file,
        "threads": rayon::current_num_threads(),
        "started_unix": SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        "wall_time_s": wall,
        "status": status,
        "outputs": result.as_ref().map(|r| r.outputs.clone()).unwrap_or_default(),
        "summary": result.as_ref().map(|r| r.summary.clone()).unwrap_or(Value::Null),
    });
    if args.out.is_dir() {
        let _ = write_json(&args.out.join("manifest.json"), &manifest);
    }
    match result {
        Ok(r) => {
            println!("{}", serde_json::to_string_pretty(&r.summary).expect("summary serializes"));
            if let Some(msg) = r.unconverged {
                emit_error(&args.out, "unconverged", &msg, 4);
            }
        }
        Err(e) => emit_error(&args.out, e.kind(), &e.message(), e.exit_code()),
    }
    ExitCode::from(code)
}

fn emit_error(out: &Path, kind: &str, message: &str, code: u8) {
    let err = json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{err}");
    if out.is_dir() {
        let _ = write_json(&out.join("error.json"), &err);
    }
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(mdht_core::Error::from)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Applies `--replay`, sizes the thread pool and loads the model.
fn prepare(args: &mut RunArgs, model_file: &mut Option<ModelFile>) -> CliResult<Option<HypothesisModel>> {
    let mut model = None;
    if let Some(path) = args.replay.clone() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let manifest: Value = serde_json::from_str(&text).map_err(mdht_core::Error::from)?;
        let out = args.out.clone();
        *args = serde_json::from_value(manifest["args"].clone()).map_err(mdht_core::Error::from)?;
        args.out = out;
        args.replay = Some(path);
        if !manifest["model"].is_null() {
            let file: ModelFile = serde_json::from_value(manifest["model"].clone()).map_err(mdht_core::Error::from)?;
            model = Some(HypothesisModel::from_file(&file)?);
        }
    }
    set_threads()?;
    let command = args
        .command
        .ok_or_else(|| CliError::Usage("--command is required".into()))?;
    if model.is_none() && command != Command::VerifyOracle {
        let path: &PathBuf = args
            .model
            .as_ref()
            .ok_or_else(|| CliError::Usage("--model is required for this command".into()))?;
        model = Some(HypothesisModel::load(path)?);
    }
    *model_file = model.as_ref().map(HypothesisModel::to_file);
    Ok(model)
}

fn set_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("EXPONENT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("EXPONENT_THREADS={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}
