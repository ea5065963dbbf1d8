//! Solver access through an external process.
//!
//! The process reads an LP file and writes a normalized solution file:
//!
//! ```text
//! status optimal|feasible|infeasible|timeout
//! objective <value>
//! bound <value>
//! <variable> <value>
//! ```
//!
//! `objective` and `bound` may be omitted when unknown. Warm starts use the
//! same `<variable> <value>` line format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Capabilities {
    pub warmstart: bool,
    pub incumbent_callback: bool,
    pub time_limit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
}

impl std::str::FromStr for SolveStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(SolveStatus::Optimal),
            "feasible" => Ok(SolveStatus::Feasible),
            "infeasible" => Ok(SolveStatus::Infeasible),
            "timeout" => Ok(SolveStatus::Timeout),
            _ => Err(Error::Adapter(format!("unknown status {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    pub values: HashMap<String, f64>,
}

impl RawSolution {
    pub fn parse(text: &str) -> Result<RawSolution> {
        let mut status = None;
        let mut objective = None;
        let mut bound = None;
        let mut values = HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, val) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Adapter(format!("bad solution line: {line}")))?;
            let val = val.trim();
            match key {
                "status" => status = Some(val.parse()?),
                "objective" => objective = Some(parse_value(val)?),
                "bound" => bound = Some(parse_value(val)?),
                name => {
                    values.insert(name.to_string(), parse_value(val)?);
                }
            }
        }
        Ok(RawSolution {
            status: status.ok_or_else(|| Error::Adapter("solution file has no status line".into()))?,
            objective,
            bound,
            values,
        })
    }

    pub fn has_incumbent(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible) && !self.values.is_empty()
    }
}

fn parse_value(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Adapter(format!("bad number in solution file: {s}")))
}

/// `name value` lines, used for warm starts.
pub fn write_values(names: impl IntoIterator<Item = impl AsRef<str>>, values: &[f64]) -> String {
    let mut out = String::new();
    for (n, v) in names.into_iter().zip(values) {
        let _ = writeln!(out, "{} {}", n.as_ref(), v);
    }
    out
}

pub trait SolverAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    /// Solves `model`, writing and then reading `solution`.
    fn run(&self, model: &Path, warm: Option<&Path>, time_limit: f64, solution: &Path) -> Result<RawSolution>;
}

/// Descriptor of a command-line adapter, usually read from TOML.
///
/// Argument templates may use `{model}`, `{solution}`, `{time_limit}`,
/// `{warmstart}` and `{config_dir}`. Arguments mentioning `{warmstart}` are
/// dropped when no warm start is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandDescriptor {
    pub name: String,
    pub executable: String,
    pub args: Vec<String>,
    #[serde(default)]
    pub capabilities: Capabilities,
    /// Extra seconds granted beyond the time limit before the process is killed.
    #[serde(default = "default_grace")]
    pub grace: f64,
}

fn default_grace() -> f64 {
    30.0
}

#[derive(Debug, Clone)]
pub struct CommandAdapter {
    desc: CommandDescriptor,
    config_dir: PathBuf,
}

impl CommandAdapter {
    pub fn new(desc: CommandDescriptor, config_dir: impl Into<PathBuf>) -> Self {
        CommandAdapter {
            desc,
            config_dir: config_dir.into(),
        }
    }

    pub fn from_toml_str(s: &str, config_dir: impl Into<PathBuf>) -> Result<Self> {
        let desc: CommandDescriptor = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Self::new(desc, config_dir))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&s, dir)
    }

    pub fn descriptor(&self) -> &CommandDescriptor {
        &self.desc
    }

    fn render_args(&self, model: &Path, warm: Option<&Path>, time_limit: f64, solution: &Path) -> Vec<String> {
        self.desc
            .args
            .iter()
            .filter(|a| warm.is_some() || !a.contains("{warmstart}"))
            .map(|a| {
                a.replace("{model}", &model.display().to_string())
                    .replace("{solution}", &solution.display().to_string())
                    .replace("{time_limit}", &time_limit.to_string())
                    .replace("{config_dir}", &self.config_dir.display().to_string())
                    .replace("{warmstart}", &warm.map(|w| w.display().to_string()).unwrap_or_default())
            })
            .collect()
    }
}

impl SolverAdapter for CommandAdapter {
    fn name(&self) -> &str {
        &self.desc.name
    }

    fn capabilities(&self) -> Capabilities {
        self.desc.capabilities
    }

    fn run(&self, model: &Path, warm: Option<&Path>, time_limit: f64, solution: &Path) -> Result<RawSolution> {
        let args = self.render_args(model, warm, time_limit, solution);
        debug!("launching {} {:?}", self.desc.executable, args);
        let _ = fs::remove_file(solution);
        // stderr goes to a file so a chatty solver cannot fill a pipe
        let log_path = solution.with_extension("stderr");
        let log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let mut child = Command::new(&self.desc.executable)
            .args(&args)
            .stdout(Stdio::null())
            .stderr(Stdio::from(log))
            .spawn()
            .map_err(|e| Error::Adapter(format!("cannot launch {}: {e}", self.desc.executable)))?;
        let deadline = Instant::now() + Duration::from_secs_f64(time_limit.max(0.0) + self.desc.grace);
        let status = loop {
            if let Some(st) = child.try_wait().map_err(|e| Error::Adapter(e.to_string()))? {
                break st;
            }
            if Instant::now() > deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Adapter(format!("{} exceeded its time limit", self.desc.name)));
            }
            std::thread::sleep(Duration::from_millis(10));
        };
        if !status.success() {
            let msg = fs::read_to_string(&log_path).unwrap_or_default();
            return Err(Error::Adapter(format!("{} exited with {status}: {}", self.desc.name, msg.trim())));
        }
        let text = fs::read_to_string(solution).map_err(|e| Error::io(solution, e))?;
        RawSolution::parse(&text)
    }
}
