//! Flat `key = value` run configuration and the hash stamped on outputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use netchoice_core::choices::{FeatureFlags, TimeWindow, DEFAULT_NEGATIVES};
use netchoice_core::estimators::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use netchoice_core::Timestamp;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Keys naming input files.
pub const INPUT_KEYS: [&str; 7] = ["interactions", "updates", "sites", "geo", "choices", "initiations", "authors"];

const DAY: Timestamp = 86_400;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: BTreeMap<String, PathBuf>,
    pub window: Option<TimeWindow>,
    pub train_frac: f64,
    pub negatives: usize,
    pub seed: u64,
    pub flags: FeatureFlags,
    pub tol: f64,
    pub max_iter: usize,
    /// Timeline bucket width in seconds.
    pub timeline_window: Timestamp,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: BTreeMap::new(),
            window: None,
            train_frac: 0.8,
            negatives: DEFAULT_NEGATIVES,
            seed: 0,
            flags: FeatureFlags::default(),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            timeline_window: 30 * DAY,
            out_dir: PathBuf::from("out"),
            threads: None,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Validation(format!("`{key}` expects a boolean, got `{v}`"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse()
        .map_err(|_| CliError::Validation(format!("`{key}` has invalid value `{v}`")))
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment. Relative input
    /// paths resolve against the config file's directory.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut cfg = RunConfig::default();
        let (mut start, mut end) = (None, None);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("{}:{}: expected key = value", path.display(), n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                k if INPUT_KEYS.contains(&k) => {
                    cfg.inputs.insert(k.to_string(), base.join(value));
                }
                "window_start" => start = Some(parse_num::<Timestamp>(key, value)?),
                "window_end" => end = Some(parse_num::<Timestamp>(key, value)?),
                "train_frac" => cfg.train_frac = parse_num(key, value)?,
                "negatives" => cfg.negatives = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "include_state" => cfg.flags.include_state = parse_bool(key, value)?,
                "include_health" => cfg.flags.include_health = parse_bool(key, value)?,
                "tol" => cfg.tol = parse_num(key, value)?,
                "max_iter" => cfg.max_iter = parse_num(key, value)?,
                "timeline_days" => cfg.timeline_window = parse_num::<Timestamp>(key, value)? * DAY,
                "out_dir" => cfg.out_dir = base.join(value),
                "threads" => cfg.threads = Some(parse_num(key, value)?),
                other => {
                    return Err(CliError::Validation(format!(
                        "{}:{}: unknown config key `{other}`",
                        path.display(),
                        n + 1
                    )))
                }
            }
        }
        cfg.window = match (start, end) {
            (Some(s), Some(e)) => Some(TimeWindow::new(s, e)?),
            (None, None) => None,
            _ => return Err(CliError::Validation("window_start and window_end must be given together".into())),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(CliError::Validation(format!("train fraction {} is outside (0, 1)", self.train_frac)));
        }
        if self.negatives == 0 {
            return Err(CliError::Validation("negatives must be at least 1".into()));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(CliError::Validation("tolerance and max_iter must be positive".into()));
        }
        if self.timeline_window <= 0 {
            return Err(CliError::Validation("timeline_days must be positive".into()));
        }
        Ok(())
    }

    pub fn input(&self, key: &str) -> Option<&Path> {
        self.inputs.get(key).map(PathBuf::as_path)
    }

    pub fn require_input(&self, key: &str) -> CliResult<&Path> {
        self.input(key).ok_or_else(|| {
            CliError::Validation(format!("missing input `{key}` (pass --{key} or set it in the config file)"))
        })
    }

    /// Settings that shape results, one canonical line each. Paths, output
    /// location and thread count are excluded.
    fn canonical_settings(&self) -> Vec<String> {
        let mut lines = vec![
            format!("train_frac={:?}", self.train_frac),
            format!("negatives={}", self.negatives),
            format!("seed={}", self.seed),
            format!("include_state={}", self.flags.include_state),
            format!("include_health={}", self.flags.include_health),
            format!("tol={:?}", self.tol),
            format!("max_iter={}", self.max_iter),
            format!("timeline_window={}", self.timeline_window),
        ];
        if let Some(w) = self.window {
            lines.push(format!("window={},{}", w.start, w.end));
        }
        lines
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let mut file = File::open(path).map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

/// SHA-256 over the subcommand, its parameters, the shared settings and the
/// contents (not names) of every input file.
pub struct ConfigHasher {
    lines: Vec<String>,
}

impl ConfigHasher {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let mut lines = vec![format!("command={command}")];
        lines.extend(cfg.canonical_settings());
        ConfigHasher { lines }
    }

    pub fn param(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.lines.push(format!("{key}={value}"));
        self
    }

    pub fn input(mut self, key: &str, path: &Path) -> CliResult<Self> {
        let digest = file_digest(path)?;
        self.lines.push(format!("{key}.sha256={digest}"));
        Ok(self)
    }

    pub fn finish(mut self) -> String {
        self.lines.sort();
        let mut hasher = Sha256::new();
        for l in &self.lines {
            hasher.update(l.as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize())
    }
}
