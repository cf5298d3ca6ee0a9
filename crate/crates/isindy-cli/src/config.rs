//! Flag and config-file handling. The config file is flat JSON with the
//! same keys as the long flags; flags win over file values, and unknown
//! keys in the file are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;
use isindy::Execution;

/// Identification method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Isindy,
    Sindy,
    Insindy,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Isindy, Method::Sindy, Method::Insindy];

    pub fn parse(s: &str) -> Result<Method, CliError> {
        match s {
            "isindy" => Ok(Method::Isindy),
            "sindy" => Ok(Method::Sindy),
            "insindy" => Ok(Method::Insindy),
            other => Err(CliError::Config(format!(
                "unknown method '{other}' (expected isindy, sindy, or insindy)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Isindy => "isindy",
            Method::Sindy => "sindy",
            Method::Insindy => "insindy",
        }
    }
}

/// Segment counts in a config file: a bare number or a per-window list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SegmentsSpec {
    One(usize),
    Many(Vec<usize>),
}

impl SegmentsSpec {
    fn into_vec(self) -> Vec<usize> {
        match self {
            SegmentsSpec::One(v) => vec![v],
            SegmentsSpec::Many(v) => v,
        }
    }
}

/// Flat config file; every key mirrors a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub system: Option<String>,
    pub input: Option<String>,
    pub output_dir: Option<String>,
    pub library: Option<Vec<String>>,
    pub lambda: Option<f64>,
    pub nvr: Option<String>,
    pub seed: Option<u64>,
    pub seeds: Option<String>,
    pub segments: Option<SegmentsSpec>,
    pub method: Option<Vec<String>>,
    pub time_range: Option<Vec<String>>,
    pub step: Option<f64>,
    pub jobs: Option<usize>,
    pub rank_tolerance: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }
}

/// Raw flag values shared by every subcommand (mirrors the file keys).
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub config: Option<PathBuf>,
    pub system: Option<String>,
    pub input: Option<String>,
    pub output_dir: Option<String>,
    pub library: Vec<String>,
    pub lambda: Option<f64>,
    pub nvr: Option<String>,
    pub seed: Option<u64>,
    pub seeds: Option<String>,
    pub segments: Option<String>,
    pub method: Vec<String>,
    pub time_range: Vec<String>,
    pub step: Option<f64>,
    pub jobs: Option<usize>,
    pub rank_tolerance: Option<f64>,
}

/// Flags merged over file values.
#[derive(Debug, Clone, Default)]
pub struct Resolved {
    pub system: Option<String>,
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub library: Vec<String>,
    pub lambda: Option<f64>,
    pub nvr: Vec<f64>,
    pub seed: Option<u64>,
    pub seeds: Vec<u64>,
    /// Spline segment counts: empty = data-scaled default, one value for
    /// every run, or one value per time window.
    pub segments: Vec<usize>,
    pub methods: Vec<Method>,
    pub time_ranges: Vec<(f64, f64)>,
    pub step: Option<f64>,
    pub jobs: Option<usize>,
    pub rank_tolerance: Option<f64>,
}

impl Flags {
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let nvr_src = self.nvr.or(file.nvr);
        let seeds_src = self.seeds.or(file.seeds);
        let methods_src = if self.method.is_empty() {
            file.method.unwrap_or_default()
        } else {
            self.method
        };
        let ranges_src = if self.time_range.is_empty() {
            file.time_range.unwrap_or_default()
        } else {
            self.time_range
        };
        let library = if self.library.is_empty() {
            file.library.unwrap_or_default()
        } else {
            self.library
        };
        Ok(Resolved {
            system: self.system.or(file.system),
            input: self.input.or(file.input).map(PathBuf::from),
            output_dir: PathBuf::from(
                self.output_dir
                    .or(file.output_dir)
                    .unwrap_or_else(|| ".".into()),
            ),
            library,
            lambda: self.lambda.or(file.lambda),
            nvr: match nvr_src {
                Some(s) => parse_f64_list(&s)?,
                None => Vec::new(),
            },
            seed: self.seed.or(file.seed),
            seeds: match seeds_src {
                Some(s) => parse_seed_list(&s)?,
                None => Vec::new(),
            },
            segments: match self.segments {
                Some(s) => parse_usize_list(&s)?,
                None => file
                    .segments
                    .map(SegmentsSpec::into_vec)
                    .unwrap_or_default(),
            },
            methods: methods_src
                .iter()
                .map(|s| Method::parse(s))
                .collect::<Result<_, _>>()?,
            time_ranges: ranges_src
                .iter()
                .map(|s| parse_time_range(s))
                .collect::<Result<_, _>>()?,
            step: self.step.or(file.step),
            jobs: self.jobs.or(file.jobs),
            rank_tolerance: self.rank_tolerance.or(file.rank_tolerance),
        })
    }
}

impl Resolved {
    pub fn execution(&self) -> Execution {
        match self.jobs {
            Some(1) => Execution::Sequential,
            _ => Execution::default(),
        }
    }

    pub fn ensure_output_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.output_dir)?;
        Ok(())
    }
}

/// Comma-separated counts: `30` or `80,68,100`.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Config(format!("bad count '{part}': {e}")))
        })
        .collect()
}

/// Comma-separated floats: `0.0,0.1,0.3`.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("bad number '{part}': {e}")))
        })
        .collect()
}

/// Seed lists: either a range `1..20` (inclusive) or comma-separated values.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, CliError> {
    if let Some((a, b)) = s.split_once("..") {
        let start: u64 = a
            .trim()
            .parse()
            .map_err(|e| CliError::Config(format!("bad seed '{a}': {e}")))?;
        let end: u64 = b
            .trim()
            .parse()
            .map_err(|e| CliError::Config(format!("bad seed '{b}': {e}")))?;
        if end < start {
            return Err(CliError::Config(format!("empty seed range '{s}'")));
        }
        return Ok((start..=end).collect());
    }
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<u64>()
                .map_err(|e| CliError::Config(format!("bad seed '{part}': {e}")))
        })
        .collect()
}

/// Time windows written `start:end`.
pub fn parse_time_range(s: &str) -> Result<(f64, f64), CliError> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("bad time range '{s}' (expected start:end)")))?;
    let start: f64 = a
        .trim()
        .parse()
        .map_err(|e| CliError::Config(format!("bad time '{a}': {e}")))?;
    let end: f64 = b
        .trim()
        .parse()
        .map_err(|e| CliError::Config(format!("bad time '{b}': {e}")))?;
    if end.is_nan() || start.is_nan() || end <= start {
        return Err(CliError::Config(format!(
            "time range '{s}' must have end > start"
        )));
    }
    Ok((start, end))
}
