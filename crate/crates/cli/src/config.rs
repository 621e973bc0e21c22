use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::CliError;

/// Seed used when neither the config nor `--seed` gives one.
pub const DEFAULT_SEED: u64 = 20_260_101;

/// Each key with the keys it cannot be combined with.
const CONFLICTS: [(&str, &[&str]); 8] = [
    ("log10_b2", &["b2", "a2"]),
    ("b2", &["log10_b2", "a2"]),
    ("a2", &["log10_b2", "b2"]),
    ("tau", &["log10_tau"]),
    ("log10_tau", &["tau"]),
    ("rate", &["lambda", "nucleons"]),
    ("lambda", &["rate"]),
    ("nucleons", &["rate"]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    Anomaly,
    Collapse,
    Pointer,
    Way,
}

impl Command {
    pub const ALL: [Command; 4] = [
        Command::Anomaly,
        Command::Collapse,
        Command::Pointer,
        Command::Way,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Anomaly => "anomaly",
            Command::Collapse => "collapse",
            Command::Pointer => "pointer",
            Command::Way => "way",
        }
    }

    /// Parameter keys, each also available as a `--key` flag (underscores
    /// become hyphens).
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Anomaly => &["n", "log10_b2", "b2", "tau", "log10_tau"],
            Command::Collapse => &[
                "n",
                "log10_b2",
                "b2",
                "a2",
                "lambda",
                "nucleons",
                "rate",
                "t_max",
                "trajectories",
                "stats_samples",
                "distribution",
            ],
            Command::Pointer => &[
                "delta",
                "center",
                "half_width",
                "points",
                "mass",
                "hbar",
                "gamma",
                "omega1",
                "omega2",
                "duration",
                "t_free",
                "d_tail",
            ],
            Command::Way => &[
                "sweep_j",
                "restarts",
                "max_evals",
                "search_models",
                "search_max_dim",
                "shift_dim",
                "model",
            ],
        }
    }

    pub fn help(self) -> &'static str {
        match self {
            Command::Anomaly => "collapse probabilities and the anomaly threshold",
            Command::Collapse => "Monte Carlo of the hit process and branch weights",
            Command::Pointer => "pointer measurement, tails and free spreading",
            Command::Way => "conservation-law obstruction checks and the nonideality sweep",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Command, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Format, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format `{s}`, expected json or csv")),
        }
    }
}

/// Where a parameter value came from, for diagnostics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "config line {n}"),
            Origin::Flag => f.write_str("flag"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub value: String,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: BTreeMap<String, Param>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn new(command: Command) -> RunConfig {
        RunConfig {
            command,
            params: BTreeMap::new(),
            seed: DEFAULT_SEED,
            output_path: None,
            format: Format::Json,
        }
    }

    /// Adds or replaces a parameter; flags call this after the file is read,
    /// so they win.
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), CliError> {
        if !self.command.keys().contains(&key) {
            return Err(CliError::Config {
                origin,
                msg: format!("unknown key `{key}` for command {}", self.command),
            });
        }
        if origin == Origin::Flag {
            // a flag replaces any alternative spelling set by the file
            for (k, others) in CONFLICTS {
                if k == key {
                    self.params
                        .retain(|k, p| p.origin == Origin::Flag || !others.contains(&k.as_str()));
                }
            }
        }
        self.params.insert(
            key.to_string(),
            Param {
                value: value.to_string(),
                origin,
            },
        );
        Ok(())
    }

    pub fn with(mut self, key: &str, value: &str) -> Result<RunConfig, CliError> {
        self.set(key, value, Origin::Flag)?;
        Ok(self)
    }

    pub fn raw(&self, key: &str) -> Option<&Param> {
        self.params.get(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.params.get(key) {
            None => Ok(None),
            Some(p) => p
                .value
                .parse()
                .map(Some)
                .map_err(|e: T::Err| CliError::Param {
                    key: key.to_string(),
                    origin: p.origin.clone(),
                    msg: format!("cannot parse `{}`: {e}", p.value),
                }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// A parameter error attributed to where `key` was set.
    pub fn invalid(&self, key: &str, msg: impl Into<String>) -> CliError {
        CliError::Param {
            key: key.to_string(),
            origin: self
                .params
                .get(key)
                .map_or(Origin::Flag, |p| p.origin.clone()),
            msg: msg.into(),
        }
    }

    /// At most one of `keys` may be set.
    pub fn exclusive<'a>(&self, keys: &[&'a str]) -> Result<Option<&'a str>, CliError> {
        let set: Vec<&str> = keys
            .iter()
            .copied()
            .filter(|k| self.params.contains_key(*k))
            .collect();
        if set.len() > 1 {
            return Err(self.invalid(set[1], format!("conflicts with `{}`", set[0])));
        }
        Ok(set.first().copied())
    }

    /// Parses a config file. Text starting with `{` is a flat JSON object;
    /// anything else is `key = value` lines with `#` comments. `command` in
    /// the file must agree with `command` when both are given.
    pub fn from_text(text: &str, command: Option<Command>) -> Result<RunConfig, CliError> {
        let entries = if text.trim_start().starts_with('{') {
            json_entries(text)?
        } else {
            flat_entries(text)?
        };
        let mut file_command = None;
        for (key, value, line) in &entries {
            if key == "command" {
                let c: Command = value.parse().map_err(|msg| CliError::Config {
                    origin: Origin::Line(*line),
                    msg,
                })?;
                file_command = Some((c, *line));
            }
        }
        let command = match (command, file_command) {
            (Some(a), Some((b, line))) if a != b => {
                return Err(CliError::Config {
                    origin: Origin::Line(line),
                    msg: format!("config is for command {b}, not {a}"),
                })
            }
            (Some(a), _) => a,
            (None, Some((b, _))) => b,
            (None, None) => {
                return Err(CliError::Config {
                    origin: Origin::Line(1),
                    msg: "no command given".into(),
                })
            }
        };
        let mut cfg = RunConfig::new(command);
        let mut seen = BTreeMap::new();
        for (key, value, line) in entries {
            let origin = Origin::Line(line);
            if let Some(first) = seen.insert(key.clone(), line) {
                return Err(CliError::Config {
                    origin,
                    msg: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            let bad = |msg: String| CliError::Config {
                origin: Origin::Line(line),
                msg,
            };
            match key.as_str() {
                "command" => {}
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|e| bad(format!("seed `{value}`: {e}")))?
                }
                "out" => cfg.output_path = Some(PathBuf::from(value)),
                "format" => cfg.format = value.parse().map_err(bad)?,
                _ => cfg.set(&key, &value, origin)?,
            }
        }
        Ok(cfg)
    }
}

fn flat_entries(text: &str) -> Result<Vec<(String, String, usize)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| CliError::Config {
            origin: Origin::Line(line),
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(CliError::Config {
                origin: Origin::Line(line),
                msg: format!("malformed key `{key}`"),
            });
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        out.push((key.to_string(), value.to_string(), line));
    }
    Ok(out)
}

/// Drops a `#` comment unless the `#` sits inside double quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn json_entries(text: &str) -> Result<Vec<(String, String, usize)>, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config {
        origin: Origin::Line(e.line()),
        msg: format!("invalid JSON: {e}"),
    })?;
    let serde_json::Value::Object(map) = value else {
        return Err(CliError::Config {
            origin: Origin::Line(1),
            msg: "JSON config must be an object".into(),
        });
    };
    let mut out = Vec::new();
    for (key, v) in map {
        let line = json_key_line(text, &key);
        let value = match v {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            serde_json::Value::Array(items) => {
                let parts: Result<Vec<String>, _> = items
                    .iter()
                    .map(|x| match x {
                        serde_json::Value::Number(n) => Ok(n.to_string()),
                        serde_json::Value::String(s) => Ok(s.clone()),
                        _ => Err(()),
                    })
                    .collect();
                parts
                    .map_err(|()| CliError::Config {
                        origin: Origin::Line(line),
                        msg: format!("`{key}`: arrays may hold only numbers or strings"),
                    })?
                    .join(",")
            }
            _ => {
                return Err(CliError::Config {
                    origin: Origin::Line(line),
                    msg: format!("`{key}` must be a string, number, boolean or array"),
                })
            }
        };
        out.push((key, value, line));
    }
    out.sort_by_key(|e| e.2);
    Ok(out)
}

/// Line of the first `"key"` token, for diagnostics.
fn json_key_line(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map_or(1, |i| i + 1)
}

/// A comma-separated list, or `a..b` stepping by 1/2 (both ends included).
pub fn parse_j_list(text: &str) -> Result<Vec<f64>, String> {
    if let Some((a, b)) = text.split_once("..") {
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("`{}`: {e}", s.trim()))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        let (lo, hi) = ((2.0 * a).round(), (2.0 * b).round());
        if lo != 2.0 * a || hi != 2.0 * b || lo < 1.0 || hi < lo {
            return Err(format!(
                "range `{text}` must run over half-integers j >= 1/2"
            ));
        }
        return Ok((lo as u32..=hi as u32)
            .map(|t| f64::from(t) / 2.0)
            .collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("`{}`: {e}", s.trim()))
        })
        .collect()
}

pub fn parse_bool(text: &str) -> Result<bool, String> {
    match text {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{text}`")),
    }
}
