//! Run configuration: a flat `key = value` file with command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use varlab::geometry::DomainSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} ({reason})")]
    Value { key: String, value: String, reason: String },
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Whitney,
    CheckExponent,
    VerifySp,
    VerifySobolev,
    Decompose,
    Operators,
    Counterexample,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Whitney,
        Command::CheckExponent,
        Command::VerifySp,
        Command::VerifySobolev,
        Command::Decompose,
        Command::Operators,
        Command::Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Whitney => "whitney",
            Command::CheckExponent => "check-exponent",
            Command::VerifySp => "verify-sp",
            Command::VerifySobolev => "verify-sobolev",
            Command::Decompose => "decompose",
            Command::Operators => "operators",
            Command::Counterexample => "counterexample",
        }
    }

    fn default_corpus(self) -> &'static str {
        match self {
            Command::VerifySobolev => "compact:20",
            Command::Decompose => "fields:50",
            Command::Operators => "random:40",
            _ => "standard",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown subcommand {s:?}"))
    }
}

/// Every setting of one run. Unset optional values are resolved per
/// subcommand by [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub domain: String,
    pub levels: Vec<u32>,
    pub exponent: String,
    pub alpha: f64,
    /// `None`: use the measured `τ_K` of the covering.
    pub tau: Option<f64>,
    pub seed: u64,
    pub corpus: String,
    pub kmax: u32,
    pub mode: String,
    pub p0: Option<f64>,
    pub out: PathBuf,
    pub no_timestamp: bool,
}

/// Settings collected from a file or the command line before defaults apply.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub values: Vec<(String, String)>,
}

impl Overrides {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.push((key.to_string(), value.to_string()));
    }

    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut out = Overrides::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.into() })?;
            out.set(k.trim(), v.trim());
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::parse_text(&text)
    }

    pub fn extend(&mut self, other: Overrides) {
        self.values.extend(other.values);
    }
}

fn bad(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), reason: reason.to_string() }
}

/// `5`, `4,5,6` or the inclusive range `4..6`.
pub fn parse_levels(s: &str) -> Result<Vec<u32>, String> {
    let levels: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| "bad range start")?, b.trim().parse().map_err(|_| "bad range end")?);
        (a..=b).collect()
    } else {
        s.split(',').map(|v| v.trim().parse::<u32>().map_err(|_| format!("bad level {v:?}"))).collect::<Result<_, _>>()?
    };
    if levels.is_empty() {
        return Err("empty level list".into());
    }
    if levels.iter().any(|&l| l == 0 || l > 14) {
        return Err("levels must lie in 1..=14".into());
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err("levels must increase".into());
    }
    Ok(levels)
}

/// `unit-square`, `l-shape`, `rect:W:H` or `mask:PATH` (rows of `0`/`1`,
/// top row first).
pub fn parse_domain(s: &str) -> Result<DomainSpec, String> {
    let mut parts = s.splitn(2, ':');
    match (parts.next().unwrap_or_default(), parts.next()) {
        ("unit-square", None) => Ok(DomainSpec::UnitSquare),
        ("l-shape", None) => Ok(DomainSpec::LShape),
        ("rect", Some(rest)) => {
            let (w, h) = rest.split_once(':').ok_or("rect:W:H")?;
            let w: usize = w.parse().map_err(|_| "bad rect width")?;
            let h: usize = h.parse().map_err(|_| "bad rect height")?;
            Ok(DomainSpec::Rectangle { width: w, height: h })
        }
        ("mask", Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            let width = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != width || r.chars().any(|c| c != '0' && c != '1')) {
                return Err("mask rows must be equal-length strings of 0 and 1".into());
            }
            let inside = rows.iter().rev().flat_map(|r| r.chars().map(|c| c == '1')).collect();
            Ok(DomainSpec::Mask { width, height: rows.len(), inside })
        }
        _ => Err("expected unit-square, l-shape, rect:W:H or mask:PATH".into()),
    }
}

impl RunConfig {
    /// Apply overrides in order over the defaults of `command`.
    pub fn resolve(command: Command, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig {
            command,
            domain: "unit-square".into(),
            levels: vec![if command == Command::Counterexample { 10 } else { 5 }],
            exponent: "constant:2".into(),
            alpha: 0.0,
            tau: None,
            seed: 2024,
            corpus: command.default_corpus().into(),
            kmax: 5,
            mode: "boundary".into(),
            p0: None,
            out: PathBuf::from("out"),
            no_timestamp: false,
        };
        for (k, v) in &overrides.values {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let num = |v: &str| v.parse::<f64>().map_err(|e| bad(key, v, e));
        match key {
            "command" => self.command = v.parse().map_err(|e| bad(key, v, e))?,
            "domain" => self.domain = v.into(),
            "L" | "levels" => self.levels = parse_levels(v).map_err(|e| bad(key, v, e))?,
            "exponent" => self.exponent = v.into(),
            "alpha" => self.alpha = num(v)?,
            "tau" => self.tau = if v == "auto" { None } else { Some(num(v)?) },
            "seed" => self.seed = v.parse().map_err(|e| bad(key, v, e))?,
            "corpus" => self.corpus = v.into(),
            "kmax" => self.kmax = v.parse().map_err(|e| bad(key, v, e))?,
            "mode" => self.mode = v.into(),
            "p0" => self.p0 = if v == "default" { None } else { Some(num(v)?) },
            "out" => self.out = v.into(),
            "no_timestamp" | "no-timestamp" => self.no_timestamp = v.parse().map_err(|e| bad(key, v, e))?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        parse_domain(&self.domain).map_err(|e| bad("domain", &self.domain, e))?;
        self.exponent
            .parse::<varlab::exponent::ExponentSpec>()
            .map_err(|e| bad("exponent", &self.exponent, e))?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(bad("alpha", &self.alpha.to_string(), "must be finite and non-negative"));
        }
        if let Some(t) = self.tau {
            if !(t >= 1.0 && t.is_finite()) {
                return Err(bad("tau", &t.to_string(), "must be >= 1"));
            }
        }
        if !["boundary", "interior", "korn"].contains(&self.mode.as_str()) {
            return Err(bad("mode", &self.mode, "boundary | interior | korn"));
        }
        Ok(())
    }

    /// The settings that determine the results; the output directory and
    /// the timestamp switch are left out so they do not change the hash.
    pub fn experiment_text(&self) -> String {
        let levels: Vec<String> = self.levels.iter().map(u32::to_string).collect();
        let opt = |v: Option<f64>, none: &str| v.map_or(none.to_string(), |x| x.to_string());
        format!(
            "command = {}\ndomain = {}\nL = {}\nexponent = {}\nalpha = {}\ntau = {}\nseed = {}\ncorpus = {}\nkmax = {}\nmode = {}\np0 = {}\n",
            self.command.name(),
            self.domain,
            levels.join(","),
            self.exponent,
            self.alpha,
            opt(self.tau, "auto"),
            self.seed,
            self.corpus,
            self.kmax,
            self.mode,
            opt(self.p0, "default"),
        )
    }

    /// SHA-256 of [`experiment_text`](Self::experiment_text), hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.experiment_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}out = {}\nno_timestamp = {}\n", self.experiment_text(), self.out.display(), self.no_timestamp)
    }
}
