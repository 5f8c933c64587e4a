//! Flat `key=value` run configuration with a canonical text form.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

/// Malformed or inconsistent configuration (exit code 64).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Log,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartKind {
    /// Pick the method the regime prescribes.
    Auto,
    Sub,
    Super,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub theta: String,
    pub q: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_range: Option<LambdaRange>,
    pub scale: Scale,
    pub dim: usize,
    pub n: usize,
    /// One `(a, b)` pair per dimension; defaults to the unit box.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub pad: f64,
    pub tol: f64,
    /// Transform extent; chosen automatically when absent.
    pub s_max: Option<f64>,
    pub r: f64,
    pub max_iter: usize,
    pub start: StartKind,
    pub parallel: bool,
    /// Dimension used by the Pohozaev scan and the regime table.
    pub big_n: usize,
    pub s_lo: f64,
    pub s_hi: f64,
    pub samples: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            theta: "theta1".into(),
            q: None,
            lambda: None,
            lambda_range: None,
            scale: Scale::Log,
            dim: 1,
            n: 400,
            bounds: None,
            pad: quasidual::mesh::DEFAULT_PAD,
            tol: quasidual::solver::DEFAULT_TOL,
            s_max: None,
            r: quasidual::solver::DEFAULT_R,
            max_iter: quasidual::solver::DEFAULT_MAX_ITER,
            start: StartKind::Auto,
            parallel: false,
            big_n: 3,
            s_lo: 1e-6,
            s_hi: 1e4,
            samples: 1000,
            output_dir: None,
        }
    }
}

/// Keys accepted in a config file, in canonical order.
pub const KEYS: &[&str] = &[
    "bounds",
    "deterministic",
    "dim",
    "lambda",
    "lambda_range",
    "max_iter",
    "n",
    "N",
    "output_dir",
    "pad",
    "parallel",
    "q",
    "r",
    "s_hi",
    "s_lo",
    "s_max",
    "samples",
    "scale",
    "start",
    "theta",
    "tol",
];

fn real(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.trim().parse().map_err(|_| bad(format!("{key}: not a number: {v:?}")))?;
    if !x.is_finite() {
        return Err(bad(format!("{key}: must be finite, got {v}")));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.trim().parse().map_err(|_| bad(format!("{key}: not a nonnegative integer: {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// `min:max:count`.
pub fn parse_range(v: &str) -> Result<LambdaRange, ConfigError> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        return Err(bad(format!("lambda_range: expected min:max:count, got {v:?}")));
    }
    Ok(LambdaRange {
        min: real("lambda_range", parts[0])?,
        max: real("lambda_range", parts[1])?,
        count: count("lambda_range", parts[2])?,
    })
}

/// `a,b` or `a,b;c,d`.
pub fn parse_bounds(v: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    v.split(';')
        .map(|pair| {
            let ab: Vec<&str> = pair.split(',').collect();
            if ab.len() != 2 {
                return Err(bad(format!("bounds: expected a,b pairs separated by ';', got {v:?}")));
            }
            Ok((real("bounds", ab[0])?, real("bounds", ab[1])?))
        })
        .collect()
}

/// Shortest text that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "theta" => self.theta = v.to_string(),
            "q" => self.q = Some(real(key, v)?),
            "lambda" => self.lambda = Some(real(key, v)?),
            "lambda_range" => self.lambda_range = Some(parse_range(v)?),
            "scale" => {
                self.scale = match v {
                    "log" => Scale::Log,
                    "linear" => Scale::Linear,
                    _ => return Err(bad(format!("scale: expected log or linear, got {v:?}"))),
                }
            }
            "dim" => self.dim = count(key, v)?,
            "n" => self.n = count(key, v)?,
            "bounds" => self.bounds = Some(parse_bounds(v)?),
            "pad" => self.pad = real(key, v)?,
            "tol" => self.tol = real(key, v)?,
            "s_max" => self.s_max = if v == "auto" { None } else { Some(real(key, v)?) },
            "r" => self.r = real(key, v)?,
            "max_iter" => self.max_iter = count(key, v)?,
            "start" => {
                self.start = match v {
                    "auto" => StartKind::Auto,
                    "sub" => StartKind::Sub,
                    "super" => StartKind::Super,
                    _ => return Err(bad(format!("start: expected auto, sub or super, got {v:?}"))),
                }
            }
            "parallel" => self.parallel = flag(key, v)?,
            "N" => self.big_n = count(key, v)?,
            "s_lo" => self.s_lo = real(key, v)?,
            "s_hi" => self.s_hi = real(key, v)?,
            "samples" => self.samples = count(key, v)?,
            "output_dir" => self.output_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            // runs are always deterministic; the key is accepted for completeness
            "deterministic" => {
                if !flag(key, v)? {
                    return Err(bad("deterministic: runs are always deterministic"));
                }
            }
            _ => return Err(bad(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config-file text: one `key=value` per line, `#` comments and
    /// blank lines ignored, each key at most once.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
            let k = k.trim();
            if seen.insert(k.to_string(), lineno).is_some() {
                return Err(bad(format!("line {}: duplicate key {k:?}", lineno + 1)));
            }
            self.set(k, v).map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Sorted `key=value` lines covering every setting.
    pub fn canonical(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        if let Some(b) = &self.bounds {
            let s: Vec<String> = b.iter().map(|(a, c)| format!("{},{}", num(*a), num(*c))).collect();
            m.insert("bounds", s.join(";"));
        }
        m.insert("deterministic", "true".into());
        m.insert("dim", self.dim.to_string());
        if let Some(l) = self.lambda {
            m.insert("lambda", num(l));
        }
        if let Some(r) = self.lambda_range {
            m.insert("lambda_range", format!("{}:{}:{}", num(r.min), num(r.max), r.count));
        }
        m.insert("max_iter", self.max_iter.to_string());
        m.insert("n", self.n.to_string());
        m.insert("N", self.big_n.to_string());
        if let Some(d) = &self.output_dir {
            m.insert("output_dir", d.display().to_string());
        }
        m.insert("pad", num(self.pad));
        m.insert("parallel", self.parallel.to_string());
        if let Some(q) = self.q {
            m.insert("q", num(q));
        }
        m.insert("r", num(self.r));
        m.insert("s_hi", num(self.s_hi));
        m.insert("s_lo", num(self.s_lo));
        m.insert("s_max", self.s_max.map_or_else(|| "auto".to_string(), num));
        m.insert("samples", self.samples.to_string());
        m.insert(
            "scale",
            match self.scale {
                Scale::Log => "log",
                Scale::Linear => "linear",
            }
            .into(),
        );
        m.insert(
            "start",
            match self.start {
                StartKind::Auto => "auto",
                StartKind::Sub => "sub",
                StartKind::Super => "super",
            }
            .into(),
        );
        m.insert("theta", self.theta.clone());
        m.insert("tol", num(self.tol));
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = m.get(key) {
                out.push_str(key);
                out.push('=');
                out.push_str(v);
                out.push('\n');
            }
        }
        out
    }

    /// SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn require_q(&self) -> Result<f64, ConfigError> {
        let q = self.q.ok_or_else(|| bad("q is required"))?;
        if !(q > 0.0) {
            return Err(bad(format!("q must be positive, got {q}")));
        }
        Ok(q)
    }

    pub fn require_lambda(&self) -> Result<f64, ConfigError> {
        self.lambda.ok_or_else(|| bad("lambda is required"))
    }

    /// The λ values of a sweep.
    pub fn lambdas(&self) -> Result<Vec<f64>, ConfigError> {
        let r = self.lambda_range.ok_or_else(|| bad("lambda_range is required"))?;
        if r.count < 2 || !(r.max > r.min) {
            return Err(bad("lambda_range needs min < max and count >= 2"));
        }
        if self.scale == Scale::Log && !(r.min > 0.0) {
            return Err(bad("a log-scaled lambda_range needs min > 0"));
        }
        let last = (r.count - 1) as f64;
        Ok((0..r.count)
            .map(|k| {
                let t = k as f64 / last;
                match self.scale {
                    Scale::Log => r.min * (r.max / r.min).powf(t),
                    Scale::Linear => r.min + (r.max - r.min) * t,
                }
            })
            .collect())
    }

    /// Domain bounds, defaulting to `(0, 1)^dim`.
    pub fn domain(&self) -> Result<Vec<(f64, f64)>, ConfigError> {
        if !(1..=2).contains(&self.dim) {
            return Err(bad(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        let b = self.bounds.clone().unwrap_or_else(|| vec![(0.0, 1.0); self.dim]);
        if b.len() != self.dim {
            return Err(bad(format!("bounds give {} intervals for dim {}", b.len(), self.dim)));
        }
        Ok(b)
    }
}
