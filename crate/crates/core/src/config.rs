//! Encoding configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! scheme = truncated
//! d = 128
//! base = 10000
//! scale_train = 4
//! scale_eval = 8
//! ```
//!
//! Recognized keys: `scheme`, `d`, `base`, `scale_train`, `scale_eval`,
//! `power_k`, `trunc_a`, `trunc_b`, `trunc_rho`, `rand_epsilon`,
//! `rand_upper`, `xpos_gamma`, `xpos_scale_base`, `precision_mode`, `seed`.
//! Any other key is an error, as is a repeated key. `scheme` and `d` are
//! required; the rest fall back to the values of [`EncodingConfig::new`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{
    linear_positions, power_basis, randomized_positions, rope_basis, truncated_basis,
    FrequencyBasis, PositionSchedule, PowerParams, Precision, RandomizedParams, ScaleParams,
    TruncationParams, XPosParams, DEFAULT_BASE,
};
use crate::{Error, Result};

/// Positional-encoding scheme. Linear scaling is orthogonal to the scheme
/// and controlled through [`ScaleParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Rope,
    Power,
    Truncated,
    Randomized,
    XPos,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Rope,
        Scheme::Power,
        Scheme::Truncated,
        Scheme::Randomized,
        Scheme::XPos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Rope => "rope",
            Scheme::Power => "power",
            Scheme::Truncated => "truncated",
            Scheme::Randomized => "randomized",
            Scheme::XPos => "xpos",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingConfig {
    pub scheme: Scheme,
    pub d: usize,
    pub base: f64,
    pub scale: ScaleParams,
    pub power: PowerParams,
    pub truncation: TruncationParams,
    pub randomized: RandomizedParams,
    pub xpos_gamma: f64,
    pub xpos_scale_base: f64,
    pub precision: Precision,
    pub seed: u64,
}

const KEYS: [&str; 15] = [
    "scheme",
    "d",
    "base",
    "scale_train",
    "scale_eval",
    "power_k",
    "trunc_a",
    "trunc_b",
    "trunc_rho",
    "rand_epsilon",
    "rand_upper",
    "xpos_gamma",
    "xpos_scale_base",
    "precision_mode",
    "seed",
];

impl EncodingConfig {
    pub fn new(scheme: Scheme, d: usize) -> Self {
        EncodingConfig {
            scheme,
            d,
            base: DEFAULT_BASE,
            scale: ScaleParams::default(),
            power: PowerParams::default(),
            truncation: TruncationParams::default(),
            randomized: RandomizedParams::default(),
            xpos_gamma: XPosParams::DEFAULT_GAMMA,
            xpos_scale_base: XPosParams::DEFAULT_SCALE_BASE,
            precision: Precision::Wide,
            seed: 0,
        }
    }

    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }

    pub fn with_scale(mut self, train: f64, eval: f64) -> Self {
        self.scale = ScaleParams {
            train_scale: train,
            eval_scale: eval,
        };
        self
    }

    /// Copy with only the inference-time fields replaced by `other`'s.
    pub fn with_eval_from(&self, other: &EncodingConfig) -> Self {
        let mut out = self.clone();
        out.scale.eval_scale = other.scale.eval_scale;
        out
    }

    pub fn with_eval_scale(&self, eval_scale: f64) -> Self {
        let mut out = self.clone();
        out.scale.eval_scale = eval_scale;
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.basis()?;
        self.scale.validate()?;
        if self.scheme == Scheme::Randomized {
            self.randomized.validate()?;
        }
        if self.scheme == Scheme::XPos {
            self.xpos_params()?;
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<FrequencyBasis> {
        match self.scheme {
            Scheme::Rope | Scheme::Randomized | Scheme::XPos => rope_basis(self.d, self.base),
            Scheme::Power => power_basis(self.d, self.base, &self.power),
            Scheme::Truncated => truncated_basis(self.d, self.base, &self.truncation),
        }
    }

    fn xpos_params(&self) -> Result<XPosParams> {
        XPosParams::from_gamma(self.d, self.xpos_gamma, self.xpos_scale_base, self.precision)
    }

    /// xPos amplitudes when the scheme uses them.
    pub fn xpos(&self) -> Result<Option<XPosParams>> {
        match self.scheme {
            Scheme::XPos => self.xpos_params().map(Some),
            _ => Ok(None),
        }
    }

    fn divide(schedule: PositionSchedule, scale: f64) -> Result<PositionSchedule> {
        if scale == 1.0 {
            return Ok(schedule);
        }
        PositionSchedule::new(schedule.positions().iter().map(|p| p / scale).collect())
    }

    /// Inference-time positions. Randomized schemes draw from a generator
    /// seeded with `seed`, so the result is deterministic.
    pub fn eval_schedule(&self, n: usize) -> Result<PositionSchedule> {
        match self.scheme {
            Scheme::Randomized => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let raw = randomized_positions(n, &self.randomized, &mut rng)?;
                Self::divide(raw, self.scale.eval_scale)
            }
            _ => linear_positions(n, &self.scale),
        }
    }

    /// Training-time positions; randomized schemes draw fresh gaps from `rng`.
    pub fn train_schedule<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<PositionSchedule> {
        match self.scheme {
            Scheme::Randomized => {
                let raw = randomized_positions(n, &self.randomized, rng)?;
                Self::divide(raw, self.scale.train_scale)
            }
            _ => linear_positions(n, &self.scale.training()),
        }
    }

    /// `(key, value)` pairs in canonical order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("scheme", self.scheme.to_string()),
            ("d", self.d.to_string()),
            ("base", self.base.to_string()),
            ("scale_train", self.scale.train_scale.to_string()),
            ("scale_eval", self.scale.eval_scale.to_string()),
            ("power_k", self.power.k.to_string()),
            ("trunc_a", self.truncation.a.to_string()),
            ("trunc_b", self.truncation.b.to_string()),
            ("trunc_rho", self.truncation.rho.to_string()),
            ("rand_epsilon", self.randomized.epsilon.to_string()),
            ("rand_upper", self.randomized.upper.to_string()),
            ("xpos_gamma", self.xpos_gamma.to_string()),
            ("xpos_scale_base", self.xpos_scale_base.to_string()),
            ("precision_mode", self.precision.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn to_kv_string(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies one `key = value` assignment. Returns an error for unknown
    /// keys or unparseable values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "scheme" => self.scheme = value.parse()?,
            "d" => self.d = num(key, value)?,
            "base" => self.base = num(key, value)?,
            "scale_train" => self.scale.train_scale = num(key, value)?,
            "scale_eval" => self.scale.eval_scale = num(key, value)?,
            "power_k" => self.power.k = num(key, value)?,
            "trunc_a" => self.truncation.a = num(key, value)?,
            "trunc_b" => self.truncation.b = num(key, value)?,
            "trunc_rho" => self.truncation.rho = num(key, value)?,
            "rand_epsilon" => self.randomized.epsilon = num(key, value)?,
            "rand_upper" => self.randomized.upper = num(key, value)?,
            "xpos_gamma" => self.xpos_gamma = num(key, value)?,
            "xpos_scale_base" => self.xpos_scale_base = num(key, value)?,
            "precision_mode" => self.precision = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            other => {
                return Err(Error::InvalidParameter(format!("unknown key `{other}`")));
            }
        }
        Ok(())
    }

    /// Parses the flat key-value format. Unknown keys are rejected.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        Self::from_pairs(&pairs)
    }

    /// Builds a config from already-split `(line, key, value)` triples.
    pub fn from_pairs(pairs: &[(usize, String, String)]) -> Result<Self> {
        let lookup = |k: &str| pairs.iter().find(|(_, key, _)| key == k);
        let (line, _, scheme) = lookup("scheme").ok_or(Error::Config {
            line: 0,
            message: "missing required key `scheme`".into(),
        })?;
        let scheme = scheme.parse().map_err(|e: Error| Error::Config {
            line: *line,
            message: e.to_string(),
        })?;
        let (line, _, d) = lookup("d").ok_or(Error::Config {
            line: 0,
            message: "missing required key `d`".into(),
        })?;
        let d = d.parse().map_err(|_| Error::Config {
            line: *line,
            message: format!("bad value `{d}` for `d`"),
        })?;
        let mut cfg = EncodingConfig::new(scheme, d);
        for (line, key, value) in pairs {
            cfg.set(key, value).map_err(|e| Error::Config {
                line: *line,
                message: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments. Duplicate
/// keys and lines without `=` are errors. Line numbers are 1-based.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = trimmed.split_once('=').ok_or(Error::Config {
            line,
            message: format!("expected `key = value`, got `{trimmed}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config {
                line,
                message: "empty key".into(),
            });
        }
        if out.iter().any(|(_, key, _)| key == k) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{k}`"),
            });
        }
        out.push((line, k.to_string(), v.to_string()));
    }
    Ok(out)
}
