use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

pub const DEFAULT_BASE: f64 = 10000.0;

/// Which construction produced a [`FrequencyBasis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisScheme {
    Rope,
    Power,
    Truncated,
}

impl BasisScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisScheme::Rope => "rope",
            BasisScheme::Power => "power",
            BasisScheme::Truncated => "truncated",
        }
    }
}

impl fmt::Display for BasisScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BasisScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rope" => Ok(BasisScheme::Rope),
            "power" => Ok(BasisScheme::Power),
            "truncated" => Ok(BasisScheme::Truncated),
            other => Err(Error::InvalidParameter(format!("unknown basis scheme `{other}`"))),
        }
    }
}

/// Per-pair rotation frequencies `θ_1 … θ_{d/2}` in radians per position unit.
///
/// Frequencies are non-increasing in the pair index for every scheme. A
/// truncated basis may be entirely zero (for example `d = 2` with a high
/// cutoff above 1), in which case positions are unobservable.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBasis {
    d: usize,
    base: f64,
    freqs: Vec<f64>,
    scheme: BasisScheme,
}

impl FrequencyBasis {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn scheme(&self) -> BasisScheme {
        self.scheme
    }

    /// Number of rotated pairs, `d / 2`.
    pub fn pairs(&self) -> usize {
        self.freqs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    pub k: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams { k: 0.5 }
    }
}

/// Cutoffs for the truncated basis: frequencies at or above `b` pass
/// through, those strictly between `a` and `b` collapse to `rho`, and those
/// at or below `a` become zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationParams {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
}

impl Default for TruncationParams {
    /// `a = (1/8)·2π/2048`, `b = 2π/2048`, `ρ = (1/16)·2π/2048`.
    fn default() -> Self {
        let unit = 2.0 * PI / 2048.0;
        TruncationParams {
            a: unit / 8.0,
            b: unit,
            rho: unit / 16.0,
        }
    }
}

impl TruncationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "truncation cutoff a must be positive, got {}",
                self.a
            )));
        }
        if !(self.b > self.a && self.b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "truncation cutoffs need a < b, got a = {} and b = {}",
                self.a, self.b
            )));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "truncation frequency rho must be nonnegative, got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Advisory check for `a ≤ ρ ≤ b`. The default parameter set has
    /// `ρ < a`, so this is reported rather than enforced.
    pub fn rho_in_band(&self) -> bool {
        self.a <= self.rho && self.rho <= self.b
    }
}

fn check_dims(d: usize, base: f64) -> Result<()> {
    if d < 2 || d % 2 != 0 {
        return Err(Error::InvalidDimension(d));
    }
    if !(base > 1.0 && base.is_finite()) {
        return Err(Error::InvalidParameter(format!("base must be > 1, got {base}")));
    }
    Ok(())
}

fn geometric(d: usize, base: f64) -> Vec<f64> {
    (0..d / 2)
        .map(|j| base.powf(-2.0 * j as f64 / d as f64))
        .collect()
}

/// Standard rotary basis `θ_i = base^(−2(i−1)/d)`.
pub fn rope_basis(d: usize, base: f64) -> Result<FrequencyBasis> {
    check_dims(d, base)?;
    Ok(FrequencyBasis {
        d,
        base,
        freqs: geometric(d, base),
        scheme: BasisScheme::Rope,
    })
}

/// Power-reshaped basis `θ_i · (1 − 2i/d)^k`.
///
/// The final pair (`i = d/2`) always gets frequency 0. For `k > 0` that is
/// just `0^k`; for `k = 0` the expression is `0^0`, which is also taken to
/// be 0 so that the result is continuous in `k`.
pub fn power_basis(d: usize, base: f64, params: &PowerParams) -> Result<FrequencyBasis> {
    check_dims(d, base)?;
    let k = params.k;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "power exponent k must be nonnegative, got {k}"
        )));
    }
    let half = d / 2;
    let freqs = geometric(d, base)
        .into_iter()
        .enumerate()
        .map(|(j, theta)| {
            let i = j + 1;
            if i == half {
                0.0
            } else {
                theta * (1.0 - 2.0 * i as f64 / d as f64).powf(k)
            }
        })
        .collect();
    Ok(FrequencyBasis {
        d,
        base,
        freqs,
        scheme: BasisScheme::Power,
    })
}

/// Piecewise truncated basis. The comparisons are all made on the original
/// rotary frequency `θ_i`.
pub fn truncated_basis(d: usize, base: f64, params: &TruncationParams) -> Result<FrequencyBasis> {
    check_dims(d, base)?;
    params.validate()?;
    let freqs = geometric(d, base)
        .into_iter()
        .map(|theta| {
            if theta >= params.b {
                theta
            } else if theta > params.a {
                params.rho
            } else {
                0.0
            }
        })
        .collect();
    Ok(FrequencyBasis {
        d,
        base,
        freqs,
        scheme: BasisScheme::Truncated,
    })
}
