use std::fmt;
use std::str::FromStr;

use half::f16;

use crate::{Error, Result};

/// Largest finite half-precision value.
pub const HALF_MAX: f64 = 65504.0;

/// Arithmetic width for xPos amplitudes and the attention products that
/// consume them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// f64 throughout.
    #[default]
    Wide,
    /// Amplitudes and scaled queries/keys stored as IEEE half floats.
    Narrow,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Wide => "wide",
            Precision::Narrow => "narrow",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Precision::Wide),
            "narrow" => Ok(Precision::Narrow),
            other => Err(Error::InvalidParameter(format!(
                "unknown precision mode `{other}` (expected wide or narrow)"
            ))),
        }
    }
}

/// Per-pair decay factors `ζ_i ∈ (0, 1]`. A query at position `m` is
/// scaled by `ζ_i^(m/scale_base)` and a key at `n` by `ζ_i^(−n/scale_base)`,
/// so their product depends only on `m − n`.
#[derive(Debug, Clone, PartialEq)]
pub struct XPosParams {
    decay: Vec<f64>,
    scale_base: f64,
    precision: Precision,
}

impl XPosParams {
    pub const DEFAULT_GAMMA: f64 = 0.4;
    pub const DEFAULT_SCALE_BASE: f64 = 512.0;

    pub fn new(decay: Vec<f64>, scale_base: f64, precision: Precision) -> Result<Self> {
        if let Some((i, z)) = decay
            .iter()
            .enumerate()
            .find(|(_, &z)| !(z > 0.0 && z <= 1.0))
        {
            return Err(Error::InvalidParameter(format!(
                "xPos decay component {i} must lie in (0, 1], got {z}"
            )));
        }
        if !(scale_base > 0.0 && scale_base.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "xPos scale base must be positive, got {scale_base}"
            )));
        }
        Ok(XPosParams {
            decay,
            scale_base,
            precision,
        })
    }

    /// `ζ_i = (2(i−1)/d + γ) / (1 + γ)`: strongest decay on the
    /// highest-frequency pair, approaching 1 for the lowest frequencies.
    pub fn from_gamma(d: usize, gamma: f64, scale_base: f64, precision: Precision) -> Result<Self> {
        if d < 2 || d % 2 != 0 {
            return Err(Error::InvalidDimension(d));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "xPos gamma must be positive, got {gamma}"
            )));
        }
        let decay = (0..d / 2)
            .map(|j| (2.0 * j as f64 / d as f64 + gamma) / (1.0 + gamma))
            .collect();
        XPosParams::new(decay, scale_base, precision)
    }

    /// All-ones decay: scores identical to plain rotary attention.
    pub fn identity(d: usize, precision: Precision) -> Self {
        XPosParams {
            decay: vec![1.0; d / 2],
            scale_base: Self::DEFAULT_SCALE_BASE,
            precision,
        }
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// True when every decay is exactly 1, so amplitudes are all 1.
    pub fn is_identity(&self) -> bool {
        self.decay.iter().all(|&z| z == 1.0)
    }

    pub fn scale_base(&self) -> f64 {
        self.scale_base
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    /// `ζ_i^(offset/scale_base)` computed directly in f64. This is the
    /// fused factor applied to a query/key pair separated by `offset`.
    pub fn relative_factor(&self, pair: usize, offset: f64) -> f64 {
        self.decay[pair].powf(offset / self.scale_base)
    }
}

/// Amplitudes `ζ_i^(position/scale_base)` for one position. Queries pass
/// `+m`, keys pass `−n`.
///
/// In narrow mode each amplitude is rounded to half precision, and any
/// amplitude outside the half range is reported as
/// [`Error::NumericOverflow`] instead of silently becoming infinity.
pub fn xpos_decay(d: usize, params: &XPosParams, position: f64) -> Result<Vec<f64>> {
    if d != 2 * params.decay.len() {
        return Err(Error::Shape(format!(
            "xPos decay has {} pairs but head dimension is {d}",
            params.decay.len()
        )));
    }
    let exponent = position / params.scale_base;
    params
        .decay
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let v = z.powf(exponent);
            match params.precision {
                Precision::Wide => Ok(v),
                Precision::Narrow => {
                    let h = f16::from_f64(v);
                    if h.is_infinite() || h.is_nan() {
                        Err(Error::NumericOverflow {
                            position,
                            component: i,
                            value: v,
                        })
                    } else {
                        Ok(h.to_f64())
                    }
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_decay_is_all_ones() {
        let p = XPosParams::identity(8, Precision::Wide);
        assert_eq!(xpos_decay(8, &p, 12345.0).unwrap(), vec![1.0; 4]);
        assert_eq!(xpos_decay(8, &p, -777.0).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn position_zero_is_all_ones() {
        let p = XPosParams::from_gamma(16, 0.4, 512.0, Precision::Narrow).unwrap();
        assert_eq!(xpos_decay(16, &p, 0.0).unwrap(), vec![1.0; 8]);
    }

    #[test]
    fn schedule_shape() {
        let p = XPosParams::from_gamma(8, 0.4, 512.0, Precision::Wide).unwrap();
        let z = p.decay();
        assert!((z[0] - 0.4 / 1.4).abs() < 1e-15);
        assert!(z.windows(2).all(|w| w[0] < w[1]));
        assert!(z.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn rejects_out_of_range_decay() {
        assert!(XPosParams::new(vec![0.5, 1.5], 512.0, Precision::Wide).is_err());
        assert!(XPosParams::new(vec![0.0], 512.0, Precision::Wide).is_err());
        assert!(XPosParams::from_gamma(3, 0.4, 512.0, Precision::Wide).is_err());
    }

    #[test]
    fn narrow_overflow_is_reported() {
        let p = XPosParams::from_gamma(64, 0.4, 512.0, Precision::Narrow).unwrap();
        match xpos_decay(64, &p, -32768.0) {
            Err(Error::NumericOverflow { component, value, .. }) => {
                assert_eq!(component, 0);
                assert!(value > HALF_MAX);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
        let wide = p.with_precision(Precision::Wide);
        let v = xpos_decay(64, &wide, -65536.0).unwrap();
        assert!(v.iter().all(|x| x.is_finite()));
    }
}
