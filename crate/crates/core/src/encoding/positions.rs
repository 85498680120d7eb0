use rand::Rng;

use crate::{Error, Result};

/// Real-valued positions fed to the rotary map. Strictly increasing and
/// starting at or above zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSchedule {
    positions: Vec<f64>,
}

impl PositionSchedule {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptySequence);
        }
        if !(positions[0] >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "first position must be nonnegative, got {}",
                positions[0]
            )));
        }
        if let Some(w) = positions
            .windows(2)
            .find(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "positions must be finite and strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(PositionSchedule { positions })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Adds `offset` to every position.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        PositionSchedule::new(self.positions.iter().map(|p| p + offset).collect())
    }

    /// First `n` positions of this schedule.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        PositionSchedule::new(self.positions[..n.min(self.len())].to_vec())
    }
}

/// Linear position scaling. `train_scale` is used while training and
/// `eval_scale` at inference, which is how zero-shot rescaling is injected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub train_scale: f64,
    pub eval_scale: f64,
}

impl ScaleParams {
    pub fn uniform(scale: f64) -> Self {
        ScaleParams {
            train_scale: scale,
            eval_scale: scale,
        }
    }

    /// The training-time view: `eval_scale` replaced by `train_scale`.
    pub fn training(&self) -> Self {
        ScaleParams::uniform(self.train_scale)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("train_scale", self.train_scale), ("eval_scale", self.eval_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams::uniform(1.0)
    }
}

/// Bounds for randomized inter-position gaps, drawn uniformly from
/// `[epsilon, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizedParams {
    pub epsilon: f64,
    pub upper: f64,
}

impl Default for RandomizedParams {
    fn default() -> Self {
        RandomizedParams {
            epsilon: 1.0 / 16.0,
            upper: 2.0,
        }
    }
}

impl RandomizedParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "randomized epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.upper > self.epsilon && self.upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "randomized upper bound must exceed epsilon, got {}",
                self.upper
            )));
        }
        Ok(())
    }

    /// Expected gap length, `(epsilon + upper) / 2`.
    pub fn mean_gap(&self) -> f64 {
        (self.epsilon + self.upper) / 2.0
    }
}

/// `positions[j] = j / eval_scale` for `j = 0..n`.
pub fn linear_positions(n: usize, scale: &ScaleParams) -> Result<PositionSchedule> {
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    scale.validate()?;
    let x = scale.eval_scale;
    PositionSchedule::new((0..n).map(|j| j as f64 / x).collect())
}

/// Cumulative positions from an arbitrary gap source, starting at 0. Every
/// gap must lie within the bounds of `params`.
pub fn positions_from_gaps(
    n: usize,
    params: &RandomizedParams,
    mut gap: impl FnMut() -> f64,
) -> Result<PositionSchedule> {
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    params.validate()?;
    let mut positions = Vec::with_capacity(n);
    let mut p = 0.0;
    positions.push(p);
    for _ in 1..n {
        let g = gap();
        if !(g >= params.epsilon && g <= params.upper) {
            return Err(Error::InvalidParameter(format!(
                "gap {g} outside [{}, {}]",
                params.epsilon, params.upper
            )));
        }
        p += g;
        positions.push(p);
    }
    PositionSchedule::new(positions)
}

/// Randomized schedule: starts at 0, then i.i.d. gaps uniform in
/// `[epsilon, upper]`.
pub fn randomized_positions<R: Rng + ?Sized>(
    n: usize,
    params: &RandomizedParams,
    rng: &mut R,
) -> Result<PositionSchedule> {
    params.validate()?;
    let (lo, hi) = (params.epsilon, params.upper);
    positions_from_gaps(n, params, || rng.random_range(lo..=hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_examples() {
        let s = linear_positions(5, &ScaleParams::uniform(4.0)).unwrap();
        assert_eq!(s.positions(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let s = linear_positions(3, &ScaleParams::uniform(1.0)).unwrap();
        assert_eq!(s.positions(), &[0.0, 1.0, 2.0]);
        let s = linear_positions(4097, &ScaleParams::uniform(16.0)).unwrap();
        assert_eq!(*s.positions().last().unwrap(), 256.0);
    }

    #[test]
    fn linear_uses_eval_scale() {
        let scale = ScaleParams {
            train_scale: 2.0,
            eval_scale: 4.0,
        };
        let s = linear_positions(3, &scale).unwrap();
        assert_eq!(s.positions(), &[0.0, 0.25, 0.5]);
        let s = linear_positions(3, &scale.training()).unwrap();
        assert_eq!(s.positions(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn empty_is_rejected() {
        assert_eq!(
            linear_positions(0, &ScaleParams::default()),
            Err(Error::EmptySequence)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            randomized_positions(0, &RandomizedParams::default(), &mut rng),
            Err(Error::EmptySequence)
        );
        assert_eq!(PositionSchedule::new(vec![]), Err(Error::EmptySequence));
    }

    #[test]
    fn bad_scale_and_bounds() {
        assert!(linear_positions(3, &ScaleParams::uniform(0.0)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (epsilon, upper) in [(0.0, 2.0), (1.0, 2.0), (0.5, 0.25)] {
            let p = RandomizedParams { epsilon, upper };
            assert!(randomized_positions(4, &p, &mut rng).is_err());
        }
    }

    #[test]
    fn constant_gap_source_is_identity() {
        let s = positions_from_gaps(6, &RandomizedParams::default(), || 1.0).unwrap();
        assert_eq!(s.positions(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn schedule_rejects_non_increasing() {
        assert!(PositionSchedule::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(PositionSchedule::new(vec![-1.0, 1.0]).is_err());
        assert!(PositionSchedule::new(vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn true_mean_gap() {
        assert_eq!(RandomizedParams::default().mean_gap(), 1.03125);
    }
}
