use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{MotionSequence, Partition};
use crate::error::{Error, Result};

/// Target half-range of normalized motion values.
pub const NORM_BOUND: f64 = 0.9;

/// Per-dimension extremes measured on the training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn from_motions(motions: &[&MotionSequence]) -> Result<Self> {
        let dim = motions.first().ok_or_else(|| Error::Input("no motions to measure".into()))?.dim();
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for m in motions {
            if m.dim() != dim {
                return Err(Error::Shape("motions differ in frame width".into()));
            }
            for frame in m.frames() {
                for d in 0..dim {
                    min[d] = min[d].min(frame[d]);
                    max[d] = max[d].max(frame[d]);
                }
            }
        }
        Ok(Self { min, max })
    }
}

/// Affine map of `[min, max]` onto `[-0.9, 0.9]` per dimension, clamping
/// values outside the measured range. Degenerate dimensions map to 0.
pub fn normalize(motion: &MotionSequence, stats: &NormStats) -> Result<MotionSequence> {
    if stats.min.len() != motion.dim() || stats.max.len() != motion.dim() {
        return Err(Error::Shape(format!(
            "normalization stats cover {} dims, motion has {}",
            stats.min.len(),
            motion.dim()
        )));
    }
    for d in 0..motion.dim() {
        if stats.max[d] == stats.min[d] {
            warn!("dimension {d} is constant in the training data; normalizing it to 0");
        }
    }
    let values = motion
        .frames()
        .flat_map(|frame| {
            frame.iter().enumerate().map(|(d, &v)| {
                let (lo, hi) = (stats.min[d], stats.max[d]);
                if hi == lo {
                    0.0
                } else {
                    (-NORM_BOUND + 2.0 * NORM_BOUND * (v - lo) / (hi - lo)).clamp(-NORM_BOUND, NORM_BOUND)
                }
            })
        })
        .collect();
    MotionSequence::new(motion.dim(), values)
}

/// Inverse of [`normalize`] for in-range values.
pub fn denormalize(motion: &MotionSequence, stats: &NormStats) -> Result<MotionSequence> {
    if stats.min.len() != motion.dim() {
        return Err(Error::Shape("normalization stats do not match motion width".into()));
    }
    let values = motion
        .frames()
        .flat_map(|frame| {
            frame.iter().enumerate().map(|(d, &v)| {
                let (lo, hi) = (stats.min[d], stats.max[d]);
                lo + (v + NORM_BOUND) * (hi - lo) / (2.0 * NORM_BOUND)
            })
        })
        .collect();
    MotionSequence::new(motion.dim(), values)
}

/// Keeps frames `0, factor, 2*factor, ...`; output length is `ceil(T / factor)`.
pub fn downsample(motion: &MotionSequence, factor: usize) -> Result<MotionSequence> {
    if factor == 0 {
        return Err(Error::Input("downsample factor must be at least 1".into()));
    }
    let kept: Vec<f64> = motion.frames().step_by(factor).flatten().copied().collect();
    let out = MotionSequence::new(motion.dim(), kept)?;
    if out.len() < 2 {
        return Err(Error::Input(format!(
            "downsampling {} frames by {factor} leaves {} frame(s)",
            motion.len(),
            out.len()
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(*r >= 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {parts:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

/// Deterministic shuffle of `n` motion ids into partitions: train and
/// validation take `floor(n * ratio)`, test takes the remainder.
/// Returns the partition of each motion id.
pub fn split(n: usize, ratios: &SplitRatios, seed: u64) -> Result<Vec<Partition>> {
    ratios.validate()?;
    let n_train = (n as f64 * ratios.train).floor() as usize;
    let n_val = (n as f64 * ratios.validation).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Config(format!(
            "split of {n} motions leaves an empty partition ({n_train}/{n_val}/{})",
            n.saturating_sub(n_train + n_val)
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5b117));
    let mut parts = vec![Partition::Test; n];
    for (rank, &id) in order.iter().enumerate() {
        parts[id] = if rank < n_train {
            Partition::Train
        } else if rank < n_train + n_val {
            Partition::Validation
        } else {
            Partition::Test
        };
    }
    Ok(parts)
}
