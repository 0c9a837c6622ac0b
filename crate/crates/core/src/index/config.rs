use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::split::SplitParams;
use crate::summarization::{check_segments, MAX_BITS};

/// Every tunable of an index build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Series length.
    pub n: usize,
    /// Number of PAA segments.
    pub w: usize,
    /// Bits per SAX symbol.
    pub bits: u8,
    /// Leaf capacity in series.
    pub th: u64,
    pub fill_low: f64,
    pub fill_high: f64,
    pub alpha: f64,
    /// Demotion ratio for leaf packs.
    pub rho: f64,
    /// Small-node threshold multiplier for packing.
    pub small_node: f64,
    /// Fuzzy boundary fraction; `None` disables duplication.
    pub fuzzy: Option<f64>,
    pub max_duplications: u32,
    /// Series held in memory before a flush to leaf files.
    pub buffer_series: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Strategy {
    /// Adaptive multi-segment splits followed by leaf packing.
    #[default]
    Adaptive,
    /// Full root split, then one balanced segment per split, no packing.
    BinaryBaseline,
}

impl BuildConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            w: 16,
            bits: 8,
            th: 10_000,
            fill_low: 0.5,
            fill_high: 3.0,
            alpha: 0.2,
            rho: 0.5,
            small_node: 1.0,
            fuzzy: None,
            max_duplications: 3,
            buffer_series: 65_536,
            seed: 42,
            strategy: Strategy::Adaptive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_segments(self.n, self.w)?;
        if self.w > 64 {
            return Err(Error::Config(format!("at most 64 segments supported, got {}", self.w)));
        }
        if self.bits == 0 || self.bits > MAX_BITS {
            return Err(Error::Config(format!("bits must be in 1..={MAX_BITS}, got {}", self.bits)));
        }
        if self.th == 0 {
            return Err(Error::Config("threshold must be at least 1".into()));
        }
        if !(self.fill_low > 0.0 && self.fill_low < self.fill_high && self.fill_high.is_finite()) {
            return Err(Error::Config(format!(
                "fill band needs 0 < low < high, got [{}, {}]",
                self.fill_low, self.fill_high
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and non-negative, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must be in [0, 1], got {}", self.rho)));
        }
        if !(self.small_node > 0.0 && self.small_node.is_finite()) {
            return Err(Error::Config(format!("small-node multiplier must be positive, got {}", self.small_node)));
        }
        if let Some(f) = self.fuzzy {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("fuzzy fraction must be in (0, 1), got {f}")));
            }
        }
        if self.buffer_series == 0 {
            return Err(Error::Config("buffer must hold at least one series".into()));
        }
        Ok(())
    }

    pub fn split_params(&self) -> SplitParams {
        SplitParams {
            th: self.th,
            fill_low: self.fill_low,
            fill_high: self.fill_high,
            alpha: self.alpha,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        BuildConfig::new(256).validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = BuildConfig::new(256);
        let cases: Vec<Box<dyn Fn(&mut BuildConfig)>> = vec![
            Box::new(|c| c.w = 15),
            Box::new(|c| c.bits = 0),
            Box::new(|c| c.bits = 9),
            Box::new(|c| c.th = 0),
            Box::new(|c| c.fill_low = 3.0),
            Box::new(|c| c.fuzzy = Some(1.0)),
            Box::new(|c| c.fuzzy = Some(0.0)),
            Box::new(|c| c.rho = 1.5),
            Box::new(|c| c.buffer_series = 0),
        ];
        for mutate in cases {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
