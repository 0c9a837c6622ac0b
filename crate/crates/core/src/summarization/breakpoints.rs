use std::sync::OnceLock;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest supported bits per symbol. Symbols are stored as one byte.
pub const MAX_BITS: u8 = 8;

/// Standard-normal quantile thresholds splitting the real line into `2^b`
/// equiprobable regions, plus per-level region tables for every iSAX
/// prefix length `0..=b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoints {
    bits: u8,
    thresholds: Vec<f64>,
    beta: f64,
    // regions[len][prefix] = (lo, hi), infinite on the outer regions
    regions: Vec<Vec<(f64, f64)>>,
    // midpoints[len][prefix], outer regions clamped to +-beta
    midpoints: Vec<Vec<f64>>,
}

impl Breakpoints {
    pub fn new(bits: u8) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::Config(format!(
                "bits per symbol must be in [1, {MAX_BITS}], got {bits}"
            )));
        }
        let card = 1usize << bits;
        let normal = Normal::standard();
        let mut thresholds = vec![0.0; card - 1];
        // Mirror the lower half so the table is exactly symmetric about 0.
        for i in 0..(card / 2 - 1) {
            let q = normal.inverse_cdf((i + 1) as f64 / card as f64);
            thresholds[i] = q;
            thresholds[card - 2 - i] = -q;
        }
        thresholds[card / 2 - 1] = 0.0;

        let beta = pseudo_bound(&thresholds);

        let mut regions = Vec::with_capacity(bits as usize + 1);
        let mut midpoints = Vec::with_capacity(bits as usize + 1);
        for len in 0..=bits {
            let count = 1usize << len;
            let mut level = Vec::with_capacity(count);
            let mut mids = Vec::with_capacity(count);
            for prefix in 0..count {
                let shift = bits - len;
                let low_sym = prefix << shift;
                let high_sym = ((prefix + 1) << shift) - 1;
                let lo = if low_sym == 0 {
                    f64::NEG_INFINITY
                } else {
                    thresholds[low_sym - 1]
                };
                let hi = if high_sym == card - 1 {
                    f64::INFINITY
                } else {
                    thresholds[high_sym]
                };
                level.push((lo, hi));
                mids.push(0.5 * (lo.max(-beta) + hi.min(beta)));
            }
            regions.push(level);
            midpoints.push(mids);
        }

        Ok(Self {
            bits,
            thresholds,
            beta,
            regions,
            midpoints,
        })
    }

    /// Shared, lazily built table for `bits`.
    pub fn standard(bits: u8) -> Result<&'static Breakpoints> {
        static CACHE: OnceLock<Vec<Breakpoints>> = OnceLock::new();
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::Config(format!(
                "bits per symbol must be in [1, {MAX_BITS}], got {bits}"
            )));
        }
        let all = CACHE.get_or_init(|| {
            (1..=MAX_BITS)
                .map(|b| Breakpoints::new(b).expect("valid bit width"))
                .collect()
        });
        Ok(&all[bits as usize - 1])
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn cardinality(&self) -> usize {
        1 << self.bits
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Finite stand-in for the infinite outer boundaries: the outermost
    /// breakpoint plus the mean width of the finite regions.
    pub fn pseudo_bound(&self) -> f64 {
        self.beta
    }

    /// Full-cardinality symbol of `value`. A value equal to a breakpoint
    /// belongs to the upper region.
    #[inline]
    pub fn symbol(&self, value: f64) -> u8 {
        self.thresholds.partition_point(|&t| t <= value) as u8
    }

    /// Value range of an iSAX symbol with `len` bits, infinite at the edges.
    #[inline]
    pub fn region(&self, prefix: u8, len: u8) -> (f64, f64) {
        self.regions[len as usize][prefix as usize]
    }

    /// Like [`region`](Self::region) with the infinite edges replaced by
    /// `-beta` / `+beta`.
    #[inline]
    pub fn clamped_region(&self, prefix: u8, len: u8) -> (f64, f64) {
        let (lo, hi) = self.region(prefix, len);
        (lo.max(-self.beta), hi.min(self.beta))
    }

    #[inline]
    pub fn midpoint(&self, prefix: u8, len: u8) -> f64 {
        self.midpoints[len as usize][prefix as usize]
    }
}

fn pseudo_bound(thresholds: &[f64]) -> f64 {
    let outer = thresholds.last().copied().unwrap_or(0.0).abs();
    let finite_regions = thresholds.len().saturating_sub(1);
    let mean_width = if finite_regions == 0 {
        // b = 1 has no finite region; fall back to one standard deviation.
        1.0
    } else {
        (thresholds[thresholds.len() - 1] - thresholds[0]) / finite_regions as f64
    };
    outer + mean_width
}
