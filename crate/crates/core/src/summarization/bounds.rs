use crate::error::{Error, Result};
use crate::Real;

use super::{compute_paa, lit, Breakpoints, ISaxWord, PaaVector};

/// Mindist between a query PAA and an iSAX region, in raw ED units.
pub fn lower_bound_ed<T: Real>(
    node: &ISaxWord,
    query_paa: &[T],
    n: usize,
    bp: &Breakpoints,
) -> Result<T> {
    let w = node.segments();
    if query_paa.len() != w {
        return Err(Error::LengthMismatch {
            expected: w,
            actual: query_paa.len(),
        });
    }
    let mut sum = 0.0f64;
    for (seg, q) in query_paa.iter().enumerate() {
        let q = q.to_f64().unwrap_or(f64::NAN);
        let (lo, hi) = node.region(seg, bp);
        let gap = if q < lo {
            lo - q
        } else if q > hi {
            q - hi
        } else {
            0.0
        };
        sum += gap * gap;
    }
    Ok(lit((n as f64 / w as f64 * sum).sqrt()))
}

/// Running min/max envelope of a query under a Sakoe-Chiba band, and the
/// PAA of both envelope curves.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEnvelope<T> {
    window: usize,
    upper: Vec<T>,
    lower: Vec<T>,
    upper_paa: PaaVector<T>,
    lower_paa: PaaVector<T>,
}

impl<T: Real> QueryEnvelope<T> {
    pub fn new(query: &[T], window: usize, w: usize) -> Result<Self> {
        let n = query.len();
        if n == 0 {
            return Err(Error::EmptySeries);
        }
        if window >= n {
            return Err(Error::WindowTooLarge { window, n });
        }
        let mut upper = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        for i in 0..n {
            let span = &query[i.saturating_sub(window)..(i + window + 1).min(n)];
            let (lo, hi) = span
                .iter()
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            upper.push(hi);
            lower.push(lo);
        }
        let upper_paa = compute_paa(&upper, w)?;
        let lower_paa = compute_paa(&lower, w)?;
        Ok(Self {
            window,
            upper,
            lower,
            upper_paa,
            lower_paa,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper_paa(&self) -> &PaaVector<T> {
        &self.upper_paa
    }

    pub fn lower_paa(&self) -> &PaaVector<T> {
        &self.lower_paa
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    /// DTW lower bound between this envelope and an iSAX region: per
    /// segment, the gap between the envelope PAA interval and the region.
    pub fn lower_bound(&self, node: &ISaxWord, bp: &Breakpoints) -> Result<T> {
        let w = node.segments();
        if self.upper_paa.len() != w {
            return Err(Error::LengthMismatch {
                expected: w,
                actual: self.upper_paa.len(),
            });
        }
        let mut sum = 0.0f64;
        for seg in 0..w {
            let u = self.upper_paa[seg].to_f64().unwrap_or(f64::NAN);
            let l = self.lower_paa[seg].to_f64().unwrap_or(f64::NAN);
            let (lo, hi) = node.region(seg, bp);
            let gap = if l > hi {
                l - hi
            } else if u < lo {
                lo - u
            } else {
                0.0
            };
            sum += gap * gap;
        }
        Ok(lit((self.len() as f64 / w as f64 * sum).sqrt()))
    }
}

pub fn lower_bound_dtw<T: Real>(
    node: &ISaxWord,
    query: &[T],
    window: usize,
    bp: &Breakpoints,
) -> Result<T> {
    QueryEnvelope::new(query, window, node.segments())?.lower_bound(node, bp)
}

/// Largest ED between two series lying pointwise inside the region, or
/// `None` when some segment's region is unbounded.
pub fn leaf_upper_bound<T: Real>(node: &ISaxWord, n: usize, bp: &Breakpoints) -> Option<T> {
    let w = node.segments();
    let mut sum = 0.0f64;
    for seg in 0..w {
        let (lo, hi) = node.region(seg, bp);
        if !lo.is_finite() || !hi.is_finite() {
            return None;
        }
        sum += (hi - lo) * (hi - lo);
    }
    Some(lit((n as f64 / w as f64 * sum).sqrt()))
}
