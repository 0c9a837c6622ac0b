use crate::error::{Error, Result};
use crate::Real;

use super::bounds::QueryEnvelope;

#[inline]
pub fn squared_euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

pub fn euclidean<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(squared_euclidean(a, b).sqrt())
}

/// Sakoe-Chiba banded DTW with squared point cost, returned as the square
/// root of the optimal path cost. `window = 0` pins the diagonal.
pub fn dtw_distance<T: Real>(a: &[T], b: &[T], window: usize) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(dtw_bounded(a, b, window, T::infinity()).expect("unbounded DTW always completes"))
}

/// DTW that gives up once every warping path costs more than `cutoff`.
/// Returns `None` exactly when the distance is strictly greater than
/// `cutoff`.
pub fn dtw_bounded<T: Real>(a: &[T], b: &[T], window: usize, cutoff: T) -> Option<T> {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    let limit = cutoff * cutoff;
    let inf = T::infinity();
    let mut prev = vec![inf; n + 1];
    let mut cur = vec![inf; n + 1];
    prev[0] = T::zero();
    for i in 1..=n {
        let lo = i.saturating_sub(window).max(1);
        let hi = (i + window).min(n);
        cur.fill(inf);
        let mut row_min = inf;
        let x = a[i - 1];
        for j in lo..=hi {
            let d = x - b[j - 1];
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            let v = d * d + best;
            cur[j] = v;
            if v < row_min {
                row_min = v;
            }
        }
        if row_min > limit {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let total = prev[n];
    (total <= limit).then(|| total.sqrt())
}

/// Envelope lower bound of DTW for one candidate series.
pub fn lb_keogh<T: Real>(envelope: &QueryEnvelope<T>, candidate: &[T]) -> T {
    envelope
        .upper()
        .iter()
        .zip(envelope.lower())
        .zip(candidate)
        .fold(T::zero(), |acc, ((&u, &l), &c)| {
            let d = if c > u {
                c - u
            } else if c < l {
                l - c
            } else {
                T::zero()
            };
            acc + d * d
        })
        .sqrt()
}
