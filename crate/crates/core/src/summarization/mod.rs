//! PAA, SAX and iSAX summaries, plus the distance bounds built on them.

mod bounds;
mod breakpoints;
mod distance;
mod isax;

use std::ops::Deref;

pub use bounds::{leaf_upper_bound, lower_bound_dtw, lower_bound_ed, QueryEnvelope};
pub use breakpoints::{Breakpoints, MAX_BITS};
pub use distance::{dtw_bounded, dtw_distance, euclidean, lb_keogh, squared_euclidean};
pub use isax::{ISaxSymbol, ISaxWord};

use crate::error::{Error, Result};
use crate::Real;

#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable")
}

/// A fixed-length, real-valued data series.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries<T>(Vec<T>);

impl<T: Real> DataSeries<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for DataSeries<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Rescale to zero mean and unit (population) standard deviation.
/// Constant input maps to all zeros.
pub fn z_normalize<T: Real>(raw: &[T]) -> Result<DataSeries<T>> {
    if raw.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n = lit::<T>(raw.len() as f64);
    let mean = raw.iter().fold(T::zero(), |acc, &x| acc + x) / n;
    let var = raw
        .iter()
        .fold(T::zero(), |acc, &x| acc + (x - mean) * (x - mean))
        / n;
    let std = var.sqrt();
    let floor = T::epsilon() * (mean.abs() + T::one()) * lit(4.0);
    if !(std > floor) {
        return Ok(DataSeries(vec![T::zero(); raw.len()]));
    }
    Ok(DataSeries(raw.iter().map(|&x| (x - mean) / std).collect()))
}

/// Per-segment means of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct PaaVector<T>(Vec<T>);

impl<T: Real> PaaVector<T> {
    pub fn from_coefficients(coefficients: Vec<T>) -> Self {
        Self(coefficients)
    }

    pub fn coefficients(&self) -> &[T] {
        &self.0
    }
}

impl<T> Deref for PaaVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

pub fn check_segments(n: usize, w: usize) -> Result<()> {
    if w == 0 || w > n || n % w != 0 {
        return Err(Error::InvalidSegments { w, n });
    }
    Ok(())
}

pub fn compute_paa<T: Real>(series: &[T], w: usize) -> Result<PaaVector<T>> {
    check_segments(series.len(), w)?;
    let len = series.len() / w;
    let scale = lit::<T>(len as f64);
    Ok(PaaVector(
        series
            .chunks_exact(len)
            .map(|seg| seg.iter().fold(T::zero(), |acc, &x| acc + x) / scale)
            .collect(),
    ))
}

/// Full-cardinality symbolic word, one `b`-bit symbol per segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SaxWord(pub Vec<u8>);

impl Deref for SaxWord {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl AsRef<[u8]> for SaxWord {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

pub fn paa_to_sax<T: Real>(paa: &[T], bp: &Breakpoints) -> SaxWord {
    SaxWord(
        paa.iter()
            .map(|c| bp.symbol(c.to_f64().unwrap_or(f64::NAN)))
            .collect(),
    )
}

/// PAA followed by SAX in one step.
pub fn sax_of<T: Real>(series: &[T], w: usize, bp: &Breakpoints) -> Result<(PaaVector<T>, SaxWord)> {
    let paa = compute_paa(series, w)?;
    let sax = paa_to_sax(&paa, bp);
    Ok((paa, sax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn z_normalize_examples() {
        assert_eq!(z_normalize(&[1.0f64, 1.0, 1.0, 1.0]).unwrap().values(), &[0.0; 4]);
        assert_eq!(z_normalize(&[0.0f64, 2.0]).unwrap().values(), &[-1.0, 1.0]);
        assert!(matches!(z_normalize::<f64>(&[]), Err(Error::EmptySeries)));
    }

    #[test]
    fn z_normalize_random_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<f64> = (0..256).map(|_| rng.random_range(-50.0..50.0)).collect();
        let z = z_normalize(&raw).unwrap();
        // two-pass oracle
        let mean: f64 = z.iter().sum::<f64>() / 256.0;
        let var: f64 = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 256.0;
        assert!(mean.abs() < 1e-6);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn z_normalize_f32_constant() {
        let z = z_normalize(&[3.25f32; 17]).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn paa_examples() {
        let paa = compute_paa(&[2.0f64, 2.0, 4.0, 4.0], 2).unwrap();
        assert_eq!(paa.coefficients(), &[2.0, 4.0]);
        let zeros = compute_paa(&[0.0f64; 12], 4).unwrap();
        assert_eq!(zeros.coefficients(), &[0.0; 4]);
        assert!(matches!(
            compute_paa(&[1.0f64; 4], 5),
            Err(Error::InvalidSegments { w: 5, n: 4 })
        ));
        assert!(compute_paa(&[1.0f64; 10], 4).is_err());
    }

    #[test]
    fn paa_segment_means() {
        let s: Vec<f64> = (0..12).map(f64::from).collect();
        let paa = compute_paa(&s, 3).unwrap();
        assert_eq!(paa.coefficients(), &[1.5, 5.5, 9.5]);
    }

    #[test]
    fn figure_one_sax_word() {
        // PAA [0.28, -0.31, -0.49] at cardinality 8 -> [100, 011, 010]
        let bp = Breakpoints::standard(3).unwrap();
        let sax = paa_to_sax(&[0.28f64, -0.31, -0.49], bp);
        assert_eq!(sax.0, vec![0b100, 0b011, 0b010]);
        // n = w, so the series is its own PAA
        let (paa, sax2) = sax_of(&[0.28f64, -0.31, -0.49], 3, bp).unwrap();
        assert_eq!(paa.coefficients(), &[0.28, -0.31, -0.49]);
        assert_eq!(sax2, sax);
    }

    #[test]
    fn extreme_coefficient_maps_to_lowest_symbol() {
        let bp = Breakpoints::standard(8).unwrap();
        assert_eq!(paa_to_sax(&[-1e6f64], bp).0, vec![0]);
        assert_eq!(paa_to_sax(&[1e6f64], bp).0, vec![255]);
    }

    #[test]
    fn symbol_matches_linear_scan() {
        let bp = Breakpoints::standard(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(-4.0..4.0);
            // linear-scan oracle: first threshold strictly above x
            let expected = bp
                .thresholds()
                .iter()
                .position(|&t| x < t)
                .unwrap_or(bp.thresholds().len());
            assert_eq!(bp.symbol(x) as usize, expected);
        }
    }

    #[test]
    fn f32_and_f64_agree_on_symbols() {
        let bp = Breakpoints::standard(8).unwrap();
        let s64: Vec<f64> = (0..64).map(|i| ((i as f64) * 0.37).sin()).collect();
        let s32: Vec<f32> = s64.iter().map(|&x| x as f32).collect();
        let (_, a) = sax_of(&s64, 8, bp).unwrap();
        let (_, b) = sax_of(&s32, 8, bp).unwrap();
        assert_eq!(a, b);
    }
}
