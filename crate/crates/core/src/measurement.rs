//! Temporal-aggregation measurements.
//!
//! A measurement is the sum of one column over a run of consecutive rows.
//! Segments never overlap and need not cover the whole matrix. Indices are
//! 0-based here; the CSV layer converts to 1-based.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::SeriesMatrix;

/// One aggregate: rows `start..start + length` of `column`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Segment {
    pub column: usize,
    pub start: usize,
    pub length: usize,
}

impl Segment {
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.length
    }
}

/// The measurement operator: a list of disjoint segments over a `T × N` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationScheme {
    periods: usize,
    series: usize,
    segments: Vec<Segment>,
    /// `by_column[n]` holds indices into `segments`, ordered by start row.
    by_column: Vec<Vec<usize>>,
}

impl AggregationScheme {
    /// Validates bounds and pairwise disjointness.
    pub fn new(periods: usize, series: usize, segments: Vec<Segment>) -> Result<Self> {
        if periods == 0 || series == 0 {
            return Err(Error::Parameter(format!(
                "scheme dimensions must be positive, got {periods}x{series}"
            )));
        }
        let mut by_column = vec![Vec::new(); series];
        for (d, seg) in segments.iter().enumerate() {
            if seg.length == 0 {
                return Err(Error::Input(format!("segment {} has zero length", d + 1)));
            }
            if seg.column >= series || seg.start + seg.length > periods {
                return Err(Error::Input(format!(
                    "segment {} (column {}, rows {}..{}) is outside the {}x{} grid",
                    d + 1,
                    seg.column + 1,
                    seg.start + 1,
                    seg.start + seg.length,
                    periods,
                    series
                )));
            }
            by_column[seg.column].push(d);
        }
        for (n, list) in by_column.iter_mut().enumerate() {
            list.sort_by_key(|&d| segments[d].start);
            for pair in list.windows(2) {
                let (a, b) = (segments[pair[0]], segments[pair[1]]);
                if a.start + a.length > b.start {
                    return Err(Error::Input(format!(
                        "segments {} and {} overlap in column {}",
                        pair[0] + 1,
                        pair[1] + 1,
                        n + 1
                    )));
                }
            }
        }
        Ok(Self { periods, series, segments, by_column })
    }

    /// Builds per-column segments from sorted 1-based observation periods.
    ///
    /// Segment `d` runs from just after observation `d - 1` (or the first row)
    /// up to and including observation `d`. Rows after the last observation
    /// stay uncovered.
    fn from_observation_periods(periods: usize, observations: &[Vec<usize>]) -> Result<Self> {
        let mut segments = Vec::new();
        for (column, obs) in observations.iter().enumerate() {
            let mut prev = 0usize;
            for &o in obs {
                segments.push(Segment { column, start: prev, length: o - prev });
                prev = o;
            }
        }
        Self::new(periods, observations.len(), segments)
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn series(&self) -> usize {
        self.series
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.periods, self.series)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Number of measurements `D`.
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segment ids of `column`, ordered by start row.
    pub fn column_segments(&self, column: usize) -> &[usize] {
        &self.by_column[column]
    }

    /// Covered-entry mask.
    pub fn coverage_mask(&self) -> Array2<bool> {
        let mut mask = Array2::from_elem((self.periods, self.series), false);
        for seg in &self.segments {
            for t in seg.rows() {
                mask[[t, seg.column]] = true;
            }
        }
        mask
    }

    /// Fraction of matrix entries that belong to some segment.
    pub fn coverage_fraction(&self) -> f64 {
        let covered: usize = self.segments.iter().map(|s| s.length).sum();
        covered as f64 / (self.periods * self.series) as f64
    }

    pub fn mean_segment_length(&self) -> f64 {
        if self.segments.is_empty() {
            return 0.0;
        }
        let covered: usize = self.segments.iter().map(|s| s.length).sum();
        covered as f64 / self.segments.len() as f64
    }

    /// Applies the operator: one sum per segment.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_shape(x.dim())?;
        Ok(self
            .segments
            .iter()
            .map(|seg| seg.rows().map(|t| x[[t, seg.column]]).sum())
            .collect())
    }

    /// Applies the operator and packages the result with the scheme.
    pub fn observe(&self, x: ArrayView2<f64>) -> Result<ObservationVector> {
        let values = self.apply(x)?;
        ObservationVector::new(self.clone(), values)
    }

    pub(crate) fn check_shape(&self, dim: (usize, usize)) -> Result<()> {
        if dim != self.shape() {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, scheme expects {}x{}",
                dim.0, dim.1, self.periods, self.series
            )));
        }
        Ok(())
    }
}

/// Periodic sampling: each column gets a uniform offset `o ∈ [1, p]` and
/// observation periods `o, o + p, o + 2p, … ≤ T` (1-based).
pub fn periodic_scheme<R: Rng + ?Sized>(
    periods: usize,
    series: usize,
    interval: usize,
    rng: &mut R,
) -> Result<AggregationScheme> {
    if interval < 1 || interval > periods {
        return Err(Error::Parameter(format!(
            "sampling interval must lie in [1, {periods}], got {interval}"
        )));
    }
    let observations: Vec<Vec<usize>> = (0..series)
        .map(|_| {
            let offset = rng.random_range(1..=interval);
            (offset..=periods).step_by(interval).collect()
        })
        .collect();
    AggregationScheme::from_observation_periods(periods, &observations)
}

/// Number of observation periods per column for a given rate: `T·rate`
/// rounded half-up, at least one, at most `T`.
pub fn observations_per_column(periods: usize, rate: f64) -> usize {
    let raw = (periods as f64 * rate + 0.5).floor() as usize;
    raw.clamp(1, periods)
}

/// Random sampling: per column, `round(T·rate)` observation periods drawn
/// uniformly without replacement.
pub fn random_scheme<R: Rng + ?Sized>(
    periods: usize,
    series: usize,
    rate: f64,
    rng: &mut R,
) -> Result<AggregationScheme> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Parameter(format!("sampling rate must lie in (0, 1], got {rate}")));
    }
    if periods == 0 {
        return Err(Error::Parameter("scheme needs at least one period".into()));
    }
    let count = observations_per_column(periods, rate);
    let observations: Vec<Vec<usize>> = (0..series)
        .map(|_| {
            let mut obs: Vec<usize> =
                index::sample(rng, periods, count).into_iter().map(|i| i + 1).collect();
            obs.sort_unstable();
            obs
        })
        .collect();
    AggregationScheme::from_observation_periods(periods, &observations)
}

/// Measured aggregates `b = A(V*)` together with the scheme that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    scheme: AggregationScheme,
    values: Array1<f64>,
}

impl ObservationVector {
    pub fn new(scheme: AggregationScheme, values: Array1<f64>) -> Result<Self> {
        if values.len() != scheme.len() {
            return Err(Error::Dimension(format!(
                "{} observations for a scheme with {} segments",
                values.len(),
                scheme.len()
            )));
        }
        if let Some(d) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("observation {} is not finite", d + 1)));
        }
        Ok(Self { scheme, values })
    }

    pub fn scheme(&self) -> &AggregationScheme {
        &self.scheme
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.scheme.shape()
    }

    /// Largest absolute deviation `max_d |A(x)_d − b_d|`.
    pub fn max_violation(&self, x: ArrayView2<f64>) -> Result<f64> {
        let ax = self.scheme.apply(x)?;
        Ok(ax
            .iter()
            .zip(self.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Spreads every aggregate evenly over its segment; uncovered entries are 0.
    pub fn interpolation_baseline(&self) -> SeriesMatrix {
        let mut out = Array2::zeros(self.scheme.shape());
        for (seg, &b) in self.scheme.segments.iter().zip(self.values.iter()) {
            let share = b / seg.length as f64;
            for t in seg.rows() {
                out[[t, seg.column]] = share;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seg(column: usize, start: usize, length: usize) -> Segment {
        Segment { column, start, length }
    }

    /// Scheme whose per-column offsets are forced, bypassing the RNG.
    fn periodic_with_offset(periods: usize, interval: usize, offset: usize) -> AggregationScheme {
        let obs = vec![(offset..=periods).step_by(interval).collect::<Vec<_>>()];
        AggregationScheme::from_observation_periods(periods, &obs).unwrap()
    }

    #[test]
    fn apply_sums_segment() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let scheme = AggregationScheme::new(4, 1, vec![seg(0, 1, 2)]).unwrap();
        assert_eq!(scheme.apply(x.view()).unwrap(), array![5.0]);
    }

    #[test]
    fn singleton_scheme_reads_entries() {
        let x = array![[1.5, -2.0], [0.25, 7.0]];
        let segs = vec![seg(1, 0, 1), seg(0, 1, 1), seg(0, 0, 1), seg(1, 1, 1)];
        let scheme = AggregationScheme::new(2, 2, segs).unwrap();
        assert_eq!(scheme.apply(x.view()).unwrap(), array![-2.0, 0.25, 1.5, 7.0]);
    }

    #[test]
    fn apply_rejects_wrong_shape() {
        let scheme = AggregationScheme::new(3, 2, vec![seg(0, 0, 3)]).unwrap();
        let err = scheme.apply(Array2::zeros((2, 2)).view()).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn overlapping_segments_rejected() {
        let err = AggregationScheme::new(5, 1, vec![seg(0, 0, 3), seg(0, 2, 2)]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(AggregationScheme::new(5, 1, vec![seg(0, 3, 3)]).is_err());
        assert!(AggregationScheme::new(5, 1, vec![seg(1, 0, 1)]).is_err());
        assert!(AggregationScheme::new(5, 1, vec![seg(0, 0, 0)]).is_err());
    }

    #[test]
    fn periodic_offset_two_covers_everything() {
        let s = periodic_with_offset(6, 2, 2);
        assert_eq!(s.segments(), &[seg(0, 0, 2), seg(0, 2, 2), seg(0, 4, 2)]);
        assert_eq!(s.coverage_fraction(), 1.0);
    }

    #[test]
    fn periodic_leaves_tail_uncovered() {
        let s = periodic_with_offset(6, 6, 3);
        assert_eq!(s.segments(), &[seg(0, 0, 3)]);
        let mask = s.coverage_mask();
        assert_eq!(mask.column(0).to_vec(), vec![true, true, true, false, false, false]);
    }

    #[test]
    fn unit_interval_and_unit_rate_are_full_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = periodic_scheme(7, 3, 1, &mut rng).unwrap();
        let r = random_scheme(7, 3, 1.0, &mut rng).unwrap();
        assert_eq!(p.len(), 21);
        assert!(p.segments().iter().all(|s| s.length == 1));
        assert_eq!(p.coverage_mask(), r.coverage_mask());
        assert!(r.segments().iter().all(|s| s.length == 1));
    }

    #[test]
    fn periodic_rejects_bad_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(periodic_scheme(5, 1, 0, &mut rng).is_err());
        assert!(periodic_scheme(5, 1, 6, &mut rng).is_err());
    }

    #[test]
    fn random_scheme_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_scheme(10, 4, 0.2, &mut rng).unwrap();
        for n in 0..4 {
            assert_eq!(s.column_segments(n).len(), 2);
        }
        assert!(random_scheme(10, 1, 0.0, &mut rng).is_err());
        assert!(random_scheme(10, 1, 1.5, &mut rng).is_err());
    }

    #[test]
    fn observation_counts_round_half_up() {
        assert_eq!(observations_per_column(150, 0.33), 50);
        assert_eq!(observations_per_column(10, 0.25), 3);
        assert_eq!(observations_per_column(10, 0.01), 1);
        assert_eq!(observations_per_column(200, 0.1), 20);
    }

    #[test]
    fn interpolation_splits_evenly() {
        let scheme = AggregationScheme::new(3, 1, vec![seg(0, 0, 2)]).unwrap();
        let b = ObservationVector::new(scheme, array![5.0]).unwrap();
        assert_eq!(b.interpolation_baseline(), array![[2.5], [2.5], [0.0]]);
    }

    #[test]
    fn interpolation_reproduces_singletons() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let scheme = AggregationScheme::new(2, 2, vec![seg(0, 0, 1), seg(1, 1, 1)]).unwrap();
        let b = scheme.observe(x.view()).unwrap();
        let base = b.interpolation_baseline();
        assert_eq!(base[[0, 0]], 1.0);
        assert_eq!(base[[1, 1]], 4.0);
    }

    #[test]
    fn observation_vector_checks_length() {
        let scheme = AggregationScheme::new(3, 1, vec![seg(0, 0, 2)]).unwrap();
        assert!(ObservationVector::new(scheme.clone(), array![1.0, 2.0]).is_err());
        assert!(ObservationVector::new(scheme, array![f64::NAN]).is_err());
    }
}
