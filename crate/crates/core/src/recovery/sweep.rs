use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{normalized_error, recover, recover_penalized_with, PenaltyProjectors, RecoveryOptions};
use crate::error::{Error, Result};
use crate::measurement::ObservationVector;

#[derive(Debug, Clone, PartialEq)]
pub struct RankSweepRow {
    pub rank: usize,
    /// One error per repeat.
    pub errors: Vec<f64>,
    pub mean_error: f64,
}

/// Errors per rank and the oracle-best rank (smallest mean error, smallest
/// rank on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct RankSweep {
    pub rows: Vec<RankSweepRow>,
    pub best: usize,
}

impl RankSweep {
    pub fn best_row(&self) -> &RankSweepRow {
        &self.rows[self.best]
    }
}

/// Runs one recovery per `(rank, repeat)` and scores each against `truth`.
///
/// `problems[r]` holds the observations of repeat `r`, so repeats may use
/// freshly drawn sampling schemes. Repeat `r` at rank `K` is seeded with
/// `derive_seed(opts.seed, [K, r])`. The penalized driver is used when
/// `opts.penalty` is set.
pub fn rank_sweep(
    problems: &[ObservationVector],
    ranks: &[usize],
    opts: &RecoveryOptions,
    truth: ArrayView2<f64>,
) -> Result<RankSweep> {
    if problems.is_empty() || ranks.is_empty() {
        return Err(Error::Parameter("rank sweep needs at least one rank and one repeat".into()));
    }
    let projectors = match &opts.penalty {
        Some(penalty) => Some(
            problems
                .iter()
                .map(|b| PenaltyProjectors::build(b, penalty, opts.projector_storage))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let cells: Vec<(usize, usize)> = ranks
        .iter()
        .flat_map(|&k| (0..problems.len()).map(move |r| (k, r)))
        .collect();
    let errors = cells
        .par_iter()
        .map(|&(rank, repeat)| {
            let cell_opts = RecoveryOptions {
                rank,
                seed: crate::derive_seed(opts.seed, &[rank as u64, repeat as u64]),
                ..opts.clone()
            };
            let b = &problems[repeat];
            let report = match &projectors {
                Some(p) => recover_penalized_with(b, &cell_opts, &p[repeat])?,
                None => recover(b, &cell_opts)?,
            };
            normalized_error(report.v.view(), truth)
        })
        .collect::<Result<Vec<f64>>>()?;

    let repeats = problems.len();
    let rows: Vec<RankSweepRow> = ranks
        .iter()
        .zip(errors.chunks(repeats))
        .map(|(&rank, errs)| RankSweepRow {
            rank,
            errors: errs.to_vec(),
            mean_error: errs.iter().sum::<f64>() / errs.len() as f64,
        })
        .collect();
    let best = best_index(&rows);
    Ok(RankSweep { rows, best })
}

fn best_index(rows: &[RankSweepRow]) -> usize {
    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        let current = &rows[best];
        if row.mean_error < current.mean_error
            || (row.mean_error == current.mean_error && row.rank < current.rank)
        {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rank: usize, mean_error: f64) -> RankSweepRow {
        RankSweepRow { rank, errors: vec![mean_error], mean_error }
    }

    #[test]
    fn ties_go_to_smaller_rank() {
        let rows = vec![row(5, 0.2), row(3, 0.1), row(2, 0.1), row(4, 0.3)];
        assert_eq!(best_index(&rows), 2);
    }
}
