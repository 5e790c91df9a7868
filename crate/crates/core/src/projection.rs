//! Euclidean projection onto `{X ≥ 0 : A(X) = b}`.
//!
//! Segments are disjoint, so the projection splits into one scaled-simplex
//! projection per measurement; uncovered entries only need `X ≥ 0`.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::measurement::ObservationVector;

/// Projects `y` onto `{x ≥ 0 : Σx = s}`.
///
/// Sort-and-scan threshold search: sort ascending, walk down from the largest
/// entries until the candidate threshold exceeds the next entry. `O(h log h)`.
pub fn project_simplex(y: &[f64], s: f64) -> Result<Vec<f64>> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Parameter(format!("simplex sum target must be finite and >= 0, got {s}")));
    }
    if y.is_empty() {
        return Err(Error::Input("cannot project an empty vector onto a simplex".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("simplex projection input is not finite".into()));
    }
    let h = y.len();
    if s == 0.0 {
        return Ok(vec![0.0; h]);
    }

    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let mut tail_sum = 0.0;
    let mut threshold = None;
    for i in (1..h).rev() {
        tail_sum += sorted[i];
        let t = (tail_sum - s) / (h - i) as f64;
        if t >= sorted[i - 1] {
            threshold = Some(t);
            break;
        }
    }
    let threshold = threshold.unwrap_or_else(|| (tail_sum + sorted[0] - s) / h as f64);

    let mut x: Vec<f64> = y.iter().map(|v| (v - threshold).max(0.0)).collect();
    polish_sum(&mut x, s);
    Ok(x)
}

/// Spreads the rounding residual `s − Σx` over the support.
fn polish_sum(x: &mut [f64], s: f64) {
    let support = x.iter().filter(|v| **v > 0.0).count();
    if support == 0 {
        return;
    }
    let residual = s - x.iter().sum::<f64>();
    let shift = residual / support as f64;
    for v in x.iter_mut().filter(|v| **v > 0.0) {
        *v = (*v + shift).max(0.0);
    }
}

/// Exact projection of `x` onto the data-constraint set of `b`.
///
/// Covered entries are replaced segment-wise by their simplex projection;
/// uncovered entries are clipped at zero.
pub fn project_data(x: ArrayView2<f64>, b: &ObservationVector) -> Result<Array2<f64>> {
    let scheme = b.scheme();
    scheme.check_shape(x.dim())?;
    let mut out = x.mapv(|v| v.max(0.0));
    let mut buf = Vec::new();
    for (d, (seg, &target)) in scheme.segments().iter().zip(b.values().iter()).enumerate() {
        buf.clear();
        buf.extend(seg.rows().map(|t| x[[t, seg.column]]));
        let projected = project_simplex(&buf, target)
            .map_err(|e| Error::Segment { segment: d + 1, source: Box::new(e) })?;
        for (t, v) in seg.rows().zip(projected) {
            out[[t, seg.column]] = v;
        }
    }
    Ok(out)
}
