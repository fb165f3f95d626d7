//! Small numeric helpers shared across modules. Summation order is fixed so
//! that repeated runs produce bit-identical results.

/// Neumaier-compensated sum over a fixed iteration order.
pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&xi, &yi) in x.iter().zip(y.iter()) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Observed decay order of a sequence under parameter halving.
///
/// `values[k]` is the magnitude at level k, where each level halves the step.
/// The order is the least-squares slope of log2(values) against the level,
/// fitted on the trailing half of the sequence (the asymptotic range), sign
/// flipped so that first-order decay reports 1.0. Returns `None` when the
/// trailing values sit at or below `floor` (decay already exact at resolution).
pub(crate) fn decay_order(values: &[f64], floor: f64) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let take = (n / 2).max(2).min(n);
    let tail = &values[n - take..];
    if tail.iter().all(|&v| v <= floor) {
        return None;
    }
    // A tail that dips to the floor mid-way has no measurable order either.
    if tail.iter().any(|&v| v <= floor) {
        return None;
    }
    let xs: Vec<f64> = (0..take).map(|i| i as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|&v| v.log2()).collect();
    Some(-ls_slope(&xs, &ys))
}
