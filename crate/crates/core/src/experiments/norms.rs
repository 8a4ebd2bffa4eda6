use super::ExperimentError;

/// Rows used by [`fit_order`], counted from the largest `N`.
pub const FIT_ROWS: usize = 4;

/// Relative weighted two-norm and max-norm of `err` against `reference`.
pub fn discrete_norms(err: &[f64], reference: &[f64], w: &[f64]) -> Result<(f64, f64), ExperimentError> {
    if err.len() != reference.len() || err.len() != w.len() {
        return Err(ExperimentError::InvalidArgument(format!(
            "length mismatch: err {}, ref {}, weights {}",
            err.len(),
            reference.len(),
            w.len()
        )));
    }
    let wsq = |f: &[f64]| f.iter().zip(w).map(|(x, wi)| wi * x * x).sum::<f64>().sqrt();
    let max = |f: &[f64]| f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (rl2, rinf) = (wsq(reference), max(reference));
    if rl2 == 0.0 || rinf == 0.0 {
        return Err(ExperimentError::ZeroReference);
    }
    Ok((wsq(err) / rl2, max(err) / rinf))
}

/// Algebraic order `p` in `err ~ (sqrt N)^{-p}`, by least squares on the
/// last [`FIT_ROWS`] points in log-log space. `None` with fewer than two
/// usable points.
pub fn fit_order(counts: &[usize], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .zip(errors)
        .filter(|(_, e)| e.is_finite() && **e > 0.0)
        .map(|(&n, &e)| (0.5 * (n as f64).ln(), e.ln()))
        .collect();
    let pts = &pts[pts.len().saturating_sub(FIT_ROWS)..];
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m, b + y / m));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}
