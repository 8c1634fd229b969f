use crate::error::{Error, Result};

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("series lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    if a.is_empty() {
        return Err(Error::invalid("MAE of empty series"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn is_constant(a: &[f64]) -> bool {
    a.iter().all(|&x| x == a[0])
}

/// Highest Pearson correlation over lags `-max_lag..=max_lag`, each computed
/// on the overlapping part. Lags whose overlap is shorter than two samples
/// or constant are skipped.
pub fn crosscorr_peak(a: &[f64], b: &[f64], max_lag: usize) -> Result<f64> {
    same_len(a, b)?;
    if a.len() < 2 {
        return Err(Error::invalid("cross-correlation needs at least two samples"));
    }
    if is_constant(a) || is_constant(b) {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    let n = a.len();
    let mut best: Option<f64> = None;
    for lag in -(max_lag.min(n - 2) as isize)..=(max_lag.min(n - 2) as isize) {
        let (xa, xb) = if lag >= 0 {
            let l = lag as usize;
            (&a[l..], &b[..n - l])
        } else {
            let l = (-lag) as usize;
            (&a[..n - l], &b[l..])
        };
        if let Some(r) = pearson(xa, xb) {
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best.ok_or_else(|| Error::UndefinedCorrelation("every lag overlap is constant".into()))
}

/// `|frac(a > threshold) - frac(b > threshold)|`.
pub fn crossing_level_error(a: &[f64], b: &[f64], threshold: f64) -> Result<f64> {
    same_len(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let frac = |s: &[f64]| s.iter().filter(|&&x| x > threshold).count() as f64 / s.len() as f64;
    Ok((frac(a) - frac(b)).abs())
}

/// `(k_stop - k_star) / k_star`; `None` when no admissible report appeared.
pub fn relative_excess_samples(k_stop: usize, k_star: Option<usize>) -> Result<Option<f64>> {
    let Some(k_star) = k_star else {
        return Ok(None);
    };
    if k_star == 0 || k_stop < k_star {
        return Err(Error::invalid(format!("need 1 <= k_star <= k_stop, got {k_star}, {k_stop}")));
    }
    Ok(Some((k_stop - k_star) as f64 / k_star as f64))
}
