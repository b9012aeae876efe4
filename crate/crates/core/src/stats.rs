//! Order statistics shared by the change and benchmark reports.
//!
//! Percentiles use linear interpolation between order statistics: for `n`
//! sorted values and fraction `p`, the position is `h = (n - 1) p` and the
//! result is `x[floor(h)] + (h - floor(h)) (x[floor(h) + 1] - x[floor(h)])`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN in percentile input".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Percentile `p` in `[0, 1]` by linear interpolation.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside [0, 1]")));
    }
    Ok(percentile_sorted(&sorted(values)?, p))
}

pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 0.5)
}

/// Median, interquartile range and maximum of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub iqr: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    let v = sorted(values)?;
    Ok(Summary {
        median: percentile_sorted(&v, 0.5),
        iqr: percentile_sorted(&v, 0.75) - percentile_sorted(&v, 0.25),
        max: v[v.len() - 1],
    })
}
