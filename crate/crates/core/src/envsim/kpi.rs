use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WINDOW_S: f64 = 0.2;

/// Per-UE KPI series sampled every [`WINDOW_S`] seconds.
///
/// Series are indexed `[ue][window]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSeries {
    pub sample_period_s: f64,
    pub throughput_mbps: Vec<Vec<f64>>,
    pub delay_ms: Vec<Vec<f64>>,
    /// Bits delivered to all UEs in each window.
    pub delivered_bits: Vec<f64>,
}

/// Scalar digest of a run, the conditioning input of the report generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiSummary {
    pub mean_throughput_mbps: f64,
    pub mean_delay_ms: f64,
    /// Fraction of windows whose UE-averaged throughput exceeds the threshold.
    pub frac_throughput_above: f64,
    /// Fraction of windows whose UE-averaged delay exceeds the threshold.
    pub frac_delay_above: f64,
    /// Least-squares slope of the UE-averaged delay, relative to its mean, per second.
    pub delay_trend_per_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    window_index: usize,
    ue: usize,
    throughput_mbps: f64,
    delay_ms: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl KpiSeries {
    pub fn new(throughput_mbps: Vec<Vec<f64>>, delay_ms: Vec<Vec<f64>>) -> Result<Self> {
        let delivered_bits = window_bits(&throughput_mbps);
        let s = Self {
            sample_period_s: WINDOW_S,
            throughput_mbps,
            delay_ms,
            delivered_bits,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.throughput_mbps.len() != self.delay_ms.len() {
            return Err(Error::invalid("throughput and delay UE counts differ"));
        }
        let n = self.num_windows();
        for (t, d) in self.throughput_mbps.iter().zip(&self.delay_ms) {
            if t.len() != n || d.len() != n {
                return Err(Error::invalid("series lengths differ"));
            }
            if t.iter().chain(d).any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("KPI values must be finite and non-negative"));
            }
        }
        if self.delivered_bits.len() != n {
            return Err(Error::invalid("delivered-bit count length differs"));
        }
        Ok(())
    }

    pub fn num_ues(&self) -> usize {
        self.throughput_mbps.len()
    }

    pub fn num_windows(&self) -> usize {
        self.throughput_mbps.first().map_or(0, Vec::len)
    }

    /// UE-averaged throughput per window.
    pub fn mean_throughput_series(&self) -> Vec<f64> {
        ue_average(&self.throughput_mbps)
    }

    /// UE-averaged delay per window.
    pub fn mean_delay_series(&self) -> Vec<f64> {
        ue_average(&self.delay_ms)
    }

    pub fn summary(&self, throughput_threshold_mbps: f64, delay_threshold_ms: f64) -> KpiSummary {
        let thr = self.mean_throughput_series();
        let dly = self.mean_delay_series();
        let frac = |xs: &[f64], th: f64| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().filter(|&&x| x > th).count() as f64 / xs.len() as f64
            }
        };
        KpiSummary {
            mean_throughput_mbps: mean(&thr),
            mean_delay_ms: mean(&dly),
            frac_throughput_above: frac(&thr, throughput_threshold_mbps),
            frac_delay_above: frac(&dly, delay_threshold_ms),
            delay_trend_per_s: relative_slope(&dly, self.sample_period_s),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for k in 0..self.num_windows() {
            for ue in 0..self.num_ues() {
                wr.serialize(CsvRow {
                    window_index: k,
                    ue,
                    throughput_mbps: self.throughput_mbps[ue][k],
                    delay_ms: self.delay_ms[ue][k],
                })?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Inverse of [`KpiSeries::write_csv`]; delivered bits are reconstructed
    /// from throughput.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize::<CsvRow>() {
            rows.push(row?);
        }
        let num_ues = rows.iter().map(|r| r.ue + 1).max().unwrap_or(0);
        let num_windows = rows.iter().map(|r| r.window_index + 1).max().unwrap_or(0);
        if rows.len() != num_ues * num_windows {
            return Err(Error::parse("kpi csv", "missing or duplicate (window, ue) rows"));
        }
        let mut thr = vec![vec![f64::NAN; num_windows]; num_ues];
        let mut dly = vec![vec![f64::NAN; num_windows]; num_ues];
        for r in rows {
            thr[r.ue][r.window_index] = r.throughput_mbps;
            dly[r.ue][r.window_index] = r.delay_ms;
        }
        Self::new(thr, dly)
    }
}

fn window_bits(thr: &[Vec<f64>]) -> Vec<f64> {
    let n = thr.first().map_or(0, Vec::len);
    (0..n)
        .map(|k| thr.iter().map(|s| s[k]).sum::<f64>() * 1e6 * WINDOW_S)
        .collect()
}

fn ue_average(series: &[Vec<f64>]) -> Vec<f64> {
    let n = series.first().map_or(0, Vec::len);
    (0..n)
        .map(|k| series.iter().map(|s| s[k]).sum::<f64>() / series.len() as f64)
        .collect()
}

/// Least-squares slope of `ys` against time, divided by the mean of `ys`.
/// Zero when the mean is not positive or fewer than two samples exist.
pub(crate) fn relative_slope(ys: &[f64], dt: f64) -> f64 {
    let n = ys.len();
    let m = mean(ys);
    if n < 2 || m <= 0.0 {
        return 0.0;
    }
    let tm = (n - 1) as f64 * dt / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let t = i as f64 * dt - tm;
        sxy += t * (y - m);
        sxx += t * t;
    }
    sxy / sxx / m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let s = KpiSeries::new(
            vec![vec![1.0, 2.5], vec![0.0, 3.25]],
            vec![vec![4.0, 5.0], vec![6.5, 7.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("window_index,ue,throughput_mbps,delay_ms\n"));
        assert_eq!(KpiSeries::read_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn rejects_ragged_or_negative() {
        assert!(KpiSeries::new(vec![vec![1.0]], vec![vec![1.0, 2.0]]).is_err());
        assert!(KpiSeries::new(vec![vec![-1.0]], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn summary_fields() {
        // Delay rises 10 -> 20 ms over one second: slope 10 ms/s, mean 15 ms.
        let dly: Vec<f64> = (0..6).map(|k| 10.0 + 2.0 * k as f64).collect();
        let s = KpiSeries::new(vec![vec![6.0, 6.0, 4.0, 4.0, 4.0, 4.0]], vec![dly]).unwrap();
        let sum = s.summary(5.0, 15.0);
        assert!((sum.mean_throughput_mbps - 14.0 / 3.0).abs() < 1e-12);
        assert!((sum.mean_delay_ms - 15.0).abs() < 1e-12);
        assert!((sum.frac_throughput_above - 1.0 / 3.0).abs() < 1e-12);
        assert!((sum.frac_delay_above - 0.5).abs() < 1e-12);
        assert!((sum.delay_trend_per_s - 10.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn flat_or_empty_trend_is_zero() {
        assert_eq!(relative_slope(&[3.0; 5], 0.2), 0.0);
        assert_eq!(relative_slope(&[0.0; 5], 0.2), 0.0);
        assert_eq!(relative_slope(&[1.0], 0.2), 0.0);
    }
}
