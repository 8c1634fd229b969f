use serde::{Deserialize, Serialize};

use crate::envsim::{
    path_loss_db, ue_distance_m, ActionConfig, KpiSeries, Scheduler, DURATION_RANGE_S, LOAD_RANGE_MBPS,
    MAX_UES, NUM_UES_RANGE,
};
use crate::error::{Error, Result};

/// Per-UE statistics (4 per UE, zero-padded to [`MAX_UES`]) followed by a
/// 5-dimensional config encoding.
pub const FEATURE_DIM: usize = 4 * MAX_UES + 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFeatures {
    /// `[mean throughput, throughput std, mean delay, delay std]` per UE.
    pub per_ue: Vec<[f64; 4]>,
    /// Scheduler one-hot (RR, PF), then UE count, load and duration scaled to [0, 1].
    pub config: [f64; 5],
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn unit(x: f64, (lo, hi): (f64, f64)) -> f64 {
    (x - lo) / (hi - lo)
}

pub fn summarize_pair(action: &ActionConfig, kpis: &KpiSeries) -> Result<SummaryFeatures> {
    if kpis.num_ues() != action.num_ues as usize {
        return Err(Error::invalid(format!(
            "KPI series has {} UEs, action has {}",
            kpis.num_ues(),
            action.num_ues
        )));
    }
    if kpis.num_windows() != action.num_windows() {
        return Err(Error::invalid(format!(
            "KPI series has {} windows, a {} s action has {}",
            kpis.num_windows(),
            action.duration_s,
            action.num_windows()
        )));
    }
    let mut per_ue = vec![[0.0; 4]; MAX_UES];
    for (ue, slot) in per_ue.iter_mut().enumerate().take(kpis.num_ues()) {
        let (tm, ts) = mean_std(&kpis.throughput_mbps[ue]);
        let (dm, ds) = mean_std(&kpis.delay_ms[ue]);
        *slot = [tm, ts, dm, ds];
    }
    let config = [
        f64::from(action.scheduler == Scheduler::Rr),
        f64::from(action.scheduler == Scheduler::Pf),
        unit(
            f64::from(action.num_ues),
            (f64::from(NUM_UES_RANGE.0), f64::from(NUM_UES_RANGE.1)),
        ),
        unit(action.load_mbps, LOAD_RANGE_MBPS),
        unit(action.duration_s, DURATION_RANGE_S),
    ];
    Ok(SummaryFeatures { per_ue, config })
}

impl SummaryFeatures {
    pub fn as_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.per_ue.iter().flatten().copied().collect();
        v.extend_from_slice(&self.config);
        v
    }

    /// Raw network input: delays on a log scale, then the path loss implied
    /// by `placement_seed` for the active UEs.
    pub(crate) fn network_input(&self, num_ues: usize, placement_seed: u64) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM + MAX_UES);
        for s in &self.per_ue {
            v.extend_from_slice(&[s[0], s[1], s[2].ln_1p(), s[3].ln_1p()]);
        }
        v.extend_from_slice(&self.config);
        for ue in 0..MAX_UES {
            v.push(if ue < num_ues {
                (path_loss_db(ue_distance_m(placement_seed, ue)) - 100.0) / 20.0
            } else {
                0.0
            });
        }
        v
    }
}

pub(crate) const INPUT_DIM: usize = FEATURE_DIM + MAX_UES;

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_series(n_ue: usize, n_win: usize, thr: f64, dly: f64) -> KpiSeries {
        KpiSeries::new(vec![vec![thr; n_win]; n_ue], vec![vec![dly; n_win]; n_ue]).unwrap()
    }

    #[test]
    fn constant_series_and_padding() {
        let a = ActionConfig::new(Scheduler::Pf, 3, 2.0, 5.0).unwrap();
        let f = summarize_pair(&a, &constant_series(3, 25, 2.0, 1.0)).unwrap();
        assert_eq!(f.per_ue[0], [2.0, 0.0, 1.0, 0.0]);
        assert!(f.per_ue[3..].iter().all(|s| *s == [0.0; 4]));
        assert_eq!(f.config, [0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.as_vec().len(), FEATURE_DIM);
        assert_eq!(f.network_input(3, 1).len(), INPUT_DIM);
        assert_eq!(f, summarize_pair(&a, &constant_series(3, 25, 2.0, 1.0)).unwrap());
    }

    #[test]
    fn mismatched_lengths() {
        let a = ActionConfig::new(Scheduler::Pf, 3, 2.0, 5.0).unwrap();
        assert!(summarize_pair(&a, &constant_series(4, 25, 2.0, 1.0)).is_err());
        assert!(summarize_pair(&a, &constant_series(3, 24, 2.0, 1.0)).is_err());
    }
}
