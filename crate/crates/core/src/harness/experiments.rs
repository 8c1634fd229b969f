use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AbductionMethod, ExperimentConfig};
use super::export::{EvalRecord, Method};
use super::metrics::{crosscorr_peak, crossing_level_error, mae, relative_excess_samples};
use crate::abduction::{
    generate_training_triplets, train_amortized_posterior, Abductor, FixedNoise, NpeConfig, PosteriorModel,
};
use crate::conformal::{
    calibrate_on, evaluate_grid, CandidateGenerator, CandidatePool, CgGenerator, GridTable, LambdaConfig, LambdaGrid,
};
use crate::envsim::{FidelityLevel, KpiSeries};
use crate::error::{Error, Result};
use crate::pipeline::{
    generate_dataset, read_dataset, read_hidden_noise, run_cg, run_ig, run_sig, CgSampler, Dataset, DatasetConfig,
    Rollout,
};
use crate::policy::PolicyTables;
use crate::rng::{derive_seed, derived};
use crate::textmetrics::AdmissionRule;

/// The first `k_max` CG candidates of one record with their admissibility,
/// plus the first candidate in full as the CG point estimate.
#[derive(Debug, Clone)]
pub struct RecordPool {
    pub pool: CandidatePool,
    pub point: Rollout,
}

/// Dataset, abductors and cached candidate pools shared by the experiments.
pub struct Workbench {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub tables: PolicyTables,
    pub dataset: Dataset,
    pub rule: AdmissionRule,
    npe: Mutex<HashMap<u8, Arc<PosteriorModel>>>,
    pools: Mutex<HashMap<u8, Arc<Vec<RecordPool>>>>,
}

impl Workbench {
    /// Loads the configured dataset or generates one from `seed`.
    pub fn new(config: ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let tables = PolicyTables::default();
        let dataset = match (&config.dataset.path, &config.dataset.hidden_path) {
            (Some(p), Some(h)) => Dataset {
                records: read_dataset(BufReader::new(File::open(p)?))?,
                hidden: read_hidden_noise(BufReader::new(File::open(h)?))?,
            },
            (None, None) => generate_dataset(
                config.dataset.records,
                &tables,
                &DatasetConfig::default(),
                &mut derived(seed, "dataset", 0),
            )?,
            _ => return Err(Error::Config("dataset.path and dataset.hidden_path go together".into())),
        };
        Self::with_dataset(config, seed, tables, dataset)
    }

    pub fn with_dataset(config: ExperimentConfig, seed: u64, tables: PolicyTables, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        if dataset.records.len() != config.dataset.records {
            return Err(Error::Config(format!(
                "dataset has {} records, config expects {}",
                dataset.records.len(),
                config.dataset.records
            )));
        }
        if dataset.hidden.len() != dataset.records.len() {
            return Err(Error::Config("hidden-noise file does not match the dataset".into()));
        }
        Ok(Self {
            config,
            seed,
            tables,
            dataset,
            rule: AdmissionRule::default(),
            npe: Mutex::new(HashMap::new()),
            pools: Mutex::new(HashMap::new()),
        })
    }

    fn npe_model(&self, twin: FidelityLevel) -> Result<Arc<PosteriorModel>> {
        if let Some(m) = self.npe.lock().expect("npe cache").get(&twin.level()) {
            return Ok(Arc::clone(m));
        }
        let a = &self.config.abduction;
        let model = match &a.npe_model {
            Some(p) => PosteriorModel::load(Path::new(p))?,
            None => {
                let data = generate_training_triplets(a.npe_triplets, twin, &mut derived(self.seed, "npe-data", twin.level().into()))?;
                let cfg = NpeConfig {
                    epochs: a.npe_epochs,
                    ..NpeConfig::default()
                };
                train_amortized_posterior(&data, &cfg, &mut derived(self.seed, "npe-train", twin.level().into()))?.0
            }
        };
        let model = Arc::new(model);
        self.npe.lock().expect("npe cache").insert(twin.level(), Arc::clone(&model));
        Ok(model)
    }

    /// The configured abductor for a twin fidelity.
    pub fn abductor(&self, twin: FidelityLevel) -> Result<Box<dyn Abductor>> {
        Ok(match self.config.abduction.method {
            AbductionMethod::Abc => Box::new(self.config.abduction.abc(twin)),
            AbductionMethod::Npe => Box::new(NpeHandle(self.npe_model(twin)?)),
        })
    }

    /// Candidate pools of every record for `twin`, built once and cached.
    pub fn pools(&self, twin: FidelityLevel) -> Result<Arc<Vec<RecordPool>>> {
        if let Some(p) = self.pools.lock().expect("pool cache").get(&twin.level()) {
            return Ok(Arc::clone(p));
        }
        let abductor = self.abductor(twin)?;
        let k_max = self.config.generation.k_max;
        let vocab = &self.tables.vocabulary;
        let pools: Vec<RecordPool> = self
            .dataset
            .records
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut rng = derived(self.seed, "cg-setup", i as u64);
                let sampler = CgSampler::new(&self.tables, &r.episode, &r.cf_prompt, abductor.as_ref(), twin, &mut rng)?;
                let generator = CgGenerator::new(&self.tables, sampler, derive_seed(self.seed, "cg-candidates", i as u64));
                let mut reports = Vec::with_capacity(k_max);
                let mut qualities = Vec::with_capacity(k_max);
                let mut admissible = Vec::with_capacity(k_max);
                let mut point = None;
                for k in 1..=k_max {
                    let c = generator.generate(k)?;
                    admissible.push(self.rule.admits(vocab, &c.rollout.report, &r.true_cf.report)?);
                    qualities.push(c.quality);
                    reports.push(c.rollout.report.clone());
                    if k == 1 {
                        point = Some(c.rollout);
                    }
                }
                Ok(RecordPool {
                    pool: CandidatePool::new(reports, qualities, admissible)?,
                    point: point.expect("k_max >= 1"),
                })
            })
            .collect::<Result<_>>()?;
        let pools = Arc::new(pools);
        self.pools.lock().expect("pool cache").insert(twin.level(), Arc::clone(&pools));
        Ok(pools)
    }

    fn n(&self) -> usize {
        self.dataset.records.len()
    }

    /// The fixed test split used by the point-estimate comparison.
    pub fn test_split(&self) -> std::ops::Range<usize> {
        self.n() - self.config.table1.test_records..self.n()
    }

    fn split(&self, label: &str, s: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut derived(self.seed, label, s as u64));
        idx
    }
}

struct NpeHandle(Arc<PosteriorModel>);

impl Abductor for NpeHandle {
    fn condition<'a>(
        &'a self,
        action: &crate::envsim::ActionConfig,
        kpis: &KpiSeries,
        rng: &mut crate::rng::SimRng,
    ) -> Result<Box<dyn crate::abduction::NoisePosterior + 'a>> {
        self.0.condition(action, kpis, rng)
    }
}

/// Point-estimate scores of one estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesScores {
    pub mae: f64,
    pub xcorr: Option<f64>,
    pub crossing: f64,
}

/// Scores UE-averaged series over their common windows.
pub fn score_series(est: &[f64], truth: &[f64], threshold: f64, max_lag: usize) -> Result<SeriesScores> {
    let n = est.len().min(truth.len());
    let (a, b) = (&est[..n], &truth[..n]);
    let xcorr = match crosscorr_peak(a, b, max_lag) {
        Ok(r) => Some(r),
        Err(Error::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SeriesScores {
        mae: mae(a, b)?,
        xcorr,
        crossing: crossing_level_error(a, b, threshold)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub method: Method,
    pub kpi: String,
    pub mae: f64,
    pub crosscorr_peak: f64,
    pub crossing_level_error: f64,
    pub records: usize,
    /// Records where every method's cross-correlation was defined.
    pub crosscorr_records: usize,
}

pub struct Table1Result {
    pub rows: Vec<Table1Row>,
    pub records: Vec<EvalRecord>,
}

impl Table1Result {
    pub fn row(&self, method: Method, kpi: &str) -> Option<&Table1Row> {
        self.rows.iter().find(|r| r.method == method && r.kpi == kpi)
    }
}

pub const KPIS: [&str; 2] = ["throughput", "delay"];

/// CG, IG and SIG point estimates against the true counterfactual.
pub fn table1(wb: &Workbench) -> Result<Table1Result> {
    let twin = wb.config.generation.twin;
    let pools = wb.pools(twin)?;
    let lag = wb.config.table1.max_lag;
    let t = &wb.tables;
    let per_record: Vec<[(EvalRecord, [SeriesScores; 2]); 3]> = wb
        .test_split()
        .into_par_iter()
        .map(|i| {
            let r = &wb.dataset.records[i];
            let ig = run_ig(t, &r.cf_prompt, &mut derived(wb.seed, "ig", i as u64))?;
            let sig = run_sig(t, &r.cf_prompt, twin, &mut derived(wb.seed, "sig", i as u64))?;
            let truth = &r.true_cf.kpis;
            let mut out = Vec::with_capacity(3);
            for (method, est) in [(Method::Cg, &pools[i].point), (Method::Ig, &ig), (Method::Sig, &sig)] {
                let thr = score_series(
                    &est.kpis.mean_throughput_series(),
                    &truth.mean_throughput_series(),
                    t.throughput_threshold_mbps,
                    lag,
                )?;
                let dly = score_series(&est.kpis.mean_delay_series(), &truth.mean_delay_series(), t.delay_threshold_ms, lag)?;
                let admissible = wb.rule.admits(&t.vocabulary, &est.report, &r.true_cf.report)?;
                let rec = EvalRecord {
                    mae_throughput: Some(thr.mae),
                    mae_delay: Some(dly.mae),
                    xcorr_throughput: thr.xcorr,
                    xcorr_delay: dly.xcorr,
                    cle_throughput: Some(thr.crossing),
                    cle_delay: Some(dly.crossing),
                    set_loss: Some(u8::from(!admissible)),
                    ..EvalRecord::new(&r.id, method)
                };
                out.push((rec, [thr, dly]));
            }
            Ok(out.try_into().expect("three methods"))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (kpi_idx, kpi) in KPIS.iter().enumerate() {
        let paired: Vec<_> = per_record
            .iter()
            .filter(|rec| rec.iter().all(|(_, s)| s[kpi_idx].xcorr.is_some()))
            .collect();
        for (m_idx, method) in [Method::Cg, Method::Ig, Method::Sig].into_iter().enumerate() {
            let mean = |f: &dyn Fn(&SeriesScores) -> f64, set: &[&[(EvalRecord, [SeriesScores; 2]); 3]]| {
                set.iter().map(|rec| f(&rec[m_idx].1[kpi_idx])).sum::<f64>() / set.len().max(1) as f64
            };
            let all: Vec<_> = per_record.iter().collect();
            rows.push(Table1Row {
                method,
                kpi: kpi.to_string(),
                mae: mean(&|s| s.mae, &all),
                crosscorr_peak: if paired.is_empty() {
                    f64::NAN
                } else {
                    mean(&|s| s.xcorr.expect("paired"), &paired)
                },
                crossing_level_error: mean(&|s| s.crossing, &all),
                records: all.len(),
                crosscorr_records: paired.len(),
            });
        }
    }
    let records = per_record.into_iter().flat_map(|r| r.into_iter().map(|(e, _)| e)).collect();
    Ok(Table1Result { rows, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub method: Method,
    pub epsilon: Option<f64>,
    /// Mean over non-abstaining splits.
    pub mean_set_loss: Option<f64>,
    pub mean_res: Option<f64>,
    pub mean_set_size: Option<f64>,
    pub k: Option<usize>,
    pub splits: usize,
    pub abstained: usize,
    /// Splits whose test loss exceeded epsilon, over all splits.
    pub violation_frequency: Option<f64>,
}

/// Test-half summary of one configuration.
#[derive(Debug, Clone, Copy)]
struct SplitStats {
    loss: f64,
    size: f64,
    res: Option<f64>,
}

fn stats_of<'a>(outcomes: impl Iterator<Item = &'a crate::conformal::PoolOutcome>) -> Result<SplitStats> {
    let (mut n, mut loss, mut size, mut res_sum, mut res_n) = (0usize, 0usize, 0usize, 0.0, 0usize);
    for o in outcomes {
        n += 1;
        loss += usize::from(o.loss());
        size += o.size();
        if let Some(r) = relative_excess_samples(o.k_stop, o.k_star)? {
            res_sum += r;
            res_n += 1;
        }
    }
    let n = n.max(1) as f64;
    Ok(SplitStats {
        loss: loss as f64 / n,
        size: size as f64 / n,
        res: (res_n > 0).then(|| res_sum / res_n as f64),
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Per-split outcome of calibrating on `cal` and testing on `test`.
struct CcgSplit {
    abstained: bool,
    test: Option<SplitStats>,
}

fn ccg_split(grid: &LambdaGrid, table: &GridTable, cal: &[usize], test: &[usize]) -> Result<CcgSplit> {
    let (outcome, _) = calibrate_on(grid, table, cal)?;
    let Some(c) = outcome.chosen else {
        return Ok(CcgSplit {
            abstained: true,
            test: None,
        });
    };
    Ok(CcgSplit {
        abstained: false,
        test: Some(stats_of(test.iter().map(|&r| &table.cells[c][r]))?),
    })
}

fn ccg_row(epsilon: f64, splits: &[CcgSplit]) -> Result<RiskRow> {
    let live: Vec<SplitStats> = splits.iter().filter_map(|s| s.test).collect();
    let violations = live.iter().filter(|s| s.loss > epsilon).count();
    Ok(RiskRow {
        method: Method::Ccg,
        epsilon: Some(epsilon),
        mean_set_loss: mean(live.iter().map(|s| s.loss)),
        mean_res: mean(live.iter().filter_map(|s| s.res)),
        mean_set_size: mean(live.iter().map(|s| s.size)),
        k: None,
        splits: splits.len(),
        abstained: splits.iter().filter(|s| s.abstained).count(),
        violation_frequency: (!splits.is_empty()).then(|| violations as f64 / splits.len() as f64),
    })
}

fn standard_grid(wb: &Workbench, epsilon: f64) -> Result<LambdaGrid> {
    let mut g = LambdaGrid::standard(epsilon, wb.config.riskcurves.delta)?;
    g.method = wb.config.riskcurves.fwer.clone();
    g.validate()?;
    Ok(g)
}

pub struct RiskCurvesResult {
    pub rows: Vec<RiskRow>,
    pub records: Vec<EvalRecord>,
}

impl RiskCurvesResult {
    pub fn ccg(&self) -> impl Iterator<Item = &RiskRow> {
        self.rows.iter().filter(|r| r.method == Method::Ccg)
    }

    pub fn kcg(&self) -> impl Iterator<Item = &RiskRow> {
        self.rows.iter().filter(|r| r.method == Method::KCg)
    }
}

/// Grid outcomes of every record for the twin's pools.
pub fn grid_table(wb: &Workbench, twin: FidelityLevel) -> Result<GridTable> {
    let pools = wb.pools(twin)?;
    let pools: Vec<CandidatePool> = pools.iter().map(|p| p.pool.clone()).collect();
    let grid = LambdaGrid::standard(0.5, wb.config.riskcurves.delta)?;
    evaluate_grid(&pools, &grid.configs, wb.config.generation.k_max)
}

/// CCG at each target risk and k-CG at each k over random
/// calibration / test splits.
pub fn riskcurves(wb: &Workbench) -> Result<RiskCurvesResult> {
    let rc = &wb.config.riskcurves;
    let twin = wb.config.generation.twin;
    let table = grid_table(wb, twin)?;
    let pools = wb.pools(twin)?;
    let n_cal = rc.calibration_records;
    let splits: Vec<Vec<usize>> = (0..rc.splits).map(|s| wb.split("riskcurves-split", s)).collect();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &eps in &rc.epsilons {
        let grid = standard_grid(wb, eps)?;
        let per_split: Vec<CcgSplit> = splits
            .par_iter()
            .map(|idx| ccg_split(&grid, &table, &idx[..n_cal], &idx[n_cal..]))
            .collect::<Result<_>>()?;
        rows.push(ccg_row(eps, &per_split)?);
        if let Some(first) = splits.first() {
            let (outcome, _) = calibrate_on(&grid, &table, &first[..n_cal])?;
            if let Some(c) = outcome.chosen {
                for &r in &first[n_cal..] {
                    records.push(outcome_record(wb, r, Method::Ccg, Some(eps), None, &table.cells[c][r])?);
                }
            }
        }
    }
    for &k in &rc.k_values {
        let all = LambdaConfig::accept_all();
        let per_split: Vec<SplitStats> = splits
            .iter()
            .map(|idx| {
                let outs = idx[n_cal..]
                    .iter()
                    .map(|&r| pools[r].pool.run(&all, k))
                    .collect::<Result<Vec<_>>>()?;
                stats_of(outs.iter())
            })
            .collect::<Result<_>>()?;
        rows.push(RiskRow {
            method: Method::KCg,
            epsilon: None,
            mean_set_loss: mean(per_split.iter().map(|s| s.loss)),
            mean_res: mean(per_split.iter().filter_map(|s| s.res)),
            mean_set_size: mean(per_split.iter().map(|s| s.size)),
            k: Some(k),
            splits: per_split.len(),
            abstained: 0,
            violation_frequency: None,
        });
        if let Some(first) = splits.first() {
            for &r in &first[n_cal..] {
                let o = pools[r].pool.run(&all, k)?;
                records.push(outcome_record(wb, r, Method::KCg, None, Some(k), &o)?);
            }
        }
    }
    Ok(RiskCurvesResult { rows, records })
}

fn outcome_record(
    wb: &Workbench,
    r: usize,
    method: Method,
    epsilon: Option<f64>,
    k: Option<usize>,
    o: &crate::conformal::PoolOutcome,
) -> Result<EvalRecord> {
    let res = relative_excess_samples(o.k_stop, o.k_star)?;
    Ok(EvalRecord {
        epsilon,
        k,
        set_loss: Some(o.loss()),
        set_size: Some(o.size()),
        k_stop: Some(o.k_stop),
        k_star: o.k_star,
        res,
        res_undefined: res.is_none(),
        ..EvalRecord::new(&wb.dataset.records[r].id, method)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibSizeRow {
    pub n_cal: usize,
    pub epsilon: f64,
    pub mean_set_loss: Option<f64>,
    pub mean_res: Option<f64>,
    pub mean_set_size: Option<f64>,
    pub splits: usize,
    pub abstained: usize,
}

/// CCG at a fixed target risk as the calibration set grows.
pub fn calibsize(wb: &Workbench) -> Result<Vec<CalibSizeRow>> {
    let cs = &wb.config.calibsize;
    let table = grid_table(wb, wb.config.generation.twin)?;
    let grid = standard_grid(wb, cs.epsilon)?;
    let n = wb.n();
    let splits: Vec<Vec<usize>> = (0..cs.splits).map(|s| wb.split("calibsize-split", s)).collect();
    cs.n_cal
        .iter()
        .map(|&m| {
            let per_split: Vec<CcgSplit> = splits
                .par_iter()
                .map(|idx| ccg_split(&grid, &table, &idx[..m], &idx[n - cs.test_records..]))
                .collect::<Result<_>>()?;
            let row = ccg_row(cs.epsilon, &per_split)?;
            Ok(CalibSizeRow {
                n_cal: m,
                epsilon: cs.epsilon,
                mean_set_loss: row.mean_set_loss,
                mean_res: row.mean_res,
                mean_set_size: row.mean_set_size,
                splits: row.splits,
                abstained: row.abstained,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimQualityRow {
    pub level: u8,
    pub mae_throughput: f64,
    pub mae_delay: f64,
    /// Win rate of CG admissibility over IG / SIG, ties counted half.
    pub cg_preferred_vs_ig: f64,
    pub cg_preferred_vs_sig: f64,
    pub epsilon: f64,
    pub mean_res: Option<f64>,
    pub mean_set_loss: Option<f64>,
    pub abstained: usize,
    pub splits: usize,
    /// Fraction of test records whose factual KPIs the real-fidelity twin
    /// reproduces exactly from the true noise (highest level only).
    pub oracle_exact: Option<f64>,
}

/// The twin-fidelity ablation.
pub fn simquality(wb: &Workbench) -> Result<Vec<SimQualityRow>> {
    let sq = &wb.config.simquality;
    let t = &wb.tables;
    let test: Vec<usize> = wb.test_split().collect();
    let n_cal = wb.config.riskcurves.calibration_records;
    let splits: Vec<Vec<usize>> = (0..sq.splits).map(|s| wb.split("simquality-split", s)).collect();
    let baselines: Vec<(bool, bool)> = test
        .par_iter()
        .map(|&i| {
            let r = &wb.dataset.records[i];
            let ig = run_ig(t, &r.cf_prompt, &mut derived(wb.seed, "ig", i as u64))?;
            let sig = run_sig(t, &r.cf_prompt, wb.config.generation.twin, &mut derived(wb.seed, "sig", i as u64))?;
            Ok((
                wb.rule.admits(&t.vocabulary, &ig.report, &r.true_cf.report)?,
                wb.rule.admits(&t.vocabulary, &sig.report, &r.true_cf.report)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &q in &sq.levels {
        let pools = wb.pools(q)?;
        let (mut thr, mut dly, mut vs_ig, mut vs_sig) = (0.0, 0.0, 0.0, 0.0);
        let win = |a: bool, b: bool| match (a, b) {
            (true, false) => 1.0,
            (false, true) => 0.0,
            _ => 0.5,
        };
        for (j, &i) in test.iter().enumerate() {
            let truth = &wb.dataset.records[i].true_cf.kpis;
            let est = &pools[i].point.kpis;
            let n = est.num_windows().min(truth.num_windows());
            thr += mae(&est.mean_throughput_series()[..n], &truth.mean_throughput_series()[..n])?;
            dly += mae(&est.mean_delay_series()[..n], &truth.mean_delay_series()[..n])?;
            let cg_ok = pools[i].pool.admissible[0];
            vs_ig += win(cg_ok, baselines[j].0);
            vs_sig += win(cg_ok, baselines[j].1);
        }
        let nt = test.len() as f64;
        let table = grid_table(wb, q)?;
        let grid = standard_grid(wb, sq.epsilon)?;
        let per_split: Vec<CcgSplit> = splits
            .par_iter()
            .map(|idx| ccg_split(&grid, &table, &idx[..n_cal], &idx[n_cal..]))
            .collect::<Result<_>>()?;
        let row = ccg_row(sq.epsilon, &per_split)?;
        let oracle_exact = if q == FidelityLevel::REAL {
            Some(oracle_exact_fraction(wb, &test)?)
        } else {
            None
        };
        rows.push(SimQualityRow {
            level: q.level(),
            mae_throughput: thr / nt,
            mae_delay: dly / nt,
            cg_preferred_vs_ig: vs_ig / nt,
            cg_preferred_vs_sig: vs_sig / nt,
            epsilon: sq.epsilon,
            mean_res: row.mean_res,
            mean_set_loss: row.mean_set_loss,
            abstained: row.abstained,
            splits: row.splits,
            oracle_exact,
        });
    }
    Ok(rows)
}

/// Identity edit, real-fidelity twin, true noise: fraction of records whose
/// factual KPIs come back bit-exactly.
pub fn oracle_exact_fraction(wb: &Workbench, records: &[usize]) -> Result<f64> {
    let hits = records
        .par_iter()
        .map(|&i| {
            let r = &wb.dataset.records[i];
            let oracle = FixedNoise(wb.dataset.hidden[i].reveal().clone());
            let mut rng = derived(wb.seed, "oracle", i as u64);
            let out = run_cg(&wb.tables, &r.episode, &r.episode.prompt, &oracle, FidelityLevel::REAL, &mut rng)?;
            Ok(usize::from(out.kpis == r.episode.kpis))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / records.len().max(1) as f64)
}
