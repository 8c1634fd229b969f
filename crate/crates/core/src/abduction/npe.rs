use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{summarize_pair, SummaryFeatures, INPUT_DIM};
use super::mlp::Mlp;
use super::{Abductor, NoisePosterior, TrainingTriplet};
use crate::envsim::{ActionConfig, ExogenousNoise, KpiSeries, MAX_UES, SHADOW_STD_DB};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const POSTERIOR_MODEL_VERSION: u32 = 1;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpeConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for NpeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128],
            epochs: 50,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            clip_norm: Some(10.0),
        }
    }
}

/// Diagonal Gaussian over the per-UE shadowing, conditioned on summary
/// features and the path loss implied by a placement draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorModel {
    pub version: u32,
    net: Mlp,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    /// Multiplies every predicted std; 0 collapses samples onto the mean.
    #[serde(default = "one")]
    pub std_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean per-sample NLL (nats, shadowing in dB) for each epoch.
    pub epoch_losses: Vec<f64>,
}

struct Batch {
    x: Array2<f64>,
    y: Array2<f64>,
    mask: Array2<f64>,
}

impl PosteriorModel {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![INPUT_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * MAX_UES);
        Self {
            version: POSTERIOR_MODEL_VERSION,
            net: Mlp::new(&sizes, rng),
            input_mean: vec![0.0; INPUT_DIM],
            input_std: vec![1.0; INPUT_DIM],
            std_scale: 1.0,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    fn fit_standardizer(&mut self, rows: &[Vec<f64>]) {
        let n = rows.len().max(1) as f64;
        for j in 0..INPUT_DIM {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            self.input_mean[j] = m;
            self.input_std[j] = if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 };
        }
    }

    fn batch(&self, data: &[&TrainingTriplet]) -> Result<Batch> {
        let b = data.len();
        let mut x = Array2::zeros((b, INPUT_DIM));
        let mut y = Array2::zeros((b, MAX_UES));
        let mut mask = Array2::zeros((b, MAX_UES));
        for (r, t) in data.iter().enumerate() {
            let n = t.action.num_ues as usize;
            let f = summarize_pair(&t.action, &t.kpis)?;
            let row = self.standardize(&f.network_input(n, t.noise.placement_seed));
            x.row_mut(r).assign(&ndarray::ArrayView1::from(&row));
            for ue in 0..n {
                y[[r, ue]] = t.noise.shadow_db[ue] / SHADOW_STD_DB;
                mask[[r, ue]] = 1.0;
            }
        }
        Ok(Batch { x, y, mask })
    }

    /// Mean NLL over the batch and `d loss / d output`.
    fn nll(&self, out: ArrayView2<f64>, y: ArrayView2<f64>, mask: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let b = out.nrows();
        let mut grad = Array2::zeros(out.dim());
        let mut loss = 0.0;
        for r in 0..b {
            for ue in 0..MAX_UES {
                if mask[[r, ue]] == 0.0 {
                    continue;
                }
                let mu = out[[r, ue]];
                let s = out[[r, MAX_UES + ue]];
                let inv = (-s).exp();
                let z = (y[[r, ue]] - mu) * inv;
                loss += s + SHADOW_STD_DB.ln() + HALF_LN_2PI + 0.5 * z * z;
                grad[[r, ue]] = -z * inv / b as f64;
                grad[[r, MAX_UES + ue]] = (1.0 - z * z) / b as f64;
            }
        }
        (loss / b as f64, grad)
    }

    /// Mean NLL over `data` and its gradient with respect to the network
    /// parameters (flattened as in [`Mlp::param`]).
    pub fn loss_and_gradient(&self, data: &[TrainingTriplet]) -> Result<(f64, Vec<f64>)> {
        let refs: Vec<&TrainingTriplet> = data.iter().collect();
        let batch = self.batch(&refs)?;
        let (out, cache) = self.net.forward_cached(batch.x.view());
        let (loss, g) = self.nll(out.view(), batch.y.view(), batch.mask.view());
        Ok((loss, Mlp::flatten_grads(&self.net.backward(&cache, g))))
    }

    pub fn loss(&self, data: &[TrainingTriplet]) -> Result<f64> {
        let refs: Vec<&TrainingTriplet> = data.iter().collect();
        let batch = self.batch(&refs)?;
        let out = self.net.forward(batch.x.view());
        Ok(self.nll(out.view(), batch.y.view(), batch.mask.view()).0)
    }

    /// Predicted shadowing mean and std (dB) for the first `num_ues` UEs.
    pub fn predict(&self, features: &SummaryFeatures, num_ues: usize, placement_seed: u64) -> (Vec<f64>, Vec<f64>) {
        let row = self.standardize(&features.network_input(num_ues, placement_seed));
        let x = Array2::from_shape_vec((1, INPUT_DIM), row).expect("input width");
        let out = self.net.forward(x.view());
        let mean = (0..num_ues).map(|ue| out[[0, ue]] * SHADOW_STD_DB).collect();
        let std = (0..num_ues)
            .map(|ue| out[[0, MAX_UES + ue]].exp() * SHADOW_STD_DB * self.std_scale)
            .collect();
        (mean, std)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != POSTERIOR_MODEL_VERSION {
            return Err(Error::Config(format!(
                "posterior model version {} (expected {POSTERIOR_MODEL_VERSION})",
                m.version
            )));
        }
        if m.net.input_dim() != INPUT_DIM || m.net.output_dim() != 2 * MAX_UES {
            return Err(Error::Config("posterior model has the wrong input/output width".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Minibatch SGD with momentum on the masked Gaussian NLL.
pub fn train_amortized_posterior<R: Rng + ?Sized>(
    data: &[TrainingTriplet],
    cfg: &NpeConfig,
    rng: &mut R,
) -> Result<(PosteriorModel, TrainingReport)> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invalid("batch size and epoch count must be positive"));
    }
    let mut model = PosteriorModel::new(&cfg.hidden, rng);
    let raw: Vec<Vec<f64>> = data
        .iter()
        .map(|t| {
            summarize_pair(&t.action, &t.kpis)
                .map(|f| f.network_input(t.action.num_ues as usize, t.noise.placement_seed))
        })
        .collect::<Result<_>>()?;
    model.fit_standardizer(&raw);

    let mut velocity: Vec<(Array2<f64>, ndarray::Array1<f64>)> = model
        .net
        .layers_mut()
        .map(|(w, b)| (Array2::zeros(w.dim()), ndarray::Array1::zeros(b.len())))
        .collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&TrainingTriplet> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = model.batch(&refs)?;
            let (out, cache) = model.net.forward_cached(batch.x.view());
            let (loss, g) = model.nll(out.view(), batch.y.view(), batch.mask.view());
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            let mut grads = model.net.backward(&cache, g);
            if let Some(max) = cfg.clip_norm {
                let norm = grads
                    .iter()
                    .map(|(w, b)| w.iter().chain(b.iter()).map(|v| v * v).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    let k = max / norm;
                    for (w, b) in &mut grads {
                        *w *= k;
                        *b *= k;
                    }
                }
            }
            for (((w, b), (vw, vb)), (gw, gb)) in model.net.layers_mut().zip(&mut velocity).zip(&grads) {
                vw.zip_mut_with(gw, |v, g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                vb.zip_mut_with(gb, |v, g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                *w += &*vw;
                *b += &*vb;
            }
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }
    Ok((model, TrainingReport { epoch_losses }))
}

struct NpePosterior<'a> {
    model: &'a PosteriorModel,
    features: SummaryFeatures,
    num_ues: usize,
}

impl NoisePosterior for NpePosterior<'_> {
    fn sample(&self, rng: &mut SimRng) -> Result<ExogenousNoise> {
        let placement_seed: u64 = rng.random();
        let (mean, std) = self.model.predict(&self.features, self.num_ues, placement_seed);
        let prior = Normal::new(0.0, SHADOW_STD_DB).expect("fixed positive std");
        let shadow_db = (0..MAX_UES)
            .map(|ue| {
                if ue < self.num_ues {
                    let e: f64 = StandardNormal.sample(rng);
                    mean[ue] + std[ue] * e
                } else {
                    prior.sample(rng)
                }
            })
            .collect();
        Ok(ExogenousNoise {
            placement_seed,
            shadow_db,
            fading_seed: rng.random(),
            traffic_seed: rng.random(),
        })
    }
}

impl Abductor for PosteriorModel {
    fn condition<'a>(
        &'a self,
        action: &ActionConfig,
        kpis: &KpiSeries,
        _: &mut SimRng,
    ) -> Result<Box<dyn NoisePosterior + 'a>> {
        Ok(Box::new(NpePosterior {
            model: self,
            features: summarize_pair(action, kpis)?,
            num_ues: action.num_ues as usize,
        }))
    }
}

/// One draw: placement and the discrete seeds from the prior, shadowing from
/// the learned Gaussian given that placement.
pub fn posterior_sample(
    model: &PosteriorModel,
    action: &ActionConfig,
    kpis: &KpiSeries,
    rng: &mut SimRng,
) -> Result<ExogenousNoise> {
    model.condition(action, kpis, rng)?.sample(rng)
}
