use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_factual_episode, true_counterfactual, Episode, HiddenNoiseRecord, Rollout};
use super::prompt::{edit_prompt, render_prompt, EditSpec, PromptSpec};
use crate::envsim::Scheduler;
use crate::error::{Error, Result};
use crate::policy::{PolicyTables, PromptSlots};
use crate::rng::{derived, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    OneSlot,
    TwoSlots,
    PhrasingOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Probability that a factual prompt specifies each slot.
    pub slot_probability: f64,
    /// Weights of one-slot, two-slot and phrasing-only edits.
    pub edit_mix: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            slot_probability: 0.75,
            edit_mix: [0.4, 0.4, 0.2],
        }
    }
}

/// One evaluation record. The matching hidden noise lives in a separate
/// [`HiddenNoiseRecord`] with the same id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub edit_kind: EditKind,
    pub cf_prompt: PromptSpec,
    pub episode: Episode,
    pub true_cf: Rollout,
}

impl DatasetRecord {
    pub fn prompt(&self) -> &PromptSpec {
        &self.episode.prompt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub hidden: Vec<HiddenNoiseRecord>,
}

fn random_slots(rng: &mut SimRng, p: f64) -> PromptSlots {
    PromptSlots {
        scheduler: rng.random_bool(p).then(|| Scheduler::from_index(rng.random_range(0..2))),
        num_ues: rng.random_bool(p).then(|| rng.random_range(3..=10)),
        load_mbps: rng.random_bool(p).then(|| rng.random_range(2..=10)),
        duration_s: rng.random_bool(p).then(|| rng.random_range(5..=10)),
    }
}

/// New value for slot `which`, different from its current value.
fn change_slot(edit: &mut EditSpec, slots: &PromptSlots, which: usize, rng: &mut SimRng) {
    fn pick(rng: &mut SimRng, lo: u32, hi: u32, current: Option<u32>) -> u32 {
        loop {
            let v = rng.random_range(lo..=hi);
            if Some(v) != current {
                return v;
            }
        }
    }
    match which {
        0 => {
            edit.scheduler = Some(match slots.scheduler {
                Some(Scheduler::Rr) => Scheduler::Pf,
                Some(Scheduler::Pf) => Scheduler::Rr,
                None => Scheduler::from_index(rng.random_range(0..2)),
            })
        }
        1 => edit.num_ues = Some(pick(rng, 3, 10, slots.num_ues)),
        2 => edit.load_mbps = Some(pick(rng, 2, 10, slots.load_mbps)),
        _ => edit.duration_s = Some(pick(rng, 5, 10, slots.duration_s)),
    }
}

fn random_edit(x: &PromptSpec, cfg: &DatasetConfig, rng: &mut SimRng) -> Result<(EditKind, PromptSpec)> {
    let total: f64 = cfg.edit_mix.iter().sum();
    let u = rng.random::<f64>() * total;
    let kind = if u < cfg.edit_mix[0] {
        EditKind::OneSlot
    } else if u < cfg.edit_mix[0] + cfg.edit_mix[1] {
        EditKind::TwoSlots
    } else {
        EditKind::PhrasingOnly
    };
    let mut edit = EditSpec::default();
    match kind {
        EditKind::OneSlot | EditKind::TwoSlots => {
            let k = if kind == EditKind::OneSlot { 1 } else { 2 };
            for which in sample(rng, 4, k) {
                change_slot(&mut edit, &x.slots, which, rng);
            }
        }
        EditKind::PhrasingOnly => {
            for _ in 0..64 {
                let seed: u64 = rng.random();
                if render_prompt(&x.slots, seed)?.text != x.text {
                    edit.style_seed = Some(seed);
                    break;
                }
            }
            if edit.style_seed.is_none() {
                return Err(Error::InvalidState("no alternative phrasing found".into()));
            }
        }
    }
    Ok((kind, edit_prompt(x, &edit)?))
}

fn generate_record(
    tables: &PolicyTables,
    cfg: &DatasetConfig,
    base: u64,
    index: usize,
) -> Result<(DatasetRecord, HiddenNoiseRecord)> {
    let mut rng = derived(base, "record", index as u64);
    let id = format!("r{index:05}");
    let slots = random_slots(&mut rng, cfg.slot_probability);
    let x = render_prompt(&slots, rng.random())?;
    let (episode, hidden) = run_factual_episode(tables, &x, &id, &mut rng)?;
    let (edit_kind, cf_prompt) = random_edit(&x, cfg, &mut rng)?;
    let true_cf = true_counterfactual(tables, &episode, &hidden, &cf_prompt, &mut rng)?;
    Ok((
        DatasetRecord {
            id,
            edit_kind,
            cf_prompt,
            episode,
            true_cf,
        },
        hidden,
    ))
}

/// `n` records with random prompts, random edits, factual episodes and
/// true counterfactual rollouts.
pub fn generate_dataset(n: usize, tables: &PolicyTables, cfg: &DatasetConfig, rng: &mut SimRng) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be positive"));
    }
    let base: u64 = rng.random();
    let pairs: Vec<(DatasetRecord, HiddenNoiseRecord)> = (0..n)
        .into_par_iter()
        .map(|i| generate_record(tables, cfg, base, i))
        .collect::<Result<_>>()?;
    let (records, hidden) = pairs.into_iter().unzip();
    Ok(Dataset { records, hidden })
}

fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_dataset<W: Write>(records: &[DatasetRecord], w: W) -> Result<()> {
    write_jsonl(records, w)
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<DatasetRecord>> {
    read_jsonl(r)
}

pub fn write_hidden_noise<W: Write>(hidden: &[HiddenNoiseRecord], w: W) -> Result<()> {
    write_jsonl(hidden, w)
}

pub fn read_hidden_noise<R: BufRead>(r: R) -> Result<Vec<HiddenNoiseRecord>> {
    read_jsonl(r)
}
