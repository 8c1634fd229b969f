use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};

use super::channel::{capped_rate_bits_per_tti, path_loss_db, ue_distance_m, CHANNEL};
use super::kpi::{KpiSeries, WINDOW_S};
use super::{ActionConfig, ExogenousNoise, FidelityLevel, Scheduler, MAX_UES};
use crate::error::{Error, Result};
use crate::rng::{derived, SimRng};

/// Mutable scheduler state carried from one TTI to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pub backlog_bits: Vec<f64>,
    /// Exponentially averaged served rate (bit/s), the PF denominator.
    pub ewma_bps: Vec<f64>,
    pub last_served: usize,
    pub tti: u64,
}

impl SchedulerState {
    pub fn new(num_ues: usize) -> Self {
        Self {
            backlog_bits: vec![0.0; num_ues],
            ewma_bps: vec![CHANNEL.pf_initial_bps; num_ues],
            // So that round-robin starts at UE 0.
            last_served: num_ues.saturating_sub(1),
            tti: 0,
        }
    }
}

/// Picks the UE that gets every resource block this TTI, or `None` when no
/// UE has backlog.
pub fn scheduler_select(state: &SchedulerState, inst_rates: &[f64], policy: Scheduler) -> Option<usize> {
    let n = state.backlog_bits.len();
    let backlogged = |i: usize| state.backlog_bits[i] > 0.0;
    match policy {
        Scheduler::Rr => (1..=n).map(|k| (state.last_served + k) % n).find(|&i| backlogged(i)),
        Scheduler::Pf => {
            let mut best: Option<(usize, f64)> = None;
            for i in (0..n).filter(|&i| backlogged(i)) {
                let metric = inst_rates[i] / state.ewma_bps[i];
                if best.is_none_or(|(_, m)| metric > m) {
                    best = Some((i, metric));
                }
            }
            best.map(|(i, _)| i)
        }
    }
}

/// Test hooks. The defaults reproduce the normal simulator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimHooks {
    /// Accept UE counts, loads and durations outside the action ranges.
    pub relax_ranges: bool,
    /// Replace every fading draw with its mean gain of 1.
    pub mean_fading: bool,
}

pub fn run_environment(config: &ActionConfig, noise: &ExogenousNoise, fidelity: FidelityLevel) -> Result<KpiSeries> {
    run_environment_with_hooks(config, noise, fidelity, SimHooks::default())
}

fn validate_relaxed(config: &ActionConfig) -> Result<()> {
    let ok = (1..=MAX_UES as u32).contains(&config.num_ues)
        && config.load_mbps.is_finite()
        && config.load_mbps > 0.0
        && config.duration_s.is_finite()
        && config.duration_s >= WINDOW_S;
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("config {config:?} outside even the relaxed ranges")))
    }
}

struct Packet {
    arrival_s: f64,
    remaining_bits: f64,
}

struct PacketSource {
    rng: SimRng,
    gap: Exp<f64>,
    next_arrival_s: f64,
}

impl PacketSource {
    fn new(traffic_seed: u64, ue: usize, rate_pps: f64) -> Self {
        let mut rng = derived(traffic_seed, "traffic", ue as u64);
        let gap = Exp::new(rate_pps).expect("positive packet rate");
        let next_arrival_s = gap.sample(&mut rng);
        Self {
            rng,
            gap,
            next_arrival_s,
        }
    }

    fn pop_before(&mut self, t: f64) -> Option<f64> {
        (self.next_arrival_s < t).then(|| {
            let a = self.next_arrival_s;
            self.next_arrival_s += self.gap.sample(&mut self.rng);
            a
        })
    }
}

pub fn run_environment_with_hooks(
    config: &ActionConfig,
    noise: &ExogenousNoise,
    fidelity: FidelityLevel,
    hooks: SimHooks,
) -> Result<KpiSeries> {
    if hooks.relax_ranges {
        validate_relaxed(config)?;
    } else {
        config.validate()?;
    }
    noise.validate()?;

    let c = &CHANNEL;
    let n = config.num_ues as usize;
    let num_windows = config.num_windows();
    let per_window = c.ttis_per_window();
    let load_bps = config.load_mbps * 1e6;

    let mean_snr: Vec<f64> = (0..n)
        .map(|i| {
            let mut rx = c.tx_power_dbm - path_loss_db(ue_distance_m(noise.placement_seed, i));
            if fidelity.shadowing() {
                rx -= noise.shadow_db[i];
            }
            10f64.powf((rx - c.noise_dbm()) / 10.0)
        })
        .collect();

    let fade = fidelity.fading() && !hooks.mean_fading;
    let mut fading_rngs: Vec<SimRng> = (0..n)
        .map(|i| derived(noise.fading_seed, "fading", i as u64))
        .collect();
    let mut gains = vec![1.0; n];

    let packets = fidelity.packet_queueing();
    let mut sources: Vec<PacketSource> = if packets {
        (0..n)
            .map(|i| PacketSource::new(noise.traffic_seed, i, load_bps / c.packet_bits))
            .collect()
    } else {
        Vec::new()
    };
    let mut queues: Vec<VecDeque<Packet>> = (0..n).map(|_| VecDeque::new()).collect();
    let fluid_bits_per_tti = load_bps * c.tti_s;

    let mut state = SchedulerState::new(n);
    let mut inst_rates = vec![0.0; n];
    let alpha = c.tti_s / c.pf_time_constant_s;

    let mut thr = vec![Vec::with_capacity(num_windows); n];
    let mut dly = vec![Vec::with_capacity(num_windows); n];
    let mut win_bits = vec![0.0; n];
    let mut win_backlog = vec![0.0; n];
    let mut win_delay_sum = vec![0.0; n];
    let mut win_departures = vec![0usize; n];
    let mut last_delay_ms = vec![0.0; n];

    for tti in 0..num_windows as u64 * per_window {
        state.tti = tti;
        let t0 = tti as f64 * c.tti_s;
        let t1 = t0 + c.tti_s;

        if fade && tti % c.fading_block_ttis == 0 {
            for (g, rng) in gains.iter_mut().zip(fading_rngs.iter_mut()) {
                *g = rng.sample::<f64, _>(Exp1);
            }
        }

        for i in 0..n {
            if packets {
                // Packets that arrived during earlier TTIs become schedulable now.
                while let Some(a) = sources[i].pop_before(t0) {
                    queues[i].push_back(Packet {
                        arrival_s: a,
                        remaining_bits: c.packet_bits,
                    });
                    state.backlog_bits[i] += c.packet_bits;
                }
            } else {
                state.backlog_bits[i] += fluid_bits_per_tti;
            }
            win_backlog[i] += state.backlog_bits[i];
            // Deliverable bits: a nearly empty queue cannot use a whole TTI.
            inst_rates[i] = capped_rate_bits_per_tti(mean_snr[i] * gains[i]).min(state.backlog_bits[i]);
        }

        let mut served = None;
        if let Some(u) = scheduler_select(&state, &inst_rates, config.scheduler) {
            let bits = inst_rates[u];
            if packets {
                let mut left = bits;
                while let Some(p) = queues[u].front_mut() {
                    if p.remaining_bits > left + 1e-9 {
                        p.remaining_bits -= left;
                        break;
                    }
                    left -= p.remaining_bits;
                    win_delay_sum[u] += t1 - p.arrival_s;
                    win_departures[u] += 1;
                    queues[u].pop_front();
                }
                state.backlog_bits[u] = queues[u].iter().map(|p| p.remaining_bits).sum();
            } else {
                state.backlog_bits[u] -= bits;
            }
            win_bits[u] += bits;
            state.last_served = u;
            served = Some((u, bits));
        }

        for i in 0..n {
            let r = match served {
                Some((u, bits)) if u == i => bits / c.tti_s,
                _ => 0.0,
            };
            state.ewma_bps[i] = (1.0 - alpha) * state.ewma_bps[i] + alpha * r;
        }

        if (tti + 1) % per_window == 0 {
            for i in 0..n {
                thr[i].push(win_bits[i] / WINDOW_S / 1e6);
                let d = if packets {
                    if win_departures[i] > 0 {
                        win_delay_sum[i] / win_departures[i] as f64 * 1e3
                    } else {
                        last_delay_ms[i]
                    }
                } else {
                    // Little's law on the mean pre-service backlog.
                    win_backlog[i] / per_window as f64 / load_bps * 1e3
                };
                dly[i].push(d);
                last_delay_ms[i] = d;
                win_bits[i] = 0.0;
                win_backlog[i] = 0.0;
                win_delay_sum[i] = 0.0;
                win_departures[i] = 0;
            }
        }
    }

    KpiSeries::new(thr, dly)
}
