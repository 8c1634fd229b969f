use rand::Rng;

use crate::rng::derived;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConstants {
    pub tx_power_dbm: f64,
    pub num_rbs: u32,
    pub rb_bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub max_spectral_efficiency: f64,
    pub tti_s: f64,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub fading_block_ttis: u64,
    pub packet_bits: f64,
    pub pf_time_constant_s: f64,
    pub pf_initial_bps: f64,
}

pub const CHANNEL: ChannelConstants = ChannelConstants {
    tx_power_dbm: 30.0,
    num_rbs: 50,
    rb_bandwidth_hz: 180e3,
    noise_psd_dbm_hz: -174.0,
    noise_figure_db: 7.0,
    max_spectral_efficiency: 7.4,
    tti_s: 1e-3,
    min_distance_m: 10.0,
    max_distance_m: 500.0,
    fading_block_ttis: 10,
    packet_bits: 1500.0 * 8.0,
    pf_time_constant_s: 0.1,
    pf_initial_bps: 1e3,
};

impl ChannelConstants {
    pub fn bandwidth_hz(&self) -> f64 {
        f64::from(self.num_rbs) * self.rb_bandwidth_hz
    }

    pub fn noise_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz().log10() + self.noise_figure_db
    }

    /// Bits a single UE can receive in one TTI at the spectral-efficiency cap.
    pub fn peak_bits_per_tti(&self) -> f64 {
        self.max_spectral_efficiency * self.bandwidth_hz() * self.tti_s
    }

    pub fn ttis_per_window(&self) -> u64 {
        (super::WINDOW_S / self.tti_s).round() as u64
    }
}

pub fn path_loss_db(distance_m: f64) -> f64 {
    128.1 + 37.6 * (distance_m / 1000.0).log10()
}

/// Distance of UE `ue` drawn uniformly over the annulus area. Each UE has its
/// own stream, so a UE's position does not depend on how many UEs are active.
pub fn ue_distance_m(placement_seed: u64, ue: usize) -> f64 {
    let c = &CHANNEL;
    let u: f64 = derived(placement_seed, "placement", ue as u64).random();
    let (r0, r1) = (c.min_distance_m, c.max_distance_m);
    (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt()
}

/// Capped Shannon rate over all resource blocks for a linear SNR.
pub fn capped_rate_bits_per_tti(snr_linear: f64) -> f64 {
    let c = &CHANNEL;
    let se = (1.0 + snr_linear.max(0.0)).log2().min(c.max_spectral_efficiency);
    se * c.bandwidth_hz() * c.tti_s
}
