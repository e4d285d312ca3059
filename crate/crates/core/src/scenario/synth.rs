//! Synthetic minute-resolution day of residential load and rooftop solar.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::records::ScenarioRecord;
use crate::feeder::FeederTopology;

pub const MINUTES_PER_DAY: u32 = 1440;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Minute of the solar apex.
    pub solar_noon_min: f64,
    /// Sunrise-to-sunset span in minutes.
    pub daylight_min: f64,
    /// Clear-sky output at noon as a fraction of the inverter rating.
    pub clear_sky_peak: f64,
    /// Depth of cloud attenuation in `[0, 1]`; 0 gives clear sky.
    pub cloud_noise: f64,
    /// Correlation time of the cloud process in minutes.
    pub cloud_timescale_min: f64,
    /// Largest cloud arrival delay between buses, in minutes.
    pub cloud_spread_min: f64,
    /// Peak active load per bus (`bus - 1` indexing). Defaults to
    /// `load_to_rating × rating`.
    pub load_peaks: Option<Vec<f64>>,
    pub load_to_rating: f64,
    /// Relative amplitude of slow per-bus load fluctuations.
    pub load_jitter: f64,
    /// Relative amplitude of fast per-bus fluctuations (appliance switching).
    pub load_noise: f64,
    pub load_noise_timescale_min: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            solar_noon_min: 780.0,
            daylight_min: 720.0,
            clear_sky_peak: 0.8,
            cloud_noise: 0.5,
            cloud_timescale_min: 10.0,
            cloud_spread_min: 3.0,
            load_peaks: None,
            load_to_rating: 2.0 / 3.0,
            load_jitter: 0.05,
            load_noise: 0.3,
            load_noise_timescale_min: 3.0,
        }
    }
}

/// Truncated cosine: 1 at solar noon, 0 outside daylight.
pub fn clear_sky(minute: f64, opts: &SynthOptions) -> f64 {
    let phase = PI * (minute - opts.solar_noon_min) / opts.daylight_min;
    if phase.abs() >= PI / 2.0 {
        0.0
    } else {
        phase.cos()
    }
}

/// Morning and evening humps on a base load, peaking at 1 over the day.
fn load_shape(minute: f64) -> f64 {
    let h = minute / 60.0;
    let bump = |center: f64, width: f64| (-((h - center) / width).powi(2)).exp();
    0.35 + 0.3 * bump(7.5, 1.5) + 0.65 * bump(19.5, 2.2)
}

/// Smooth unit-variance noise: a stationary AR(1) process passed through a
/// second AR(1) smoother, renormalized.
fn smooth_noise(rng: &mut ChaCha8Rng, len: usize, timescale: f64) -> Vec<f64> {
    let a = (-1.0 / timescale.max(1e-3)).exp();
    let innov = (1.0 - a * a).sqrt();
    let mut raw = Vec::with_capacity(len);
    let mut s = gaussian(rng);
    for _ in 0..len {
        s = a * s + innov * gaussian(rng);
        raw.push(s);
    }
    let mut out = Vec::with_capacity(len);
    let mut f = raw.first().copied().unwrap_or(0.0);
    for v in raw {
        f = a * f + (1.0 - a) * v;
        out.push(f);
    }
    let mean = out.iter().sum::<f64>() / len.max(1) as f64;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len.max(1) as f64;
    let sd = var.sqrt().max(1e-12);
    out.iter().map(|v| (v - mean) / sd).collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// 1440 minute records for `topology`, deterministic in `seed`.
///
/// Solar at bus `n` is `rating_n · clear_sky_peak · clear_sky(t) · cloud_n(t)`,
/// where the cloud factor is a shared smooth process (arriving at each bus
/// with a small delay) mapped into `[1 − cloud_noise, 1]`. Loads follow a
/// double-hump residential shape with a per-bus time shift and slow
/// multiplicative fluctuations, scaled so each bus peaks at its load peak.
pub fn synthesize_day(topology: &FeederTopology, seed: u64, opts: &SynthOptions) -> Vec<ScenarioRecord> {
    let n = topology.num_buses();
    let len = MINUTES_PER_DAY as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let peaks: Vec<f64> = match &opts.load_peaks {
        Some(p) => p.clone(),
        None => topology.ratings().iter().map(|s| s * opts.load_to_rating).collect(),
    };

    let spread = opts.cloud_spread_min.max(0.0).ceil() as usize;
    let cloud_raw = smooth_noise(&mut rng, len + spread, opts.cloud_timescale_min);
    // attenuation in [0, 1]; clouds are present roughly half the time
    let attenuation: Vec<f64> = cloud_raw.iter().map(|v| (0.5 + 0.5 * v).clamp(0.0, 1.0)).collect();
    let delays: Vec<usize> = (0..n)
        .map(|_| if spread == 0 { 0 } else { rng.random_range(0..=spread) })
        .collect();

    let mut p_c = vec![vec![0.0; len]; n];
    for b in 0..n {
        let shift = rng.random_range(-45.0..45.0);
        let wiggle = smooth_noise(&mut rng, len, 60.0);
        let fast = smooth_noise(&mut rng, len, opts.load_noise_timescale_min);
        let series = &mut p_c[b];
        for (t, v) in series.iter_mut().enumerate() {
            let f = 1.0 + opts.load_jitter * wiggle[t] + opts.load_noise * fast[t];
            *v = load_shape(t as f64 - shift) * f.max(0.05);
        }
        let max = series.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            for v in series.iter_mut() {
                *v *= peaks.get(b).copied().unwrap_or(0.0) / max;
            }
        }
    }

    (0..len)
        .map(|t| {
            let sky = clear_sky(t as f64, opts);
            let mut rec = ScenarioRecord::zeros(t as u32, n);
            for b in 0..n {
                let cloud = 1.0 - opts.cloud_noise * attenuation[t + spread - delays[b]];
                rec.p_g[b] = (topology.ratings()[b] * opts.clear_sky_peak * sky * cloud).max(0.0);
                rec.p_c[b] = p_c[b][t];
            }
            rec
        })
        .collect()
}
