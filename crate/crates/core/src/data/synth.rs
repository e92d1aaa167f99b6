//! Synthetic household generator, a stand-in for recorded appliance data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::{SeriesChannel, SAMPLE_PERIOD_S};
use crate::error::{Error, Result};

const MINUTE: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub duration_s: i64,
    pub start: i64,
    /// Standard deviation of Gaussian meter noise on the aggregate, watts.
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 14 * 86_400,
            start: 1_303_132_929,
            noise_sigma: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn days(days: f64) -> Self {
        Self {
            duration_s: (days * 86_400.0).round() as i64,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub fridge: SeriesChannel,
    pub lighting: SeriesChannel,
    pub dishwasher: SeriesChannel,
    pub aggregate: SeriesChannel,
}

impl Household {
    pub fn appliances(&self) -> [&SeriesChannel; 3] {
        [&self.fridge, &self.lighting, &self.dishwasher]
    }

    pub fn appliance(&self, name: &str) -> Option<&SeriesChannel> {
        self.appliances().into_iter().find(|c| c.name() == name)
    }
}

fn samples(minutes: f64) -> usize {
    ((minutes * MINUTE) / SAMPLE_PERIOD_S as f64).round().max(1.0) as usize
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Square-wave compressor cycle: about 15 min at ~160 W, 30 min off.
fn fridge(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut on = rng.gen_bool(1.0 / 3.0);
    let mut remaining = rng.gen_range(1..=samples(if on { 15.0 } else { 30.0 }));
    while out.len() < n {
        for _ in 0..remaining.min(n - out.len()) {
            out.push(if on { 160.0 + rng.gen_range(-10.0..=10.0) } else { 0.0 });
        }
        on = !on;
        let base = if on { 15.0 } else { 30.0 };
        remaining = samples(base * rng.gen_range(0.9..=1.1));
    }
    out
}

/// Piecewise-constant levels from {0, 40, 80, 120} W, dwell 10-120 min.
fn lighting(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const LEVELS: [f64; 4] = [0.0, 40.0, 80.0, 120.0];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let level = LEVELS[rng.gen_range(0..LEVELS.len())];
        let dwell = samples(rng.gen_range(10.0..=120.0));
        out.extend(std::iter::repeat_n(level, dwell.min(n - out.len())));
    }
    out
}

/// Rare three-phase cycles (200 W / 1200 W / 200 W for 10 / 20 / 10 min),
/// separated by exponential idle periods with a two-day mean.
fn dishwasher(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let idle = Exp::new(1.0 / (2.0 * 24.0 * 60.0)).expect("positive rate");
    let profile = [(200.0, samples(10.0)), (1200.0, samples(20.0)), (200.0, samples(10.0))];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let wait = samples(idle.sample(rng));
        out.extend(std::iter::repeat_n(0.0, wait.min(n - out.len())));
        for &(watts, len) in &profile {
            out.extend(std::iter::repeat_n(watts, len.min(n - out.len())));
        }
    }
    out
}

/// Deterministic per seed. The aggregate is the sum of the appliance
/// channels plus clamped Gaussian noise.
pub fn synth_household(seed: u64, config: &SynthConfig) -> Result<Household> {
    if config.duration_s < SAMPLE_PERIOD_S {
        return Err(Error::InvalidConfig(format!(
            "duration must cover at least one sample, got {} s",
            config.duration_s
        )));
    }
    if !(config.noise_sigma.is_finite() && config.noise_sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise_sigma must be nonnegative, got {}",
            config.noise_sigma
        )));
    }
    let n = (config.duration_s / SAMPLE_PERIOD_S) as usize;
    let f = fridge(n, &mut rng_for(seed, 1));
    let l = lighting(n, &mut rng_for(seed, 2));
    let d = dishwasher(n, &mut rng_for(seed, 3));

    let mut noise_rng = rng_for(seed, 4);
    let noise = Normal::new(0.0, config.noise_sigma).expect("finite sigma");
    let agg = (0..n)
        .map(|i| {
            let clean = f[i] + l[i] + d[i];
            if config.noise_sigma > 0.0 {
                (clean + noise.sample(&mut noise_rng)).max(0.0)
            } else {
                clean
            }
        })
        .collect();

    let mk = |name: &str, w: Vec<f64>| SeriesChannel::uniform(name, config.start, SAMPLE_PERIOD_S, w);
    Ok(Household {
        fridge: mk("fridge", f)?,
        lighting: mk("lighting", l)?,
        dishwasher: mk("dishwasher", d)?,
        aggregate: mk("aggregate", agg)?,
    })
}
