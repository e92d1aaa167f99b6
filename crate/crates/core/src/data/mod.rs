//! Power series ingestion and preparation.

mod align;
mod channel;
mod rebalance;
mod synth;

pub use align::{align_to_grid, synthesize_aggregate, AlignOptions, AlignedSegment};
pub use channel::{
    load_channel, load_series_csv, parse_channel, parse_series_csv, series_csv_string, write_channel, write_series_csv,
};
pub use rebalance::{is_on, on_fraction, rebalance_keep_probability, rebalance_on_state};
pub use synth::{synth_household, Household, SynthConfig};

use crate::error::{Error, Result};

/// Sampling period of the low-frequency appliance channels, seconds.
pub const SAMPLE_PERIOD_S: i64 = 3;

/// Divisor applied to the aggregate signal before it enters the network.
pub const AGGREGATE_DIVISOR_W: f64 = 1000.0;

/// A timestamped power trace. Timestamps are unix seconds, strictly
/// increasing; watts are finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesChannel {
    name: String,
    timestamps: Vec<i64>,
    watts: Vec<f64>,
}

impl SeriesChannel {
    pub fn new(name: impl Into<String>, timestamps: Vec<i64>, watts: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if timestamps.len() != watts.len() {
            return Err(Error::Misaligned(format!(
                "{name}: {} timestamps but {} values",
                timestamps.len(),
                watts.len()
            )));
        }
        if timestamps.is_empty() {
            return Err(Error::EmptySeries(name));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonic {
                path: name,
                line: i + 2,
                prev: timestamps[i],
                next: timestamps[i + 1],
            });
        }
        if let Some(i) = watts.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parse {
                path: name,
                line: i + 1,
                msg: format!("watts must be finite and nonnegative, got {}", watts[i]),
            });
        }
        Ok(Self {
            name,
            timestamps,
            watts,
        })
    }

    /// A channel on a uniform grid starting at `start`.
    pub fn uniform(name: impl Into<String>, start: i64, period: i64, watts: Vec<f64>) -> Result<Self> {
        let ts = (0..watts.len() as i64).map(|k| start + k * period).collect();
        Self::new(name, ts, watts)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn watts(&self) -> &[f64] {
        &self.watts
    }

    pub fn len(&self) -> usize {
        self.watts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.watts.is_empty()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn mean(&self) -> f64 {
        self.watts.iter().sum::<f64>() / self.len() as f64
    }
}

/// Normalization constants and on-state threshold of one target appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceSpec {
    pub name: String,
    pub divisor: f64,
    pub on_threshold: f64,
}

impl ApplianceSpec {
    pub fn new(name: impl Into<String>, divisor: f64, on_threshold: f64) -> Result<Self> {
        let name = name.into();
        if !(divisor.is_finite() && divisor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{name}: divisor must be positive, got {divisor}"
            )));
        }
        if !(on_threshold.is_finite() && on_threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{name}: on_threshold must be nonnegative, got {on_threshold}"
            )));
        }
        Ok(Self {
            name,
            divisor,
            on_threshold,
        })
    }

    pub fn fridge() -> Self {
        Self::preset("fridge").unwrap()
    }

    pub fn lighting() -> Self {
        Self::preset("lighting").unwrap()
    }

    pub fn dishwasher() -> Self {
        Self::preset("dishwasher").unwrap()
    }

    /// Built-in divisors and thresholds for the three target appliances.
    pub fn preset(name: &str) -> Option<Self> {
        let (divisor, on_threshold) = match name {
            "fridge" => (500.0, 50.0),
            "lighting" => (200.0, 20.0),
            "dishwasher" => (1400.0, 10.0),
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            divisor,
            on_threshold,
        })
    }
}

pub fn normalize(series: &[f64], divisor: f64) -> Vec<f64> {
    series.iter().map(|v| v / divisor).collect()
}

pub fn denormalize(series: &[f64], divisor: f64) -> Vec<f64> {
    series.iter().map(|v| v * divisor).collect()
}
