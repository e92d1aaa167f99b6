//! Centered sliding windows and overlap-averaged reconstruction.
//!
//! Output window `[pos, pos + l_out)` sits in the middle of input window
//! `[pos - pad, pos + l_out + pad)` with `pad = (l_in - l_out) / 2`. The
//! aggregate is edge-replicated by `pad` samples on each side so that the
//! first and last samples still get predictions.

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGeometry {
    l_in: usize,
    l_out: usize,
    step: usize,
}

impl WindowGeometry {
    pub fn new(l_in: usize, l_out: usize, step: usize) -> Result<Self> {
        if l_out == 0 || l_in < l_out || !(l_in - l_out).is_multiple_of(2) {
            return Err(Error::InvalidWindow(format!(
                "need l_in >= l_out > 0 with an even difference, got l_in={l_in} l_out={l_out}"
            )));
        }
        if step == 0 || !l_out.is_multiple_of(step) {
            return Err(Error::InvalidWindow(format!(
                "step {step} must be positive and divide l_out {l_out}"
            )));
        }
        Ok(Self { l_in, l_out, step })
    }

    pub fn for_network(net: &Network, step: usize) -> Result<Self> {
        Self::new(net.config().l_in, net.config().l_out, step)
    }

    pub fn l_in(&self) -> usize {
        self.l_in
    }

    pub fn l_out(&self) -> usize {
        self.l_out
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn pad(&self) -> usize {
        (self.l_in - self.l_out) / 2
    }

    /// `0, step, 2·step, …` while the output window fits in `m` samples.
    pub fn positions(&self, m: usize) -> Result<impl Iterator<Item = usize>> {
        if m < self.l_out {
            return Err(Error::SeriesTooShort {
                len: m,
                l_out: self.l_out,
            });
        }
        Ok((0..=m - self.l_out).step_by(self.step))
    }

    /// Like [`WindowGeometry::positions`], plus one window flush with the end
    /// of the series when the stride leaves a tail uncovered.
    pub fn covering_positions(&self, m: usize) -> Result<Vec<usize>> {
        let mut pos: Vec<usize> = self.positions(m)?.collect();
        let last = m - self.l_out;
        if pos.last() != Some(&last) {
            pos.push(last);
        }
        Ok(pos)
    }
}

pub fn pad_series(series: &[f64], pad: usize) -> Vec<f64> {
    let (Some(&first), Some(&last)) = (series.first(), series.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(series.len() + 2 * pad);
    out.extend(std::iter::repeat_n(first, pad));
    out.extend_from_slice(series);
    out.extend(std::iter::repeat_n(last, pad));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    /// Normalized aggregate, length `l_in`.
    pub x: Tensor,
    /// Normalized appliance target, length `l_out`; absent at inference.
    pub y: Option<Tensor>,
    /// Index of the first sample of the output window in the unpadded series.
    pub pos: usize,
}

impl WindowPair {
    pub fn target(&self) -> Result<&Tensor> {
        self.y.as_ref().ok_or(Error::MissingTarget(self.pos))
    }
}

pub fn make_windows(aggregate: &[f64], target: Option<&[f64]>, geom: &WindowGeometry) -> Result<Vec<WindowPair>> {
    if let Some(t) = target {
        if t.len() != aggregate.len() {
            return Err(Error::shape("make_windows", &[aggregate.len()], &[t.len()]));
        }
    }
    let positions = geom.positions(aggregate.len())?;
    let padded = pad_series(aggregate, geom.pad());
    Ok(positions
        .map(|pos| WindowPair {
            x: Tensor::from_vec(padded[pos..pos + geom.l_in].to_vec()),
            y: target.map(|t| Tensor::from_vec(t[pos..pos + geom.l_out].to_vec())),
            pos,
        })
        .collect())
}

/// Running per-sample means and counts of overlapping window predictions.
/// Means are updated incrementally, so identical contributions average to
/// themselves exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapAccumulator {
    means: Vec<f64>,
    counts: Vec<u32>,
}

impl OverlapAccumulator {
    pub fn new(m: usize) -> Self {
        Self {
            means: vec![0.0; m],
            counts: vec![0; m],
        }
    }

    pub fn add(&mut self, pos: usize, prediction: &[f64]) -> Result<()> {
        let end = pos + prediction.len();
        if end > self.means.len() {
            return Err(Error::InvalidWindow(format!(
                "window [{pos}, {end}) exceeds series length {}",
                self.means.len()
            )));
        }
        for ((mean, c), p) in self.means[pos..end]
            .iter_mut()
            .zip(&mut self.counts[pos..end])
            .zip(prediction)
        {
            *c += 1;
            *mean += (p - *mean) / *c as f64;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &OverlapAccumulator) -> Result<()> {
        if other.means.len() != self.means.len() {
            return Err(Error::shape("merge", &[self.means.len()], &[other.means.len()]));
        }
        for ((a, na), (b, &nb)) in self
            .means
            .iter_mut()
            .zip(&mut self.counts)
            .zip(other.means.iter().zip(&other.counts))
        {
            if nb == 0 {
                continue;
            }
            *na += nb;
            *a += (b - *a) * (nb as f64 / *na as f64);
        }
        Ok(())
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn finish(self) -> Result<Vec<f64>> {
        if let Some(index) = self.counts.iter().position(|&c| c == 0) {
            return Err(Error::CoverageGap { index });
        }
        Ok(self.means)
    }
}

pub fn overlap_average(predictions: &[(usize, Tensor)], m: usize) -> Result<Vec<f64>> {
    let mut acc = OverlapAccumulator::new(m);
    for (pos, p) in predictions {
        acc.add(*pos, p.data())?;
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub aggregate_divisor: f64,
    pub appliance_divisor: f64,
}

/// Full reconstruction of one appliance trace, in watts, from an aggregate
/// in watts. Negative predictions are clamped to zero.
pub fn disaggregate(net: &Network, aggregate: &[f64], scaling: Scaling, step: usize) -> Result<Vec<f64>> {
    let geom = WindowGeometry::for_network(net, step)?;
    let m = aggregate.len();
    let positions = geom.covering_positions(m)?;
    let normalized: Vec<f64> = aggregate.iter().map(|v| v / scaling.aggregate_divisor).collect();
    let padded = pad_series(&normalized, geom.pad());
    let mut acc = OverlapAccumulator::new(m);
    for pos in positions {
        let x = Tensor::from_vec(padded[pos..pos + geom.l_in].to_vec());
        acc.add(pos, net.forward(&x)?.data())?;
    }
    Ok(acc
        .finish()?
        .into_iter()
        .map(|v| (v * scaling.appliance_divisor).max(0.0))
        .collect())
}
