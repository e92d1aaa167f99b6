//! Appliance-level error metrics in watts.

use crate::data::SeriesChannel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Samples present in both series.
    pub samples: usize,
    pub mae_w: f64,
    /// Samples where the true power exceeds the on threshold.
    pub on_samples: usize,
    /// MAE restricted to on samples; `None` when there are none.
    pub on_mae_w: Option<f64>,
    /// Energy predicted while the appliance was actually off, watt-hours.
    pub off_false_positive_wh: f64,
}

impl Metrics {
    pub fn to_csv(&self) -> String {
        let on = self.on_mae_w.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "metric,value\nsamples,{}\nmae_w,{}\non_samples,{}\non_mae_w,{}\noff_false_positive_wh,{}\n",
            self.samples, self.mae_w, self.on_samples, on, self.off_false_positive_wh
        )
    }
}

pub fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}

/// Compares two traces over their common timestamps. `period_s` is the
/// duration each sample stands for when integrating energy.
pub fn evaluate(pred: &SeriesChannel, truth: &SeriesChannel, on_threshold: f64, period_s: f64) -> Result<Metrics> {
    let (mut i, mut j) = (0, 0);
    let (pt, tt) = (pred.timestamps(), truth.timestamps());
    let mut samples = 0usize;
    let mut abs_sum = 0.0;
    let mut on_samples = 0usize;
    let mut on_abs_sum = 0.0;
    let mut fp_ws = 0.0;
    while i < pt.len() && j < tt.len() {
        match pt[i].cmp(&tt[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let (p, t) = (pred.watts()[i], truth.watts()[j]);
                let err = (p - t).abs();
                samples += 1;
                abs_sum += err;
                if t > on_threshold {
                    on_samples += 1;
                    on_abs_sum += err;
                } else {
                    fp_ws += p * period_s;
                }
                i += 1;
                j += 1;
            }
        }
    }
    if samples == 0 {
        return Err(Error::Misaligned(format!(
            "{} and {} share no timestamps",
            pred.name(),
            truth.name()
        )));
    }
    Ok(Metrics {
        samples,
        mae_w: abs_sum / samples as f64,
        on_samples,
        on_mae_w: (on_samples > 0).then(|| on_abs_sum / on_samples as f64),
        off_false_positive_wh: fp_ws / 3600.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(w: &[f64]) -> SeriesChannel {
        SeriesChannel::uniform("s", 0, 3, w.to_vec()).unwrap()
    }

    #[test]
    fn identical_and_offset() {
        let t = series(&[0.0, 100.0, 150.0, 0.0]);
        assert_eq!(evaluate(&t, &t, 50.0, 3.0).unwrap().mae_w, 0.0);
        let shifted = series(&[10.0, 110.0, 160.0, 10.0]);
        assert_eq!(evaluate(&shifted, &t, 50.0, 3.0).unwrap().mae_w, 10.0);
    }

    #[test]
    fn five_sample_hand_case() {
        let truth = series(&[0.0, 160.0, 160.0, 0.0, 20.0]);
        let pred = series(&[5.0, 150.0, 170.0, 30.0, 20.0]);
        // Direct summation: |5| + |10| + |10| + |30| + |0| = 55 over 5 samples.
        let m = evaluate(&pred, &truth, 50.0, 3.0).unwrap();
        assert_eq!(m.samples, 5);
        assert!((m.mae_w - 11.0).abs() < 1e-12);
        assert_eq!(m.on_samples, 2);
        assert!((m.on_mae_w.unwrap() - 10.0).abs() < 1e-12);
        // Off samples predict 5 + 30 + 20 W for 3 s each.
        assert!((m.off_false_positive_wh - 55.0 * 3.0 / 3600.0).abs() < 1e-12);
    }

    #[test]
    fn partial_overlap_and_none() {
        let a = SeriesChannel::uniform("a", 0, 3, vec![1.0; 4]).unwrap();
        let b = SeriesChannel::uniform("b", 6, 3, vec![3.0; 4]).unwrap();
        let m = evaluate(&a, &b, 10.0, 3.0).unwrap();
        assert_eq!(m.samples, 2);
        assert_eq!(m.mae_w, 2.0);
        assert_eq!(m.on_mae_w, None);
        let c = SeriesChannel::uniform("c", 100, 3, vec![3.0; 4]).unwrap();
        assert!(evaluate(&a, &c, 10.0, 3.0).is_err());
    }

    #[test]
    fn csv_output() {
        let t = series(&[0.0, 100.0]);
        let csv = evaluate(&t, &t, 50.0, 3.0).unwrap().to_csv();
        assert!(csv.starts_with("metric,value\nsamples,2\nmae_w,0\n"), "{csv}");
    }
}
