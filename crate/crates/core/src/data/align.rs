use super::{SeriesChannel, SAMPLE_PERIOD_S};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignOptions {
    /// Grid spacing, seconds.
    pub period: i64,
    /// Inter-sample gaps up to this many seconds are forward-filled; longer
    /// gaps split the series.
    pub max_gap: i64,
    /// Segments with fewer grid points are discarded.
    pub min_len: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            period: SAMPLE_PERIOD_S,
            max_gap: 60,
            min_len: 1,
        }
    }
}

/// A gap-free stretch of the shared grid with every channel resampled onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSegment {
    pub start: i64,
    pub period: i64,
    pub channels: Vec<SeriesChannel>,
}

impl AlignedSegment {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Option<&SeriesChannel> {
        self.channels.iter().find(|c| c.name() == name)
    }
}

/// Sample-and-hold lookup of one channel at increasing grid times.
struct Cursor<'a> {
    ch: &'a SeriesChannel,
    i: usize,
}

impl Cursor<'_> {
    fn at(&mut self, t: i64, max_gap: i64) -> Option<f64> {
        let ts = self.ch.timestamps();
        while self.i + 1 < ts.len() && ts[self.i + 1] <= t {
            self.i += 1;
        }
        if ts[self.i] == t {
            return Some(self.ch.watts()[self.i]);
        }
        let next = *ts.get(self.i + 1)?;
        (ts[self.i] < t && next - ts[self.i] <= max_gap).then(|| self.ch.watts()[self.i])
    }
}

/// Resamples every channel onto a common grid spanning the intersection of
/// their time ranges. Grid points that fall inside a gap longer than
/// `max_gap` in any channel are dropped, splitting the output into segments.
pub fn align_to_grid(channels: &[SeriesChannel], opts: &AlignOptions) -> Result<Vec<AlignedSegment>> {
    if opts.period <= 0 {
        return Err(Error::InvalidConfig(format!(
            "period must be positive, got {}",
            opts.period
        )));
    }
    let start = channels
        .iter()
        .map(|c| c.timestamps()[0])
        .max()
        .ok_or(Error::EmptyIntersection)?;
    let end = channels
        .iter()
        .map(|c| *c.timestamps().last().unwrap())
        .min()
        .ok_or(Error::EmptyIntersection)?;
    if start > end {
        return Err(Error::EmptyIntersection);
    }

    let mut cursors: Vec<_> = channels.iter().map(|ch| Cursor { ch, i: 0 }).collect();
    let mut segments = Vec::new();
    let mut current: Option<(i64, Vec<Vec<f64>>)> = None;
    let flush = |seg: Option<(i64, Vec<Vec<f64>>)>, segments: &mut Vec<AlignedSegment>| -> Result<()> {
        let Some((seg_start, values)) = seg else {
            return Ok(());
        };
        if values[0].len() < opts.min_len.max(1) {
            return Ok(());
        }
        let channels = channels
            .iter()
            .zip(values)
            .map(|(c, v)| SeriesChannel::uniform(c.name(), seg_start, opts.period, v))
            .collect::<Result<Vec<_>>>()?;
        segments.push(AlignedSegment {
            start: seg_start,
            period: opts.period,
            channels,
        });
        Ok(())
    };

    let mut t = start;
    while t <= end {
        let row: Option<Vec<f64>> = cursors.iter_mut().map(|c| c.at(t, opts.max_gap)).collect();
        match row {
            Some(row) => {
                let (_, values) = current.get_or_insert_with(|| (t, vec![Vec::new(); channels.len()]));
                for (v, x) in values.iter_mut().zip(row) {
                    v.push(x);
                }
            }
            None => flush(current.take(), &mut segments)?,
        }
        t += opts.period;
    }
    flush(current.take(), &mut segments)?;
    Ok(segments)
}

/// Pointwise sum of channels that share one grid.
pub fn synthesize_aggregate(channels: &[SeriesChannel]) -> Result<SeriesChannel> {
    let first = channels
        .first()
        .ok_or_else(|| Error::Misaligned("no channels to sum".into()))?;
    let mut sum = first.watts().to_vec();
    for ch in &channels[1..] {
        if ch.timestamps() != first.timestamps() {
            return Err(Error::Misaligned(format!(
                "{} and {} have different timestamps",
                first.name(),
                ch.name()
            )));
        }
        for (s, w) in sum.iter_mut().zip(ch.watts()) {
            *s += w;
        }
    }
    SeriesChannel::new("aggregate", first.timestamps().to_vec(), sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ch(name: &str, ts: &[i64], w: &[f64]) -> SeriesChannel {
        SeriesChannel::new(name, ts.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn uniform_channels_unchanged() {
        let a = SeriesChannel::uniform("a", 100, 3, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = SeriesChannel::uniform("b", 100, 3, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let segs = align_to_grid(&[a.clone(), b.clone()], &AlignOptions::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].channels, vec![a, b]);
    }

    #[test]
    fn short_gap_forward_filled() {
        let a = ch("a", &[0, 3, 9, 12], &[1.0, 2.0, 3.0, 4.0]);
        let segs = align_to_grid(&[a], &AlignOptions::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].channels[0].watts(), &[1.0, 2.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn long_gap_splits() {
        let mut ts: Vec<i64> = (0..10).map(|k| k * 3).collect();
        ts.extend((0..10).map(|k| 27 + 600 + k * 3));
        let w = vec![1.0; 20];
        let segs = align_to_grid(&[ch("a", &ts, &w)], &AlignOptions::default()).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].len(), 10);
        assert_eq!(segs[1].start, 627);
        assert_eq!(segs[1].len(), 10);

        let opts = AlignOptions {
            min_len: 11,
            ..AlignOptions::default()
        };
        assert!(align_to_grid(&[ch("a", &ts, &w)], &opts).unwrap().is_empty());
    }

    #[test]
    fn jittered_timestamps_hold_last_value() {
        let a = ch("a", &[0, 4, 7, 9], &[1.0, 2.0, 3.0, 4.0]);
        let segs = align_to_grid(&[a], &AlignOptions::default()).unwrap();
        assert_eq!(segs[0].channels[0].watts(), &[1.0, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn grid_spans_intersection() {
        let a = SeriesChannel::uniform("a", 0, 3, vec![1.0; 10]).unwrap();
        let b = SeriesChannel::uniform("b", 9, 3, vec![2.0; 10]).unwrap();
        let segs = align_to_grid(&[a, b], &AlignOptions::default()).unwrap();
        assert_eq!(segs[0].start, 9);
        assert_eq!(segs[0].len(), 7);

        let c = SeriesChannel::uniform("c", 1000, 3, vec![1.0; 2]).unwrap();
        let d = SeriesChannel::uniform("d", 0, 3, vec![1.0; 2]).unwrap();
        assert!(matches!(
            align_to_grid(&[c, d], &AlignOptions::default()),
            Err(Error::EmptyIntersection)
        ));
        assert!(matches!(
            align_to_grid(&[], &AlignOptions::default()),
            Err(Error::EmptyIntersection)
        ));
    }

    #[test]
    fn aggregate_sums() {
        let a = SeriesChannel::uniform("a", 0, 3, vec![100.0; 4]).unwrap();
        let b = SeriesChannel::uniform("b", 0, 3, vec![50.0; 4]).unwrap();
        assert_eq!(
            synthesize_aggregate(std::slice::from_ref(&a)).unwrap().watts(),
            a.watts()
        );
        assert_eq!(synthesize_aggregate(&[a.clone(), b]).unwrap().watts(), &[150.0; 4]);
        let c = SeriesChannel::uniform("c", 1, 3, vec![1.0; 4]).unwrap();
        assert!(matches!(synthesize_aggregate(&[a, c]), Err(Error::Misaligned(_))));
    }

    proptest! {
        #[test]
        fn aggregate_is_linear(
            rows in proptest::collection::vec(proptest::collection::vec(0u32..2000, 3), 1..40),
            split in 1usize..3,
        ) {
            // Integer watts keep the sums exact regardless of grouping.
            let chans: Vec<_> = (0..3)
                .map(|c| SeriesChannel::uniform(format!("c{c}"), 0, 3,
                    rows.iter().map(|r| r[c] as f64).collect()).unwrap())
                .collect();
            let all = synthesize_aggregate(&chans).unwrap();
            let head = synthesize_aggregate(&chans[..split]).unwrap();
            let mut parts = vec![head];
            parts.extend_from_slice(&chans[split..]);
            let combined = synthesize_aggregate(&parts).unwrap();
            prop_assert_eq!(all.watts(), combined.watts());

            let mean_sum: f64 = chans.iter().map(|c| c.mean()).sum();
            prop_assert!((all.mean() - mean_sum).abs() < 1e-9 * (1.0 + mean_sum));
        }
    }
}
