//! Mean filtering, sliding windows and per-window sensor alignment.
//!
//! Windows are cut by sample index on the filtered accelerometer stream
//! (24 samples, step 12). Gyroscope rows are matched to each accelerometer
//! timestamp by nearest neighbour; heart rate is the in-window mean with
//! forward fill.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    trim_to_segment, Condition, Emotion, HeartRateSeries, ParticipantData, Sample, SampleSeries,
    WalkSegment,
};

pub const WINDOW_SIZE: usize = 24;
pub const WINDOW_STEP: usize = 12;
pub const MEAN_FILTER_WIDTH: usize = 3;
/// Largest gyroscope gap tolerated around an accelerometer timestamp.
pub const MAX_GYRO_GAP_MS: i64 = 500;

pub type WindowMatrix = [[f64; 3]; WINDOW_SIZE];

#[derive(Debug, Clone, PartialEq)]
pub struct WindowBundle {
    pub window_index: usize,
    pub acc: WindowMatrix,
    pub gyro: WindowMatrix,
    pub hr_bpm: f64,
    pub emotion: Emotion,
    pub participant_id: String,
    pub condition: Condition,
    pub start_ms: i64,
    pub end_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedWindow {
    pub participant: String,
    pub emotion: Emotion,
    pub window_index: usize,
    pub reason: String,
}

/// A segment that produced no windows at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentFailure {
    pub participant: String,
    pub emotion: Emotion,
    pub reason: String,
}

/// Centered moving average; windows shrink at the series edges so the output
/// has the input's length.
pub fn mean_filter(series: &SampleSeries, width: usize) -> Result<SampleSeries> {
    if width == 0 || width.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "mean filter width must be odd and >= 1, got {width}"
        )));
    }
    let half = width / 2;
    let s = series.samples();
    let n = s.len();
    let filtered = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let count = (hi - lo + 1) as f64;
            let mut acc = [0.0; 3];
            for p in &s[lo..=hi] {
                acc[0] += p.x;
                acc[1] += p.y;
                acc[2] += p.z;
            }
            Sample {
                timestamp_ms: s[i].timestamp_ms,
                x: acc[0] / count,
                y: acc[1] / count,
                z: acc[2] / count,
            }
        })
        .collect();
    SampleSeries::new(series.kind(), filtered)
}

/// Index ranges of full windows; a trailing partial window is discarded.
pub fn make_windows(len: usize, size: usize, step: usize) -> Result<Vec<Range<usize>>> {
    if size == 0 || step == 0 {
        return Err(Error::Config("window size and step must be positive".into()));
    }
    if len < size {
        return Err(Error::TooShort { len, size });
    }
    Ok((0..=(len - size) / step)
        .map(|k| k * step..k * step + size)
        .collect())
}

/// Nearest gyroscope row for each accelerometer timestamp (ties go to the
/// earlier row). Fails if the gyroscope gap bracketing any target exceeds
/// [`MAX_GYRO_GAP_MS`].
pub fn align_gyro(acc_window: &[Sample], gyro: &SampleSeries) -> Result<WindowMatrix> {
    if acc_window.len() != WINDOW_SIZE {
        return Err(Error::Config(format!(
            "window has {} rows, expected {WINDOW_SIZE}",
            acc_window.len()
        )));
    }
    let g = gyro.samples();
    let mut out = [[0.0; 3]; WINDOW_SIZE];
    for (row, target) in out.iter_mut().zip(acc_window) {
        let t = target.timestamp_ms;
        let after = g.partition_point(|p| p.timestamp_ms < t);
        let prev = after.checked_sub(1).map(|i| &g[i]);
        let next = g.get(after);
        let gap = match (prev, next) {
            (Some(p), Some(n)) => n.timestamp_ms - p.timestamp_ms,
            (Some(p), None) => t - p.timestamp_ms,
            (None, Some(n)) => n.timestamp_ms - t,
            (None, None) => i64::MAX,
        };
        if gap > MAX_GYRO_GAP_MS {
            return Err(Error::InvalidData(format!(
                "gyroscope gap of {gap} ms around t={t} ms"
            )));
        }
        let chosen = match (prev, next) {
            (Some(p), Some(n)) => {
                if t - p.timestamp_ms <= n.timestamp_ms - t {
                    p
                } else {
                    n
                }
            }
            (Some(p), None) => p,
            (None, Some(n)) => n,
            (None, None) => unreachable!(),
        };
        *row = chosen.axes();
    }
    Ok(out)
}

/// Mean bpm of heart-rate samples in `[start_ms, end_ms]`, or the last sample
/// before the window when none fall inside.
pub fn align_hr(start_ms: i64, end_ms: i64, hr: &HeartRateSeries) -> Result<f64> {
    let s = hr.samples();
    let lo = s.partition_point(|p| p.timestamp_ms < start_ms);
    let hi = s.partition_point(|p| p.timestamp_ms <= end_ms);
    if lo < hi {
        let inside = &s[lo..hi];
        return Ok(inside.iter().map(|p| p.bpm).sum::<f64>() / inside.len() as f64);
    }
    match lo.checked_sub(1) {
        Some(i) => Ok(s[i].bpm),
        None => Err(Error::InvalidData(format!(
            "no heart-rate sample at or before t={end_ms} ms"
        ))),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SegmentWindows {
    pub bundles: Vec<WindowBundle>,
    pub dropped: Vec<DroppedWindow>,
}

/// Trims, filters and windows one labeled segment of a participant.
pub fn segment_windows(participant: &ParticipantData, segment: &WalkSegment) -> Result<SegmentWindows> {
    let acc = trim_to_segment(&participant.acc, segment)?;
    let acc = mean_filter(&acc, MEAN_FILTER_WIDTH)?;
    let ranges = make_windows(acc.len(), WINDOW_SIZE, WINDOW_STEP)?;
    let mut out = SegmentWindows::default();
    for (window_index, range) in ranges.into_iter().enumerate() {
        let rows = &acc.samples()[range];
        let start_ms = rows[0].timestamp_ms;
        let end_ms = rows[WINDOW_SIZE - 1].timestamp_ms;
        let aligned = align_gyro(rows, &participant.gyro)
            .and_then(|gyro| align_hr(start_ms, end_ms, &participant.hr).map(|hr| (gyro, hr)));
        match aligned {
            Ok((gyro, hr_bpm)) => {
                let mut acc_m = [[0.0; 3]; WINDOW_SIZE];
                for (dst, src) in acc_m.iter_mut().zip(rows) {
                    *dst = src.axes();
                }
                out.bundles.push(WindowBundle {
                    window_index,
                    acc: acc_m,
                    gyro,
                    hr_bpm,
                    emotion: segment.emotion,
                    participant_id: participant.id.clone(),
                    condition: participant.condition,
                    start_ms,
                    end_ms,
                });
            }
            Err(e) => out.dropped.push(DroppedWindow {
                participant: participant.id.clone(),
                emotion: segment.emotion,
                window_index,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct ParticipantWindows {
    pub bundles: Vec<WindowBundle>,
    pub dropped: Vec<DroppedWindow>,
    pub failed_segments: Vec<SegmentFailure>,
}

/// Windows for every segment of a participant, ordered by emotion and then
/// window index.
pub fn participant_windows(participant: &ParticipantData) -> ParticipantWindows {
    let mut segments = participant.segments.clone();
    segments.sort_by_key(|s| s.emotion);
    let mut out = ParticipantWindows::default();
    for seg in &segments {
        match segment_windows(participant, seg) {
            Ok(w) => {
                out.bundles.extend(w.bundles);
                out.dropped.extend(w.dropped);
            }
            Err(e) => {
                log::warn!("participant {} {} segment: {e}", participant.id, seg.emotion);
                out.failed_segments.push(SegmentFailure {
                    participant: participant.id.clone(),
                    emotion: seg.emotion,
                    reason: e.to_string(),
                });
            }
        }
    }
    out
}

/// Writes one row per window with its provenance, for debugging alignment.
pub fn write_window_dump<W: std::io::Write>(writer: W, bundles: &[WindowBundle]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "window_index".to_string(),
        "participant".into(),
        "emotion".into(),
        "start_ms".into(),
        "end_ms".into(),
        "hr_bpm".into(),
    ];
    for sensor in ["acc", "gyro"] {
        for r in 0..WINDOW_SIZE {
            for axis in ["x", "y", "z"] {
                header.push(format!("{sensor}_{axis}_{r}"));
            }
        }
    }
    w.write_record(&header)?;
    for b in bundles {
        let mut row = vec![
            b.window_index.to_string(),
            b.participant_id.clone(),
            b.emotion.to_string(),
            b.start_ms.to_string(),
            b.end_ms.to_string(),
            b.hr_bpm.to_string(),
        ];
        for m in [&b.acc, &b.gyro] {
            row.extend(m.iter().flat_map(|r| r.iter().map(f64::to_string)));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{HeartRateSample, SensorKind};
    use proptest::prelude::*;

    fn series_from(ts: &[i64], xs: &[f64]) -> SampleSeries {
        let samples = ts
            .iter()
            .zip(xs)
            .map(|(&t, &x)| Sample {
                timestamp_ms: t,
                x,
                y: 2.0 * x,
                z: -x,
            })
            .collect();
        SampleSeries::new(SensorKind::Accelerometer, samples).unwrap()
    }

    fn spaced(n: usize, spacing: i64, offset: i64) -> Vec<i64> {
        (0..n as i64).map(|i| offset + i * spacing).collect()
    }

    #[test]
    fn mean_filter_small_example() {
        let s = series_from(&[0, 42, 84], &[0.0, 3.0, 6.0]);
        let f = mean_filter(&s, 3).unwrap();
        let xs: Vec<f64> = f.samples().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.5, 3.0, 4.5]);
        assert_eq!(f.samples()[0].timestamp_ms, 0);
    }

    #[test]
    fn mean_filter_identity_cases() {
        let s = series_from(&spaced(10, 42, 0), &[2.5; 10]);
        assert_eq!(mean_filter(&s, 3).unwrap(), s);
        let r = series_from(&spaced(5, 42, 0), &[1.0, -4.0, 9.0, 0.5, 3.0]);
        assert_eq!(mean_filter(&r, 1).unwrap(), r);
        assert!(matches!(mean_filter(&r, 2), Err(Error::Config(_))));
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(24, 24, 12).unwrap().len(), 1);
        assert_eq!(make_windows(4860, 24, 12).unwrap().len(), 404);
        assert!(matches!(make_windows(23, 24, 12), Err(Error::TooShort { .. })));
        let w = make_windows(60, 24, 12).unwrap();
        assert_eq!(w, vec![0..24, 12..36, 24..48, 36..60]);
    }

    #[test]
    fn gyro_identity_alignment() {
        let ts = spaced(24, 42, 1000);
        let xs: Vec<f64> = (0..24).map(f64::from).collect();
        let acc = series_from(&ts, &xs);
        let gyro = series_from(&ts, &xs.iter().map(|x| x * 10.0).collect::<Vec<_>>());
        let m = align_gyro(acc.samples(), &gyro).unwrap();
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row[0], 10.0 * i as f64);
        }
    }

    #[test]
    fn gyro_offset_matches_exhaustive_nearest() {
        let acc = series_from(&spaced(24, 42, 1000), &[0.0; 24]);
        let gts = spaced(40, 42, 1000 - 42 * 5 + 2);
        let gxs: Vec<f64> = (0..40).map(f64::from).collect();
        let gyro = series_from(&gts, &gxs);
        let m = align_gyro(acc.samples(), &gyro).unwrap();
        for (row, a) in m.iter().zip(acc.samples()) {
            // brute force: smallest distance, earliest on ties
            let mut best = 0;
            for (j, g) in gyro.samples().iter().enumerate() {
                let d = (g.timestamp_ms - a.timestamp_ms).abs();
                let bd = (gyro.samples()[best].timestamp_ms - a.timestamp_ms).abs();
                if d < bd {
                    best = j;
                }
            }
            assert_eq!(row[0], gxs[best]);
            assert_eq!(gyro.samples()[best].timestamp_ms, a.timestamp_ms + 2);
        }
    }

    #[test]
    fn gyro_tie_goes_to_earlier() {
        let acc = series_from(&spaced(24, 42, 1000), &[0.0; 24]);
        // gyro samples 21 ms either side of every acc sample
        let gts = spaced(26, 42, 1000 - 21);
        let gxs: Vec<f64> = (0..26).map(f64::from).collect();
        let m = align_gyro(acc.samples(), &series_from(&gts, &gxs)).unwrap();
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row[0], i as f64);
        }
    }

    #[test]
    fn gyro_gap_drops_window() {
        let acc = series_from(&spaced(24, 42, 0), &[0.0; 24]);
        let mut gts = spaced(10, 42, 0);
        gts.extend(spaced(20, 42, 9 * 42 + 600));
        let gyro = series_from(&gts, &vec![1.0; gts.len()]);
        assert!(align_gyro(acc.samples(), &gyro).is_err());
    }

    fn hr(rows: &[(i64, f64)]) -> HeartRateSeries {
        HeartRateSeries::new(
            rows.iter()
                .map(|&(timestamp_ms, bpm)| HeartRateSample { timestamp_ms, bpm })
                .collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn hr_alignment_rules() {
        let series = hr(&[(500, 77.0), (1200, 80.0), (1800, 84.0)]);
        assert_eq!(align_hr(1000, 2000, &series).unwrap(), 82.0);
        let series = hr(&[(100, 77.0), (5000, 90.0)]);
        assert_eq!(align_hr(1000, 2000, &series).unwrap(), 77.0);
        assert!(align_hr(0, 50, &series).is_err());
    }

    #[test]
    fn windows_inherit_segment_label() {
        let ts = spaced(200, 42, 0);
        let xs: Vec<f64> = ts.iter().map(|&t| (t as f64 / 300.0).sin()).collect();
        let p = ParticipantData {
            id: "p".into(),
            condition: Condition::new(1).unwrap(),
            acc: series_from(&ts, &xs),
            gyro: series_from(&ts, &xs),
            hr: hr(&[(0, 90.0), (4000, 95.0)]),
            segments: vec![WalkSegment {
                emotion: Emotion::Sad,
                start_ms: 420,
                end_ms: 8000,
            }],
        };
        let w = participant_windows(&p);
        assert!(w.dropped.is_empty());
        assert!(w.failed_segments.is_empty());
        // samples 10..=190 -> 181 samples -> 14 windows
        assert_eq!(w.bundles.len(), (181 - 24) / 12 + 1);
        assert!(w.bundles.iter().all(|b| b.emotion == Emotion::Sad));
        for pair in w.bundles.windows(2) {
            assert_eq!(pair[0].acc[12..], pair[1].acc[..12]);
        }
    }

    proptest! {
        #[test]
        fn window_count_matches_naive_loop(n in 24usize..5000) {
            let mut naive = 0;
            let mut start = 0;
            while start + 24 <= n {
                naive += 1;
                start += 12;
            }
            prop_assert_eq!(make_windows(n, 24, 12).unwrap().len(), naive);
            prop_assert_eq!(naive, (n - 24) / 12 + 1);
        }

        #[test]
        fn mean_filter_preserves_interior_mean(xs in prop::collection::vec(-100.0f64..100.0, 200..400)) {
            let ts = spaced(xs.len(), 42, 0);
            let f = mean_filter(&series_from(&ts, &xs), 3).unwrap();
            let n = xs.len();
            // Interior sum telescopes: sum of filtered[1..n-1] differs from the raw
            // sum only by edge terms.
            let raw: f64 = xs.iter().sum::<f64>();
            let filt: f64 = f.samples()[1..n - 1].iter().map(|p| p.x).sum::<f64>();
            let edge = (2.0 * xs[0] + xs[1] + xs[n - 2] + 2.0 * xs[n - 1]) / 3.0;
            prop_assert!((filt - (raw - edge)).abs() <= 1e-12 * (n as f64) * 100.0);
        }
    }
}
