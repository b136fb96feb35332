//! Sensor-log and study-manifest ingestion.
//!
//! Sensor CSVs carry a `timestamp_ms,x,y,z` header, heart-rate CSVs a
//! `timestamp_ms,bpm` header. Timestamps are integer milliseconds and must be
//! strictly increasing. The manifest is a single JSON document listing each
//! participant's condition, stream files and labeled walking segments.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heart-rate readings outside this open interval are flagged invalid.
pub const BPM_RANGE: (f64, f64) = (20.0, 250.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Accelerometer,
    Gyroscope,
}

/// Emotion label. Variants are declared in lexicographic order of their
/// names, so the derived `Ord` doubles as the label tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Happy,
    Neutral,
    Sad,
}

impl Emotion {
    pub const ALL: [Emotion; 3] = [Emotion::Happy, Emotion::Neutral, Emotion::Sad];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Happy => "happy",
            Emotion::Neutral => "neutral",
            Emotion::Sad => "sad",
        }
    }

    /// Class index used by the models; preserves the label order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Emotion> {
        Emotion::ALL.get(i).copied()
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "happy" => Ok(Emotion::Happy),
            "neutral" => Ok(Emotion::Neutral),
            "sad" => Ok(Emotion::Sad),
            other => Err(Error::InvalidData(format!("unknown emotion {other:?}"))),
        }
    }
}

/// Stimulus condition of the mixed design (1, 2 or 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Condition(u8);

impl Condition {
    pub fn new(value: u8) -> Result<Self> {
        if (1..=3).contains(&value) {
            Ok(Condition(value))
        } else {
            Err(Error::InvalidData(format!(
                "condition must be 1, 2 or 3, got {value}"
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Condition {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Condition::new(value)
    }
}

impl From<Condition> for u8 {
    fn from(c: Condition) -> u8 {
        c.0
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub timestamp_ms: i64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Sample {
    pub fn axes(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Tri-axial sensor stream with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    kind: SensorKind,
    samples: Vec<Sample>,
}

impl SampleSeries {
    pub fn new(kind: SensorKind, samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySeries(format!("{kind:?} series has no samples")));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.x.is_finite() && s.y.is_finite() && s.z.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite value at sample {i} (t={} ms)",
                    s.timestamp_ms
                )));
            }
            if i > 0 && s.timestamp_ms <= samples[i - 1].timestamp_ms {
                return Err(Error::InvalidData(format!(
                    "timestamp {} at sample {i} does not follow {}",
                    s.timestamp_ms,
                    samples[i - 1].timestamp_ms
                )));
            }
        }
        Ok(SampleSeries { kind, samples })
    }

    pub fn kind(&self) -> SensorKind {
        self.kind
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_ms(&self) -> i64 {
        self.samples[0].timestamp_ms
    }

    pub fn last_ms(&self) -> i64 {
        self.samples[self.samples.len() - 1].timestamp_ms
    }

    /// Time between first and last sample.
    pub fn span_ms(&self) -> i64 {
        self.last_ms() - self.first_ms()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp_ms", "x", "y", "z"])?;
        for s in &self.samples {
            w.write_record([
                s.timestamp_ms.to_string(),
                s.x.to_string(),
                s.y.to_string(),
                s.z.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeartRateSample {
    pub timestamp_ms: i64,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeartRateSeries {
    samples: Vec<HeartRateSample>,
    /// Rows dropped because their bpm fell outside [`BPM_RANGE`].
    pub excluded: usize,
}

impl HeartRateSeries {
    pub fn new(samples: Vec<HeartRateSample>, excluded: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySeries(
                "heart-rate series has no valid samples".into(),
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            if !valid_bpm(s.bpm) {
                return Err(Error::InvalidData(format!(
                    "bpm {} at sample {i} outside {BPM_RANGE:?}",
                    s.bpm
                )));
            }
            if i > 0 && s.timestamp_ms <= samples[i - 1].timestamp_ms {
                return Err(Error::InvalidData(format!(
                    "heart-rate timestamp {} at sample {i} does not follow {}",
                    s.timestamp_ms,
                    samples[i - 1].timestamp_ms
                )));
            }
        }
        Ok(HeartRateSeries { samples, excluded })
    }

    pub fn samples(&self) -> &[HeartRateSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp_ms", "bpm"])?;
        for s in &self.samples {
            w.write_record([s.timestamp_ms.to_string(), s.bpm.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn valid_bpm(bpm: f64) -> bool {
    bpm.is_finite() && bpm > BPM_RANGE.0 && bpm < BPM_RANGE.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkSegment {
    pub emotion: Emotion,
    pub start_ms: i64,
    pub end_ms: i64,
}

/// Manifest entry for one participant. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantEntry {
    pub id: String,
    pub condition: Condition,
    pub acc: PathBuf,
    pub gyro: PathBuf,
    pub hr: PathBuf,
    pub segments: Vec<WalkSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub participants: Vec<ParticipantEntry>,
}

impl StudyManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: StudyManifest = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        StudyManifest::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for p in &self.participants {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "participant {:?} listed twice",
                    p.id
                )));
            }
            let mut seen = std::collections::BTreeSet::new();
            for seg in &p.segments {
                if seg.start_ms >= seg.end_ms {
                    return Err(Error::InvalidData(format!(
                        "participant {}: segment {} has start_ms {} >= end_ms {}",
                        p.id, seg.emotion, seg.start_ms, seg.end_ms
                    )));
                }
                if !seen.insert(seg.emotion) {
                    return Err(Error::InvalidData(format!(
                        "participant {}: more than one {} segment",
                        p.id, seg.emotion
                    )));
                }
            }
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 1,
            message: format!("expected header {:?}, got {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        message: format!("invalid {name} {raw:?}"),
    })
}

/// Reads rows as `(line, fields)` after validating the header.
fn read_rows<R: Read>(
    path: &Path,
    reader: R,
    header: &[&str],
) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    check_header(path, &mut rdr, header)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                message: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        rows.push((line, record));
    }
    Ok(rows)
}

pub fn parse_sensor_csv(path: &Path, kind: SensorKind) -> Result<SampleSeries> {
    read_sensor_csv(path, open(path)?, kind)
}

/// Parses sensor CSV text from any reader; `path` is used for diagnostics only.
pub fn read_sensor_csv<R: Read>(path: &Path, reader: R, kind: SensorKind) -> Result<SampleSeries> {
    let rows = read_rows(path, reader, &["timestamp_ms", "x", "y", "z"])?;
    let mut samples: Vec<Sample> = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let timestamp_ms: i64 = parse_field(path, line, "timestamp_ms", &rec[0])?;
        let mut axes = [0.0; 3];
        for (k, name) in ["x", "y", "z"].iter().enumerate() {
            let v: f64 = parse_field(path, line, name, &rec[k + 1])?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    message: format!("non-finite {name}"),
                });
            }
            axes[k] = v;
        }
        if let Some(prev) = samples.last() {
            if timestamp_ms <= prev.timestamp_ms {
                return Err(Error::NonMonotonic {
                    path: path.to_owned(),
                    line,
                    timestamp_ms,
                    previous_ms: prev.timestamp_ms,
                });
            }
        }
        samples.push(Sample {
            timestamp_ms,
            x: axes[0],
            y: axes[1],
            z: axes[2],
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptySeries(format!("{} has no samples", path.display())));
    }
    SampleSeries::new(kind, samples)
}

pub fn parse_heart_rate_csv(path: &Path) -> Result<HeartRateSeries> {
    read_heart_rate_csv(path, open(path)?)
}

pub fn read_heart_rate_csv<R: Read>(path: &Path, reader: R) -> Result<HeartRateSeries> {
    let rows = read_rows(path, reader, &["timestamp_ms", "bpm"])?;
    let mut samples: Vec<HeartRateSample> = Vec::with_capacity(rows.len());
    let mut excluded = 0;
    let mut previous: Option<i64> = None;
    for (line, rec) in rows {
        let timestamp_ms: i64 = parse_field(path, line, "timestamp_ms", &rec[0])?;
        let bpm: f64 = parse_field(path, line, "bpm", &rec[1])?;
        if let Some(prev) = previous {
            if timestamp_ms <= prev {
                return Err(Error::NonMonotonic {
                    path: path.to_owned(),
                    line,
                    timestamp_ms,
                    previous_ms: prev,
                });
            }
        }
        previous = Some(timestamp_ms);
        if valid_bpm(bpm) {
            samples.push(HeartRateSample { timestamp_ms, bpm });
        } else {
            excluded += 1;
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptySeries(format!(
            "{} has no valid heart-rate samples ({excluded} excluded)",
            path.display()
        )));
    }
    HeartRateSeries::new(samples, excluded)
}

/// Samples with `start_ms <= t <= end_ms`.
pub fn trim_to_segment(series: &SampleSeries, segment: &WalkSegment) -> Result<SampleSeries> {
    let s = series.samples();
    let lo = s.partition_point(|p| p.timestamp_ms < segment.start_ms);
    let hi = s.partition_point(|p| p.timestamp_ms <= segment.end_ms);
    if lo >= hi {
        return Err(Error::EmptySegment {
            start_ms: segment.start_ms,
            end_ms: segment.end_ms,
        });
    }
    Ok(SampleSeries {
        kind: series.kind,
        samples: s[lo..hi].to_vec(),
    })
}

/// Mean sampling rate in Hz: `(n - 1) / span_seconds`.
pub fn estimate_sampling_rate(series: &SampleSeries) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InvalidData(
            "sampling rate needs at least 2 samples".into(),
        ));
    }
    let span_s = series.span_ms() as f64 / 1000.0;
    Ok((series.len() - 1) as f64 / span_s)
}

/// All streams of one included participant.
#[derive(Debug, Clone)]
pub struct ParticipantData {
    pub id: String,
    pub condition: Condition,
    pub acc: SampleSeries,
    pub gyro: SampleSeries,
    pub hr: HeartRateSeries,
    pub segments: Vec<WalkSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub participant: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub participant: String,
    pub condition: Condition,
    pub acc_samples: usize,
    pub gyro_samples: usize,
    pub hr_samples: usize,
    pub hr_excluded: usize,
    pub acc_rate_hz: Option<f64>,
    pub gyro_rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub participants: Vec<ParticipantSummary>,
    pub excluded: Vec<Exclusion>,
    /// Unweighted mean of the per-participant accelerometer rates.
    pub mean_acc_rate_hz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Study {
    pub participants: Vec<ParticipantData>,
    pub excluded: Vec<Exclusion>,
}

impl Study {
    pub fn summary(&self) -> IngestSummary {
        let participants: Vec<ParticipantSummary> = self
            .participants
            .iter()
            .map(|p| ParticipantSummary {
                participant: p.id.clone(),
                condition: p.condition,
                acc_samples: p.acc.len(),
                gyro_samples: p.gyro.len(),
                hr_samples: p.hr.len(),
                hr_excluded: p.hr.excluded,
                acc_rate_hz: estimate_sampling_rate(&p.acc).ok(),
                gyro_rate_hz: estimate_sampling_rate(&p.gyro).ok(),
            })
            .collect();
        let rates: Vec<f64> = participants.iter().filter_map(|p| p.acc_rate_hz).collect();
        let mean_acc_rate_hz =
            (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
        IngestSummary {
            participants,
            excluded: self.excluded.clone(),
            mean_acc_rate_hz,
        }
    }
}

fn load_participant(entry: &ParticipantEntry, base: &Path) -> Result<ParticipantData> {
    let acc = parse_sensor_csv(&base.join(&entry.acc), SensorKind::Accelerometer)?;
    let gyro = parse_sensor_csv(&base.join(&entry.gyro), SensorKind::Gyroscope)?;
    let hr = parse_heart_rate_csv(&base.join(&entry.hr))?;
    Ok(ParticipantData {
        id: entry.id.clone(),
        condition: entry.condition,
        acc,
        gyro,
        hr,
        segments: entry.segments.clone(),
    })
}

/// Loads every participant in the manifest. Participants whose streams are
/// missing or unreadable are excluded with the reason recorded.
pub fn load_study(manifest: &StudyManifest, base_dir: &Path) -> Study {
    let results: Vec<(String, Result<ParticipantData>)> = manifest
        .participants
        .par_iter()
        .map(|entry| (entry.id.clone(), load_participant(entry, base_dir)))
        .collect();
    let mut participants = Vec::new();
    let mut excluded = Vec::new();
    for (id, result) in results {
        match result {
            Ok(p) => participants.push(p),
            Err(e) => {
                log::warn!("excluding participant {id}: {e}");
                excluded.push(Exclusion {
                    participant: id,
                    reason: e.to_string(),
                });
            }
        }
    }
    Study {
        participants,
        excluded,
    }
}

/// Directory that manifest-relative paths resolve against.
pub fn manifest_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
