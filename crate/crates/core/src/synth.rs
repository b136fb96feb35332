//! Seeded synthetic walking sessions.
//!
//! Each walk is a sinusoidal gait signal plus Gaussian noise: axis `k` of a
//! sensor reads `amplitude * sin(2π * cadence * t + 2πk/3) + N(0, noise_std²)`
//! with `t` the nominal time of the sample since the walk began. Heart rate is
//! sampled at 1 Hz around the emotion's mean. Normal variates come from the
//! Marsaglia polar method on a ChaCha8 stream, so a seed reproduces the same
//! files on every platform.
//!
//! A study places the happy, neutral and sad walks of each participant one
//! after another, separated by stationary rest periods that the manifest
//! segments exclude.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    Condition, Emotion, HeartRateSample, HeartRateSeries, ParticipantEntry, Sample, SampleSeries, SensorKind,
    StudyManifest, WalkSegment, BPM_RANGE,
};
use crate::preprocess::WINDOW_SIZE;
use crate::seed;

/// Session clock origin, in epoch milliseconds.
const SESSION_START_MS: i64 = 1_600_000_000_000;
/// Gyroscope clock lag behind the accelerometer.
const GYRO_OFFSET_MS: i64 = 7;

/// Standard normal variate by the Marsaglia polar method. The second variate
/// of each accepted pair is discarded.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = rng.random::<f64>() * 2.0 - 1.0;
        let v = rng.random::<f64>() * 2.0 - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Gait signature of one emotion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionProfile {
    pub cadence_hz: f64,
    pub acc_amplitude: f64,
    pub gyro_amplitude: f64,
    pub noise_std: f64,
    pub hr_mean: f64,
    pub hr_std: f64,
}

impl EmotionProfile {
    fn validate(&self, emotion: Emotion) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{emotion} profile: {what}")));
        if !(self.cadence_hz > 0.0 && self.cadence_hz.is_finite()) {
            return bad("cadence must be positive");
        }
        if !(self.noise_std >= 0.0 && self.hr_std >= 0.0) {
            return bad("noise and heart-rate std must be non-negative");
        }
        if !(self.acc_amplitude.is_finite() && self.gyro_amplitude.is_finite()) {
            return bad("amplitudes must be finite");
        }
        if !(self.hr_mean > BPM_RANGE.0 && self.hr_mean < BPM_RANGE.1) {
            return bad("heart-rate mean outside the valid bpm range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub happy: EmotionProfile,
    pub neutral: EmotionProfile,
    pub sad: EmotionProfile,
    pub duration_s: f64,
    /// Stationary time before, between and after walks.
    pub rest_s: f64,
    pub sampling_rate_hz: f64,
    pub n_participants: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams::separable()
    }
}

impl SynthParams {
    /// Faster, stronger walking when happy; heart rates on the scale of the study.
    pub fn separable() -> SynthParams {
        SynthParams {
            happy: EmotionProfile {
                cadence_hz: 2.2,
                acc_amplitude: 1.4,
                gyro_amplitude: 1.0,
                noise_std: 0.3,
                hr_mean: 104.0,
                hr_std: 3.0,
            },
            neutral: EmotionProfile {
                cadence_hz: 1.9,
                acc_amplitude: 1.15,
                gyro_amplitude: 0.8,
                noise_std: 0.3,
                hr_mean: 98.0,
                hr_std: 3.0,
            },
            sad: EmotionProfile {
                cadence_hz: 1.6,
                acc_amplitude: 0.9,
                gyro_amplitude: 0.6,
                noise_std: 0.3,
                hr_mean: 92.0,
                hr_std: 3.0,
            },
            duration_s: 200.0,
            rest_s: 20.0,
            sampling_rate_hz: 23.8,
            n_participants: 5,
            seed: 0,
        }
    }

    /// Every emotion walks the same way: labels carry no signal.
    pub fn identical() -> SynthParams {
        let base = SynthParams::separable();
        SynthParams {
            happy: base.neutral,
            sad: base.neutral,
            ..base
        }
    }

    pub fn profile(&self, emotion: Emotion) -> &EmotionProfile {
        match emotion {
            Emotion::Happy => &self.happy,
            Emotion::Neutral => &self.neutral,
            Emotion::Sad => &self.sad,
        }
    }

    /// Samples in one walk.
    pub fn walk_samples(&self) -> usize {
        (self.duration_s * self.sampling_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        for e in Emotion::ALL {
            self.profile(e).validate(e)?;
        }
        if !(self.sampling_rate_hz > 0.0 && self.sampling_rate_hz.is_finite()) {
            return Err(Error::Config("sampling rate must be positive".into()));
        }
        if !(self.rest_s >= 0.0 && self.rest_s.is_finite()) {
            return Err(Error::Config("rest time must be non-negative".into()));
        }
        if !self.duration_s.is_finite() || self.walk_samples() < WINDOW_SIZE {
            return Err(Error::Config(format!(
                "a {} s walk at {} Hz is shorter than one {WINDOW_SIZE}-sample window",
                self.duration_s, self.sampling_rate_hz
            )));
        }
        if self.n_participants == 0 {
            return Err(Error::Config("n_participants must be >= 1".into()));
        }
        Ok(())
    }

    fn timestamp(&self, i: usize) -> i64 {
        (i as f64 * 1000.0 / self.sampling_rate_hz).round() as i64
    }
}

/// One emotion's walk with timestamps starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    pub acc: SampleSeries,
    pub gyro: SampleSeries,
    pub hr: HeartRateSeries,
}

struct RawWalk {
    acc: Vec<Sample>,
    gyro: Vec<Sample>,
    hr: Vec<HeartRateSample>,
}

fn gait_sample<R: Rng>(rng: &mut R, t_ms: i64, t_s: f64, cadence: f64, amplitude: f64, noise: f64) -> Sample {
    let mut axes = [0.0; 3];
    for (k, a) in axes.iter_mut().enumerate() {
        let phase = 2.0 * PI * k as f64 / 3.0;
        *a = amplitude * (2.0 * PI * cadence * t_s + phase).sin();
        if noise > 0.0 {
            *a += noise * standard_normal(rng);
        }
    }
    Sample {
        timestamp_ms: t_ms,
        x: axes[0],
        y: axes[1],
        z: axes[2],
    }
}

fn raw_walk(params: &SynthParams, profile: &EmotionProfile, walk_seed: u64) -> RawWalk {
    let n = params.walk_samples();
    let mut acc_rng = seed::rng(seed::derive(walk_seed, &[0]));
    let mut gyro_rng = seed::rng(seed::derive(walk_seed, &[1]));
    let mut hr_rng = seed::rng(seed::derive(walk_seed, &[2]));
    let mut acc = Vec::with_capacity(n);
    let mut gyro = Vec::with_capacity(n);
    for i in 0..n {
        let t_s = i as f64 / params.sampling_rate_hz;
        let ts = params.timestamp(i);
        let p = profile;
        acc.push(gait_sample(&mut acc_rng, ts, t_s, p.cadence_hz, p.acc_amplitude, p.noise_std));
        gyro.push(gait_sample(
            &mut gyro_rng,
            ts + GYRO_OFFSET_MS,
            t_s,
            p.cadence_hz,
            p.gyro_amplitude,
            p.noise_std,
        ));
    }
    let last = acc[n - 1].timestamp_ms;
    let hr = (0..=last / 1000)
        .map(|s| HeartRateSample {
            timestamp_ms: s * 1000,
            bpm: (profile.hr_mean + profile.hr_std * standard_normal(&mut hr_rng))
                .clamp(BPM_RANGE.0 + 1.0, BPM_RANGE.1 - 1.0),
        })
        .collect();
    RawWalk { acc, gyro, hr }
}

/// Generates one walk for `emotion`. Everything is determined by `walk_seed`.
pub fn generate_walk(params: &SynthParams, emotion: Emotion, walk_seed: u64) -> Result<Walk> {
    params.validate()?;
    let raw = raw_walk(params, params.profile(emotion), walk_seed);
    Ok(Walk {
        acc: SampleSeries::new(SensorKind::Accelerometer, raw.acc)?,
        gyro: SampleSeries::new(SensorKind::Gyroscope, raw.gyro)?,
        hr: HeartRateSeries::new(raw.hr, 0)?,
    })
}

/// A participant's whole session: rest, then each walk followed by rest.
pub struct Session {
    pub acc: SampleSeries,
    pub gyro: SampleSeries,
    pub hr: HeartRateSeries,
    pub segments: Vec<WalkSegment>,
}

fn rest_block<R: Rng>(rng: &mut R, params: &SynthParams, start_ms: i64, gyro: bool) -> Vec<Sample> {
    let n = (params.rest_s * params.sampling_rate_hz).round() as usize;
    let offset = if gyro { GYRO_OFFSET_MS } else { 0 };
    let noise = 0.02;
    (0..n)
        .map(|i| gait_sample(rng, start_ms + params.timestamp(i) + offset, 0.0, 1.0, 0.0, noise))
        .collect()
}

/// Builds one participant's session. The walk order is happy, neutral, sad.
pub fn generate_session(params: &SynthParams, participant_seed: u64) -> Result<Session> {
    params.validate()?;
    let step_ms = params.timestamp(1).max(1);
    let rest_ms = params.timestamp((params.rest_s * params.sampling_rate_hz).round() as usize);
    let mut rest_rng = seed::rng(seed::derive(participant_seed, &[u64::MAX]));
    let mut acc = Vec::new();
    let mut gyro = Vec::new();
    let mut hr = Vec::new();
    let mut segments = Vec::new();
    let mut clock = SESSION_START_MS;

    let mut rest = |clock: i64, acc: &mut Vec<Sample>, gyro: &mut Vec<Sample>, hr: &mut Vec<HeartRateSample>| {
        acc.extend(rest_block(&mut rest_rng, params, clock, false));
        gyro.extend(rest_block(&mut rest_rng, params, clock, true));
        let from = hr.last().map_or(clock, |h: &HeartRateSample| h.timestamp_ms + 1000);
        let mut t = from;
        while t < clock + rest_ms {
            hr.push(HeartRateSample {
                timestamp_ms: t,
                bpm: params.neutral.hr_mean,
            });
            t += 1000;
        }
        clock + rest_ms
    };

    clock = rest(clock, &mut acc, &mut gyro, &mut hr);
    for emotion in [Emotion::Happy, Emotion::Neutral, Emotion::Sad] {
        let walk = raw_walk(params, params.profile(emotion), seed::derive(participant_seed, &[emotion.index() as u64]));
        let start = clock;
        let end = start + walk.acc[walk.acc.len() - 1].timestamp_ms;
        segments.push(WalkSegment {
            emotion,
            start_ms: start,
            end_ms: end,
        });
        let shift = |mut s: Sample| {
            s.timestamp_ms += start;
            s
        };
        acc.extend(walk.acc.into_iter().map(shift));
        gyro.extend(walk.gyro.into_iter().map(shift));
        let hr_floor = hr.last().map_or(i64::MIN, |h| h.timestamp_ms);
        hr.extend(
            walk.hr
                .into_iter()
                .map(|mut h| {
                    h.timestamp_ms += start;
                    h
                })
                .filter(|h| h.timestamp_ms > hr_floor),
        );
        clock = rest(end + step_ms, &mut acc, &mut gyro, &mut hr);
    }
    Ok(Session {
        acc: SampleSeries::new(SensorKind::Accelerometer, acc)?,
        gyro: SampleSeries::new(SensorKind::Gyroscope, gyro)?,
        hr: HeartRateSeries::new(hr, 0)?,
        segments,
    })
}

pub fn participant_id(i: usize) -> String {
    format!("S{:02}", i + 1)
}

fn write_file(path: &Path, write: impl FnOnce(fs::File) -> Result<()>) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write(f)
}

/// Writes a study under `dir`: `manifest.json` plus `<id>/acc.csv`,
/// `<id>/gyro.csv` and `<id>/hr.csv` per participant. Participant `i` gets
/// condition `i % 3 + 1`. Returns the manifest path.
pub fn generate_study(params: &SynthParams, dir: &Path) -> Result<PathBuf> {
    params.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = (0..params.n_participants)
        .into_par_iter()
        .map(|i| {
            let id = participant_id(i);
            let session = generate_session(params, seed::derive(params.seed, &[i as u64]))?;
            let sub = dir.join(&id);
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            write_file(&sub.join("acc.csv"), |f| session.acc.write_csv(f))?;
            write_file(&sub.join("gyro.csv"), |f| session.gyro.write_csv(f))?;
            write_file(&sub.join("hr.csv"), |f| session.hr.write_csv(f))?;
            Ok(ParticipantEntry {
                acc: PathBuf::from(&id).join("acc.csv"),
                gyro: PathBuf::from(&id).join("gyro.csv"),
                hr: PathBuf::from(&id).join("hr.csv"),
                condition: Condition::new((i % 3 + 1) as u8)?,
                segments: session.segments,
                id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = StudyManifest { participants: entries };
    manifest.validate()?;
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
