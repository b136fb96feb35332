//! Behavioral statistics: paired t-test, Wilcoxon signed-rank test (normal
//! approximation) and one-way between-subjects ANOVA, plus the PANAS and
//! heart-rate summary inputs they run on.
//!
//! Distribution tails come from `statrs`, whose Student-t and F CDFs are
//! regularized incomplete beta evaluations.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::ingest::{Condition, Emotion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedRank {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Differences left after dropping zeros.
    pub n: usize,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub p_value: f64,
}

fn check_paired(pre: &[f64], post: &[f64]) -> Result<Vec<f64>> {
    if pre.len() != post.len() {
        return Err(Error::InvalidData(format!(
            "paired sample lengths differ: {} vs {}",
            pre.len(),
            post.len()
        )));
    }
    if pre.len() < 2 {
        return Err(Error::InvalidData("paired sample needs n >= 2".into()));
    }
    if pre.iter().chain(post).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite observation".into()));
    }
    Ok(post.iter().zip(pre).map(|(b, a)| b - a).collect())
}

fn two_sided_normal(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * n.sf(z.abs())).min(1.0)
}

/// Two-tailed paired t-test on `d = post - pre` with the sample standard
/// deviation.
pub fn paired_t_test(pre: &[f64], post: &[f64]) -> Result<TTest> {
    let d = check_paired(pre, post)?;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let df = n - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(TTest {
        t,
        df,
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
    })
}

/// Wilcoxon signed-rank test with the tie-corrected normal approximation and
/// no continuity correction.
pub fn wilcoxon_signed_rank(pre: &[f64], post: &[f64]) -> Result<SignedRank> {
    let d: Vec<f64> = check_paired(pre, post)?.into_iter().filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::Degenerate("all differences are zero".into()));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && d[order[j + 1]].abs() == d[order[i]].abs() {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        w_plus += rank * order[i..=j].iter().filter(|&&k| d[k] > 0.0).count() as f64;
        i = j + 1;
    }
    let n = d.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Err(Error::Degenerate("signed-rank variance is zero".into()));
    }
    let z = (w_plus - mean) / var.sqrt();
    Ok(SignedRank {
        w_plus,
        n: d.len(),
        z,
        p_value: two_sided_normal(z),
    })
}

/// One-way between-subjects ANOVA.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::InvalidData("ANOVA needs at least two groups".into()));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::InvalidData("ANOVA group is empty".into()));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite observation".into()));
    }
    let k = groups.len() as f64;
    let n = groups.iter().map(Vec::len).sum::<usize>() as f64;
    if n <= k {
        return Err(Error::InvalidData(format!("ANOVA needs more than {k} observations, got {n}")));
    }
    let grand = groups.iter().flatten().sum::<f64>() / n;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let (df_between, df_within) = (k - 1.0, n - k);
    if ss_within <= 0.0 {
        return Err(Error::Degenerate(if ss_between <= 0.0 {
            "all observations are equal".into()
        } else {
            "zero within-group variance".into()
        }));
    }
    let f = (ss_between / df_between) / (ss_within / df_within);
    let dist = FisherSnedecor::new(df_between, df_within).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(Anova {
        f,
        df_between,
        df_within,
        p_value: dist.sf(f).clamp(f64::MIN_POSITIVE, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subscale {
    PositiveAffect,
    NegativeAffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanasRow {
    pub participant: String,
    pub condition: Condition,
    pub emotion: Emotion,
    pub phase: Phase,
    pub positive_affect: f64,
    pub negative_affect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartRateRow {
    pub participant: String,
    pub condition: Condition,
    pub emotion: Emotion,
    pub mean_bpm: f64,
}

fn read_rows<T: serde::de::DeserializeOwned, R: Read>(path: &Path, reader: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<T>() {
        rows.push(rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Reads `participant,condition,emotion,phase,positive_affect,negative_affect`.
pub fn read_panas_csv<R: Read>(path: &Path, reader: R) -> Result<Vec<PanasRow>> {
    let rows: Vec<PanasRow> = read_rows(path, reader)?;
    for r in &rows {
        for v in [r.positive_affect, r.negative_affect] {
            if !(10.0..=50.0).contains(&v) {
                return Err(Error::InvalidData(format!(
                    "{}: PANAS score {v} for {} outside 10..=50",
                    path.display(),
                    r.participant
                )));
            }
        }
    }
    Ok(rows)
}

pub fn parse_panas_csv(path: &Path) -> Result<Vec<PanasRow>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panas_csv(path, f)
}

/// Reads `participant,condition,emotion,mean_bpm`.
pub fn read_heart_rate_summary<R: Read>(path: &Path, reader: R) -> Result<Vec<HeartRateRow>> {
    let rows: Vec<HeartRateRow> = read_rows(path, reader)?;
    if let Some(r) = rows.iter().find(|r| !r.mean_bpm.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite bpm for {}", r.participant)));
    }
    Ok(rows)
}

pub fn parse_heart_rate_summary(path: &Path) -> Result<Vec<HeartRateRow>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_heart_rate_summary(path, f)
}

pub fn write_heart_rate_summary<W: std::io::Write>(writer: W, rows: &[HeartRateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("heart-rate summary", e))?;
    Ok(())
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

impl Descriptive {
    pub fn of(values: &[f64]) -> Descriptive {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n >= 2).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Descriptive { n, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanasComparison {
    pub condition: Condition,
    pub emotion: Emotion,
    pub subscale: Subscale,
    pub pre: Descriptive,
    pub post: Descriptive,
    pub paired_t: Option<TTest>,
    pub wilcoxon: Option<SignedRank>,
    /// Why a test is missing.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionHeartRate {
    pub emotion: Emotion,
    pub bpm: Descriptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartRateAnova {
    /// `None` pools every condition.
    pub condition: Option<Condition>,
    pub groups: Vec<EmotionHeartRate>,
    pub anova: Option<Anova>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema: u32,
    pub panas: Vec<PanasComparison>,
    pub heart_rate: Vec<HeartRateAnova>,
}

/// One participant's pre and post rows.
type PrePost<'a> = [Option<&'a PanasRow>; 2];

/// Pre versus post for every condition, emotion and subscale. Participants
/// lacking either phase are left out of that comparison.
pub fn panas_comparisons(rows: &[PanasRow]) -> Result<Vec<PanasComparison>> {
    let mut cells: BTreeMap<(Condition, Emotion), BTreeMap<&str, PrePost>> = BTreeMap::new();
    for r in rows {
        let slot = cells
            .entry((r.condition, r.emotion))
            .or_default()
            .entry(r.participant.as_str())
            .or_default();
        let i = usize::from(r.phase == Phase::Post);
        if slot[i].is_some() {
            return Err(Error::InvalidData(format!(
                "duplicate PANAS row for {} / {} / {:?}",
                r.participant, r.emotion, r.phase
            )));
        }
        slot[i] = Some(r);
    }
    let mut out = Vec::new();
    for ((condition, emotion), participants) in cells {
        let pairs: Vec<(&PanasRow, &PanasRow)> = participants
            .values()
            .filter_map(|[a, b]| Some(((*a)?, (*b)?)))
            .collect();
        for subscale in [Subscale::PositiveAffect, Subscale::NegativeAffect] {
            let score = |r: &PanasRow| match subscale {
                Subscale::PositiveAffect => r.positive_affect,
                Subscale::NegativeAffect => r.negative_affect,
            };
            let pre: Vec<f64> = pairs.iter().map(|p| score(p.0)).collect();
            let post: Vec<f64> = pairs.iter().map(|p| score(p.1)).collect();
            if pairs.is_empty() {
                continue;
            }
            let t = paired_t_test(&pre, &post);
            let w = wilcoxon_signed_rank(&pre, &post);
            let note = match (&t, &w) {
                (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
                _ => None,
            };
            out.push(PanasComparison {
                condition,
                emotion,
                subscale,
                pre: Descriptive::of(&pre),
                post: Descriptive::of(&post),
                paired_t: t.ok(),
                wilcoxon: w.ok(),
                note,
            });
        }
    }
    Ok(out)
}

fn hr_anova(condition: Option<Condition>, rows: &[&HeartRateRow]) -> HeartRateAnova {
    let groups: Vec<(Emotion, Vec<f64>)> = Emotion::ALL
        .iter()
        .map(|&e| (e, rows.iter().filter(|r| r.emotion == e).map(|r| r.mean_bpm).collect::<Vec<_>>()))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    let values: Vec<Vec<f64>> = groups.iter().map(|g| g.1.clone()).collect();
    let (anova, note) = match one_way_anova(&values) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    HeartRateAnova {
        condition,
        groups: groups
            .iter()
            .map(|(e, v)| EmotionHeartRate {
                emotion: *e,
                bpm: Descriptive::of(v),
            })
            .collect(),
        anova,
        note,
    }
}

/// Effect of emotion on heart rate, pooled over conditions and then per condition.
pub fn heart_rate_anovas(rows: &[HeartRateRow]) -> Vec<HeartRateAnova> {
    let all: Vec<&HeartRateRow> = rows.iter().collect();
    let mut out = vec![hr_anova(None, &all)];
    let mut conditions: Vec<Condition> = rows.iter().map(|r| r.condition).collect();
    conditions.sort();
    conditions.dedup();
    for c in conditions {
        let sub: Vec<&HeartRateRow> = rows.iter().filter(|r| r.condition == c).collect();
        out.push(hr_anova(Some(c), &sub));
    }
    out
}

pub fn stats_report(panas: &[PanasRow], heart_rate: &[HeartRateRow]) -> Result<StatsReport> {
    Ok(StatsReport {
        schema: 1,
        panas: panas_comparisons(panas)?,
        heart_rate: if heart_rate.is_empty() {
            Vec::new()
        } else {
            heart_rate_anovas(heart_rate)
        },
    })
}
