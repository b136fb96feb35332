//! End-to-end runs: ingest, windowing, features, per-user evaluation,
//! condition aggregation and report emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::importance::{importance_report, ImportanceReport};
use crate::eval::{
    aggregate_condition, block_cv, louo_cv, stratified_repeated_cv, ConditionReport, EvalConfig, Protocol,
    UserDataset, UserResult,
};
use crate::features::{extract_features, percentile_sorted, write_feature_csv, FeatureSet, FeatureVector};
use crate::ingest::{load_study, manifest_dir, Condition, Emotion, Exclusion, IngestSummary, StudyManifest};
use crate::models::{ModelKind, ModelSpec};
use crate::preprocess::{participant_windows, DroppedWindow, SegmentFailure};
use crate::stats::HeartRateRow;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    HappyVsSad,
    HappySadNeutral,
}

impl Task {
    pub fn emotions(self) -> &'static [Emotion] {
        match self {
            Task::HappyVsSad => &[Emotion::Happy, Emotion::Sad],
            Task::HappySadNeutral => &[Emotion::Happy, Emotion::Neutral, Emotion::Sad],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::HappyVsSad => "happy_vs_sad",
            Task::HappySadNeutral => "happy_sad_neutral",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "happy_vs_sad" => Ok(Task::HappyVsSad),
            "happy_sad_neutral" => Ok(Task::HappySadNeutral),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" => Ok(Protocol::Cv),
            "block_cv" => Ok(Protocol::BlockCv),
            "louo" => Ok(Protocol::Louo),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

fn default_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::default_for(ModelKind::Logreg),
        ModelSpec::default_for(ModelKind::Forest),
    ]
}

fn default_output() -> PathBuf {
    PathBuf::from("gaitmood-out")
}

/// One run. Relative paths resolve against the directory of the config file
/// when loaded with [`RunConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub feature_set: FeatureSet,
    #[serde(default)]
    pub task: Task,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    /// Candidate models; the majority baseline is always added.
    #[serde(default = "default_models")]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Restricts the run to these conditions.
    #[serde(default)]
    pub conditions: Option<Vec<Condition>>,
}

fn default_protocol() -> Protocol {
    Protocol::Cv
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            manifest: manifest.into(),
            feature_set: FeatureSet::default(),
            task: Task::default(),
            protocol: Protocol::Cv,
            models: default_models(),
            eval: EvalConfig::default(),
            output_dir: default_output(),
            conditions: None,
        }
    }

    /// Parses a JSON config and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)?;
        let base = manifest_dir(path);
        config.manifest = base.join(&config.manifest);
        config.output_dir = base.join(&config.output_dir);
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.eval.validate()?;
        if self.protocol == Protocol::BlockCv && self.task != Task::HappyVsSad {
            return Err(Error::Config(format!(
                "block_cv contrasts two emotions; task {} is not binary",
                self.task.as_str()
            )));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models requested".into()));
        }
        crate::eval::cv::model_lineup(&self.models)?;
        Ok(())
    }
}

/// Settings echoed into the report. Output location is left out so reports
/// from different directories compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub feature_set: FeatureSet,
    pub task: Task,
    pub protocol: Protocol,
    pub models: Vec<ModelSpec>,
    pub eval: EvalConfig,
    pub conditions: Option<Vec<Condition>>,
}

impl From<&RunConfig> for ConfigEcho {
    fn from(c: &RunConfig) -> Self {
        ConfigEcho {
            feature_set: c.feature_set,
            task: c.task,
            protocol: c.protocol,
            models: c.models.clone(),
            eval: c.eval,
            conditions: c.conditions.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUser {
    pub participant: String,
    pub condition: Condition,
    pub reason: String,
}

/// Feature vectors of every included participant, plus everything dropped
/// on the way.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub feature_set: FeatureSet,
    pub ingest: IngestSummary,
    /// One entry per participant with windows, in manifest order.
    pub participants: Vec<(String, Condition, Vec<FeatureVector>)>,
    pub dropped_windows: Vec<DroppedWindow>,
    pub failed_segments: Vec<SegmentFailure>,
    pub heart_rate: Vec<HeartRateRow>,
}

impl Extraction {
    pub fn vectors(&self) -> impl Iterator<Item = &FeatureVector> {
        self.participants.iter().flat_map(|p| p.2.iter())
    }

    pub fn excluded(&self) -> &[Exclusion] {
        &self.ingest.excluded
    }
}

/// Loads the manifest and turns every segment into feature vectors.
pub fn extract(manifest_path: &Path, feature_set: FeatureSet, conditions: Option<&[Condition]>) -> Result<Extraction> {
    let mut manifest = StudyManifest::load(manifest_path)?;
    if let Some(keep) = conditions {
        manifest.participants.retain(|p| keep.contains(&p.condition));
    }
    let study = load_study(&manifest, &manifest_dir(manifest_path));
    let per_participant: Vec<_> = study
        .participants
        .par_iter()
        .map(|p| {
            let windows = participant_windows(p);
            let mut dropped = windows.dropped;
            let mut vectors = Vec::with_capacity(windows.bundles.len());
            let mut hr: Vec<HeartRateRow> = Vec::new();
            for e in Emotion::ALL {
                let bpm: Vec<f64> = windows.bundles.iter().filter(|b| b.emotion == e).map(|b| b.hr_bpm).collect();
                if !bpm.is_empty() {
                    hr.push(HeartRateRow {
                        participant: p.id.clone(),
                        condition: p.condition,
                        emotion: e,
                        mean_bpm: bpm.iter().sum::<f64>() / bpm.len() as f64,
                    });
                }
            }
            for b in &windows.bundles {
                match extract_features(b, feature_set) {
                    Ok(v) => vectors.push(v),
                    Err(e) => dropped.push(DroppedWindow {
                        participant: b.participant_id.clone(),
                        emotion: b.emotion,
                        window_index: b.window_index,
                        reason: e.to_string(),
                    }),
                }
            }
            (p.id.clone(), p.condition, vectors, dropped, windows.failed_segments, hr)
        })
        .collect();

    let mut out = Extraction {
        feature_set,
        ingest: study.summary(),
        participants: Vec::new(),
        dropped_windows: Vec::new(),
        failed_segments: Vec::new(),
        heart_rate: Vec::new(),
    };
    for (id, condition, vectors, dropped, failed, hr) in per_participant {
        for f in &failed {
            log::warn!("participant {id}: {} segment skipped: {}", f.emotion, f.reason);
        }
        if !dropped.is_empty() {
            log::info!("participant {id}: {} windows dropped", dropped.len());
        }
        out.dropped_windows.extend(dropped);
        out.failed_segments.extend(failed);
        out.heart_rate.extend(hr);
        if !vectors.is_empty() {
            out.participants.push((id, condition, vectors));
        }
    }
    Ok(out)
}

/// Per-user design matrices for `task`, and the participants that have none.
pub fn datasets(extraction: &Extraction, task: Task) -> (Vec<UserDataset>, Vec<SkippedUser>) {
    let mut users = Vec::new();
    let mut skipped = Vec::new();
    for (id, condition, vectors) in &extraction.participants {
        match UserDataset::from_vectors(vectors, task.emotions()) {
            Ok(d) => users.push(d),
            Err(e) => skipped.push(SkippedUser {
                participant: id.clone(),
                condition: *condition,
                reason: e.to_string(),
            }),
        }
    }
    (users, skipped)
}

/// Runs the configured protocol. Users the protocol cannot score are skipped
/// with a reason instead of failing the run.
pub fn evaluate(
    users: &[UserDataset],
    protocol: Protocol,
    models: &[ModelSpec],
    config: &EvalConfig,
) -> Result<(Vec<UserResult>, Vec<SkippedUser>)> {
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    match protocol {
        Protocol::Cv | Protocol::BlockCv => {
            let outcomes: Vec<Result<UserResult>> = users
                .par_iter()
                .map(|u| match protocol {
                    Protocol::Cv => stratified_repeated_cv(u, models, config),
                    _ => block_cv(u, models, config),
                })
                .collect();
            for (u, outcome) in users.iter().zip(outcomes) {
                match outcome {
                    Ok(r) => results.push(r),
                    Err(e @ (Error::Protocol(_) | Error::DegenerateTraining(_))) => {
                        log::warn!("skipping participant {}: {e}", u.participant_id);
                        skipped.push(SkippedUser {
                            participant: u.participant_id.clone(),
                            condition: u.condition,
                            reason: e.to_string(),
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Protocol::Louo => {
            let mut conditions: Vec<Condition> = users.iter().map(|u| u.condition).collect();
            conditions.sort();
            conditions.dedup();
            for c in conditions {
                let group: Vec<UserDataset> = users.iter().filter(|u| u.condition == c).cloned().collect();
                match louo_cv(&group, models, config) {
                    Ok(r) => results.extend(r),
                    Err(e @ Error::Protocol(_)) => {
                        log::warn!("skipping condition {c}: {e}");
                        skipped.extend(group.iter().map(|u| SkippedUser {
                            participant: u.participant_id.clone(),
                            condition: c,
                            reason: e.to_string(),
                        }));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok((results, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionImportance {
    pub condition: Condition,
    pub report: ImportanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: ConfigEcho,
    pub ingest: IngestSummary,
    pub dropped_windows: Vec<DroppedWindow>,
    pub failed_segments: Vec<SegmentFailure>,
    pub skipped_users: Vec<SkippedUser>,
    pub users: Vec<UserResult>,
    pub conditions: Vec<ConditionReport>,
    /// Forest importances per condition, for within-user protocols.
    pub importance: Vec<ConditionImportance>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn present_conditions(users: &[UserResult]) -> Vec<Condition> {
    let mut c: Vec<Condition> = users.iter().map(|u| u.condition).collect();
    c.sort();
    c.dedup();
    c
}

/// Condition aggregates and, when a forest was trained within users,
/// importance distributions.
pub fn summarize(
    users: &[UserResult],
    feature_set: FeatureSet,
    protocol: Protocol,
    config: &EvalConfig,
) -> Result<(Vec<ConditionReport>, Vec<ConditionImportance>)> {
    let conditions = present_conditions(users);
    let reports = conditions
        .iter()
        .map(|&c| aggregate_condition(users, c, feature_set, config))
        .collect::<Result<Vec<_>>>()?;
    let has_forest = users.iter().all(|u| u.model(ModelKind::Forest).is_some());
    let mut importance = Vec::new();
    if protocol != Protocol::Louo && has_forest && !users.is_empty() {
        let names = feature_set.names();
        for &c in &conditions {
            let members: Vec<UserResult> = users.iter().filter(|u| u.condition == c).cloned().collect();
            importance.push(ConditionImportance {
                condition: c,
                report: importance_report(&members, ModelKind::Forest, &names)?,
            });
        }
    }
    Ok((reports, importance))
}

/// Runs every stage and returns the report. Nothing is written.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let extraction = extract(&config.manifest, config.feature_set, config.conditions.as_deref())?;
    let (datasets, mut skipped) = datasets(&extraction, config.task);
    let (users, more_skipped) = evaluate(&datasets, config.protocol, &config.models, &config.eval)?;
    skipped.extend(more_skipped);
    if users.is_empty() {
        return Err(Error::InvalidData("no participant could be evaluated".into()));
    }
    let (conditions, importance) = summarize(&users, config.feature_set, config.protocol, &config.eval)?;
    Ok(RunReport {
        schema: REPORT_SCHEMA,
        config: ConfigEcho::from(config),
        ingest: extraction.ingest,
        dropped_windows: extraction.dropped_windows,
        failed_segments: extraction.failed_segments,
        skipped_users: skipped,
        users,
        conditions,
        importance,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-user scores, the data behind per-condition accuracy boxplots.
pub fn write_user_scores(path: &Path, users: &[UserResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "condition",
        "participant",
        "protocol",
        "model",
        "accuracy_mean",
        "accuracy_std",
        "macro_f1_mean",
        "macro_f1_std",
        "roc_auc_mean",
        "roc_auc_std",
        "user_lift",
    ])?;
    for u in users {
        for m in &u.models {
            w.write_record([
                u.condition.to_string(),
                u.participant_id.clone(),
                u.protocol.as_str().to_string(),
                m.model.to_string(),
                m.accuracy.mean.to_string(),
                m.accuracy.std.to_string(),
                m.macro_f1.mean.to_string(),
                m.macro_f1.std.to_string(),
                opt(m.roc_auc.map(|a| a.mean)),
                opt(m.roc_auc.map(|a| a.std)),
                opt(m.user_lift),
            ])?;
        }
    }
    finish(w, path)
}

/// Five-number summaries of per-user accuracy for each condition and model.
pub fn write_accuracy_boxplots(path: &Path, users: &[UserResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["condition", "model", "n_users", "min", "q25", "median", "q75", "max"])?;
    for c in present_conditions(users) {
        let members: Vec<&UserResult> = users.iter().filter(|u| u.condition == c).collect();
        let kinds: Vec<ModelKind> = members[0].models.iter().map(|m| m.model).collect();
        for k in kinds {
            let mut acc: Vec<f64> = members.iter().filter_map(|u| u.model(k)).map(|m| m.accuracy.mean).collect();
            acc.sort_by(f64::total_cmp);
            w.write_record([
                c.to_string(),
                k.to_string(),
                acc.len().to_string(),
                acc[0].to_string(),
                percentile_sorted(&acc, 0.25).to_string(),
                percentile_sorted(&acc, 0.5).to_string(),
                percentile_sorted(&acc, 0.75).to_string(),
                acc[acc.len() - 1].to_string(),
            ])?;
        }
    }
    finish(w, path)
}

pub fn write_lifts(path: &Path, conditions: &[ConditionReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["condition", "model", "participant", "user_lift", "mean_user_lift", "p_value"])?;
    for c in conditions {
        for m in &c.models {
            for l in &m.user_lifts {
                w.write_record([
                    c.condition.to_string(),
                    m.model.to_string(),
                    l.participant_id.clone(),
                    l.lift.to_string(),
                    opt(m.mean_user_lift),
                    opt(m.lift_p_value),
                ])?;
            }
        }
    }
    finish(w, path)
}

pub fn write_importance(path: &Path, importance: &[ConditionImportance]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "condition", "rank", "feature", "min", "q25", "median", "q75", "max", "plotted",
    ])?;
    for ci in importance {
        for (rank, f) in ci.report.features.iter().enumerate() {
            w.write_record([
                ci.condition.to_string(),
                (rank + 1).to_string(),
                f.feature.clone(),
                f.min.to_string(),
                f.q25.to_string(),
                f.median.to_string(),
                f.q75.to_string(),
                f.max.to_string(),
                f.plotted.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

pub fn write_features(path: &Path, extraction: &Extraction) -> Result<()> {
    let rows: Vec<FeatureVector> = extraction.vectors().cloned().collect();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_csv(std::io::BufWriter::new(f), extraction.feature_set, &rows)
}

pub const REPORT_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "run_metadata.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub threads: usize,
}

impl RunMetadata {
    pub fn now_ms() -> u128 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0)
    }
}

/// Writes the report JSON and the plot CSVs into `dir`. Returns written paths.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join(REPORT_FILE);
    write_text(&path, &report.to_json()?)?;
    written.push(path);
    let path = dir.join("user_scores.csv");
    write_user_scores(&path, &report.users)?;
    written.push(path);
    let path = dir.join("accuracy_boxplot.csv");
    write_accuracy_boxplots(&path, &report.users)?;
    written.push(path);
    let path = dir.join("user_lifts.csv");
    write_lifts(&path, &report.conditions)?;
    written.push(path);
    if !report.importance.is_empty() {
        let path = dir.join("importance_distribution.csv");
        write_importance(&path, &report.importance)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_metadata(dir: &Path, meta: &RunMetadata) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(METADATA_FILE);
    write_text(&path, &serde_json::to_string_pretty(meta)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ForestParams;
    use crate::synth::{generate_study, SynthParams};

    fn small_study(dir: &Path) -> PathBuf {
        let mut params = SynthParams::separable();
        params.n_participants = 3;
        params.duration_s = 25.0;
        params.rest_s = 3.0;
        generate_study(&params, dir).unwrap()
    }

    fn quick_config(manifest: PathBuf) -> RunConfig {
        let mut config = RunConfig::new(manifest);
        config.eval.repeats = 2;
        config.eval.permutations = 1000;
        config.models = vec![
            ModelSpec::default_for(ModelKind::Logreg),
            ModelSpec::Forest(ForestParams {
                n_trees: 10,
                ..ForestParams::default()
            }),
        ];
        config
    }

    #[test]
    fn block_cv_requires_binary_task() {
        let mut c = RunConfig::new("m.json");
        c.protocol = Protocol::BlockCv;
        c.task = Task::HappySadNeutral;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.task = Task::HappyVsSad;
        c.validate().unwrap();
    }

    #[test]
    fn config_paths_resolve_against_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"manifest": "data/manifest.json", "protocol": "louo", "models": [{"kind": "forest", "n_trees": 5}]}"#).unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.manifest, dir.path().join("data/manifest.json"));
        assert_eq!(c.protocol, Protocol::Louo);
        assert_eq!(c.models, vec![ModelSpec::Forest(ForestParams { n_trees: 5, ..ForestParams::default() })]);
        fs::write(&path, r#"{"manifest": "m.json", "bogus": 1}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn synthetic_run_reports_every_user() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = small_study(dir.path());
        let report = run_pipeline(&quick_config(manifest)).unwrap();
        assert_eq!(report.schema, 1);
        assert_eq!(report.users.len(), 3);
        assert_eq!(report.conditions.len(), 3);
        assert_eq!(report.importance.len(), 3);
        assert!(report.skipped_users.is_empty());
        let out = dir.path().join("out");
        let files = write_report(&out, &report).unwrap();
        assert_eq!(files.len(), 5);
        let text = fs::read_to_string(out.join(REPORT_FILE)).unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn louo_and_extraction() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = small_study(dir.path());
        let ex = extract(&manifest, FeatureSet::AccOnly, None).unwrap();
        assert!(ex.vectors().all(|v| v.values.len() == 55));
        assert_eq!(ex.heart_rate.len(), 9);
        let (mut users, _) = datasets(&ex, Task::HappyVsSad);
        for u in users.iter_mut() {
            u.condition = Condition::new(1).unwrap();
        }
        let config = quick_config(manifest.clone());
        let (results, skipped) = evaluate(&users, Protocol::Louo, &config.models, &config.eval).unwrap();
        assert_eq!(results.len(), 3);
        assert!(skipped.is_empty());
        assert!(results.iter().all(|r| r.protocol == Protocol::Louo));
        // a lone user per condition cannot be held out
        let (results, skipped) = evaluate(&datasets(&ex, Task::HappyVsSad).0, Protocol::Louo, &config.models, &config.eval).unwrap();
        assert!(results.is_empty());
        assert_eq!(skipped.len(), 3);
    }
}
