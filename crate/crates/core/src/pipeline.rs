//! End-to-end run driven by one TOML configuration.
//!
//! ```toml
//! output_dir = "out"
//!
//! [data.planted]        # or [data.csv] / [data.synth]
//! n = 22449
//! p = 34
//!
//! [split]
//! n_train = 20000
//!
//! [boost]
//! max_trees = 3000
//!
//! [ga]
//! seed = 7
//! ```
//!
//! [`run_pipeline`] writes every artifact into the output directory together
//! with `manifest.json`, which lists each file with its SHA-256 digest. The
//! artifacts depend only on the configuration; the manifest additionally
//! records wall-clock timings.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archetype::{
    commonality_importance, commonality_stability, nearest_match, reverse_coding_importance, CommonalityReport,
};
use crate::boosting::{confusion, fit_boost_cv, in_sample_importance, BoostConfig, BoostModel, ConfusionTable};
use crate::clustering::{agnes_average_linkage, cut_clusters, gower_binary_dissimilarity, Cut, Dendrogram};
use crate::dataset::{load_csv, load_csv_with_response, split_train_test, synthesize, DataSet, SynthSpec};
use crate::error::{Error, Result};
use crate::genetic::{evolve, GaConfig, GaTrace};
use crate::logistic::{fit_logistic, FitStatus, LogisticModel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::report::{self, ImportanceTable};
use crate::RiskModel;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".rarerisk.lock";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub logistic: LogisticConfig,
    #[serde(default)]
    pub boost: BoostConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Exactly one of the three sources must be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<PlantedSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    /// Response column; the last column when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

/// Shorthand for a [`SynthSpec`] whose first `n_signal` predictors share one
/// log-odds effect and all predictors share one on-rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::p")]
    pub p: usize,
    #[serde(default = "defaults::n_signal")]
    pub n_signal: usize,
    #[serde(default = "defaults::effect")]
    pub effect: f64,
    #[serde(default = "defaults::on_rate")]
    pub on_rate: f64,
    #[serde(default = "defaults::base_rate")]
    pub base_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n: defaults::n(),
            p: defaults::p(),
            n_signal: defaults::n_signal(),
            effect: defaults::effect(),
            on_rate: defaults::on_rate(),
            base_rate: defaults::base_rate(),
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn to_synth(&self) -> SynthSpec {
        SynthSpec {
            base_rate: self.base_rate,
            ..SynthSpec::planted(self.n, self.p, self.n_signal.min(self.p), self.effect, self.on_rate, self.seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "defaults::n_train")]
    pub n_train: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            n_train: defaults::n_train(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Rows with risk strictly above this are forecast positive.
    #[serde(default = "defaults::threshold")]
    pub threshold: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            threshold: defaults::threshold(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Tolerance for calling a predictor Always On / Always Off.
    #[serde(default)]
    pub epsilon: f64,
    /// Extra GA seeds for the commonality stability report.
    #[serde(default)]
    pub stability_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_height: Option<f64>,
}

impl ClusteringConfig {
    pub fn cut(&self) -> Option<Cut> {
        match (self.cut_k, self.cut_height) {
            (Some(k), _) => Some(Cut::K(k)),
            (None, Some(h)) => Some(Cut::Height(h)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default = "defaults::bins")]
    pub bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { bins: defaults::bins() }
    }
}

mod defaults {
    pub fn n() -> usize {
        22_449
    }
    pub fn p() -> usize {
        34
    }
    pub fn n_signal() -> usize {
        10
    }
    pub fn effect() -> f64 {
        0.5
    }
    pub fn on_rate() -> f64 {
        0.5
    }
    pub fn base_rate() -> f64 {
        0.05
    }
    pub fn n_train() -> usize {
        20_000
    }
    pub fn max_iter() -> usize {
        super::DEFAULT_MAX_ITER
    }
    pub fn tol() -> f64 {
        super::DEFAULT_TOL
    }
    pub fn threshold() -> f64 {
        0.5
    }
    pub fn bins() -> usize {
        20
    }
}

impl PipelineConfig {
    /// A desk-scale run on planted synthetic data with every other setting
    /// at its default.
    pub fn planted(spec: PlantedSpec) -> Self {
        PipelineConfig {
            data: DataConfig {
                planted: Some(spec),
                ..DataConfig::default()
            },
            split: SplitConfig::default(),
            logistic: LogisticConfig::default(),
            boost: BoostConfig::default(),
            evaluation: EvaluationConfig::default(),
            ga: GaConfig::default(),
            analysis: AnalysisConfig::default(),
            clustering: ClusteringConfig::default(),
            report: ReportConfig::default(),
            output_dir: None,
        }
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        Self::from_toml_with_overrides::<&str>(s, &[])
    }

    /// Parses `s`, then applies `key.path=value` overrides such as
    /// `boost.max_trees=500` before validation.
    pub fn from_toml_with_overrides<S: AsRef<str>>(s: &str, overrides: &[S]) -> Result<Self> {
        let mut table: toml::Table = s.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o.as_ref())?;
        }
        let cfg: PipelineConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative CSV path is taken relative to the file.
    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_with_overrides(&text, overrides)?;
        if let (Some(csv), Some(dir)) = (cfg.data.csv.as_mut(), path.parent()) {
            if csv.path.is_relative() {
                csv.path = dir.join(&csv.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let sources = d.csv.is_some() as u8 + d.synth.is_some() as u8 + d.planted.is_some() as u8;
        if sources != 1 {
            return Err(Error::Config(format!(
                "data: exactly one of csv, synth or planted is required, found {sources}"
            )));
        }
        if let Some(s) = &d.synth {
            s.validate().map_err(|e| Error::Config(format!("data.synth: {e}")))?;
        }
        if let Some(s) = &d.planted {
            s.to_synth().validate().map_err(|e| Error::Config(format!("data.planted: {e}")))?;
        }
        if self.logistic.max_iter == 0 || !(self.logistic.tol > 0.0) {
            return Err(Error::Config("logistic: max_iter and tol must be positive".into()));
        }
        self.boost.validate()?;
        self.ga.validate()?;
        if !(0.0..=1.0).contains(&self.evaluation.threshold) {
            return Err(Error::Config("evaluation: threshold outside [0, 1]".into()));
        }
        if !(0.0..0.5).contains(&self.analysis.epsilon) {
            return Err(Error::Config("analysis: epsilon outside [0, 0.5)".into()));
        }
        if self.clustering.cut_k.is_some() && self.clustering.cut_height.is_some() {
            return Err(Error::Config("clustering: give cut_k or cut_height, not both".into()));
        }
        if self.report.bins == 0 {
            return Err(Error::Config("report: bins must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sets `key.path=value` in a TOML table. The value is read as a TOML literal
/// (`500`, `0.2`, `true`, `[1, 2]`, `"text"`) and otherwise taken as a bare
/// string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {k:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Loads or synthesizes the dataset a [`DataConfig`] describes.
pub fn load_data(d: &DataConfig) -> Result<DataSet> {
    match (&d.csv, &d.synth, &d.planted) {
        (Some(c), None, None) => match &c.response {
            Some(r) => load_csv_with_response(&c.path, r),
            None => load_csv(&c.path, None),
        },
        (None, Some(s), None) => synthesize(s),
        (None, None, Some(p)) => synthesize(&p.to_synth()),
        _ => Err(Error::Config("data: exactly one source is required".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into an output directory and records each as an [`Artifact`].
#[derive(Debug)]
pub struct ArtifactSink {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ArtifactSink { dir, artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, kind: &str, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let bytes = contents.as_ref();
        let path = self.dir.join(name);
        report::write_file(&path, bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            kind: kind.into(),
            path: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    pub fn into_artifacts(self) -> Vec<Artifact> {
        self.artifacts
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::invalid(format!(
                "output directory {} is in use ({} exists; remove it if no run is active)",
                dir.display(),
                LOCK_FILE
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: Option<u64>,
    pub split: u64,
    pub boost: u64,
    pub ga: u64,
    pub stability: Vec<u64>,
}

impl Seeds {
    pub fn of(cfg: &PipelineConfig) -> Self {
        Seeds {
            data: cfg
                .data
                .synth
                .as_ref()
                .map(|s| s.seed)
                .or(cfg.data.planted.as_ref().map(|p| p.seed)),
            split: cfg.split.seed,
            boost: cfg.boost.seed,
            ga: cfg.ga.seed,
            stability: cfg.analysis.stability_seeds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Headline numbers of a run. Contains no timing information.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub train_base_rate: Option<f64>,
    pub logistic_status: Option<FitStatus>,
    pub logistic_max_fitted: Option<f64>,
    pub logistic_test_above_threshold: Option<f64>,
    pub boost_trees_used: Option<usize>,
    pub boost_test_above_threshold: Option<f64>,
    pub confusion: Option<ConfusionTable>,
    pub ga_best_fitness: Option<f64>,
    pub ga_final_mean_fitness: Option<f64>,
    pub universal_predictors: Option<usize>,
    pub benchmark_mean: Option<f64>,
    pub nearest_match_max: Option<usize>,
    pub agglomerative_coefficient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config: PipelineConfig,
    pub seeds: Seeds,
    pub started_unix: u64,
    pub timings: Vec<StageTiming>,
    pub artifacts: Vec<Artifact>,
    pub summary: RunSummary,
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn artifacts_of_kind(&self, kind: &str) -> Vec<&Artifact> {
        self.artifacts.iter().filter(|a| a.kind == kind).collect()
    }

    /// Artifacts whose file is missing or no longer matches its digest.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|a| match std::fs::read(dir.join(&a.path)) {
                Ok(bytes) => sha256_hex(&bytes) != a.sha256,
                Err(_) => true,
            })
            .map(|a| a.path.clone())
            .collect()
    }
}

/// Everything a completed run produced, kept in memory for callers.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub manifest: RunManifest,
    pub model: BoostModel,
    pub logistic: LogisticModel,
    pub trace: GaTrace,
    pub commonality: CommonalityReport,
    pub importance: ImportanceTable,
    pub dendrogram: Dendrogram,
}

struct Run {
    sink: ArtifactSink,
    timings: Vec<StageTiming>,
    summary: RunSummary,
}

impl Run {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        let start = Instant::now();
        let out = f(self).map_err(|e| e.in_stage(name));
        self.timings.push(StageTiming {
            stage: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn share_above(risk: &[f64], threshold: f64) -> f64 {
    risk.iter().filter(|&&r| r > threshold).count() as f64 / risk.len() as f64
}

/// Runs every stage into `out_dir` (or the config's `output_dir`).
///
/// On failure the manifest is still written, flagged partial and naming the
/// failed stage, and the stage error is returned.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: Option<&Path>) -> Result<RunOutputs> {
    cfg.validate()?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    let _lock = OutputLock::acquire(&dir)?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut run = Run {
        sink: ArtifactSink::new(&dir)?,
        timings: Vec::new(),
        summary: RunSummary::default(),
    };
    let result = stages(cfg, &mut run);
    let (partial, failed_stage, error) = match &result {
        Ok(_) => (false, None, None),
        Err(e) => (true, e.stage().map(String::from), Some(e.to_string())),
    };
    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seeds: Seeds::of(cfg),
        started_unix,
        timings: run.timings,
        artifacts: run.sink.artifacts().to_vec(),
        summary: run.summary,
        partial,
        failed_stage,
        error,
    };
    let path = dir.join(MANIFEST_FILE);
    report::write_file(&path, serde_json::to_string_pretty(&manifest)?)?;
    let s = result?;
    Ok(RunOutputs {
        manifest,
        model: s.model,
        logistic: s.logistic,
        trace: s.trace,
        commonality: s.commonality,
        importance: s.importance,
        dendrogram: s.dendrogram,
    })
}

struct StageOutputs {
    model: BoostModel,
    logistic: LogisticModel,
    trace: GaTrace,
    commonality: CommonalityReport,
    importance: ImportanceTable,
    dendrogram: Dendrogram,
}

fn stages(cfg: &PipelineConfig, run: &mut Run) -> Result<StageOutputs> {
    let data = run.stage("load", |_| load_data(&cfg.data))?;
    let (train, test) = run.stage("split", |r| {
        let (train, test) = split_train_test(&data, cfg.split.n_train, cfg.split.seed)?;
        let mut buf = Vec::new();
        train.write_csv(&mut buf)?;
        r.sink.write("train_data", "train.csv", &buf)?;
        buf.clear();
        test.write_csv(&mut buf)?;
        r.sink.write("test_data", "test.csv", &buf)?;
        r.summary.n = Some(data.n());
        r.summary.p = Some(data.p());
        r.summary.n_train = Some(train.n());
        r.summary.n_test = Some(test.n());
        r.summary.train_base_rate = Some(crate::dataset::base_rate(&train));
        Ok((train, test))
    })?;
    let names = train.schema().names().to_vec();
    let threshold = cfg.evaluation.threshold;
    let bins = cfg.report.bins;

    let logistic = run.stage("baseline", |r| {
        let m = fit_logistic(&train, cfg.logistic.max_iter, cfg.logistic.tol)?;
        let fitted = m.predict(train.x())?;
        let test_risk = m.predict(test.x())?;
        r.sink.write("baseline_model", "baseline_model.json", serde_json::to_string_pretty(&m)?)?;
        r.sink.write(
            "histogram",
            "histogram_logistic.svg",
            report::histogram_svg(&test_risk, bins, "Risk Probabilities from Logistic Regression")?,
        )?;
        r.summary.logistic_status = Some(m.status);
        r.summary.logistic_max_fitted = Some(fitted.iter().copied().fold(0.0, f64::max));
        r.summary.logistic_test_above_threshold = Some(share_above(&test_risk, threshold));
        Ok(m)
    })?;

    let model = run.stage("boost", |r| {
        let mut m = fit_boost_cv(&train, &cfg.boost)?;
        m.truncate_to_used();
        r.sink.write("boost_model", "model.json", m.to_json()?)?;
        let mut curve = String::from("trees,cv_deviance\n");
        for (k, d) in m.cv_curve.iter().enumerate() {
            curve.push_str(&format!("{},{}\n", k + 1, d));
        }
        r.sink.write("cv_curve", "cv_curve.csv", curve)?;
        let test_risk = m.predict(test.x())?;
        r.sink.write(
            "histogram",
            "histogram_boosting.svg",
            report::histogram_svg(&test_risk, bins, "Risk Probabilities from Stochastic Gradient Boosting")?,
        )?;
        r.summary.boost_trees_used = Some(m.n_trees_used);
        r.summary.boost_test_above_threshold = Some(share_above(&test_risk, threshold));
        Ok(m)
    })?;

    run.stage("confusion", |r| {
        let t = confusion(&model, &test, threshold)?;
        r.sink.write("confusion_table", "confusion.csv", report::confusion_csv(&t))?;
        r.sink.write("confusion_text", "confusion.txt", report::confusion_text(&t))?;
        r.summary.confusion = Some(t);
        Ok(())
    })?;

    let trace = run.stage("evolve", |r| {
        let trace = evolve(|g| model.risk(g), model.n_predictors(), &cfg.ga)?;
        let pop = &trace.final_population;
        r.sink.write("ga_trace", "ga_trace.csv", report::ga_trace_csv(&trace))?;
        r.sink.write("population", "population.csv", report::population_csv(pop, &names)?)?;
        r.sink.write(
            "histogram",
            "histogram_ga.svg",
            report::histogram_svg(pop.fitness(), bins, "Risk Probabilities from the Genetic Algorithm")?,
        )?;
        r.summary.ga_best_fitness = trace.generations.last().map(|g| g.best);
        r.summary.ga_final_mean_fitness = trace.generations.last().map(|g| g.mean);
        Ok(trace)
    })?;

    let (commonality, importance) = run.stage("analyze", |r| {
        let pop = &trace.final_population;
        let c = commonality_importance(pop, cfg.analysis.epsilon)?;
        let rc = reverse_coding_importance(&model, pop, &c)?;
        let table = ImportanceTable::build(&names, &in_sample_importance(&model), &c, &rc)?;
        r.sink.write("importance_table", "importance.csv", table.to_csv()?)?;
        r.sink.write("importance_json", "importance.json", table.to_json()?)?;
        r.sink.write("importance_text", "importance.txt", table.to_text())?;
        let nm = nearest_match(pop, &train)?;
        r.sink.write("nearest_match", "nearest_match.json", serde_json::to_string_pretty(&nm)?)?;
        if !cfg.analysis.stability_seeds.is_empty() {
            let mut seeds = vec![cfg.ga.seed];
            let mut reports = vec![c.clone()];
            for &s in &cfg.analysis.stability_seeds {
                let ga = GaConfig { seed: s, ..cfg.ga.clone() };
                let t = evolve(|g| model.risk(g), model.n_predictors(), &ga)?;
                reports.push(commonality_importance(&t.final_population, cfg.analysis.epsilon)?);
                seeds.push(s);
            }
            let st = commonality_stability(seeds, &reports)?;
            r.sink.write("commonality_stability", "stability.json", serde_json::to_string_pretty(&st)?)?;
        }
        r.summary.universal_predictors = Some(c.universal().len());
        r.summary.benchmark_mean = Some(rc.benchmark_mean);
        r.summary.nearest_match_max = Some(nm.max);
        Ok((c, table))
    })?;

    let dendrogram = run.stage("cluster", |r| {
        let d = gower_binary_dissimilarity(&trace.final_population)?.with_labels(names.clone())?;
        let dg = agnes_average_linkage(&d);
        r.sink.write("dendrogram", "dendrogram.json", serde_json::to_string_pretty(&dg)?)?;
        r.sink.write("dendrogram_newick", "dendrogram.nwk", dg.to_newick() + "\n")?;
        r.sink.write("dendrogram_text", "dendrogram.txt", dg.to_text())?;
        if let Some(cut) = cfg.clustering.cut() {
            let parts = cut_clusters(&dg, cut)?;
            let labelled: Vec<Vec<&str>> =
                parts.iter().map(|c| c.iter().map(|&j| names[j].as_str()).collect()).collect();
            r.sink.write("clusters", "clusters.json", serde_json::to_string_pretty(&labelled)?)?;
        }
        r.summary.agglomerative_coefficient = Some(dg.agglomerative_coefficient);
        Ok(dg)
    })?;

    run.stage("report", |r| {
        r.sink.write(
            "dendrogram_svg",
            "dendrogram.svg",
            report::dendrogram_svg(&dendrogram, "Clustering of Predictors"),
        )?;
        r.sink.write("config", "config.toml", cfg.to_toml()?)?;
        r.sink.write("summary", "summary.json", serde_json::to_string_pretty(&r.summary)?)?;
        Ok(())
    })?;

    Ok(StageOutputs {
        model,
        logistic,
        trace,
        commonality,
        importance,
        dendrogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data.planted]
n = 300
p = 6
n_signal = 2
effect = 1.0
base_rate = 0.2
"#;

    #[test]
    fn parses_with_defaults_and_overrides() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.boost, BoostConfig::default());
        assert_eq!(cfg.split.n_train, 20_000);
        let cfg = PipelineConfig::from_toml_with_overrides(
            MINIMAL,
            &["boost.max_trees=40", "split.n_train=200", "ga.seed=9", "output_dir=somewhere"],
        )
        .unwrap();
        assert_eq!(cfg.boost.max_trees, 40);
        assert_eq!(cfg.split.n_train, 200);
        assert_eq!(cfg.ga.seed, 9);
        assert_eq!(cfg.output_dir, Some(PathBuf::from("somewhere")));
        let again = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(PipelineConfig::from_toml("[split]\nn_train = 3"), Err(Error::Config(_))));
        let both = format!("{MINIMAL}\n[data.csv]\npath = \"x.csv\"\n");
        assert!(matches!(PipelineConfig::from_toml(&both), Err(Error::Config(_))));
        assert!(matches!(
            PipelineConfig::from_toml_with_overrides(MINIMAL, &["boost.shrinkage=-1"]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml_with_overrides(MINIMAL, &["boost.typo=1"]),
            Err(Error::Config(_))
        ));
        assert!(PipelineConfig::from_toml_with_overrides(MINIMAL, &["novalue"]).is_err());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(OutputLock::acquire(dir.path()).is_err());
        drop(lock);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn split_failure_names_stage() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::from_toml_with_overrides(MINIMAL, &["split.n_train=300"]).unwrap();
        let err = run_pipeline(&cfg, Some(dir.path())).unwrap_err();
        assert_eq!(err.stage(), Some("split"));
        let m = RunManifest::load(dir.path()).unwrap();
        assert!(m.partial);
        assert_eq!(m.failed_stage.as_deref(), Some("split"));
        assert!(!dir.path().join(LOCK_FILE).exists());
    }
}
