//! End-to-end experiments: load, train, project, predict, evaluate and write
//! reproducible artifacts.
//!
//! Every artifact carries the config hash and seed. The hash covers the
//! canonical JSON of the config without its file paths, so moving a setup to
//! another directory keeps it; the inputs themselves are pinned by their
//! SHA-256 digests in `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ZsmlError};
use crate::io::{load_dataset, save_label_columns, Dataset};
use crate::metrics::EvalReport;
use crate::pipeline::{fit_regressor, label_sum_targets, predict_zero_shot, RegressorConfig, ZslOutcome};
use crate::regression::{RegressionModel, TrainConfig};
use crate::seed::derive_seed;
use crate::wordspace::{load_embeddings, EmbeddingTable};
use crate::zsl::{Method, ZslOptions};

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Paths are relative to the config file's directory.
    pub embeddings: PathBuf,
    pub source: PathBuf,
    pub target: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// `regressor.train.seed` is replaced by a sub-seed of `seed`.
    #[serde(default)]
    pub regressor: RegressorConfig,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_selftrain")]
    pub selftrain: bool,
    #[serde(default)]
    pub zsl: ZslOptions,
    #[serde(default)]
    pub seed: u64,
}

fn default_method() -> Method {
    Method::Tramp
}

fn default_selftrain() -> bool {
    true
}

impl ExperimentConfig {
    /// Parses a config and resolves its paths against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self =
            serde_json::from_str(text).map_err(|e| ZsmlError::json("experiment config", e))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ZsmlError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.embeddings);
        join(&mut self.source);
        join(&mut self.target);
        if let Some(out) = self.output_dir.as_mut() {
            join(out);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.regressor.train.validate()?;
        if !(self.regressor.ridge_penalty >= 0.0 && self.regressor.ridge_penalty.is_finite()) {
            return Err(ZsmlError::Validation("ridge_penalty must be non-negative and finite".into()));
        }
        let z = &self.zsl;
        if z.k_graph == 0 || z.k_selftrain == 0 {
            return Err(ZsmlError::Validation("k_graph and k_selftrain must be positive".into()));
        }
        if !z.threshold.is_finite() {
            return Err(ZsmlError::Validation("threshold must be finite".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of everything except file locations.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            for key in ["embeddings", "source", "target", "output_dir"] {
                map.remove(key);
            }
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// The regressor settings with the training seed derived from `seed`.
    pub fn seeded_regressor(&self) -> RegressorConfig {
        RegressorConfig {
            train: TrainConfig {
                seed: derive_seed(self.seed, "regression"),
                ..self.regressor.train.clone()
            },
            ..self.regressor.clone()
        }
    }

    /// Fails before any work if an input file is missing.
    pub fn check_inputs(&self) -> Result<()> {
        for (what, p) in [
            ("embeddings", &self.embeddings),
            ("source dataset", &self.source),
            ("target dataset", &self.target),
        ] {
            if !p.is_file() {
                return Err(ZsmlError::Validation(format!(
                    "{what} file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| ZsmlError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Loaded and cross-checked experiment inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub embeddings: EmbeddingTable,
    pub source: Dataset,
    pub target: Dataset,
}

pub fn load_inputs(cfg: &ExperimentConfig) -> Result<Inputs> {
    cfg.check_inputs()?;
    let source = load_dataset(&cfg.source)?;
    let target = load_dataset(&cfg.target)?;
    if let Some(l) = target.vocabulary.iter().find(|l| source.vocabulary.contains(l)) {
        return Err(ZsmlError::Validation(format!(
            "label `{l}` appears in both the source and target vocabularies"
        )));
    }
    if source.features.cols() != target.features.cols() {
        return Err(ZsmlError::Shape(format!(
            "source has {} features, target has {}",
            source.features.cols(),
            target.features.cols()
        )));
    }
    let vocab: Vec<String> = source.vocabulary.iter().chain(&target.vocabulary).cloned().collect();
    let embeddings = load_embeddings(&cfg.embeddings, &vocab)?;
    Ok(Inputs {
        embeddings,
        source,
        target,
    })
}

pub fn train_model(cfg: &ExperimentConfig, inputs: &Inputs) -> Result<RegressionModel> {
    let y_s = label_sum_targets(&inputs.embeddings, &inputs.source.vocabulary, &inputs.source.labels)?;
    fit_regressor(&cfg.seeded_regressor(), &inputs.source.features, &y_s)
}

pub fn predict_with(cfg: &ExperimentConfig, inputs: &Inputs, model: &RegressionModel) -> Result<ZslOutcome> {
    let y_hat = model.predict(&inputs.target.features)?;
    if y_hat.cols() != inputs.embeddings.dim() {
        return Err(ZsmlError::Shape(format!(
            "model outputs {} dimensions, embeddings have {}",
            y_hat.cols(),
            inputs.embeddings.dim()
        )));
    }
    predict_zero_shot(
        &y_hat,
        &inputs.embeddings,
        &inputs.target.vocabulary,
        cfg.method,
        cfg.selftrain,
        &cfg.zsl,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub seed: u64,
    pub method: Method,
    pub regressor: crate::regression::RegressorKind,
    pub selftrain: bool,
    pub metrics: EvalReport,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    /// Config with absolute input paths and no output directory.
    pub config: ExperimentConfig,
    /// SHA-256 per input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 per output file name.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ZsmlError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| ZsmlError::json("manifest", e))?;
        if m.config.hash() != m.config_hash {
            return Err(ZsmlError::Validation("manifest config does not match its hash".into()));
        }
        Ok(m)
    }

    /// Checks that the input files still have the recorded digests.
    pub fn verify_inputs(&self) -> Result<()> {
        self.config.check_inputs()?;
        for (role, path) in input_roles(&self.config) {
            let expected = self.inputs.get(role).ok_or_else(|| {
                ZsmlError::Validation(format!("manifest has no digest for the {role} input"))
            })?;
            if &file_sha256(path)? != expected {
                return Err(ZsmlError::Validation(format!(
                    "{role} input {} changed since the manifest was written",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

fn input_roles(cfg: &ExperimentConfig) -> [(&'static str, &Path); 3] {
    [
        ("embeddings", cfg.embeddings.as_path()),
        ("source", cfg.source.as_path()),
        ("target", cfg.target.as_path()),
    ]
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| ZsmlError::io(p, e))
}

/// Comment line heading prediction and score files.
pub fn provenance_comment(config_hash: &str, seed: u64) -> String {
    format!("config_hash={config_hash} seed={seed}")
}

/// Writes predictions, scores and report for one outcome; returns output
/// digests keyed by file name.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    outcome: &ZslOutcome,
    report: &EvalReport,
    out_dir: &Path,
) -> Result<BTreeMap<String, String>> {
    std::fs::create_dir_all(out_dir).map_err(|e| ZsmlError::io(out_dir, e))?;
    let hash = cfg.hash();
    let comment = provenance_comment(&hash, cfg.seed);
    let p = &outcome.prediction;
    let (ids, vocab) = (&inputs.target.ids, &inputs.target.vocabulary);
    save_label_columns(out_dir.join(PREDICTIONS_FILE), Some(&comment), ids, vocab, |i, j| {
        p.binary[(i, j)].to_string()
    })?;
    save_label_columns(out_dir.join(SCORES_FILE), Some(&comment), ids, vocab, |i, j| {
        p.scores[(i, j)].to_string()
    })?;
    let report_file = ReportFile {
        config_hash: hash,
        seed: cfg.seed,
        method: cfg.method,
        regressor: cfg.regressor.kind,
        selftrain: cfg.selftrain,
        metrics: report.clone(),
        diagnostics: p.diagnostics.clone(),
    };
    write_json(&out_dir.join(REPORT_FILE), &report_file)?;
    let mut outputs = BTreeMap::new();
    for name in [PREDICTIONS_FILE, SCORES_FILE, REPORT_FILE] {
        outputs.insert(name.to_string(), file_sha256(&out_dir.join(name))?);
    }
    Ok(outputs)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ZsmlError::json(path.display().to_string(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| ZsmlError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub outcome: ZslOutcome,
    pub manifest: Manifest,
}

/// Runs the full experiment and writes all artifacts to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let model = train_model(cfg, &inputs)?;
    let outcome = predict_with(cfg, &inputs, &model)?;
    for d in &outcome.prediction.diagnostics {
        log::warn!("{d}");
    }
    let report = EvalReport::compute(
        &outcome.prediction.binary,
        &outcome.prediction.scores,
        &inputs.target.labels,
    )?;
    let outputs = write_outputs(cfg, &inputs, &outcome, &report, out_dir)?;

    let mut stored = cfg.clone();
    stored.output_dir = None;
    stored.embeddings = absolute(&cfg.embeddings)?;
    stored.source = absolute(&cfg.source)?;
    stored.target = absolute(&cfg.target)?;
    let inputs_digest = input_roles(&stored)
        .into_iter()
        .map(|(role, path)| Ok((role.to_string(), file_sha256(path)?)))
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: stored,
        inputs: inputs_digest,
        outputs,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(ExperimentOutcome {
        report,
        outcome,
        manifest,
    })
}
