//! Synthetic zero-shot benchmarks with disjoint source and target labels.
//!
//! Label embeddings are drawn from a shared low-rank subspace so that the
//! source labels span the directions needed by the target labels. Instance
//! features are `g(sum of label embeddings) + noise` for a hidden map `g`;
//! target instances use per-label perturbed embeddings to model domain shift.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZsmlError};
use crate::io::Dataset;
use crate::metrics::EvalReport;
use crate::pipeline::{fit_regressor, label_sum_targets, predict_zero_shot, RegressorConfig};
use crate::regression::{FeatureMatrix, RegressionModel, RegressorKind, TrainConfig};
use crate::seed::derive_seed;
use crate::wordspace::EmbeddingTable;
use crate::zsl::{Method, ZslOptions};

/// Coupling strength at `correlation = 1`.
const COUPLING_SCALE: f64 = 3.0;
/// Log-weight penalty per label beyond two in a multi-label set.
const SIZE_PENALTY: f64 = 1.0;
const MAX_CANDIDATE_SETS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenMap {
    /// Features are the label-sum embedding itself. Needs `feature_dim == dim`.
    Identity,
    /// A random map with orthonormal rows or columns.
    Linear,
    /// The linear map followed by `z + bend * relu(z)` per coordinate.
    Bent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    /// Rank of the subspace shared by all label embeddings.
    pub latent_rank: usize,
    /// Fraction of each label's squared norm lying in label-specific random
    /// directions outside the shared subspace, in `[0, 1]`.
    pub label_specificity: f64,
    pub m_s: usize,
    pub m_t: usize,
    pub n_s: usize,
    pub n_t: usize,
    pub feature_dim: usize,
    /// Fraction of instances with more than one label.
    pub multilabel_rate: f64,
    /// Overrides `multilabel_rate` for the source split.
    pub source_multilabel_rate: Option<f64>,
    /// Largest label set drawn for a multi-label instance.
    pub max_labels: usize,
    /// Strength of pairwise co-occurrence couplings, in `[0, 1]`.
    pub correlation: f64,
    /// Noise scale. Each instance's word-space image is perturbed by a vector
    /// of expected norm `noise_sigma` times the mean label norm, and each
    /// feature by `noise_sigma` times the feature RMS.
    pub noise_sigma: f64,
    /// Norm of each target label's embedding perturbation relative to the
    /// label's own norm.
    pub shift: f64,
    pub map: HiddenMap,
    pub bend: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            latent_rank: 10,
            label_specificity: 0.3,
            m_s: 20,
            m_t: 5,
            n_s: 1000,
            n_t: 500,
            feature_dim: 100,
            multilabel_rate: 0.3,
            source_multilabel_rate: None,
            max_labels: 3,
            correlation: 0.6,
            noise_sigma: 0.3,
            shift: 0.2,
            map: HiddenMap::Bent,
            bend: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(ZsmlError::Validation(format!("synth config: {what}")));
        if self.m_s < 2 || self.m_t < 2 {
            return bad("m_s and m_t must be at least 2".into());
        }
        if self.n_s == 0 || self.n_t == 0 {
            return bad("n_s and n_t must be positive".into());
        }
        if self.dim == 0 || self.feature_dim == 0 {
            return bad("dim and feature_dim must be positive".into());
        }
        if self.latent_rank == 0 || self.latent_rank > self.dim.min(self.feature_dim) {
            return bad(format!(
                "latent_rank must be in 1..={}",
                self.dim.min(self.feature_dim)
            ));
        }
        if self.map == HiddenMap::Identity && self.feature_dim != self.dim {
            return bad("identity map needs feature_dim == dim".into());
        }
        let rates = [
            ("multilabel_rate", Some(self.multilabel_rate)),
            ("source_multilabel_rate", self.source_multilabel_rate),
            ("correlation", Some(self.correlation)),
            ("label_specificity", Some(self.label_specificity)),
        ];
        for (name, v) in rates {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("{name} must be in [0, 1]"));
                }
            }
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("shift", self.shift),
            ("bend", self.bend),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative and finite"));
            }
        }
        Ok(())
    }

    pub fn source_vocabulary(&self) -> Vec<String> {
        (0..self.m_s).map(|i| format!("src{i:02}")).collect()
    }

    pub fn target_vocabulary(&self) -> Vec<String> {
        (0..self.m_t).map(|i| format!("tgt{i:02}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    /// Embeddings of source labels followed by target labels.
    pub embeddings: EmbeddingTable,
    pub source: Dataset,
    pub target: Dataset,
}

impl SynthDataset {
    /// Writes `embeddings.txt`, `source.csv`, `target.csv` and `synth.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| ZsmlError::io(dir, e))?;
        self.embeddings.save(dir.join("embeddings.txt"))?;
        self.source.save(dir.join("source.csv"))?;
        self.target.save(dir.join("target.csv"))?;
        let cfg = serde_json::to_string_pretty(&self.config)
            .map_err(|e| ZsmlError::json("synth config", e))?;
        let path = dir.join("synth.json");
        std::fs::write(&path, cfg + "\n").map_err(|e| ZsmlError::io(&path, e))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `rows x cols` matrix with orthonormal columns (rows >= cols) or rows.
fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    if rows >= cols {
        gaussian(rng, rows, cols).qr().q()
    } else {
        gaussian(rng, cols, rows).qr().q().transpose()
    }
}

fn random_couplings(rng: &mut ChaCha8Rng, m: usize, strength: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a + 1..m {
            let v = strength * rng.random_range(-1.0..1.0);
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    j
}

/// Label sets with at least two members, and their sampling distribution
/// under pairwise couplings.
fn multi_label_sets(couplings: &DMatrix<f64>, max_labels: usize) -> Result<(Vec<Vec<usize>>, WeightedIndex<f64>)> {
    let m = couplings.nrows();
    let max = max_labels.min(m);
    if max < 2 {
        return Err(ZsmlError::Validation(
            "synth config: multi-label instances requested but max_labels < 2".into(),
        ));
    }
    let mut sets = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    fn extend(start: usize, m: usize, max: usize, stack: &mut Vec<usize>, sets: &mut Vec<Vec<usize>>) -> bool {
        if stack.len() >= 2 {
            sets.push(stack.clone());
            if sets.len() > MAX_CANDIDATE_SETS {
                return false;
            }
        }
        if stack.len() == max {
            return true;
        }
        for l in start..m {
            stack.push(l);
            let ok = extend(l + 1, m, max, stack, sets);
            stack.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    if !extend(0, m, max, &mut stack, &mut sets) {
        return Err(ZsmlError::Validation(format!(
            "synth config: more than {MAX_CANDIDATE_SETS} candidate label sets; lower max_labels"
        )));
    }
    let weights: Vec<f64> = sets
        .iter()
        .map(|s| {
            let mut e = -SIZE_PENALTY * (s.len() - 2) as f64;
            for (i, &a) in s.iter().enumerate() {
                for &b in &s[i + 1..] {
                    e += couplings[(a, b)];
                }
            }
            e.exp()
        })
        .collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| {
        ZsmlError::Validation(format!("synth config: infeasible label correlation ({e})"))
    })?;
    Ok((sets, dist))
}

/// Draws `n` label rows: exactly `round(rate * n)` of them multi-label.
fn sample_labels(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    rate: f64,
    couplings: &DMatrix<f64>,
    max_labels: usize,
) -> Result<DMatrix<u8>> {
    let n_multi = (rate * n as f64).round() as usize;
    let mut is_multi: Vec<bool> = (0..n).map(|i| i < n_multi).collect();
    is_multi.shuffle(rng);
    let multi = if n_multi > 0 {
        Some(multi_label_sets(couplings, max_labels)?)
    } else {
        None
    };
    let mut labels = DMatrix::zeros(n, m);
    for (i, &multi_row) in is_multi.iter().enumerate() {
        match (&multi, multi_row) {
            (Some((sets, dist)), true) => {
                for &l in &sets[dist.sample(rng)] {
                    labels[(i, l)] = 1;
                }
            }
            _ => labels[(i, rng.random_range(0..m))] = 1,
        }
    }
    Ok(labels)
}

struct HiddenFeatureMap {
    kind: HiddenMap,
    /// `feature_dim x dim`
    a: DMatrix<f64>,
    bend: f64,
}

impl HiddenFeatureMap {
    /// Applies the map to each row of `s`.
    fn apply(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        match self.kind {
            HiddenMap::Identity => s.clone(),
            HiddenMap::Linear => s * self.a.transpose(),
            HiddenMap::Bent => (s * self.a.transpose()).map(|z| z + self.bend * z.max(0.0)),
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let (m_s, m_t, r) = (cfg.m_s, cfg.m_t, cfg.latent_rank);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth.embeddings"));
    let basis = orthonormal(&mut rng, cfg.dim, r);
    let latent = gaussian(&mut rng, m_s + m_t, r) / (r as f64).sqrt();
    let specific = gaussian(&mut rng, m_s + m_t, cfg.dim) / (cfg.dim as f64).sqrt();
    let e_all = &latent * basis.transpose() * (1.0 - cfg.label_specificity).sqrt()
        + specific * cfg.label_specificity.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth.shift"));
    let mut e_target_shifted = e_all.rows(m_s, m_t).into_owned();
    for l in 0..m_t {
        let dir = basis.clone() * gaussian(&mut rng, r, 1);
        let norm = e_target_shifted.row(l).norm();
        let delta = dir.transpose() * (cfg.shift * norm / dir.norm());
        let shifted = e_target_shifted.row(l) + delta;
        e_target_shifted.set_row(l, &shifted);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth.couplings"));
    let strength = COUPLING_SCALE * cfg.correlation;
    let j_s = random_couplings(&mut rng, m_s, strength);
    let j_t = random_couplings(&mut rng, m_t, strength);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth.map"));
    let map = HiddenFeatureMap {
        kind: cfg.map,
        a: orthonormal(&mut rng, cfg.feature_dim, cfg.dim),
        bend: cfg.bend,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth.labels"));
    let source_rate = cfg.source_multilabel_rate.unwrap_or(cfg.multilabel_rate);
    let l_s = sample_labels(&mut rng, cfg.n_s, m_s, source_rate, &j_s, cfg.max_labels)?;
    let l_t = sample_labels(&mut rng, cfg.n_t, m_t, cfg.multilabel_rate, &j_t, cfg.max_labels)?;

    // Semantic noise: each instance's word-space image deviates from the
    // exact label sum by a random vector in the label subspace.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth.semantic_noise"));
    let label_norm = (e_all.norm_squared() / (m_s + m_t) as f64).sqrt();
    let semantic_sd = cfg.noise_sigma * label_norm / (r as f64).sqrt();
    let mut semantic = |s: DMatrix<f64>| {
        if semantic_sd == 0.0 {
            s
        } else {
            let jitter = gaussian(&mut rng, s.nrows(), r) * basis.transpose() * semantic_sd;
            s + jitter
        }
    };
    let s_s = semantic(l_s.map(f64::from) * e_all.rows(0, m_s));
    let s_t = semantic(l_t.map(f64::from) * &e_target_shifted);

    let x_s_clean = map.apply(&s_s);
    let x_t_clean = map.apply(&s_t);
    let scale = (x_s_clean.norm_squared() / x_s_clean.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth.feature_noise"));
    let sd = cfg.noise_sigma * scale;
    let mut noisy = |x: DMatrix<f64>| {
        if sd == 0.0 {
            x
        } else {
            let noise = gaussian(&mut rng, x.nrows(), x.ncols()) * sd;
            x + noise
        }
    };
    let x_s = noisy(x_s_clean);
    let x_t = noisy(x_t_clean);

    let source_vocab = cfg.source_vocabulary();
    let target_vocab = cfg.target_vocabulary();
    let entries = source_vocab
        .iter()
        .chain(&target_vocab)
        .enumerate()
        .map(|(i, l)| (l.clone(), e_all.row(i).iter().copied().collect()))
        .collect();
    let embeddings = EmbeddingTable::new(cfg.dim, entries)?;
    let source = Dataset::new(
        (0..cfg.n_s).map(|i| format!("s{i:05}")).collect(),
        FeatureMatrix::new(x_s)?,
        l_s,
        source_vocab,
    )?;
    let target = Dataset::new(
        (0..cfg.n_t).map(|i| format!("t{i:05}")).collect(),
        FeatureMatrix::new(x_t)?,
        l_t,
        target_vocab,
    )?;
    Ok(SynthDataset {
        config: cfg.clone(),
        embeddings,
        source,
        target,
    })
}

/// A regressor paired with a zero-shot predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Competitor {
    #[serde(rename = "independent+exdap")]
    IndependentExdap,
    #[serde(rename = "independent+dmp")]
    IndependentDmp,
    #[serde(rename = "joint+exdap")]
    JointExdap,
    #[serde(rename = "joint+dmp")]
    JointDmp,
    #[serde(rename = "joint+tramp")]
    JointTramp,
}

impl Competitor {
    pub const ALL: [Competitor; 5] = [
        Competitor::IndependentExdap,
        Competitor::IndependentDmp,
        Competitor::JointExdap,
        Competitor::JointDmp,
        Competitor::JointTramp,
    ];

    pub fn regressor(self) -> RegressorKind {
        match self {
            Competitor::IndependentExdap | Competitor::IndependentDmp => RegressorKind::Independent,
            _ => RegressorKind::Joint,
        }
    }

    pub fn method(self) -> Method {
        match self {
            Competitor::IndependentExdap | Competitor::JointExdap => Method::Exdap,
            Competitor::IndependentDmp | Competitor::JointDmp => Method::Dmp,
            Competitor::JointTramp => Method::Tramp,
        }
    }
}

impl std::fmt::Display for Competitor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}+{}", self.regressor(), self.method())
    }
}

/// Regressor and predictor settings shared by every benchmark cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Joint regressor training; its seed is replaced per benchmark seed.
    pub train: TrainConfig,
    pub ridge_penalty: f64,
    pub zsl: ZslOptions,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                hidden_units: 256,
                epochs: 60,
                ..TrainConfig::default()
            },
            ridge_penalty: crate::pipeline::DEFAULT_RIDGE_PENALTY,
            zsl: ZslOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Competitor,
    pub selftrain: bool,
    pub seed: u64,
    pub report: EvalReport,
}

fn regressor_config(kind: RegressorKind, settings: &BenchSettings, seed: u64) -> RegressorConfig {
    RegressorConfig {
        kind,
        train: TrainConfig {
            seed: derive_seed(seed, "bench.regression"),
            ..settings.train.clone()
        },
        ridge_penalty: settings.ridge_penalty,
    }
}

/// Evaluates every `(method, selftrain)` cell on one dataset. Each regressor
/// kind is trained once and shared by the cells that use it.
pub fn run_matrix(
    data: &SynthDataset,
    methods: &[Competitor],
    selftrain: &[bool],
    seed: u64,
    settings: &BenchSettings,
) -> Result<Vec<BenchRow>> {
    if methods.is_empty() || selftrain.is_empty() {
        return Err(ZsmlError::Validation("benchmark needs at least one method and selftrain setting".into()));
    }
    let y_s = label_sum_targets(&data.embeddings, &data.source.vocabulary, &data.source.labels)?;
    let kinds: Vec<RegressorKind> = [RegressorKind::Independent, RegressorKind::Joint]
        .into_iter()
        .filter(|k| methods.iter().any(|c| c.regressor() == *k))
        .collect();
    let models: Vec<(RegressorKind, RegressionModel)> = kinds
        .par_iter()
        .map(|&kind| {
            let cfg = regressor_config(kind, settings, seed);
            fit_regressor(&cfg, &data.source.features, &y_s).map(|m| (kind, m))
        })
        .collect::<Result<_>>()?;
    let projections: Vec<(RegressorKind, _)> = models
        .iter()
        .map(|(kind, model)| model.predict(&data.target.features).map(|y| (*kind, y)))
        .collect::<Result<_>>()?;

    let cells: Vec<(Competitor, bool)> = methods
        .iter()
        .flat_map(|&c| selftrain.iter().map(move |&s| (c, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(method, st)| {
            let y_hat = &projections
                .iter()
                .find(|(k, _)| *k == method.regressor())
                .expect("regressor trained for every kind")
                .1;
            let out = predict_zero_shot(
                y_hat,
                &data.embeddings,
                &data.target.vocabulary,
                method.method(),
                st,
                &settings.zsl,
            )?;
            let report = EvalReport::compute(
                &out.prediction.binary,
                &out.prediction.scores,
                &data.target.labels,
            )?;
            Ok(BenchRow {
                method,
                selftrain: st,
                seed,
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Generator settings; `seed` is replaced by each benchmark seed.
    pub synth: SynthConfig,
    pub methods: Vec<Competitor>,
    #[serde(default = "both_selftrain")]
    pub selftrain: Vec<bool>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub settings: BenchSettings,
}

fn both_selftrain() -> Vec<bool> {
    vec![true, false]
}

/// Runs the benchmark over all seeds. Each seed regenerates the dataset and
/// retrains the regressors. Rows are ordered by seed, method, selftrain.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.seeds.is_empty() {
        return Err(ZsmlError::Validation("benchmark needs at least one seed".into()));
    }
    let per_seed: Vec<Vec<BenchRow>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let data = generate(&SynthConfig {
                seed,
                ..cfg.synth.clone()
            })?;
            run_matrix(&data, &cfg.methods, &cfg.selftrain, seed, &cfg.settings)
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Mean report values per `(method, selftrain)` over seeds, in first-seen order.
pub fn mean_by_cell(rows: &[BenchRow]) -> Vec<(Competitor, bool, MeanMetrics)> {
    let mut cells: Vec<(Competitor, bool, MeanMetrics, usize)> = Vec::new();
    for row in rows {
        let pos = cells
            .iter()
            .position(|c| c.0 == row.method && c.1 == row.selftrain);
        let idx = pos.unwrap_or_else(|| {
            cells.push((row.method, row.selftrain, MeanMetrics::default(), 0));
            cells.len() - 1
        });
        let c = &mut cells[idx];
        c.2.hamming += row.report.hamming_loss;
        c.2.micro_f1 += row.report.micro_f1;
        c.2.ranking_loss += row.report.ranking_loss;
        c.2.average_precision += row.report.average_precision;
        c.3 += 1;
    }
    cells
        .into_iter()
        .map(|(m, s, sum, n)| {
            let n = n as f64;
            (
                m,
                s,
                MeanMetrics {
                    hamming: sum.hamming / n,
                    micro_f1: sum.micro_f1 / n,
                    ranking_loss: sum.ranking_loss / n,
                    average_precision: sum.average_precision / n,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanMetrics {
    pub hamming: f64,
    pub micro_f1: f64,
    pub ranking_loss: f64,
    pub average_precision: f64,
}

/// CSV with columns `method,selftrain,seed,hamming,microf1,rankloss,ap`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> Result<()> {
    let werr = |e: std::io::Error| ZsmlError::Validation(format!("write failed: {e}"));
    writeln!(out, "method,selftrain,seed,hamming,microf1,rankloss,ap").map_err(werr)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            if r.selftrain { "on" } else { "off" },
            r.seed,
            r.report.hamming_loss,
            r.report.micro_f1,
            r.report.ranking_loss,
            r.report.average_precision
        )
        .map_err(werr)?;
    }
    Ok(())
}
