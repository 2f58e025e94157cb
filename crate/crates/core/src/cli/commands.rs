use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{Aggregate, RunConfig};
use crate::classifier::{self, checkpoint, PointSetModel, TrainConfig, TrainLog};
use crate::corruptions::{corrupt_dataset, CorruptionSpec, Family};
use crate::data::{class_count, cloud_from_bytes, cloud_to_bytes, generate_dataset, ingest_dataset, load_dataset, save_dataset, LabeledCloud, Shape};
use crate::ensemble::{
    aggregate_majority, aggregate_mean, epic_infer, epic_train, load_epic, model_id, save_epic, EpicManifest,
    EpicModel, EpicTrainLog, PredictionMatrix,
};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::io::write_atomic;
use crate::metrics::{
    corruption_error, diversity_c, mean_correlation, overall_accuracy, pointwise_importance, spearman, uniformity,
    EvalReport, FamilyErrors, CSV_HEADER,
};
use crate::rng::{child_seed, child_stream, named_seed};
use crate::sampling::{make_ensemble_inputs, SampleKind};

pub const RESOLVED_CONFIG: &str = "resolved_config.txt";

/// Output layout under the run directory.
pub struct Layout {
    pub root: PathBuf,
    data: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        let root = cfg.out.clone();
        let data = cfg.data_dir.clone().unwrap_or_else(|| root.join("data"));
        Self { root, data }
    }
    pub fn train_data(&self) -> PathBuf {
        self.data.join("train")
    }
    pub fn test_data(&self) -> PathBuf {
        self.data.join("test")
    }
    pub fn data(&self) -> PathBuf {
        self.data.clone()
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn baseline(&self) -> PathBuf {
        self.models().join("baseline.ckpt")
    }
    pub fn corrupted(&self) -> PathBuf {
        self.root.join("corrupted")
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn diversity(&self) -> PathBuf {
        self.root.join("diversity")
    }
    pub fn importance(&self) -> PathBuf {
        self.root.join("importance")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, 0, e.to_string()))
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_atomic(&dir.join(RESOLVED_CONFIG), cfg.resolved_text().as_bytes())
}

fn check_classes(dataset: &[LabeledCloud], classes: usize, what: &str) -> Result<()> {
    let found = class_count(dataset);
    if found != classes {
        return Err(Error::BadConfig(format!("{what} has {found} classes but {classes} are expected")));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    config: crate::data::DatasetConfig,
    class_names: Vec<String>,
    train_samples: usize,
    test_samples: usize,
    root_seed: u64,
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let dataset = cfg.dataset();
    let (train, test) = generate_dataset(&dataset)?;
    save_dataset(&layout.train_data(), &train)?;
    save_dataset(&layout.test_data(), &test)?;
    let manifest = DatasetManifest {
        class_names: Shape::ALL[..dataset.classes].iter().map(|s| s.name().to_string()).collect(),
        train_samples: train.len(),
        test_samples: test.len(),
        root_seed: cfg.seed,
        config: dataset,
    };
    write_json(&layout.data().join("dataset_manifest.json"), &manifest)?;
    write_resolved(&layout.data(), cfg)?;
    println!("gen-data: {} train / {} test samples in {}", train.len(), test.len(), layout.data().display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineEntry {
    checkpoint: String,
    model_id: String,
    train: TrainConfig,
    log: TrainLog,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainManifest {
    baseline: BaselineEntry,
    epic: EpicManifest,
    epic_log: EpicTrainLog,
    seeds: BTreeMap<String, u64>,
}

/// Initializes a model from the training seed and trains it.
pub fn fit(cfg: &RunConfig, train_set: &[LabeledCloud], tc: &TrainConfig) -> Result<(PointSetModel, TrainLog)> {
    let mut init = child_stream(named_seed(tc.seed, "init"), 0);
    let model = PointSetModel::new(&cfg.architecture()?, &mut init)?;
    classifier::train(model, train_set, tc)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let train_set = ingest_dataset(&layout.train_data())?;
    check_classes(&train_set, cfg.classes, "training set")?;
    let models = layout.models();

    let tc = cfg.train("baseline");
    println!("train: baseline, {} epochs on {} samples", tc.epochs, train_set.len());
    let (baseline, log) = fit(cfg, &train_set, &tc)?;
    checkpoint::save(&baseline, &layout.baseline())?;
    println!("train: baseline final train accuracy {:.4}", log.accuracy.last().copied().unwrap_or(0.0));

    let ec = cfg.train("epic");
    println!("train: EPiC specialists, {} epochs", ec.epochs);
    let (epic, epic_log) = epic_train(&train_set, &cfg.sampling(), &ec, &cfg.specialist_architectures()?, cfg.anchor_mode)?;
    let epic_manifest = save_epic(&epic, &models, &ec, cfg.anchor_mode)?;

    let manifest = TrainManifest {
        baseline: BaselineEntry { checkpoint: "baseline.ckpt".into(), model_id: model_id(&baseline), train: tc, log },
        epic: epic_manifest,
        epic_log,
        seeds: cfg.seed_table(),
    };
    write_json(&models.join("train_manifest.json"), &manifest)?;
    write_resolved(&models, cfg)?;
    println!("train: checkpoints written to {}", models.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CorruptionEntry {
    directory: String,
    family: Family,
    severity: u8,
    schedule: String,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorruptionManifest {
    root_seed: u64,
    corrupt_seed: u64,
    samples: usize,
    sets: Vec<CorruptionEntry>,
}

pub fn corrupt(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let test = ingest_dataset(&layout.test_data())?;
    let seed = cfg.stage_seed("corrupt");
    let mut sets = Vec::new();
    for spec in cfg.selected_specs() {
        let corrupted = corrupt_dataset(spec, &test, seed)?;
        save_dataset(&layout.corrupted().join(spec.dir_name()), &corrupted)?;
        sets.push(CorruptionEntry {
            directory: spec.dir_name(),
            family: spec.family,
            severity: spec.severity,
            schedule: spec.schedule(),
            seed: child_seed(seed, spec.ordinal()),
        });
    }
    let n = sets.len();
    write_json(
        &layout.corrupted().join("manifest.json"),
        &CorruptionManifest { root_seed: cfg.seed, corrupt_seed: seed, samples: test.len(), sets },
    )?;
    write_resolved(&layout.corrupted(), cfg)?;
    println!("corrupt: {n} corrupted test sets in {}", layout.corrupted().display());
    Ok(())
}

/// Loaded models for evaluation.
pub struct Models {
    pub baseline: PointSetModel,
    pub epic: EpicModel,
    pub epic_manifest: EpicManifest,
}

pub fn load_models(cfg: &RunConfig) -> Result<Models> {
    let layout = Layout::new(cfg);
    let baseline = checkpoint::load(&layout.baseline())?;
    let (epic, epic_manifest) = load_epic(&layout.models())?;
    if baseline.classes() != epic.classes() {
        return Err(Error::BadConfig("baseline and specialists disagree on the class count".into()));
    }
    Ok(Models { baseline, epic, epic_manifest })
}

/// Ordinal of the clean test set in the inference seed space (after the 35 corruptions).
const CLEAN_ORDINAL: u64 = 35;

/// EPiC member matrices for every sample of a set, with the sub-samples kept.
pub fn epic_matrices(
    epic: &EpicModel,
    samples: &[LabeledCloud],
    infer_seed: u64,
    ordinal: u64,
) -> Result<Vec<crate::ensemble::EpicInference>> {
    let set_seed = child_seed(infer_seed, ordinal);
    samples.iter().enumerate().map(|(i, s)| epic_infer(epic, &s.cloud, &mut child_stream(set_seed, i as u64))).collect()
}

fn baseline_predictions(model: &PointSetModel, samples: &[LabeledCloud]) -> Vec<usize> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let clouds: Vec<&PointCloud> = chunk.iter().map(|s| &s.cloud).collect();
        out.extend(model.predict_batch(&clouds).iter().map(|p| p.argmax()));
    }
    out
}

/// Predicted classes of every scored rule for one evaluation set.
fn score_set(
    models: &Models,
    samples: &[LabeledCloud],
    infer: &[crate::ensemble::EpicInference],
) -> BTreeMap<&'static str, Vec<usize>> {
    let k = models.epic.params.k_tilde;
    let mut out = BTreeMap::new();
    out.insert("baseline", baseline_predictions(&models.baseline, samples));
    out.insert("epic_mean", infer.iter().map(|r| r.class).collect());
    out.insert("epic_majority", infer.iter().map(|r| aggregate_majority(&r.matrix)).collect());
    for (i, kind) in SampleKind::ALL.into_iter().enumerate() {
        let name = match kind {
            SampleKind::Patch => "epic_patches",
            SampleKind::Curve => "epic_curves",
            SampleKind::Random => "epic_random",
        };
        out.insert(name, infer.iter().map(|r| aggregate_mean(&r.matrix.slice(i * k, k)).argmax()).collect());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityRow {
    /// Mean uniformity with exact matching, per severity.
    pub exact: [Option<f64>; 5],
    /// Mean uniformity with matching radius `epsilon`, per severity.
    pub relaxed: [Option<f64>; 5],
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub severity: u8,
    pub exposed_members: usize,
    pub unexposed_members: usize,
    pub exposed_mean_entropy: Option<f64>,
    pub unexposed_mean_entropy: Option<f64>,
}

/// Curve members with more than this fraction of added points count as exposed.
pub const EXPOSED_FRACTION: f64 = 0.20;
/// Curve members with less than this fraction of added points count as unexposed.
pub const UNEXPOSED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub primary: String,
    pub reports: BTreeMap<String, EvalReport>,
    pub uniformity: BTreeMap<String, UniformityRow>,
    pub exposure: Vec<ExposureRow>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn exposure_row(severity: u8, clean: &[LabeledCloud], infer: &[crate::ensemble::EpicInference]) -> ExposureRow {
    let (mut exposed, mut unexposed) = (Vec::new(), Vec::new());
    for (c, r) in clean.iter().zip(infer) {
        let n = c.cloud.len();
        for (sub, row) in r.inputs.iter().zip(r.matrix.rows()) {
            if sub.kind != SampleKind::Curve {
                continue;
            }
            let added = sub.source_indices.iter().filter(|&&i| i >= n).count();
            let frac = added as f64 / sub.source_indices.len() as f64;
            if frac > EXPOSED_FRACTION {
                exposed.push(row.entropy());
            } else if frac < UNEXPOSED_FRACTION {
                unexposed.push(row.entropy());
            }
        }
    }
    ExposureRow {
        severity,
        exposed_members: exposed.len(),
        unexposed_members: unexposed.len(),
        exposed_mean_entropy: mean(&exposed),
        unexposed_mean_entropy: mean(&unexposed),
    }
}

fn load_corrupted(layout: &Layout, spec: CorruptionSpec, clean: &[LabeledCloud]) -> Result<Vec<LabeledCloud>> {
    let dir = layout.corrupted().join(spec.dir_name());
    if !dir.exists() {
        return Err(Error::BadConfig(format!("missing corrupted set {} (run `corrupt` first)", dir.display())));
    }
    let set = load_dataset(&dir)?;
    let aligned = set.len() == clean.len()
        && set.iter().zip(clean).all(|(a, b)| a.sample_id == b.sample_id && a.label == b.label);
    if !aligned {
        return Err(Error::BadConfig(format!("corrupted set {} does not match the clean test set", dir.display())));
    }
    Ok(set)
}

pub fn evaluate(cfg: &RunConfig) -> Result<EvalOutput> {
    let layout = Layout::new(cfg);
    let models = load_models(cfg)?;
    let clean = ingest_dataset(&layout.test_data())?;
    check_classes(&clean, models.baseline.classes(), "test set (checkpoint)")?;
    let labels: Vec<usize> = clean.iter().map(|s| s.label).collect();
    let infer_seed = cfg.stage_seed("infer");

    let clean_infer = epic_matrices(&models.epic, &clean, infer_seed, CLEAN_ORDINAL)?;
    let clean_scores = score_set(&models, &clean, &clean_infer);
    let clean_matrices: Vec<PredictionMatrix> = clean_infer.iter().map(|r| r.matrix.clone()).collect();

    // Corrupted sets are stored in single precision; compare against the clean
    // points as they would have been stored.
    let stored: Vec<PointCloud> = clean
        .iter()
        .map(|s| cloud_from_bytes(&cloud_to_bytes(&s.cloud), &layout.test_data()))
        .collect::<Result<_>>()?;

    let mut errors: BTreeMap<&str, FamilyErrors> = BTreeMap::new();
    let mut uniform: BTreeMap<Family, UniformityRow> = BTreeMap::new();
    let mut exposure = Vec::new();
    let specs = cfg.selected_specs();
    for spec in &specs {
        let set = load_corrupted(&layout, *spec, &clean)?;
        let infer = epic_matrices(&models.epic, &set, infer_seed, spec.ordinal())?;
        for (name, predicted) in score_set(&models, &set, &infer) {
            let err = 1.0 - overall_accuracy(&predicted, &labels)?;
            errors.entry(name).or_default().entry(spec.family).or_insert([0.0; 5])[spec.severity as usize - 1] = err;
        }
        let row = uniform
            .entry(spec.family)
            .or_insert(UniformityRow { exact: [None; 5], relaxed: [None; 5], epsilon: cfg.uniformity_epsilon });
        let s = spec.severity as usize - 1;
        let exact: Vec<f64> = stored.iter().zip(&set).map(|(c, x)| uniformity(c, &x.cloud, 0.0)).collect();
        let relaxed: Vec<f64> =
            stored.iter().zip(&set).map(|(c, x)| uniformity(c, &x.cloud, cfg.uniformity_epsilon)).collect();
        row.exact[s] = mean(&exact);
        row.relaxed[s] = mean(&relaxed);
        if spec.family == Family::AddLocal {
            exposure.push(exposure_row(spec.severity, &clean, &infer));
        }
        println!("eval: {} done", spec.dir_name());
    }

    let reference = errors.get("baseline").cloned().unwrap_or_default();
    let mut reports = BTreeMap::new();
    for (name, predicted) in &clean_scores {
        let family_errors = errors.get(name).cloned().unwrap_or_default();
        let (ce, mce) = if family_errors.is_empty() {
            (BTreeMap::new(), 0.0)
        } else {
            let r = corruption_error(&family_errors, &reference)?;
            (r.ce.into_iter().map(|(f, v)| (f.name().to_string(), v)).collect(), r.mce)
        };
        let mut error_rates = BTreeMap::new();
        for (family, errs) in &family_errors {
            let mut row = [None; 5];
            for spec in specs.iter().filter(|s| s.family == *family) {
                row[spec.severity as usize - 1] = Some(errs[spec.severity as usize - 1]);
            }
            error_rates.insert(family.name().to_string(), row);
        }
        let diversity = if name.starts_with("epic_") && !["epic_patches", "epic_curves", "epic_random"].contains(name) {
            Some(diversity_c(&clean_matrices)?)
        } else {
            None
        };
        let mut metadata = BTreeMap::new();
        metadata.insert("root_seed".to_string(), cfg.seed.to_string());
        metadata.insert("infer_seed".to_string(), infer_seed.to_string());
        metadata.insert("reference".to_string(), "baseline".to_string());
        metadata.insert("test_samples".to_string(), clean.len().to_string());
        if *name == "baseline" {
            metadata.insert("model_id".to_string(), model_id(&models.baseline));
        } else {
            metadata.insert("model_ids".to_string(), models.epic_manifest.model_ids.join(","));
            metadata.insert("k_tilde".to_string(), models.epic.params.k_tilde.to_string());
        }
        reports.insert(
            name.to_string(),
            EvalReport {
                model: name.to_string(),
                overall_accuracy: overall_accuracy(predicted, &labels)?,
                error_rates,
                ce,
                mce,
                diversity_c: diversity,
                metadata,
            },
        );
    }
    let primary = match cfg.aggregate {
        Aggregate::Mean => "epic_mean",
        Aggregate::Majority => "epic_majority",
    };
    Ok(EvalOutput {
        primary: primary.to_string(),
        reports,
        uniformity: uniform.into_iter().map(|(f, r)| (f.name().to_string(), r)).collect(),
        exposure,
    })
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let output = evaluate(cfg)?;
    let dir = layout.eval();
    write_json(&dir.join("report.json"), &output)?;
    let mut csv = format!("{CSV_HEADER}\n");
    for report in output.reports.values() {
        for row in report.csv_rows() {
            writeln!(csv, "{row}").unwrap();
        }
    }
    write_atomic(&dir.join("report.csv"), csv.as_bytes())?;
    write_resolved(&dir, cfg)?;
    for (name, r) in &output.reports {
        println!("eval: {name:<14} OA {:.4}  mCE {:.4}", r.overall_accuracy, r.mce);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDiversity {
    pub c: f64,
    pub members: usize,
    pub correlation_csv: String,
    pub model_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityOutput {
    /// Full-cloud models differing only in their training seed.
    pub ns_1a: EnsembleDiversity,
    /// Sampling specialists.
    pub s_1a: EnsembleDiversity,
    pub test_samples: usize,
}

fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}

pub fn diversity(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let models = load_models(cfg)?;
    let clean = ingest_dataset(&layout.test_data())?;
    check_classes(&clean, models.baseline.classes(), "test set (checkpoint)")?;
    let members = cfg.diversity_members();
    let dir = layout.diversity();

    // Member 0 is the trained baseline; the rest differ only in their seed.
    let mut ns_models = vec![models.baseline.clone()];
    let needs_training = members > 1;
    let train_set = if needs_training { Some(ingest_dataset(&layout.train_data())?) } else { None };
    for m in 1..members {
        let tc = cfg.train(&format!("reseeded_{m}"));
        println!("diversity: training reseeded baseline {m}/{}", members - 1);
        let (model, _) = fit(cfg, train_set.as_deref().unwrap(), &tc)?;
        checkpoint::save(&model, &dir.join("members").join(format!("reseeded_{m:02}.ckpt")))?;
        ns_models.push(model);
    }
    let clouds: Vec<&PointCloud> = clean.iter().map(|s| &s.cloud).collect();
    let per_member: Vec<Vec<_>> = ns_models
        .iter()
        .map(|m| clouds.chunks(64).flat_map(|c| m.predict_batch(c)).collect())
        .collect();
    let ns_matrices: Vec<PredictionMatrix> = (0..clean.len())
        .map(|i| PredictionMatrix::new(per_member.iter().map(|p| p[i].clone()).collect()))
        .collect::<Result<_>>()?;

    let s_infer = epic_matrices(&models.epic, &clean, cfg.stage_seed("infer"), CLEAN_ORDINAL)?;
    let s_matrices: Vec<PredictionMatrix> = s_infer.into_iter().map(|r| r.matrix).collect();

    write_atomic(&dir.join("correlation_ns_1a.csv"), matrix_csv(&mean_correlation(&ns_matrices)?).as_bytes())?;
    write_atomic(&dir.join("correlation_s_1a.csv"), matrix_csv(&mean_correlation(&s_matrices)?).as_bytes())?;
    let output = DiversityOutput {
        ns_1a: EnsembleDiversity {
            c: diversity_c(&ns_matrices)?,
            members,
            correlation_csv: "correlation_ns_1a.csv".into(),
            model_ids: ns_models.iter().map(model_id).collect(),
        },
        s_1a: EnsembleDiversity {
            c: diversity_c(&s_matrices)?,
            members: models.epic.params.members(),
            correlation_csv: "correlation_s_1a.csv".into(),
            model_ids: models.epic_manifest.model_ids.to_vec(),
        },
        test_samples: clean.len(),
    };
    write_json(&dir.join("diversity.json"), &output)?;
    write_resolved(&dir, cfg)?;
    println!("diversity: c(NS-1A) = {:.4}, c(S-1A) = {:.4}", output.ns_1a.c, output.s_1a.c);
    Ok(())
}

pub const IMPORTANCE_HEADER: &str = "sample_id,point_index,x,y,z,imp";

pub fn importance(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let models = load_models(cfg)?;
    let clean = ingest_dataset(&layout.test_data())?;
    let chosen = &clean[..cfg.importance_samples.min(clean.len())];
    let k = models.epic.params.k_tilde as f64;
    let seed = cfg.stage_seed("importance");

    let mut files: BTreeMap<&str, String> = BTreeMap::new();
    for name in ["baseline", "patches", "curves", "random"] {
        files.insert(name, format!("{IMPORTANCE_HEADER}\n"));
    }
    for (i, sample) in chosen.iter().enumerate() {
        let pts = sample.cloud.points();
        let mut rows: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let base = pointwise_importance(&models.baseline.pointwise_features(&sample.cloud));
        rows.insert("baseline", base.into_iter().map(|v| v as f64).collect());
        let subs = make_ensemble_inputs(&sample.cloud, &models.epic.params, &mut child_stream(seed, i as u64))?;
        for kind in SampleKind::ALL {
            // average over this kind's sub-samples, attributing each row to its source point
            let mut acc = vec![0.0; pts.len()];
            for sub in subs.iter().filter(|s| s.kind == kind) {
                let imp = pointwise_importance(&models.epic.specialist(kind).pointwise_features(&sub.points));
                for (row, v) in imp.into_iter().enumerate() {
                    acc[sub.source_indices[row]] += v as f64 / k;
                }
            }
            rows.insert(kind.name(), acc);
        }
        for (name, imp) in rows {
            let text = files.get_mut(name).unwrap();
            for (j, (p, v)) in pts.iter().zip(imp).enumerate() {
                writeln!(text, "{},{j},{},{},{},{v}", sample.sample_id, p[0], p[1], p[2]).unwrap();
            }
        }
    }
    let dir = layout.importance();
    for (name, text) in &files {
        write_atomic(&dir.join(format!("importance_{name}.csv")), text.as_bytes())?;
    }
    write_resolved(&dir, cfg)?;
    println!("importance: {} samples written to {}", chosen.len(), dir.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityTrend {
    pub mean_uniformity: [Option<f64>; 5],
    pub baseline_error: [Option<f64>; 5],
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub primary: String,
    pub overall_accuracy: BTreeMap<String, f64>,
    pub mce: BTreeMap<String, f64>,
    pub uniformity_trend: BTreeMap<String, UniformityTrend>,
    pub exposure: Vec<ExposureRow>,
    pub diversity: Option<DiversityOutput>,
    pub importance_files: Vec<String>,
    pub eval: EvalOutput,
}

pub fn summarize(cfg: &RunConfig) -> Result<Summary> {
    let layout = Layout::new(cfg);
    let eval: EvalOutput = read_json(&layout.eval().join("report.json"))?;
    let diversity_path = layout.diversity().join("diversity.json");
    let diversity = if diversity_path.exists() { Some(read_json(&diversity_path)?) } else { None };
    let mut importance_files = Vec::new();
    for name in ["baseline", "patches", "curves", "random"] {
        let f = format!("importance/importance_{name}.csv");
        if layout.root.join(&f).exists() {
            importance_files.push(f);
        }
    }
    let baseline = eval.reports.get("baseline").ok_or_else(|| Error::BadConfig("eval report lacks baseline".into()))?;
    let mut uniformity_trend = BTreeMap::new();
    for (family, row) in &eval.uniformity {
        let errs = baseline.error_rates.get(family).copied().unwrap_or([None; 5]);
        let pairs: Vec<(f64, f64)> =
            row.exact.iter().zip(&errs).filter_map(|(u, e)| Some(((*u)?, (*e)?))).collect();
        let (u, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        uniformity_trend.insert(
            family.clone(),
            UniformityTrend { mean_uniformity: row.exact, baseline_error: errs, spearman: spearman(&u, &e) },
        );
    }
    Ok(Summary {
        primary: eval.primary.clone(),
        overall_accuracy: eval.reports.iter().map(|(k, r)| (k.clone(), r.overall_accuracy)).collect(),
        mce: eval.reports.iter().map(|(k, r)| (k.clone(), r.mce)).collect(),
        uniformity_trend,
        exposure: eval.exposure.clone(),
        diversity,
        importance_files,
        eval,
    })
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let summary = summarize(cfg)?;
    write_json(&layout.report(), &summary)?;
    write_resolved(&layout.root, cfg)?;
    println!("report: written to {}", layout.report().display());
    Ok(())
}
