//! Specialist ensemble: one classifier per sampling mechanism, trained on
//! its own sub-samples and combined by averaging (or voting) at inference.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    argmax, check_labels, checkpoint, cosine_lr, Architecture, PointSetModel, PredictionVector, TrainConfig, TrainLog,
    Trainer,
};
use crate::data::{augment, LabeledCloud};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::io::write_atomic;
use crate::rng::{child_seed, child_stream, named_seed, stream, Stream};
use crate::sampling::{make_ensemble_inputs, make_inputs, AnchorMode, SampleKind, SamplingParams, SubSample};

/// `K x C` member predictions for one input cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    rows: Vec<PredictionVector>,
}

impl PredictionMatrix {
    pub fn new(rows: Vec<PredictionVector>) -> Result<Self> {
        let c = rows.first().ok_or(Error::EmptyEval)?.probs().len();
        for r in &rows {
            if r.probs().len() != c {
                return Err(Error::LengthMismatch { left: r.probs().len(), right: c });
            }
            let sum: f64 = r.probs().iter().sum();
            if (sum - 1.0).abs() > 1e-6 || r.probs().iter().any(|p| p.is_nan() || *p < 0.0) {
                return Err(Error::BadConfig(format!("row is not a probability vector (sum {sum})")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[PredictionVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.rows[0].probs().len()
    }

    /// Rows `[start, start + len)` as a new matrix.
    pub fn slice(&self, start: usize, len: usize) -> PredictionMatrix {
        Self { rows: self.rows[start..start + len].to_vec() }
    }
}

/// Column-wise mean of the member predictions.
pub fn aggregate_mean(matrix: &PredictionMatrix) -> PredictionVector {
    let k = matrix.len() as f64;
    let mut out = vec![0.0; matrix.classes()];
    for r in matrix.rows() {
        for (o, p) in out.iter_mut().zip(r.probs()) {
            *o += p;
        }
    }
    PredictionVector(out.into_iter().map(|v| v / k).collect())
}

/// Plurality vote over member argmaxes. Ties go to the tied class with the
/// highest mean probability, then to the lowest class index.
pub fn aggregate_majority(matrix: &PredictionMatrix) -> usize {
    let mut votes = vec![0usize; matrix.classes()];
    for r in matrix.rows() {
        votes[r.argmax()] += 1;
    }
    let top = *votes.iter().max().unwrap();
    let mean = aggregate_mean(matrix);
    let mut best: Option<usize> = None;
    for c in (0..votes.len()).filter(|&c| votes[c] == top) {
        if best.is_none_or(|b| mean.probs()[c] > mean.probs()[b]) {
            best = Some(c);
        }
    }
    best.unwrap()
}

/// Three specialists sharing a class count.
#[derive(Debug, Clone, PartialEq)]
pub struct EpicModel {
    pub patches: PointSetModel,
    pub curves: PointSetModel,
    pub random: PointSetModel,
    pub params: SamplingParams,
}

impl EpicModel {
    pub fn new(patches: PointSetModel, curves: PointSetModel, random: PointSetModel, params: SamplingParams) -> Result<Self> {
        let c = patches.classes();
        if curves.classes() != c || random.classes() != c {
            return Err(Error::BadConfig("specialists disagree on the class count".into()));
        }
        params.validate()?;
        Ok(Self { patches, curves, random, params })
    }

    pub fn classes(&self) -> usize {
        self.patches.classes()
    }

    pub fn specialist(&self, kind: SampleKind) -> &PointSetModel {
        match kind {
            SampleKind::Patch => &self.patches,
            SampleKind::Curve => &self.curves,
            SampleKind::Random => &self.random,
        }
    }

    /// Member predictions for already-extracted sub-samples, in input order.
    pub fn predict_members(&self, subs: &[SubSample]) -> Result<PredictionMatrix> {
        let mut rows = vec![None; subs.len()];
        for kind in SampleKind::ALL {
            let idx: Vec<usize> = (0..subs.len()).filter(|&i| subs[i].kind == kind).collect();
            let clouds: Vec<&PointCloud> = idx.iter().map(|&i| &subs[i].points).collect();
            for (i, p) in idx.into_iter().zip(self.specialist(kind).predict_batch(&clouds)) {
                rows[i] = Some(p);
            }
        }
        PredictionMatrix::new(rows.into_iter().map(|r| r.expect("every kind handled")).collect())
    }
}

/// Inference output for one cloud.
#[derive(Debug, Clone)]
pub struct EpicInference {
    pub matrix: PredictionMatrix,
    pub prediction: PredictionVector,
    pub class: usize,
    pub inputs: Vec<SubSample>,
}

/// Extracts `3 * k_tilde` sub-samples (FPS anchors), routes each to its
/// specialist and averages the member predictions.
///
/// Clouds with at most `m_neighbors` points (heavily dropped inputs) walk
/// over their `N - 1` nearest neighbours instead.
pub fn epic_infer(epic: &EpicModel, cloud: &PointCloud, rng: &mut Stream) -> Result<EpicInference> {
    let mut params = epic.params;
    if cloud.len() > 1 && cloud.len() <= params.m_neighbors {
        params.m_neighbors = cloud.len() - 1;
    }
    let inputs = make_ensemble_inputs(cloud, &params, rng)?;
    let matrix = epic.predict_members(&inputs)?;
    let prediction = aggregate_mean(&matrix);
    let class = argmax(prediction.probs());
    Ok(EpicInference { matrix, prediction, class, inputs })
}

/// Per-specialist layer configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialistArchitectures {
    pub patches: Architecture,
    pub curves: Architecture,
    pub random: Architecture,
}

impl SpecialistArchitectures {
    pub fn uniform(arch: Architecture) -> Self {
        Self { patches: arch.clone(), curves: arch.clone(), random: arch }
    }

    fn get(&self, kind: SampleKind) -> &Architecture {
        match kind {
            SampleKind::Patch => &self.patches,
            SampleKind::Curve => &self.curves,
            SampleKind::Random => &self.random,
        }
    }
}

/// Training curves of the three specialists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpicTrainLog {
    pub patches: TrainLog,
    pub curves: TrainLog,
    pub random: TrainLog,
}

/// Trains the three specialists together.
///
/// Every epoch visits each training cloud once: the cloud is augmented (when
/// enabled), `k_tilde` anchors are chosen, and one patch, one curve and one
/// random subset are drawn per anchor. Each specialist takes a gradient step
/// on its own sub-samples, labelled with the parent cloud's label.
pub fn epic_train(
    dataset: &[LabeledCloud],
    sampling: &SamplingParams,
    config: &TrainConfig,
    archs: &SpecialistArchitectures,
    anchors: AnchorMode,
) -> Result<(EpicModel, EpicTrainLog)> {
    config.validate()?;
    sampling.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyEval);
    }
    let init_seed = named_seed(config.seed, "init");
    let mut trainers: Vec<Trainer> = SampleKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let model = PointSetModel::new(archs.get(kind), &mut child_stream(init_seed, i as u64))?;
            check_labels(dataset, model.classes())?;
            Ok(Trainer::new(model, config.optimizer))
        })
        .collect::<Result<_>>()?;
    let classes = trainers[0].model.classes();
    if trainers.iter().any(|t| t.model.classes() != classes) {
        return Err(Error::BadConfig("specialists disagree on the class count".into()));
    }

    // Each step feeds a specialist about `batch_size` sub-samples.
    let clouds_per_step = config.batch_size.div_ceil(sampling.k_tilde);
    let mut logs = [TrainLog::default(), TrainLog::default(), TrainLog::default()];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        let lr = cosine_lr(config.learning_rate, epoch, config.epochs);
        let epoch_seed = child_seed(config.seed, epoch as u64);
        order.shuffle(&mut stream(epoch_seed));
        let mut sums = [(0.0, 0usize, 0usize); 3];
        for (bi, chunk) in order.chunks(clouds_per_step).enumerate() {
            let mut per_kind: [Vec<(PointCloud, usize)>; 3] = Default::default();
            for &i in chunk {
                let mut rng = child_stream(epoch_seed, 1 + i as u64);
                let sample = &dataset[i];
                let cloud = if config.augment { augment(&sample.cloud, &mut rng)? } else { sample.cloud.clone() };
                for sub in make_inputs(&cloud, sampling, anchors, &mut rng)? {
                    let k = SampleKind::ALL.iter().position(|&k| k == sub.kind).unwrap();
                    per_kind[k].push((sub.points, sample.label));
                }
            }
            for (k, trainer) in trainers.iter_mut().enumerate() {
                let batch: Vec<(&PointCloud, usize)> = per_kind[k].iter().map(|(c, y)| (c, *y)).collect();
                let stats = trainer.step(&batch, lr);
                if !stats.loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: bi, loss: stats.loss });
                }
                sums[k].0 += stats.loss * stats.count as f64;
                sums[k].1 += stats.correct;
                sums[k].2 += stats.count;
            }
        }
        for (log, (loss, correct, count)) in logs.iter_mut().zip(sums) {
            log.push(loss, correct, count);
        }
    }
    let [p, c, r]: [Trainer; 3] = trainers.try_into().expect("three trainers");
    let [lp, lc, lr] = logs;
    Ok((
        EpicModel::new(p.model, c.model, r.model, *sampling)?,
        EpicTrainLog { patches: lp, curves: lc, random: lr },
    ))
}

pub const MANIFEST_FILE: &str = "epic_manifest.json";

/// Sidecar describing a saved [`EpicModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpicManifest {
    pub sampling: SamplingParams,
    pub anchor_mode: AnchorMode,
    pub train: TrainConfig,
    /// Checkpoint file names for patches, curves and random, in that order.
    pub checkpoints: [String; 3],
    /// SHA-256 of each checkpoint file, same order.
    pub model_ids: [String; 3],
}

pub fn model_id(model: &PointSetModel) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(checkpoint::to_bytes(model)))
}

/// Writes three checkpoints and the manifest into `dir`.
pub fn save_epic(epic: &EpicModel, dir: &Path, train: &TrainConfig, anchor_mode: AnchorMode) -> Result<EpicManifest> {
    let names = SampleKind::ALL.map(|k| format!("epic_{}.ckpt", k.name()));
    let mut ids: [String; 3] = Default::default();
    for (i, kind) in SampleKind::ALL.into_iter().enumerate() {
        let model = epic.specialist(kind);
        checkpoint::save(model, &dir.join(&names[i]))?;
        ids[i] = model_id(model);
    }
    let manifest =
        EpicManifest { sampling: epic.params, anchor_mode, train: train.clone(), checkpoints: names, model_ids: ids };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

pub fn load_epic(dir: &Path) -> Result<(EpicModel, EpicManifest)> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: EpicManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, 0, format!("bad manifest: {e}")))?;
    let load = |i: usize| checkpoint::load(&dir.join(&manifest.checkpoints[i]));
    let epic = EpicModel::new(load(0)?, load(1)?, load(2)?, manifest.sampling)?;
    Ok((epic, manifest))
}
