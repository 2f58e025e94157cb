//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected. Sampling sizes left unset are derived from `points_per_cloud`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::classifier::{Architecture, Optimizer, TrainConfig};
use crate::corruptions::{CorruptionSpec, Family};
use crate::data::DatasetConfig;
use crate::ensemble::SpecialistArchitectures;
use crate::error::{Error, Result};
use crate::rng::named_seed;
use crate::sampling::{AnchorMode, SamplingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Mean,
    Majority,
}

impl Aggregate {
    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            Aggregate::Majority => "majority",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub classes: usize,
    pub points_per_cloud: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub n_patch: Option<usize>,
    pub n_curve: Option<usize>,
    pub n_random: Option<usize>,
    pub m_neighbors: usize,
    pub k_tilde: usize,
    pub encoder_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub encoder_widths_patches: Option<Vec<usize>>,
    pub encoder_widths_curves: Option<Vec<usize>>,
    pub encoder_widths_random: Option<Vec<usize>>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub augment: bool,
    pub anchor_mode: AnchorMode,
    pub aggregate: Aggregate,
    pub family: Option<Family>,
    pub severity: Option<u8>,
    pub diversity_members: Option<usize>,
    pub importance_samples: usize,
    pub uniformity_epsilon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        let t = TrainConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("run"),
            data_dir: None,
            classes: d.classes,
            points_per_cloud: d.points_per_cloud,
            train_size: d.train_size,
            test_size: d.test_size,
            n_patch: None,
            n_curve: None,
            n_random: None,
            m_neighbors: SamplingParams::default().m_neighbors,
            k_tilde: SamplingParams::default().k_tilde,
            encoder_widths: vec![64, 128],
            head_widths: vec![64],
            encoder_widths_patches: None,
            encoder_widths_curves: None,
            encoder_widths_random: None,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
            augment: t.augment,
            anchor_mode: AnchorMode::Random,
            aggregate: Aggregate::Mean,
            family: None,
            severity: None,
            diversity_members: None,
            importance_samples: 8,
            uniformity_epsilon: 0.05,
        }
    }
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::BadConfig(format!("{key}: cannot parse {value:?} as {expected}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, std::any::type_name::<T>()))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn parse_auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "data_dir" => self.data_dir = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            "classes" => self.classes = parse_num(key, value)?,
            "points_per_cloud" => self.points_per_cloud = parse_num(key, value)?,
            "train_size" => self.train_size = parse_num(key, value)?,
            "test_size" => self.test_size = parse_num(key, value)?,
            "n_patch" => self.n_patch = parse_auto(key, value)?,
            "n_curve" => self.n_curve = parse_auto(key, value)?,
            "n_random" => self.n_random = parse_auto(key, value)?,
            "m_neighbors" => self.m_neighbors = parse_num(key, value)?,
            "k_tilde" => self.k_tilde = parse_num(key, value)?,
            "encoder_widths" => self.encoder_widths = parse_list(key, value)?,
            "head_widths" => self.head_widths = if value.is_empty() { Vec::new() } else { parse_list(key, value)? },
            "encoder_widths_patches" => self.encoder_widths_patches = Some(parse_list(key, value)?),
            "encoder_widths_curves" => self.encoder_widths_curves = Some(parse_list(key, value)?),
            "encoder_widths_random" => self.encoder_widths_random = Some(parse_list(key, value)?),
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "adam" => Optimizer::Adam,
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(bad(key, value, "adam|sgd")),
                }
            }
            "augment" => self.augment = parse_num(key, value)?,
            "anchor_mode" => {
                self.anchor_mode = match value {
                    "random" => AnchorMode::Random,
                    "fps" => AnchorMode::Fps,
                    _ => return Err(bad(key, value, "random|fps")),
                }
            }
            "aggregate" => {
                self.aggregate = match value {
                    "mean" => Aggregate::Mean,
                    "majority" => Aggregate::Majority,
                    _ => return Err(bad(key, value, "mean|majority")),
                }
            }
            "family" => self.family = if value == "all" { None } else { Some(value.parse()?) },
            "severity" => {
                self.severity = if value == "all" {
                    None
                } else {
                    let s: u8 = parse_num(key, value)?;
                    CorruptionSpec::new(Family::Scale, s).map_err(|_| bad(key, value, "1..5 or all"))?;
                    Some(s)
                }
            }
            "diversity_members" => self.diversity_members = parse_auto(key, value)?,
            "importance_samples" => self.importance_samples = parse_num(key, value)?,
            "uniformity_epsilon" => self.uniformity_epsilon = parse_num(key, value)?,
            other => return Err(Error::BadConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::BadConfig(format!("{}:{}: expected key = value", origin.display(), lineno + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::BadConfig(format!("{}:{}: {e}", origin.display(), lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            classes: self.classes,
            points_per_cloud: self.points_per_cloud,
            train_size: self.train_size,
            test_size: self.test_size,
            seed: self.stage_seed("dataset"),
        }
    }

    pub fn sampling(&self) -> SamplingParams {
        let d = SamplingParams::for_cloud_size(self.points_per_cloud);
        SamplingParams {
            n_patch: self.n_patch.unwrap_or(d.n_patch),
            n_curve: self.n_curve.unwrap_or(d.n_curve),
            n_random: self.n_random.unwrap_or(d.n_random),
            m_neighbors: self.m_neighbors,
            k_tilde: self.k_tilde,
        }
    }

    /// Training settings with the seed of the named training stream.
    pub fn train(&self, stream_name: &str) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: named_seed(self.stage_seed("train"), stream_name),
            augment: self.augment,
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::new(&self.encoder_widths, &self.head_widths, self.classes)
    }

    pub fn specialist_architectures(&self) -> Result<SpecialistArchitectures> {
        let arch = |w: &Option<Vec<usize>>| {
            Architecture::new(w.as_deref().unwrap_or(&self.encoder_widths), &self.head_widths, self.classes)
        };
        Ok(SpecialistArchitectures {
            patches: arch(&self.encoder_widths_patches)?,
            curves: arch(&self.encoder_widths_curves)?,
            random: arch(&self.encoder_widths_random)?,
        })
    }

    /// Seed of a top-level stage stream (`dataset`, `train`, `corrupt`, `infer`, ...).
    pub fn stage_seed(&self, stage: &str) -> u64 {
        named_seed(self.seed, stage)
    }

    pub fn diversity_members(&self) -> usize {
        self.diversity_members.unwrap_or(3 * self.k_tilde)
    }

    /// Corruption specs selected by `family` and `severity`.
    pub fn selected_specs(&self) -> Vec<CorruptionSpec> {
        CorruptionSpec::all()
            .into_iter()
            .filter(|s| self.family.is_none_or(|f| f == s.family))
            .filter(|s| self.severity.is_none_or(|v| v == s.severity))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset().validate()?;
        self.sampling().validate()?;
        self.train("check").validate()?;
        self.specialist_architectures()?;
        if self.diversity_members() < 2 {
            return Err(Error::BadConfig("diversity_members must be at least 2".into()));
        }
        if self.uniformity_epsilon.is_nan() || self.uniformity_epsilon < 0.0 {
            return Err(Error::BadConfig("uniformity_epsilon must be nonnegative".into()));
        }
        Ok(())
    }

    /// Every key with its effective value, in a form [`RunConfig::apply_text`] reads back.
    pub fn resolved_text(&self) -> String {
        let s = self.sampling();
        let opt_list = |v: &Option<Vec<usize>>| v.as_ref().map(|v| join(v)).unwrap_or_else(|| join(&self.encoder_widths));
        let mut out = String::from("# resolved run configuration\n");
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        kv("classes", self.classes.to_string());
        kv("points_per_cloud", self.points_per_cloud.to_string());
        kv("train_size", self.train_size.to_string());
        kv("test_size", self.test_size.to_string());
        kv("n_patch", s.n_patch.to_string());
        kv("n_curve", s.n_curve.to_string());
        kv("n_random", s.n_random.to_string());
        kv("m_neighbors", s.m_neighbors.to_string());
        kv("k_tilde", s.k_tilde.to_string());
        kv("encoder_widths", join(&self.encoder_widths));
        kv("head_widths", join(&self.head_widths));
        kv("encoder_widths_patches", opt_list(&self.encoder_widths_patches));
        kv("encoder_widths_curves", opt_list(&self.encoder_widths_curves));
        kv("encoder_widths_random", opt_list(&self.encoder_widths_random));
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("optimizer", match self.optimizer {
            Optimizer::Adam => "adam".into(),
            Optimizer::Sgd => "sgd".into(),
        });
        kv("augment", self.augment.to_string());
        kv("anchor_mode", match self.anchor_mode {
            AnchorMode::Random => "random".into(),
            AnchorMode::Fps => "fps".into(),
        });
        kv("aggregate", self.aggregate.name().into());
        kv("family", self.family.map_or("all".into(), |f| f.name().into()));
        kv("severity", self.severity.map_or("all".into(), |s| s.to_string()));
        kv("diversity_members", self.diversity_members().to_string());
        kv("importance_samples", self.importance_samples.to_string());
        kv("uniformity_epsilon", self.uniformity_epsilon.to_string());
        out
    }

    /// Named stream seeds derived from the root seed, for manifests.
    pub fn seed_table(&self) -> BTreeMap<String, u64> {
        ["dataset", "train", "corrupt", "infer", "diversity", "importance"]
            .into_iter()
            .map(|s| (s.to_string(), self.stage_seed(s)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("k_tilde", "2").unwrap();
        cfg.set("family", "jitter").unwrap();
        cfg.set("encoder_widths_random", "16,32").unwrap();
        let text = cfg.resolved_text();
        let mut back = RunConfig::default();
        back.apply_text(&text, Path::new("resolved")).unwrap();
        assert_eq!(back.sampling(), cfg.sampling());
        assert_eq!(back.resolved_text(), text);
    }

    #[test]
    fn unknown_and_bad_values_are_errors() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("severity", "6").is_err());
        assert!(cfg.set("epochs", "many").is_err());
        assert!(cfg.apply_text("epochs 3", Path::new("x")).is_err());
        assert!(cfg.apply_text("# comment\n\nepochs = 3\n", Path::new("x")).is_ok());
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn sampling_defaults_scale_with_resolution() {
        let cfg = RunConfig::default();
        let s = cfg.sampling();
        assert_eq!((s.n_patch, s.n_curve, s.n_random), (128, 128, 32));
        assert_eq!(cfg.selected_specs().len(), 35);
    }
}
