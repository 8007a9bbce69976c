//! Batch experiments: derive gaze channels, train one model per class,
//! detect on the test split and report per-class AP and mAP.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, GazeMapper, GazeRecipe, GazeSource};
use crate::dpm::{detect, model_to_json, save_model, Model};
use crate::error::{Error, Result};
use crate::eval::ap::{evaluate_detections, GroundTruthBox, ScoredBox, DEFAULT_MATCH_IOU};
use crate::eval::detections::{write_detections, DetectionRecord};
use crate::gaze::{DensityMap, ScreenGeometry, SubsampleStrategy};
use crate::raster::Raster;
use crate::train::{train, RoundTelemetry, TrainConfig, TrainSample};

/// Which gaze data the detector sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Variant {
    /// Image features only.
    BaselineDpm,
    /// One duration-weighted fixation density channel.
    Gazedpm,
    /// Fixations perturbed by gaze noise of `sigma_scale` base sigmas.
    Noise { sigma_scale: f64 },
    /// A subset of the fixations.
    Subsample { strategy: SubsampleStrategy },
    /// A single observer's fixations.
    PerObserver { observer: String },
    /// Saliency maps in place of fixation maps. `dir` overrides the manifest.
    Saliency {
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    /// `k` duration-binned fixation channels.
    SoftBins { k: usize },
}

impl Variant {
    pub fn recipe(&self, seed: u64, screen: ScreenGeometry) -> GazeRecipe {
        let base = GazeRecipe {
            screen,
            seed,
            ..GazeRecipe::fixations()
        };
        match self {
            Variant::BaselineDpm => GazeRecipe {
                source: GazeSource::None,
                ..base
            },
            Variant::Gazedpm => base,
            Variant::Noise { sigma_scale } => GazeRecipe {
                noise_scale: *sigma_scale,
                ..base
            },
            Variant::Subsample { strategy } => GazeRecipe {
                subsample: Some(strategy.clone()),
                ..base
            },
            Variant::PerObserver { observer } => GazeRecipe {
                subsample: Some(SubsampleStrategy::Observer(observer.clone())),
                ..base
            },
            Variant::Saliency { dir } => GazeRecipe {
                source: GazeSource::Saliency,
                saliency_dir: dir.clone(),
                ..base
            },
            Variant::SoftBins { k } => GazeRecipe {
                soft_bins: Some(*k),
                ..base
            },
        }
    }

    /// Short label for tables.
    pub fn label(&self) -> String {
        match self {
            Variant::BaselineDpm => "baseline_dpm".into(),
            Variant::Gazedpm => "gazedpm".into(),
            Variant::Noise { sigma_scale } => format!("noise({sigma_scale})"),
            Variant::Subsample { strategy } => {
                format!("subsample({})", serde_json::to_string(strategy).unwrap_or_default())
            }
            Variant::PerObserver { observer } => format!("per_observer({observer})"),
            Variant::Saliency { .. } => "saliency".into(),
            Variant::SoftBins { k } => format!("soft_bins({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub variant: Variant,
    pub train: TrainConfig,
    /// Classes to train and evaluate; all annotated classes when absent.
    pub classes: Option<Vec<String>>,
    /// Seed of the gaze transformations (noise, random subsets, k-means).
    pub gaze_seed: u64,
    pub screen: ScreenGeometry,
    /// Detections scoring at or below this are not reported.
    pub detection_threshold: f64,
    pub match_iou: f64,
    /// Use the 11-point AP rule instead of every-point.
    pub eleven_point: bool,
    /// Record test-split AP after every training round.
    pub track_test_ap: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            variant: Variant::Gazedpm,
            train: TrainConfig::default(),
            classes: None,
            gaze_seed: 0,
            screen: ScreenGeometry::default(),
            detection_threshold: -3.0,
            match_iou: DEFAULT_MATCH_IOU,
            eleven_point: false,
            track_test_ap: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.match_iou > 0.0 && self.match_iou <= 1.0) {
            return Err(Error::Config(format!(
                "match_iou must lie in (0, 1], got {}",
                self.match_iou
            )));
        }
        if self.detection_threshold.is_nan() {
            return Err(Error::Config("detection_threshold is NaN".into()));
        }
        self.recipe().validate()
    }

    pub fn recipe(&self) -> GazeRecipe {
        self.variant.recipe(self.gaze_seed, self.screen)
    }

    /// Hex SHA-256 of the fully resolved spec.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("spec serializes").as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub sgd: u64,
    pub gaze: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class: String,
    pub ap: f64,
    /// Non-difficult test boxes.
    pub n_positive: usize,
    pub n_detections: usize,
    pub train_positives: usize,
    pub train_negatives: usize,
    /// SHA-256 of the serialized model.
    pub model_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub variant: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub spec: ExperimentSpec,
    pub gaze_recipe: GazeRecipe,
    pub classes: Vec<ClassResult>,
    pub map: f64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Experiment `{}`\n", self.variant);
        let _ = writeln!(md, "- config hash: `{}`", self.config_hash);
        let _ = writeln!(md, "- seeds: sgd {}, gaze {}\n", self.seeds.sgd, self.seeds.gaze);
        let _ = writeln!(
            md,
            "| class | AP | test positives | detections | train positives | train negatives |"
        );
        let _ = writeln!(md, "|---|---:|---:|---:|---:|---:|");
        for c in &self.classes {
            let _ = writeln!(
                md,
                "| {} | {:.2} | {} | {} | {} | {} |",
                c.class,
                100.0 * c.ap,
                c.n_positive,
                c.n_detections,
                c.train_positives,
                c.train_negatives
            );
        }
        let _ = writeln!(md, "| **mAP** | **{:.2}** | | | | |", 100.0 * self.map);
        md
    }
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub models: Vec<Model>,
    pub detections: Vec<DetectionRecord>,
    /// Training telemetry tagged with the class.
    pub telemetry: Vec<(String, RoundTelemetry)>,
}

/// An image with its gaze channels, as loaded for an experiment.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub id: String,
    pub image: Raster,
    pub maps: Vec<DensityMap>,
}

/// Decodes the listed images and derives their gaze channels.
pub fn load_images(dataset: &Dataset, mapper: &GazeMapper, ids: &[String]) -> Result<Vec<LoadedImage>> {
    ids.par_iter()
        .map(|id| {
            Ok(LoadedImage {
                id: id.clone(),
                image: dataset.image(id)?,
                maps: mapper.maps(dataset, id)?,
            })
        })
        .collect()
}

/// Training samples for `class`: positives hold its non-difficult boxes,
/// negatives are the images without any box of the class.
pub fn class_samples(dataset: &Dataset, images: &[LoadedImage], class: &str) -> (Vec<TrainSample>, Vec<TrainSample>) {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for img in images {
        let anns: Vec<_> = dataset.annotations(&img.id).filter(|a| a.class == class).collect();
        let boxes: Vec<_> = anns.iter().filter(|a| !a.difficult).map(|a| a.bbox).collect();
        let sample = |boxes| TrainSample {
            id: img.id.clone(),
            image: img.image.clone(),
            density_maps: img.maps.clone(),
            boxes,
        };
        if anns.is_empty() {
            negatives.push(sample(Vec::new()));
        } else if !boxes.is_empty() {
            positives.push(sample(boxes));
        }
    }
    (positives, negatives)
}

/// Runs `model` on every image, keeping detections above `threshold`.
pub fn detect_all(model: &Model, images: &[LoadedImage], threshold: f64) -> Result<Vec<DetectionRecord>> {
    let per_image: Vec<Result<Vec<DetectionRecord>>> = images
        .par_iter()
        .map(|img| {
            Ok(detect(&img.image, &img.maps, model, threshold)?
                .into_iter()
                .map(|d| DetectionRecord {
                    image_id: img.id.clone(),
                    class: model.class_name.clone(),
                    bbox: d.bbox,
                    score: d.score,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_image {
        out.extend(r?);
    }
    Ok(out)
}

/// AP of `class` over the images `ids` from detection records (records of
/// other classes or images are ignored).
pub fn class_ap(
    dataset: &Dataset,
    ids: &[String],
    class: &str,
    detections: &[DetectionRecord],
    iou: f64,
    eleven_point: bool,
) -> Result<(f64, usize)> {
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let truth: Vec<Vec<GroundTruthBox>> = ids
        .iter()
        .map(|id| {
            dataset
                .annotations(id)
                .filter(|a| a.class == class)
                .map(|a| GroundTruthBox {
                    bbox: a.bbox,
                    difficult: a.difficult,
                })
                .collect()
        })
        .collect();
    let scored: Vec<ScoredBox> = detections
        .iter()
        .filter(|d| d.class == class)
        .filter_map(|d| {
            index.get(d.image_id.as_str()).map(|&image| ScoredBox {
                image,
                bbox: d.bbox,
                score: d.score,
            })
        })
        .collect();
    let n_positive = truth.iter().flatten().filter(|g| !g.difficult).count();
    Ok((evaluate_detections(&scored, &truth, iou, eleven_point).ap, n_positive))
}

fn check_disjoint(dataset: &Dataset) -> Result<()> {
    let train: HashSet<&String> = dataset.train_ids().iter().collect();
    let shared: Vec<&String> = dataset.test_ids().iter().filter(|id| train.contains(id)).collect();
    if let Some(first) = shared.first() {
        return Err(Error::SplitLeakage {
            count: shared.len(),
            example: (*first).clone(),
        });
    }
    Ok(())
}

/// Trains and evaluates one model per class under `spec`.
pub fn run_experiment(dataset: &Dataset, spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    check_disjoint(dataset)?;
    let classes = match &spec.classes {
        Some(c) => {
            let known = dataset.classes();
            if let Some(bad) = c.iter().find(|k| !known.contains(k)) {
                return Err(Error::NotFound(format!("class '{bad}' in the dataset annotations")));
            }
            c.clone()
        }
        None => dataset.classes(),
    };
    let recipe = spec.recipe();
    let mapper = recipe.prepare(dataset)?;
    let train_images = load_images(dataset, &mapper, dataset.train_ids())?;
    let test_images = load_images(dataset, &mapper, dataset.test_ids())?;

    let mut models = Vec::new();
    let mut detections = Vec::new();
    let mut telemetry = Vec::new();
    let mut results = Vec::new();
    for class in &classes {
        let (positives, negatives) = class_samples(dataset, &train_images, class);
        let validation = if spec.track_test_ap {
            class_samples_all(dataset, &test_images, class)
        } else {
            Vec::new()
        };
        log::info!(
            "training '{class}' ({}): {} positive and {} negative images",
            spec.variant.label(),
            positives.len(),
            negatives.len()
        );
        let outcome = train(
            class,
            mapper.channels(),
            &positives,
            &negatives,
            &validation,
            &spec.train,
        )?;
        let mut model = outcome.model;
        model.metadata.gaze_recipe = Some(recipe.to_json());
        let dets = detect_all(&model, &test_images, spec.detection_threshold)?;
        let (ap, n_positive) = class_ap(
            dataset,
            dataset.test_ids(),
            class,
            &dets,
            spec.match_iou,
            spec.eleven_point,
        )?;
        log::info!("'{class}': AP {:.4} over {n_positive} test boxes", ap);
        results.push(ClassResult {
            class: class.clone(),
            ap,
            n_positive,
            n_detections: dets.len(),
            train_positives: positives.iter().map(|s| s.boxes.len()).sum(),
            train_negatives: negatives.len(),
            model_sha256: sha256_hex(model_to_json(&model).as_bytes()),
        });
        telemetry.extend(outcome.telemetry.into_iter().map(|t| (class.clone(), t)));
        detections.extend(dets);
        models.push(model);
    }
    let map = if results.is_empty() {
        0.0
    } else {
        results.iter().map(|r| r.ap).sum::<f64>() / results.len() as f64
    };
    let report = ExperimentReport {
        variant: spec.variant.label(),
        config_hash: spec.hash(),
        seeds: Seeds {
            sgd: spec.train.sgd.seed,
            gaze: spec.gaze_seed,
        },
        spec: spec.clone(),
        gaze_recipe: recipe,
        classes: results,
        map,
    };
    Ok(ExperimentOutcome {
        report,
        models,
        detections,
        telemetry,
    })
}

/// All images with the class's non-difficult boxes (possibly none).
fn class_samples_all(dataset: &Dataset, images: &[LoadedImage], class: &str) -> Vec<TrainSample> {
    images
        .iter()
        .map(|img| TrainSample {
            id: img.id.clone(),
            image: img.image.clone(),
            density_maps: img.maps.clone(),
            boxes: dataset
                .annotations(&img.id)
                .filter(|a| a.class == class && !a.difficult)
                .map(|a| a.bbox)
                .collect(),
        })
        .collect()
}

#[derive(Serialize)]
struct TelemetryLine<'a> {
    class: &'a str,
    #[serde(flatten)]
    round: &'a RoundTelemetry,
}

/// Writes `report.json`, `report.md`, `detections.jsonl`, `telemetry.jsonl`
/// and `models/<class>.json` under `dir`.
pub fn write_outcome(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    let models_dir = dir.join("models");
    std::fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    for m in &outcome.models {
        save_model(m, &models_dir.join(format!("{}.json", m.class_name)))?;
    }
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("report.json", outcome.report.to_json().as_bytes())?;
    write("report.md", outcome.report.to_markdown().as_bytes())?;
    let mut dets = Vec::new();
    write_detections(&mut dets, &outcome.detections)?;
    write("detections.jsonl", &dets)?;
    let mut tel = String::new();
    for (class, round) in &outcome.telemetry {
        tel.push_str(&serde_json::to_string(&TelemetryLine { class, round }).expect("telemetry serializes"));
        tel.push('\n');
    }
    write("telemetry.jsonl", tel.as_bytes())
}
