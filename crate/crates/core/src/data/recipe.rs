//! Turning a dataset's gaze data into per-image density-map channels.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gaze::fixation::group_by_image;
use crate::gaze::subsample::select;
use crate::gaze::viewing::{records_from_sessions, sessions_from_records};
use crate::gaze::{
    add_gaze_noise, build_density_map, kmeans_centroids, load_saliency_map, normalize_viewing_times, soft_bin_maps,
    BinCentroids, DensityMap, Fixation, ScreenGeometry, SubsampleStrategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeSource {
    /// No gaze channels (image-only model).
    #[default]
    None,
    /// Density maps built from the fixation log.
    Fixations,
    /// Saliency maps loaded from files, one per image.
    Saliency,
}

/// How gaze channels are derived for every image. The same recipe is applied
/// to training and test images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazeRecipe {
    pub source: GazeSource,
    /// Saliency directory overriding the manifest's.
    pub saliency_dir: Option<PathBuf>,
    pub subsample: Option<SubsampleStrategy>,
    /// Gaze noise as a multiple of the screen geometry's base sigma.
    pub noise_scale: f64,
    /// Number of duration bins; `None` builds a single duration-weighted map.
    pub soft_bins: Option<usize>,
    pub screen: ScreenGeometry,
    pub seed: u64,
}

impl Default for GazeRecipe {
    fn default() -> Self {
        GazeRecipe {
            source: GazeSource::None,
            saliency_dir: None,
            subsample: None,
            noise_scale: 0.0,
            soft_bins: None,
            screen: ScreenGeometry::default(),
            seed: 0,
        }
    }
}

impl GazeRecipe {
    pub fn fixations() -> Self {
        GazeRecipe {
            source: GazeSource::Fixations,
            ..Default::default()
        }
    }

    pub fn channels(&self) -> usize {
        match self.source {
            GazeSource::None => 0,
            GazeSource::Saliency => 1,
            GazeSource::Fixations => self.soft_bins.unwrap_or(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise_scale must be >= 0, got {}",
                self.noise_scale
            )));
        }
        if self.soft_bins == Some(0) {
            return Err(Error::Config("soft_bins must be >= 1".into()));
        }
        if let Some(s) = &self.subsample {
            s.validate()?;
        }
        self.screen.validate()
    }

    /// Durations and onsets are expressed in units of each observer's mean
    /// viewing time when binning by duration or selecting by time.
    fn needs_normalized_times(&self) -> bool {
        self.soft_bins.is_some()
            || matches!(
                self.subsample,
                Some(SubsampleStrategy::BeforeTime(_) | SubsampleStrategy::AfterTime(_))
            )
    }

    /// Resolves everything that depends on the whole corpus: viewing-time
    /// normalization, fixation selection, bin centroids (fit on the training
    /// split) and saliency file presence.
    pub fn prepare(&self, dataset: &Dataset) -> Result<GazeMapper> {
        self.validate()?;
        let mut mapper = GazeMapper {
            recipe: self.clone(),
            fixations: HashMap::new(),
            centroids: None,
            saliency: HashMap::new(),
        };
        match self.source {
            GazeSource::None => {}
            GazeSource::Saliency => {
                let mut missing = Vec::new();
                for img in &dataset.manifest.images {
                    let path = match &self.saliency_dir {
                        Some(dir) => {
                            let png = dir.join(format!("{}.png", img.id));
                            if png.is_file() {
                                png
                            } else {
                                dir.join(format!("{}.grid", img.id))
                            }
                        }
                        None => dataset.saliency_path(&img.id).ok_or_else(|| {
                            Error::Config("saliency maps requested but no saliency directory is configured".into())
                        })?,
                    };
                    if !path.is_file() {
                        missing.push(path.clone());
                    }
                    mapper.saliency.insert(img.id.clone(), path);
                }
                if !missing.is_empty() {
                    return Err(Error::MissingFiles(missing));
                }
            }
            GazeSource::Fixations => {
                let mut records = dataset.fixation_records().to_vec();
                if self.needs_normalized_times() {
                    let sessions = sessions_from_records(&records, &dataset.first_class_of());
                    records = records_from_sessions(&normalize_viewing_times(&sessions)?.0);
                }
                if let Some(SubsampleStrategy::Observer(id)) = &self.subsample {
                    if !records.iter().any(|r| &r.fixation.observer_id == id) {
                        return Err(Error::NotFound(format!("observer '{id}'")));
                    }
                }
                for (id, fx) in group_by_image(&records) {
                    let fx = match &self.subsample {
                        Some(s) => select(&fx, s, image_seed(self.seed, "subsample", &id))?,
                        None => fx,
                    };
                    mapper.fixations.insert(id, fx);
                }
                if let Some(k) = self.soft_bins {
                    let durations: Vec<f64> = dataset
                        .train_ids()
                        .iter()
                        .flat_map(|id| mapper.fixations.get(id).into_iter().flatten())
                        .map(|f| {
                            f.duration
                                .ok_or_else(|| Error::Data("soft binning needs fixation durations".into()))
                        })
                        .collect::<Result<_>>()?;
                    mapper.centroids = Some(kmeans_centroids(&durations, k, self.seed)?);
                }
            }
        }
        Ok(mapper)
    }

    /// Canonical JSON, stored in model metadata.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("recipe serializes")
    }
}

/// Seed for one image's random draws, independent of image order.
pub fn image_seed(seed: u64, purpose: &str, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update([0]);
    h.update(image_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// A recipe bound to a dataset.
#[derive(Debug, Clone)]
pub struct GazeMapper {
    recipe: GazeRecipe,
    fixations: HashMap<String, Vec<Fixation>>,
    centroids: Option<BinCentroids<1>>,
    saliency: HashMap<String, PathBuf>,
}

impl GazeMapper {
    pub fn recipe(&self) -> &GazeRecipe {
        &self.recipe
    }

    pub fn channels(&self) -> usize {
        self.recipe.channels()
    }

    pub fn centroids(&self) -> Option<&BinCentroids<1>> {
        self.centroids.as_ref()
    }

    /// Selected (possibly time-normalized) fixations of an image, before noise.
    pub fn fixations(&self, id: &str) -> &[Fixation] {
        self.fixations.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Selected fixations of image `id` after gaze noise; these are what the
    /// density maps are built from.
    pub fn noisy_fixations(&self, dataset: &Dataset, id: &str) -> Result<Vec<Fixation>> {
        let entry = dataset.entry(id)?;
        add_gaze_noise(
            self.fixations(id),
            self.recipe.noise_scale,
            &self.recipe.screen,
            (entry.width, entry.height),
            image_seed(self.recipe.seed, "noise", id),
        )
    }

    /// Gaze channels of image `id` at its manifest size.
    pub fn maps(&self, dataset: &Dataset, id: &str) -> Result<Vec<DensityMap>> {
        let entry = dataset.entry(id)?;
        let (w, h) = (entry.width, entry.height);
        match self.recipe.source {
            GazeSource::None => Ok(Vec::new()),
            GazeSource::Saliency => {
                let path = self
                    .saliency
                    .get(id)
                    .ok_or_else(|| Error::NotFound(format!("saliency map of '{id}'")))?;
                Ok(vec![load_saliency_map(path, w, h)?])
            }
            GazeSource::Fixations => {
                let fx = self.noisy_fixations(dataset, id)?;
                match &self.centroids {
                    Some(c) => soft_bin_maps(&fx, c, w, h),
                    None => Ok(vec![build_density_map(&fx, w, h)?]),
                }
            }
        }
    }
}
