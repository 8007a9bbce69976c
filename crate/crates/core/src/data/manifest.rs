//! Dataset manifests: images, annotations, fixation log and train/test split.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dpm::persist::json_pointer;
use crate::error::{Error, Result};
use crate::gaze::fixation::{read_fixations, FixationRecord, ImageDims};
use crate::gaze::Fixation;
use crate::geometry::BBox;
use crate::raster::Raster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub id: String,
    /// Path relative to the dataset root.
    pub file: PathBuf,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub image_id: String,
    pub class: String,
    pub bbox: BBox,
    #[serde(default)]
    pub difficult: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Dataset root, relative to the manifest's directory. Defaults to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub images: Vec<ImageEntry>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    /// Fixation CSV, relative to the root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixations: Option<PathBuf>,
    /// Directory holding `<image id>.png` or `<image id>.grid` saliency maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency_dir: Option<PathBuf>,
    pub split: Split,
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let m: DatasetManifest = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let pointer = json_pointer(e.path());
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() {
                Error::parse("manifest", inner)
            } else {
                schema(pointer, inner.to_string())
            }
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        s.push('\n');
        s
    }

    /// Structural checks that need no file system access.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for (i, img) in self.images.iter().enumerate() {
            if !ids.insert(img.id.as_str()) {
                return Err(schema(
                    format!("/images/{i}/id"),
                    format!("duplicate image id '{}'", img.id),
                ));
            }
            if img.width == 0 || img.height == 0 {
                return Err(schema(
                    format!("/images/{i}"),
                    format!("image '{}' has a zero dimension", img.id),
                ));
            }
        }
        for (i, a) in self.annotations.iter().enumerate() {
            if !ids.contains(a.image_id.as_str()) {
                return Err(schema(
                    format!("/annotations/{i}/image_id"),
                    format!("unknown image id '{}'", a.image_id),
                ));
            }
            if !a.bbox.is_valid() {
                return Err(schema(
                    format!("/annotations/{i}/bbox"),
                    "box needs finite position and w, h > 0",
                ));
            }
        }
        let mut train = HashSet::new();
        check_split_list("train", &self.split.train, &ids, &mut train)?;
        let mut test = HashSet::new();
        check_split_list("test", &self.split.test, &ids, &mut test)?;
        let mut leaked: Vec<&str> = train.intersection(&test).copied().collect();
        if !leaked.is_empty() {
            leaked.sort_unstable();
            return Err(Error::SplitLeakage {
                count: leaked.len(),
                example: leaked[0].to_string(),
            });
        }
        if let Some((i, img)) = self
            .images
            .iter()
            .enumerate()
            .find(|(_, img)| !train.contains(img.id.as_str()) && !test.contains(img.id.as_str()))
        {
            return Err(schema(
                format!("/images/{i}/id"),
                format!("image '{}' is in neither split", img.id),
            ));
        }
        Ok(())
    }
}

fn check_split_list<'a>(name: &str, list: &'a [String], ids: &HashSet<&str>, set: &mut HashSet<&'a str>) -> Result<()> {
    for (i, id) in list.iter().enumerate() {
        if !ids.contains(id.as_str()) {
            return Err(schema(format!("/split/{name}/{i}"), format!("unknown image id '{id}'")));
        }
        if !set.insert(id.as_str()) {
            return Err(schema(
                format!("/split/{name}/{i}"),
                format!("image '{id}' listed twice"),
            ));
        }
    }
    Ok(())
}

/// A validated dataset. Fixations are parsed up front; images are decoded
/// on request.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    root: PathBuf,
    index: HashMap<String, usize>,
    records: Vec<FixationRecord>,
    by_image: HashMap<String, Vec<Fixation>>,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest = DatasetManifest::from_json(&text)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        Self::open(manifest, dir)
    }

    /// Opens a manifest whose relative paths resolve against `dir`.
    pub fn open(manifest: DatasetManifest, dir: &Path) -> Result<Self> {
        manifest.validate()?;
        let root = match &manifest.root {
            Some(r) => dir.join(r),
            None => dir.to_path_buf(),
        };
        let mut missing: Vec<PathBuf> = manifest
            .images
            .iter()
            .map(|img| root.join(&img.file))
            .filter(|p| !p.is_file())
            .collect();
        let fix_path = manifest.fixations.as_ref().map(|f| root.join(f));
        if let Some(p) = &fix_path {
            if !p.is_file() {
                missing.push(p.clone());
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingFiles(missing));
        }
        let index: HashMap<String, usize> = manifest
            .images
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.clone(), i))
            .collect();
        let records = match &fix_path {
            Some(p) => {
                let dims: ImageDims = manifest
                    .images
                    .iter()
                    .map(|m| (m.id.clone(), (m.width, m.height)))
                    .collect();
                let file = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
                read_fixations(std::io::BufReader::new(file), Some(&dims)).map_err(|e| match e {
                    Error::Parse { context, message } => Error::Parse {
                        context: format!("{} ({context})", p.display()),
                        message,
                    },
                    other => other,
                })?
            }
            None => Vec::new(),
        };
        let mut by_image: HashMap<String, Vec<Fixation>> = HashMap::new();
        for r in &records {
            by_image.entry(r.image_id.clone()).or_default().push(r.fixation.clone());
        }
        Ok(Dataset {
            manifest,
            root,
            index,
            records,
            by_image,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry(&self, id: &str) -> Result<&ImageEntry> {
        self.index
            .get(id)
            .map(|&i| &self.manifest.images[i])
            .ok_or_else(|| Error::NotFound(format!("image '{id}'")))
    }

    /// Decodes an image to grayscale; it must match the manifest's size.
    pub fn image(&self, id: &str) -> Result<Raster> {
        let entry = self.entry(id)?;
        let path = self.root.join(&entry.file);
        let img = Raster::load_gray(&path)?;
        if (img.width, img.height) != (entry.width, entry.height) {
            return Err(Error::Data(format!(
                "{} is {}x{}, manifest says {}x{}",
                path.display(),
                img.width,
                img.height,
                entry.width,
                entry.height
            )));
        }
        Ok(img)
    }

    pub fn fixations(&self, id: &str) -> &[Fixation] {
        self.by_image.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The fixation log in file order.
    pub fn fixation_records(&self) -> &[FixationRecord] {
        &self.records
    }

    pub fn annotations<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Annotation> + 'a {
        self.manifest.annotations.iter().filter(move |a| a.image_id == id)
    }

    /// Sorted distinct class names.
    pub fn classes(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.manifest.annotations.iter().map(|a| a.class.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// First annotated class of each image, for viewing-time bookkeeping.
    pub fn first_class_of(&self) -> HashMap<String, String> {
        let mut out = HashMap::new();
        for a in &self.manifest.annotations {
            out.entry(a.image_id.clone()).or_insert_with(|| a.class.clone());
        }
        out
    }

    pub fn train_ids(&self) -> &[String] {
        &self.manifest.split.train
    }

    pub fn test_ids(&self) -> &[String] {
        &self.manifest.split.test
    }

    /// Saliency map file of an image, preferring PNG over the raw grid.
    pub fn saliency_path(&self, id: &str) -> Option<PathBuf> {
        let dir = self.root.join(self.manifest.saliency_dir.as_ref()?);
        let png = dir.join(format!("{id}.png"));
        if png.is_file() {
            return Some(png);
        }
        Some(dir.join(format!("{id}.grid")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
          "images": [{"id": "a", "file": "a.png", "width": 10, "height": 8}],
          "annotations": [{"image_id": "a", "class": "c", "bbox": {"x": 1, "y": 1, "w": 3, "h": 3}}],
          "split": {"train": ["a"], "test": []}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_manifest_parses() {
        let m = DatasetManifest::from_json(&minimal()).unwrap();
        assert_eq!(m.images.len(), 1);
        assert!(!m.annotations[0].difficult);
        assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn duplicate_ids_name_the_id() {
        let text = minimal().replace(
            r#"{"id": "a", "file": "a.png", "width": 10, "height": 8}"#,
            r#"{"id": "a", "file": "a.png", "width": 10, "height": 8}, {"id": "a", "file": "b.png", "width": 1, "height": 1}"#,
        );
        match DatasetManifest::from_json(&text) {
            Err(Error::Schema { pointer, message }) => {
                assert_eq!(pointer, "/images/1/id");
                assert!(message.contains("'a'"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlapping_split_is_leakage() {
        let text = minimal().replace(r#""test": []"#, r#""test": ["a"]"#);
        assert!(matches!(
            DatasetManifest::from_json(&text),
            Err(Error::SplitLeakage { count: 1, .. })
        ));
    }

    #[test]
    fn type_errors_carry_pointer() {
        let text = minimal().replace(r#""width": 10"#, r#""width": "ten""#);
        match DatasetManifest::from_json(&text) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/images/0/width"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(DatasetManifest::from_json("{"), Err(Error::Parse { .. })));
    }

    #[test]
    fn uncovered_and_unknown_ids_are_rejected() {
        let text = minimal().replace(r#""train": ["a"]"#, r#""train": []"#);
        assert!(matches!(DatasetManifest::from_json(&text), Err(Error::Schema { .. })));
        let text = minimal().replace(r#""test": []"#, r#""test": ["zz"]"#);
        assert!(matches!(DatasetManifest::from_json(&text), Err(Error::Schema { .. })));
        let text = minimal().replace(r#""image_id": "a""#, r#""image_id": "q""#);
        assert!(matches!(DatasetManifest::from_json(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn missing_files_are_listed() {
        let m = DatasetManifest::from_json(&minimal()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        match Dataset::open(m, dir.path()) {
            Err(Error::MissingFiles(files)) => assert_eq!(files, vec![dir.path().join("a.png")]),
            other => panic!("{other:?}"),
        }
    }
}
