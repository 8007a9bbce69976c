//! Versioned JSON model files with base64 little-endian f32 tensors.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::dpm::dt::Deformation;
use crate::dpm::filter::Filter;
use crate::dpm::model::{Component, Model, ModelMetadata, Part, MODEL_VERSION};
use crate::error::{Error, Result};

const FORMAT: &str = "gazedpm-model";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    class_name: String,
    gaze_channels: usize,
    cell_size: usize,
    levels_per_octave: usize,
    #[serde(default)]
    metadata: MetadataFile,
    components: Vec<ComponentFile>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MetadataFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gaze_recipe: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentFile {
    bias: f32,
    root: TensorFile,
    parts: Vec<PartFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartFile {
    anchor: [usize; 2],
    deformation: [f32; 4],
    filter: TensorFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorFile {
    width: usize,
    height: usize,
    channels: usize,
    /// Base64 of `height * width * channels` little-endian f32, channel fastest.
    data: String,
}

impl TensorFile {
    fn encode(f: &Filter) -> Self {
        let bytes: Vec<u8> = f.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        TensorFile {
            width: f.width,
            height: f.height,
            channels: f.channels,
            data: B64.encode(bytes),
        }
    }

    fn decode(&self, pointer: &str) -> Result<Filter> {
        let schema = |message: String| Error::Schema {
            pointer: pointer.to_string(),
            message,
        };
        let bytes = B64.decode(&self.data).map_err(|e| schema(format!("bad base64: {e}")))?;
        let expected = self
            .width
            .checked_mul(self.height)
            .and_then(|n| n.checked_mul(self.channels))
            .and_then(|n| n.checked_mul(4));
        if expected != Some(bytes.len()) {
            return Err(schema(format!(
                "{}x{}x{} tensor does not match {} data bytes",
                self.width,
                self.height,
                self.channels,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Filter::from_values(self.width, self.height, self.channels, values)
    }
}

pub fn model_to_json(model: &Model) -> String {
    let file = ModelFile {
        format: FORMAT.into(),
        version: MODEL_VERSION,
        class_name: model.class_name.clone(),
        gaze_channels: model.gaze_channels,
        cell_size: model.cell_size,
        levels_per_octave: model.levels_per_octave,
        metadata: MetadataFile {
            config_hash: model.metadata.config_hash.clone(),
            gaze_recipe: model.metadata.gaze_recipe.clone(),
        },
        components: model
            .components
            .iter()
            .map(|c| ComponentFile {
                bias: c.bias,
                root: TensorFile::encode(&c.root),
                parts: c
                    .parts
                    .iter()
                    .map(|p| PartFile {
                        anchor: [p.anchor.0, p.anchor.1],
                        deformation: p.deformation.as_array(),
                        filter: TensorFile::encode(&p.filter),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serialization cannot fail");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::parse("model file", e))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == MODEL_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::UnsupportedVersion {
                found: u32::try_from(v).unwrap_or(u32::MAX),
                supported: MODEL_VERSION,
            })
        }
        None => {
            return Err(Error::Schema {
                pointer: "/version".into(),
                message: "missing or non-integer version".into(),
            })
        }
    }
    let file: ModelFile = serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    if file.format != FORMAT {
        return Err(Error::Schema {
            pointer: "/format".into(),
            message: format!("expected \"{FORMAT}\", found \"{}\"", file.format),
        });
    }
    let components = file
        .components
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let parts = c
                .parts
                .iter()
                .enumerate()
                .map(|(pi, p)| {
                    let [dx, dx2, dy, dy2] = p.deformation;
                    Ok(Part {
                        filter: p.filter.decode(&format!("/components/{ci}/parts/{pi}/filter"))?,
                        anchor: (p.anchor[0], p.anchor[1]),
                        deformation: Deformation::new(dx, dx2, dy, dy2),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Component {
                root: c.root.decode(&format!("/components/{ci}/root"))?,
                parts,
                bias: c.bias,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = Model {
        class_name: file.class_name,
        gaze_channels: file.gaze_channels,
        cell_size: file.cell_size,
        levels_per_octave: file.levels_per_octave,
        components,
        metadata: ModelMetadata {
            config_hash: file.metadata.config_hash,
            gaze_recipe: file.metadata.gaze_recipe,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Converts a serde path such as `components[0].root.width` to a JSON pointer.
pub(crate) fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
