//! Mixture-of-star-components model definition.

use crate::dpm::dt::{Deformation, DEFORMATION_FLOOR};
use crate::dpm::filter::Filter;
use crate::error::{Error, Result};
use crate::features::IMAGE_CHANNELS;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub filter: Filter,
    /// Ideal top-left cell of the part inside the doubled root, at part resolution.
    pub anchor: (usize, usize),
    pub deformation: Deformation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub root: Filter,
    pub parts: Vec<Part>,
    pub bias: f32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMetadata {
    pub config_hash: Option<String>,
    /// Free-form description of how the gaze channels were produced.
    pub gaze_recipe: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub class_name: String,
    pub gaze_channels: usize,
    pub cell_size: usize,
    pub levels_per_octave: usize,
    pub components: Vec<Component>,
    pub metadata: ModelMetadata,
}

impl Component {
    pub fn root_only(root: Filter) -> Self {
        Component {
            root,
            parts: Vec::new(),
            bias: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.root.channels
    }

    /// Length of the flattened parameter vector: root weights, then for each
    /// part its weights followed by the four deformation coefficients, then
    /// the bias.
    pub fn param_len(&self) -> usize {
        self.root.len() + self.parts.iter().map(|p| p.filter.len() + 4).sum::<usize>() + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        out.extend(self.root.values.iter().map(|&v| v as f64));
        for p in &self.parts {
            out.extend(p.filter.values.iter().map(|&v| v as f64));
            out.extend(p.deformation.as_array().iter().map(|&v| v as f64));
        }
        out.push(self.bias as f64);
        out
    }

    /// Inverse of [`Component::params`]; values are rounded to f32.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                params.len()
            )));
        }
        let mut it = params.iter().map(|&v| v as f32);
        for v in &mut self.root.values {
            *v = it.next().unwrap();
        }
        for p in &mut self.parts {
            for v in &mut p.filter.values {
                *v = it.next().unwrap();
            }
            let d: Vec<f32> = it.by_ref().take(4).collect();
            p.deformation = Deformation::new(d[0], d[1], d[2], d[3]);
        }
        self.bias = it.next().unwrap();
        Ok(())
    }

    fn validate(&self, channels: usize, index: usize) -> Result<()> {
        let ctx = |msg: String| Error::invalid(format!("component {index}: {msg}"));
        if self.root.channels != channels {
            return Err(ctx(format!(
                "root has {} channels, expected {channels}",
                self.root.channels
            )));
        }
        if self.root.width == 0 || self.root.height == 0 {
            return Err(ctx("empty root filter".into()));
        }
        if !self.root.is_finite() || !self.bias.is_finite() {
            return Err(ctx("non-finite root or bias".into()));
        }
        for (i, p) in self.parts.iter().enumerate() {
            if p.filter.channels != channels || p.filter.width == 0 || p.filter.height == 0 {
                return Err(ctx(format!("part {i} has a malformed filter")));
            }
            if !p.filter.is_finite() || !p.deformation.as_array().iter().all(|v| v.is_finite()) {
                return Err(ctx(format!("part {i} has non-finite weights")));
            }
            if p.anchor.0 + p.filter.width > 2 * self.root.width || p.anchor.1 + p.filter.height > 2 * self.root.height
            {
                return Err(ctx(format!("part {i} sticks out of the doubled root")));
            }
            if p.deformation.dx2 < DEFORMATION_FLOOR || p.deformation.dy2 < DEFORMATION_FLOOR {
                return Err(ctx(format!(
                    "part {i} deformation is below the {DEFORMATION_FLOOR} floor"
                )));
            }
        }
        Ok(())
    }
}

impl Model {
    pub fn channels(&self) -> usize {
        IMAGE_CHANNELS + self.gaze_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("model has no components"));
        }
        if self.cell_size == 0 || self.levels_per_octave == 0 {
            return Err(Error::invalid("cell size and levels per octave must be >= 1"));
        }
        let channels = self.channels();
        for (i, c) in self.components.iter().enumerate() {
            c.validate(channels, i)?;
        }
        Ok(())
    }

    /// Zero cells added around each root-level map: half the largest root
    /// extent, so roots may hang halfway off the image.
    pub fn padding(&self) -> (usize, usize) {
        let w = self.components.iter().map(|c| c.root.width).max().unwrap_or(0);
        let h = self.components.iter().map(|c| c.root.height).max().unwrap_or(0);
        (w.div_ceil(2), h.div_ceil(2))
    }

    /// Smallest root side; pyramids stop before cell grids get smaller.
    pub fn min_root_cells(&self) -> usize {
        self.components
            .iter()
            .map(|c| c.root.width.min(c.root.height))
            .min()
            .unwrap_or(1)
    }

    /// Copy restricted to the first `IMAGE_CHANNELS` channels of every
    /// filter, as if it had been built without gaze channels.
    pub fn without_gaze(&self) -> Model {
        let strip = |f: &Filter| Filter {
            width: f.width,
            height: f.height,
            channels: IMAGE_CHANNELS,
            values: f.channel_block(0, IMAGE_CHANNELS),
        };
        Model {
            gaze_channels: 0,
            components: self
                .components
                .iter()
                .map(|c| Component {
                    root: strip(&c.root),
                    parts: c
                        .parts
                        .iter()
                        .map(|p| Part {
                            filter: strip(&p.filter),
                            ..p.clone()
                        })
                        .collect(),
                    bias: c.bias,
                })
                .collect(),
            ..self.clone()
        }
    }
}
