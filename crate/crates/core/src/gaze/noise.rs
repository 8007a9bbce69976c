//! Simulated gaze-estimation error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::fixation::Fixation;

/// Viewing setup used to express gaze error in screen centimetres.
///
/// Images are scaled proportionally to fit the screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub distance_cm: f64,
    pub screen_w_cm: f64,
    pub screen_h_cm: f64,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        ScreenGeometry {
            distance_cm: 75.0,
            screen_w_cm: 28.0,
            screen_h_cm: 18.0,
        }
    }
}

impl ScreenGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.distance_cm, self.screen_w_cm, self.screen_h_cm]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("screen geometry must be positive: {self:?}")))
        }
    }

    /// Screen centimetres per image pixel under scale-to-fit.
    pub fn cm_per_pixel(&self, width: usize, height: usize) -> f64 {
        (self.screen_w_cm / width as f64).min(self.screen_h_cm / height as f64)
    }

    /// Base noise standard deviation in cm: a 3+3 degree error at the
    /// viewing distance taken as three standard deviations.
    pub fn base_sigma_cm(&self) -> f64 {
        self.distance_cm * 6.0f64.to_radians().tan() / 3.0
    }
}

/// Perturbs every fixation by i.i.d. Gaussian noise with standard deviation
/// `sigma_scale * geom.base_sigma_cm()` per axis (in screen cm) and clamps
/// the result into the image.
pub fn add_gaze_noise(
    fixations: &[Fixation],
    sigma_scale: f64,
    geom: &ScreenGeometry,
    image_dims: (usize, usize),
    seed: u64,
) -> Result<Vec<Fixation>> {
    geom.validate()?;
    let (width, height) = image_dims;
    if width == 0 || height == 0 {
        return Err(Error::invalid("image has a zero dimension"));
    }
    if !(sigma_scale >= 0.0 && sigma_scale.is_finite()) {
        return Err(Error::invalid(format!("sigma_scale must be >= 0, got {sigma_scale}")));
    }
    if sigma_scale == 0.0 {
        return Ok(fixations.to_vec());
    }
    let cm_per_px = geom.cm_per_pixel(width, height);
    let sigma_cm = sigma_scale * geom.base_sigma_cm();
    let max_x = (width as f64).next_down();
    let max_y = (height as f64).next_down();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(fixations
        .iter()
        .map(|f| {
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            let x = (f.x * cm_per_px + sigma_cm * nx) / cm_per_px;
            let y = (f.y * cm_per_px + sigma_cm * ny) / cm_per_px;
            Fixation {
                x: x.clamp(0.0, max_x),
                y: y.clamp(0.0, max_y),
                ..f.clone()
            }
        })
        .collect())
}
