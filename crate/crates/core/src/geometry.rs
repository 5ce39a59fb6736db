//! Viewing geometry: physical screen size, resolution and viewing distance,
//! and the mapping between degrees of visual angle, centimetres and pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::DegPoint;

/// Horizontal margin (cm) left free on each side of the search area.
pub const STUDY_MARGIN_H_CM: f64 = 17.44;
/// Vertical margin (cm) left free above and below the search area.
pub const STUDY_MARGIN_V_CM: f64 = 11.48;
/// Physical disc diameter (cm).
pub const STUDY_DISC_DIAMETER_CM: f64 = 4.59;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewingGeometry {
    pub screen_w_cm: f64,
    pub screen_h_cm: f64,
    pub res_w_px: u32,
    pub res_h_px: u32,
    pub distance_cm: f64,
}

impl Default for ViewingGeometry {
    /// 122.4 × 74.1 cm 1080p panel viewed from 280 cm.
    fn default() -> Self {
        Self {
            screen_w_cm: 122.4,
            screen_h_cm: 74.1,
            res_w_px: 1920,
            res_h_px: 1080,
            distance_cm: 280.0,
        }
    }
}

/// Full visual angle (degrees) subtended by an object of `size_cm` centred on
/// the line of sight at `distance_cm`.
pub fn cm_to_deg(size_cm: f64, distance_cm: f64) -> Result<f64> {
    if !(distance_cm > 0.0) || !distance_cm.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "viewing distance must be positive, got {distance_cm}"
        )));
    }
    if !(size_cm >= 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "size must be non-negative, got {size_cm}"
        )));
    }
    Ok((2.0 * (size_cm / (2.0 * distance_cm)).atan()).to_degrees())
}

/// Inverse of [`cm_to_deg`].
pub fn deg_to_cm(angle_deg: f64, distance_cm: f64) -> Result<f64> {
    if !(distance_cm > 0.0) || !distance_cm.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "viewing distance must be positive, got {distance_cm}"
        )));
    }
    if !(0.0..180.0).contains(&angle_deg) {
        return Err(Error::InvalidGeometry(format!(
            "angle must be in [0, 180), got {angle_deg}"
        )));
    }
    Ok(2.0 * distance_cm * (angle_deg.to_radians() / 2.0).tan())
}

/// Angle (degrees) between the line of sight and a point `offset_cm` away
/// from the screen centre.
pub fn eccentricity_deg(offset_cm: f64, distance_cm: f64) -> f64 {
    (offset_cm / distance_cm).atan().to_degrees()
}

impl ViewingGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = self.screen_w_cm > 0.0
            && self.screen_h_cm > 0.0
            && self.distance_cm > 0.0
            && self.res_w_px > 0
            && self.res_h_px > 0
            && self.screen_w_cm.is_finite()
            && self.screen_h_cm.is_finite()
            && self.distance_cm.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidGeometry(format!("{self:?}")))
        }
    }

    /// Pixel density. Pixels are square, so the tighter of the two axes wins
    /// and the whole physical screen fits the raster.
    pub fn px_per_cm(&self) -> f64 {
        (self.res_w_px as f64 / self.screen_w_cm).min(self.res_h_px as f64 / self.screen_h_cm)
    }

    pub fn half_width_deg(&self) -> f64 {
        eccentricity_deg(self.screen_w_cm / 2.0, self.distance_cm)
    }

    pub fn half_height_deg(&self) -> f64 {
        eccentricity_deg(self.screen_h_cm / 2.0, self.distance_cm)
    }

    /// Horizontal half-angle of the area left after removing `margin_cm` on
    /// each side.
    pub fn usable_half_width_deg(&self, margin_cm: f64) -> f64 {
        eccentricity_deg(self.screen_w_cm / 2.0 - margin_cm, self.distance_cm)
    }

    pub fn usable_half_height_deg(&self, margin_cm: f64) -> f64 {
        eccentricity_deg(self.screen_h_cm / 2.0 - margin_cm, self.distance_cm)
    }

    fn center_px(&self) -> (f64, f64) {
        (self.res_w_px as f64 / 2.0, self.res_h_px as f64 / 2.0)
    }

    /// Map a visual-angle position to continuous pixel coordinates (x right,
    /// y down). Each axis is projected independently onto the flat screen.
    pub fn deg_to_px(&self, p: DegPoint) -> (f64, f64) {
        let s = self.px_per_cm();
        let (cx, cy) = self.center_px();
        let x_cm = self.distance_cm * p.x.to_radians().tan();
        let y_cm = self.distance_cm * p.y.to_radians().tan();
        (cx + x_cm * s, cy - y_cm * s)
    }

    pub fn px_to_deg(&self, x_px: f64, y_px: f64) -> DegPoint {
        let s = self.px_per_cm();
        let (cx, cy) = self.center_px();
        let x_cm = (x_px - cx) / s;
        let y_cm = (cy - y_px) / s;
        DegPoint {
            x: (x_cm / self.distance_cm).atan().to_degrees(),
            y: (y_cm / self.distance_cm).atan().to_degrees(),
        }
    }

    /// Pixel length of an object subtending `angle_deg` at the screen centre.
    pub fn angle_to_px(&self, angle_deg: f64) -> f64 {
        2.0 * self.distance_cm * (angle_deg.to_radians() / 2.0).tan() * self.px_per_cm()
    }
}
