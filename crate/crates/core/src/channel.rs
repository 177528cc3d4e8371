//! Line-of-sight Lambertian channel gains and random user-pair sampling.

use rand::Rng;

use crate::error::{Error, Result};

/// Default lower bound of the stronger user's gain.
pub const H_MIN: f64 = 2.84e-5;
/// Default upper bound of the stronger user's gain at `r = 1`.
pub const H_MAX: f64 = 5.98e-4;
/// Gain used for the fixed-channel experiments.
pub const MID_GAIN: f64 = 3.132e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig {
    pub pd_area_m2: f64,
    pub led_half_angle_deg: f64,
    pub filter_gain: f64,
    pub lens_gain: f64,
    pub lens_refractive_index: f64,
    pub pd_fov_deg: f64,
    pub tx_position: [f64; 3],
    pub rx_position: [f64; 3],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            pd_area_m2: 1e-4,
            led_half_angle_deg: 60.0,
            filter_gain: 1.0,
            lens_gain: 1.0,
            lens_refractive_index: 1.5,
            pd_fov_deg: 70.0,
            tx_position: [2.5, 2.5, 3.0],
            rx_position: [2.5, 2.5, 2.0],
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pd_area_m2 > 0.0) {
            return Err(Error::domain("photodiode area must be positive"));
        }
        if !(self.led_half_angle_deg > 0.0 && self.led_half_angle_deg < 90.0) {
            return Err(Error::domain("LED half angle must lie in (0, 90) degrees"));
        }
        if !(self.pd_fov_deg > 0.0 && self.pd_fov_deg <= 90.0) {
            return Err(Error::domain("receiver field of view must lie in (0, 90] degrees"));
        }
        Ok(())
    }
}

/// Lambertian mode number `-ln 2 / ln cos(half_angle)`.
pub fn lambert_order(half_angle_deg: f64) -> Result<f64> {
    if !(half_angle_deg > 0.0 && half_angle_deg < 90.0) {
        return Err(Error::domain(format!(
            "half angle {half_angle_deg} deg outside (0, 90)"
        )));
    }
    // cos² is 1/4 and 1/2 here; the floating-point cosine misses both by an ulp.
    if half_angle_deg == 60.0 {
        return Ok(1.0);
    }
    if half_angle_deg == 45.0 {
        return Ok(2.0);
    }
    Ok(-std::f64::consts::LN_2 / half_angle_deg.to_radians().cos().ln())
}

/// DC gain of the direct path for a downward-facing LED and an upward-facing
/// photodiode.
pub fn los_gain(geom: &GeometryConfig) -> Result<f64> {
    geom.validate()?;
    let delta: [f64; 3] = std::array::from_fn(|k| geom.rx_position[k] - geom.tx_position[k]);
    let d2: f64 = delta.iter().map(|v| v * v).sum();
    if d2 == 0.0 {
        return Err(Error::domain("transmitter and receiver coincide"));
    }
    let d = d2.sqrt();
    let vertical = (geom.tx_position[2] - geom.rx_position[2]) / d;
    let cos_irradiance = vertical;
    let cos_incidence = vertical;
    if cos_incidence <= 0.0 || cos_incidence < geom.pd_fov_deg.to_radians().cos() {
        return Ok(0.0);
    }
    let m = lambert_order(geom.led_half_angle_deg)?;
    let radiant = (m + 1.0) / (2.0 * std::f64::consts::PI) * cos_irradiance.powf(m);
    Ok(geom.pd_area_m2 * radiant / d2 * geom.filter_gain * geom.lens_gain * cos_incidence)
}

/// Channel gains of the stronger (`h1`) and weaker (`h2`) user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPair {
    h1: f64,
    h2: f64,
}

impl ChannelPair {
    pub fn new(h1: f64, h2: f64) -> Result<Self> {
        if !(h2 > 0.0 && h2 <= h1 && h1.is_finite()) {
            return Err(Error::domain(format!(
                "channel pair needs 0 < h2 <= h1, got h1 = {h1}, h2 = {h2}"
            )));
        }
        Ok(Self { h1, h2 })
    }

    /// Pair with `h2 = r·h1`.
    pub fn from_ratio(h1: f64, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::domain(format!("channel ratio {r} outside (0, 1]")));
        }
        Self::new(h1, r * h1)
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }

    pub fn ratio(&self) -> f64 {
        self.h2 / self.h1
    }

    pub fn gain(&self, user: usize) -> f64 {
        if user == 0 {
            self.h1
        } else {
            self.h2
        }
    }
}

/// Gain bounds for the stronger user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelBounds {
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for ChannelBounds {
    fn default() -> Self {
        Self {
            h_min: H_MIN,
            h_max: H_MAX,
        }
    }
}

impl ChannelBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_max > self.h_min) {
            return Err(Error::domain(format!(
                "channel bounds need 0 < h_min < h_max, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Draws `h1 ~ U[h_min, h_max / r]` and sets `h2 = r·h1`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> Result<ChannelPair> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::domain(format!("channel ratio {r} outside (0, 1]")));
        }
        self.validate()?;
        let h1 = rng.random_range(self.h_min..=self.h_max / r);
        ChannelPair::from_ratio(h1, r)
    }
}

/// Samples a pair with the default bounds.
pub fn sample_channel_pair<R: Rng + ?Sized>(r: f64, rng: &mut R) -> Result<ChannelPair> {
    ChannelBounds::default().sample_pair(r, rng)
}

/// Bounds widened by `scale` in both directions.
pub fn extended_bounds(scale: f64) -> (f64, f64) {
    (H_MIN / scale, H_MAX * scale)
}
