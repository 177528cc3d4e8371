//! RGB LED emission spectra (H-model), ideal colour filters and received
//! power matrices.

use crate::error::{Error, Result};

pub const GRID_START_NM: f64 = 380.0;
pub const GRID_END_NM: f64 = 780.0;
pub const DEFAULT_STEP_NM: f64 = 1.0;

/// Colour channel order used everywhere: red, green, blue.
pub const COLORS: [&str; 3] = ["red", "green", "blue"];

/// H-model shape parameters of one LED colour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedColorParams {
    pub peak_nm: f64,
    pub left_half_width_nm: f64,
    pub right_half_width_nm: f64,
    pub shape_k1: f64,
    pub shape_k2: f64,
}

impl LedColorParams {
    pub const RED: Self = Self {
        peak_nm: 632.5,
        left_half_width_nm: 23.84,
        right_half_width_nm: 14.74,
        shape_k1: 2.0,
        shape_k2: 6.0,
    };
    pub const GREEN: Self = Self {
        peak_nm: 517.7,
        left_half_width_nm: 29.38,
        right_half_width_nm: 45.21,
        shape_k1: 2.0,
        shape_k2: 3.0,
    };
    pub const BLUE: Self = Self {
        peak_nm: 453.0,
        left_half_width_nm: 18.99,
        right_half_width_nm: 25.5,
        shape_k1: 2.0,
        shape_k2: 5.0,
    };

    /// Red, green and blue channels of the OSRAM LZ4-00MA00.
    pub const fn defaults() -> [Self; 3] {
        [Self::RED, Self::GREEN, Self::BLUE]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (GRID_START_NM..=GRID_END_NM).contains(&self.peak_nm)
            && self.left_half_width_nm > 0.0
            && self.right_half_width_nm > 0.0
            && self.shape_k1 > 0.0
            && self.shape_k2 >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid LED parameters {self:?}")))
        }
    }
}

/// Peak-normalised H-model density at `wavelength_nm`.
///
/// `(g + k1 g^k2) / (1 + k1)` with `g = exp(-(λ-λp)²/Δλ²)` and the half
/// width switching from left to right at the peak.
pub fn led_psd_value(params: &LedColorParams, wavelength_nm: f64) -> Result<f64> {
    if !(GRID_START_NM..=GRID_END_NM).contains(&wavelength_nm) {
        return Err(Error::domain(format!(
            "wavelength {wavelength_nm} nm outside [{GRID_START_NM}, {GRID_END_NM}]"
        )));
    }
    Ok(h_model(params, wavelength_nm))
}

fn h_model(p: &LedColorParams, wavelength_nm: f64) -> f64 {
    let width = if wavelength_nm < p.peak_nm {
        p.left_half_width_nm
    } else {
        p.right_half_width_nm
    };
    let x = (wavelength_nm - p.peak_nm) / width;
    let g = (-x * x).exp();
    (g + p.shape_k1 * g.powf(p.shape_k2)) / (1.0 + p.shape_k1)
}

/// A density sampled on a uniform wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCurve {
    start_nm: f64,
    step_nm: f64,
    samples: Vec<f64>,
}

impl SpectralCurve {
    pub fn new(start_nm: f64, step_nm: f64, samples: Vec<f64>) -> Result<Self> {
        if step_nm <= 0.0 || samples.len() < 2 {
            return Err(Error::domain("spectral grid needs a positive step and two samples"));
        }
        if samples.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("spectral samples must be finite and non-negative"));
        }
        Ok(Self {
            start_nm,
            step_nm,
            samples,
        })
    }

    /// Builds a curve on `[380, 780]` at `step_nm`, which must divide the range.
    pub fn from_fn(step_nm: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = grid_len(step_nm)?;
        let samples = (0..n)
            .map(|k| f(GRID_START_NM + k as f64 * step_nm))
            .collect();
        Self::new(GRID_START_NM, step_nm, samples)
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            start_nm: other.start_nm,
            step_nm: other.step_nm,
            samples: vec![0.0; other.samples.len()],
        }
    }

    pub fn start_nm(&self) -> f64 {
        self.start_nm
    }

    pub fn step_nm(&self) -> f64 {
        self.step_nm
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn wavelength(&self, k: usize) -> f64 {
        self.start_nm + k as f64 * self.step_nm
    }

    pub fn end_nm(&self) -> f64 {
        self.wavelength(self.samples.len() - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples
            .iter()
            .enumerate()
            .map(|(k, &v)| (self.wavelength(k), v))
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.samples.len() == other.samples.len()
            && (self.start_nm - other.start_nm).abs() < 1e-9
            && (self.step_nm - other.step_nm).abs() < 1e-12
    }

    /// Trapezoidal integral over the whole grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.samples, self.step_nm)
    }

    /// Integral over `[lo, hi]`; both edges must lie on grid points.
    ///
    /// Uses the trapezoid rule with Gregory end corrections, which keeps the
    /// band edges accurate to fourth order where the density is steep.
    pub fn integral_over(&self, lo_nm: f64, hi_nm: f64) -> Result<f64> {
        let a = self.grid_index(lo_nm)?;
        let b = self.grid_index(hi_nm)?;
        if b < a {
            return Err(Error::domain(format!("empty band [{lo_nm}, {hi_nm}]")));
        }
        Ok(gregory(&self.samples[a..=b], self.step_nm))
    }

    /// Linear interpolation, zero outside the grid.
    pub fn value_at(&self, wavelength_nm: f64) -> f64 {
        let x = (wavelength_nm - self.start_nm) / self.step_nm;
        if x < 0.0 || x > (self.samples.len() - 1) as f64 {
            return 0.0;
        }
        let k = x.floor() as usize;
        if k + 1 >= self.samples.len() {
            return self.samples[self.samples.len() - 1];
        }
        let t = x - k as f64;
        self.samples[k] * (1.0 - t) + self.samples[k + 1] * t
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            start_nm: self.start_nm,
            step_nm: self.step_nm,
            samples: self.samples.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self += factor * other` on a shared grid.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::Internal("spectral grids differ".into()));
        }
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += factor * b;
        }
        Ok(())
    }

    fn grid_index(&self, wavelength_nm: f64) -> Result<usize> {
        let x = (wavelength_nm - self.start_nm) / self.step_nm;
        let k = x.round();
        if (x - k).abs() > 1e-9 || k < 0.0 || k as usize >= self.samples.len() {
            return Err(Error::domain(format!(
                "{wavelength_nm} nm is not a grid point of this curve"
            )));
        }
        Ok(k as usize)
    }
}

fn grid_len(step_nm: f64) -> Result<usize> {
    let intervals = (GRID_END_NM - GRID_START_NM) / step_nm;
    let n = intervals.round();
    if step_nm <= 0.0 || (intervals - n).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "step {step_nm} nm does not divide the visible range"
        )));
    }
    Ok(n as usize + 1)
}

pub(crate) fn trapezoid(y: &[f64], h: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => h * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[n - 1])),
    }
}

/// Trapezoid rule plus Gregory end corrections up to third differences.
fn gregory(y: &[f64], h: f64) -> f64 {
    let n = y.len();
    if n < 8 {
        return trapezoid(y, h);
    }
    let l = n - 1;
    let fwd1 = y[1] - y[0];
    let bwd1 = y[l] - y[l - 1];
    let fwd2 = y[2] - 2.0 * y[1] + y[0];
    let bwd2 = y[l] - 2.0 * y[l - 1] + y[l - 2];
    let fwd3 = y[3] - 3.0 * y[2] + 3.0 * y[1] - y[0];
    let bwd3 = y[l] - 3.0 * y[l - 1] + 3.0 * y[l - 2] - y[l - 3];
    trapezoid(y, h)
        - h / 12.0 * (bwd1 - fwd1)
        - h / 24.0 * (bwd2 + fwd2)
        - 19.0 * h / 720.0 * (bwd3 - fwd3)
}

/// Unit-area H-model spectrum on the default 1 nm grid.
pub fn normalized_psd(params: &LedColorParams) -> Result<SpectralCurve> {
    normalized_psd_on_grid(params, DEFAULT_STEP_NM)
}

pub fn normalized_psd_on_grid(params: &LedColorParams, step_nm: f64) -> Result<SpectralCurve> {
    params.validate()?;
    let raw = SpectralCurve::from_fn(step_nm, |l| h_model(params, l))?;
    let area = raw.integral();
    Ok(raw.scaled(1.0 / area))
}

/// Ideal rectangular receiver filters, one per colour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterBank {
    /// `(lower, upper)` cutoffs in nm for red, green, blue.
    pub bands_nm: [(f64, f64); 3],
    pub gain: f64,
}

impl Default for FilterBank {
    fn default() -> Self {
        Self {
            bands_nm: [(590.0, 700.0), (485.0, 590.0), (380.0, 485.0)],
            gain: 1.0,
        }
    }
}

impl FilterBank {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.bands_nm {
            if !(GRID_START_NM..=GRID_END_NM).contains(&lo)
                || !(GRID_START_NM..=GRID_END_NM).contains(&hi)
                || hi <= lo
            {
                return Err(Error::domain(format!("invalid filter band [{lo}, {hi}]")));
            }
        }
        let mut sorted = self.bands_nm;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::domain("filter bands overlap"));
        }
        if self.gain < 0.0 {
            return Err(Error::domain("filter gain must be non-negative"));
        }
        Ok(())
    }

    /// `F_j(λ)`.
    pub fn response(&self, filter: usize, wavelength_nm: f64) -> f64 {
        let (lo, hi) = self.bands_nm[filter];
        if (lo..=hi).contains(&wavelength_nm) {
            self.gain
        } else {
            0.0
        }
    }
}

/// `entries[i][j]`: power of transmitter colour `i` behind receiver filter `j`, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerMatrix {
    pub entries: [[f64; 3]; 3],
}

impl PowerMatrix {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn diagonal_sum(&self) -> f64 {
        (0..3).map(|i| self.entries[i][i]).sum()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().flatten().sum()
    }

    pub fn off_diagonal_sum(&self) -> f64 {
        self.total() - self.diagonal_sum()
    }

    /// Power reaching each filter, summed over transmitter colours.
    pub fn filter_sums(&self) -> [f64; 3] {
        std::array::from_fn(|j| (0..3).map(|i| self.entries[i][j]).sum())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        out.entries.iter_mut().flatten().for_each(|v| *v *= factor);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        for (a, b) in out.entries.iter_mut().flatten().zip(other.entries.iter().flatten()) {
            *a += b;
        }
        out
    }
}

/// Received power matrix for one intensity triple.
///
/// `p[i][j] = (1/3) P_led ∫ PSD_i(λ) F_j(λ) S_i h dλ`, integrated over the band
/// of receiver filter `j` with unit-area PSDs.
pub fn received_power_matrix(
    psds: &[SpectralCurve; 3],
    filters: &FilterBank,
    symbol: [f64; 3],
    gain: f64,
    led_power_w: f64,
) -> Result<PowerMatrix> {
    let coupling = filter_coupling(psds, filters)?;
    power_from_coupling(&coupling, symbol, gain, led_power_w)
}

/// `∫ PSD_i F_j dλ` for every colour/filter pair.
pub fn filter_coupling(psds: &[SpectralCurve; 3], filters: &FilterBank) -> Result<[[f64; 3]; 3]> {
    filters.validate()?;
    let mut c = [[0.0; 3]; 3];
    for (i, psd) in psds.iter().enumerate() {
        for (j, &(lo, hi)) in filters.bands_nm.iter().enumerate() {
            c[i][j] = filters.gain * psd.integral_over(lo, hi)?;
        }
    }
    Ok(c)
}

fn power_from_coupling(
    coupling: &[[f64; 3]; 3],
    symbol: [f64; 3],
    gain: f64,
    led_power_w: f64,
) -> Result<PowerMatrix> {
    if symbol.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::domain(format!("symbol components must be non-negative, got {symbol:?}")));
    }
    if !(gain > 0.0) {
        return Err(Error::domain(format!("channel gain must be positive, got {gain}")));
    }
    let mut p = PowerMatrix::zero();
    for i in 0..3 {
        for j in 0..3 {
            p.entries[i][j] = led_power_w / 3.0 * coupling[i][j] * symbol[i] * gain;
        }
    }
    Ok(p)
}

/// The three LED spectra, the receiver filters and the LED optical power,
/// with the colour/filter coupling integrals cached.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    leds: [LedColorParams; 3],
    psds: [SpectralCurve; 3],
    filters: FilterBank,
    led_power_w: f64,
    coupling: [[f64; 3]; 3],
}

impl SpectralModel {
    pub fn new(
        leds: [LedColorParams; 3],
        filters: FilterBank,
        led_power_w: f64,
        step_nm: f64,
    ) -> Result<Self> {
        if !(led_power_w > 0.0) {
            return Err(Error::domain("LED power must be positive"));
        }
        let psds = [
            normalized_psd_on_grid(&leds[0], step_nm)?,
            normalized_psd_on_grid(&leds[1], step_nm)?,
            normalized_psd_on_grid(&leds[2], step_nm)?,
        ];
        let coupling = filter_coupling(&psds, &filters)?;
        Ok(Self {
            leds,
            psds,
            filters,
            led_power_w,
            coupling,
        })
    }

    pub fn leds(&self) -> &[LedColorParams; 3] {
        &self.leds
    }

    pub fn psds(&self) -> &[SpectralCurve; 3] {
        &self.psds
    }

    pub fn filters(&self) -> &FilterBank {
        &self.filters
    }

    pub fn led_power_w(&self) -> f64 {
        self.led_power_w
    }

    pub fn coupling(&self) -> &[[f64; 3]; 3] {
        &self.coupling
    }

    pub fn power_matrix(&self, symbol: [f64; 3], gain: f64) -> Result<PowerMatrix> {
        power_from_coupling(&self.coupling, symbol, gain, self.led_power_w)
    }

    /// Per-source received power components at gain `gain`:
    /// source 1 carries `ρ·S1`, source 2 carries `(1-ρ)·S2`.
    pub fn composite_power_components(
        &self,
        s1: [f64; 3],
        s2: [f64; 3],
        rho: f64,
        gain: f64,
    ) -> Result<(PowerMatrix, PowerMatrix)> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::domain(format!("allocation {rho} outside [0, 1]")));
        }
        let own = self.power_matrix(s1.map(|v| v * rho), gain)?;
        let other = self.power_matrix(s2.map(|v| v * (1.0 - rho)), gain)?;
        Ok((own, other))
    }
}

impl Default for SpectralModel {
    fn default() -> Self {
        Self::new(LedColorParams::defaults(), FilterBank::default(), 1.0, DEFAULT_STEP_NM)
            .expect("default spectral model is valid")
    }
}
