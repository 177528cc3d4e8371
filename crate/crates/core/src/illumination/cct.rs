use std::sync::OnceLock;

use super::cie::CieDataset;
use crate::error::{Error, Result};
use crate::spectral::SpectralCurve;

/// Second radiation constant in m·K.
pub const PLANCK_C2: f64 = 1.4388e-2;
pub const CCT_MIN_K: f64 = 1000.0;
pub const CCT_MAX_K: f64 = 25000.0;
/// Distance from the Planckian locus beyond which a CCT is flagged.
pub const DUV_LIMIT: f64 = 0.05;

/// Relative spectral radiance of a blackbody, up to a constant factor.
pub fn planck_relative(wavelength_nm: f64, temperature_k: f64) -> f64 {
    let l = wavelength_nm * 1e-9;
    1.0 / (l.powi(5) * ((PLANCK_C2 / (l * temperature_k)).exp_m1()))
}

/// Blackbody spectrum on the 1 nm grid, peak-scaled to 1.
pub fn planck_curve(temperature_k: f64) -> Result<SpectralCurve> {
    if !(temperature_k > 0.0) {
        return Err(Error::domain("temperature must be positive"));
    }
    let raw = SpectralCurve::from_fn(1.0, |l| planck_relative(l, temperature_k))?;
    let peak = raw.samples().iter().copied().fold(0.0, f64::max);
    Ok(raw.scaled(1.0 / peak))
}

/// CIE 1931 tristimulus values (trapezoid rule, unnormalised).
pub fn tristimulus(curve: &SpectralCurve) -> [f64; 3] {
    let d = CieDataset::standard();
    let weigh = |cmf: &SpectralCurve| -> f64 {
        let products: Vec<f64> = if curve.same_grid(cmf) {
            curve.samples().iter().zip(cmf.samples()).map(|(a, b)| a * b).collect()
        } else {
            cmf.iter().map(|(l, v)| v * curve.value_at(l)).collect()
        };
        crate::spectral::trapezoid(&products, cmf.step_nm())
    };
    [weigh(&d.xbar), weigh(&d.ybar), weigh(&d.zbar)]
}

pub fn xy(xyz: [f64; 3]) -> (f64, f64) {
    let s = xyz[0] + xyz[1] + xyz[2];
    (xyz[0] / s, xyz[1] / s)
}

/// CIE 1960 UCS chromaticity.
pub fn uv(xyz: [f64; 3]) -> (f64, f64) {
    let d = xyz[0] + 15.0 * xyz[1] + 3.0 * xyz[2];
    (4.0 * xyz[0] / d, 6.0 * xyz[1] / d)
}

fn planck_uv(temperature_k: f64) -> (f64, f64) {
    let d = CieDataset::standard();
    let mut xyz = [0.0; 3];
    let last = d.xbar.len() - 1;
    for (k, (l, _)) in d.xbar.iter().enumerate() {
        // Trapezoid weights, matching `tristimulus`.
        let w = if k == 0 || k == last { 0.5 } else { 1.0 };
        let p = w * planck_relative(l, temperature_k);
        xyz[0] += p * d.xbar.samples()[k];
        xyz[1] += p * d.ybar.samples()[k];
        xyz[2] += p * d.zbar.samples()[k];
    }
    uv(xyz)
}

fn locus() -> &'static [(f64, f64)] {
    static LOCUS: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    LOCUS.get_or_init(|| {
        let n = (CCT_MAX_K - CCT_MIN_K) as usize + 1;
        (0..n).map(|k| planck_uv(CCT_MIN_K + k as f64)).collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CctResult {
    pub cct_k: f64,
    /// Signed distance from the locus in uv; positive above it.
    pub duv: f64,
    pub warning: Option<String>,
}

/// Correlated colour temperature of chromaticity `(u, v)`.
///
/// Searches the Planckian locus at 1 K spacing over [1000, 25000] K, then
/// refines between the neighbouring grid points by golden-section search.
pub fn cct_from_uv(u: f64, v: f64) -> CctResult {
    let pts = locus();
    let dist2 = |p: (f64, f64)| (p.0 - u).powi(2) + (p.1 - v).powi(2);
    let best = (0..pts.len())
        .min_by(|&a, &b| dist2(pts[a]).total_cmp(&dist2(pts[b])))
        .expect("non-empty locus");
    let mut lo = CCT_MIN_K + best.saturating_sub(1) as f64;
    let mut hi = CCT_MIN_K + (best + 1).min(pts.len() - 1) as f64;
    let f = |t: f64| dist2(planck_uv(t));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..40 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    let t = 0.5 * (lo + hi);
    let (pu, pv) = planck_uv(t);
    let duv = dist2((pu, pv)).sqrt() * if v < pv { -1.0 } else { 1.0 };
    let warning = (duv.abs() > DUV_LIMIT).then(|| {
        format!("chromaticity is {:.4} from the Planckian locus; CCT is not meaningful", duv.abs())
    });
    CctResult { cct_k: t, duv, warning }
}

pub fn cct(curve: &SpectralCurve) -> Result<CctResult> {
    let xyz = tristimulus(curve);
    if !(xyz[1] > 0.0) || xyz.iter().sum::<f64>() <= 0.0 {
        return Err(Error::domain("spectrum has no visible energy"));
    }
    let (u, v) = uv(xyz);
    Ok(cct_from_uv(u, v))
}
