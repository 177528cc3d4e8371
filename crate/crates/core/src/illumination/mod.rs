//! Photometry and colorimetry of the luminaire with and without data traffic.

mod cct;
mod cie;
mod cri;

pub use cct::{cct, cct_from_uv, planck_curve, planck_relative, tristimulus, uv, xy, CctResult, DUV_LIMIT};
pub use cie::{CieDataset, LUMINOUS_EFFICACY};
pub use cri::{cri, daylight_curve, reference_illuminant, CriResult};

use crate::error::{Error, Result};
use crate::link::CskConstellation;
use crate::spectral::{SpectralCurve, SpectralModel};

/// Per-colour mean squared intensity of the superposed symbol, by exact
/// enumeration of all equiprobable symbol pairs.
pub fn transmitted_symbol_power(rho: f64, constellation: &CskConstellation) -> Result<[f64; 3]> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("allocation {rho} outside [0, 1]")));
    }
    let syms = constellation.symbols();
    let n = (syms.len() * syms.len()) as f64;
    let mut tsp = [0.0; 3];
    for a in syms {
        for b in syms {
            for c in 0..3 {
                tsp[c] += (rho * a[c] + (1.0 - rho) * b[c]).powi(2) / n;
            }
        }
    }
    Ok(tsp)
}

/// Emitted spectrum in W/nm: `Σ_i (P_led / 3)·PSD_i(λ)·TSP_i` with unit-area PSDs.
pub fn altered_psd(psds: &[SpectralCurve; 3], tsp: [f64; 3], led_power_w: f64) -> Result<SpectralCurve> {
    if tsp.iter().any(|t| !(*t >= 0.0)) || !(led_power_w >= 0.0) {
        return Err(Error::domain("weights and LED power must be non-negative"));
    }
    let mut out = SpectralCurve::zeros_like(&psds[0]);
    for (psd, w) in psds.iter().zip(tsp) {
        out.add_scaled(psd, led_power_w / 3.0 * w)?;
    }
    Ok(out)
}

/// Luminous flux `683·∫V(λ)Φ(λ)dλ` of a spectrum in W/nm.
pub fn luminous_flux(curve: &SpectralCurve) -> f64 {
    LUMINOUS_EFFICACY * tristimulus(curve)[1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationReport {
    pub cri_ra: f64,
    pub cct_k: f64,
    pub duv: f64,
    pub luminous_flux_lm: f64,
    pub warning: Option<String>,
}

pub fn illumination_report(curve: &SpectralCurve) -> Result<IlluminationReport> {
    let c = cri(curve)?;
    Ok(IlluminationReport {
        cri_ra: c.ra,
        cct_k: c.cct.cct_k,
        duv: c.cct.duv,
        luminous_flux_lm: luminous_flux(curve),
        warning: c.cct.warning,
    })
}

/// Operating mode of the luminaire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LightingMode {
    /// Steady full-intensity emission.
    NoCommunication,
    /// Single-user CSK.
    CskOnly,
    /// Two-user NOMA-CSK with power fraction `rho` for the stronger user.
    NomaCsk { rho: f64 },
}

impl LightingMode {
    pub fn label(&self) -> &'static str {
        match self {
            Self::NoCommunication => "no_comm",
            Self::CskOnly => "csk_only",
            Self::NomaCsk { .. } => "noma_csk",
        }
    }

    /// Power fraction reported for the mode; steady and single-user
    /// emission put all power into one stream.
    pub fn rho(&self) -> f64 {
        match self {
            Self::NomaCsk { rho } => *rho,
            _ => 1.0,
        }
    }

    pub fn tsp(&self, constellation: &CskConstellation) -> Result<[f64; 3]> {
        match self {
            Self::NoCommunication => Ok([1.0; 3]),
            Self::CskOnly => transmitted_symbol_power(1.0, constellation),
            Self::NomaCsk { rho } => transmitted_symbol_power(*rho, constellation),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationRow {
    pub mode: LightingMode,
    pub report: IlluminationReport,
    /// Flux relative to steady emission.
    pub flux_ratio: f64,
}

/// Steady, CSK-only and NOMA-CSK rows for the given allocation.
pub fn illumination_compare(model: &SpectralModel, constellation: &CskConstellation, rho: f64) -> Result<[IlluminationRow; 3]> {
    let modes = [LightingMode::NoCommunication, LightingMode::CskOnly, LightingMode::NomaCsk { rho }];
    let mut reports = Vec::with_capacity(3);
    for mode in modes {
        let curve = altered_psd(model.psds(), mode.tsp(constellation)?, model.led_power_w())?;
        reports.push(illumination_report(&curve)?);
    }
    let base = reports[0].luminous_flux_lm;
    let mut rows = reports.into_iter().zip(modes).map(|(report, mode)| IlluminationRow {
        mode,
        flux_ratio: report.luminous_flux_lm / base,
        report,
    });
    Ok([
        rows.next().expect("three rows"),
        rows.next().expect("three rows"),
        rows.next().expect("three rows"),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::default_constellation;
    use proptest::prelude::*;

    fn baseline() -> SpectralCurve {
        let m = SpectralModel::default();
        altered_psd(m.psds(), [1.0; 3], 1.0).unwrap()
    }

    #[test]
    fn tsp_examples() {
        let c = default_constellation();
        let csk = transmitted_symbol_power(1.0, &c).unwrap();
        let noma = transmitted_symbol_power(0.0333, &c).unwrap();
        for k in 0..3 {
            assert!((csk[k] - 10.0 / 36.0).abs() < 1e-15);
            let exact = (0.0333f64.powi(2) + 0.9667f64.powi(2)) * 10.0 / 36.0 + 2.0 * 0.0333 * 0.9667 / 9.0;
            assert!((noma[k] - exact).abs() < 1e-15);
            assert!((noma[k] - 0.2674).abs() < 1e-3);
        }
        assert_eq!(csk[0], csk[1]);
        assert!((noma[0] - noma[2]).abs() < 1e-12);
        assert!(transmitted_symbol_power(1.5, &c).is_err());
    }

    #[test]
    fn altered_psd_identities() {
        let m = SpectralModel::default();
        let sum = altered_psd(m.psds(), [1.0; 3], 3.0).unwrap();
        for k in 0..sum.len() {
            let expect: f64 = m.psds().iter().map(|p| p.samples()[k]).sum();
            assert!((sum.samples()[k] - expect).abs() < 1e-15);
        }
        let zero = altered_psd(m.psds(), [0.0; 3], 1.0).unwrap();
        assert!(zero.samples().iter().all(|v| *v == 0.0));
        let a = cct(&baseline()).unwrap().cct_k;
        let b = cct(&altered_psd(m.psds(), [0.3; 3], 1.0).unwrap()).unwrap().cct_k;
        assert!((a - b).abs() < 1e-6 * a);
    }

    #[test]
    fn flux_of_reference_lines() {
        let zero = SpectralCurve::from_fn(1.0, |_| 0.0).unwrap();
        assert_eq!(luminous_flux(&zero), 0.0);
        let line = SpectralCurve::from_fn(1.0, |l| if l == 555.0 { 1.0 } else { 0.0 }).unwrap();
        assert!((luminous_flux(&line) - 683.0).abs() < 1e-9);
    }

    #[test]
    fn baseline_led_matches_reference_colorimetry() {
        let r = illumination_report(&baseline()).unwrap();
        // An independent colorimetry package gives 10098.3 K with its own locus method.
        assert!((r.cct_k - 10098.3).abs() < 1e-3 * 10098.3, "{}", r.cct_k);
        assert!((r.cri_ra - 29.807).abs() < 0.5, "{}", r.cri_ra);
        assert!((r.luminous_flux_lm - 238.09).abs() < 0.5);
        assert!(r.warning.is_none());
    }

    #[test]
    fn comparison_rows() {
        let rows = illumination_compare(&SpectralModel::default(), &default_constellation(), 0.0333).unwrap();
        assert_eq!(rows[0].flux_ratio, 1.0);
        assert!((rows[0].report.cct_k - rows[1].report.cct_k).abs() < 1e-6 * rows[0].report.cct_k);
        assert!((rows[1].report.cri_ra - rows[2].report.cri_ra).abs() < 1e-6);
        assert!(rows[2].report.luminous_flux_lm < rows[0].report.luminous_flux_lm);
        assert!((rows[1].flux_ratio - 10.0 / 36.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn tsp_is_colour_uniform(rho in 0.0f64..=1.0) {
            let t = transmitted_symbol_power(rho, &default_constellation()).unwrap();
            prop_assert!((t[0] - t[1]).abs() < 1e-12 && (t[1] - t[2]).abs() < 1e-12);
        }

        #[test]
        fn altered_psd_is_linear(a in prop::array::uniform3(0.0f64..2.0), b in prop::array::uniform3(0.0f64..2.0)) {
            let m = SpectralModel::default();
            let sum: [f64; 3] = std::array::from_fn(|k| a[k] + b[k]);
            let lhs = altered_psd(m.psds(), sum, 1.0).unwrap();
            let pa = altered_psd(m.psds(), a, 1.0).unwrap();
            let pb = altered_psd(m.psds(), b, 1.0).unwrap();
            for k in 0..lhs.len() {
                let r = pa.samples()[k] + pb.samples()[k];
                prop_assert!((lhs.samples()[k] - r).abs() <= 1e-12 * r.abs().max(1e-12));
            }
        }
    }
}
