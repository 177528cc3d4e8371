use super::cct::{cct, planck_curve, tristimulus, uv, CctResult};
use super::cie::CieDataset;
use crate::error::{Error, Result};
use crate::spectral::SpectralCurve;

/// Test temperature at and above which the daylight reference is used.
pub const DAYLIGHT_THRESHOLD_K: f64 = 5000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CriResult {
    pub ra: f64,
    /// Special indices R1 to R8.
    pub special: [f64; 8],
    pub cct: CctResult,
}

/// CIE daylight-phase chromaticity `x_D` for 4000 K to 25000 K.
fn daylight_x(t: f64) -> f64 {
    if t <= 7000.0 {
        -4.6070e9 / t.powi(3) + 2.9678e6 / t.powi(2) + 0.09911e3 / t + 0.244063
    } else {
        -2.0064e9 / t.powi(3) + 1.9018e6 / t.powi(2) + 0.24748e3 / t + 0.237040
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// CIE daylight illuminant at correlated colour temperature `t`.
pub fn daylight_curve(t: f64) -> Result<SpectralCurve> {
    if !(4000.0..=25000.0).contains(&t) {
        return Err(Error::domain(format!("daylight phase undefined at {t} K")));
    }
    let x = daylight_x(t);
    let y = -3.0 * x * x + 2.870 * x - 0.275;
    let m = 0.0241 + 0.2562 * x - 0.7341 * y;
    let m1 = round3((-1.3515 - 1.7703 * x + 5.9114 * y) / m);
    let m2 = round3((0.0300 - 31.4424 * x + 30.0717 * y) / m);
    let d = CieDataset::standard();
    let samples = (0..d.daylight_s0.len())
        .map(|k| (d.daylight_s0[k] + m1 * d.daylight_s1[k] + m2 * d.daylight_s2[k]).max(0.0))
        .collect();
    SpectralCurve::new(d.xbar.start_nm(), d.xbar.step_nm(), samples)
}

/// Reference illuminant for a test source of temperature `t`.
pub fn reference_illuminant(t: f64) -> Result<SpectralCurve> {
    if t < DAYLIGHT_THRESHOLD_K {
        planck_curve(t)
    } else {
        daylight_curve(t)
    }
}

fn resample(curve: &SpectralCurve, like: &SpectralCurve) -> SpectralCurve {
    if curve.same_grid(like) {
        curve.clone()
    } else {
        let samples = like.iter().map(|(l, _)| curve.value_at(l)).collect();
        SpectralCurve::new(like.start_nm(), like.step_nm(), samples).expect("interpolation keeps values valid")
    }
}

/// Colorimetry of one illuminant: white point and the eight samples, Y scaled so the white is 100.
struct Rendering {
    white_uv: (f64, f64),
    samples: Vec<([f64; 3], (f64, f64))>,
}

fn render(source: &SpectralCurve) -> Rendering {
    let d = CieDataset::standard();
    let white = tristimulus(source);
    let k = 100.0 / white[1];
    let samples = d
        .tcs
        .iter()
        .map(|r| {
            let products = source.samples().iter().zip(r.samples()).map(|(a, b)| a * b).collect();
            let lit = SpectralCurve::new(source.start_nm(), source.step_nm(), products).expect("non-negative");
            let xyz = tristimulus(&lit).map(|v| v * k);
            (xyz, uv(xyz))
        })
        .collect();
    Rendering {
        white_uv: uv(white),
        samples,
    }
}

fn cd(u: f64, v: f64) -> (f64, f64) {
    ((4.0 - u - 10.0 * v) / v, (1.708 * v + 0.404 - 1.481 * u) / v)
}

fn uvw(y: f64, (u, v): (f64, f64), (u0, v0): (f64, f64)) -> [f64; 3] {
    let w = 25.0 * y.cbrt() - 17.0;
    [13.0 * w * (u - u0), 13.0 * w * (v - v0), w]
}

/// General colour rendering index (CIE 13.3, test samples 1 to 8).
pub fn cri(curve: &SpectralCurve) -> Result<CriResult> {
    let d = CieDataset::standard();
    let test = resample(curve, &d.xbar);
    let temp = cct(&test)?;
    let reference = reference_illuminant(temp.cct_k)?;
    let t = render(&test);
    let r = render(&reference);

    let (ck, dk) = cd(t.white_uv.0, t.white_uv.1);
    let (cr, dr) = cd(r.white_uv.0, r.white_uv.1);
    let mut special = [0.0; 8];
    for (i, slot) in special.iter_mut().enumerate() {
        let (xyz_t, (u, v)) = t.samples[i];
        let (ci, di) = cd(u, v);
        let a = cr / ck * ci;
        let b = dr / dk * di;
        let den = 16.518 + 1.481 * a - b;
        let adapted = ((10.872 + 0.404 * a - 4.0 * b) / den, 5.520 / den);
        let (xyz_r, uv_r) = r.samples[i];
        let et = uvw(xyz_t[1], adapted, r.white_uv);
        let er = uvw(xyz_r[1], uv_r, r.white_uv);
        let de = ((et[0] - er[0]).powi(2) + (et[1] - er[1]).powi(2) + (et[2] - er[2]).powi(2)).sqrt();
        *slot = 100.0 - 4.6 * de;
    }
    Ok(CriResult {
        ra: special.iter().sum::<f64>() / 8.0,
        special,
        cct: temp,
    })
}
