use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::spectral::{SpectralCurve, DEFAULT_STEP_NM, GRID_START_NM};

/// Maximum luminous efficacy of radiation in lm/W.
pub const LUMINOUS_EFFICACY: f64 = 683.0;

const CMF_TABLE: &str = include_str!("../../data/cie1931_2deg_cmf.txt");
const TCS_TABLE: &str = include_str!("../../data/cie_tcs_01_08.txt");
const DAYLIGHT_TABLE: &str = include_str!("../../data/cie_daylight_components.txt");

/// CIE reference tables on the 1 nm grid over [380, 780] nm.
#[derive(Debug, Clone)]
pub struct CieDataset {
    pub xbar: SpectralCurve,
    pub ybar: SpectralCurve,
    pub zbar: SpectralCurve,
    /// Test colour samples 1 to 8.
    pub tcs: Vec<SpectralCurve>,
    /// Daylight basis functions; S1 and S2 take negative values.
    pub daylight_s0: Vec<f64>,
    pub daylight_s1: Vec<f64>,
    pub daylight_s2: Vec<f64>,
}

fn parse_columns(text: &str, columns: usize, name: &str) -> Result<Vec<Vec<f64>>> {
    let mut cols = vec![Vec::new(); columns];
    let mut expected = GRID_START_NM;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("{name}: unparsable line '{line}'")))?;
        if values.len() != columns + 1 || (values[0] - expected).abs() > 1e-9 {
            return Err(Error::Format(format!("{name}: unexpected row '{line}'")));
        }
        expected += DEFAULT_STEP_NM;
        for (c, v) in cols.iter_mut().zip(&values[1..]) {
            c.push(*v);
        }
    }
    Ok(cols)
}

fn curve(samples: Vec<f64>, name: &str) -> Result<SpectralCurve> {
    SpectralCurve::new(GRID_START_NM, DEFAULT_STEP_NM, samples).map_err(|e| Error::Format(format!("{name}: {e}")))
}

impl CieDataset {
    pub fn load() -> Result<Self> {
        let mut cmf = parse_columns(CMF_TABLE, 3, "colour matching functions")?;
        let tcs = parse_columns(TCS_TABLE, 8, "test colour samples")?;
        let mut day = parse_columns(DAYLIGHT_TABLE, 3, "daylight components")?;
        let zbar = curve(cmf.pop().expect("3 columns"), "zbar")?;
        let ybar = curve(cmf.pop().expect("3 columns"), "ybar")?;
        let xbar = curve(cmf.pop().expect("3 columns"), "xbar")?;
        let tcs = tcs
            .into_iter()
            .enumerate()
            .map(|(k, c)| curve(c, &format!("TCS{:02}", k + 1)))
            .collect::<Result<Vec<_>>>()?;
        let s2 = day.pop().expect("3 columns");
        let s1 = day.pop().expect("3 columns");
        let s0 = day.pop().expect("3 columns");
        Ok(Self {
            xbar,
            ybar,
            zbar,
            tcs,
            daylight_s0: s0,
            daylight_s1: s1,
            daylight_s2: s2,
        })
    }

    /// Shared copy of the bundled tables.
    pub fn standard() -> &'static CieDataset {
        static DATA: OnceLock<CieDataset> = OnceLock::new();
        DATA.get_or_init(|| CieDataset::load().expect("bundled CIE tables are well formed"))
    }

    /// Photopic luminous efficiency, identical to `ybar`.
    pub fn photopic(&self) -> &SpectralCurve {
        &self.ybar
    }
}
