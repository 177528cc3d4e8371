use crate::error::{Error, Result};

/// CSK symbol set: RGB intensity triples with a constant power envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct CskConstellation {
    symbols: Vec<[f64; 3]>,
    bit_map: Vec<u32>,
    bits_per_symbol: u32,
}

impl CskConstellation {
    pub fn new(symbols: Vec<[f64; 3]>, bit_map: Vec<u32>) -> Result<Self> {
        let m = symbols.len();
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::domain(format!("constellation size {m} is not a power of two >= 2")));
        }
        if bit_map.len() != m {
            return Err(Error::domain("bit map length differs from symbol count"));
        }
        for s in &symbols {
            if s.iter().any(|v| !(*v >= 0.0)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!("symbol {s:?} is not a unit-sum intensity triple")));
            }
        }
        let mut seen = vec![false; m];
        for &b in &bit_map {
            let slot = seen
                .get_mut(b as usize)
                .ok_or_else(|| Error::domain(format!("bit pattern {b} out of range")))?;
            if *slot {
                return Err(Error::domain(format!("bit pattern {b} assigned twice")));
            }
            *slot = true;
        }
        Ok(Self {
            symbols,
            bit_map,
            bits_per_symbol: m.trailing_zeros(),
        })
    }

    pub fn level(&self) -> usize {
        self.symbols.len()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn symbols(&self) -> &[[f64; 3]] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> [f64; 3] {
        self.symbols[index]
    }

    pub fn bits(&self, index: usize) -> u32 {
        self.bit_map[index]
    }

    /// Bits that differ between the patterns of two symbol indices.
    pub fn bit_errors(&self, sent: usize, decided: usize) -> u32 {
        (self.bit_map[sent] ^ self.bit_map[decided]).count_ones()
    }

    /// Per-colour mean intensity under equiprobable symbols.
    pub fn mean_symbol(&self) -> [f64; 3] {
        let n = self.symbols.len() as f64;
        std::array::from_fn(|c| self.symbols.iter().map(|s| s[c]).sum::<f64>() / n)
    }
}

impl Default for CskConstellation {
    fn default() -> Self {
        default_constellation()
    }
}

/// 4-CSK: the three primaries plus the white centroid, bits 00, 01, 10, 11.
pub fn default_constellation() -> CskConstellation {
    let third = 1.0 / 3.0;
    CskConstellation::new(
        vec![
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [third, third, third],
        ],
        vec![0b00, 0b01, 0b10, 0b11],
    )
    .expect("default constellation is valid")
}

/// NOMA superposition `ρ·S1 + (1-ρ)·S2`.
pub fn superpose(s1: [f64; 3], s2: [f64; 3], rho: f64) -> Result<[f64; 3]> {
    if !(0.0..=0.5).contains(&rho) {
        return Err(Error::domain(format!("allocation {rho} outside [0, 0.5]")));
    }
    Ok(std::array::from_fn(|c| rho * s1[c] + (1.0 - rho) * s2[c]))
}
