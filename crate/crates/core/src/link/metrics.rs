use crate::error::{Error, Result};

/// Shannon capacity `B·log2(1 + sinr)` in bit/s.
pub fn capacity(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * sinr.max(0.0).ln_1p() / std::f64::consts::LN_2
}

/// Error-discounted rate `C·(1 - ber)`.
pub fn throughput(capacity_bps: f64, ber: f64) -> f64 {
    capacity_bps * (1.0 - ber.clamp(0.0, 1.0))
}

/// Jain's fairness index `(ΣT)² / (N·ΣT²)`.
pub fn jain_index(throughputs: &[f64]) -> Result<f64> {
    if throughputs.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::domain("throughputs must be finite and non-negative"));
    }
    // Normalise by the largest share so the index is exactly scale free.
    let peak = throughputs.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::domain("Jain index of all-zero throughputs is undefined"));
    }
    let sum: f64 = throughputs.iter().map(|t| t / peak).sum();
    let sq: f64 = throughputs.iter().map(|t| (t / peak) * (t / peak)).sum();
    Ok((sum * sum / (throughputs.len() as f64 * sq)).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capacity_examples() {
        assert_eq!(capacity(0.0, 30e6), 0.0);
        assert!((capacity(1.0, 30e6) - 3.0e7).abs() < 1e-6);
        assert!((capacity(3.0, 30e6) - 6.0e7).abs() < 1e-6);
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput(5.0e7, 0.0), 5.0e7);
        assert_eq!(throughput(5.0e7, 1.0), 0.0);
        assert!((throughput(1.0e8, 1.52e-2) - 9.848e7).abs() < 1e-3);
    }

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[7.0, 7.0]).unwrap(), 1.0);
        assert_eq!(jain_index(&[7.0, 0.0]).unwrap(), 0.5);
        assert!((jain_index(&[3.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(jain_index(&[0.0, 0.0]), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn jain_is_scale_invariant(a in 0.0f64..1e9, b in 1.0f64..1e9, c in 1e-6f64..1e6) {
            let j = jain_index(&[a, b]).unwrap();
            let js = jain_index(&[c * a, c * b]).unwrap();
            prop_assert!((j - js).abs() <= 1e-12);
            prop_assert!((0.5..=1.0).contains(&j));
        }
    }
}
