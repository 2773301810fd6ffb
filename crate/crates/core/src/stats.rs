//! Paired significance testing.

use crate::error::{Error, Result};

/// Outcome of McNemar's test on two classifiers evaluated on the same items.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McNemar {
    pub chi2: f64,
    /// Items A gets right and B gets wrong.
    pub b: u64,
    /// Items A gets wrong and B gets right.
    pub c: u64,
    pub p: f64,
    pub n: u64,
}

/// Continuity-corrected McNemar statistic `(|b - c| - 1)^2 / (b + c)`.
pub fn mcnemar_from_counts(b: u64, c: u64) -> (f64, f64) {
    if b + c == 0 {
        return (0.0, 1.0);
    }
    let d = b.abs_diff(c) as f64 - 1.0;
    let chi2 = d * d / (b + c) as f64;
    (chi2, chi2_sf_1dof(chi2))
}

pub fn mcnemar(preds_a: &[u8], preds_b: &[u8], labels: &[u8]) -> Result<McNemar> {
    if preds_a.len() != labels.len() {
        return Err(Error::LengthMismatch { left: preds_a.len(), right: labels.len() });
    }
    if preds_b.len() != labels.len() {
        return Err(Error::LengthMismatch { left: preds_b.len(), right: labels.len() });
    }
    let (mut b, mut c) = (0u64, 0u64);
    for ((&pa, &pb), &y) in preds_a.iter().zip(preds_b).zip(labels) {
        let a_ok = (pa != 0) == (y != 0);
        let b_ok = (pb != 0) == (y != 0);
        match (a_ok, b_ok) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    let (chi2, p) = mcnemar_from_counts(b, c);
    Ok(McNemar { chi2, b, c, p, n: labels.len() as u64 })
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_sf_1dof(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc(libm::sqrt(x / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_statistics() {
        assert_eq!(mcnemar_from_counts(10, 0).0, 8.1);
        assert_eq!(mcnemar_from_counts(5, 5).0, 0.1);
        assert_eq!(mcnemar_from_counts(0, 0), (0.0, 1.0));
    }

    #[test]
    fn identical_predictions() {
        let p = [1, 0, 1, 1];
        let r = mcnemar(&p, &p, &[1, 1, 0, 1]).unwrap();
        assert_eq!((r.b, r.c, r.chi2, r.p), (0, 0, 0.0, 1.0));
    }

    #[test]
    fn swapping_roles_swaps_counts() {
        let a = [1, 0, 1, 1, 0, 0];
        let b = [0, 0, 1, 0, 1, 1];
        let y = [1, 0, 1, 1, 0, 1];
        let ab = mcnemar(&a, &b, &y).unwrap();
        let ba = mcnemar(&b, &a, &y).unwrap();
        assert_eq!((ab.b, ab.c), (ba.c, ba.b));
        assert_eq!(ab.chi2, ba.chi2);
    }

    #[test]
    fn tail_probability_reference_points() {
        // 3.841 is the 95% quantile of chi2(1), 6.635 the 99% quantile.
        assert!((chi2_sf_1dof(3.841_458_820_694_124) - 0.05).abs() < 1e-9);
        assert!((chi2_sf_1dof(6.634_896_601_021_214) - 0.01).abs() < 1e-9);
    }

    #[test]
    fn misaligned() {
        assert!(mcnemar(&[1], &[1, 0], &[1]).is_err());
    }
}
