//! Binary classification metrics.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// 2x2 confusion counts with class 1 (SIB) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tn: u64,
    pub fp: u64,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: u64,
    pub tp: u64,
}

impl Confusion {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::LengthMismatch { left: predictions.len(), right: labels.len() });
        }
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            c.record(p != 0, y != 0);
        }
        Ok(c)
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (actual, predicted) {
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (true, true) => self.tp += 1,
        }
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn positives(&self) -> u64 {
        self.fn_ + self.tp
    }

    pub fn total(&self) -> u64 {
        self.negatives() + self.positives()
    }

    /// Mean of the per-class recalls over the classes present. Computed with
    /// a single division so that e.g. 71/100 and 74/100 give exactly 0.725.
    pub fn balanced_accuracy(&self) -> f64 {
        let (n0, n1) = (self.negatives() as u128, self.positives() as u128);
        match (n0, n1) {
            (0, 0) => 0.0,
            (0, _) => self.tp as f64 / n1 as f64,
            (_, 0) => self.tn as f64 / n0 as f64,
            _ => {
                let num = self.tp as u128 * n0 + self.tn as u128 * n1;
                num as f64 / (2 * n0 * n1) as f64
            }
        }
    }

    /// Recall of class 1; zero when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.positives()).unwrap_or(0.0)
    }

    /// Precision of class 1; undefined without positive predictions.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Support-weighted mean of the per-class F1 scores (undefined F1 = 0).
    pub fn weighted_f1(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let f1 = |tp: u64, fp: u64, fn_: u64| ratio(2 * tp, 2 * tp + fp + fn_).unwrap_or(0.0);
        let f1_pos = f1(self.tp, self.fp, self.fn_);
        let f1_neg = f1(self.tn, self.fn_, self.fp);
        (self.positives() as f64 * f1_pos + self.negatives() as f64 * f1_neg) / total as f64
    }

    /// Rows are actual classes (0, 1); each row sums to 1 when it has support.
    pub fn row_normalized(&self) -> [[f64; 2]; 2] {
        let row = |a: u64, b: u64| {
            let n = a + b;
            if n == 0 {
                [0.0, 0.0]
            } else {
                [a as f64 / n as f64, b as f64 / n as f64]
            }
        };
        [row(self.tn, self.fp), row(self.fn_, self.tp)]
    }

    pub fn merge(&self, other: &Confusion) -> Confusion {
        Confusion {
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tp: self.tp + other.tp,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Scalar metrics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BinaryMetrics {
    pub confusion: Confusion,
    pub balanced_accuracy: f64,
    pub recall: f64,
    pub precision: Option<f64>,
    pub weighted_f1: f64,
}

impl From<Confusion> for BinaryMetrics {
    fn from(c: Confusion) -> Self {
        BinaryMetrics {
            confusion: c,
            balanced_accuracy: c.balanced_accuracy(),
            recall: c.recall(),
            precision: c.precision(),
            weighted_f1: c.weighted_f1(),
        }
    }
}

pub fn compute_metrics(predictions: &[u8], labels: &[u8]) -> Result<BinaryMetrics> {
    Ok(Confusion::from_predictions(predictions, labels)?.into())
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> MeanSd {
        if values.is_empty() {
            return MeanSd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanSd { mean, sd: libm::sqrt(var), n: values.len() }
    }

    /// Over the values that are defined; `n` counts those.
    pub fn of_defined(values: &[Option<f64>]) -> Option<MeanSd> {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        (!defined.is_empty()).then(|| MeanSd::of(&defined))
    }
}

/// Nearest-rank percentile of `values` (`p` in (0, 100]).
pub fn nearest_rank_percentile(values: &[usize], p: f64) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = libm::ceil(p / 100.0 * sorted.len() as f64) as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn counts(tn: u64, fp: u64, fn_: u64, tp: u64) -> Confusion {
        Confusion { tn, fp, fn_, tp }
    }

    #[test]
    fn figure_matrix_gives_0725() {
        let c = counts(74, 26, 29, 71);
        assert_eq!(c.balanced_accuracy(), 0.725);
        assert_eq!(c.row_normalized(), [[0.74, 0.26], [0.29, 0.71]]);
    }

    #[test]
    fn majority_predictor() {
        let labels = [0, 0, 0, 1, 0, 1, 0, 0];
        let m = compute_metrics(&[0; 8], &labels).unwrap();
        assert_eq!(m.balanced_accuracy, 0.5);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.precision, None);
    }

    #[test]
    fn perfect_predictor() {
        let labels = [0, 1, 1, 0, 1];
        let m = compute_metrics(&labels, &labels).unwrap();
        assert_eq!(m.balanced_accuracy, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.weighted_f1, 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_metrics(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn weighted_f1_by_hand() {
        // tn=3 fp=1 fn=2 tp=4: F1(1) = 8/11, F1(0) = 6/9.
        let c = counts(3, 1, 2, 4);
        let expect = (6.0 * (8.0 / 11.0) + 4.0 * (6.0 / 9.0)) / 10.0;
        assert!((c.weighted_f1() - expect).abs() < 1e-12);
    }

    #[test]
    fn percentiles() {
        let v = vec![1, 1, 2, 3, 3, 4, 8, 9, 12, 30];
        assert_eq!(nearest_rank_percentile(&v, 25.0), Some(2));
        assert_eq!(nearest_rank_percentile(&v, 50.0), Some(3));
        assert_eq!(nearest_rank_percentile(&v, 75.0), Some(9));
        assert_eq!(nearest_rank_percentile(&v, 100.0), Some(30));
        assert_eq!(nearest_rank_percentile(&[], 50.0), None);
    }

    #[test]
    fn mean_sd() {
        let s = MeanSd::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.sd, 1.0);
    }
}
