//! Confusion counts and accuracy for the binary MEDICATION classifier.
//!
//! The positive class is MEDICATION (label 1).

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("entry {index} is {value}, expected 0 or 1")]
    NotBinary { index: usize, value: u8 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts obtained by exchanging the roles of predictions and labels.
    pub fn transposed(&self) -> Self {
        Self {
            fp: self.fn_,
            fn_: self.fp,
            ..*self
        }
    }

    pub fn add(&mut self, prediction: bool, label: bool) {
        match (prediction, label) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    /// `None` when there are no predicted positives.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `None` when there are no actual positives.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionCounts, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut counts = ConfusionCounts::default();
    for (index, (&p, &l)) in predictions.iter().zip(labels).enumerate() {
        for value in [p, l] {
            if value > 1 {
                return Err(MetricsError::NotBinary { index, value });
            }
        }
        counts.add(p == 1, l == 1);
    }
    Ok(counts)
}

/// `(TP + TN) / (TP + TN + FP + FN)`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    ratio(c.tp + c.tn, c.total()).ok_or(MetricsError::EmptyInput)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    #[test]
    fn definitional_cases() {
        assert_eq!(confusion(&[1, 1, 0, 0], &[1, 0, 0, 1]).unwrap(), counts(1, 1, 1, 1));
        assert_eq!(confusion(&[1, 0], &[1, 0]).unwrap(), counts(1, 1, 0, 0));
        assert_eq!(accuracy(&counts(2, 2, 0, 0)).unwrap(), 1.0);
        assert_eq!(accuracy(&counts(3, 1, 0, 1)).unwrap(), 0.8);
    }

    #[test]
    fn table_scale_accuracy() {
        // 1318 of 1348 test windows correct.
        let c = counts(660, 658, 14, 16);
        assert_eq!((accuracy(&c).unwrap() * 1e4).round(), 9777.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            confusion(&[1], &[1, 0]),
            Err(MetricsError::LengthMismatch { predictions: 1, labels: 2 })
        );
        assert_eq!(confusion(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(accuracy(&ConfusionCounts::default()), Err(MetricsError::EmptyInput));
        assert_eq!(
            confusion(&[0, 2], &[0, 1]),
            Err(MetricsError::NotBinary { index: 1, value: 2 })
        );
    }

    #[test]
    fn extras_handle_empty_denominators() {
        let c = counts(0, 5, 0, 0);
        assert_eq!(c.precision(), None);
        assert_eq!(c.recall(), None);
        assert_eq!(counts(1, 0, 1, 0).precision(), Some(0.5));
    }

    proptest! {
        #[test]
        fn accuracy_is_one_iff_no_errors(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
            let (p, l): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let c = confusion(&p, &l).unwrap();
            let acc = accuracy(&c).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert_eq!(acc == 1.0, c.fp == 0 && c.fn_ == 0);
            prop_assert_eq!(c.total(), p.len() as u64);
        }

        #[test]
        fn swapping_roles_swaps_fp_and_fn(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
            let (p, l): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            prop_assert_eq!(confusion(&l, &p).unwrap(), confusion(&p, &l).unwrap().transposed());
        }

        #[test]
        fn permutation_invariant(
            pairs in prop::collection::vec((0u8..2, 0u8..2), 1..100),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::seed::rng(seed));
            let (p1, l1): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let (p2, l2): (Vec<u8>, Vec<u8>) = shuffled.into_iter().unzip();
            prop_assert_eq!(confusion(&p1, &l1).unwrap(), confusion(&p2, &l2).unwrap());
        }
    }
}
