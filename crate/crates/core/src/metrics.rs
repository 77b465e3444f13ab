//! Regression and classification metrics.

use ndarray::{ArrayBase, ArrayView2, Axis, Data, Dimension};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which Q² expression to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Q2Form {
    /// `1 − Σ(y − ŷ)² / Σ(y − ȳ_cal)²`; one for a perfect prediction.
    #[default]
    Standard,
    /// The bare residual ratio `Σ(y − ŷ)² / Σ(y − ȳ_cal)²`, kept for auditing.
    Literal,
}

/// Metrics for one evaluated model on a test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub nrmse_percent: f64,
    pub q2: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    pub n_test: usize,
    pub n_cal: usize,
    pub y_range_cal: f64,
}

impl EvalReport {
    /// Regression report in original response units.
    pub fn regression(
        y_test: ArrayView2<f64>,
        y_pred: ArrayView2<f64>,
        y_cal: ArrayView2<f64>,
    ) -> Result<Self> {
        let rmse = rmse(&y_test, &y_pred)?;
        let (lo, hi) = range(&y_cal)?;
        Ok(Self {
            rmse,
            nrmse_percent: nrmse(rmse, lo, hi)?,
            q2: q2(y_test, y_pred, y_cal)?,
            accuracy: None,
            n_test: y_test.nrows(),
            n_cal: y_cal.nrows(),
            y_range_cal: hi - lo,
        })
    }

    /// Classification report: accuracy of the labels plus the regression
    /// metrics of the one-hot scores.
    pub fn classification(
        labels_true: &[usize],
        labels_pred: &[usize],
        y_test: ArrayView2<f64>,
        y_pred: ArrayView2<f64>,
        y_cal: ArrayView2<f64>,
    ) -> Result<Self> {
        let mut report = Self::regression(y_test, y_pred, y_cal)?;
        report.accuracy = Some(accuracy(labels_true, labels_pred)?);
        Ok(report)
    }
}

fn check_pair<S1, S2, D>(a: &ArrayBase<S1, D>, b: &ArrayBase<S2, D>) -> Result<()>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyData("metric over zero samples".into()));
    }
    Ok(())
}

/// Root mean squared error over all entries.
pub fn rmse<S1, S2, D>(y_true: &ArrayBase<S1, D>, y_pred: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    check_pair(y_true, y_pred)?;
    let sse: f64 = y_true
        .iter()
        .zip(y_pred.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / y_true.len() as f64).sqrt())
}

/// RMSE as a percentage of the calibration response range.
pub fn nrmse(rmse: f64, y_cal_min: f64, y_cal_max: f64) -> Result<f64> {
    let span = y_cal_max - y_cal_min;
    if !(span > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "calibration range [{y_cal_min}, {y_cal_max}] is empty"
        )));
    }
    Ok(100.0 * rmse / span)
}

fn range<S, D>(y: &ArrayBase<S, D>) -> Result<(f64, f64)>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if y.is_empty() {
        return Err(Error::EmptyData("calibration responses".into()));
    }
    Ok(y.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        }))
}

/// Goodness of prediction, `1 − Σ(y − ŷ)² / Σ(y − ȳ_cal)²`, with column means
/// taken from the calibration responses.
pub fn q2(y_test: ArrayView2<f64>, y_pred: ArrayView2<f64>, y_cal: ArrayView2<f64>) -> Result<f64> {
    q2_with(y_test, y_pred, y_cal, Q2Form::Standard)
}

pub fn q2_with(
    y_test: ArrayView2<f64>,
    y_pred: ArrayView2<f64>,
    y_cal: ArrayView2<f64>,
    form: Q2Form,
) -> Result<f64> {
    check_pair(&y_test, &y_pred)?;
    if y_cal.ncols() != y_test.ncols() || y_cal.nrows() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "calibration responses are {:?}, test responses {:?}",
            y_cal.shape(),
            y_test.shape()
        )));
    }
    let cal_means = y_cal.mean_axis(Axis(0)).expect("non-empty");
    let cal_spread: f64 = (&y_cal - &cal_means).iter().map(|v| v * v).sum();
    if !(cal_spread > 0.0) {
        return Err(Error::InvalidArgument(
            "calibration responses have zero variance".into(),
        ));
    }
    let residual: f64 = y_test
        .iter()
        .zip(y_pred.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let baseline: f64 = (&y_test - &cal_means).iter().map(|v| v * v).sum();
    if !(baseline > 0.0) {
        return Err(Error::InvalidArgument(
            "test responses coincide with the calibration mean".into(),
        ));
    }
    let ratio = residual / baseline;
    Ok(match form {
        Q2Form::Standard => 1.0 - ratio,
        Q2Form::Literal => ratio,
    })
}

/// Fraction of exact label matches.
pub fn accuracy(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    if labels_true.len() != labels_pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true labels but {} predictions",
            labels_true.len(),
            labels_pred.len()
        )));
    }
    if labels_true.is_empty() {
        return Err(Error::EmptyData("accuracy over zero samples".into()));
    }
    let hits = labels_true
        .iter()
        .zip(labels_pred)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / labels_true.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rmse_examples() {
        let a = array![1.0, 2.0, 3.0];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let y = array![0.0, 0.0];
        let y_hat = array![3.0, 4.0];
        assert_abs_diff_eq!(rmse(&y, &y_hat).unwrap(), 12.5f64.sqrt(), epsilon = 1e-15);
        assert!(rmse(&array![1.0], &array![1.0, 2.0]).is_err());
        assert!(rmse(&Array1::<f64>::zeros(0), &Array1::<f64>::zeros(0)).is_err());
    }

    #[test]
    fn rmse_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y_hat: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut diffs = Vec::new();
        for i in 0..50 {
            diffs.push(y[i] - y_hat[i]);
        }
        let mut acc = 0.0;
        for d in &diffs {
            acc += d * d;
        }
        let oracle = (acc / 50.0).sqrt();
        let got = rmse(&Array1::from(y), &Array1::from(y_hat)).unwrap();
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-13);
    }

    #[test]
    fn nrmse_examples() {
        assert_eq!(nrmse(0.0, -1.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(nrmse(0.5, 0.0, 10.0).unwrap(), 5.0, epsilon = 1e-15);
        assert!(nrmse(0.5, 2.0, 2.0).is_err());
    }

    #[test]
    fn q2_examples() {
        let cal = array![[1.0], [2.0], [3.0], [4.0]];
        let test = array![[1.5], [3.5]];
        assert_eq!(q2(test.view(), test.view(), cal.view()).unwrap(), 1.0);
        let mean_pred = array![[2.5], [2.5]];
        assert_abs_diff_eq!(
            q2(test.view(), mean_pred.view(), cal.view()).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let lit = q2_with(test.view(), mean_pred.view(), cal.view(), Q2Form::Literal).unwrap();
        assert_abs_diff_eq!(lit, 1.0, epsilon = 1e-15);
        let flat = array![[1.0], [1.0]];
        assert!(q2(test.view(), test.view(), flat.view()).is_err());
    }

    #[test]
    fn mean_predictor_scores_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let cal = Array2::from_shape_fn((80, 1), |_| rng.random_range(-1.0..1.0));
            let mut test = Array2::from_shape_fn((20, 1), |_| rng.random_range(-1.0..1.0));
            let shift = cal.mean().unwrap() - test.mean().unwrap();
            test.mapv_inplace(|v| v + shift);
            let pred = Array2::from_elem((20, 1), cal.mean().unwrap());
            assert!(q2(test.view(), pred.view(), cal.view()).unwrap() <= 0.05);
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn report_fields_are_consistent() {
        let cal = array![[0.0], [10.0], [5.0]];
        let test = array![[1.0], [2.0]];
        let pred = array![[1.5], [2.5]];
        let r = EvalReport::regression(test.view(), pred.view(), cal.view()).unwrap();
        assert_abs_diff_eq!(r.nrmse_percent, 100.0 * r.rmse / 10.0, epsilon = 1e-14);
        assert_eq!(r.y_range_cal, 10.0);
        assert_eq!((r.n_test, r.n_cal), (2, 3));
        assert!(r.accuracy.is_none());
    }

    proptest! {
        #[test]
        fn rmse_zero_iff_equal(v in proptest::collection::vec(-10.0f64..10.0, 1..20), i in 0usize..20, d in 1e-3f64..1.0) {
            let a = Array1::from(v.clone());
            prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
            let mut w = v.clone();
            let k = i % w.len();
            w[k] += d;
            prop_assert!(rmse(&a, &Array1::from(w)).unwrap() > 0.0);
        }

        #[test]
        fn nrmse_is_shift_invariant(
            cal in proptest::collection::vec(-10.0f64..10.0, 3..20),
            test in proptest::collection::vec(-10.0f64..10.0, 1..10),
            shift in -100.0f64..100.0,
        ) {
            let lo = cal.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = cal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi - lo > 1e-3);
            let pred: Vec<f64> = test.iter().map(|v| v * 0.9 + 0.1).collect();
            let base = nrmse(rmse(&Array1::from(test.clone()), &Array1::from(pred.clone())).unwrap(), lo, hi).unwrap();
            let t2: Vec<f64> = test.iter().map(|v| v + shift).collect();
            let p2: Vec<f64> = pred.iter().map(|v| v + shift).collect();
            let moved = nrmse(rmse(&Array1::from(t2), &Array1::from(p2)).unwrap(), lo + shift, hi + shift).unwrap();
            prop_assert!((base - moved).abs() <= 1e-9 * (1.0 + base));
        }

        #[test]
        fn accuracy_ignores_consistent_relabeling(
            labels in proptest::collection::vec((0usize..4, 0usize..4), 1..40),
            perm in Just([2usize, 0, 3, 1]),
        ) {
            let (t, p): (Vec<usize>, Vec<usize>) = labels.into_iter().unzip();
            let t2: Vec<usize> = t.iter().map(|&l| perm[l]).collect();
            let p2: Vec<usize> = p.iter().map(|&l| perm[l]).collect();
            prop_assert_eq!(accuracy(&t, &p).unwrap(), accuracy(&t2, &p2).unwrap());
        }
    }
}
