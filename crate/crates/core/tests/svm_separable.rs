use ndarray::Array2;
use proptest::prelude::*;
use reviewsense::{train_svm, KernelSpec, SentimentClass, SvmConfig};

fn class(i: usize) -> SentimentClass {
    SentimentClass::from_index(i).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Points on either side of a random hyperplane with margin at least 0.1
    /// are classified perfectly by a hard-margin linear machine.
    #[test]
    fn linear_svm_fits_separable_data(
        w in prop::collection::vec(-1.0f64..1.0, 3),
        pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 20..40),
    ) {
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 0.2);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for p in &pts {
            let s = p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / norm;
            if s.abs() >= 0.1 {
                rows.extend_from_slice(p);
                labels.push(if s > 0.0 { class(2) } else { class(0) });
            }
        }
        prop_assume!(labels.iter().any(|l| l.index() == 0) && labels.iter().any(|l| l.index() == 2));
        let x = Array2::from_shape_vec((labels.len(), 3), rows).unwrap();
        let cfg = SvmConfig { c: 1e4, kernel: KernelSpec::Linear, standardize: false, ..SvmConfig::default() };
        let model = train_svm(&x, &labels, &cfg).unwrap();
        let pred = model.predict_rows(&x).unwrap();
        prop_assert_eq!(pred, labels);
    }
}
