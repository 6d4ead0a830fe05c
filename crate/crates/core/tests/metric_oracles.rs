mod common;

use common::{for_each_input, oracle_ap, oracle_auc, score_grid};
use proptest::prelude::*;
use wso_lab::metrics::{average_precision, roc_auc};
use wso_lab::Error;

#[test]
fn documented_examples() {
    assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
    assert_eq!(roc_auc(&[0.8, 0.6, 0.4], &[true, false, true]).unwrap(), 0.5);
    assert_eq!(average_precision(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
    assert_eq!(average_precision(&[0.9, 0.1], &[false, true]).unwrap(), 0.5);
    assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::AucUndefined)));
    assert!(matches!(average_precision(&[0.1, 0.2], &[false, false]), Err(Error::ApUndefined)));
}

#[test]
fn exhaustive_up_to_six_items() {
    let grid = score_grid();
    let mut checked = 0usize;
    for n in 1..=6 {
        for_each_input(n, &grid, |s, l| {
            assert_eq!(roc_auc(s, l).ok(), oracle_auc(s, l), "AUC {s:?} {l:?}");
            assert_eq!(average_precision(s, l).ok(), oracle_ap(s, l), "AP {s:?} {l:?}");
            checked += 1;
        });
    }
    // C(18 + n - 1, n) multisets for n = 1..=6
    assert_eq!(checked, 18 + 171 + 1140 + 5985 + 26334 + 100947);
}

fn grid_vec(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (prop::collection::vec((1u32..=9).prop_map(|k| k as f64 / 10.0), n), prop::collection::vec(any::<bool>(), n))
}

fn grid_input(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1..=max_len).prop_flat_map(grid_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eight_element_inputs_match_oracles((s, l) in grid_vec(8)) {
        prop_assert_eq!(roc_auc(&s, &l).ok(), oracle_auc(&s, &l));
        prop_assert_eq!(average_precision(&s, &l).ok(), oracle_ap(&s, &l));
    }

    #[test]
    fn longer_inputs_with_real_scores(
        pairs in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 1..60),
    ) {
        let s: Vec<f64> = pairs.iter().map(|p| (p.0 * 4.0).round() / 4.0).collect();
        let l: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(roc_auc(&s, &l).ok(), oracle_auc(&s, &l));
        prop_assert_eq!(average_precision(&s, &l).ok(), oracle_ap(&s, &l));
    }

    #[test]
    fn strictly_increasing_transforms_preserve_both((s, l) in grid_input(12)) {
        let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
        prop_assert_eq!(roc_auc(&s, &l).ok(), roc_auc(&t, &l).ok());
        prop_assert_eq!(average_precision(&s, &l).ok(), average_precision(&t, &l).ok());
    }
}
