mod common;

use proptest::prelude::*;
use xlalign_core::loss::{global_inbatch_loss, onedim_inbatch_loss};
use xlalign_core::Matrix;

#[test]
fn identity_fixtures() {
    let s = Matrix::identity(2);
    let e = std::f64::consts::E;
    let g = global_inbatch_loss(&s, 1.0).unwrap();
    assert!((g.report.loss - -(e / (e + 2.0)).ln()).abs() < 1e-12);
    assert_eq!(g.report.negatives, 2);
    assert_eq!(g.report.negatives_per_positive, 2);
    let o = onedim_inbatch_loss(&s, 1.0).unwrap();
    assert!((o.report.loss - -(e / (e + 1.0)).ln()).abs() < 1e-12);
    assert_eq!(o.report.negatives_per_positive, 1);
}

#[test]
fn negative_counts() {
    for n in 1..10 {
        let r = global_inbatch_loss(&Matrix::zeros(n, n), 5.0)
            .unwrap()
            .report;
        assert_eq!(
            (r.positives, r.negatives, r.negatives_per_positive),
            (n, n * n - n, n * n - n)
        );
    }
}

#[test]
fn huge_logits_stay_finite() {
    let s = Matrix::from_rows(&[
        [900.0, 850.0, -3.0],
        [870.0, 1000.0, 0.0],
        [0.0, 990.0, 5.0],
    ])
    .unwrap();
    for l in [
        global_inbatch_loss(&s, 0.5).unwrap(),
        onedim_inbatch_loss(&s, 0.5).unwrap(),
    ] {
        assert!(l.report.loss.is_finite() && l.grad.is_finite());
    }
}

#[test]
fn rejects_bad_input() {
    assert!(global_inbatch_loss(&Matrix::zeros(2, 3), 1.0).is_err());
    assert!(global_inbatch_loss(&Matrix::identity(2), 0.0).is_err());
    assert!(onedim_inbatch_loss(&Matrix::identity(2), -1.0).is_err());
}

fn fd_grad(s: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let h = 1e-5;
    let mut g = Matrix::zeros(s.rows(), s.cols());
    for k in 0..s.as_slice().len() {
        let mut plus = s.clone();
        plus.as_mut_slice()[k] += h;
        let mut minus = s.clone();
        minus.as_mut_slice()[k] -= h;
        g.as_mut_slice()[k] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

proptest! {
    #[test]
    fn losses_match_oracles(seed in any::<u64>(), n in 1usize..8, tau in 0.05f64..10.0) {
        let s = common::random_matrix(&mut common::rng(seed), n, n, 3.0);
        let g = global_inbatch_loss(&s, tau).unwrap().report.loss;
        prop_assert!((g - common::oracle_global_loss(&s, tau)).abs() < 1e-9 * (1.0 + g.abs()));
        let o = onedim_inbatch_loss(&s, tau).unwrap().report.loss;
        prop_assert!((o - common::oracle_onedim_loss(&s, tau)).abs() < 1e-9 * (1.0 + o.abs()));
    }

    #[test]
    fn score_gradients_match_differences(seed in any::<u64>(), n in 1usize..6, tau in 0.5f64..5.0) {
        let s = common::random_matrix(&mut common::rng(seed), n, n, 2.0);
        let g = global_inbatch_loss(&s, tau).unwrap().grad;
        let fd = fd_grad(&s, |m| global_inbatch_loss(m, tau).unwrap().report.loss);
        prop_assert!(g.max_abs_diff(&fd) < 1e-7);
        let g = onedim_inbatch_loss(&s, tau).unwrap().grad;
        let fd = fd_grad(&s, |m| onedim_inbatch_loss(m, tau).unwrap().report.loss);
        prop_assert!(g.max_abs_diff(&fd) < 1e-7);
    }

    #[test]
    fn global_never_below_onedim(seed in any::<u64>(), n in 2usize..7) {
        // The global denominator contains every one-dim denominator term except
        // the positive itself, plus more.
        let s = common::random_matrix(&mut common::rng(seed), n, n, 2.0);
        let g = global_inbatch_loss(&s, 1.0).unwrap().report.loss;
        let o = onedim_inbatch_loss(&s, 1.0).unwrap().report.loss;
        prop_assert!(g >= o - 1e-12);
    }
}
