//! Finite-difference checks of the analytic error-network gradients.

mod common;

use cfm::errnet::{loss_and_gradients, BlockOrder, FeatureMap};
use common::{loss_at, rel_err, setup, worst_param_error, REL_TOL, STEP};

#[test]
fn parameter_gradients_match_finite_differences() {
    let (worst, n) = worst_param_error(BlockOrder::ConvReluBn, 21);
    assert_eq!(n, 4 * 27 + 4 * 3 + 4 + 1);
    assert!(worst < REL_TOL);
}

#[test]
fn parameter_gradients_match_finite_differences_bn_first() {
    let (worst, _) = worst_param_error(BlockOrder::ConvBnRelu, 22);
    assert!(worst < REL_TOL);
}

#[test]
fn input_gradient_matches_finite_differences() {
    let (params, feats, target) = setup(BlockOrder::ConvReluBn, 23);
    let grads = loss_and_gradients(&params, &[&feats], &[&target]).unwrap().grads;
    let c = feats.channels();
    for (idx, &v) in feats.data().iter().enumerate().step_by(7) {
        let bump = |d: f32| {
            let mut data = feats.data().to_vec();
            data[idx] = v + d;
            FeatureMap::new(8, 8, c, data).unwrap()
        };
        let (fp, fm) = (bump(STEP), bump(-STEP));
        let dv = f64::from(fp.data()[idx]) - f64::from(fm.data()[idx]);
        let numeric = (loss_at(&params, &fp, &target) - loss_at(&params, &fm, &target)) / dv;
        let analytic = grads.input[0][idx % c][idx / c];
        assert!(rel_err(analytic, numeric) < REL_TOL, "feature {idx}: {analytic} vs {numeric}");
    }
}
