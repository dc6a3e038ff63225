use cosim_core::analysis::fit_order;
use cosim_core::extrapolation::{build_constant, build_hermite_linear, build_linear};
use cosim_core::SampleHistory;

/// Max deviation of `sin` from its extrapolant over the interval after `t0`.
fn max_gap(h: f64, t0: f64, kind: &str) -> f64 {
    let mut hist = SampleHistory::new(1, false, 2);
    hist.push(t0 - h, &[(t0 - h).sin()], None).unwrap();
    hist.push(t0, &[t0.sin()], None).unwrap();
    let ext = match kind {
        "constant" => build_constant(&hist, h).unwrap(),
        "linear" => build_linear(&hist, h).unwrap(),
        _ => build_hermite_linear(&[t0.sin()], &[t0.cos()], t0, h).unwrap(),
    };
    (0..=64)
        .map(|i| t0 + h * i as f64 / 64.0)
        .map(|t| (t.sin() - ext.eval_component(t, 0)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn extrapolation_error_orders_on_a_smooth_signal() {
    let hs: Vec<f64> = (0..6).map(|i| 0.2 / 2f64.powi(i)).collect();
    for (kind, order) in [("constant", 1.0), ("linear", 2.0), ("hermite", 2.0)] {
        let gaps: Vec<f64> = hs.iter().map(|&h| max_gap(h, 0.7, kind)).collect();
        let (slope, _) = fit_order(&hs, &gaps).unwrap();
        assert!((slope - order).abs() < 0.1, "{kind}: {slope}");
        // the a priori bounds with max|u'| = max|u''| = 1
        for (&h, &g) in hs.iter().zip(&gaps) {
            let bound = if order == 1.0 { h } else { 2.0 * h * h };
            assert!(g <= bound, "{kind} H={h}: {g} > {bound}");
        }
    }
}
