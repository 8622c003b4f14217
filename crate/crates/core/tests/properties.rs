use std::f64::consts::TAU;

use alpha_ilc::basis::{BasisSet, ParamVector, Role};
use alpha_ilc::commutation::{build_sample_grid, DriveProfile, SampleGrid, Segment};
use alpha_ilc::ilc::{compute_learning_matrices, fit_cost, fit_error, ilc_update, IlcWeights, Weight};
use alpha_ilc::quadrature::QuadratureSpec;
use alpha_ilc::waveform::{combined_shear_input, split_compensating_fn, standard_waveforms, WaveformConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;

const H0: f64 = 1.309e-8;

fn basis() -> BasisSet {
    BasisSet::inverse_quadratic(30).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grids_are_increasing_and_inside_one_step(
        f1 in 15.0f64..45.0,
        f2 in 15.0f64..45.0,
        split in 0.002f64..0.02,
        fs in 1400.0f64..3000.0,
    ) {
        let p = DriveProfile::piecewise(vec![
            Segment { duration_s: Some(split), hz: f1 },
            Segment { duration_s: None, hz: f2 },
        ]).unwrap();
        let g = build_sample_grid(&p, 0, fs, 1).unwrap();
        prop_assert!(g.alphas[0] > 0.0);
        prop_assert!(*g.alphas.last().unwrap() < TAU);
        prop_assert!(g.alphas.windows(2).all(|w| w[0] < w[1]));
        // one more sample would reach or pass the end of the step
        let next = (g.len() + 1) as f64 / fs;
        prop_assert!(next >= g.step_duration_s * (1.0 - 1e-12));
    }

    #[test]
    fn fit_is_least_squares_optimal(
        coeffs in proptest::collection::vec(-1.0f64..1.0, 4),
        hz in 20.0f64..40.0,
        dir in proptest::collection::vec(-1.0f64..1.0, 30),
    ) {
        let b = basis();
        let g = build_sample_grid(&DriveProfile::constant(hz).unwrap(), 0, 1500.0, 30).unwrap();
        // not representable by the basis, so the residual is nonzero
        let e: Vec<f64> = g.alphas.iter()
            .map(|&a| 1e-8 * (coeffs[0] * a.sin() + coeffs[1] * (7.0 * a).cos() + coeffs[2] * (11.0 * a + coeffs[3]).sin()))
            .collect();
        let fit = fit_error(&e, &g, &b, 1e-10).unwrap();
        let theta: Vec<f64> = fit.theta.theta.iter().copied().collect();
        let j0 = fit_cost(&e, &g, &b, &theta);
        for scale in [1e-12, 1e-10, 1e-9] {
            let moved: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + scale * d).collect();
            prop_assert!(fit_cost(&e, &g, &b, &moved) >= j0 * (1.0 - 1e-9));
        }
    }

    #[test]
    fn split_round_trip_for_smooth_inputs(
        amp in proptest::collection::vec(-8.0f64..8.0, 3),
        phase in 0.0f64..TAU,
    ) {
        let cfg = WaveformConfig::default();
        let base = standard_waveforms(&cfg).unwrap().shears;
        let us0 = combined_shear_input(&base).unwrap();
        let u = |a: f64| amp[0] * (a + phase).sin() + amp[1] * (2.0 * a).cos() + amp[2] * a / TAU;
        let split = split_compensating_fn(u, &base).unwrap();
        split.check_equal_derivatives().unwrap();
        let us = combined_shear_input(&split).unwrap();
        for (k, (a, b)) in us.values().iter().zip(us0.values()).enumerate() {
            let alpha = us.table.alpha(k);
            prop_assert!((a - b - u(alpha)).abs() < 1e-9);
        }
    }

    #[test]
    fn update_is_linear(
        a in proptest::collection::vec(-1.0f64..1.0, 30),
        b in proptest::collection::vec(-1e-8f64..1e-8, 30),
        s in -3.0f64..3.0,
    ) {
        let lm = compute_learning_matrices(&basis(), &IlcWeights::scalar(1.0, 0.0, 0.3 * H0 * H0), H0, QuadratureSpec::default()).unwrap();
        let tu = ParamVector::from_slice(&a, Role::Input);
        let te = ParamVector::from_slice(&b, Role::Error);
        let once = ilc_update(&tu, &te, &lm).unwrap();
        let scaled = ilc_update(
            &ParamVector::new(&tu.theta * s, Role::Input),
            &ParamVector::new(&te.theta * s, Role::Error),
            &lm,
        ).unwrap();
        prop_assert!((&once.theta * s - scaled.theta).amax() < 1e-12 * (1.0 + once.theta.amax() * s.abs()));
    }
}

#[test]
fn doubling_quadrature_leaves_matrices_unchanged() {
    let b = basis();
    let h2 = H0 * H0;
    let weights = IlcWeights {
        w_e: Weight::function(|a: f64| 1.0 + 0.4 * (3.0 * a).cos()),
        w_u: Weight::function(move |a: f64| 0.1 * h2 * (1.0 + a.sin().powi(2))),
        w_du: Weight::Constant(0.3 * h2),
    };
    let q1 = QuadratureSpec::default();
    let m1 = compute_learning_matrices(&b, &weights, H0, q1).unwrap();
    let m2 = compute_learning_matrices(&b, &weights, H0, q1.doubled()).unwrap();
    let rel = |x: &DMatrix<f64>, y: &DMatrix<f64>| (x - y).amax() / y.amax();
    assert!(rel(&m1.q, &m2.q) < 1e-10, "Q changed by {:e}", rel(&m1.q, &m2.q));
    assert!(rel(&m1.l, &m2.l) < 1e-10, "L changed by {:e}", rel(&m1.l, &m2.l));
}

#[test]
fn fit_does_not_depend_on_grid_when_error_is_representable() {
    let b = basis();
    let truth: Vec<f64> = (0..30).map(|k| 1e-9 * ((k as f64) * 0.8).cos()).collect();
    let mut fits = Vec::new();
    for hz in [20.0, 27.0, 35.0, 40.0] {
        let g = build_sample_grid(&DriveProfile::constant(hz).unwrap(), 0, 1500.0, 30).unwrap();
        let e: Vec<f64> = g.alphas.iter().map(|&a| b.combine(&truth, a)).collect();
        fits.push(fit_error(&e, &g, &b, 1e-10).unwrap().theta.theta);
    }
    let probe = SampleGrid::equidistant(500);
    for f in &fits[1..] {
        let dev = probe
            .alphas
            .iter()
            .map(|&a| (b.combine(f.as_slice(), a) - b.combine(fits[0].as_slice(), a)).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-16, "{dev:e}");
    }
}
