mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::{fixture, rel_l2, rel_l2_c};
use tfha_core::linalg::SparseMatrix;
use tfha_core::mna::{assemble_static, param_stamps, ParamStamps};
use tfha_core::netlist::{list_parameters, parse_netlist, Circuit};
use tfha_core::sensitivity::*;
use tfha_core::spectral::{assemble_hb_jacobian, hb_forward_solve, HarmonicLadder};
use tfha_core::transient::{run_to_steady_state, TransientConfig};
use tfha_core::Error;

type C = Complex64;

fn tight() -> TransientConfig {
    TransientConfig {
        steady_tol: 1e-12,
        newton_tol: 1e-13,
        max_periods: 5000,
        ..Default::default()
    }
}

#[test]
fn divider_closed_form_every_path() {
    let c = fixture("divider");
    let p = c.parameter("R1.value").unwrap();
    let expect = -2.5e-4;

    let out = tfha_run(&c, "v(out)", &[p.clone()], &TfhaConfig::default()).unwrap();
    assert!((out.results[0].spectrum[0].re - expect).abs() <= 1e-12);
    assert!(out.results[0].time_series.iter().all(|v| (v - expect).abs() <= 1e-12));

    let s = TfhaSession::new(&c, "v(out)", &[p.clone()], &TransientConfig::default()).unwrap();
    let direct = s.evaluate_direct(4).unwrap();
    assert!((direct[0][0].re - expect).abs() <= 1e-12);

    let dsa = transient_dsa(&c, &p, s.steady(), &TransientConfig::default()).unwrap();
    let out_idx = s.mna().node_index("out").unwrap();
    assert!(dsa[out_idx].iter().all(|v| (v - expect).abs() <= 1e-12), "{:?}", &dsa[out_idx][..4]);

    let fd = fd_oracle(&c, "v(out)", &p, 1e-4, &TransientConfig::default()).unwrap();
    assert!(fd.iter().all(|v| (v - expect).abs() <= 1e-10));
}

#[test]
fn rc_symbolic_derivative() {
    let c = fixture("rc_filter");
    let mna = assemble_static(&c);
    let ladder = HarmonicLadder::new(c.fundamental_period(), 4).unwrap();
    // an exact steady state for a linear circuit
    let spec = hb_forward_solve(&mna, &ladder, 1e-14, 5).unwrap();
    let rows: Vec<Vec<f64>> = {
        let fft = tfha_core::spectral::FftPair::new(64);
        spec.phasors.iter().map(|x| fft.samples(x)).collect()
    };
    let sys = tfha_core::spectral::jacobian_from_samples(&mna, &ladder, &rows).unwrap();
    let sel = QoiSelector::parse(&mna, "v(out)").unwrap();
    let (r, cap, w) = (1e3, 100e-9, ladder.omega0);
    let den = C::new(1.0, w * r * cap).powi(2);
    let v1 = C::new(0.0, -0.5);
    for (name, d_h) in [("R1.value", C::new(0.0, -w * cap) / den), ("C1.value", C::new(0.0, -w * r) / den)] {
        let stamps = param_stamps(&mna, &c, &c.parameter(name).unwrap()).unwrap();
        let dx = hb_direct_sensitivity(&sys, &spec, &stamps).unwrap();
        let du = sel.project_stacked(&dx);
        let expect = d_h * v1;
        assert!((du[1] - expect).norm() <= 1e-10 * expect.norm(), "{name}: {} vs {expect}", du[1]);
        assert!(du.iter().enumerate().all(|(k, v)| k == 1 || v.norm() <= 1e-12 * expect.norm()));
    }
}

#[test]
fn zero_stamps_give_zero_sensitivity() {
    let c = fixture("rectifier");
    let s = TfhaSession::new(&c, "v(out)", &list_parameters(&c), &TransientConfig::default()).unwrap();
    let dim = s.mna().dim;
    let zero = ParamStamps {
        d_a_c: SparseMatrix::zeros(dim, dim),
        d_a_g: SparseMatrix::zeros(dim, dim),
        switch: None,
    };
    let (spec, sys) = s.system(8).unwrap();
    assert!(hb_direct_sensitivity(&sys, &spec, &zero).unwrap().iter().all(|v| v.norm() == 0.0));
    let adj = hb_adjoint_solve(&sys, &qoi_rhs(s.selector(), &sys.ladder)).unwrap();
    assert!(hb_adjoint_sensitivity(&adj, &spec, &zero).unwrap().iter().all(|v| v.norm() == 0.0));
}

#[test]
fn adjoint_of_identity_jacobian_is_the_rhs() {
    // a 1 Ω resistor alone: J = I in every harmonic
    let c = parse_netlist("t\nI1 0 a DC 1\nR1 a 0 1\n.period 1m\n").unwrap();
    let mna = assemble_static(&c);
    let steady = run_to_steady_state(&c, &TransientConfig::default()).unwrap();
    let ladder = HarmonicLadder::new(1e-3, 3).unwrap();
    let sys = assemble_hb_jacobian(&mna, &steady, &ladder).unwrap();
    let sel = QoiSelector::parse(&mna, "v(a)").unwrap();
    let adj = hb_adjoint_solve(&sys, &qoi_rhs(&sel, &ladder)).unwrap();
    for j in 0..adj.n_functionals() {
        let col = adj.column(j);
        for (i, v) in col.iter().enumerate() {
            assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn rectifier_adjoint_residual() {
    let c = fixture("rectifier");
    let s = TfhaSession::new(&c, "v(out)", &list_parameters(&c), &TransientConfig::default()).unwrap();
    let (_, sys) = s.system(32).unwrap();
    let fact = sys.factor().unwrap();
    let adj = hb_adjoint_with(&fact, &sys, &qoi_rhs(s.selector(), &sys.ladder)).unwrap();
    let r = adj.relative_residual(&fact);
    assert!(r <= 1e-10, "{r:e}");
}

#[test]
fn single_harmonic_linear_circuit_converges_immediately() {
    let c = fixture("rc_filter");
    let out = tfha_run(&c, "v(out)", &list_parameters(&c), &TfhaConfig::default()).unwrap();
    assert_eq!(out.levels.len(), 2);
    for r in &out.results {
        assert!(r.est_rel_error <= 1e-9, "{}", r.est_rel_error);
        assert_eq!(r.k_used, 16);
    }
}

#[test]
fn unreachable_tolerance_reports_partial_outcome() {
    let c = fixture("rectifier");
    let cfg = TfhaConfig {
        err_tol: 1e-14,
        transient: TransientConfig {
            samples_per_period: 64,
            ..Default::default()
        },
        ..Default::default()
    };
    match tfha_run(&c, "v(out)", &list_parameters(&c), &cfg).unwrap_err() {
        Error::NotConverged { k, max_estimate, outcome } => {
            assert_eq!(k, 31);
            assert!(max_estimate > 1e-14);
            assert_eq!(outcome.results.len(), 2);
            assert_eq!(outcome.levels.last().unwrap().k, 31);
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn empty_parameter_list_is_rejected() {
    let c = fixture("rectifier");
    let e = tfha_run(&c, "v(out)", &[], &TfhaConfig::default()).unwrap_err();
    assert!(matches!(e, Error::InvalidConfig(_)));
}

#[test]
fn unknown_target_is_rejected() {
    let c = fixture("rectifier");
    let e = tfha_run(&c, "v(nowhere)", &list_parameters(&c), &TfhaConfig::default()).unwrap_err();
    assert!(matches!(e, Error::UnknownTarget(_)));
}

#[test]
fn estimate_bounds_true_error() {
    let c = fixture("rectifier");
    let s = TfhaSession::new(&c, "v(out)", &list_parameters(&c), &TransientConfig::default()).unwrap();
    let finest = s.evaluate(256).unwrap();
    let ks = [4, 8, 16, 32];
    let levels: Vec<_> = ks.iter().map(|&k| s.evaluate(k).unwrap()).collect();
    for w in 1..ks.len() {
        for p in 0..finest.len() {
            let est = spectral_relative_error(&levels[w - 1][p], &levels[w][p]).unwrap();
            let truth = spectral_relative_error(&levels[w][p], &finest[p]).unwrap();
            assert!(3.0 * est >= truth, "K = {}: est {est:e}, true {truth:e}", ks[w]);
        }
    }
}

#[test]
fn rectifier_tfha_matches_finite_differences() {
    let c = fixture("rectifier");
    let p = c.parameter("R1.value").unwrap();
    let cfg = TfhaConfig {
        transient: tight(),
        ..Default::default()
    };
    let out = tfha_run(&c, "v(out)", &[p.clone()], &cfg).unwrap();
    let est: Vec<f64> = out.levels.iter().skip(1).map(|l| l.estimates[0]).collect();
    assert!(est.windows(2).all(|w| w[1] < w[0]), "{est:?}");
    let fd = fd_oracle(&c, "v(out)", &p, 1e-4, &cfg.transient).unwrap();
    let err = rel_l2(&out.results[0].time_series, &fd);
    assert!(err <= 1e-2, "{err:e}");
}

#[test]
fn finite_difference_error_is_second_order() {
    let c = fixture("rectifier");
    let p = c.parameter("C1.value").unwrap();
    let cfg = tight();
    let steady = run_to_steady_state(&c, &cfg).unwrap();
    let sel = QoiSelector::parse(&assemble_static(&c), "v(out)").unwrap();
    let dsa = sel.project_samples(&transient_dsa(&c, &p, &steady, &cfg).unwrap());
    let errs: Vec<f64> = [1e-2, 1e-3]
        .iter()
        .map(|&h| rel_l2(&fd_oracle(&c, "v(out)", &p, h, &cfg).unwrap(), &dsa))
        .collect();
    let ratio = errs[0] / errs[1];
    assert!((ratio - 100.0).abs() < 20.0, "{errs:?}");
    let e4 = rel_l2(&fd_oracle(&c, "v(out)", &p, 1e-4, &cfg).unwrap(), &dsa);
    assert!(e4 < errs[1], "{e4:e} vs {errs:?}");
}

#[test]
fn finite_difference_step_is_bounded() {
    let c = fixture("divider");
    let p = c.parameter("R1.value").unwrap();
    for h in [1e-9, 0.1] {
        let e = fd_oracle(&c, "v(out)", &p, h, &TransientConfig::default()).unwrap_err();
        assert!(matches!(e, Error::InvalidConfig(_)));
    }
}

fn ladder_circuit(r: &[f64], cap: &[f64], diode: bool) -> Circuit {
    let mut text = String::from("rc ladder\nV1 n0 0 SIN(0.2 1 1k 0)\n");
    for (i, (r, c)) in r.iter().zip(cap).enumerate() {
        text += &format!("R{} n{i} n{} {r:e}\nC{} n{} 0 {c:e}\n", i + 1, i + 1, i + 1, i + 1);
    }
    if diode {
        text += &format!("D1 n{} d IS=1n N=2\nR9 d 0 1k\n", r.len());
    }
    parse_netlist(&text).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_equals_projected_direct(
        r in prop::collection::vec(100.0f64..1e4, 1..4),
        cap in prop::collection::vec(1e-8f64..1e-6, 3),
        diode in any::<bool>(),
    ) {
        let c = ladder_circuit(&r, &cap[..r.len()], diode);
        let target = format!("v(n{})", r.len());
        let cfg = TransientConfig { samples_per_period: 128, ..Default::default() };
        let s = TfhaSession::new(&c, &target, &list_parameters(&c), &cfg).unwrap();
        let a = s.evaluate(12).unwrap();
        let d = s.evaluate_direct(12).unwrap();
        for (x, y) in a.iter().zip(&d) {
            prop_assert!(rel_l2_c(x, y) <= 1e-10);
        }
    }
}
