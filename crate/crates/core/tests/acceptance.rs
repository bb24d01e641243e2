//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fixture, probe, rel_l2, rel_l2_c, FIXTURES};
use tfha_core::mna::{assemble_static, param_stamps};
use tfha_core::netlist::{list_parameters, Circuit};
use tfha_core::sensitivity::{
    fd_oracle, hb_adjoint_sensitivity, hb_adjoint_with, hb_direct_sensitivity, qoi_rhs,
    spectral_relative_error, tfha_run, transient_dsa, TfhaConfig, TfhaSession,
};
use tfha_core::spectral::{conversion_matrix, FftPair};
use tfha_core::transient::{run_to_steady_state, TransientConfig};

type C = Complex64;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn session(c: &Circuit, target: &str, cfg: &TransientConfig) -> TfhaSession {
    TfhaSession::new(c, target, &list_parameters(c), cfg).expect("session")
}

fn tight(n: usize) -> TransientConfig {
    TransientConfig {
        samples_per_period: n,
        steady_tol: 1e-11,
        newton_tol: 1e-12,
        max_periods: 5000,
        ..Default::default()
    }
}

fn adjoint_direct_identity() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for name in FIXTURES {
        let c = fixture(name);
        let s = session(&c, probe(name), &TransientConfig::default());
        let adj = s.evaluate(16).unwrap();
        let dir = s.evaluate_direct(16).unwrap();
        for (a, d) in adj.iter().zip(&dir) {
            worst = worst.max(rel_l2_c(a, d));
            count += 1;
        }
    }
    let el = start.elapsed();
    verdict(
        worst <= 1e-10 && el < Duration::from_secs(10),
        format!("{count} parameters on {} circuits, worst rel {worst:.2e}, {el:.2?}", FIXTURES.len()),
    )
}

fn analytic_linear() -> Verdict {
    // divider: dV_out/dR1 = -Vs R2 / (R1 + R2)^2
    let c = fixture("divider");
    let p = c.parameter("R1.value").unwrap();
    let out = tfha_run(&c, "v(out)", &[p], &TfhaConfig::default()).unwrap();
    let expect = -1.0 * 1e3 / (2e3f64).powi(2);
    let got = out.results[0].spectrum[0].re;
    let div_err = ((got - expect) / expect).abs();

    // RC low-pass: U_1 = H(jω) V_1 with H = 1/(1 + jωRC), dH/dR = -jωC/(1 + jωRC)^2
    let c = fixture("rc_filter");
    let params = [c.parameter("R1.value").unwrap(), c.parameter("C1.value").unwrap()];
    let cfg = TfhaConfig {
        transient: tight(32768),
        ..Default::default()
    };
    let out = tfha_run(&c, "v(out)", &params, &cfg).unwrap();
    let (r, cap, w) = (1e3, 100e-9, 2.0 * PI * 1e3);
    let v1 = C::new(0.0, -0.5);
    let den = (C::new(1.0, w * r * cap)).powi(2);
    let d_r = C::new(0.0, -w * cap) / den * v1;
    let d_c = C::new(0.0, -w * r) / den * v1;
    let rc_err = [(0, d_r), (1, d_c)]
        .iter()
        .map(|&(i, e)| (out.results[i].spectrum[1] - e).norm() / e.norm())
        .fold(0.0, f64::max);
    verdict(
        div_err <= 1e-8 && rc_err <= 1e-8,
        format!("divider rel {div_err:.2e}, RC at ω0 rel {rc_err:.2e}"),
    )
}

fn oracle_triangle() -> Verdict {
    let start = Instant::now();
    let c = fixture("rectifier");
    let params = list_parameters(&c);
    let cfg = TfhaConfig {
        transient: tight(1024),
        ..Default::default()
    };
    let out = tfha_run(&c, "v(out)", &params, &cfg).unwrap();
    let k_used = out.levels.last().unwrap().k;
    let sel = tfha_core::sensitivity::QoiSelector::parse(&assemble_static(&c), "v(out)").unwrap();
    let mut worst: f64 = 0.0;
    for (p, res) in params.iter().zip(&out.results) {
        let dsa = sel.project_samples(&transient_dsa(&c, p, &out.steady, &cfg.transient).unwrap());
        let fd = fd_oracle(&c, "v(out)", p, 1e-4, &cfg.transient).unwrap();
        let tf = &res.time_series;
        worst = worst.max(rel_l2(tf, &dsa)).max(rel_l2(tf, &fd)).max(rel_l2(&dsa, &fd));
    }
    let est = out.results.iter().map(|r| r.est_rel_error).fold(0.0, f64::max);
    let el = start.elapsed();
    verdict(
        worst <= 1e-2 && k_used <= 32 && est <= 1e-3 && el < Duration::from_secs(60),
        format!("pairwise worst rel L2 {worst:.2e}, K = {k_used}, est {est:.2e}, {el:.2?}"),
    )
}

/// Estimates of `spectral_relative_error` between consecutive doublings.
fn estimates(s: &TfhaSession, ks: &[usize], param: usize) -> Vec<f64> {
    let spectra: Vec<Vec<C>> = ks.iter().map(|&k| s.evaluate(k).unwrap().swap_remove(param)).collect();
    spectra
        .windows(2)
        .map(|w| spectral_relative_error(&w[0], &w[1]).unwrap())
        .collect()
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn estimator_behavior() -> Verdict {
    let rect = fixture("rectifier");
    let s = session(&rect, "v(out)", &TransientConfig::default());
    let ks = [4, 8, 16, 32, 64];
    let r: Vec<Vec<f64>> = (0..2).map(|i| estimates(&s, &ks, i)).collect();

    let boost = fixture("boost");
    let s = session(&boost, "v(drain)", &TransientConfig::default());
    let r1 = s.parameters().position(|p| p.to_string() == "R1.value").unwrap();
    let b = estimates(&s, &[8, 16, 32, 64, 128], r1);

    let x: Vec<C> = (0..9).map(|k| C::new(1.0 / (k + 1) as f64, k as f64)).collect();
    let same = spectral_relative_error(&x, &x).unwrap();
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(" > ");
    verdict(
        r.iter().all(|v| decreasing(v)) && decreasing(&b) && same == 0.0,
        format!(
            "rectifier R1 {}, C1 {}; boost R1 {}; identical {same}",
            fmt(&r[0]),
            fmt(&r[1]),
            fmt(&b)
        ),
    )
}

/// First local maximum past the dominant peak that stands at least 1.5x
/// above the lowest harmonic seen since the peak.
fn side_lobe(mag: &[f64]) -> Option<(usize, f64)> {
    let peak = (1..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b]))?;
    let mut floor = mag[peak];
    for k in peak + 1..mag.len() - 1 {
        floor = floor.min(mag[k]);
        if mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] && mag[k] >= 1.5 * floor {
            return Some((k, mag[k] / floor));
        }
    }
    None
}

fn boost_side_lobe() -> Verdict {
    let c = fixture("boost");
    let p = c.parameter("R1.value").unwrap();
    let s = TfhaSession::new(&c, "v(drain)", &[p], &TransientConfig::default()).unwrap();
    let spec = s.evaluate(64).unwrap().swap_remove(0);
    let mag: Vec<f64> = spec.iter().map(|v| v.norm()).collect();
    let f0 = 1.0 / c.fundamental_period();
    match side_lobe(&mag) {
        Some((k, ratio)) => verdict(
            true,
            format!("local maximum at harmonic {k} ({:.0} kHz), {ratio:.2}x above the rolloff floor", k as f64 * f0 / 1e3),
        ),
        None => verdict(false, "no local maximum above the rolloff"),
    }
}

fn min_time(reps: usize, mut f: impl FnMut()) -> Duration {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

fn scaling() -> Verdict {
    let c = fixture("boost");
    let s = session(&c, "v(drain)", &TransientConfig::default());
    let k = 64;
    let (spec, sys) = s.system(k).unwrap();
    let mna = s.mna();
    let stamps: Vec<_> = s.parameters().map(|p| param_stamps(mna, &c, p).unwrap()).collect();
    let rhs = qoi_rhs(s.selector(), &sys.ladder);
    let p = stamps.len();
    let adjoint = min_time(3, || {
        let fact = sys.factor().unwrap();
        let adj = hb_adjoint_with(&fact, &sys, &rhs).unwrap();
        for st in &stamps {
            std::hint::black_box(hb_adjoint_sensitivity(&adj, &spec, st).unwrap());
        }
    });
    let direct = min_time(3, || {
        for st in &stamps {
            std::hint::black_box(hb_direct_sensitivity(&sys, &spec, st).unwrap());
        }
    });
    let ratio = adjoint.as_secs_f64() / direct.as_secs_f64();
    verdict(
        p >= 10 && ratio <= 0.5,
        format!("P = {p}, K = {k}: adjoint {adjoint:.2?}, direct {direct:.2?}, ratio {ratio:.3}"),
    )
}

fn conversion_oracle() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 64;
    let k = n / 2 - 1;
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut x = vec![C::new(rng.gen_range(-1.0..1.0), 0.0)];
    x.extend((1..=k).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
    let fft = FftPair::new(n);
    let xt = fft.samples(&x);
    let prod: Vec<f64> = g.iter().zip(&xt).map(|(a, b)| a * b).collect();
    let expect = fft.phasors(&prod, k);
    let got = conversion_matrix(&g, k).unwrap().apply(&x);
    rel_l2_c(&got, &expect)
}

fn trapezoidal_order() -> Vec<f64> {
    let c = fixture("rc_filter");
    let (r, cap, w) = (1e3, 100e-9, 2.0 * PI * 1e3);
    let h = C::new(1.0, 0.0) / C::new(1.0, w * r * cap);
    [64, 128, 256, 512]
        .iter()
        .map(|&n| {
            let sol = run_to_steady_state(&c, &tight(n)).unwrap();
            let out = &sol.x_samples[1];
            sol.t_grid
                .iter()
                .zip(out)
                .map(|(t, v)| (v - (h * C::from_polar(1.0, w * t)).im).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

fn stamp_fd() -> f64 {
    let rel_h = 1e-6;
    let mut worst: f64 = 0.0;
    for name in FIXTURES {
        let c = fixture(name);
        let mna = assemble_static(&c);
        let mut params = list_parameters(&c);
        params.extend(c.parameter("S1.roff").ok());
        let period = c.fundamental_period();
        let times: Vec<f64> = (0..16).map(|i| (i as f64 + 0.37) * period / 16.0).collect();
        for p in &params {
            let an = param_stamps(&mna, &c, p).unwrap();
            let v = p.nominal_value;
            let up = assemble_static(&c.with_parameter(p, v * (1.0 + rel_h)).unwrap());
            let dn = assemble_static(&c.with_parameter(p, v * (1.0 - rel_h)).unwrap());
            let step = 2.0 * rel_h * v;
            // each pair carries the largest entry of the assembled matrix, which
            // bounds the round-off of the difference quotient
            let mut pairs = vec![(
                an.d_a_c.to_dense(),
                fd(&up.a_c.to_dense(), &dn.a_c.to_dense(), step),
                up.a_c.max_abs(),
            )];
            for &t in &times {
                let g = up.a_g_at(t);
                pairs.push((
                    an.d_a_g_at(t).to_dense(),
                    fd(&g.to_dense(), &dn.a_g_at(t).to_dense(), step),
                    g.max_abs(),
                ));
            }
            for (a, f, size) in pairs {
                let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                let noise = 4.0 * f64::EPSILON * size / step;
                let diff = a
                    .iter()
                    .flatten()
                    .zip(f.iter().flatten())
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                if scale > 0.0 {
                    worst = worst.max((diff - noise).max(0.0) / scale);
                } else {
                    worst = worst.max(if diff > noise { f64::INFINITY } else { 0.0 });
                }
            }
        }
    }
    worst
}

fn fd(up: &[Vec<f64>], dn: &[Vec<f64>], step: f64) -> Vec<Vec<f64>> {
    up.iter()
        .zip(dn)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) / step).collect())
        .collect()
}

fn hygiene() -> Verdict {
    let conv = conversion_oracle();
    let errs = trapezoidal_order();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let stamps = stamp_fd();
    let order_ok = ratios.iter().all(|r| (r - 4.0).abs() <= 0.5);
    verdict(
        conv <= 1e-10 && order_ok && stamps <= 1e-6,
        format!(
            "conversion rel {conv:.2e}; trapezoidal ratios {}; stamp FD worst rel {stamps:.2e}",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("adjoint-direct identity", adjoint_direct_identity),
        ("analytic linear sensitivities", analytic_linear),
        ("rectifier oracle triangle", oracle_triangle),
        ("error estimator behavior", estimator_behavior),
        ("boost spectrum side lobe", boost_side_lobe),
        ("adjoint scaling with P = 10", scaling),
        ("numerical hygiene", hygiene),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        failed += usize::from(!v.pass);
        println!(
            "{} criterion {}: {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
