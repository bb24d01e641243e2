use super::QoiSelector;
use crate::error::{Error, Result};
use crate::linalg::DenseLu;
use crate::mna::{assemble_static, param_stamps};
use crate::netlist::{Circuit, ParameterRef};
use crate::transient::{detect_periodicity, run_to_steady_state, TransientConfig, TransientSolution};

/// Time-domain direct sensitivity `dx/dp` over one period.
///
/// Differentiates the trapezoidal step equations themselves, with the
/// coefficients taken from the stored steady-state samples. With the
/// charge-derivative memory `m` and its sensitivity `σ`:
///
/// `(2/dt A_C + J_1) s_1 = 2/dt A_C s_0 + σ_0 − 2/dt dA_C (x_1 − x_0) − dA_G(t_1) x_1`,
/// `σ_1 = 2/dt A_C (s_1 − s_0) + 2/dt dA_C (x_1 − x_0) − σ_0`,
///
/// where `J = A_G(t) − g_nl(x)`. Starting from `s = 0` it runs period after
/// period until consecutive periods agree to `steady_tol`.
/// Returns `s[i][n]` on the grid of `steady`.
pub fn transient_dsa(
    c: &Circuit,
    p: &ParameterRef,
    steady: &TransientSolution,
    cfg: &TransientConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let mna = assemble_static(c);
    let stamps = param_stamps(&mna, c, p)?;
    let dim = mna.dim;
    let n = steady.samples();
    if steady.dim() != dim {
        return Err(Error::ShapeMismatch(format!(
            "steady state has {} unknowns, circuit has {dim}",
            steady.dim()
        )));
    }
    let dt = steady.period / n as f64;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let states: Vec<Vec<f64>> = (0..n).map(|k| steady.state(k)).collect();

    // Static Jacobian at every sample, row-major.
    let jac: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut m = vec![0.0; dim * dim];
            mna.add_a_g_dense(times[k], 1.0, &mut m);
            let mut scratch = vec![0.0; dim];
            mna.add_nonlinear_dense(&states[k], &mut scratch, Some(&mut m));
            m
        })
        .collect();
    let mut cdt = vec![0.0; dim * dim];
    for (r, col, v) in mna.a_c.iter() {
        cdt[r * dim + col] += 2.0 / dt * v;
    }

    // Step k goes from sample k to sample k + 1 (mod n).
    let mut lus = Vec::with_capacity(n);
    let mut forcing = Vec::with_capacity(n);
    for k in 0..n {
        let k1 = (k + 1) % n;
        let t1 = if k1 == 0 { steady.period } else { times[k1] };
        let lhs: Vec<f64> = cdt.iter().zip(&jac[k1]).map(|(a, b)| a + b).collect();
        lus.push(DenseLu::factor(dim, lhs).map_err(|_| Error::SingularIterationMatrix { time: t1 })?);
        let (x0, x1) = (&states[k], &states[k1]);
        let dx: Vec<f64> = x1.iter().zip(x0).map(|(a, b)| a - b).collect();
        // (charge term, conductance term)
        let mut q = (vec![0.0; dim], vec![0.0; dim]);
        for (r, col, v) in stamps.d_a_c.iter() {
            q.0[r] += 2.0 / dt * v * dx[col];
        }
        for (r, col, v) in stamps.d_a_g_at(t1).iter() {
            q.1[r] += v * x1[col];
        }
        forcing.push(q);
    }

    let mut s = vec![0.0; dim];
    let mut sigma = vec![0.0; dim];
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut history = Vec::new();
    for _ in 0..cfg.max_periods {
        let mut curr = vec![vec![0.0; n]; dim];
        for k in 0..n {
            let (dq, dg) = &forcing[k];
            let cs0: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| cdt[i * dim + j] * s[j]).sum()).collect();
            let rhs: Vec<f64> = (0..dim).map(|i| cs0[i] + sigma[i] - dq[i] - dg[i]).collect();
            let s1 = lus[k].solve(&rhs);
            for i in 0..dim {
                let cs1: f64 = (0..dim).map(|j| cdt[i * dim + j] * s1[j]).sum();
                sigma[i] = cs1 - cs0[i] + dq[i] - sigma[i];
            }
            s = s1;
            let k1 = (k + 1) % n;
            for i in 0..dim {
                curr[i][k1] = s[i];
            }
        }
        if let Some(prev) = &prev {
            let m = detect_periodicity(prev, &curr)?;
            history.push(m);
            if m <= cfg.steady_tol {
                return Ok(curr);
            }
        }
        prev = Some(curr);
    }
    Err(Error::NoSteadyState {
        periods: cfg.max_periods,
        last_mismatch: history.last().copied().unwrap_or(f64::INFINITY),
        mismatch_history: history,
    })
}

/// Central finite difference of the steady-state QoI waveform:
/// `(U(p (1 + h)) − U(p (1 − h))) / (2 h p)` on the common sample grid.
pub fn fd_oracle(
    c: &Circuit,
    target: &str,
    p: &ParameterRef,
    h_rel: f64,
    cfg: &TransientConfig,
) -> Result<Vec<f64>> {
    if !(1e-8..=1e-2).contains(&h_rel) {
        return Err(Error::InvalidConfig(format!(
            "h_rel = {h_rel:e} outside [1e-8, 1e-2]"
        )));
    }
    let sel = QoiSelector::parse(&assemble_static(c), target)?;
    let p0 = p.nominal_value;
    let up = c.with_parameter(p, p0 * (1.0 + h_rel))?;
    let down = c.with_parameter(p, p0 * (1.0 - h_rel))?;
    let (a, b) = rayon::join(
        || run_to_steady_state(&up, cfg),
        || run_to_steady_state(&down, cfg),
    );
    let (ua, ub) = (sel.project_samples(&a?.x_samples), sel.project_samples(&b?.x_samples));
    Ok(ua
        .iter()
        .zip(&ub)
        .map(|(x, y)| (x - y) / (2.0 * h_rel * p0))
        .collect())
}
