//! Fixed-step trapezoidal time integration with Newton iteration, run period
//! by period until the waveform repeats.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::linalg::{norm2, DenseLu};
use crate::mna::{assemble_static, MnaStructure};
use crate::netlist::Circuit;

#[derive(Debug, Clone, PartialEq)]
pub struct TransientConfig {
    /// Samples per period `N`; a power of two, at least 8.
    pub samples_per_period: usize,
    pub max_periods: usize,
    /// Relative whole-period distance accepted as periodic.
    pub steady_tol: f64,
    /// Residual 2-norm accepted by the Newton iteration.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self {
            samples_per_period: 1024,
            max_periods: 1000,
            steady_tol: 1e-6,
            newton_tol: 1e-9,
            newton_max_iter: 100,
        }
    }
}

impl TransientConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.samples_per_period;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "samples_per_period = {n} must be a power of two >= 8"
            )));
        }
        if !(self.steady_tol > 0.0 && self.newton_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be > 0".into()));
        }
        if self.max_periods < 2 || self.newton_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "max_periods must be >= 2 and newton_max_iter >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// The last simulated period.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientSolution {
    /// Fundamental period `T`.
    pub period: f64,
    /// `n T / N` for `n = 0..N`.
    pub t_grid: Vec<f64>,
    /// `x_samples[i][n]`: unknown `i` at `t_grid[n]`. Sample 0 is the state
    /// at the end of the final period, which equals its start in steady state.
    pub x_samples: Vec<Vec<f64>>,
    pub unknown_names: Vec<String>,
    pub periods_run: usize,
    pub period_mismatch: f64,
    /// Mismatch after every period from the second on.
    pub mismatch_history: Vec<f64>,
}

impl TransientSolution {
    pub fn dim(&self) -> usize {
        self.x_samples.len()
    }

    pub fn samples(&self) -> usize {
        self.t_grid.len()
    }

    /// State vector at sample `n`.
    pub fn state(&self, n: usize) -> Vec<f64> {
        self.x_samples.iter().map(|row| row[n]).collect()
    }

    /// CSV with header `t,<unknown names>` and one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for n in &self.unknown_names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (n, t) in self.t_grid.iter().enumerate() {
            write!(w, "{t:e}")?;
            for row in &self.x_samples {
                write!(w, ",{:e}", row[n])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    Trapezoidal,
    BackwardEuler,
}

/// One-step integrator over a fixed `dt`. The caller carries the charge
/// derivative `m = A_C ẋ` from step to step; for circuits without diodes or
/// switches the factorized iteration matrix is cached.
///
/// Keeping `m` instead of the previous static residual means every
/// algebraic row (a left null vector of `A_C`) is solved exactly at each
/// step, so Newton round-off cannot pile up in them over many periods.
pub struct Stepper<'a> {
    mna: &'a MnaStructure,
    dt: f64,
    newton_tol: f64,
    max_iter: usize,
    /// Row-major `A_G` (static part) plus `2/dt A_C` and `1/dt A_C`.
    base_trap: Vec<f64>,
    base_be: Vec<f64>,
    cached: [Option<DenseLu>; 2],
}

impl<'a> Stepper<'a> {
    pub fn new(mna: &'a MnaStructure, dt: f64, cfg: &TransientConfig) -> Self {
        let n = mna.dim;
        let mut g = vec![0.0; n * n];
        for (r, c, v) in mna.a_g.iter() {
            g[r * n + c] += v;
        }
        let mut base_trap = g.clone();
        let mut base_be = g;
        for (r, c, v) in mna.a_c.iter() {
            base_trap[r * n + c] += 2.0 / dt * v;
            base_be[r * n + c] += v / dt;
        }
        Self {
            mna,
            dt,
            newton_tol: cfg.newton_tol,
            max_iter: cfg.newton_max_iter,
            base_trap,
            base_be,
            cached: [None, None],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn iteration_matrix(&self, method: StepMethod, t1: f64, x1: &[f64]) -> Vec<f64> {
        let mut m = match method {
            StepMethod::Trapezoidal => self.base_trap.clone(),
            StepMethod::BackwardEuler => self.base_be.clone(),
        };
        let n = self.mna.dim;
        for s in self.mna.switches() {
            let g = s.conductance(t1);
            let mut add = |r: Option<usize>, c: Option<usize>, v: f64| {
                if let (Some(r), Some(c)) = (r, c) {
                    m[r * n + c] += v;
                }
            };
            add(s.a, s.a, g);
            add(s.b, s.b, g);
            add(s.a, s.b, -g);
            add(s.b, s.a, -g);
        }
        let mut scratch = vec![0.0; n];
        self.mna.add_nonlinear_dense(x1, &mut scratch, Some(&mut m));
        m
    }

    /// Discrete residual of one step from `(t0, x0)` to `(t1, x1)`; `m0` is
    /// `A_C ẋ(t0)` (ignored for backward Euler).
    pub fn residual(
        &self,
        method: StepMethod,
        x0: &[f64],
        m0: &[f64],
        t1: f64,
        x1: &[f64],
    ) -> Vec<f64> {
        let dx: Vec<f64> = x1.iter().zip(x0).map(|(a, b)| a - b).collect();
        let cdx = self.mna.a_c.mul_vec(&dx);
        let mut r = self.mna.static_residual(t1, x1);
        match method {
            StepMethod::Trapezoidal => {
                for i in 0..r.len() {
                    r[i] += 2.0 / self.dt * cdx[i] - m0[i];
                }
            }
            StepMethod::BackwardEuler => {
                for i in 0..r.len() {
                    r[i] += cdx[i] / self.dt;
                }
            }
        }
        r
    }

    /// `A_C ẋ(t1)` implied by the step from `x0` to `x1`.
    pub fn memory(&self, method: StepMethod, x0: &[f64], m0: &[f64], x1: &[f64]) -> Vec<f64> {
        let dx: Vec<f64> = x1.iter().zip(x0).map(|(a, b)| a - b).collect();
        let cdx = self.mna.a_c.mul_vec(&dx);
        match method {
            StepMethod::Trapezoidal => cdx.iter().zip(m0).map(|(c, m)| 2.0 / self.dt * c - m).collect(),
            StepMethod::BackwardEuler => cdx.iter().map(|c| c / self.dt).collect(),
        }
    }

    /// Newton iteration for one step, starting from `x0`.
    pub fn step(
        &mut self,
        method: StepMethod,
        x0: &[f64],
        m0: &[f64],
        t1: f64,
    ) -> Result<Vec<f64>> {
        let mut x = x0.to_vec();
        let lti = self.mna.is_linear_time_invariant();
        let slot = (method == StepMethod::BackwardEuler) as usize;
        let mut res = self.residual(method, x0, m0, t1, &x);
        let mut rnorm = norm2(&res);
        for _ in 0..self.max_iter {
            if !rnorm.is_finite() {
                break;
            }
            if rnorm <= self.newton_tol {
                return Ok(x);
            }
            let fresh;
            let lu = if lti && self.cached[slot].is_some() {
                self.cached[slot].as_ref().unwrap()
            } else {
                let m = self.iteration_matrix(method, t1, &x);
                let lu = DenseLu::factor(self.mna.dim, m)
                    .map_err(|_| Error::SingularIterationMatrix { time: t1 })?;
                if lti {
                    self.cached[slot] = Some(lu);
                    self.cached[slot].as_ref().unwrap()
                } else {
                    fresh = lu;
                    &fresh
                }
            };
            let delta = lu.solve(&res);
            for (xi, di) in x.iter_mut().zip(&delta) {
                *xi -= di;
            }
            res = self.residual(method, x0, m0, t1, &x);
            rnorm = norm2(&res);
        }
        if rnorm <= self.newton_tol {
            return Ok(x);
        }
        Err(Error::NewtonDivergence {
            time: t1,
            residual: rnorm,
            iterations: self.max_iter,
        })
    }
}

/// Advances `x_prev` at `t_next - dt` to `t_next` with one trapezoidal step,
/// taking `A_C ẋ` at `x_prev` from the circuit equations. Rows without
/// storage elements carry no derivative, so `x_prev` need not satisfy them.
pub fn newton_step(
    mna: &MnaStructure,
    x_prev: &[f64],
    t_next: f64,
    dt: f64,
    cfg: &TransientConfig,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt = {dt:e} must be > 0")));
    }
    let mut m0: Vec<f64> = mna.static_residual(t_next - dt, x_prev).iter().map(|v| -v).collect();
    let mut storage = vec![false; mna.dim];
    for (r, _, v) in mna.a_c.iter() {
        storage[r] |= v != 0.0;
    }
    for (m, s) in m0.iter_mut().zip(storage) {
        if !s {
            *m = 0.0;
        }
    }
    Stepper::new(mna, dt, cfg).step(StepMethod::Trapezoidal, x_prev, &m0, t_next)
}

/// `‖curr − prev‖_F / max(‖curr‖_F, 1e-30)`.
pub fn detect_periodicity(prev: &[Vec<f64>], curr: &[Vec<f64>]) -> Result<f64> {
    let shape = |m: &[Vec<f64>]| (m.len(), m.first().map_or(0, Vec::len));
    if shape(prev) != shape(curr) || prev.iter().zip(curr).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::ShapeMismatch(format!(
            "periods of shape {:?} and {:?}",
            shape(prev),
            shape(curr)
        )));
    }
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (a, b) in prev.iter().zip(curr) {
        for (p, c) in a.iter().zip(b) {
            diff += (c - p) * (c - p);
            norm += c * c;
        }
    }
    Ok(diff.sqrt() / norm.sqrt().max(1e-30))
}

/// Integrates from `x(0) = 0` until two consecutive periods agree to
/// `steady_tol`. The very first step uses backward Euler so that the
/// inconsistent zero initial state does not excite trapezoidal ringing.
pub fn run_to_steady_state(c: &Circuit, cfg: &TransientConfig) -> Result<TransientSolution> {
    cfg.validate()?;
    let mna = assemble_static(c);
    run_with_structure(&mna, c.fundamental_period(), cfg)
}

pub fn run_with_structure(
    mna: &MnaStructure,
    period: f64,
    cfg: &TransientConfig,
) -> Result<TransientSolution> {
    cfg.validate()?;
    let n = cfg.samples_per_period;
    let dim = mna.dim;
    let dt = period / n as f64;
    let mut stepper = Stepper::new(mna, dt, cfg);

    let mut x = vec![0.0; dim];
    let mut m = vec![0.0; dim];
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut history = Vec::new();
    let mut step_index: u64 = 0;

    for p in 1..=cfg.max_periods {
        let mut curr = vec![vec![0.0; n]; dim];
        for k in 1..=n {
            step_index += 1;
            let t1 = step_index as f64 * dt;
            let method = if step_index == 1 {
                StepMethod::BackwardEuler
            } else {
                StepMethod::Trapezoidal
            };
            let x1 = stepper.step(method, &x, &m, t1)?;
            m = stepper.memory(method, &x, &m, &x1);
            x = x1;
            // the end of the period is stored as sample 0 of the same period
            for i in 0..dim {
                curr[i][k % n] = x[i];
            }
        }
        if let Some(prev) = &prev {
            let m = detect_periodicity(prev, &curr)?;
            history.push(m);
            if m <= cfg.steady_tol {
                return Ok(TransientSolution {
                    period,
                    t_grid: (0..n).map(|k| k as f64 * dt).collect(),
                    x_samples: curr,
                    unknown_names: mna.unknown_names().to_vec(),
                    periods_run: p,
                    period_mismatch: m,
                    mismatch_history: history,
                });
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
