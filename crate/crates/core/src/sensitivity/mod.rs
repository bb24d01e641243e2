//! Sensitivities `dU/dp` of a linear quantity of interest `U` with respect
//! to circuit parameters: harmonic-balance direct and adjoint methods, the
//! harmonic-refinement driver, and two time-domain oracles.

mod oracle;
mod tfha;

pub use oracle::{fd_oracle, transient_dsa};
pub use tfha::{tfha_run, TfhaConfig, TfhaLevel, TfhaOutcome, TfhaSession};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mna::{MnaStructure, ParamStamps};
use crate::netlist::{ParameterRef, GROUND};
use crate::spectral::{
    conversion_matrix, reconstruct_series, HarmonicLadder, HbFactorization, HbSystem, RealLayout,
    SpectralSolution,
};

type C = Complex64;

/// A node voltage, a node-to-node voltage, or a branch current, as a weight
/// vector over the MNA unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct QoiSelector {
    pub target: String,
    pub dim: usize,
    /// Nonzero `(index, weight)` pairs.
    pub weights: Vec<(usize, f64)>,
}

impl QoiSelector {
    /// Parses `v(node)`, `v(a,b)` or `i(device)`; `i(...)` needs a voltage
    /// source or inductor.
    pub fn parse(mna: &MnaStructure, target: &str) -> Result<Self> {
        let unknown = || Error::UnknownTarget(target.to_string());
        let t = target.trim();
        let (kind, inner) = t
            .split_once('(')
            .and_then(|(k, rest)| Some((k.trim(), rest.strip_suffix(')')?)))
            .ok_or_else(unknown)?;
        let args: Vec<&str> = inner.split(',').map(str::trim).collect();
        let mut weights = Vec::new();
        match (kind.to_ascii_lowercase().as_str(), args.as_slice()) {
            ("v", [a]) => {
                if *a != GROUND {
                    weights.push((mna.node_index(a).ok_or_else(unknown)?, 1.0));
                }
            }
            ("v", [a, b]) => {
                for (n, w) in [(a, 1.0), (b, -1.0)] {
                    if *n != GROUND {
                        weights.push((mna.node_index(n).ok_or_else(unknown)?, w));
                    }
                }
            }
            ("i", [d]) => weights.push((mna.branch_index(d).ok_or_else(unknown)?, 1.0)),
            _ => return Err(unknown()),
        }
        weights.retain(|w| w.1 != 0.0);
        Ok(Self {
            target: t.to_string(),
            dim: mna.dim,
            weights,
        })
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        for &(i, v) in &self.weights {
            w[i] += v;
        }
        w
    }

    pub fn project(&self, x: &[f64]) -> f64 {
        self.weights.iter().map(|&(i, w)| w * x[i]).sum()
    }

    /// `U` over time for sampled states `x_samples[i][n]`.
    pub fn project_samples(&self, x_samples: &[Vec<f64>]) -> Vec<f64> {
        let n = x_samples.first().map_or(0, Vec::len);
        (0..n)
            .map(|s| self.weights.iter().map(|&(i, w)| w * x_samples[i][s]).sum())
            .collect()
    }

    /// `U_k` of a stacked vector, for every harmonic.
    pub fn project_stacked(&self, x: &[C]) -> Vec<C> {
        (0..x.len() / self.dim)
            .map(|k| self.weights.iter().map(|&(i, w)| x[k * self.dim + i] * w).sum())
            .collect()
    }
}

/// `∂U/∂x̂`: the selector weights repeated in every harmonic block.
pub fn qoi_rhs(sel: &QoiSelector, ladder: &HarmonicLadder) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); sel.dim * ladder.len()];
    for k in 0..ladder.len() {
        for &(i, w) in &sel.weights {
            out[k * sel.dim + i] += w;
        }
    }
    out
}

/// `(dA/dp) x̂` in stacked ordering. Block `k` is
/// `(j k ω0 dA_C + dA_G) X_k`; a switch-resistance parameter adds the
/// conversion of its time-varying derivative, sampled on `samples` points.
pub fn param_rhs(stamps: &ParamStamps, spec: &SpectralSolution, samples: usize) -> Result<Vec<C>> {
    let dim = spec.dim();
    let ladder = &spec.ladder;
    let x = spec.stacked();
    let mut r = vec![C::new(0.0, 0.0); x.len()];
    for (k, &w) in ladder.frequencies.iter().enumerate() {
        let off = k * dim;
        for (i, j, v) in stamps.d_a_g.iter() {
            r[off + i] += x[off + j] * v;
        }
        for (i, j, v) in stamps.d_a_c.iter() {
            r[off + i] += x[off + j] * C::new(0.0, w * v);
        }
    }
    if let Some(sw) = &stamps.switch {
        let period = ladder.period();
        let m: Vec<f64> = (0..samples)
            .map(|n| sw.modulation(n as f64 * period / samples as f64))
            .collect();
        let conv = conversion_matrix(&m, ladder.k_max)?;
        for (i, j, v) in sw.pattern.iter() {
            let xj: Vec<C> = (0..ladder.len()).map(|k| x[k * dim + j]).collect();
            for (k, y) in conv.apply(&xj).into_iter().enumerate() {
                r[k * dim + i] += y * v;
            }
        }
    }
    Ok(r)
}

/// Rows of the stacked system touched by a parameter's stamps.
fn stamp_rows(stamps: &ParamStamps) -> Vec<usize> {
    let mut rows: Vec<usize> = stamps
        .d_a_g
        .iter()
        .chain(stamps.d_a_c.iter())
        .chain(stamps.switch.iter().flat_map(|s| s.pattern.iter()))
        .map(|(r, _, _)| r)
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// `dx̂/dp = -J⁻¹ (dA/dp) x̂` with a fresh factorization of `J`.
pub fn hb_direct_sensitivity(
    sys: &HbSystem,
    spec: &SpectralSolution,
    stamps: &ParamStamps,
) -> Result<Vec<C>> {
    hb_direct_with(&sys.factor()?, sys, spec, stamps)
}

/// `dx̂/dp` reusing an existing factorization.
pub fn hb_direct_with(
    fact: &HbFactorization,
    sys: &HbSystem,
    spec: &SpectralSolution,
    stamps: &ParamStamps,
) -> Result<Vec<C>> {
    check_ladders(&sys.ladder, &spec.ladder)?;
    let r = param_rhs(stamps, spec, sys.samples)?;
    let neg: Vec<C> = r.iter().map(|v| -v).collect();
    fact.solve(&neg)
}

fn check_ladders(a: &HarmonicLadder, b: &HarmonicLadder) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "harmonic ladders differ (K = {} and {})",
            a.k_max, b.k_max
        )));
    }
    Ok(())
}

/// Adjoint solution for the per-harmonic functionals `U_k = w^H X_k`.
///
/// `U_k` is complex while the Jacobian is only real-linear, so its real and
/// imaginary parts are separate real functionals: `Re U_0`, then
/// `Re U_k, Im U_k` for `k = 1..K`. Column `j` of `lambda` solves
/// `M^T λ_j = g_j` with `M` the real form of `J`, all from one
/// factorization.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub ladder: HarmonicLadder,
    pub layout: RealLayout,
    /// Samples per period of the Jacobian's time-varying coefficients.
    pub samples: usize,
    /// Column-major `layout.len() x (2K + 1)`.
    pub lambda: Vec<f64>,
    /// The functionals `g_j`, same shape as `lambda`.
    pub functionals: Vec<f64>,
}

impl AdjointSolution {
    pub fn n_functionals(&self) -> usize {
        2 * self.ladder.k_max + 1
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.layout.len();
        &self.lambda[j * n..(j + 1) * n]
    }

    /// `λ_j` in stacked complex form.
    pub fn column_complex(&self, j: usize) -> Vec<C> {
        self.layout.unembed(self.column(j))
    }

    /// Largest `‖M^T λ_j − g_j‖ / ‖g_j‖` over all functionals.
    pub fn relative_residual(&self, fact: &HbFactorization) -> f64 {
        let n = self.layout.len();
        (0..self.n_functionals())
            .map(|j| {
                let g = &self.functionals[j * n..(j + 1) * n];
                let mt = fact.matrix.transpose_mul_vec(self.column(j));
                let r: f64 = mt.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum();
                let gn: f64 = g.iter().map(|v| v * v).sum();
                (r / gn.max(1e-300)).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Real functionals of the harmonics of `rhs`: the coordinate form of
/// `Re(rhs_k^H X_k)` and `Im(rhs_k^H X_k)`.
fn functionals(layout: &RealLayout, rhs: &[C]) -> Vec<f64> {
    let n = layout.len();
    let dim = layout.dim;
    let count = 2 * layout.k_max + 1;
    let mut g = vec![0.0; n * count];
    for k in 0..=layout.k_max {
        for i in 0..dim {
            let w = rhs[k * dim + i];
            if w == C::new(0.0, 0.0) {
                continue;
            }
            let re = layout.re(k, i);
            if k == 0 {
                g[re] = w.re;
                continue;
            }
            let im = layout.im(k, i).unwrap();
            let (cr, ci) = (2 * k - 1, 2 * k);
            // Re(conj(w) X) = w.re Re X + w.im Im X
            g[cr * n + re] = w.re;
            g[cr * n + im] = w.im;
            // Im(conj(w) X) = w.re Im X - w.im Re X
            g[ci * n + im] = w.re;
            g[ci * n + re] = -w.im;
        }
    }
    g
}

/// Solves the adjoint systems for `rhs = ∂U/∂x̂` (see [`AdjointSolution`]).
pub fn hb_adjoint_solve(sys: &HbSystem, rhs: &[C]) -> Result<AdjointSolution> {
    hb_adjoint_with(&sys.factor()?, sys, rhs)
}

pub fn hb_adjoint_with(fact: &HbFactorization, sys: &HbSystem, rhs: &[C]) -> Result<AdjointSolution> {
    let layout = sys.layout();
    if rhs.len() != sys.dim * sys.ladder.len() {
        return Err(Error::ShapeMismatch(format!(
            "adjoint right-hand side has length {}, expected {}",
            rhs.len(),
            sys.dim * sys.ladder.len()
        )));
    }
    let g = functionals(&layout, rhs);
    let mut lambda = g.clone();
    fact.solve_real_many(&mut lambda, 2 * layout.k_max + 1, true)?;
    Ok(AdjointSolution {
        ladder: sys.ladder.clone(),
        layout,
        samples: sys.samples,
        lambda,
        functionals: g,
    })
}

/// `dU_k/dp = -λ_k^T (dA/dp) x̂` for every harmonic. Only the rows touched
/// by the parameter's stamps enter the inner products.
pub fn hb_adjoint_sensitivity(
    adj: &AdjointSolution,
    spec: &SpectralSolution,
    stamps: &ParamStamps,
) -> Result<Vec<C>> {
    check_ladders(&adj.ladder, &spec.ladder)?;
    let lay = &adj.layout;
    let r = param_rhs(stamps, spec, adj.samples)?;
    let rows = stamp_rows(stamps);
    let mut idx = Vec::with_capacity(rows.len() * (2 * lay.k_max + 1));
    for k in 0..=lay.k_max {
        for &i in &rows {
            let v = r[k * lay.dim + i];
            idx.push((lay.re(k, i), v.re));
            if let Some(j) = lay.im(k, i) {
                idx.push((j, v.im));
            }
        }
    }
    let dot = |j: usize| -> f64 {
        let col = adj.column(j);
        idx.iter().map(|&(p, v)| col[p] * v).sum()
    };
    Ok((0..=lay.k_max)
        .map(|k| {
            if k == 0 {
                C::new(-dot(0), 0.0)
            } else {
                C::new(-dot(2 * k - 1), -dot(2 * k))
            }
        })
        .collect())
}

/// One parameter's sensitivity spectrum and its time-domain reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub parameter: ParameterRef,
    /// `dU_k/dp` for `k = 0..=k_used`.
    pub spectrum: Vec<C>,
    /// `dU/dp` on the transient sample grid.
    pub time_series: Vec<f64>,
    pub k_used: usize,
    /// Refinement error estimate; infinite until two levels were compared.
    pub est_rel_error: f64,
}

impl SensitivityResult {
    pub fn new(
        parameter: ParameterRef,
        spectrum: Vec<C>,
        omega0: f64,
        t_grid: &[f64],
        est_rel_error: f64,
    ) -> Self {
        let time_series = reconstruct_series(&spectrum, omega0, t_grid);
        Self {
            parameter,
            k_used: spectrum.len() - 1,
            spectrum,
            time_series,
            est_rel_error,
        }
    }
}

/// `‖fine − pad(coarse)‖₂ / ‖fine‖₂`, with `coarse` zero-padded to the
/// length of `fine`.
pub fn spectral_relative_error(coarse: &[C], fine: &[C]) -> Result<f64> {
    if coarse.len() > fine.len() {
        return Err(Error::ShapeMismatch(format!(
            "coarse spectrum ({} harmonics) is longer than fine ({})",
            coarse.len(),
            fine.len()
        )));
    }
    let fine_norm = fine.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if fine_norm == 0.0 {
        return Err(Error::ZeroFineNorm);
    }
    let diff = fine
        .iter()
        .enumerate()
        .map(|(k, f)| (f - coarse.get(k).copied().unwrap_or_default()).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(diff / fine_norm)
}

pub fn relative_error(coarse: &SensitivityResult, fine: &SensitivityResult) -> Result<f64> {
    spectral_relative_error(&coarse.spectrum, &fine.spectrum)
}
