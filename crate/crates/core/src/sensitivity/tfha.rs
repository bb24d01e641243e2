use num_complex::Complex64;
use rayon::prelude::*;

use super::{
    hb_adjoint_sensitivity, hb_adjoint_with, hb_direct_with, qoi_rhs, spectral_relative_error,
    QoiSelector, SensitivityResult,
};
use crate::error::{Error, Result};
use crate::mna::{assemble_static, param_stamps, MnaStructure, ParamStamps};
use crate::netlist::{validate_circuit, Circuit, ParameterRef};
use crate::spectral::{
    assemble_hb_jacobian, fft_period, max_harmonic, HarmonicLadder, HbSystem, SpectralSolution,
};
use crate::transient::{run_with_structure, TransientConfig, TransientSolution};

type C = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct TfhaConfig {
    pub k_start: usize,
    pub k_growth_factor: usize,
    pub err_tol: f64,
    pub transient: TransientConfig,
}

impl Default for TfhaConfig {
    fn default() -> Self {
        Self {
            k_start: 8,
            k_growth_factor: 2,
            err_tol: 1e-3,
            transient: TransientConfig::default(),
        }
    }
}

impl TfhaConfig {
    pub fn validate(&self) -> Result<()> {
        self.transient.validate()?;
        if self.k_start < 1 || self.k_growth_factor < 2 || !(self.err_tol > 0.0) {
            return Err(Error::InvalidConfig(
                "k_start >= 1, k_growth_factor >= 2 and err_tol > 0 are required".into(),
            ));
        }
        Ok(())
    }
}

/// Error estimates of one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct TfhaLevel {
    pub k: usize,
    /// Per-parameter estimate against the previous level (infinite on the
    /// first level).
    pub estimates: Vec<f64>,
}

impl TfhaLevel {
    pub fn max_estimate(&self) -> f64 {
        self.estimates.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfhaOutcome {
    pub results: Vec<SensitivityResult>,
    pub levels: Vec<TfhaLevel>,
    pub steady: TransientSolution,
}

/// A steady state plus the selector and parameter stamps, ready to produce
/// sensitivity spectra at any harmonic count.
pub struct TfhaSession {
    mna: MnaStructure,
    steady: TransientSolution,
    selector: QoiSelector,
    params: Vec<(ParameterRef, ParamStamps)>,
}

impl TfhaSession {
    /// Validates the circuit and runs the transient analysis.
    pub fn new(
        c: &Circuit,
        target: &str,
        params: &[ParameterRef],
        cfg: &TransientConfig,
    ) -> Result<Self> {
        let diagnostics = validate_circuit(c);
        if !diagnostics.is_empty() {
            return Err(Error::InvalidCircuit(diagnostics));
        }
        let mna = assemble_static(c);
        let steady = run_with_structure(&mna, c.fundamental_period(), cfg)?;
        Self::from_steady(c, mna, steady, target, params)
    }

    pub fn from_steady(
        c: &Circuit,
        mna: MnaStructure,
        steady: TransientSolution,
        target: &str,
        params: &[ParameterRef],
    ) -> Result<Self> {
        let selector = QoiSelector::parse(&mna, target)?;
        let params = params
            .iter()
            .map(|p| Ok((p.clone(), param_stamps(&mna, c, p)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mna,
            steady,
            selector,
            params,
        })
    }

    pub fn mna(&self) -> &MnaStructure {
        &self.mna
    }

    pub fn steady(&self) -> &TransientSolution {
        &self.steady
    }

    pub fn selector(&self) -> &QoiSelector {
        &self.selector
    }

    pub fn parameters(&self) -> impl Iterator<Item = &ParameterRef> {
        self.params.iter().map(|(p, _)| p)
    }

    pub fn max_harmonic(&self) -> usize {
        max_harmonic(self.steady.samples())
    }

    /// Steady-state spectrum and Jacobian at `k` harmonics.
    pub fn system(&self, k: usize) -> Result<(SpectralSolution, HbSystem)> {
        let spec = fft_period(&self.steady, k)?;
        let ladder = HarmonicLadder::new(self.steady.period, k)?;
        let sys = assemble_hb_jacobian(&self.mna, &self.steady, &ladder)?;
        Ok((spec, sys))
    }

    /// Adjoint path: one factorization, one multi-RHS adjoint solve, then
    /// one cheap evaluation per parameter.
    pub fn evaluate(&self, k: usize) -> Result<Vec<Vec<C>>> {
        let (spec, sys) = self.system(k)?;
        let fact = sys.factor()?;
        let adj = hb_adjoint_with(&fact, &sys, &qoi_rhs(&self.selector, &sys.ladder))?;
        self.params
            .par_iter()
            .map(|(_, s)| hb_adjoint_sensitivity(&adj, &spec, s))
            .collect()
    }

    /// Direct path with one shared factorization, projected onto the QoI.
    pub fn evaluate_direct(&self, k: usize) -> Result<Vec<Vec<C>>> {
        let (spec, sys) = self.system(k)?;
        let fact = sys.factor()?;
        self.params
            .par_iter()
            .map(|(_, s)| {
                let dx = hb_direct_with(&fact, &sys, &spec, s)?;
                Ok(self.selector.project_stacked(&dx))
            })
            .collect()
    }

    fn results(&self, spectra: Vec<Vec<C>>, estimates: &[f64]) -> Vec<SensitivityResult> {
        let omega0 = 2.0 * std::f64::consts::PI / self.steady.period;
        spectra
            .into_iter()
            .zip(&self.params)
            .zip(estimates)
            .map(|((s, (p, _)), &e)| SensitivityResult::new(p.clone(), s, omega0, &self.steady.t_grid, e))
            .collect()
    }

    /// Harmonic refinement from `k_start`, growing by `k_growth_factor` until
    /// every parameter's estimate is within `err_tol` or `K` hits `N/2 - 1`.
    pub fn refine(self, cfg: &TfhaConfig) -> Result<TfhaOutcome> {
        cfg.validate()?;
        let k_cap = self.max_harmonic();
        let mut k = cfg.k_start.min(k_cap);
        let mut levels: Vec<TfhaLevel> = Vec::new();
        let mut prev: Option<Vec<Vec<C>>> = None;
        loop {
            let spectra = self.evaluate(k)?;
            let estimates: Vec<f64> = match &prev {
                None => vec![f64::INFINITY; spectra.len()],
                Some(p) => p
                    .iter()
                    .zip(&spectra)
                    .map(|(c, f)| match spectral_relative_error(c, f) {
                        Ok(e) => Ok(e),
                        Err(Error::ZeroFineNorm) => Ok(0.0),
                        Err(e) => Err(e),
                    })
                    .collect::<Result<_>>()?,
            };
            let level = TfhaLevel {
                k,
                estimates: estimates.clone(),
            };
            let worst = level.max_estimate();
            levels.push(level);
            if prev.is_some() && worst <= cfg.err_tol {
                let results = self.results(spectra, &estimates);
                return Ok(TfhaOutcome {
                    results,
                    levels,
                    steady: self.steady,
                });
            }
            if k >= k_cap {
                let results = self.results(spectra, &estimates);
                return Err(Error::NotConverged {
                    k,
                    max_estimate: worst,
                    outcome: Box::new(TfhaOutcome {
                        results,
                        levels,
                        steady: self.steady,
                    }),
                });
            }
            prev = Some(spectra);
            k = (k * cfg.k_growth_factor).min(k_cap);
        }
    }
}

/// Runs the transient once, then refines the harmonic count until the
/// sensitivity spectra of all parameters have converged.
pub fn tfha_run(
    c: &Circuit,
    target: &str,
    params: &[ParameterRef],
    cfg: &TfhaConfig,
) -> Result<TfhaOutcome> {
    cfg.validate()?;
    if params.is_empty() {
        return Err(Error::InvalidConfig("no parameters selected".into()));
    }
    TfhaSession::new(c, target, params, &cfg.transient)?.refine(cfg)
}
