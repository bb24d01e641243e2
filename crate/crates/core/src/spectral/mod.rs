//! One-sided harmonic representation of periodic waveforms and the
//! harmonic-balance system built on it.
//!
//! Convention: `x(t) = X_0 + Σ_{k=1..K} 2 Re(X_k e^{j k ω0 t})`, so `X_k` is
//! the two-sided Fourier coefficient of harmonic `k`. Stacked vectors put
//! harmonic `k` of unknown `i` at index `k * dim + i`.

mod hb;

pub use hb::{
    assemble_hb_jacobian, assemble_hb_matrix, conversion_matrix, hb_forward_solve,
    jacobian_from_samples, ConversionMatrix, HbFactorization, HbSystem, RealLayout,
};

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::transient::TransientSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicLadder {
    pub omega0: f64,
    pub k_max: usize,
    /// `k ω0` for `k = 0..=K`, in rad/s.
    pub frequencies: Vec<f64>,
}

impl HarmonicLadder {
    pub fn new(period: f64, k_max: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::InvalidConfig("at least one harmonic is required".into()));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidConfig(format!("period {period:e} must be > 0")));
        }
        let omega0 = 2.0 * PI / period;
        Ok(Self {
            omega0,
            k_max,
            frequencies: (0..=k_max).map(|k| k as f64 * omega0).collect(),
        })
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega0
    }

    pub fn len(&self) -> usize {
        self.k_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frequency of harmonic `k` in Hz.
    pub fn freq_hz(&self, k: usize) -> f64 {
        self.frequencies[k] / (2.0 * PI)
    }
}

/// Largest harmonic resolvable from `n` samples per period.
pub fn max_harmonic(n: usize) -> usize {
    (n / 2).saturating_sub(1)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k > max_harmonic(n) {
        return Err(Error::HarmonicOverflow {
            k,
            samples: n,
            limit: max_harmonic(n),
        });
    }
    Ok(())
}

/// Phasors of a periodic state.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    pub ladder: HarmonicLadder,
    /// `phasors[i][k]` = `X_k` of unknown `i`.
    pub phasors: Vec<Vec<Complex64>>,
}

impl SpectralSolution {
    pub fn dim(&self) -> usize {
        self.phasors.len()
    }

    /// Stacked vector, index `k * dim + i`.
    pub fn stacked(&self) -> Vec<Complex64> {
        let dim = self.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); dim * self.ladder.len()];
        for (i, row) in self.phasors.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                out[k * dim + i] = *v;
            }
        }
        out
    }

    pub fn from_stacked(ladder: HarmonicLadder, dim: usize, x: &[Complex64]) -> Self {
        let phasors = (0..dim)
            .map(|i| (0..ladder.len()).map(|k| x[k * dim + i]).collect())
            .collect();
        Self { ladder, phasors }
    }

    /// Spectrum CSV: `k,freq_hz,<name>_re,<name>_im,...`.
    pub fn write_csv<W: Write>(&self, names: &[String], mut w: W) -> io::Result<()> {
        write!(w, "k,freq_hz")?;
        for n in names {
            write!(w, ",{n}_re,{n}_im")?;
        }
        writeln!(w)?;
        for k in 0..self.ladder.len() {
            write!(w, "{k},{:e}", self.ladder.freq_hz(k))?;
            for row in &self.phasors {
                write!(w, ",{:e},{:e}", row[k].re, row[k].im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Cached forward/inverse FFT plans of one length.
#[derive(Clone)]
pub struct FftPair {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// All `N` normalized DFT coefficients `DFT(x)[m] / N`.
    pub fn coefficients(&self, samples: &[f64]) -> Vec<Complex64> {
        assert_eq!(samples.len(), self.n);
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// One-sided phasors `X_0..X_K` of real samples.
    pub fn phasors(&self, samples: &[f64], k_max: usize) -> Vec<Complex64> {
        let mut c = self.coefficients(samples);
        c.truncate(k_max + 1);
        c[0].im = 0.0;
        c
    }

    /// Samples at `t_n = n T / N` of the real waveform with phasors `x`.
    pub fn samples(&self, x: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0] = Complex64::new(x[0].re, 0.0);
        for (k, v) in x.iter().enumerate().skip(1) {
            buf[k] += *v;
            buf[n - k] += v.conj();
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }
}

/// One-sided spectrum of every row of `rows`, truncated to `K` harmonics.
pub fn fft_rows(rows: &[Vec<f64>], period: f64, k_max: usize) -> Result<SpectralSolution> {
    let n = rows.first().map_or(0, Vec::len);
    check_k(k_max, n)?;
    let ladder = HarmonicLadder::new(period, k_max)?;
    let fft = FftPair::new(n);
    Ok(SpectralSolution {
        ladder,
        phasors: rows.iter().map(|r| fft.phasors(r, k_max)).collect(),
    })
}

/// Fourier transform of the stored steady-state period.
pub fn fft_period(sol: &TransientSolution, k_max: usize) -> Result<SpectralSolution> {
    fft_rows(&sol.x_samples, sol.period, k_max)
}

/// Evaluates the one-sided series of every unknown at the given instants.
pub fn reconstruct_time(spec: &SpectralSolution, t_grid: &[f64]) -> Vec<Vec<f64>> {
    spec.phasors
        .iter()
        .map(|row| reconstruct_series(row, spec.ladder.omega0, t_grid))
        .collect()
}

/// `X_0 + Σ 2 Re(X_k e^{j k ω0 t})` for each `t`.
pub fn reconstruct_series(x: &[Complex64], omega0: f64, t_grid: &[f64]) -> Vec<f64> {
    t_grid
        .iter()
        .map(|&t| {
            x.iter()
                .enumerate()
                .map(|(k, v)| {
                    if k == 0 {
                        v.re
                    } else {
                        2.0 * (v * Complex64::from_polar(1.0, k as f64 * omega0 * t)).re
                    }
                })
                .sum()
        })
        .collect()
}
