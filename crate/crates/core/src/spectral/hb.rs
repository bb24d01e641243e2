use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{check_k, FftPair, HarmonicLadder, SpectralSolution};
use crate::error::{Error, Result};
use crate::linalg::{norm2, SparseLu, SparseMatrix};
use crate::mna::MnaStructure;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Coupling of one periodic waveform `g(t)` between harmonics:
/// `Y_k = Σ_l direct[k][l] X_l + Σ_{l≥1} conjugate[k][l] conj(X_l)` is the
/// spectrum of `g(t) x(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionMatrix {
    pub k_max: usize,
    /// Row-major `(K+1) x (K+1)`: `G_{k-l}`.
    pub direct: Vec<C>,
    /// Row-major `(K+1) x (K+1)`: `G_{k+l}`, column 0 unused (zero).
    pub conjugate: Vec<C>,
}

impl ConversionMatrix {
    pub fn get(&self, k: usize, l: usize) -> (C, C) {
        let m = self.k_max + 1;
        (self.direct[k * m + l], self.conjugate[k * m + l])
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let m = self.k_max + 1;
        (0..m)
            .map(|k| {
                (0..m)
                    .map(|l| {
                        let (d, c) = self.get(k, l);
                        d * x[l] + c * x[l].conj()
                    })
                    .sum()
            })
            .collect()
    }
}

fn conversion_from_coefficients(g: &[C], k_max: usize) -> ConversionMatrix {
    let n = g.len() as isize;
    let m = k_max + 1;
    let at = |idx: isize| g[idx.rem_euclid(n) as usize];
    let mut direct = vec![ZERO; m * m];
    let mut conjugate = vec![ZERO; m * m];
    for k in 0..m {
        for l in 0..m {
            direct[k * m + l] = at(k as isize - l as isize);
            if l > 0 {
                conjugate[k * m + l] = at((k + l) as isize);
            }
        }
    }
    ConversionMatrix {
        k_max,
        direct,
        conjugate,
    }
}

/// Conversion matrix of the sampled waveform `g(t_n)`, `n = 0..N`. Fourier
/// indices wrap modulo `N`, which makes the product exact for band-limited
/// inputs at `K = N/2 - 1`.
pub fn conversion_matrix(g_samples: &[f64], k_max: usize) -> Result<ConversionMatrix> {
    check_k(k_max, g_samples.len())?;
    let g = FftPair::new(g_samples.len()).coefficients(g_samples);
    Ok(conversion_from_coefficients(&g, k_max))
}

/// Block-diagonal frequency-domain matrix: block `k` is
/// `j k ω0 A_C + A_G`, with every switch at its time-average conductance.
pub fn assemble_hb_matrix(mna: &MnaStructure, ladder: &HarmonicLadder) -> Vec<SparseMatrix<C>> {
    let mut g = mna.a_g.triplets();
    for s in mna.switches() {
        let (gon, goff) = (1.0 / s.ron, 1.0 / s.roff);
        let mean = goff + s.control.mean() * (gon - goff);
        g.extend(s.pattern(mna.dim).iter().map(|(r, c, v)| (r, c, v * mean)));
    }
    ladder
        .frequencies
        .iter()
        .map(|&w| {
            let mut trip: Vec<(usize, usize, C)> =
                g.iter().map(|&(r, c, v)| (r, c, C::new(v, 0.0))).collect();
            trip.extend(mna.a_c.iter().map(|(r, c, v)| (r, c, C::new(0.0, w * v))));
            SparseMatrix::from_triplets(mna.dim, mna.dim, &trip)
        })
        .collect()
}

/// Index map of the real form of a stacked one-sided vector:
/// `[Re X_0, Re X_1, Im X_1, ..., Re X_K, Im X_K]`, each block of length
/// `dim`. `Im X_0` is omitted since it is zero for real waveforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RealLayout {
    pub dim: usize,
    pub k_max: usize,
}

impl RealLayout {
    pub fn len(&self) -> usize {
        self.dim * (2 * self.k_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    pub fn re(&self, k: usize, i: usize) -> usize {
        if k == 0 {
            i
        } else {
            self.dim + 2 * (k - 1) * self.dim + i
        }
    }

    pub fn im(&self, k: usize, i: usize) -> Option<usize> {
        (k > 0).then(|| self.re(k, i) + self.dim)
    }

    pub fn embed(&self, x: &[C]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for k in 0..=self.k_max {
            for i in 0..self.dim {
                let v = x[k * self.dim + i];
                out[self.re(k, i)] = v.re;
                if let Some(j) = self.im(k, i) {
                    out[j] = v.im;
                }
            }
        }
        out
    }

    pub fn unembed(&self, x: &[f64]) -> Vec<C> {
        let mut out = vec![ZERO; self.dim * (self.k_max + 1)];
        for k in 0..=self.k_max {
            for i in 0..self.dim {
                let im = self.im(k, i).map_or(0.0, |j| x[j]);
                out[k * self.dim + i] = C::new(x[self.re(k, i)], im);
            }
        }
        out
    }
}

/// Harmonic-balance Jacobian `J(δX) = direct δX + conjugate conj(δX)` in
/// stacked ordering, plus the block-diagonal linear part.
#[derive(Debug, Clone)]
pub struct HbSystem {
    pub ladder: HarmonicLadder,
    pub dim: usize,
    /// Samples per period the time-varying coefficients were taken on.
    pub samples: usize,
    pub block_a: Vec<SparseMatrix<C>>,
    pub direct: SparseMatrix<C>,
    pub conjugate: SparseMatrix<C>,
}

impl HbSystem {
    pub fn layout(&self) -> RealLayout {
        RealLayout {
            dim: self.dim,
            k_max: self.ladder.k_max,
        }
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let xc: Vec<C> = x.iter().map(|v| v.conj()).collect();
        let mut y = self.direct.mul_vec(x);
        for (a, b) in y.iter_mut().zip(self.conjugate.mul_vec(&xc)) {
            *a += b;
        }
        y
    }

    /// Adjoint of `apply` under `<a, b> = Re(a^H b)`:
    /// `direct^H λ + conjugate^T conj(λ)`.
    pub fn apply_adjoint(&self, lambda: &[C]) -> Vec<C> {
        let lc: Vec<C> = lambda.iter().map(|v| v.conj()).collect();
        let mut y = self.direct.adjoint_mul_vec(lambda);
        for (a, b) in y.iter_mut().zip(self.conjugate.transpose_mul_vec(&lc)) {
            *a += b;
        }
        y
    }

    /// Block-diagonal linear part as one stacked matrix.
    pub fn block_a_stacked(&self) -> SparseMatrix<C> {
        let n = self.dim * self.ladder.len();
        let trip: Vec<(usize, usize, C)> = self
            .block_a
            .iter()
            .enumerate()
            .flat_map(|(k, b)| {
                b.iter()
                    .map(move |(r, c, v)| (k * self.dim + r, k * self.dim + c, v))
            })
            .collect();
        SparseMatrix::from_triplets(n, n, &trip)
    }

    /// The real matrix acting on [`RealLayout`] coordinates.
    pub fn real_matrix(&self) -> SparseMatrix<f64> {
        let lay = self.layout();
        let dim = self.dim;
        let split = |idx: usize| (idx / dim, idx % dim);
        let mut trip = Vec::with_capacity(4 * (self.direct.nnz() + self.conjugate.nnz()));
        fn push(trip: &mut Vec<(usize, usize, f64)>, r: Option<usize>, c: Option<usize>, v: f64) {
            if let (Some(r), Some(c)) = (r, c) {
                trip.push((r, c, v));
            }
        }
        for (row, col, a) in self.direct.iter() {
            let (k, i) = split(row);
            let (l, j) = split(col);
            let (rr, ri) = (Some(lay.re(k, i)), lay.im(k, i));
            let (cr, ci) = (Some(lay.re(l, j)), lay.im(l, j));
            push(&mut trip, rr, cr, a.re);
            push(&mut trip, rr, ci, -a.im);
            push(&mut trip, ri, cr, a.im);
            push(&mut trip, ri, ci, a.re);
        }
        for (row, col, b) in self.conjugate.iter() {
            let (k, i) = split(row);
            let (l, j) = split(col);
            let (rr, ri) = (Some(lay.re(k, i)), lay.im(k, i));
            let (cr, ci) = (Some(lay.re(l, j)), lay.im(l, j));
            push(&mut trip, rr, cr, b.re);
            push(&mut trip, rr, ci, b.im);
            push(&mut trip, ri, cr, b.im);
            push(&mut trip, ri, ci, -b.re);
        }
        SparseMatrix::from_triplets(lay.len(), lay.len(), &trip)
    }

    /// Sparse LU of the real form; one factorization serves direct and
    /// adjoint solves.
    pub fn factor(&self) -> Result<HbFactorization> {
        let matrix = self.real_matrix();
        let lu = SparseLu::factor(&matrix).map_err(|_| Error::SingularJacobian {
            condition_estimate: f64::INFINITY,
        })?;
        Ok(HbFactorization {
            layout: self.layout(),
            matrix,
            lu,
        })
    }
}

/// Factorized harmonic-balance Jacobian.
pub struct HbFactorization {
    pub layout: RealLayout,
    pub matrix: SparseMatrix<f64>,
    lu: SparseLu,
}

const REFINEMENT_STEPS: usize = 2;
/// Refinement stops once the residual is this small relative to the
/// right-hand side.
const REFINEMENT_FLOOR: f64 = 1e-14;

impl HbFactorization {
    fn singular() -> Error {
        Error::SingularJacobian {
            condition_estimate: f64::INFINITY,
        }
    }

    /// Solves `M X = B` (or `M^T X = B`) in place for a column-major block,
    /// with iterative refinement.
    pub fn solve_real_many(&self, rhs: &mut [f64], ncols: usize, transpose: bool) -> Result<()> {
        let n = self.layout.len();
        let b = rhs.to_vec();
        if transpose {
            self.lu.solve_transpose_many(rhs, ncols);
        } else {
            self.lu.solve_many(rhs, ncols);
        }
        let b_norm = norm2(&b);
        for _ in 0..REFINEMENT_STEPS {
            let mut r = vec![0.0; n * ncols];
            for j in 0..ncols {
                let x = &rhs[j * n..(j + 1) * n];
                let mx = if transpose {
                    self.matrix.transpose_mul_vec(x)
                } else {
                    self.matrix.mul_vec(x)
                };
                for i in 0..n {
                    r[j * n + i] = b[j * n + i] - mx[i];
                }
            }
            if !(norm2(&r) > REFINEMENT_FLOOR * b_norm) {
                break;
            }
            if transpose {
                self.lu.solve_transpose_many(&mut r, ncols);
            } else {
                self.lu.solve_many(&mut r, ncols);
            }
            rhs.iter_mut().zip(&r).for_each(|(x, d)| *x += d);
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Self::singular());
        }
        Ok(())
    }

    /// Solves `J X = rhs` for a stacked complex right-hand side whose DC
    /// block is real.
    pub fn solve(&self, rhs: &[C]) -> Result<Vec<C>> {
        let mut b = self.layout.embed(rhs);
        self.solve_real_many(&mut b, 1, false)?;
        Ok(self.layout.unembed(&b))
    }
}

/// Builds the Jacobian around the periodic state sampled at
/// `t_n = n T / N` (`x_samples[i][n]`).
pub fn jacobian_from_samples(
    mna: &MnaStructure,
    ladder: &HarmonicLadder,
    x_samples: &[Vec<f64>],
) -> Result<HbSystem> {
    let dim = mna.dim;
    let n = x_samples.first().map_or(0, Vec::len);
    check_k(ladder.k_max, n)?;
    if x_samples.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "{} sampled unknowns, expected {dim}",
            x_samples.len()
        )));
    }
    let period = ladder.period();
    let times: Vec<f64> = (0..n).map(|i| i as f64 * period / n as f64).collect();

    // Time-varying entries of the small-signal conductance, per position.
    let mut waves: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    if mna.has_diodes() {
        let mut state = vec![0.0; dim];
        for s in 0..n {
            for i in 0..dim {
                state[i] = x_samples[i][s];
            }
            let ev = mna.eval_nonlinear(&state)?;
            for (r, c, v) in ev.g_nl.iter() {
                waves.entry((r, c)).or_insert_with(|| vec![0.0; n])[s] -= v;
            }
        }
    }
    for sw in mna.switches() {
        let g: Vec<f64> = times.iter().map(|&t| sw.conductance(t)).collect();
        for (r, c, v) in sw.pattern(dim).iter() {
            let w = waves.entry((r, c)).or_insert_with(|| vec![0.0; n]);
            w.iter_mut().zip(&g).for_each(|(a, b)| *a += v * b);
        }
    }

    let m = ladder.len();
    let mut direct: Vec<(usize, usize, C)> = Vec::new();
    let mut conjugate: Vec<(usize, usize, C)> = Vec::new();
    for (k, &w) in ladder.frequencies.iter().enumerate() {
        let off = k * dim;
        direct.extend(mna.a_g.iter().map(|(r, c, v)| (off + r, off + c, C::new(v, 0.0))));
        direct.extend(mna.a_c.iter().map(|(r, c, v)| (off + r, off + c, C::new(0.0, w * v))));
    }
    if !waves.is_empty() {
        let fft = FftPair::new(n);
        for ((r, c), samples) in &waves {
            let conv = conversion_from_coefficients(&fft.coefficients(samples), ladder.k_max);
            for k in 0..m {
                for l in 0..m {
                    let (d, cj) = conv.get(k, l);
                    direct.push((k * dim + r, l * dim + c, d));
                    if l > 0 {
                        conjugate.push((k * dim + r, l * dim + c, cj));
                    }
                }
            }
        }
    }
    let size = dim * m;
    Ok(HbSystem {
        ladder: ladder.clone(),
        dim,
        samples: n,
        block_a: assemble_hb_matrix(mna, ladder),
        direct: SparseMatrix::from_triplets(size, size, &direct),
        conjugate: SparseMatrix::from_triplets(size, size, &conjugate),
    })
}

/// Jacobian around a transient steady state.
pub fn assemble_hb_jacobian(
    mna: &MnaStructure,
    steady: &crate::transient::TransientSolution,
    ladder: &HarmonicLadder,
) -> Result<HbSystem> {
    jacobian_from_samples(mna, ladder, &steady.x_samples)
}

/// Frequency-domain residual `j k ω0 A_C X_k + FFT_k[A_G x - i_nl(x) - i_s]`
/// and the time samples it was evaluated on.
fn hb_residual(
    mna: &MnaStructure,
    ladder: &HarmonicLadder,
    fft: &FftPair,
    x: &[C],
) -> (Vec<C>, Vec<Vec<f64>>) {
    let dim = mna.dim;
    let n = fft.len();
    let period = ladder.period();
    let spec = SpectralSolution::from_stacked(ladder.clone(), dim, x);
    let samples: Vec<Vec<f64>> = spec.phasors.iter().map(|row| fft.samples(row)).collect();
    let mut f = vec![vec![0.0; n]; dim];
    let mut state = vec![0.0; dim];
    for s in 0..n {
        for i in 0..dim {
            state[i] = samples[i][s];
        }
        let r = mna.static_residual(s as f64 * period / n as f64, &state);
        for i in 0..dim {
            f[i][s] = r[i];
        }
    }
    let mut res = vec![ZERO; x.len()];
    for (i, row) in f.iter().enumerate() {
        for (k, v) in fft.phasors(row, ladder.k_max).into_iter().enumerate() {
            res[k * dim + i] = v;
        }
    }
    for (k, &w) in ladder.frequencies.iter().enumerate() {
        let xk = &x[k * dim..(k + 1) * dim];
        let cx = mna.a_c.to_complex().mul_vec(xk);
        for i in 0..dim {
            res[k * dim + i] += C::new(0.0, w) * cx[i];
        }
    }
    (res, samples)
}

/// Newton harmonic balance from a zero initial guess, with step halving
/// when the residual does not decrease. Nonlinear currents are evaluated on
/// `N = max(16, 4 (K + 1))` rounded up to a power of two.
pub fn hb_forward_solve(
    mna: &MnaStructure,
    ladder: &HarmonicLadder,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralSolution> {
    let n = (4 * ladder.len()).max(16).next_power_of_two();
    let fft = FftPair::new(n);
    let lay = RealLayout {
        dim: mna.dim,
        k_max: ladder.k_max,
    };
    let mut x = vec![ZERO; lay.dim * ladder.len()];
    let (mut res, mut samples) = hb_residual(mna, ladder, &fft, &x);
    let mut norm = norm2(&lay.embed(&res));
    let mut history = vec![norm];
    for _ in 0..max_iter {
        if norm <= tol {
            return Ok(SpectralSolution::from_stacked(ladder.clone(), lay.dim, &x));
        }
        let jac = jacobian_from_samples(mna, ladder, &samples)?;
        let neg: Vec<C> = res.iter().map(|v| -v).collect();
        let delta = jac.factor()?.solve(&neg)?;
        let mut alpha = 1.0;
        loop {
            let trial: Vec<C> = x.iter().zip(&delta).map(|(a, d)| a + d * alpha).collect();
            let (r, s) = hb_residual(mna, ladder, &fft, &trial);
            let nr = norm2(&lay.embed(&r));
            if nr.is_finite() && (nr < norm || alpha < 1e-3) {
                x = trial;
                res = r;
                samples = s;
                norm = nr;
                break;
            }
            alpha *= 0.5;
        }
        history.push(norm);
    }
    if norm <= tol {
        return Ok(SpectralSolution::from_stacked(ladder.clone(), lay.dim, &x));
    }
    Err(Error::HbDivergence {
        residual_history: history,
    })
}
