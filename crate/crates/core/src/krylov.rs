//! Post-processing of overlap series `s_k = ⟨ψ0|W(k·dt)|ψ0⟩` into energies.
//!
//! UVQPE solves the Toeplitz pencil `T x = λ S x` on the singular subspace
//! of `S` kept by a relative threshold δ. ODMD fits `X' = A X` over Hankel
//! windows with a δ-truncated pseudo-inverse. Either way `E = −arg(λ)/dt`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{SpectrumResult, SpinHamiltonian};
use crate::statevec::StateVector;
use crate::trotter::Evolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    /// `s_{−m} = conj(s_m)`.
    Unitary,
    /// `f_{−m}` measured separately.
    Floquet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Sampled { shots: u64, seed: u64 },
    Noisy { shots: u64, seed: u64, p_pauli: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSeries {
    pub dt: f64,
    /// `s_0 ..= s_K`.
    pub values: Vec<C64>,
    /// `f_0, f_{−1}, ..., f_{−K}` for Floquet series.
    pub negative: Option<Vec<C64>>,
    pub kind: SeriesKind,
    pub provenance: Provenance,
}

impl OverlapSeries {
    pub fn new(dt: f64, values: Vec<C64>) -> Self {
        Self {
            dt,
            values,
            negative: None,
            kind: SeriesKind::Unitary,
            provenance: Provenance::Exact,
        }
    }

    pub fn floquet(dt: f64, positive: Vec<C64>, negative: Vec<C64>) -> Self {
        Self {
            dt,
            values: positive,
            negative: Some(negative),
            kind: SeriesKind::Floquet,
            provenance: Provenance::Exact,
        }
    }

    /// Exact `⟨ψ0|e^{−iHk·dt}|ψ0⟩` from the spectral decomposition of ψ0.
    pub fn exact(h: &SpinHamiltonian, psi0: &StateVector, dt: f64, k_max: usize) -> Self {
        let w = h.spectral_weights(psi0);
        let values = (0..=k_max)
            .map(|k| w.iter().map(|&(e, p)| C64::from_polar(p, -e * k as f64 * dt)).sum())
            .collect();
        Self::new(dt, values)
    }

    /// Series for any evolver by direct statevector evolution; Floquet
    /// evolvers get both directions.
    pub fn from_evolver(h: &SpinHamiltonian, evolver: &Evolver, psi0: &StateVector, dt: f64, k_max: usize) -> Result<Self> {
        match evolver {
            Evolver::Exact => Ok(Self::exact(h, psi0, dt, k_max)),
            Evolver::Trotter { .. } => {
                let values = (0..=k_max)
                    .map(|k| Ok(psi0.inner(&evolver.evolve(h, psi0, k as f64 * dt)?)))
                    .collect::<Result<_>>()?;
                Ok(Self::new(dt, values))
            }
            Evolver::Floquet { .. } => {
                let dir = |sign: f64| -> Result<Vec<C64>> {
                    (0..=k_max)
                        .map(|k| Ok(psi0.inner(&evolver.evolve(h, psi0, sign * k as f64 * dt)?)))
                        .collect()
                };
                Ok(Self::floquet(dt, dir(1.0)?, dir(-1.0)?))
            }
        }
    }

    pub fn k_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `s_m` for any sign of `m`.
    pub fn get(&self, m: i64) -> Result<C64> {
        let k = m.unsigned_abs() as usize;
        if k >= self.values.len() {
            return Err(Error::Invalid(format!("series has no entry {m}")));
        }
        if m >= 0 {
            return Ok(self.values[k]);
        }
        match (self.kind, &self.negative) {
            (SeriesKind::Unitary, _) => Ok(self.values[k].conj()),
            (SeriesKind::Floquet, Some(neg)) if k < neg.len() => Ok(neg[k]),
            (SeriesKind::Floquet, _) => Err(Error::Invalid(format!("Floquet series lacks the value at {m}"))),
        }
    }

    pub fn real_part(&self) -> Self {
        Self {
            values: self.values.iter().map(|z| C64::from(z.re)).collect(),
            negative: self.negative.as_ref().map(|v| v.iter().map(|z| C64::from(z.re)).collect()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Uvqpe,
    Odmd,
    UvqpeFloquet,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Uvqpe => "uvqpe",
            Algorithm::Odmd => "odmd",
            Algorithm::UvqpeFloquet => "uvqpe_floquet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Admissible `|λ|` range.
    pub band: (f64, f64),
    /// ODMD window length; `None` means `ceil(n_steps/3)`.
    pub window: Option<usize>,
    /// ODMD on `Re s_k` only.
    pub real_part_only: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            band: (0.5, 1.5),
            window: None,
            real_part_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovEntry {
    pub step: usize,
    pub energy: f64,
    /// Every eigenvalue of the reduced problem.
    pub eigenvalues: Vec<C64>,
    /// Coefficients on `ψ_k = W(k·dt)ψ0`, `k < step`; empty for ODMD.
    pub ritz: Vec<C64>,
    pub retained_rank: usize,
    /// No eigenvalue fell in the band; `energy` is the unconstrained minimum.
    pub fallback: bool,
}

/// `T(j,k) = s_{1+k−j}`, `S(j,k) = s_{k−j}`, both `n × n`.
pub fn toeplitz(series: &OverlapSeries, n: usize) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let mut t = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let m = k as i64 - j as i64;
            t[(j, k)] = series.get(m + 1)?;
            s[(j, k)] = series.get(m)?;
        }
    }
    Ok((t, s))
}

/// Windows of length `d` starting at `m = 0..=n_steps−d`:
/// `X(i,m) = s_{m+i}`, `X'(i,m) = s_{m+i+1}`.
pub fn hankel(series: &OverlapSeries, n_steps: usize, d: usize) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    if d == 0 || d > n_steps {
        return Err(Error::Invalid(format!("window {d} does not fit {n_steps} steps")));
    }
    let cols = n_steps - d + 1;
    let mut x = DMatrix::zeros(d, cols);
    let mut xp = DMatrix::zeros(d, cols);
    for i in 0..d {
        for m in 0..cols {
            x[(i, m)] = series.get((m + i) as i64)?;
            xp[(i, m)] = series.get((m + i + 1) as i64)?;
        }
    }
    Ok((x, xp))
}

/// Retained right singular vectors `(V_r, σ_r)` with `σ ≥ δ·σ_max`.
fn truncated_svd(m: &DMatrix<C64>, delta: f64) -> Result<(DMatrix<C64>, DMatrix<C64>, Vec<f64>)> {
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").adjoint();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] >= delta * smax)
        .collect();
    if keep.is_empty() {
        return Err(Error::Numerical("every singular value was filtered".into()));
    }
    let ur = DMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])]);
    let vr = DMatrix::from_fn(v.nrows(), keep.len(), |r, c| v[(r, keep[c])]);
    Ok((ur, vr, keep.iter().map(|&i| svd.singular_values[i]).collect()))
}

/// Eigenvalues of a general complex matrix from its Schur form.
pub fn eigenvalues(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    let n = m.nrows();
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    let scale = t.norm().max(1e-300);
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].norm() > 1e-12 * scale {
            // leftover 2×2 block
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let tr = a + d;
            let disc = ((a - d) * (a - d) + b * c * 4.0).sqrt();
            out.push((tr + disc) / 2.0);
            out.push((tr - disc) / 2.0);
            i += 2;
        } else {
            out.push(t[(i, i)]);
            i += 1;
        }
    }
    Ok(out)
}

/// Right singular vector of the smallest singular value.
fn null_vector(m: &DMatrix<C64>) -> Result<DVector<C64>> {
    let svd = SVD::try_new(m.clone(), false, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let v = svd.v_t.expect("requested").adjoint();
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    Ok(v.column(imin).into_owned())
}

fn energy_of(l: C64, dt: f64) -> f64 {
    -l.arg() / dt
}

/// Picks the lowest energy among eigenvalues in the band.
fn select(eigs: &[C64], dt: f64, band: (f64, f64)) -> (usize, bool) {
    let best = |filter: &dyn Fn(&C64) -> bool| {
        eigs.iter()
            .enumerate()
            .filter(|(_, l)| filter(l))
            .min_by(|a, b| energy_of(*a.1, dt).total_cmp(&energy_of(*b.1, dt)))
            .map(|(i, _)| i)
    };
    match best(&|l: &C64| l.norm() >= band.0 && l.norm() <= band.1) {
        Some(i) => (i, false),
        None => (best(&|_| true).expect("nonempty"), true),
    }
}

fn check_steps(series: &OverlapSeries, n_steps: usize) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::Invalid("n_steps must be at least 1".into()));
    }
    if n_steps > series.k_max() {
        return Err(Error::Invalid(format!(
            "{n_steps} steps need s_0..s_{n_steps}, series stops at {}",
            series.k_max()
        )));
    }
    Ok(())
}

fn gevp(series: &OverlapSeries, n_steps: usize, delta: f64, opts: &SolverOptions) -> Result<KrylovEntry> {
    check_steps(series, n_steps)?;
    let (t, s) = toeplitz(series, n_steps)?;
    let (_, vr, _) = truncated_svd(&s, delta)?;
    let sr = vr.adjoint() * &s * &vr;
    let tr = vr.adjoint() * &t * &vr;
    let m = sr
        .clone()
        .lu()
        .solve(&tr)
        .ok_or_else(|| Error::Numerical("projected overlap matrix is singular".into()))?;
    let eigs = eigenvalues(&m)?;
    let (i, fallback) = select(&eigs, series.dt, opts.band);
    let lambda = eigs[i];
    let r = m.nrows();
    let x = null_vector(&(&m - DMatrix::<C64>::identity(r, r) * lambda))?;
    let mut v = &vr * x;
    let norm2 = (v.adjoint() * &s * &v)[(0, 0)].re;
    let scale = if norm2 > 0.0 { norm2.sqrt() } else { v.norm() };
    v /= C64::from(scale);
    Ok(KrylovEntry {
        step: n_steps,
        energy: energy_of(lambda, series.dt),
        eigenvalues: eigs,
        ritz: v.iter().copied().collect(),
        retained_rank: r,
        fallback,
    })
}

/// UVQPE on `n_steps` Krylov vectors (uses `s_0 ..= s_{n_steps}`).
pub fn uvqpe(series: &OverlapSeries, n_steps: usize, delta: f64) -> Result<KrylovEntry> {
    uvqpe_with(series, n_steps, delta, &SolverOptions::default())
}

pub fn uvqpe_with(series: &OverlapSeries, n_steps: usize, delta: f64, opts: &SolverOptions) -> Result<KrylovEntry> {
    gevp(series, n_steps, delta, opts)
}

/// Single-step Floquet variant: the same pencil built from measured `f_{±m}`.
pub fn uvqpe_floquet(series: &OverlapSeries, n_steps: usize, delta: f64) -> Result<KrylovEntry> {
    uvqpe_floquet_with(series, n_steps, delta, &SolverOptions::default())
}

pub fn uvqpe_floquet_with(series: &OverlapSeries, n_steps: usize, delta: f64, opts: &SolverOptions) -> Result<KrylovEntry> {
    match (&series.kind, &series.negative) {
        (SeriesKind::Floquet, Some(neg)) if neg.len() >= n_steps => gevp(series, n_steps, delta, opts),
        _ => Err(Error::Invalid("Floquet UVQPE needs measured negative-direction values".into())),
    }
}

pub fn odmd(series: &OverlapSeries, n_steps: usize, delta: f64) -> Result<KrylovEntry> {
    odmd_with(series, n_steps, delta, &SolverOptions::default())
}

pub fn odmd_with(series: &OverlapSeries, n_steps: usize, delta: f64, opts: &SolverOptions) -> Result<KrylovEntry> {
    check_steps(series, n_steps)?;
    let d = opts.window.unwrap_or(n_steps.div_ceil(3)).min(n_steps);
    let data = if opts.real_part_only { series.real_part() } else { series.clone() };
    let (x, xp) = hankel(&data, n_steps, d)?;
    let (ur, vr, sig) = truncated_svd(&x, delta)?;
    let inv = DMatrix::from_diagonal(&DVector::from_iterator(sig.len(), sig.iter().map(|s| C64::from(1.0 / s))));
    let pinv = &vr * inv * ur.adjoint();
    let a = &xp * pinv;
    let eigs = eigenvalues(&a)?;
    let (i, fallback) = select(&eigs, series.dt, opts.band);
    Ok(KrylovEntry {
        step: n_steps,
        energy: energy_of(eigs[i], series.dt),
        eigenvalues: eigs,
        ritz: Vec::new(),
        retained_rank: sig.len(),
        fallback,
    })
}

pub fn solve(algorithm: Algorithm, series: &OverlapSeries, n_steps: usize, delta: f64, opts: &SolverOptions) -> Result<KrylovEntry> {
    match algorithm {
        Algorithm::Uvqpe => uvqpe_with(series, n_steps, delta, opts),
        Algorithm::Odmd => odmd_with(series, n_steps, delta, opts),
        Algorithm::UvqpeFloquet => uvqpe_floquet_with(series, n_steps, delta, opts),
    }
}

/// Estimates for `n_steps = 1..=max_steps`; failed solves are kept as errors.
pub fn convergence(
    algorithm: Algorithm,
    series: &OverlapSeries,
    delta: f64,
    max_steps: usize,
    opts: &SolverOptions,
) -> Vec<Result<KrylovEntry>> {
    (1..=max_steps).map(|n| solve(algorithm, series, n, delta, opts)).collect()
}

/// First step after which every error stays below `tol`.
pub fn steps_to_tolerance(errors: &[(usize, f64)], tol: f64) -> Option<usize> {
    let mut answer = None;
    for &(step, e) in errors {
        if e.is_finite() && e.abs() < tol {
            answer.get_or_insert(step);
        } else {
            answer = None;
        }
    }
    answer
}

/// `ψ_k = W(k·dt)ψ0` for `k < n`.
pub fn krylov_basis(h: &SpinHamiltonian, evolver: &Evolver, psi0: &StateVector, dt: f64, n: usize) -> Result<Vec<StateVector>> {
    (0..n).map(|k| evolver.evolve(h, psi0, k as f64 * dt)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RitzOverlap {
    pub eig_index: usize,
    pub eig_energy: f64,
    pub overlap_sq: f64,
}

/// Normalized `Σ v_k ψ_k`.
pub fn ritz_state(ritz: &[C64], basis: &[StateVector]) -> Result<StateVector> {
    if ritz.len() > basis.len() {
        return Err(Error::Dimension {
            expected: ritz.len(),
            got: basis.len(),
        });
    }
    let dim = basis[0].dim();
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    for (c, b) in ritz.iter().zip(basis) {
        for (a, x) in amps.iter_mut().zip(b.amps()) {
            *a += c * x;
        }
    }
    let mut s = StateVector::from_amplitudes_unchecked(amps);
    let n = s.norm();
    if n < 1e-12 {
        return Err(Error::Numerical("Ritz combination has zero norm".into()));
    }
    s.normalize();
    Ok(s)
}

/// `|⟨v_i|Ritz⟩|²` for the `top` largest contributions, descending.
pub fn ritz_overlaps(ritz: &[C64], basis: &[StateVector], spectrum: &SpectrumResult, top: usize) -> Result<Vec<RitzOverlap>> {
    let s = ritz_state(ritz, basis)?;
    let mut rows: Vec<RitzOverlap> = spectrum
        .overlaps(s.amps())
        .into_iter()
        .enumerate()
        .map(|(i, o)| RitzOverlap {
            eig_index: i,
            eig_energy: spectrum.eigenvalues[i],
            overlap_sq: o,
        })
        .collect();
    rows.sort_by(|a, b| b.overlap_sq.total_cmp(&a.overlap_sq));
    rows.truncate(top);
    Ok(rows)
}

/// Ritz weight on the degenerate ground set.
pub fn ritz_ground_overlap(ritz: &[C64], basis: &[StateVector], spectrum: &SpectrumResult) -> Result<f64> {
    let s = ritz_state(ritz, basis)?;
    Ok(spectrum
        .ground_subspace
        .iter()
        .map(|&i| spectrum.project(i, s.amps()).norm_sqr())
        .sum())
}

/// Step-count estimates `(j_uvqpe, d_odmd)` from the spectral range,
/// initial ground overlap `p0`, target accuracy, gap and time step.
pub fn step_bounds(range: f64, p0: f64, eps_target: f64, gap: f64, dt: f64) -> Result<(usize, usize)> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::Invalid(format!("p0 = {p0} must lie in (0, 1]")));
    }
    if gap <= 0.0 || !gap.is_finite() {
        return Err(Error::Invalid(format!("gap must be positive, got {gap}")));
    }
    if dt <= 0.0 || eps_target <= 0.0 || range <= 0.0 {
        return Err(Error::Invalid("range, dt and target accuracy must be positive".into()));
    }
    let arg = range * (1.0 - p0) / p0 / eps_target;
    let j = if arg <= 1.0 {
        1
    } else {
        let raw = arg.ln() / (2.0 * (1.0 + 3.0 * gap * dt / (2.0 * PI)).ln());
        (raw.ceil() as usize).max(1)
    };
    let d = (1.0 / (gap * dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((j, d))
}
