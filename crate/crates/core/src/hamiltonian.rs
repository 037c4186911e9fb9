//! Heisenberg Hamiltonian `H = ε Σ σ_i·σ_j − h Σ S^z_i` and exact
//! diagonalization by total-S^z sector.
//!
//! Sectors are keyed internally by the number of down spins `n_down`, so
//! `Sz = n/2 − n_down`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Triangle};
use crate::statevec::StateVector;

pub const DEFAULT_QUBIT_CAP: usize = 14;

/// Relative tolerance used to group degenerate ground levels.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SpinHamiltonian {
    n: usize,
    bonds: Vec<(usize, usize)>,
    triangles: Vec<Triangle>,
    eps: f64,
    h: f64,
    sectors: Vec<OnceLock<Arc<SectorEigen>>>,
}

/// Eigendecomposition of one S^z block, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SectorEigen {
    pub n_down: usize,
    pub basis: Vec<usize>,
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    pub e_min: f64,
    pub e_max: f64,
    pub dt_max: f64,
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub n_sites: usize,
    pub sector: Option<f64>,
    pub eigenvalues: Vec<f64>,
    pub ground_subspace: Vec<usize>,
    // (block, column) for each entry of `eigenvalues`
    index: Vec<(usize, usize)>,
    blocks: Vec<Arc<SectorEigen>>,
}

impl SpinHamiltonian {
    pub fn new(lattice: &impl Lattice, h: f64) -> Result<Self> {
        Self::with_options(lattice, 1.0, h, DEFAULT_QUBIT_CAP)
    }

    pub fn with_options(lattice: &impl Lattice, eps: f64, h: f64, cap: usize) -> Result<Self> {
        let n = lattice.n_sites();
        if n > cap {
            return Err(Error::Size { n, cap });
        }
        Ok(Self {
            n,
            bonds: lattice.bonds().to_vec(),
            triangles: lattice.triangles().to_vec(),
            eps,
            h,
            sectors: (0..=n).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Same couplings with a different field; cached spectra are shifted, not recomputed.
    pub fn with_field(&self, h: f64) -> Self {
        let out = Self {
            sectors: (0..=self.n).map(|_| OnceLock::new()).collect(),
            h,
            ..self.clone()
        };
        for (nd, cell) in self.sectors.iter().enumerate() {
            if let Some(e) = cell.get() {
                let shift = -(h - self.h) * self.sz_of(nd);
                let mut moved = (**e).clone();
                moved.values.add_scalar_mut(shift);
                let _ = out.sectors[nd].set(Arc::new(moved));
            }
        }
        out
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn field(&self) -> f64 {
        self.h
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn sz_of(&self, n_down: usize) -> f64 {
        self.n as f64 / 2.0 - n_down as f64
    }

    pub fn n_down_of(&self, sz: f64) -> Result<usize> {
        let nd = self.n as f64 / 2.0 - sz;
        if nd < -1e-9 || nd > self.n as f64 + 1e-9 || (nd - nd.round()).abs() > 1e-9 {
            return Err(Error::EmptySector { sz, n: self.n });
        }
        Ok(nd.round() as usize)
    }

    /// Diagonal element for basis state `idx`.
    pub fn diagonal(&self, idx: usize) -> f64 {
        let zz: f64 = self
            .bonds
            .iter()
            .map(|&(a, b)| if (idx >> a ^ idx >> b) & 1 == 0 { 1.0 } else { -1.0 })
            .sum();
        let down = idx.count_ones() as f64;
        let sz = self.n as f64 / 2.0 - down;
        self.eps * zz - self.h * sz
    }

    /// Matrix-free `H ψ`.
    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        assert_eq!(psi.len(), self.dim());
        let mut out: Vec<C64> = psi
            .iter()
            .enumerate()
            .map(|(i, &a)| a * self.diagonal(i))
            .collect();
        for (i, &a) in psi.iter().enumerate() {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for &(p, q) in &self.bonds {
                if (i >> p ^ i >> q) & 1 == 1 {
                    out[i ^ (1 << p) ^ (1 << q)] += a * (2.0 * self.eps);
                }
            }
        }
        out
    }

    /// Full `2^n × 2^n` real symmetric matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = self.diagonal(i);
            for &(p, q) in &self.bonds {
                if (i >> p ^ i >> q) & 1 == 1 {
                    m[(i ^ (1 << p) ^ (1 << q), i)] += 2.0 * self.eps;
                }
            }
        }
        m
    }

    pub fn sector_basis(&self, n_down: usize) -> Vec<usize> {
        (0..self.dim())
            .filter(|i| i.count_ones() as usize == n_down)
            .collect()
    }

    pub fn sector_matrix(&self, n_down: usize) -> (Vec<usize>, DMatrix<f64>) {
        let basis = self.sector_basis(n_down);
        let d = basis.len();
        let mut m = DMatrix::zeros(d, d);
        for (j, &i) in basis.iter().enumerate() {
            m[(j, j)] = self.diagonal(i);
            for &(p, q) in &self.bonds {
                if (i >> p ^ i >> q) & 1 == 1 {
                    let k = basis
                        .binary_search(&(i ^ (1 << p) ^ (1 << q)))
                        .expect("flip stays in sector");
                    m[(k, j)] += 2.0 * self.eps;
                }
            }
        }
        (basis, m)
    }

    /// Cached eigendecomposition of one sector.
    pub fn sector_eigen(&self, n_down: usize) -> Arc<SectorEigen> {
        self.sectors[n_down]
            .get_or_init(|| {
                let (basis, m) = self.sector_matrix(n_down);
                let eig = SymmetricEigen::new(m);
                let mut order: Vec<usize> = (0..basis.len()).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
                let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
                let vectors = DMatrix::from_fn(basis.len(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
                Arc::new(SectorEigen {
                    n_down,
                    basis,
                    values,
                    vectors,
                })
            })
            .clone()
    }

    /// Spectrum of one sector, or of the whole space when `sz` is `None`.
    pub fn diagonalize(&self, sz: Option<f64>) -> Result<SpectrumResult> {
        let blocks: Vec<Arc<SectorEigen>> = match sz {
            Some(s) => vec![self.sector_eigen(self.n_down_of(s)?)],
            None => (0..=self.n).map(|nd| self.sector_eigen(nd)).collect(),
        };
        let mut index: Vec<(usize, usize)> = blocks
            .iter()
            .enumerate()
            .flat_map(|(b, e)| (0..e.values.len()).map(move |c| (b, c)))
            .collect();
        index.sort_by(|x, y| blocks[x.0].values[x.1].total_cmp(&blocks[y.0].values[y.1]));
        let eigenvalues: Vec<f64> = index.iter().map(|&(b, c)| blocks[b].values[c]).collect();
        let e0 = eigenvalues[0];
        let tol = DEGENERACY_TOL * e0.abs().max(1.0);
        let ground_subspace = (0..eigenvalues.len())
            .take_while(|&i| eigenvalues[i] - e0 <= tol)
            .collect();
        Ok(SpectrumResult {
            n_sites: self.n,
            sector: sz,
            eigenvalues,
            ground_subspace,
            index,
            blocks,
        })
    }

    /// Lowest energy in each sector `Sz = 0, 1, ..., n/2` (or half-integers for odd n).
    pub fn sector_ground_energies(&self) -> Vec<(f64, f64)> {
        (0..=self.n / 2)
            .rev()
            .map(|nd| (self.sz_of(nd), self.sector_eigen(nd).values[0]))
            .collect()
    }

    pub fn spectral_bounds(&self) -> SpectralBounds {
        let b = 3.0 * self.eps * self.n_triangles() as f64 + 0.5 * self.h.abs() * self.n as f64;
        SpectralBounds {
            e_min: -b,
            e_max: b,
            dt_max: 2.0 * PI / (2.0 * b),
        }
    }

    /// Energy of the all-up state.
    pub fn reference_energy(&self) -> f64 {
        self.eps * self.bonds.len() as f64 - 0.5 * self.h * self.n as f64
    }

    /// `(E_i, |⟨v_i|ψ⟩|²)` over every eigenvector with nonzero weight.
    pub fn spectral_weights(&self, state: &StateVector) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for nd in 0..=self.n {
            let basis = self.sector_basis(nd);
            if basis.iter().all(|&i| state.amps()[i].norm_sqr() < 1e-30) {
                continue;
            }
            let e = self.sector_eigen(nd);
            let (re, im) = gather(state.amps(), &e.basis);
            let cr = e.vectors.tr_mul(&re);
            let ci = e.vectors.tr_mul(&im);
            for k in 0..e.values.len() {
                out.push((e.values[k], cr[k] * cr[k] + ci[k] * ci[k]));
            }
        }
        out
    }

    /// `e^{−iHt} ψ` through the cached sector eigensystems.
    pub fn evolve(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        if state.n_qubits() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: state.n_qubits(),
            });
        }
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for nd in 0..=self.n {
            let basis = self.sector_basis(nd);
            if basis.iter().all(|&i| state.amps()[i].norm_sqr() < 1e-300) {
                continue;
            }
            let e = self.sector_eigen(nd);
            let (re, im) = gather(state.amps(), &e.basis);
            let cr = e.vectors.tr_mul(&re);
            let ci = e.vectors.tr_mul(&im);
            let (mut pr, mut pi) = (cr.clone(), ci.clone());
            for k in 0..e.values.len() {
                let z = C64::new(cr[k], ci[k]) * C64::from_polar(1.0, -e.values[k] * t);
                pr[k] = z.re;
                pi[k] = z.im;
            }
            let nr = &e.vectors * pr;
            let ni = &e.vectors * pi;
            for (j, &i) in e.basis.iter().enumerate() {
                out[i] = C64::new(nr[j], ni[j]);
            }
        }
        StateVector::from_amplitudes(out)
    }
}

fn gather(amps: &[C64], basis: &[usize]) -> (DVector<f64>, DVector<f64>) {
    (
        DVector::from_iterator(basis.len(), basis.iter().map(|&i| amps[i].re)),
        DVector::from_iterator(basis.len(), basis.iter().map(|&i| amps[i].im)),
    )
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Sz of the block holding eigenvalue `i`.
    pub fn sz_of(&self, i: usize) -> f64 {
        let (b, _) = self.index[i];
        self.n_sites as f64 / 2.0 - self.blocks[b].n_down as f64
    }

    /// Eigenvector `i` embedded in the full `2^n` space.
    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        let (b, c) = self.index[i];
        let blk = &self.blocks[b];
        let mut v = vec![0.0; 1 << self.n_sites];
        for (j, &idx) in blk.basis.iter().enumerate() {
            v[idx] = blk.vectors[(j, c)];
        }
        v
    }

    /// `⟨v_i|ψ⟩`.
    pub fn project(&self, i: usize, psi: &[C64]) -> C64 {
        let (b, c) = self.index[i];
        let blk = &self.blocks[b];
        blk.basis
            .iter()
            .enumerate()
            .map(|(j, &idx)| psi[idx] * blk.vectors[(j, c)])
            .sum()
    }

    /// `|⟨v_i|ψ⟩|²` for every eigenvector.
    pub fn overlaps(&self, psi: &[C64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.project(i, psi).norm_sqr()).collect()
    }
}

/// Total weight of a normalized state on the degenerate ground set.
pub fn subspace_overlap(state: &StateVector, spectrum: &SpectrumResult) -> Result<f64> {
    if state.n_qubits() != spectrum.n_sites {
        return Err(Error::Dimension {
            expected: spectrum.n_sites,
            got: state.n_qubits(),
        });
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(norm));
    }
    Ok(spectrum
        .ground_subspace
        .iter()
        .map(|&i| spectrum.project(i, state.amps()).norm_sqr())
        .sum())
}
