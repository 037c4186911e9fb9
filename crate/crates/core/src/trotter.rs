//! First-order product formulas: bond-by-bond (four groups) and
//! triangle-by-triangle (two parity groups of exact 3-site exponentials),
//! plus the single-step Floquet operator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SpinHamiltonian;
use crate::lattice::{Lattice, StarPlaquette};
use crate::statevec::{GateOp, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    BondByBond,
    TriangleByTriangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Full,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrotterScheme {
    pub kind: SchemeKind,
    /// Each group is a list of site tuples; terms in a group are disjoint.
    pub groups: Vec<Vec<Vec<usize>>>,
    /// Apply the groups last-to-first.
    pub reverse: bool,
}

impl TrotterScheme {
    /// Even-parity triangles, then odd.
    pub fn triangles(lattice: &impl Lattice) -> Self {
        let group = |p: usize| {
            lattice
                .triangles()
                .iter()
                .filter(|t| t.parity == p)
                .map(|t| t.sites.to_vec())
                .collect()
        };
        Self {
            kind: SchemeKind::TriangleByTriangle,
            groups: vec![group(0), group(1)],
            reverse: false,
        }
    }

    /// Outer `(inner_k, apex_k)`, outer `(apex_k, inner_{k+1})`, then the
    /// inner ring bonds with even and odd `k`.
    pub fn bonds(star: &StarPlaquette) -> Self {
        let n = star.n();
        let pair = |(a, b): (usize, usize)| vec![a, b];
        Self {
            kind: SchemeKind::BondByBond,
            groups: vec![
                (0..n).map(|k| pair(star.outer_cw(k))).collect(),
                (0..n).map(|k| { let (i, a) = star.outer_ccw(k); vec![a, i] }).collect(),
                (0..n).step_by(2).map(|k| pair(star.ring(k))).collect(),
                (1..n).step_by(2).map(|k| pair(star.ring(k))).collect(),
            ],
            reverse: false,
        }
    }

    pub fn reversed(mut self) -> Self {
        self.reverse = !self.reverse;
        self
    }

    fn ordered_groups(&self) -> Vec<&Vec<Vec<usize>>> {
        let mut g: Vec<_> = self.groups.iter().collect();
        if self.reverse {
            g.reverse();
        }
        g
    }

    /// Gates for one step of length `dt`, field layer last.
    pub fn step_unitaries(&self, h: &SpinHamiltonian, dt: f64) -> Vec<GateOp> {
        let mut gates = Vec::new();
        for group in self.ordered_groups() {
            for term in group {
                gates.push(term_exponential(term, h.eps(), dt));
            }
        }
        if h.field() != 0.0 {
            for s in 0..h.n_sites() {
                gates.push(GateOp::rz(s, 0.5 * h.field() * dt));
            }
        }
        gates
    }

    pub fn cnot_count(&self, connectivity: Connectivity, n_triangles: usize) -> usize {
        cnot_count(self.kind, connectivity, n_triangles)
    }
}

/// `exp(−i·dt·ε·Σ σ·σ)` over all pairs in `sites` (a bond or a triangle).
pub fn term_exponential(sites: &[usize], eps: f64, dt: f64) -> GateOp {
    let k = sites.len();
    let d = 1usize << k;
    let mut m = DMatrix::<f64>::zeros(d, d);
    for a in 0..k {
        for b in (a + 1)..k {
            for i in 0..d {
                if (i >> a ^ i >> b) & 1 == 0 {
                    m[(i, i)] += eps;
                } else {
                    m[(i, i)] -= eps;
                    m[(i ^ (1 << a) ^ (1 << b), i)] += 2.0 * eps;
                }
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let v = eig.eigenvectors.map(C64::from);
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * dt)));
    let u = &v * phases * v.transpose();
    GateOp {
        label: if k == 3 { "Tri".into() } else { "Bond".into() },
        sites: sites.to_vec(),
        matrix: u,
    }
}

pub fn evolve_trotter(state: &StateVector, scheme: &TrotterScheme, h: &SpinHamiltonian, t: f64, m: usize) -> Result<StateVector> {
    if m == 0 {
        return Err(Error::Invalid("Trotter evolution needs at least one step".into()));
    }
    let gates = scheme.step_unitaries(h, t / m as f64);
    let mut s = state.clone();
    for _ in 0..m {
        s.apply_all(&gates);
    }
    Ok(s)
}

/// `⟨ψ0|F_{±t}|ψ0⟩` with `F_t` a single step of length `t`.
pub fn floquet_expectation(psi0: &StateVector, scheme: &TrotterScheme, h: &SpinHamiltonian, t: f64, direction: i32) -> C64 {
    let mut s = psi0.clone();
    s.apply_all(&scheme.step_unitaries(h, direction.signum() as f64 * t));
    psi0.inner(&s)
}

/// CNOTs per step: 8 or 12 per triangle, 9 or 15 per triangle bond-by-bond.
pub fn cnot_count(kind: SchemeKind, connectivity: Connectivity, n_triangles: usize) -> usize {
    let per = match (kind, connectivity) {
        (SchemeKind::TriangleByTriangle, Connectivity::Full) => 8,
        (SchemeKind::TriangleByTriangle, Connectivity::Linear) => 12,
        (SchemeKind::BondByBond, Connectivity::Full) => 9,
        (SchemeKind::BondByBond, Connectivity::Linear) => 15,
    };
    per * n_triangles
}

/// Time evolution `W(t)` as seen by the mirror estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Evolver {
    Exact,
    /// `round(t/dt)` steps of length `t/round(t/dt)`.
    Trotter { scheme: TrotterScheme, dt: f64 },
    /// One step of length `t`.
    Floquet { scheme: TrotterScheme },
}

impl Evolver {
    pub fn name(&self) -> &'static str {
        match self {
            Evolver::Exact => "exact",
            Evolver::Trotter { .. } => "trotter",
            Evolver::Floquet { .. } => "floquet",
        }
    }

    /// `None` for exact evolution, otherwise the gate sequence for `W(t)`.
    pub fn gates(&self, h: &SpinHamiltonian, t: f64) -> Option<Vec<GateOp>> {
        match self {
            Evolver::Exact => None,
            Evolver::Trotter { scheme, dt } => {
                let m = (t / dt).abs().round() as usize;
                if m == 0 {
                    return Some(Vec::new());
                }
                let step = scheme.step_unitaries(h, t / m as f64);
                Some((0..m).flat_map(|_| step.iter().cloned()).collect())
            }
            Evolver::Floquet { scheme } => Some(scheme.step_unitaries(h, t)),
        }
    }

    pub fn evolve(&self, h: &SpinHamiltonian, state: &StateVector, t: f64) -> Result<StateVector> {
        match self.gates(h, t) {
            None => h.evolve(state, t),
            Some(g) => {
                let mut s = state.clone();
                s.apply_all(&g);
                Ok(s)
            }
        }
    }
}
