//! State preparation circuits: singlet dimers, pinwheels, CZ-dressed
//! initial states, partial coverings for S^z sectors and the GHZ-based
//! reference superpositions used by the mirror estimator.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, StarPlaquette};
use crate::statevec::{GateOp, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Psi0,
    Psi0PlusRef,
    Psi0PlusIRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Cw,
    Ccw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    One,
    I,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrepCircuit {
    pub n_qubits: usize,
    pub role: Role,
    /// Pairs `(a, b)`; the singlet is `(|01⟩ − |10⟩)/√2` written as `|ab⟩`.
    pub dimers: Vec<(usize, usize)>,
    pub cz_bonds: Vec<(usize, usize)>,
    pub gates: Vec<GateOp>,
}

impl PrepCircuit {
    /// Applies the circuit to `|0…0⟩`.
    pub fn prepare(&self) -> StateVector {
        let mut s = StateVector::zero(self.n_qubits);
        s.apply_all(&self.gates);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.gates).expect("circuit serializes")
    }

    /// Sites not covered by any dimer.
    pub fn free_sites(&self) -> Vec<usize> {
        (0..self.n_qubits)
            .filter(|s| !self.dimers.iter().any(|&(a, b)| a == *s || b == *s))
            .collect()
    }

    /// Declared S^z of a `Psi0` circuit: every free site is up.
    pub fn sector(&self) -> f64 {
        self.free_sites().len() as f64 / 2.0
    }
}

/// X(a), H(a), CNOT(a→b), X(b): maps `|00⟩` to the singlet on `(a, b)`.
pub fn singlet_gates(a: usize, b: usize) -> Vec<GateOp> {
    vec![GateOp::x(a), GateOp::h(a), GateOp::cnot(a, b), GateOp::x(b)]
}

/// Dimer product state with optional CZ dressing.
pub fn dimer_product(
    n_qubits: usize,
    dimers: &[(usize, usize)],
    cz_bonds: &[(usize, usize)],
) -> Result<PrepCircuit> {
    let mut used = vec![false; n_qubits];
    for &(a, b) in dimers {
        for s in [a, b] {
            if s >= n_qubits {
                return Err(Error::Invalid(format!("dimer site {s} out of range")));
            }
            if std::mem::replace(&mut used[s], true) {
                return Err(Error::Invalid(format!("site {s} is in two dimers")));
            }
        }
    }
    for &(a, b) in cz_bonds {
        if a >= n_qubits || b >= n_qubits || a == b {
            return Err(Error::Invalid(format!("CZ bond ({a}, {b}) is not a valid site pair")));
        }
    }
    let mut gates: Vec<GateOp> = dimers.iter().flat_map(|&(a, b)| singlet_gates(a, b)).collect();
    gates.extend(cz_bonds.iter().map(|&(a, b)| GateOp::cz(a, b)));
    Ok(PrepCircuit {
        n_qubits,
        role: Role::Psi0,
        dimers: dimers.to_vec(),
        cz_bonds: cz_bonds.to_vec(),
        gates,
    })
}

pub fn pinwheel_dimers(star: &StarPlaquette, orientation: Orientation) -> Vec<(usize, usize)> {
    (0..star.n())
        .map(|k| match orientation {
            Orientation::Cw => star.outer_cw(k),
            Orientation::Ccw => star.outer_ccw(k),
        })
        .collect()
}

pub fn pinwheel(star: &StarPlaquette, orientation: Orientation) -> PrepCircuit {
    dimer_product(star.n_sites(), &pinwheel_dimers(star, orientation), &[]).expect("pinwheel is a valid covering")
}

/// Outer bonds left free by a pinwheel, for `k` in `ks`.
pub fn free_outer_bonds(star: &StarPlaquette, orientation: Orientation, ks: impl IntoIterator<Item = usize>) -> Vec<(usize, usize)> {
    ks.into_iter()
        .map(|k| match orientation {
            Orientation::Cw => {
                let (i, a) = star.outer_ccw(k);
                (a, i)
            }
            Orientation::Ccw => {
                let (i, a) = star.outer_cw(k);
                (a, i)
            }
        })
        .collect()
}

/// Clockwise pinwheel followed by CZ on each listed bond.
pub fn dressed_initial(star: &StarPlaquette, cz_bonds: &[(usize, usize)]) -> Result<PrepCircuit> {
    dressed_with(star, Orientation::Cw, cz_bonds)
}

pub fn dressed_with(star: &StarPlaquette, orientation: Orientation, cz_bonds: &[(usize, usize)]) -> Result<PrepCircuit> {
    let dimers = pinwheel_dimers(star, orientation);
    for &(a, b) in cz_bonds {
        if a >= star.n_sites() || b >= star.n_sites() {
            return Err(Error::Invalid(format!("CZ bond ({a}, {b}) touches a non-existent site")));
        }
        if !star.has_bond(a, b) {
            return Err(Error::Invalid(format!("({a}, {b}) is not a bond of the star")));
        }
        if dimers.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b)) {
            return Err(Error::Invalid(format!("({a}, {b}) already carries a dimer")));
        }
    }
    dimer_product(star.n_sites(), &dimers, cz_bonds)
}

/// Dimer layout for the lowest state of sector `sz` on the 8- and 12-site stars.
pub fn sector_dimers(star: &StarPlaquette, sz: usize) -> Result<Vec<(usize, usize)>> {
    let n = star.n_sites();
    if sz == 0 || sz > n / 2 {
        return Err(Error::Invalid(format!("sector Sz={sz} needs 0 < Sz <= {}", n / 2)));
    }
    let table: &[&[(usize, usize)]] = match star.n() {
        4 => &[
            &[(0, 1), (2, 5), (3, 7)],
            &[(0, 1), (2, 3)],
            &[(0, 1)],
            &[],
        ],
        6 => &[
            &[(0, 1), (7, 2), (8, 3), (4, 10), (5, 11)],
            &[(1, 7), (8, 3), (4, 10), (11, 0)],
            &[(0, 1), (2, 3), (4, 5)],
            &[(0, 1), (3, 4)],
            &[(0, 1)],
            &[],
        ],
        other => {
            return Err(Error::Invalid(format!(
                "sector states are tabulated for 4 and 6 triangles, not {other}"
            )))
        }
    };
    Ok(table[sz - 1].to_vec())
}

/// Partial dimer covering with every free spin up; total S^z = `sz`.
pub fn sector_initial(star: &StarPlaquette, sz: usize) -> Result<PrepCircuit> {
    let dimers = sector_dimers(star, sz)?;
    dimer_product(star.n_sites(), &dimers, &[])
}

/// Two-qubit mapper `|00⟩ → |00⟩`, `|11⟩ → singlet`, written in the basis
/// `|q1 q2⟩` with `q1` the most significant bit.
pub fn mapper_matrix() -> DMatrix<C64> {
    let r = FRAC_1_SQRT_2;
    let rows = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, r, 0.0, r],
        [0.0, r, 0.0, -r],
        [0.0, 0.0, 1.0, 0.0],
    ];
    DMatrix::from_fn(4, 4, |i, j| C64::from(rows[i][j]))
}

/// Mapper on dimer `(a, b)`: `a` plays the most significant qubit.
pub fn mapper_gate(a: usize, b: usize) -> GateOp {
    GateOp::new("Map", vec![b, a], mapper_matrix()).expect("mapper is unitary")
}

/// Prepares `(phase·|ψ0⟩ + |all-up⟩)/√2`, up to a global phase.
pub fn reference_superposition(psi0: &PrepCircuit, phase: Phase) -> Result<PrepCircuit> {
    if psi0.role != Role::Psi0 {
        return Err(Error::Invalid("reference superposition needs a psi0 circuit".into()));
    }
    if psi0.dimers.is_empty() {
        return Err(Error::Invalid(
            "ψ0 has no dimers, so it is the all-up state itself and not orthogonal to it".into(),
        ));
    }
    let chain: Vec<usize> = psi0.dimers.iter().flat_map(|&(a, b)| [a, b]).collect();
    let mid = chain.len() / 2;
    let mut gates = vec![GateOp::h(chain[mid])];
    for j in mid..chain.len() - 1 {
        gates.push(GateOp::cnot(chain[j], chain[j + 1]));
    }
    for j in (1..=mid).rev() {
        gates.push(GateOp::cnot(chain[j], chain[j - 1]));
    }
    if phase == Phase::I {
        // diag(e^{−iπ/4}, e^{iπ/4}) = e^{−iπ/4}·diag(1, i)
        let mut g = GateOp::rz(chain[mid], -FRAC_PI_4);
        g.label = "Rz(-pi/2)".into();
        gates.push(g);
    }
    gates.extend(psi0.dimers.iter().map(|&(a, b)| mapper_gate(a, b)));
    gates.extend(psi0.cz_bonds.iter().map(|&(a, b)| GateOp::cz(a, b)));
    Ok(PrepCircuit {
        role: match phase {
            Phase::One => Role::Psi0PlusRef,
            Phase::I => Role::Psi0PlusIRef,
        },
        gates,
        ..psi0.clone()
    })
}

/// Reversed gate list with adjoint matrices.
pub fn invert(prep: &PrepCircuit) -> PrepCircuit {
    PrepCircuit {
        gates: prep.gates.iter().rev().map(GateOp::dagger).collect(),
        ..prep.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{subspace_overlap, SpinHamiltonian};
    use crate::lattice::build_star;

    fn star(n: usize) -> StarPlaquette {
        build_star(n).unwrap()
    }

    fn energy(h: &SpinHamiltonian, s: &StateVector) -> C64 {
        let hs = h.apply(s.amps());
        s.amps().iter().zip(&hs).map(|(a, b)| a.conj() * b).sum()
    }

    #[test]
    fn singlet_template() {
        let mut s = StateVector::zero(2);
        s.apply_all(&singlet_gates(1, 0));
        // a = site 1 up, b = site 0 down minus the swap
        let r = FRAC_1_SQRT_2;
        assert!((s.amps()[0b01] - C64::from(r)).norm() < 1e-15);
        assert!((s.amps()[0b10] - C64::from(-r)).norm() < 1e-15);
    }

    #[test]
    fn mapper_sends_11_to_template_singlet() {
        for (a, b) in [(0, 1), (1, 0)] {
            let mut want = StateVector::zero(2);
            want.apply_all(&singlet_gates(a, b));
            let mut got = StateVector::basis(2, 0b11);
            got.apply(&mapper_gate(a, b));
            assert!((got.inner(&want) - C64::from(1.0)).norm() < 1e-15);
            let mut zero = StateVector::zero(2);
            zero.apply(&mapper_gate(a, b));
            assert_eq!(zero, StateVector::zero(2));
        }
    }

    #[test]
    fn pinwheels_are_ground_states() {
        for (n, e0) in [(4, -12.0), (6, -18.0)] {
            let st = star(n);
            let h = SpinHamiltonian::new(&st, 0.0).unwrap();
            for o in [Orientation::Cw, Orientation::Ccw] {
                let s = pinwheel(&st, o).prepare();
                assert!((energy(&h, &s) - C64::from(e0)).norm() < 1e-12);
                let hs = h.apply(s.amps());
                let res: f64 = hs.iter().zip(s.amps()).map(|(a, b)| (a - b * e0).norm_sqr()).sum();
                assert!(res.sqrt() < 1e-9);
            }
        }
    }

    #[test]
    fn pinwheels_independent_not_orthogonal() {
        let st = star(4);
        let cw = pinwheel(&st, Orientation::Cw).prepare();
        let ccw = pinwheel(&st, Orientation::Ccw).prepare();
        let o = cw.inner(&ccw).norm();
        assert!(o > 0.01 && o < 0.99, "{o}");
    }

    #[test]
    fn sector_states_have_declared_sz() {
        for n in [4, 6] {
            let st = star(n);
            for sz in 1..=st.n_sites() / 2 {
                let p = sector_initial(&st, sz).unwrap();
                let (m, v) = p.prepare().sz_moments();
                assert!((m - sz as f64).abs() < 1e-10);
                assert!(v < 1e-10);
                assert_eq!(p.sector(), sz as f64);
                for &(a, b) in &p.dimers {
                    assert!(st.has_bond(a, b));
                }
            }
            assert!(sector_initial(&st, 0).is_err());
            assert!(sector_initial(&st, st.n_sites() / 2 + 1).is_err());
        }
    }

    #[test]
    fn top_sector_is_polarized() {
        let st = star(4);
        let h = SpinHamiltonian::new(&st, 0.0).unwrap();
        let spectrum = h.diagonalize(Some(4.0)).unwrap();
        let s = sector_initial(&st, 4).unwrap().prepare();
        assert!((subspace_overlap(&s, &spectrum).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dressed_validation() {
        let st = star(4);
        assert!(dressed_initial(&st, &[(0, 99)]).is_err());
        assert!(dressed_initial(&st, &[(0, 4)]).is_err());
        assert!(dressed_initial(&st, &[(0, 2)]).is_err());
        let all = free_outer_bonds(&st, Orientation::Cw, 0..4);
        let p = dressed_initial(&st, &all).unwrap();
        let (m, v) = p.prepare().sz_moments();
        assert!(m.abs() < 1e-12 && v < 1e-12);
    }

    #[test]
    fn superposition_matches_direct() {
        let st = star(4);
        let cz = free_outer_bonds(&st, Orientation::Cw, [0, 2]);
        let p = dressed_initial(&st, &cz).unwrap();
        let psi = p.prepare();
        let up = StateVector::zero(8);
        for (phase, c) in [(Phase::One, C64::from(1.0)), (Phase::I, C64::i())] {
            let out = reference_superposition(&p, phase).unwrap().prepare();
            let direct: Vec<C64> = psi
                .amps()
                .iter()
                .zip(up.amps())
                .map(|(a, b)| (c * a + b) * FRAC_1_SQRT_2)
                .collect();
            let direct = StateVector::from_amplitudes(direct).unwrap();
            assert!((out.inner(&direct).norm() - 1.0).abs() < 1e-10);
            assert!((up.inner(&out).norm() - FRAC_1_SQRT_2).abs() < 1e-10);
            // relative phase of ψ0 against all-up
            let rel = psi.inner(&out) / up.inner(&out);
            assert!((rel - c).norm() < 1e-10);
        }
    }

    #[test]
    fn superposition_of_sector_state() {
        let st = star(6);
        let p = sector_initial(&st, 2).unwrap();
        let out = reference_superposition(&p, Phase::One).unwrap().prepare();
        let psi = p.prepare();
        assert!((psi.inner(&out) - C64::from(FRAC_1_SQRT_2)).norm() < 1e-10);
        assert!((out.amps()[0] - C64::from(FRAC_1_SQRT_2)).norm() < 1e-10);
        let top = sector_initial(&st, 6).unwrap();
        assert!(reference_superposition(&top, Phase::One).is_err());
    }

    #[test]
    fn inversion() {
        let st = star(4);
        let p = dressed_initial(&st, &free_outer_bonds(&st, Orientation::Cw, 0..4)).unwrap();
        let mut s = p.prepare();
        s.apply_all(&invert(&p).gates);
        assert!((s.amps()[0] - C64::from(1.0)).norm() < 1e-10);
        assert_eq!(invert(&invert(&p)).gates.len(), p.gates.len());
        for (a, b) in invert(&invert(&p)).gates.iter().zip(&p.gates) {
            assert!((&a.matrix - &b.matrix).norm() < 1e-15);
        }
        let r = reference_superposition(&p, Phase::I).unwrap();
        let mut s = r.prepare();
        s.apply_all(&invert(&r).gates);
        assert!((s.amps()[0].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn circuit_json_lists_gates() {
        let v: serde_json::Value = serde_json::from_str(&pinwheel(&star(4), Orientation::Cw).to_json()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 16);
    }
}
