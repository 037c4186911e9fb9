//! Dense statevector engine.
//!
//! Gate matrices act on their target tuple with local index
//! `Σ_j bit(sites[j]) << j`, so the first listed site is the least
//! significant bit of the matrix index.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::hamiltonian::SpinHamiltonian;

pub const UNITARY_TOL: f64 = 1e-10;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub label: String,
    pub sites: Vec<usize>,
    pub matrix: DMatrix<C64>,
}

impl GateOp {
    pub fn new(label: impl Into<String>, sites: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        let k = sites.len();
        if k == 0 || matrix.nrows() != 1 << k || matrix.ncols() != 1 << k {
            return Err(Error::Gate(format!(
                "{}x{} matrix on {k} sites",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        for i in 0..k {
            if sites[i + 1..].contains(&sites[i]) {
                return Err(Error::Gate(format!("repeated site {}", sites[i])));
            }
        }
        let g = Self {
            label: label.into(),
            sites,
            matrix,
        };
        let dev = g.unitarity_error();
        if dev > UNITARY_TOL {
            return Err(Error::Gate(format!("{} is not unitary (deviation {dev:e})", g.label)));
        }
        Ok(g)
    }

    pub fn unitarity_error(&self) -> f64 {
        let d = self.matrix.nrows();
        (self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(d, d)).norm()
    }

    pub fn dagger(&self) -> Self {
        Self {
            label: format!("{}†", self.label),
            sites: self.sites.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    fn fixed(label: &str, sites: Vec<usize>, rows: &[&[C64]]) -> Self {
        let d = rows.len();
        Self {
            label: label.to_string(),
            sites,
            matrix: DMatrix::from_fn(d, d, |r, c| rows[r][c]),
        }
    }

    pub fn x(s: usize) -> Self {
        Self::fixed("X", vec![s], &[&[ZERO, ONE], &[ONE, ZERO]])
    }

    pub fn z(s: usize) -> Self {
        Self::fixed("Z", vec![s], &[&[ONE, ZERO], &[ZERO, -ONE]])
    }

    pub fn y(s: usize) -> Self {
        let i = C64::i();
        Self::fixed("Y", vec![s], &[&[ZERO, -i], &[i, ZERO]])
    }

    pub fn h(s: usize) -> Self {
        let r = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        Self::fixed("H", vec![s], &[&[r, r], &[r, -r]])
    }

    /// `diag(e^{iθ}, e^{−iθ})`.
    pub fn rz(s: usize, theta: f64) -> Self {
        Self::fixed(
            "Rz",
            vec![s],
            &[
                &[C64::from_polar(1.0, theta), ZERO],
                &[ZERO, C64::from_polar(1.0, -theta)],
            ],
        )
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        // local index = b_control + 2 b_target
        Self::fixed(
            "CNOT",
            vec![control, target],
            &[
                &[ONE, ZERO, ZERO, ZERO],
                &[ZERO, ZERO, ZERO, ONE],
                &[ZERO, ZERO, ONE, ZERO],
                &[ZERO, ONE, ZERO, ZERO],
            ],
        )
    }

    pub fn cz(a: usize, b: usize) -> Self {
        Self::fixed(
            "CZ",
            vec![a, b],
            &[
                &[ONE, ZERO, ZERO, ZERO],
                &[ZERO, ONE, ZERO, ZERO],
                &[ZERO, ZERO, ONE, ZERO],
                &[ZERO, ZERO, ZERO, -ONE],
            ],
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("gate serializes")
    }
}

impl Serialize for GateOp {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.matrix.nrows();
        let rows: Vec<Vec<[f64; 2]>> = (0..d)
            .map(|r| (0..d).map(|c| [self.matrix[(r, c)].re, self.matrix[(r, c)].im]).collect())
            .collect();
        let mut st = ser.serialize_struct("GateOp", 3)?;
        st.serialize_field("label", &self.label)?;
        st.serialize_field("sites", &self.sites)?;
        st.serialize_field("matrix", &rows)?;
        st.end()
    }
}

impl StateVector {
    /// `|0…0⟩`, the all-up state.
    pub fn zero(n: usize) -> Self {
        Self::basis(n, 0)
    }

    pub fn basis(n: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n];
        amps[index] = ONE;
        Self { n, amps }
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let s = Self::from_amplitudes_unchecked(amps);
        let norm = s.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(s)
    }

    pub fn from_amplitudes_unchecked(amps: Vec<C64>) -> Self {
        assert!(amps.len().is_power_of_two(), "length must be a power of two");
        Self {
            n: amps.len().trailing_zeros() as usize,
            amps,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amps(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        self.amps.iter_mut().for_each(|a| *a /= n);
    }

    pub fn scale(&mut self, c: C64) {
        self.amps.iter_mut().for_each(|a| *a *= c);
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        inner(self, other)
    }

    /// Checked gate application.
    pub fn apply_gate(&mut self, gate: &GateOp) -> Result<()> {
        if let Some(&s) = gate.sites.iter().find(|&&s| s >= self.n) {
            return Err(Error::Gate(format!("site {s} out of range for {} qubits", self.n)));
        }
        let dev = gate.unitarity_error();
        if dev > UNITARY_TOL {
            return Err(Error::Gate(format!("{} is not unitary (deviation {dev:e})", gate.label)));
        }
        self.apply(gate);
        Ok(())
    }

    /// Gate application without validation.
    pub fn apply(&mut self, gate: &GateOp) {
        let k = gate.sites.len();
        let d = 1usize << k;
        let offs: Vec<usize> = (0..d)
            .map(|l| {
                (0..k)
                    .filter(|&j| l >> j & 1 == 1)
                    .map(|j| 1 << gate.sites[j])
                    .sum()
            })
            .collect();
        let mask: usize = gate.sites.iter().map(|&s| 1 << s).sum();
        let m = &gate.matrix;
        let mut buf = vec![ZERO; d];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (l, &o) in offs.iter().enumerate() {
                buf[l] = self.amps[base | o];
            }
            for (r, &o) in offs.iter().enumerate() {
                let mut acc = ZERO;
                for (c, &b) in buf.iter().enumerate() {
                    acc += m[(r, c)] * b;
                }
                self.amps[base | o] = acc;
            }
        }
    }

    pub fn apply_all(&mut self, gates: &[GateOp]) {
        for g in gates {
            self.apply(g);
        }
    }

    pub fn evolve_exact(&self, h: &SpinHamiltonian, t: f64) -> Result<Self> {
        h.evolve(self, t)
    }

    /// `(⟨S^z_tot⟩, Var S^z_tot)`.
    pub fn sz_moments(&self) -> (f64, f64) {
        let half = self.n as f64 / 2.0;
        let (mut m1, mut m2) = (0.0, 0.0);
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            let sz = half - i.count_ones() as f64;
            m1 += p * sz;
            m2 += p * sz * sz;
        }
        (m1, m2 - m1 * m1)
    }

    /// Probability mass in each `n_down` sector.
    pub fn sector_populations(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        for (i, a) in self.amps.iter().enumerate() {
            out[i.count_ones() as usize] += a.norm_sqr();
        }
        out
    }

    /// Inverse-CDF sampling of `shots` bitstrings, returned as counts.
    pub fn sample_bitstrings(&self, shots: u64, stream: &ShotStream) -> BTreeMap<usize, u64> {
        let probs = self.probabilities();
        sample_from(&probs, shots, stream, 0)
    }
}

/// `⟨a|b⟩`.
pub fn inner(a: &StateVector, b: &StateVector) -> C64 {
    assert_eq!(a.dim(), b.dim(), "inner product of mismatched states");
    a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum()
}

/// Samples indices from `probs` for shots `first..first+shots` of a stream.
pub fn sample_from(probs: &[f64], shots: u64, stream: &ShotStream, first: u64) -> BTreeMap<usize, u64> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = stream.rng_at(first);
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let u = uniform(&mut rng) * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
        *counts.entry(idx).or_insert(0) += 1;
    }
    counts
}

/// Counter-based random stream: shot `k` of a circuit always reads the same
/// two 32-bit words, whatever order circuits are run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotStream {
    pub seed: u64,
    pub stream: u64,
}

impl ShotStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream keyed by a tuple of identifiers.
    pub fn keyed(seed: u64, ids: &[u64]) -> Self {
        let mut h = 0x243f_6a88_85a3_08d3u64;
        for &id in ids {
            h = splitmix(h ^ id);
        }
        Self::new(seed, h)
    }

    pub fn rng_at(&self, shot: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(2 * shot as u128);
        rng
    }

    pub fn uniform(&self, shot: u64) -> f64 {
        uniform(&mut self.rng_at(shot))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_star;
    use proptest::prelude::*;

    fn close(a: &StateVector, b: &StateVector, tol: f64) -> bool {
        a.amps().iter().zip(b.amps()).all(|(x, y)| (x - y).norm() < tol)
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        let s = ShotStream::new(seed, 99);
        let amps = (0..1 << n)
            .map(|k| C64::new(s.uniform(2 * k) - 0.5, s.uniform(2 * k + 1) - 0.5))
            .collect();
        let mut v = StateVector::from_amplitudes_unchecked(amps);
        v.normalize();
        v
    }

    #[test]
    fn x_on_site_zero() {
        let mut s = StateVector::zero(3);
        s.apply_gate(&GateOp::x(0)).unwrap();
        assert_eq!(s, StateVector::basis(3, 0b001));
    }

    #[test]
    fn cz_on_bell() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut s = StateVector::from_amplitudes(vec![r.into(), ZERO, ZERO, r.into()]).unwrap();
        s.apply_gate(&GateOp::cz(0, 1)).unwrap();
        let want = StateVector::from_amplitudes(vec![r.into(), ZERO, ZERO, (-r).into()]).unwrap();
        assert!(close(&s, &want, 1e-15));
    }

    #[test]
    fn hadamard_twice() {
        let orig = random_state(3, 1);
        let mut s = orig.clone();
        s.apply_gate(&GateOp::h(0)).unwrap();
        s.apply_gate(&GateOp::h(0)).unwrap();
        assert!(close(&s, &orig, 1e-12));
    }

    #[test]
    fn cnot_orientation() {
        // control on site 2, target on site 0
        let mut s = StateVector::basis(3, 0b100);
        s.apply(&GateOp::cnot(2, 0));
        assert_eq!(s, StateVector::basis(3, 0b101));
        let mut s = StateVector::basis(3, 0b001);
        s.apply(&GateOp::cnot(2, 0));
        assert_eq!(s, StateVector::basis(3, 0b001));
    }

    #[test]
    fn rejects_bad_gates() {
        let m = DMatrix::from_element(2, 2, C64::from(1.0));
        assert!(matches!(GateOp::new("bad", vec![0], m), Err(Error::Gate(_))));
        let id = DMatrix::<C64>::identity(4, 4);
        assert!(GateOp::new("dup", vec![1, 1], id.clone()).is_err());
        let mut s = StateVector::zero(2);
        let far = GateOp::new("far", vec![0, 5], id).unwrap();
        assert!(s.apply_gate(&far).is_err());
    }

    #[test]
    fn gate_json() {
        let v: serde_json::Value = serde_json::from_str(&GateOp::cz(0, 3).to_json()).unwrap();
        assert_eq!(v["label"], "CZ");
        assert_eq!(v["sites"][1], 3);
        assert_eq!(v["matrix"][3][3][0], -1.0);
    }

    #[test]
    fn inner_products() {
        let s = random_state(4, 3);
        assert!((s.inner(&s) - ONE).norm() < 1e-12);
        assert_eq!(StateVector::basis(2, 1).inner(&StateVector::basis(2, 2)), ZERO);
    }

    #[test]
    fn exact_evolution() {
        let h = SpinHamiltonian::new(&build_star(4).unwrap(), 0.4).unwrap();
        let s = random_state(8, 5);
        assert!(close(&s.evolve_exact(&h, 0.0).unwrap(), &s, 1e-12));

        let spectrum = h.diagonalize(None).unwrap();
        let v = StateVector::from_amplitudes(spectrum.eigenvector(17).into_iter().map(C64::from).collect()).unwrap();
        let e = spectrum.eigenvalues[17];
        let out = v.evolve_exact(&h, 1.3).unwrap();
        assert!((v.inner(&out) - C64::from_polar(1.0, -e * 1.3)).norm() < 1e-10);

        let a = s.evolve_exact(&h, 0.7).unwrap().evolve_exact(&h, 0.45).unwrap();
        let b = s.evolve_exact(&h, 1.15).unwrap();
        assert!(close(&a, &b, 1e-9));
        assert!((b.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sampling_basis_state() {
        let c = StateVector::zero(3).sample_bitstrings(100, &ShotStream::new(1, 2));
        assert_eq!(c.get(&0), Some(&100));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn sampling_plus_state() {
        let mut s = StateVector::zero(1);
        s.apply(&GateOp::h(0));
        let c = s.sample_bitstrings(1_000_000, &ShotStream::new(7, 0));
        let f = c[&0] as f64 / 1e6;
        assert!((f - 0.5).abs() < 0.002, "{f}");
    }

    #[test]
    fn sampling_is_order_independent() {
        let s = random_state(4, 11);
        let st = ShotStream::keyed(3, &[1, 2, 3]);
        let all = sample_from(&s.probabilities(), 200, &st, 0);
        let mut parts = sample_from(&s.probabilities(), 120, &st, 80);
        for (k, v) in sample_from(&s.probabilities(), 80, &st, 0) {
            *parts.entry(k).or_insert(0) += v;
        }
        assert_eq!(all, parts);
    }

    #[test]
    fn sampling_tv_distance() {
        for seed in 0..3 {
            let s = random_state(6, 100 + seed);
            let shots = 200_000u64;
            let c = s.sample_bitstrings(shots, &ShotStream::new(seed, 5));
            let tv: f64 = s
                .probabilities()
                .iter()
                .enumerate()
                .map(|(i, p)| (p - *c.get(&i).unwrap_or(&0) as f64 / shots as f64).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 4.0 * (64.0 / shots as f64).sqrt(), "{tv}");
        }
    }

    fn gate_strategy(n: usize) -> impl Strategy<Value = GateOp> {
        let single = (0..n, 0..3usize, -3.0..3.0f64).prop_map(|(s, k, th)| match k {
            0 => GateOp::h(s),
            1 => GateOp::rz(s, th),
            _ => GateOp::y(s),
        });
        let pair = (0..n, 0..n, any::<bool>())
            .prop_filter("distinct", |(a, b, _)| a != b)
            .prop_map(|(a, b, z)| if z { GateOp::cz(a, b) } else { GateOp::cnot(a, b) });
        prop_oneof![single, pair]
    }

    proptest! {
        #[test]
        fn norm_preserved(gates in prop::collection::vec(gate_strategy(5), 1..40), seed in 0u64..1000) {
            let mut s = random_state(5, seed);
            for g in &gates {
                s.apply_gate(g).unwrap();
            }
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn dagger_undoes(gates in prop::collection::vec(gate_strategy(4), 1..20)) {
            let orig = random_state(4, 42);
            let mut s = orig.clone();
            s.apply_all(&gates);
            for g in gates.iter().rev() {
                s.apply(&g.dagger());
            }
            prop_assert!(close(&s, &orig, 1e-12));
        }
    }
}
