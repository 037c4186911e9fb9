//! Stochastic Pauli trajectories, pair-parity post-selection and R_z
//! twirling layers.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SpinHamiltonian;
use crate::statevec::{uniform, GateOp, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PauliChannel {
    #[default]
    Uniform,
    ZOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Per-qubit error probability after each multi-qubit layer.
    pub p_pauli: f64,
    pub channel: PauliChannel,
    pub enable_postselect: bool,
    pub enable_twirl: bool,
    pub twirl_angle: f64,
    /// Fraction of shots that carry the twirl layer.
    pub twirl_fraction: f64,
    /// Shots drawn from each simulated trajectory.
    pub shots_per_trajectory: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            p_pauli: 0.0,
            channel: PauliChannel::Uniform,
            enable_postselect: false,
            enable_twirl: false,
            twirl_angle: FRAC_PI_2,
            twirl_fraction: 0.5,
            shots_per_trajectory: 1,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_pauli) {
            return Err(Error::Invalid(format!("p_pauli = {} outside [0, 1]", self.p_pauli)));
        }
        if !(0.0..=1.0).contains(&self.twirl_fraction) {
            return Err(Error::Invalid(format!("twirl fraction {} outside [0, 1]", self.twirl_fraction)));
        }
        if self.shots_per_trajectory == 0 {
            return Err(Error::Invalid("shots_per_trajectory must be positive".into()));
        }
        Ok(())
    }

    pub fn is_noisy(&self) -> bool {
        self.p_pauli > 0.0
    }
}

/// Circuit element: a gate, or exact evolution `e^{−iHt}` on every qubit.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Gate(GateOp),
    Exact(f64),
}

/// Runs `ops`, drawing Pauli errors from `rng` after every multi-qubit
/// element. `rng = None` or `p = 0` gives the clean circuit.
pub fn noisy_apply(
    state: &StateVector,
    ops: &[Op],
    h: Option<&SpinHamiltonian>,
    spec: &NoiseSpec,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<StateVector> {
    let mut s = state.clone();
    let all: Vec<usize> = (0..s.n_qubits()).collect();
    for op in ops {
        let touched: &[usize] = match op {
            Op::Gate(g) => {
                s.apply(g);
                &g.sites
            }
            Op::Exact(t) => {
                let h = h.ok_or_else(|| Error::Invalid("exact layer without a Hamiltonian".into()))?;
                s = h.evolve(&s, *t)?;
                &all
            }
        };
        if touched.len() < 2 || spec.p_pauli == 0.0 {
            continue;
        }
        if let Some(r) = rng.as_deref_mut() {
            for &q in touched {
                if uniform(r) < spec.p_pauli {
                    let u = uniform(r);
                    let pauli = match spec.channel {
                        PauliChannel::ZOnly => GateOp::z(q),
                        PauliChannel::Uniform if u < 1.0 / 3.0 => GateOp::x(q),
                        PauliChannel::Uniform if u < 2.0 / 3.0 => GateOp::y(q),
                        PauliChannel::Uniform => GateOp::z(q),
                    };
                    s.apply(&pauli);
                }
            }
        }
    }
    Ok(s)
}

/// Whether a bitstring passes the pair-parity rule: the number of dimers
/// whose second bit is 1, plus the number of flipped free sites, is even.
pub fn passes_parity(bits: usize, dimers: &[(usize, usize)], free: &[usize]) -> bool {
    let pairs = dimers.iter().filter(|&&(_, b)| bits >> b & 1 == 1).count();
    let flipped = free.iter().filter(|&&s| bits >> s & 1 == 1).count();
    (pairs + flipped) % 2 == 0
}

/// Filters F1 outcomes by pair parity; returns the survivors and the number discarded.
pub fn postselect_f1(
    counts: &BTreeMap<usize, u64>,
    dimers: &[(usize, usize)],
    n_qubits: usize,
) -> (BTreeMap<usize, u64>, u64) {
    let free: Vec<usize> = (0..n_qubits)
        .filter(|s| !dimers.iter().any(|&(a, b)| a == *s || b == *s))
        .collect();
    let mut kept = BTreeMap::new();
    let mut discarded = 0;
    for (&bits, &c) in counts {
        if passes_parity(bits, dimers, &free) {
            kept.insert(bits, c);
        } else {
            discarded += c;
        }
    }
    (kept, discarded)
}

/// `R_z(θ) = diag(e^{iθ}, e^{−iθ})` on every qubit.
pub fn twirl_layer(n_qubits: usize, theta: f64) -> Vec<GateOp> {
    (0..n_qubits).map(|q| GateOp::rz(q, theta)).collect()
}

/// For a superposition of ψ0 with the all-up state differing in `l` flipped
/// spins, `θ` must be an integer multiple of `2π/l`.
pub fn check_twirl_angle(theta: f64, l: usize) -> Result<()> {
    let x = theta * l as f64 / (2.0 * PI);
    if (x - x.round()).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "twirl angle {theta} is not a multiple of 2π/{l}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_star;
    use crate::prep::{dressed_initial, free_outer_bonds, invert, sector_initial, Orientation};
    use crate::statevec::ShotStream;
    use num_complex::Complex64 as C64;

    #[test]
    fn zero_noise_is_clean() {
        let st = build_star(4).unwrap();
        let p = dressed_initial(&st, &free_outer_bonds(&st, Orientation::Cw, 0..4)).unwrap();
        let ops: Vec<Op> = p.gates.iter().cloned().map(Op::Gate).collect();
        let mut rng = ShotStream::new(1, 1).rng_at(0);
        let a = noisy_apply(&StateVector::zero(8), &ops, None, &NoiseSpec::default(), Some(&mut rng)).unwrap();
        assert_eq!(a, p.prepare());
    }

    #[test]
    fn certain_z_flips_plus_to_minus() {
        let mut plus = StateVector::zero(2);
        plus.apply(&GateOp::h(0));
        plus.apply(&GateOp::h(1));
        let spec = NoiseSpec {
            p_pauli: 1.0,
            channel: PauliChannel::ZOnly,
            ..NoiseSpec::default()
        };
        let id = GateOp::new("I", vec![0, 1], nalgebra::DMatrix::identity(4, 4)).unwrap();
        let mut rng = ShotStream::new(0, 0).rng_at(0);
        let out = noisy_apply(&plus, &[Op::Gate(id)], None, &spec, Some(&mut rng)).unwrap();
        let mut minus = StateVector::basis(2, 0b11);
        minus.apply(&GateOp::h(0));
        minus.apply(&GateOp::h(1));
        assert!((out.inner(&minus) - C64::from(1.0)).norm() < 1e-12);
    }

    #[test]
    fn parity_rule() {
        let dimers = [(0, 1), (2, 3), (4, 5), (6, 7)];
        let mut counts = BTreeMap::new();
        counts.insert(0b0000_0000, 5);
        counts.insert(0b0000_0010, 3); // pair (0,1) reads 01
        counts.insert(0b0000_1010, 2); // two pairs with b = 1
        counts.insert(0b0000_0001, 4); // a flipped only
        let (kept, d) = postselect_f1(&counts, &dimers, 8);
        assert_eq!(d, 3);
        assert_eq!(kept.values().sum::<u64>(), 11);
        // exactly half of all strings survive
        let n = (0..256).filter(|&b| passes_parity(b, &dimers, &[])).count();
        assert_eq!(n, 128);
    }

    #[test]
    fn unprepared_sector_state_passes() {
        let st = build_star(6).unwrap();
        for sz in 1..=5 {
            let p = sector_initial(&st, sz).unwrap();
            let mut s = p.prepare();
            s.apply_all(&invert(&p).gates);
            let c = s.sample_bitstrings(1000, &ShotStream::new(3, sz as u64));
            assert_eq!(postselect_f1(&c, &p.dimers, 12).1, 0);
        }
    }

    #[test]
    fn twirl_angles() {
        assert!(twirl_layer(3, 0.0).iter().all(|g| g.matrix == nalgebra::DMatrix::identity(2, 2)));
        assert!(check_twirl_angle(FRAC_PI_2, 8).is_ok());
        assert!(check_twirl_angle(FRAC_PI_2, 12).is_ok());
        assert!(check_twirl_angle(FRAC_PI_2, 6).is_err());
        assert!(check_twirl_angle(0.3, 8).is_err());
    }

    #[test]
    fn twirl_is_global_phase_in_one_sector() {
        let st = build_star(4).unwrap();
        let p = dressed_initial(&st, &free_outer_bonds(&st, Orientation::Cw, [1, 3])).unwrap();
        let mut s = p.prepare();
        let before = s.clone();
        s.apply_all(&twirl_layer(8, 0.77));
        assert!((s.inner(&before).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::default().validate().is_ok());
        let bad = NoiseSpec { p_pauli: 1.5, ..NoiseSpec::default() };
        assert!(bad.validate().is_err());
    }
}
