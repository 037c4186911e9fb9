#![allow(dead_code)]

use kagome_core::hamiltonian::SpinHamiltonian;
use kagome_core::lattice::{build_star, StarPlaquette};
use kagome_core::mirror::MirrorSetup;
use kagome_core::prep::{dressed_initial, free_outer_bonds, Orientation, PrepCircuit};
use kagome_core::statevec::StateVector;
use kagome_core::trotter::{Evolver, TrotterScheme};
use kagome_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn star(n: usize) -> StarPlaquette {
    build_star(n).unwrap()
}

pub fn ham(s: &StarPlaquette) -> SpinHamiltonian {
    SpinHamiltonian::new(s, 0.0).unwrap()
}

/// Pinwheel with CZ on the free outer bond of each triangle in `ks`.
pub fn dressed(s: &StarPlaquette, ks: impl IntoIterator<Item = usize>) -> PrepCircuit {
    dressed_initial(s, &free_outer_bonds(s, Orientation::Cw, ks)).unwrap()
}

/// The three evolver kinds at series step `dt`.
pub fn evolvers(s: &StarPlaquette, dt: f64) -> Vec<Evolver> {
    vec![
        Evolver::Exact,
        Evolver::Trotter { scheme: TrotterScheme::triangles(s), dt },
        Evolver::Floquet { scheme: TrotterScheme::triangles(s) },
    ]
}

pub fn mirror(s: &StarPlaquette, prep: PrepCircuit, ev: Evolver) -> MirrorSetup {
    MirrorSetup::new(ham(s), prep, ev).unwrap()
}

pub fn random_state(n: usize, seed: u64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = StateVector::from_amplitudes_unchecked(
        (0..1usize << n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect(),
    );
    s.normalize();
    s
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
