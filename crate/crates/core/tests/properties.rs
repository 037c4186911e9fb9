//! Structural properties that hold for every configuration.

mod common;

use common::*;
use kagome_core::hamiltonian::SpinHamiltonian;
use kagome_core::krylov::{hankel, toeplitz, OverlapSeries};
use kagome_core::trotter::{cnot_count, evolve_trotter, Connectivity, SchemeKind, TrotterScheme};
use kagome_core::C64;
use proptest::prelude::*;

#[test]
fn sz_conserved_by_every_evolver() {
    for n in [4usize, 6] {
        let s = star(n);
        let h = SpinHamiltonian::new(&s, 0.7).unwrap();
        let mut psi = random_state(2 * n, 3);
        // keep three sectors only, with unequal weights
        let amps: Vec<C64> = psi
            .amps()
            .iter()
            .enumerate()
            .map(|(i, a)| if [n - 1, n, n + 2].contains(&(i.count_ones() as usize)) { *a } else { C64::from(0.0) })
            .collect();
        psi = kagome_core::statevec::StateVector::from_amplitudes_unchecked(amps);
        psi.normalize();
        let before = psi.sector_populations();
        let mut evs = evolvers(&s, 0.1);
        evs.push(kagome_core::trotter::Evolver::Trotter { scheme: TrotterScheme::bonds(&s), dt: 0.1 });
        for ev in evs {
            for t in [0.3, 2.0, -1.1] {
                let after = ev.evolve(&h, &psi, t).unwrap().sector_populations();
                for (a, b) in before.iter().zip(&after) {
                    assert!((a - b).abs() < 1e-10, "N={n} {} t={t}", ev.name());
                }
            }
        }
    }
}

#[test]
fn trotter_error_is_first_order() {
    let s = star(4);
    for field in [0.0, 0.8] {
        let h = SpinHamiltonian::new(&s, field).unwrap();
        for scheme in [TrotterScheme::triangles(&s), TrotterScheme::bonds(&s)] {
            let mut points = Vec::new();
            for m in [4usize, 8, 16, 32, 64] {
                let mut total = 0.0;
                for seed in 0..3 {
                    let psi = random_state(8, 40 + seed);
                    let exact = h.evolve(&psi, 1.0).unwrap();
                    let tr = evolve_trotter(&psi, &scheme, &h, 1.0, m).unwrap();
                    total += tr.amps().iter().zip(exact.amps()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                }
                points.push((m as f64, total / 3.0));
            }
            let slope = log_slope(&points);
            assert!((slope + 1.0).abs() < 0.1, "field {field} {:?}: slope {slope}", scheme.kind);
        }
    }
}

#[test]
fn cnot_counts_per_triangle() {
    use Connectivity::*;
    use SchemeKind::*;
    assert_eq!(cnot_count(TriangleByTriangle, Full, 1), 8);
    assert_eq!(cnot_count(BondByBond, Full, 1), 9);
    assert_eq!(cnot_count(TriangleByTriangle, Linear, 1), 12);
    assert_eq!(cnot_count(BondByBond, Linear, 1), 15);
    assert_eq!(cnot_count(TriangleByTriangle, Full, 6), 48);
}

fn series_strategy() -> impl Strategy<Value = OverlapSeries> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..30).prop_map(|v| {
        let mut values: Vec<C64> = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        values[0] = C64::from(1.0);
        OverlapSeries::new(0.1, values)
    })
}

proptest! {
    #[test]
    fn toeplitz_identities(series in series_strategy(), frac in 0.0f64..1.0) {
        let n = 1 + ((series.k_max() - 1) as f64 * frac) as usize;
        let (t, s) = toeplitz(&series, n).unwrap();
        for j in 0..n {
            for k in 0..n {
                let d = k as i64 - j as i64;
                prop_assert_eq!(s[(j, k)], series.get(d).unwrap());
                prop_assert_eq!(t[(j, k)], series.get(d + 1).unwrap());
                // S is Hermitian by construction
                prop_assert_eq!(s[(j, k)], s[(k, j)].conj());
            }
        }
    }

    #[test]
    fn hankel_identities(series in series_strategy(), frac in 0.0f64..1.0) {
        let n_steps = 1 + ((series.k_max() - 1) as f64 * frac) as usize;
        let d = n_steps.div_ceil(3);
        let (x, xp) = hankel(&series, n_steps, d).unwrap();
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                prop_assert_eq!(x[(i, j)], series.values[i + j]);
                prop_assert_eq!(xp[(i, j)], series.values[i + j + 1]);
            }
        }
    }
}
