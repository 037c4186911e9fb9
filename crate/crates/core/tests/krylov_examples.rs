mod common;

use common::*;
use kagome_core::krylov::*;
use kagome_core::trotter::{Evolver, TrotterScheme};

#[test]
fn uvqpe_is_variational_on_exact_series() {
    for (n, cz, e0) in [(4usize, (0..4).collect::<Vec<_>>(), -12.0), (6, vec![0, 2, 4], -18.0)] {
        let s = star(n);
        let series = OverlapSeries::exact(&ham(&s), &dressed(&s, cz).prepare(), 0.1, 60);
        for delta in [1e-1, 1e-3, 1e-5] {
            for e in convergence(Algorithm::Uvqpe, &series, delta, 60, &SolverOptions::default()) {
                let e = e.unwrap();
                assert!(e.energy - e0 >= -1e-9, "N={n} δ={delta} step {}: {}", e.step, e.energy);
            }
        }
    }
}

#[test]
fn floquet_series_converges() {
    let s = star(4);
    let h = ham(&s);
    let ev = Evolver::Floquet { scheme: TrotterScheme::triangles(&s) };
    let series = OverlapSeries::from_evolver(&h, &ev, &dressed(&s, 0..4).prepare(), 0.1, 60).unwrap();
    let e = uvqpe_floquet(&series, 60, 1e-5).unwrap();
    assert!((e.energy + 12.0).abs() < 1e-3, "{}", e.energy);
}

#[test]
fn ritz_at_first_step_is_psi0() {
    let s = star(4);
    let h = ham(&s);
    let psi = dressed(&s, 0..4).prepare();
    let spectrum = h.diagonalize(Some(0.0)).unwrap();
    let series = OverlapSeries::exact(&h, &psi, 0.1, 4);
    let basis = krylov_basis(&h, &Evolver::Exact, &psi, 0.1, 4).unwrap();
    let e = uvqpe(&series, 1, 1e-6).unwrap();
    let got = ritz_overlaps(&e.ritz, &basis[..1], &spectrum, 5).unwrap();
    let direct = spectrum.overlaps(psi.amps());
    for o in got {
        assert!((o.overlap_sq - direct[o.eig_index]).abs() < 1e-10);
    }
}

#[test]
fn converged_run_has_ground_ritz_vector() {
    let s = star(4);
    let h = ham(&s);
    let psi = dressed(&s, 0..4).prepare();
    let spectrum = h.diagonalize(Some(0.0)).unwrap();
    let series = OverlapSeries::exact(&h, &psi, 0.1, 40);
    let basis = krylov_basis(&h, &Evolver::Exact, &psi, 0.1, 40).unwrap();
    let e = uvqpe(&series, 40, 1e-5).unwrap();
    assert!(ritz_ground_overlap(&e.ritz, &basis[..40], &spectrum).unwrap() > 0.999);
}
