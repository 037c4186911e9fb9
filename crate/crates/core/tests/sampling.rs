mod common;

use common::*;
use kagome_core::noise::postselect_f1;
use kagome_core::statevec::ShotStream;

#[test]
fn mirror_zero_fraction_within_five_sigma() {
    let s = star(4);
    let m = mirror(&s, dressed(&s, 0..4), kagome_core::trotter::Evolver::Exact);
    let state = &m.mirror_states(0.1).unwrap()[0];
    let p = state.probabilities()[0];
    let shots = 100_000u64;
    let counts = state.sample_bitstrings(shots, &ShotStream::new(11, 0));
    let f = *counts.get(&0).unwrap_or(&0) as f64 / shots as f64;
    let sigma = (p * (1.0 - p) / shots as f64).sqrt();
    assert!((f - p).abs() < 5.0 * sigma, "{f} vs {p} (σ = {sigma})");
}

#[test]
fn noiseless_f1_never_discarded() {
    for (n, cz) in [(4usize, vec![0, 1, 2, 3]), (6, vec![0, 2, 4]), (6, (0..6).collect())] {
        let s = star(n);
        let prep = dressed(&s, cz);
        let dimers = prep.dimers.clone();
        for ev in evolvers(&s, 0.1) {
            let m = mirror(&s, prep.clone(), ev);
            for k in [1, 7, 25] {
                let state = &m.mirror_states(k as f64 * 0.1).unwrap()[0];
                let counts = state.sample_bitstrings(100_000, &ShotStream::new(5, k));
                let (_, discarded) = postselect_f1(&counts, &dimers, 2 * n);
                assert_eq!(discarded, 0, "N={n} k={k} {}", m.evolver.name());
            }
        }
    }
}
