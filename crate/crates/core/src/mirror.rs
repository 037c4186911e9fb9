//! Mirror-circuit overlap estimation.
//!
//! Three circuits `U_a† W(t) U_b |0…0⟩` are sampled and their all-zero
//! frequencies `F1, F2, F3` combined into `O(t) = ⟨ψ0|W(t)|ψ0⟩`:
//!
//! | circuit | `U_b` | `U_a` |
//! |---------|-------|-------|
//! | F1 | `U0` | `U0` |
//! | F2 | `U_R` | `U_R` |
//! | F3 | `U_R` | `U_Ri` |

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SpinHamiltonian;
use crate::krylov::{OverlapSeries, Provenance};
use crate::noise::{check_twirl_angle, noisy_apply, postselect_f1, twirl_layer, NoiseSpec, Op};
use crate::prep::{invert, reference_superposition, Phase, PrepCircuit};
use crate::statevec::{sample_from, ShotStream, StateVector};
use crate::trotter::Evolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeSource {
    #[default]
    F1Sqrt,
    Interference,
}

impl MagnitudeSource {
    pub fn name(&self) -> &'static str {
        match self {
            MagnitudeSource::F1Sqrt => "f1_sqrt",
            MagnitudeSource::Interference => "interference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotPlan {
    pub total: u64,
    pub fractions: [f64; 3],
}

impl Default for ShotPlan {
    fn default() -> Self {
        Self {
            total: 1000,
            fractions: [0.4, 0.3, 0.3],
        }
    }
}

impl ShotPlan {
    pub fn new(total: u64, fractions: [f64; 3]) -> Result<Self> {
        let p = Self { total, fractions };
        p.validate()?;
        Ok(p)
    }

    pub fn equal(total: u64) -> Self {
        Self {
            total,
            fractions: [1.0 / 3.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|&f| f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("shot fractions {:?} must be nonnegative and sum to 1", self.fractions)));
        }
        if self.total == 0 {
            return Err(Error::Invalid("shot plan needs at least one shot".into()));
        }
        Ok(())
    }

    /// Largest-remainder rounding; the parts always sum to `total`.
    pub fn allocate(&self) -> [u64; 3] {
        split(self.total, &self.fractions).try_into().expect("three parts")
    }
}

/// Splits `total` by `weights` with largest-remainder rounding.
pub fn split(total: u64, weights: &[f64]) -> Vec<u64> {
    let raw: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut out: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let mut rest = total - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    for i in order.into_iter().cycle() {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapEstimate {
    pub value: C64,
    pub source: MagnitudeSource,
    pub f: [f64; 3],
    pub shots: [u64; 3],
    pub discarded: [u64; 3],
    /// Reconstructed modulus was zero, so the phase was set to 0.
    pub degenerate: bool,
    /// No F2/F3 shots; `value` carries the magnitude only.
    pub phase_available: bool,
}

/// `O = [2F2 + 2iF3 − (F1+1)(1+i)/2]·e^{−iE_R t}`, optionally with modulus `√F1`.
/// Returns the value and whether the phase was degenerate.
pub fn reconstruct(f1: f64, f2: f64, f3: f64, e_r: f64, t: f64, source: MagnitudeSource) -> (C64, bool) {
    let z = C64::new(2.0 * f2 - 0.5 * (f1 + 1.0), 2.0 * f3 - 0.5 * (f1 + 1.0)) * C64::from_polar(1.0, -e_r * t);
    let degenerate = z.norm() < 1e-14;
    let value = match source {
        MagnitudeSource::Interference => z,
        MagnitudeSource::F1Sqrt => {
            let phase = if degenerate { 0.0 } else { z.arg() };
            C64::from_polar(f1.clamp(0.0, 1.0).sqrt(), phase)
        }
    };
    (value, degenerate)
}

/// ψ0 preparation, its two reference superpositions and the evolver.
#[derive(Debug, Clone)]
pub struct MirrorSetup {
    pub ham: SpinHamiltonian,
    pub evolver: Evolver,
    pub psi0: PrepCircuit,
    pub u_r: PrepCircuit,
    pub u_ri: PrepCircuit,
    pub e_r: f64,
}

impl MirrorSetup {
    pub fn new(ham: SpinHamiltonian, psi0: PrepCircuit, evolver: Evolver) -> Result<Self> {
        if psi0.n_qubits != ham.n_sites() {
            return Err(Error::Dimension {
                expected: ham.n_sites(),
                got: psi0.n_qubits,
            });
        }
        let u_r = reference_superposition(&psi0, Phase::One)?;
        let u_ri = reference_superposition(&psi0, Phase::I)?;
        Ok(Self {
            e_r: ham.reference_energy(),
            ham,
            evolver,
            psi0,
            u_r,
            u_ri,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.ham.n_sites()
    }

    /// Number of spins flipped between ψ0 and the all-up state.
    pub fn flipped(&self) -> usize {
        2 * self.psi0.dimers.len()
    }

    fn pair(&self, which: usize) -> (&PrepCircuit, &PrepCircuit) {
        match which {
            0 => (&self.psi0, &self.psi0),
            1 => (&self.u_r, &self.u_r),
            _ => (&self.u_r, &self.u_ri),
        }
    }

    /// Gate list for circuit `which` (0, 1, 2 for F1, F2, F3).
    pub fn circuit(&self, which: usize, t: f64, twirl: Option<f64>) -> Vec<Op> {
        let (right, left) = self.pair(which);
        let mut ops: Vec<Op> = right.gates.iter().cloned().map(Op::Gate).collect();
        match self.evolver.gates(&self.ham, t) {
            None => ops.push(Op::Exact(t)),
            Some(g) => ops.extend(g.into_iter().map(Op::Gate)),
        }
        if let Some(theta) = twirl {
            ops.extend(twirl_layer(self.n_qubits(), theta).into_iter().map(Op::Gate));
        }
        ops.extend(invert(left).gates.into_iter().map(Op::Gate));
        ops
    }

    fn run(&self, which: usize, t: f64, twirl: Option<f64>) -> Result<StateVector> {
        let (right, left) = self.pair(which);
        let mut s = right.prepare();
        s = self.evolver.evolve(&self.ham, &s, t)?;
        if let Some(theta) = twirl {
            s.apply_all(&twirl_layer(self.n_qubits(), theta));
        }
        s.apply_all(&invert(left).gates);
        Ok(s)
    }

    /// The three mirrored states, noiseless and untwirled.
    pub fn mirror_states(&self, t: f64) -> Result<[StateVector; 3]> {
        Ok([self.run(0, t, None)?, self.run(1, t, None)?, self.run(2, t, None)?])
    }

    pub fn exact_fs(&self, t: f64) -> Result<[f64; 3]> {
        let s = self.mirror_states(t)?;
        Ok([s[0].amps()[0].norm_sqr(), s[1].amps()[0].norm_sqr(), s[2].amps()[0].norm_sqr()])
    }

    /// `⟨ψ0|W(t)|ψ0⟩` by direct inner product.
    pub fn direct_overlap(&self, t: f64) -> Result<C64> {
        let psi = self.psi0.prepare();
        Ok(psi.inner(&self.evolver.evolve(&self.ham, &psi, t)?))
    }

    /// Outcome distributions for sampling at time `t`, untwirled and twirled.
    pub fn cell(&self, t: f64, noise: &NoiseSpec) -> Result<MirrorCell> {
        let probs = |tw: Option<f64>| -> Result<[Vec<f64>; 3]> {
            Ok([
                self.run(0, t, tw)?.probabilities(),
                self.run(1, t, tw)?.probabilities(),
                self.run(2, t, tw)?.probabilities(),
            ])
        };
        let twirled = if noise.enable_twirl {
            check_twirl_angle(noise.twirl_angle, self.flipped())?;
            Some(probs(Some(noise.twirl_angle))?)
        } else {
            None
        };
        Ok(MirrorCell {
            t,
            plain: probs(None)?,
            twirled,
        })
    }

    /// Cells at `t = k·dt` for `k = 1..=k_max`.
    pub fn cells(&self, dt: f64, k_max: usize, noise: &NoiseSpec) -> Result<Vec<MirrorCell>> {
        (1..=k_max).into_par_iter().map(|k| self.cell(k as f64 * dt, noise)).collect()
    }

    /// One shot-sampled realization of `s_0 ..= s_K` over `cells` (which
    /// must be spaced by `dt`); `s_0` is fixed to 1.
    #[allow(clippy::too_many_arguments)]
    pub fn sampled_series(
        &self,
        cells: &[MirrorCell],
        dt: f64,
        plan: &ShotPlan,
        noise: &NoiseSpec,
        source: MagnitudeSource,
        seed: u64,
        realization: u64,
    ) -> Result<OverlapSeries> {
        let mut values = vec![C64::from(1.0)];
        for (k, cell) in cells.iter().enumerate() {
            values.push(self.estimate_overlap(cell, plan, noise, source, seed, &[realization, k as u64 + 1])?.value);
        }
        let mut s = OverlapSeries::new(dt, values);
        s.provenance = if noise.is_noisy() {
            Provenance::Noisy { shots: plan.total, seed, p_pauli: noise.p_pauli }
        } else {
            Provenance::Sampled { shots: plan.total, seed }
        };
        Ok(s)
    }

    /// Shot-sampled overlap at time `t`. `cell` must come from `self.cell(t, noise)`
    /// and is only used on the noiseless path.
    pub fn estimate_overlap(
        &self,
        cell: &MirrorCell,
        plan: &ShotPlan,
        noise: &NoiseSpec,
        source: MagnitudeSource,
        seed: u64,
        ids: &[u64],
    ) -> Result<OverlapEstimate> {
        plan.validate()?;
        noise.validate()?;
        let shots = plan.allocate();
        let mut f = [0.0; 3];
        let mut discarded = [0u64; 3];
        for which in 0..3 {
            if shots[which] == 0 {
                continue;
            }
            let counts = self.sample(cell, which, shots[which], noise, seed, ids)?;
            let (kept, d) = if which == 0 && noise.enable_postselect {
                postselect_f1(&counts, &self.psi0.dimers, self.n_qubits())
            } else {
                (counts, 0)
            };
            discarded[which] = d;
            let n_kept: u64 = kept.values().sum();
            if n_kept == 0 {
                return Err(Error::Numerical(format!("all {} shots of circuit F{} were discarded", shots[which], which + 1)));
            }
            f[which] = *kept.get(&0).unwrap_or(&0) as f64 / n_kept as f64;
        }
        let phase_available = shots[1] > 0 && shots[2] > 0;
        let (value, degenerate) = if phase_available {
            reconstruct(f[0], f[1], f[2], self.e_r, cell.t, source)
        } else {
            (C64::from(f[0].sqrt()), false)
        };
        Ok(OverlapEstimate {
            value,
            source,
            f,
            shots,
            discarded,
            degenerate,
            phase_available,
        })
    }

    fn sample(
        &self,
        cell: &MirrorCell,
        which: usize,
        shots: u64,
        noise: &NoiseSpec,
        seed: u64,
        ids: &[u64],
    ) -> Result<BTreeMap<usize, u64>> {
        let parts: Vec<(Option<f64>, u64)> = match &cell.twirled {
            Some(_) => {
                let s = split(shots, &[1.0 - noise.twirl_fraction, noise.twirl_fraction]);
                vec![(None, s[0]), (Some(noise.twirl_angle), s[1])]
            }
            None => vec![(None, shots)],
        };
        let mut counts = BTreeMap::new();
        for (tw, n) in parts {
            let flag = tw.is_some() as u64;
            let key: Vec<u64> = ids.iter().copied().chain([which as u64, flag]).collect();
            let stream = ShotStream::keyed(seed, &key);
            let got = if noise.is_noisy() {
                self.sample_noisy(cell.t, which, tw, n, noise, seed, &key)?
            } else {
                let probs = match (tw, &cell.twirled) {
                    (Some(_), Some(p)) => &p[which],
                    _ => &cell.plain[which],
                };
                sample_from(probs, n, &stream, 0)
            };
            for (k, v) in got {
                *counts.entry(k).or_insert(0) += v;
            }
        }
        Ok(counts)
    }

    #[allow(clippy::too_many_arguments)]
    fn sample_noisy(
        &self,
        t: f64,
        which: usize,
        twirl: Option<f64>,
        shots: u64,
        noise: &NoiseSpec,
        seed: u64,
        key: &[u64],
    ) -> Result<BTreeMap<usize, u64>> {
        let ops = self.circuit(which, t, twirl);
        let sample_stream = ShotStream::keyed(seed, key);
        let per = noise.shots_per_trajectory;
        let mut counts = BTreeMap::new();
        let mut done = 0u64;
        let mut traj = 0u64;
        while done < shots {
            let n = per.min(shots - done);
            let noise_key: Vec<u64> = key.iter().copied().chain([u64::MAX, traj]).collect();
            let mut rng = ShotStream::keyed(seed, &noise_key).rng_at(0);
            let s = noisy_apply(&StateVector::zero(self.n_qubits()), &ops, Some(&self.ham), noise, Some(&mut rng))?;
            for (k, v) in sample_from(&s.probabilities(), n, &sample_stream, done) {
                *counts.entry(k).or_insert(0) += v;
            }
            done += n;
            traj += 1;
        }
        Ok(counts)
    }
}

/// Cached outcome distributions of the three circuits at one time.
#[derive(Debug, Clone)]
pub struct MirrorCell {
    pub t: f64,
    pub plain: [Vec<f64>; 3],
    pub twirled: Option<[Vec<f64>; 3]>,
}

impl MirrorCell {
    pub fn exact_fs(&self) -> [f64; 3] {
        [self.plain[0][0], self.plain[1][0], self.plain[2][0]]
    }
}

/// One row of an allocation study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationRow {
    pub shots: u64,
    pub fractions: [f64; 3],
    pub source: MagnitudeSource,
    /// RMS of `|O − O_exact|` over realizations and times.
    pub typical_error: f64,
}

/// Sweeps shot splits, shot totals and magnitude sources over `repeats`
/// realizations at each time in `times`.
pub fn allocation_study(
    setup: &MirrorSetup,
    times: &[f64],
    fractions: &[[f64; 3]],
    totals: &[u64],
    repeats: u64,
    seed: u64,
) -> Result<Vec<AllocationRow>> {
    let noise = NoiseSpec::noiseless();
    let cells: Vec<(MirrorCell, C64)> = times
        .par_iter()
        .map(|&t| Ok((setup.cell(t, &noise)?, setup.direct_overlap(t)?)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (ci, &fr) in fractions.iter().enumerate() {
        for &m in totals {
            let plan = ShotPlan::new(m, fr)?;
            for source in [MagnitudeSource::F1Sqrt, MagnitudeSource::Interference] {
                let sq: f64 = (0..repeats)
                    .into_par_iter()
                    .map(|r| -> Result<f64> {
                        let mut acc = 0.0;
                        for (k, (cell, exact)) in cells.iter().enumerate() {
                            // same samples for both sources so the comparison is paired
                            let est = setup.estimate_overlap(cell, &plan, &noise, source, seed, &[ci as u64, m, r, k as u64])?;
                            acc += (est.value - exact).norm_sqr();
                        }
                        Ok(acc)
                    })
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .sum();
                rows.push(AllocationRow {
                    shots: m,
                    fractions: fr,
                    source,
                    typical_error: (sq / (repeats as f64 * cells.len() as f64)).sqrt(),
                });
            }
        }
    }
    Ok(rows)
}

/// Mitigation ablation row: errors of sampled F's and O against exact noiseless values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub t: f64,
    pub mode: String,
    pub f1_err: f64,
    pub f2_err: f64,
    pub f3_err: f64,
    pub overlap_err: f64,
}

/// Compares unmitigated, post-selected, twirled and combined estimates under `noise`.
pub fn mitigation_ablation(
    setup: &MirrorSetup,
    times: &[f64],
    plan: &ShotPlan,
    noise: &NoiseSpec,
    repeats: u64,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    let modes = [("raw", false, false), ("postselect", true, false), ("twirl", false, true), ("both", true, true)];
    let mut rows = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let exact_f = setup.exact_fs(t)?;
        let exact_o = setup.direct_overlap(t)?;
        for (mi, (name, ps, tw)) in modes.iter().enumerate() {
            let spec = NoiseSpec {
                enable_postselect: *ps,
                enable_twirl: *tw,
                ..noise.clone()
            };
            let cell = setup.cell(t, &spec)?;
            let errs: Vec<[f64; 4]> = (0..repeats)
                .into_par_iter()
                .map(|r| {
                    let est = setup.estimate_overlap(&cell, plan, &spec, MagnitudeSource::F1Sqrt, seed, &[k as u64, mi as u64, r])?;
                    Ok([
                        (est.f[0] - exact_f[0]).abs(),
                        (est.f[1] - exact_f[1]).abs(),
                        (est.f[2] - exact_f[2]).abs(),
                        (est.value - exact_o).norm(),
                    ])
                })
                .collect::<Result<_>>()?;
            let mean = |i: usize| errs.iter().map(|e| e[i]).sum::<f64>() / repeats as f64;
            rows.push(AblationRow {
                t,
                mode: name.to_string(),
                f1_err: mean(0),
                f2_err: mean(1),
                f3_err: mean(2),
                overlap_err: mean(3),
            });
        }
    }
    Ok(rows)
}
