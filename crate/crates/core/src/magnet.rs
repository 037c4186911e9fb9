//! Magnetization curves from zero-field sector ground energies.
//!
//! Every sector's levels move as `E_S(h) = E_S − h·S`, so the ground state at
//! field `h` is read off the lower envelope of one line per sector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SpinHamiltonian;
use crate::krylov::{solve, Algorithm, OverlapSeries, SolverOptions};
use crate::lattice::{Lattice, StarPlaquette};
use crate::mirror::{MagnitudeSource, MirrorSetup, ShotPlan};
use crate::noise::NoiseSpec;
use crate::prep::{dressed_initial, free_outer_bonds, sector_initial, Orientation, PrepCircuit};
use crate::trotter::Evolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergySource {
    Exact,
    Uvqpe,
    Odmd,
}

impl EnergySource {
    pub fn name(&self) -> &'static str {
        match self {
            EnergySource::Exact => "exact",
            EnergySource::Uvqpe => "uvqpe",
            EnergySource::Odmd => "odmd",
        }
    }
}

/// Field interval `[h_start, h_end)` on which sector `sz` is the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plateau {
    pub h_start: f64,
    /// `f64::INFINITY` for the saturated plateau.
    pub h_end: f64,
    pub sz: f64,
    /// `E_S − h_start·S`.
    pub energy_at_h_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MagnetizationCurve {
    pub n_sites: usize,
    /// `(S, E_S)` at zero field, ascending in `S`.
    pub energies: Vec<(f64, f64)>,
    pub plateaus: Vec<Plateau>,
    pub source: EnergySource,
}

impl MagnetizationCurve {
    /// Fields at which the ground sector changes.
    pub fn crossing_fields(&self) -> Vec<f64> {
        self.plateaus.iter().skip(1).map(|p| p.h_start).collect()
    }

    /// Ground-state `S` at field `h`; negative fields read as zero.
    pub fn magnetization_at(&self, h: f64) -> f64 {
        let h = h.max(0.0);
        self.plateaus
            .iter()
            .find(|p| h >= p.h_start && h < p.h_end)
            .unwrap_or_else(|| self.plateaus.last().expect("curve has a plateau"))
            .sz
    }

    /// `2S/n`, which is 1 at saturation.
    pub fn per_site_at(&self, h: f64) -> f64 {
        2.0 * self.magnetization_at(h) / self.n_sites as f64
    }

    pub fn saturation_field(&self) -> f64 {
        self.plateaus.last().map(|p| p.h_start).unwrap_or(0.0)
    }

    /// Largest difference between crossing fields of two curves with the
    /// same plateau sequence; `None` if the sequences differ.
    pub fn crossing_distance(&self, other: &Self) -> Option<f64> {
        if self.plateaus.len() != other.plateaus.len()
            || self.plateaus.iter().zip(&other.plateaus).any(|(a, b)| a.sz != b.sz)
        {
            return None;
        }
        Some(
            self.crossing_fields()
                .iter()
                .zip(other.crossing_fields())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Lower envelope of `E_S − h·S` over `h ≥ 0`. `sector_energies` must hold
/// every `S = 0, 1, …, n/2` (half-integers for odd `n`).
pub fn build_curve(sector_energies: &[(f64, f64)], n_sites: usize, source: EnergySource) -> Result<MagnetizationCurve> {
    let s_max = n_sites as f64 / 2.0;
    let mut energies = Vec::new();
    let mut s = s_max.fract();
    while s <= s_max + 1e-9 {
        let &(_, e) = sector_energies
            .iter()
            .find(|(sz, _)| (sz - s).abs() < 1e-9)
            .ok_or_else(|| Error::Invalid(format!("missing energy for sector Sz={s}")))?;
        if !e.is_finite() {
            return Err(Error::Invalid(format!("energy for sector Sz={s} is not finite")));
        }
        energies.push((s, e));
        s += 1.0;
    }

    // zero-field ground sector, ties to the smaller S
    let mut cur = 0;
    for (i, &(_, e)) in energies.iter().enumerate() {
        if e < energies[cur].1 {
            cur = i;
        }
    }
    let mut plateaus = Vec::new();
    let mut h = 0.0;
    loop {
        let (s, e) = energies[cur];
        let next = energies
            .iter()
            .enumerate()
            .skip(cur + 1)
            .map(|(j, &(s2, e2))| (j, (e2 - e) / (s2 - s)))
            .fold(None, |best: Option<(usize, f64)>, (j, hx)| match best {
                Some((_, hb)) if hx > hb => best,
                _ => Some((j, hx)),
            });
        match next {
            Some((j, hx)) => {
                let hx = hx.max(h);
                if hx > h {
                    plateaus.push(Plateau { h_start: h, h_end: hx, sz: s, energy_at_h_start: e - h * s });
                }
                h = hx;
                cur = j;
            }
            None => {
                plateaus.push(Plateau { h_start: h, h_end: f64::INFINITY, sz: s, energy_at_h_start: e - h * s });
                break;
            }
        }
    }
    Ok(MagnetizationCurve { n_sites, energies, plateaus, source })
}

/// Exact sector ground energies as a curve.
pub fn exact_curve(ham: &SpinHamiltonian) -> Result<MagnetizationCurve> {
    build_curve(&ham.sector_ground_energies(), ham.n_sites(), EnergySource::Exact)
}

/// Where the overlap series for each sector comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    #[default]
    Exact,
    /// Mirror-circuit sampling with this plan; one realization per sector.
    Sampled { plan: ShotPlan, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectorConfig {
    pub algorithm: Algorithm,
    pub dt: f64,
    pub delta: f64,
    pub max_steps: usize,
    pub options: SolverOptions,
    pub series: SeriesSource,
    /// Compare against exact sector energies.
    pub oracle: bool,
    pub oracle_tol: f64,
    pub plateau_window: usize,
    pub plateau_tol: f64,
}

impl Default for SectorConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Uvqpe,
            dt: 0.1,
            delta: 1e-6,
            max_steps: 40,
            options: SolverOptions::default(),
            series: SeriesSource::Exact,
            oracle: true,
            oracle_tol: 1e-3,
            plateau_window: 10,
            plateau_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorStatus {
    Converged,
    /// Energy stopped moving while still off the exact value.
    Plateau,
    /// Still moving at the last step.
    Unsettled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorEstimate {
    pub sz: f64,
    pub energy: f64,
    /// Energy after each step count `1..=max_steps`; NaN where the solve failed.
    pub trace: Vec<f64>,
    pub exact: Option<f64>,
    pub status: SectorStatus,
}

impl SectorEstimate {
    pub fn error(&self) -> Option<f64> {
        self.exact.map(|e| self.energy - e)
    }

    /// First step from which the trace stays within `tol` of the exact value.
    pub fn steps_to(&self, tol: f64) -> Option<usize> {
        let e0 = self.exact?;
        let errs: Vec<(usize, f64)> = self.trace.iter().enumerate().map(|(i, e)| (i + 1, e - e0)).collect();
        crate::krylov::steps_to_tolerance(&errs, tol)
    }
}

/// Initial state for sector `sz`: a CZ-dressed pinwheel at `sz = 0` (every
/// free bond dressed on a 4-triangle star, alternate ones otherwise) and a
/// partial dimer covering above.
pub fn sector_state(star: &StarPlaquette, sz: usize) -> Result<PrepCircuit> {
    if sz > 0 {
        return sector_initial(star, sz);
    }
    let n = star.n();
    let ks: Vec<usize> = if n == 4 { (0..n).collect() } else { (0..n).step_by(2).collect() };
    dressed_initial(star, &free_outer_bonds(star, Orientation::Cw, ks))
}

/// Runs the configured solver in every sector `0..=n/2` of the zero-field star.
pub fn estimate_sector_energies(star: &StarPlaquette, cfg: &SectorConfig) -> Result<Vec<SectorEstimate>> {
    if cfg.max_steps == 0 || cfg.plateau_window == 0 {
        return Err(Error::Invalid("max_steps and plateau_window must be positive".into()));
    }
    if cfg.algorithm == Algorithm::UvqpeFloquet {
        return Err(Error::Invalid("sector energies use uvqpe or odmd".into()));
    }
    let ham = SpinHamiltonian::new(star, 0.0)?;
    let bounds = ham.spectral_bounds();
    if !(cfg.dt > 0.0 && cfg.dt < bounds.dt_max) {
        return Err(Error::Invalid(format!("dt = {} outside (0, {:.4})", cfg.dt, bounds.dt_max)));
    }
    let exact = ham.sector_ground_energies();
    let n_half = star.n_sites() / 2;
    (0..=n_half)
        .into_par_iter()
        .map(|sz| {
            let prep = sector_state(star, sz)?;
            let series = match &cfg.series {
                // the polarized sector is the reference itself, with a known phase
                SeriesSource::Sampled { plan, seed } if !prep.dimers.is_empty() => {
                    let setup = MirrorSetup::new(ham.clone(), prep.clone(), Evolver::Exact)?;
                    let noise = NoiseSpec::noiseless();
                    let cells = setup.cells(cfg.dt, cfg.max_steps, &noise)?;
                    setup.sampled_series(&cells, cfg.dt, plan, &noise, MagnitudeSource::F1Sqrt, *seed, sz as u64)?
                }
                _ => OverlapSeries::exact(&ham, &prep.prepare(), cfg.dt, cfg.max_steps),
            };
            let trace: Vec<f64> = (1..=cfg.max_steps)
                .map(|k| solve(cfg.algorithm, &series, k, cfg.delta, &cfg.options).map_or(f64::NAN, |e| e.energy))
                .collect();
            let energy = *trace.last().expect("max_steps > 0");
            if !energy.is_finite() {
                return Err(Error::Numerical(format!("no estimate in sector Sz={sz}")));
            }
            let e_exact = cfg.oracle.then(|| exact[sz].1);
            let tail = &trace[trace.len().saturating_sub(cfg.plateau_window + 1)..];
            let settled = tail.iter().all(|e| (e - energy).abs() < cfg.plateau_tol);
            let status = match e_exact {
                Some(e0) if (energy - e0).abs() <= cfg.oracle_tol => SectorStatus::Converged,
                Some(_) if settled => SectorStatus::Plateau,
                Some(_) => SectorStatus::Unsettled,
                None if settled => SectorStatus::Converged,
                None => SectorStatus::Unsettled,
            };
            Ok(SectorEstimate { sz: sz as f64, energy, trace, exact: e_exact, status })
        })
        .collect()
}

/// Curve from solver energies, returned with the per-sector estimates.
pub fn estimated_curve(star: &StarPlaquette, cfg: &SectorConfig) -> Result<(MagnetizationCurve, Vec<SectorEstimate>)> {
    let est = estimate_sector_energies(star, cfg)?;
    let source = match cfg.algorithm {
        Algorithm::Odmd => EnergySource::Odmd,
        _ => EnergySource::Uvqpe,
    };
    let energies: Vec<(f64, f64)> = est.iter().map(|e| (e.sz, e.energy)).collect();
    let curve = build_curve(&energies, star.n_sites(), source)?;
    Ok((curve, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_star;
    use proptest::prelude::*;

    fn star_curve(n: usize) -> MagnetizationCurve {
        exact_curve(&SpinHamiltonian::new(&build_star(n).unwrap(), 0.0).unwrap()).unwrap()
    }

    #[test]
    fn eight_spin_crossings() {
        let c = star_curve(4);
        assert_eq!(c.magnetization_at(0.0), 0.0);
        let sz: Vec<f64> = c.plateaus.iter().map(|p| p.sz).collect();
        assert_eq!(sz, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        // E_S from exact diagonalization: −12, −10.835922, −8.607960, 0, 12
        let want = [1.164078, 2.227962, 8.607960, 12.0];
        for (h, w) in c.crossing_fields().iter().zip(want) {
            assert!((h - w).abs() < 1e-5, "{h} vs {w}");
        }
        assert_eq!(c.magnetization_at(1e6), 4.0);
        assert_eq!(c.per_site_at(1e6), 1.0);
    }

    #[test]
    fn twelve_spin_crossings() {
        let c = star_curve(6);
        let fields = c.crossing_fields();
        assert!(fields.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c.plateaus.last().unwrap().sz, 6.0);
        // E_1 − E_0 = 1.038677
        assert!((fields[0] - 1.038677).abs() < 1e-5);
        assert_eq!(c.magnetization_at(c.saturation_field()), 6.0);
        assert_eq!(c.magnetization_at(c.saturation_field() - 1e-9), 5.0);
    }

    #[test]
    fn skipped_sector_jumps_by_two() {
        // S=1 sits above the chord from S=0 to S=2
        let e = [(0.0, 0.0), (1.0, 5.0), (2.0, 2.0)];
        let c = build_curve(&e, 4, EnergySource::Exact).unwrap();
        assert_eq!(c.plateaus.len(), 2);
        assert_eq!(c.plateaus[1].sz, 2.0);
        assert!((c.plateaus[1].h_start - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_to_larger_sector() {
        let e = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)];
        let c = build_curve(&e, 4, EnergySource::Exact).unwrap();
        assert_eq!(c.plateaus.iter().map(|p| p.sz).collect::<Vec<_>>(), vec![0.0, 2.0]);
        // half-open: at the crossing the new sector already holds
        assert_eq!(c.magnetization_at(1.0), 2.0);
    }

    #[test]
    fn missing_sector_rejected() {
        assert!(build_curve(&[(0.0, -1.0), (2.0, 3.0)], 4, EnergySource::Exact).is_err());
    }

    #[test]
    fn eight_spin_sectors_converge() {
        let star = build_star(4).unwrap();
        let est = estimate_sector_energies(&star, &SectorConfig::default()).unwrap();
        for e in &est {
            assert_eq!(e.status, SectorStatus::Converged, "Sz={}", e.sz);
            assert!(e.error().unwrap().abs() < 1e-6, "Sz={} err {:?}", e.sz, e.error());
        }
        // the polarized sector is exact immediately
        assert_eq!(est[4].steps_to(1e-9), Some(1));
        let (curve, _) = estimated_curve(&star, &SectorConfig::default()).unwrap();
        assert!(curve.crossing_distance(&star_curve(4)).unwrap() < 1e-6);
    }

    #[test]
    fn twelve_spin_sz1_slower_than_sz2() {
        let star = build_star(6).unwrap();
        let cfg = SectorConfig { max_steps: 100, ..SectorConfig::default() };
        let est = estimate_sector_energies(&star, &cfg).unwrap();
        let err = |s: usize| est[s].error().unwrap().abs();
        assert!(err(2) < err(1), "Sz=1 {} Sz=2 {}", err(1), err(2));
        assert!(err(5) < 1e-9 && err(6) < 1e-9);
    }

    #[test]
    fn stalled_sector_is_flagged() {
        let star = build_star(6).unwrap();
        let cfg = SectorConfig { delta: 0.1, max_steps: 30, ..SectorConfig::default() };
        let est = estimate_sector_energies(&star, &cfg).unwrap();
        assert!(est.iter().any(|e| e.status != SectorStatus::Converged));
        assert!(estimated_curve(&star, &cfg).is_ok());
    }

    #[test]
    fn bad_dt_rejected() {
        let star = build_star(4).unwrap();
        let cfg = SectorConfig { dt: 1.0, ..SectorConfig::default() };
        assert!(estimate_sector_energies(&star, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn curve_is_monotone(es in proptest::collection::vec(-20.0f64..20.0, 5)) {
            let e: Vec<(f64, f64)> = es.iter().enumerate().map(|(s, &e)| (s as f64, e)).collect();
            let c = build_curve(&e, 8, EnergySource::Exact).unwrap();
            let f = c.crossing_fields();
            prop_assert!(f.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(c.plateaus.windows(2).all(|w| w[1].sz >= w[0].sz + 1.0));
            let mut last = -1.0;
            for i in 0..200 {
                let m = c.magnetization_at(i as f64 * 0.25);
                prop_assert!(m >= last);
                last = m;
            }
            prop_assert_eq!(c.magnetization_at(1e9), 4.0);
            // each plateau line is the minimum at its start
            for p in &c.plateaus {
                let min = e.iter().map(|&(s, en)| en - p.h_start * s).fold(f64::INFINITY, f64::min);
                prop_assert!((p.energy_at_h_start - min).abs() < 1e-9);
            }
        }
    }
}
