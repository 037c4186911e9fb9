use kagome_core::hamiltonian::SpinHamiltonian;
use kagome_core::krylov::{Algorithm, SolverOptions};
use kagome_core::lattice::{build_patch, build_star, KagomePatch, Lattice, StarPlaquette};
use kagome_core::magnet::SectorConfig;
use kagome_core::mirror::{MagnitudeSource, ShotPlan};
use kagome_core::noise::NoiseSpec;
use kagome_core::prep::{dressed_with, free_outer_bonds, pinwheel, sector_initial, Orientation, PrepCircuit};
use kagome_core::trotter::{Evolver, SchemeKind, TrotterScheme};
use serde::{Deserialize, Serialize};

use crate::Fail;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeSpec {
    Star { n_triangles: usize },
    Patch { rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Pinwheel with CZ on the free outer bonds of triangles `cz`
    /// (every triangle when absent).
    Dressed {
        #[serde(default)]
        cz: Option<Vec<usize>>,
        #[serde(default = "cw")]
        orientation: Orientation,
    },
    Pinwheel {
        #[serde(default = "cw")]
        orientation: Orientation,
    },
    Sector { sz: usize },
}

fn cw() -> Orientation {
    Orientation::Cw
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvolverSpec {
    Exact,
    Trotter {
        scheme: SchemeKind,
        /// Trotter step; the series step `dt` when absent.
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default)]
        reverse: bool,
    },
    Floquet {
        scheme: SchemeKind,
        #[serde(default)]
        reverse: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationSpec {
    pub totals: Vec<u64>,
    /// F1 fractions; F2 and F3 split the remainder evenly.
    pub f1_fractions: Vec<f64>,
    pub times: usize,
    pub repeats: u64,
}

impl Default for AllocationSpec {
    fn default() -> Self {
        Self {
            totals: vec![100, 1000, 10000],
            f1_fractions: (1..=9).map(|i| i as f64 / 10.0).collect(),
            times: 10,
            repeats: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSpec,
    pub field: f64,
    pub initial: InitialSpec,
    pub dt: f64,
    pub steps: usize,
    pub evolver: EvolverSpec,
    pub solvers: Vec<Algorithm>,
    pub deltas: Vec<f64>,
    pub solver_options: SolverOptions,
    /// Error threshold for steps-to-tolerance in the summary.
    pub tolerance: f64,
    /// Sample the series with this plan instead of using exact values.
    pub shots: Option<ShotPlan>,
    pub realizations: u64,
    pub magnitude: MagnitudeSource,
    pub noise: NoiseSpec,
    /// Repeats per time for the mitigation ablation; 0 skips it.
    pub ablation_repeats: u64,
    pub ritz: bool,
    pub ritz_top: usize,
    pub allocation: AllocationSpec,
    pub sectors: SectorConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeSpec::Star { n_triangles: 4 },
            field: 0.0,
            initial: InitialSpec::Dressed { cz: None, orientation: Orientation::Cw },
            dt: 0.1,
            steps: 60,
            evolver: EvolverSpec::Exact,
            solvers: vec![Algorithm::Uvqpe, Algorithm::Odmd],
            deltas: vec![1e-1, 1e-3, 1e-5],
            solver_options: SolverOptions::default(),
            tolerance: 1e-6,
            shots: None,
            realizations: 1,
            magnitude: MagnitudeSource::F1Sqrt,
            noise: NoiseSpec::default(),
            ablation_repeats: 0,
            ritz: false,
            ritz_top: 5,
            allocation: AllocationSpec::default(),
            sectors: SectorConfig::default(),
            seed: 0,
        }
    }
}

pub enum Built {
    Star(StarPlaquette),
    Patch(KagomePatch),
}

impl Built {
    pub fn lattice(&self) -> &dyn LatticeRef {
        match self {
            Built::Star(s) => s,
            Built::Patch(p) => p,
        }
    }
}

/// Object-safe view used for geometry output.
pub trait LatticeRef {
    fn geometry_json(&self) -> String;
    fn hamiltonian(&self, h: f64) -> kagome_core::Result<SpinHamiltonian>;
}

impl<L: Lattice> LatticeRef for L {
    fn geometry_json(&self) -> String {
        self.geometry().to_json()
    }
    fn hamiltonian(&self, h: f64) -> kagome_core::Result<SpinHamiltonian> {
        SpinHamiltonian::new(self, h)
    }
}

impl RunConfig {
    pub fn build_lattice(&self) -> Result<Built, Fail> {
        Ok(match self.lattice {
            LatticeSpec::Star { n_triangles } => Built::Star(build_star(n_triangles)?),
            LatticeSpec::Patch { rows, cols } => Built::Patch(build_patch(rows, cols)?),
        })
    }

    pub fn star(&self) -> Result<StarPlaquette, Fail> {
        match self.build_lattice()? {
            Built::Star(s) => Ok(s),
            Built::Patch(_) => Err(Fail::validation("this command needs a star plaquette")),
        }
    }

    pub fn initial_state(&self, star: &StarPlaquette) -> Result<PrepCircuit, Fail> {
        Ok(match &self.initial {
            InitialSpec::Dressed { cz, orientation } => {
                let ks: Vec<usize> = cz.clone().unwrap_or_else(|| (0..star.n()).collect());
                if let Some(&k) = ks.iter().find(|&&k| k >= star.n()) {
                    return Err(Fail::validation(format!("triangle {k} out of range")));
                }
                dressed_with(star, *orientation, &free_outer_bonds(star, *orientation, ks))?
            }
            InitialSpec::Pinwheel { orientation } => pinwheel(star, *orientation),
            InitialSpec::Sector { sz } => sector_initial(star, *sz)?,
        })
    }

    pub fn evolver(&self, star: &StarPlaquette) -> Evolver {
        let scheme = |kind: SchemeKind, reverse: bool| {
            let s = match kind {
                SchemeKind::TriangleByTriangle => TrotterScheme::triangles(star),
                SchemeKind::BondByBond => TrotterScheme::bonds(star),
            };
            if reverse {
                s.reversed()
            } else {
                s
            }
        };
        match &self.evolver {
            EvolverSpec::Exact => Evolver::Exact,
            EvolverSpec::Trotter { scheme: k, dt, reverse } => Evolver::Trotter {
                scheme: scheme(*k, *reverse),
                dt: dt.unwrap_or(self.dt),
            },
            EvolverSpec::Floquet { scheme: k, reverse } => Evolver::Floquet { scheme: scheme(*k, *reverse) },
        }
    }

    /// Checks that hold for every command.
    pub fn validate(&self, ham: &SpinHamiltonian) -> Result<(), Fail> {
        let dt_max = ham.spectral_bounds().dt_max;
        if !(self.dt > 0.0 && self.dt < dt_max) {
            return Err(Fail::validation(format!(
                "dt = {} must lie in (0, {dt_max:.6}), the largest step that keeps the spectrum unaliased",
                self.dt
            )));
        }
        if let EvolverSpec::Trotter { dt: Some(d), .. } = self.evolver {
            if d <= 0.0 {
                return Err(Fail::validation("Trotter dt must be positive"));
            }
        }
        if self.steps == 0 {
            return Err(Fail::validation("steps must be positive"));
        }
        if self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(Fail::validation("every delta must lie in (0, 1)"));
        }
        if self.realizations == 0 {
            return Err(Fail::validation("realizations must be positive"));
        }
        if let Some(plan) = &self.shots {
            plan.validate()?;
        }
        self.noise.validate()?;
        if self.noise.is_noisy() && self.shots.is_none() {
            return Err(Fail::validation("a noisy run needs a shot plan"));
        }
        Ok(())
    }
}
