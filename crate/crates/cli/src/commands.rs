use std::collections::BTreeMap;

use kagome_core::hamiltonian::{subspace_overlap, SpinHamiltonian};
use kagome_core::krylov::{
    convergence, krylov_basis, ritz_overlaps, steps_to_tolerance, Algorithm, KrylovEntry, OverlapSeries,
};
use kagome_core::lattice::{Lattice, StarPlaquette};
use kagome_core::magnet::{estimated_curve, exact_curve, MagnetizationCurve, SectorEstimate, SeriesSource};
use kagome_core::mirror::{allocation_study, mitigation_ablation, MirrorCell, MirrorSetup};
use kagome_core::prep::PrepCircuit;
use kagome_core::trotter::Evolver;
use kagome_core::C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Built, EvolverSpec, RunConfig};
use crate::output::Out;
use crate::Fail;

/// Key offset for `F_{−t}` cells so they never share a stream with `F_t`.
const NEGATIVE: u64 = 1 << 63;

#[derive(Serialize)]
struct SpectrumRow {
    sector: f64,
    index: usize,
    energy: f64,
}

#[derive(Serialize)]
struct SectorRow {
    sector: f64,
    #[serde(rename = "E0")]
    e0: f64,
}

pub fn spectrum(cfg: &RunConfig, out: &Out) -> Result<(), Fail> {
    let built = cfg.build_lattice()?;
    let lat = built.lattice();
    let ham = lat.hamiltonian(cfg.field)?;
    cfg.validate(&ham)?;
    let n = ham.n_sites();
    let mut rows = Vec::with_capacity(ham.dim());
    let mut sectors = Vec::new();
    for nd in (0..=n).rev() {
        let sz = ham.sz_of(nd);
        let e = ham.sector_eigen(nd);
        rows.extend(e.values.iter().enumerate().map(|(index, &energy)| SpectrumRow { sector: sz, index, energy }));
        sectors.push(SectorRow { sector: sz, e0: e.values[0] });
    }
    let spectrum = ham.diagonalize(None)?;
    let ground = spectrum.ground_energy();
    let mut ground_sectors: Vec<f64> = spectrum.ground_subspace.iter().map(|&i| spectrum.sz_of(i)).collect();
    ground_sectors.dedup();
    let bound = match &built {
        Built::Star(s) if cfg.field == 0.0 => Some(-3.0 * ham.eps() * s.n_triangles() as f64),
        _ => None,
    };
    out.csv("spectrum.csv", &rows)?;
    out.csv("sectors.csv", &sectors)?;
    out.text("geometry.json", &lat.geometry_json())?;
    out.json(
        "summary.json",
        &serde_json::json!({
            "command": "spectrum",
            "n_sites": n,
            "dim": ham.dim(),
            "field": cfg.field,
            "ground_energy": ground,
            "ground_degeneracy": spectrum.ground_subspace.len(),
            "ground_sectors": ground_sectors,
            "triangle_bound": bound,
            "bound_saturated": bound.map(|b| (ground - b).abs() < 1e-9),
        }),
    )
}

/// Star, Hamiltonian, ψ0 and evolver shared by the series-based commands.
struct Setup {
    star: StarPlaquette,
    ham: SpinHamiltonian,
    prep: PrepCircuit,
    evolver: Evolver,
}

fn setup(cfg: &RunConfig) -> Result<Setup, Fail> {
    let star = cfg.star()?;
    let ham = SpinHamiltonian::new(&star, cfg.field)?;
    cfg.validate(&ham)?;
    let prep = cfg.initial_state(&star)?;
    let evolver = cfg.evolver(&star);
    Ok(Setup { star, ham, prep, evolver })
}

fn is_floquet(cfg: &RunConfig) -> bool {
    matches!(cfg.evolver, EvolverSpec::Floquet { .. })
}

/// Mirror cells at `k·dt` for `k = 1..=K` and, for Floquet runs, at `−k·dt`.
struct Cells {
    pos: Vec<MirrorCell>,
    neg: Option<Vec<MirrorCell>>,
}

fn cells(cfg: &RunConfig, m: &MirrorSetup) -> Result<Cells, Fail> {
    let pos = m.cells(cfg.dt, cfg.steps, &cfg.noise)?;
    let neg = if is_floquet(cfg) {
        Some(m.cells(-cfg.dt, cfg.steps, &cfg.noise)?)
    } else {
        None
    };
    Ok(Cells { pos, neg })
}

fn sampled(cfg: &RunConfig, m: &MirrorSetup, c: &Cells, r: u64) -> Result<OverlapSeries, Fail> {
    let plan = cfg.shots.as_ref().expect("sampled runs carry a plan");
    let pos = m.sampled_series(&c.pos, cfg.dt, plan, &cfg.noise, cfg.magnitude, cfg.seed, r)?;
    Ok(match &c.neg {
        Some(neg) => {
            let n = m.sampled_series(neg, cfg.dt, plan, &cfg.noise, cfg.magnitude, cfg.seed, r | NEGATIVE)?;
            let mut s = OverlapSeries::floquet(cfg.dt, pos.values, n.values);
            s.provenance = pos.provenance;
            s
        }
        None => pos,
    })
}

fn mode_name(cfg: &RunConfig) -> &'static str {
    match (&cfg.shots, cfg.noise.is_noisy(), cfg.noise.enable_postselect, cfg.noise.enable_twirl) {
        (None, ..) => "exact",
        (Some(_), false, ..) => "sampled",
        (Some(_), true, false, false) => "raw",
        (Some(_), true, true, false) => "postselect",
        (Some(_), true, false, true) => "twirl",
        (Some(_), true, true, true) => "both",
    }
}

#[derive(Serialize)]
struct OverlapRow {
    k: i64,
    t: f64,
    re: f64,
    im: f64,
    #[serde(rename = "F1")]
    f1: Option<f64>,
    #[serde(rename = "F2")]
    f2: Option<f64>,
    #[serde(rename = "F3")]
    f3: Option<f64>,
    discarded1: u64,
    discarded2: u64,
    discarded3: u64,
    mode: &'static str,
}

/// Signed step indices written by `overlaps`.
fn signed_steps(cfg: &RunConfig) -> Vec<i64> {
    let k = cfg.steps as i64;
    let mut ks: Vec<i64> = (0..=k).collect();
    if is_floquet(cfg) {
        ks.extend((1..=k).map(|j| -j));
    }
    ks
}

pub fn overlaps(cfg: &RunConfig, out: &Out) -> Result<(), Fail> {
    let s = setup(cfg)?;
    let m = MirrorSetup::new(s.ham.clone(), s.prep.clone(), s.evolver.clone())?;
    let mode = mode_name(cfg);
    let ks = signed_steps(cfg);
    let exact: Vec<C64> = ks
        .par_iter()
        .map(|&k| m.direct_overlap(k as f64 * cfg.dt))
        .collect::<kagome_core::Result<_>>()?;
    let mut errors = Vec::new();
    match &cfg.shots {
        None => {
            let rows = ks
                .par_iter()
                .zip(&exact)
                .map(|(&k, o)| {
                    let t = k as f64 * cfg.dt;
                    let f = m.exact_fs(t)?;
                    Ok(OverlapRow {
                        k,
                        t,
                        re: o.re,
                        im: o.im,
                        f1: Some(f[0]),
                        f2: Some(f[1]),
                        f3: Some(f[2]),
                        discarded1: 0,
                        discarded2: 0,
                        discarded3: 0,
                        mode,
                    })
                })
                .collect::<Result<Vec<_>, Fail>>()?;
            out.csv("overlaps.csv", &rows)?;
        }
        Some(plan) => {
            let c = cells(cfg, &m)?;
            for r in 0..cfg.realizations {
                let rows = ks
                    .par_iter()
                    .zip(&exact)
                    .map(|(&k, o)| {
                        let t = k as f64 * cfg.dt;
                        if k == 0 {
                            return Ok((OverlapRow { k, t, re: 1.0, im: 0.0, f1: None, f2: None, f3: None, discarded1: 0, discarded2: 0, discarded3: 0, mode }, 0.0));
                        }
                        let (cell, id) = if k > 0 {
                            (&c.pos[k as usize - 1], r)
                        } else {
                            (&c.neg.as_ref().expect("floquet cells")[(-k) as usize - 1], r | NEGATIVE)
                        };
                        let e = m.estimate_overlap(cell, plan, &cfg.noise, cfg.magnitude, cfg.seed, &[id, k.unsigned_abs()])?;
                        Ok((
                            OverlapRow {
                                k,
                                t,
                                re: e.value.re,
                                im: e.value.im,
                                f1: Some(e.f[0]),
                                f2: e.phase_available.then_some(e.f[1]),
                                f3: e.phase_available.then_some(e.f[2]),
                                discarded1: e.discarded[0],
                                discarded2: e.discarded[1],
                                discarded3: e.discarded[2],
                                mode,
                            },
                            (e.value - o).norm(),
                        ))
                    })
                    .collect::<Result<Vec<_>, Fail>>()?;
                let (rows, errs): (Vec<_>, Vec<f64>) = rows.into_iter().unzip();
                errors.extend(errs.into_iter().skip(1));
                let name = if cfg.realizations == 1 { "overlaps.csv".to_string() } else { format!("overlaps_r{r:03}.csv") };
                out.csv(&name, &rows)?;
            }
            if cfg.noise.is_noisy() && cfg.ablation_repeats > 0 {
                let times: Vec<f64> = (1..=cfg.steps).map(|k| k as f64 * cfg.dt).collect();
                let rows = mitigation_ablation(&m, &times, plan, &cfg.noise, cfg.ablation_repeats, cfg.seed)?;
                out.csv("ablation.csv", &rows)?;
            }
        }
    }
    let mean_err = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);
    out.text("geometry.json", &s.star.geometry().to_json())?;
    out.text("initial_state.json", &s.prep.to_json())?;
    out.json(
        "summary.json",
        &serde_json::json!({
            "command": "overlaps",
            "n_sites": s.ham.n_sites(),
            "sector": s.prep.sector(),
            "evolver": s.evolver.name(),
            "mode": mode,
            "dt": cfg.dt,
            "steps": cfg.steps,
            "realizations": if cfg.shots.is_some() { cfg.realizations } else { 1 },
            "seed": cfg.seed,
            "mean_abs_error": mean_err,
        }),
    )
}

#[derive(Serialize)]
struct ConvergenceRow {
    algorithm: &'static str,
    delta: f64,
    step: usize,
    energy: f64,
    energy_error: f64,
    retained_rank: usize,
}

#[derive(Serialize)]
struct StatsRow {
    algorithm: &'static str,
    delta: f64,
    step: usize,
    mean_energy: f64,
    std_energy: f64,
    mean_abs_error: f64,
    failed: usize,
}

#[derive(Serialize)]
struct RitzRow {
    step: usize,
    eig_index: usize,
    eig_energy: f64,
    overlap_sq: f64,
}

#[derive(Serialize)]
struct RunSummary {
    algorithm: &'static str,
    delta: f64,
    final_energy: f64,
    final_error: f64,
    steps_to_tolerance: Option<usize>,
    failed_solves: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn converge(cfg: &RunConfig, out: &Out) -> Result<(), Fail> {
    let s = setup(cfg)?;
    if cfg.solvers.contains(&Algorithm::UvqpeFloquet) && !is_floquet(cfg) {
        return Err(Fail::validation("uvqpe_floquet needs a floquet evolver"));
    }
    let psi = s.prep.prepare();
    let sector = s.prep.sector();
    let e0 = s.ham.sector_eigen(s.ham.n_down_of(sector)?).values[0];
    let spectrum = s.ham.diagonalize(Some(sector))?;
    let p0 = subspace_overlap(&psi, &spectrum)?;

    let series: Vec<OverlapSeries> = match &cfg.shots {
        None => vec![OverlapSeries::from_evolver(&s.ham, &s.evolver, &psi, cfg.dt, cfg.steps)?],
        Some(_) => {
            let m = MirrorSetup::new(s.ham.clone(), s.prep.clone(), s.evolver.clone())?;
            let c = cells(cfg, &m)?;
            (0..cfg.realizations)
                .into_par_iter()
                .map(|r| sampled(cfg, &m, &c, r))
                .collect::<Result<_, Fail>>()?
        }
    };
    let n_real = series.len();
    let basis = if cfg.ritz && n_real == 1 {
        Some(krylov_basis(&s.ham, &s.evolver, &psi, cfg.dt, cfg.steps)?)
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut stats = Vec::new();
    let mut runs = Vec::new();
    let mut final_failures = Vec::new();
    for &alg in &cfg.solvers {
        for &delta in &cfg.deltas {
            let per: Vec<Vec<Result<KrylovEntry, kagome_core::Error>>> = series
                .par_iter()
                .map(|ser| convergence(alg, ser, delta, cfg.steps, &cfg.solver_options))
                .collect();
            let mut errs = Vec::new();
            let mut failed_total = 0;
            for step in 1..=cfg.steps {
                let ok: Vec<&KrylovEntry> = per.iter().filter_map(|p| p[step - 1].as_ref().ok()).collect();
                let failed = n_real - ok.len();
                failed_total += failed;
                let energies: Vec<f64> = ok.iter().map(|e| e.energy).collect();
                let (mean, std) = if ok.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&energies) };
                let abs_err = if ok.is_empty() {
                    f64::NAN
                } else {
                    energies.iter().map(|e| (e - e0).abs()).sum::<f64>() / ok.len() as f64
                };
                let rank = if ok.is_empty() {
                    0
                } else {
                    (ok.iter().map(|e| e.retained_rank as f64).sum::<f64>() / ok.len() as f64).round() as usize
                };
                let err = if n_real == 1 { mean - e0 } else { abs_err };
                rows.push(ConvergenceRow { algorithm: alg.name(), delta, step, energy: mean, energy_error: err, retained_rank: rank });
                if n_real > 1 {
                    stats.push(StatsRow { algorithm: alg.name(), delta, step, mean_energy: mean, std_energy: std, mean_abs_error: abs_err, failed });
                }
                errs.push((step, err));
                if step == cfg.steps && failed > 0 {
                    final_failures.push(format!("{} delta={delta}: {failed} of {n_real} final solves failed", alg.name()));
                }
            }
            let &(_, final_error) = errs.last().expect("steps > 0");
            runs.push(RunSummary {
                algorithm: alg.name(),
                delta,
                final_energy: rows.last().map(|r| r.energy).unwrap_or(f64::NAN),
                final_error,
                steps_to_tolerance: steps_to_tolerance(&errs, cfg.tolerance),
                failed_solves: failed_total,
            });
            if let (Some(basis), true) = (&basis, alg != Algorithm::Odmd) {
                let mut ritz = Vec::new();
                for (i, entry) in per[0].iter().enumerate() {
                    let Ok(entry) = entry else { continue };
                    for o in ritz_overlaps(&entry.ritz, &basis[..entry.ritz.len()], &spectrum, cfg.ritz_top)? {
                        ritz.push(RitzRow { step: i + 1, eig_index: o.eig_index, eig_energy: o.eig_energy, overlap_sq: o.overlap_sq });
                    }
                }
                out.csv(&format!("ritz_{}_{delta:e}.csv", alg.name()), &ritz)?;
            }
        }
    }
    out.csv("convergence.csv", &rows)?;
    if !stats.is_empty() {
        out.csv("convergence_stats.csv", &stats)?;
    }
    out.text("geometry.json", &s.star.geometry().to_json())?;
    out.text("initial_state.json", &s.prep.to_json())?;
    out.json(
        "summary.json",
        &serde_json::json!({
            "command": "converge",
            "n_sites": s.ham.n_sites(),
            "sector": sector,
            "exact_energy": e0,
            "ground_overlap": p0,
            "evolver": s.evolver.name(),
            "mode": mode_name(cfg),
            "dt": cfg.dt,
            "steps": cfg.steps,
            "realizations": n_real,
            "seed": cfg.seed,
            "tolerance": cfg.tolerance,
            "runs": runs,
        }),
    )?;
    if final_failures.is_empty() {
        Ok(())
    } else {
        Err(Fail::numerical(final_failures.join("; ")))
    }
}

#[derive(Serialize)]
struct PlateauRow {
    h_start: f64,
    h_end: f64,
    #[serde(rename = "Sz")]
    sz: f64,
    energy_at_h_start: f64,
}

#[derive(Serialize)]
struct TraceRow {
    sector: f64,
    step: usize,
    energy: f64,
    energy_error: f64,
}

fn write_curve(out: &Out, curve: &MagnetizationCurve) -> Result<(), Fail> {
    let tag = curve.source.name();
    let rows: Vec<PlateauRow> = curve
        .plateaus
        .iter()
        .map(|p| PlateauRow { h_start: p.h_start, h_end: p.h_end, sz: p.sz, energy_at_h_start: p.energy_at_h_start })
        .collect();
    out.csv(&format!("magnetization_{tag}.csv"), &rows)?;
    let sectors: Vec<SectorRow> = curve.energies.iter().map(|&(sector, e0)| SectorRow { sector, e0 }).collect();
    out.csv(&format!("sectors_{tag}.csv"), &sectors)
}

pub fn magnetization(cfg: &RunConfig, out: &Out) -> Result<(), Fail> {
    let star = cfg.star()?;
    let ham = SpinHamiltonian::new(&star, 0.0)?;
    cfg.validate(&ham)?;
    let exact = exact_curve(&ham)?;
    write_curve(out, &exact)?;

    let mut sc = cfg.sectors.clone();
    if let SeriesSource::Sampled { seed, .. } = &mut sc.series {
        *seed = cfg.seed;
    }
    let (curve, est) = estimated_curve(&star, &sc)?;
    write_curve(out, &curve)?;
    let traces: Vec<TraceRow> = est
        .iter()
        .flat_map(|e: &SectorEstimate| {
            e.trace.iter().enumerate().map(move |(i, &energy)| TraceRow {
                sector: e.sz,
                step: i + 1,
                energy,
                energy_error: e.exact.map_or(f64::NAN, |x| energy - x),
            })
        })
        .collect();
    out.csv(&format!("sector_convergence_{}.csv", curve.source.name()), &traces)?;
    let status: BTreeMap<String, _> = est.iter().map(|e| (format!("{}", e.sz), e.status)).collect();
    out.text("geometry.json", &star.geometry().to_json())?;
    out.json(
        "summary.json",
        &serde_json::json!({
            "command": "magnetization",
            "n_sites": star.n_sites(),
            "solver": curve.source.name(),
            "delta": sc.delta,
            "max_steps": sc.max_steps,
            "exact_crossings": exact.crossing_fields(),
            "solver_crossings": curve.crossing_fields(),
            "crossing_distance": exact.crossing_distance(&curve),
            "sector_status": status,
            "sector_errors": est.iter().map(|e| e.error()).collect::<Vec<_>>(),
        }),
    )?;
    let bad: Vec<String> = est
        .iter()
        .filter(|e| e.status != kagome_core::magnet::SectorStatus::Converged)
        .map(|e| format!("Sz={} ({:?})", e.sz, e.status))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Fail::numerical(format!("unconverged sectors: {}", bad.join(", "))))
    }
}

#[derive(Serialize)]
struct AllocationCsvRow {
    shots: u64,
    f1: f64,
    f2: f64,
    f3: f64,
    source: &'static str,
    typical_error: f64,
}

pub fn allocation(cfg: &RunConfig, out: &Out) -> Result<(), Fail> {
    let s = setup(cfg)?;
    let a = &cfg.allocation;
    if a.times == 0 || a.repeats == 0 || a.totals.is_empty() || a.f1_fractions.is_empty() {
        return Err(Fail::validation("allocation needs times, repeats, totals and fractions"));
    }
    if a.f1_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
        return Err(Fail::validation("F1 fractions must lie in (0, 1)"));
    }
    let m = MirrorSetup::new(s.ham.clone(), s.prep.clone(), s.evolver.clone())?;
    // times spread evenly over the configured run length
    let times: Vec<f64> = (1..=a.times)
        .map(|j| ((j * cfg.steps) as f64 / a.times as f64).round().max(1.0) * cfg.dt)
        .collect();
    let mut fractions: Vec<[f64; 3]> = a.f1_fractions.iter().map(|&f| [f, (1.0 - f) / 2.0, (1.0 - f) / 2.0]).collect();
    fractions.push([1.0 / 3.0; 3]);
    let rows = allocation_study(&m, &times, &fractions, &a.totals, a.repeats, cfg.seed)?;
    let csv_rows: Vec<AllocationCsvRow> = rows
        .iter()
        .map(|r| AllocationCsvRow {
            shots: r.shots,
            f1: r.fractions[0],
            f2: r.fractions[1],
            f3: r.fractions[2],
            source: r.source.name(),
            typical_error: r.typical_error,
        })
        .collect();
    out.csv("allocation.csv", &csv_rows)?;
    let mut best = Vec::new();
    for &total in &a.totals {
        for src in ["f1_sqrt", "interference"] {
            if let Some(b) = csv_rows
                .iter()
                .filter(|r| r.shots == total && r.source == src)
                .min_by(|x, y| x.typical_error.total_cmp(&y.typical_error))
            {
                best.push(serde_json::json!({"shots": total, "source": src, "best_f1": b.f1, "typical_error": b.typical_error}));
            }
        }
    }
    out.json(
        "summary.json",
        &serde_json::json!({
            "command": "allocation",
            "n_sites": s.ham.n_sites(),
            "times": times,
            "repeats": a.repeats,
            "seed": cfg.seed,
            "best": best,
        }),
    )
}
