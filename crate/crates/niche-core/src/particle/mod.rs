//! Ensembles of independent walkers under the mixed dispersal process.
//!
//! Reproducibility contract: every particle owns a counter-based stream
//! derived from `(seed, particle index)`, and histogram accumulation is an
//! integer reduction, so results are bitwise identical for any worker count
//! or particle batching.

pub mod phantom;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{disk_rect_area, Domain, GeometryError, Point};
use crate::kernels::{KernelError, Kernels};
use crate::params::ProcessParams;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ensemble must contain at least one particle")]
    EmptyEnsemble,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Histogram grid over the domain: per-axis bin counts over the bounding
/// box; boundary cells of a disk are clipped to their inside part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistGrid {
    pub domain: Domain,
    pub bins: Vec<usize>,
}

impl HistGrid {
    pub fn new(domain: Domain, bins: Vec<usize>) -> Result<Self, SimError> {
        if bins.len() != domain.dim() || bins.iter().any(|&b| b == 0) {
            return Err(SimError::BadConfig(format!(
                "need {} positive bin counts",
                domain.dim()
            )));
        }
        Ok(Self { domain, bins })
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    fn widths(&self) -> Vec<f64> {
        let (lo, hi) = self.domain.bounding_box();
        (0..self.domain.dim())
            .map(|k| (hi.coord(k) - lo.coord(k)) / self.bins[k] as f64)
            .collect()
    }

    pub fn cell_index(&self, x: &Point) -> usize {
        let (lo, _) = self.domain.bounding_box();
        let w = self.widths();
        let mut idx = 0;
        for k in (0..self.domain.dim()).rev() {
            let i = (((x.coord(k) - lo.coord(k)) / w[k]) as usize).min(self.bins[k] - 1);
            idx = idx * self.bins[k] + i;
        }
        idx
    }

    pub fn cell_center(&self, idx: usize) -> Point {
        let (lo, _) = self.domain.bounding_box();
        let w = self.widths();
        let mut rem = idx;
        let mut c = [0.0f64; 2];
        for k in 0..self.domain.dim() {
            let i = rem % self.bins[k];
            rem /= self.bins[k];
            c[k] = lo.coord(k) + (i as f64 + 0.5) * w[k];
        }
        Point::new(&c[..self.domain.dim()])
    }

    pub fn cell_bounds(&self, idx: usize) -> (Point, Point) {
        let center = self.cell_center(idx);
        let w = self.widths();
        match self.domain.dim() {
            1 => (
                Point::x1(center.coord(0) - 0.5 * w[0]),
                Point::x1(center.coord(0) + 0.5 * w[0]),
            ),
            _ => (
                Point::x2(center.coord(0) - 0.5 * w[0], center.coord(1) - 0.5 * w[1]),
                Point::x2(center.coord(0) + 0.5 * w[0], center.coord(1) + 0.5 * w[1]),
            ),
        }
    }

    /// Volume of the cell clipped to the domain.
    pub fn cell_volume(&self, idx: usize) -> f64 {
        let (blo, bhi) = self.cell_bounds(idx);
        match &self.domain {
            Domain::Interval { .. } => bhi.coord(0) - blo.coord(0),
            Domain::Rectangle { .. } => {
                (bhi.coord(0) - blo.coord(0)) * (bhi.coord(1) - blo.coord(1))
            }
            Domain::Disk { center, radius } => disk_rect_area(center, *radius, &blo, &bhi),
            Domain::Halfspace { .. } => unreachable!("histograms need bounded domains"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    PointMass { at: Point },
    Uniform,
    /// Piecewise constant density over the histogram cells.
    Tabulated { weights: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: ProcessParams,
    pub domain: Domain,
    pub n_particles: usize,
    pub t_final: f64,
    pub initial: InitialLaw,
    pub seed: u64,
    pub hist: HistGrid,
    pub snapshot_times: Vec<f64>,
}

/// Positions of all walkers at a common lattice time.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<Point>,
    pub time: f64,
    pub step_count: u64,
}

#[derive(Debug, Clone)]
pub struct HistogramEstimate {
    pub grid: HistGrid,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub time: f64,
    pub step: u64,
}

impl HistogramEstimate {
    fn from_counts(grid: &HistGrid, counts: Vec<u64>, time: f64, step: u64) -> Self {
        let n: u64 = counts.iter().sum();
        let density = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c == 0 {
                    0.0
                } else {
                    c as f64 / (n as f64 * grid.cell_volume(i))
                }
            })
            .collect();
        Self { grid: grid.clone(), counts, density, time, step }
    }

    /// Sample second moment about `x0` along coordinate `k`.
    pub fn second_moment_about(&self, x0: f64, k: usize) -> f64 {
        let n: u64 = self.counts.iter().sum();
        let mut acc = 0.0;
        for (i, &c) in self.counts.iter().enumerate() {
            let d = self.grid.cell_center(i).coord(k) - x0;
            acc += c as f64 * d * d;
        }
        acc / n as f64
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Histogram of an ensemble, normalized to unit mass over the domain.
pub fn estimate_density(
    ensemble: &ParticleEnsemble,
    grid: &HistGrid,
) -> Result<HistogramEstimate, SimError> {
    if ensemble.positions.is_empty() {
        return Err(SimError::EmptyEnsemble);
    }
    let mut counts = vec![0u64; grid.n_cells()];
    for p in &ensemble.positions {
        counts[grid.cell_index(p)] += 1;
    }
    Ok(HistogramEstimate::from_counts(
        grid,
        counts,
        ensemble.time,
        ensemble.step_count,
    ))
}

/// One process step: jump with probability `p`, walk otherwise; the result
/// is always inside the niche (immediate return).
pub fn step_particle<R: Rng + ?Sized>(
    kernels: &Kernels,
    x: &Point,
    rng: &mut R,
) -> Result<Point, KernelError> {
    let u: f64 = rng.random();
    if u < kernels.params().p() {
        kernels.sample_jump_step(x, rng)
    } else {
        kernels.sample_walk_step(x, rng)
    }
}

fn sample_initial<R: Rng + ?Sized>(
    cfg: &SimConfig,
    cumulative: &Option<Vec<f64>>,
    rng: &mut R,
) -> Result<Point, SimError> {
    match &cfg.initial {
        InitialLaw::PointMass { at } => Ok(*at),
        InitialLaw::Uniform => {
            let (lo, hi) = cfg.domain.bounding_box();
            for _ in 0..100_000 {
                let mut c = [0.0f64; 2];
                for k in 0..cfg.domain.dim() {
                    c[k] = lo.coord(k) + (hi.coord(k) - lo.coord(k)) * rng.random::<f64>();
                }
                let p = Point::new(&c[..cfg.domain.dim()]);
                if cfg.domain.contains(&p) {
                    return Ok(p);
                }
            }
            Err(SimError::BadConfig("uniform sampling stalled".into()))
        }
        InitialLaw::Tabulated { .. } => {
            let cum = cumulative.as_ref().expect("cumulative table built for tabulated law");
            let target = rng.random::<f64>() * cum.last().copied().unwrap_or(1.0);
            let cell = cum.partition_point(|&c| c < target).min(cum.len() - 1);
            let (blo, bhi) = cfg.hist.cell_bounds(cell);
            for _ in 0..100_000 {
                let mut c = [0.0f64; 2];
                for k in 0..cfg.domain.dim() {
                    c[k] = blo.coord(k) + (bhi.coord(k) - blo.coord(k)) * rng.random::<f64>();
                }
                let p = Point::new(&c[..cfg.domain.dim()]);
                if cfg.domain.contains(&p) {
                    return Ok(p);
                }
            }
            Err(SimError::BadConfig("tabulated cell sampling stalled".into()))
        }
    }
}

pub struct RunOutput {
    pub snapshots: Vec<HistogramEstimate>,
    pub final_ensemble: ParticleEnsemble,
}

/// Advance `n_particles` walkers to the final time, emitting histograms at
/// the snapshot times (rounded down to the step lattice).
pub fn run_ensemble(cfg: &SimConfig) -> Result<RunOutput, SimError> {
    if cfg.n_particles == 0 {
        return Err(SimError::EmptyEnsemble);
    }
    if cfg.t_final < 0.0 {
        return Err(SimError::BadConfig("t_final must be nonnegative".into()));
    }
    if let InitialLaw::PointMass { at } = &cfg.initial {
        if !cfg.domain.contains(at) {
            return Err(SimError::BadConfig("point mass must start inside the domain".into()));
        }
    }
    let cumulative = match &cfg.initial {
        InitialLaw::Tabulated { weights } => {
            if weights.len() != cfg.hist.n_cells() {
                return Err(SimError::BadConfig(format!(
                    "tabulated law needs {} weights",
                    cfg.hist.n_cells()
                )));
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(SimError::BadConfig("tabulated weights must be nonnegative".into()));
            }
            let mut acc = 0.0;
            let cum: Vec<f64> = weights
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    acc += w * cfg.hist.cell_volume(i);
                    acc
                })
                .collect();
            if acc <= 0.0 {
                return Err(SimError::BadConfig("tabulated law has zero mass".into()));
            }
            Some(cum)
        }
        _ => None,
    };

    let tau = cfg.params.tau();
    let total_steps = (cfg.t_final / tau + 1e-9).floor() as u64;
    let mut snap_steps: Vec<u64> = cfg
        .snapshot_times
        .iter()
        .map(|&t| {
            if t < 0.0 || t > cfg.t_final + 1e-12 {
                Err(SimError::BadConfig(format!("snapshot time {t} outside [0, t_final]")))
            } else {
                Ok(((t / tau) + 1e-9).floor() as u64)
            }
        })
        .collect::<Result<_, _>>()?;
    if snap_steps.is_empty() {
        snap_steps.push(total_steps);
    }
    snap_steps.sort_unstable();
    snap_steps.dedup();

    let kernels = Kernels::new(cfg.params, cfg.domain.clone())?;
    let n_cells = cfg.hist.n_cells();
    let n_snaps = snap_steps.len();
    let chunk = 4096;

    struct Local {
        counts: Vec<Vec<u64>>,
        finals: Vec<(usize, Point)>,
    }

    let indices: Vec<usize> = (0..cfg.n_particles).collect();
    let merged = indices
        .par_chunks(chunk)
        .map(|idxs| -> Result<Local, SimError> {
            let mut local = Local {
                counts: vec![vec![0u64; n_cells]; n_snaps],
                finals: Vec::with_capacity(idxs.len()),
            };
            for &pi in idxs {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(pi as u64 + 1);
                let mut pos = sample_initial(cfg, &cumulative, &mut rng)?;
                let mut next_snap = 0;
                for step in 0..=total_steps {
                    while next_snap < n_snaps && snap_steps[next_snap] == step {
                        local.counts[next_snap][cfg.hist.cell_index(&pos)] += 1;
                        next_snap += 1;
                    }
                    if step < total_steps {
                        pos = step_particle(&kernels, &pos, &mut rng)?;
                    }
                }
                local.finals.push((pi, pos));
            }
            Ok(local)
        })
        .try_reduce(
            || Local { counts: vec![vec![0u64; n_cells]; n_snaps], finals: Vec::new() },
            |mut a, b| {
                for (ca, cb) in a.counts.iter_mut().zip(&b.counts) {
                    for (x, y) in ca.iter_mut().zip(cb) {
                        *x += y;
                    }
                }
                a.finals.extend_from_slice(&b.finals);
                Ok(a)
            },
        )?;

    let mut finals = merged.finals;
    finals.sort_unstable_by_key(|(i, _)| *i);
    let positions: Vec<Point> = finals.into_iter().map(|(_, p)| p).collect();

    let snapshots = snap_steps
        .iter()
        .zip(merged.counts)
        .map(|(&step, counts)| {
            HistogramEstimate::from_counts(&cfg.hist, counts, step as f64 * tau, step)
        })
        .collect();

    Ok(RunOutput {
        snapshots,
        final_ensemble: ParticleEnsemble {
            positions,
            time: total_steps as f64 * tau,
            step_count: total_steps,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, t: f64) -> SimConfig {
        let domain = Domain::interval(0.0, 1.0).unwrap();
        SimConfig {
            params: ProcessParams::new(0.5, 0.5, 1e-3).unwrap(),
            domain: domain.clone(),
            n_particles: n,
            t_final: t,
            initial: InitialLaw::PointMass { at: Point::x1(0.5) },
            seed: 42,
            hist: HistGrid::new(domain, vec![32]).unwrap(),
            snapshot_times: vec![t],
        }
    }

    #[test]
    fn zero_time_returns_initial_law() {
        let cfg = config(1000, 0.0);
        let out = run_ensemble(&cfg).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        let h = &out.snapshots[0];
        assert_eq!(h.total_count(), 1000);
        // all mass in the cell containing 0.5
        let idx = cfg.hist.cell_index(&Point::x1(0.5));
        assert_eq!(h.counts[idx], 1000);
        let vol_sum: f64 = (0..h.counts.len())
            .map(|i| h.density[i] * cfg.hist.cell_volume(i))
            .sum();
        assert!((vol_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn particles_stay_inside_and_count_is_conserved() {
        let mut cfg = config(500, 0.02);
        cfg.initial = InitialLaw::PointMass { at: Point::x1(0.99) };
        let out = run_ensemble(&cfg).unwrap();
        assert_eq!(out.final_ensemble.positions.len(), 500);
        for p in &out.final_ensemble.positions {
            assert!(cfg.domain.contains(p));
        }
        assert_eq!(out.snapshots[0].total_count(), 500);
    }

    #[test]
    fn reproducible_across_worker_counts() {
        let cfg = config(2000, 0.01);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| run_ensemble(&cfg)).unwrap();
        let b = pool4.install(|| run_ensemble(&cfg)).unwrap();
        assert_eq!(a.snapshots[0].counts, b.snapshots[0].counts);
        assert_eq!(
            a.final_ensemble.positions.len(),
            b.final_ensemble.positions.len()
        );
        for (p, q) in a
            .final_ensemble
            .positions
            .iter()
            .zip(&b.final_ensemble.positions)
        {
            assert_eq!(p.coords(), q.coords());
        }
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let cfg = config(0, 0.0);
        assert!(matches!(run_ensemble(&cfg), Err(SimError::EmptyEnsemble)));
        let e = ParticleEnsemble { positions: vec![], time: 0.0, step_count: 0 };
        assert!(matches!(
            estimate_density(&e, &config(1, 0.0).hist),
            Err(SimError::EmptyEnsemble)
        ));
    }

    #[test]
    fn estimate_density_simple_splits() {
        let domain = Domain::interval(0.0, 1.0).unwrap();
        let grid = HistGrid::new(domain, vec![2]).unwrap();
        let e = ParticleEnsemble {
            positions: vec![
                Point::x1(0.1),
                Point::x1(0.2),
                Point::x1(0.7),
                Point::x1(0.9),
            ],
            time: 0.0,
            step_count: 0,
        };
        let h = estimate_density(&e, &grid).unwrap();
        assert_eq!(h.counts, vec![2, 2]);
        assert!((h.density[0] - h.density[1]).abs() < 1e-15);
        // all particles in one cell: density 1/cellvol there
        let e1 = ParticleEnsemble {
            positions: vec![Point::x1(0.1); 8],
            time: 0.0,
            step_count: 0,
        };
        let h1 = estimate_density(&e1, &grid).unwrap();
        assert_eq!(h1.counts, vec![8, 0]);
        assert!((h1.density[0] - 2.0).abs() < 1e-15);
        assert_eq!(h1.density[1], 0.0);
    }

    #[test]
    fn tabulated_initial_law_respects_weights() {
        let domain = Domain::interval(0.0, 1.0).unwrap();
        let hist = HistGrid::new(domain.clone(), vec![4]).unwrap();
        let cfg = SimConfig {
            params: ProcessParams::new(0.5, 0.5, 1e-3).unwrap(),
            domain,
            n_particles: 40_000,
            t_final: 0.0,
            initial: InitialLaw::Tabulated { weights: vec![1.0, 0.0, 0.0, 3.0] },
            seed: 7,
            hist: hist.clone(),
            snapshot_times: vec![0.0],
        };
        let out = run_ensemble(&cfg).unwrap();
        let h = &out.snapshots[0];
        assert_eq!(h.counts[1], 0);
        assert_eq!(h.counts[2], 0);
        let frac = h.counts[3] as f64 / 40_000.0;
        assert!((frac - 0.75).abs() < 0.01, "{frac}");
    }
}
