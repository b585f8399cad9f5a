//! Disorder ensembles over coupling sequences.
//!
//! Realization `n` perturbs with seed `base_seed + n`; a second atom uses a
//! seed derived from that one so the two see independent draws. Realizations
//! run in parallel but are reduced sequentially in index order with a running
//! mean, so aggregates are bit-identical for any thread count and a zero-width
//! ensemble reproduces the clean run exactly.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::analysis::{chirality_from_flux, flux_split};
use crate::coupling::{k_coupling, perturb, CouplingSequence};
use crate::dynamics::{default_field_positions, evolve, SimulationPlan, Trajectory};
use crate::error::{Error, Result};
use crate::waveguide::KGrid;

pub const DEFAULT_REALIZATIONS: usize = 200;
/// Default for ensembles that integrate the dynamics.
pub const DEFAULT_DYNAMICS_REALIZATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisorderSpec {
    /// Relative amplitude width.
    pub sigma_a: f64,
    /// Absolute phase width in radians.
    pub sigma_phi: f64,
    pub n_realizations: usize,
    pub base_seed: u64,
    /// Drop realizations whose integration aborts instead of failing the ensemble.
    pub skip_failed: bool,
}

impl DisorderSpec {
    pub fn new(sigma_a: f64, sigma_phi: f64, n_realizations: usize, base_seed: u64) -> Result<Self> {
        let spec = Self { sigma_a, sigma_phi, n_realizations, base_seed, skip_failed: false };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.sigma_a >= 0.0 && self.sigma_phi >= 0.0) || self.n_realizations == 0 {
            return Err(Error::InvalidArgument(
                "disorder needs σ_A ≥ 0, σ_φ ≥ 0 and at least one realization".into(),
            ));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_realizations as u64).map(|n| self.base_seed.wrapping_add(n)).collect()
    }

    pub fn perturb(&self, seq: &CouplingSequence, seed: u64) -> Result<CouplingSequence> {
        perturb(seq, self.sigma_a, self.sigma_phi, seed)
    }
}

/// Seed for the `atom`-th sequence of a realization (atom 0 uses `seed` itself).
pub fn atom_seed(seed: u64, atom: usize) -> u64 {
    if atom == 0 {
        return seed;
    }
    // SplitMix64 finalizer over (seed, atom).
    let mut z = seed ^ (atom as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Elementwise running mean and variance (Welford), fed in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MeanAccumulator {
    pub fn new(len: usize) -> Self {
        Self { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample length changed");
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard error of the mean, `s/√n`.
    pub fn std_error(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|s| (s / (n - 1.0) / n).sqrt()).collect()
    }

    pub fn into_mean(self) -> Vec<f64> {
        self.mean
    }
}

/// How `Ḡ_k` is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingAverage {
    /// `|mean G_k|`.
    #[default]
    Complex,
    /// `mean |G_k|`, for comparison.
    Modulus,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleResult {
    pub spec: Option<DisorderSpec>,
    /// Seeds of the realizations that entered the averages, in order.
    pub seeds: Vec<u64>,
    /// Seeds whose integration aborted (only when `skip_failed`).
    pub failed: Vec<(u64, Error)>,
    pub mean_coupling: Option<Vec<f64>>,
    pub coupling_std_error: Option<Vec<f64>>,
    pub times: Vec<f64>,
    /// Per atom.
    pub mean_populations: Vec<Vec<f64>>,
    pub field_positions: Vec<f64>,
    pub mean_field: Option<Vec<f64>>,
    /// Mean `(Φ_R, Φ_L)`.
    pub mean_flux: Option<(f64, f64)>,
    /// `(β_+, β_-)` from the mean fluxes.
    pub chirality: Option<(f64, f64)>,
}

impl EnsembleResult {
    pub fn n_used(&self) -> usize {
        self.seeds.len()
    }
}

pub fn ensemble_coupling(
    seq: &CouplingSequence,
    spec: &DisorderSpec,
    grid: &KGrid,
    average: CouplingAverage,
) -> Result<EnsembleResult> {
    spec.check()?;
    let seeds = spec.seeds();
    let samples: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&s| {
            let g = k_coupling(&spec.perturb(seq, s)?, grid);
            Ok(match average {
                CouplingAverage::Complex => g.iter().flat_map(|z| [z.re, z.im]).collect(),
                CouplingAverage::Modulus => g.iter().map(|z| z.norm()).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let len = samples[0].len();
    let mut acc = MeanAccumulator::new(len);
    for s in &samples {
        acc.push(s);
    }
    let err = acc.std_error();
    let (mean, std_error) = match average {
        CouplingAverage::Complex => {
            let m = acc.mean();
            let mean = m.chunks_exact(2).map(|c| Complex64::new(c[0], c[1]).norm()).collect();
            let se = err.chunks_exact(2).map(|c| c[0].hypot(c[1])).collect();
            (mean, se)
        }
        CouplingAverage::Modulus => (acc.into_mean(), err),
    };
    Ok(EnsembleResult {
        spec: Some(*spec),
        seeds,
        mean_coupling: Some(mean),
        coupling_std_error: Some(std_error),
        ..Default::default()
    })
}

/// Runs every realization of `plan` with all its sequences perturbed.
fn run_realizations(spec: &DisorderSpec, plan: &SimulationPlan) -> Result<(Vec<(u64, Trajectory)>, Vec<(u64, Error)>)> {
    spec.check()?;
    let outcomes: Vec<(u64, Result<Trajectory>)> = spec
        .seeds()
        .into_par_iter()
        .map(|s| {
            let run = || -> Result<Trajectory> {
                let mut p = plan.clone();
                p.sequences = plan
                    .sequences
                    .iter()
                    .enumerate()
                    .map(|(a, q)| spec.perturb(q, atom_seed(s, a)))
                    .collect::<Result<_>>()?;
                evolve(&p)
            };
            (s, run())
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (s, r) in outcomes {
        match r {
            Ok(t) => ok.push((s, t)),
            Err(e @ Error::NormDrift { .. }) if spec.skip_failed => failed.push((s, e)),
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Err(Error::Undefined("every realization aborted".into()));
    }
    Ok((ok, failed))
}

fn aggregate(spec: &DisorderSpec, runs: &[(u64, Trajectory)], failed: Vec<(u64, Error)>) -> EnsembleResult {
    let first = &runs[0].1;
    let n_atoms = first.populations.len();
    let mut pops: Vec<MeanAccumulator> = (0..n_atoms).map(|_| MeanAccumulator::new(first.times.len())).collect();
    let mut field = first.field.as_ref().map(|f| MeanAccumulator::new(f.intensity.len()));
    for (_, t) in runs {
        for (acc, p) in pops.iter_mut().zip(&t.populations) {
            acc.push(p);
        }
        if let (Some(acc), Some(f)) = (field.as_mut(), t.field.as_ref()) {
            acc.push(&f.intensity);
        }
    }
    EnsembleResult {
        spec: Some(*spec),
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        failed,
        times: first.times.clone(),
        mean_populations: pops.into_iter().map(MeanAccumulator::into_mean).collect(),
        field_positions: first.field.as_ref().map(|f| f.positions.clone()).unwrap_or_default(),
        mean_field: field.map(MeanAccumulator::into_mean),
        ..Default::default()
    }
}

/// Disorder-averaged `|c_e(t)|²` (and field, when the plan records one).
pub fn ensemble_dynamics(spec: &DisorderSpec, plan: &SimulationPlan) -> Result<EnsembleResult> {
    if plan.sequences.len() != 1 {
        return Err(Error::InvalidArgument("ensemble_dynamics needs a single-atom plan".into()));
    }
    let (runs, failed) = run_realizations(spec, plan)?;
    Ok(aggregate(spec, &runs, failed))
}

/// Averages `Φ_R` and `Φ_L` at `t_final` over realizations, then forms `β_±`.
/// The split point is the centre of the coupling region.
pub fn ensemble_chirality(spec: &DisorderSpec, plan: &SimulationPlan) -> Result<EnsembleResult> {
    if plan.sequences.len() != 1 {
        return Err(Error::InvalidArgument("ensemble_chirality needs a single-atom plan".into()));
    }
    let mut plan = plan.clone();
    if plan.field_positions.is_none() {
        plan.field_positions = Some(default_field_positions(&plan.model));
    }
    let origin = plan.sequences[0].span().map_or(0.0, |(a, b)| 0.5 * (a + b));
    let (runs, failed) = run_realizations(spec, &plan)?;
    let mut flux = MeanAccumulator::new(2);
    for (_, t) in &runs {
        let f = t.field.as_ref().expect("field requested");
        let (r, l) = flux_split(&f.positions, &f.intensity, origin);
        flux.push(&[r, l]);
    }
    let m = flux.mean();
    let (r, l) = (m[0], m[1]);
    let chirality = chirality_from_flux(r, l)?;
    let mut out = aggregate(spec, &runs, failed);
    out.mean_flux = Some((r, l));
    out.chirality = Some(chirality);
    Ok(out)
}

/// Two-atom exchange with independently disordered sequences; populations are
/// averaged per atom.
pub fn ensemble_rabi(spec: &DisorderSpec, plan: &SimulationPlan) -> Result<EnsembleResult> {
    if plan.sequences.len() != 2 {
        return Err(Error::InvalidArgument("ensemble_rabi needs a two-atom plan".into()));
    }
    let (runs, failed) = run_realizations(spec, plan)?;
    Ok(aggregate(spec, &runs, failed))
}
