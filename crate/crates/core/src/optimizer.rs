//! Constrained design of coupling sequences against a target `|G_k|` profile.
//!
//! The search is two-level. Positions are explored by differential evolution
//! (DE/rand/1/bin) with a repair operator that enforces ordering, minimum
//! spacing and the extent window. For each candidate layout the amplitudes
//! (and phases, when allowed) are solved by iteratively reweighted least
//! squares on a majorizer of `C_m`: outside the gap the target is the unit
//! phasor aligned with the current `G_k`, inside the gap it is zero. Real
//! designs keep amplitudes non-negative (projected coordinate descent);
//! complex designs solve a Hermitian system. After DE a coordinate pattern
//! search polishes the best layout, weak points are pruned, and everything is
//! reported on the full simulation grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coupling::{
    ift_kernel, in_gap_residual, k_coupling, validate, CouplingPoint, CouplingSequence, ConstraintSet,
};
use crate::error::{Error, Result};
use crate::waveguide::{target_value, weight_value, KGrid, ProfileKind, TargetProfile, WeightProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub population: usize,
    /// DE differential weight.
    pub f: f64,
    /// DE crossover probability.
    pub cr: f64,
    /// IRLS passes per candidate.
    pub inner_iterations: usize,
    /// Out-of-gap spacing of the optimization grid (gaps use the simulation spacing).
    pub coarse_delta_k: f64,
    /// Share of the budget reserved for the final pattern search.
    pub refine_fraction: f64,
    /// Relative amplitude below which points are pruned.
    pub prune_fraction: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            population: 16,
            f: 0.6,
            cr: 0.9,
            inner_iterations: 30,
            coarse_delta_k: 1e-2,
            refine_fraction: 0.2,
            prune_fraction: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub target: TargetProfile,
    pub weights: WeightProfile,
    pub constraints: ConstraintSet,
    pub grid: KGrid,
    /// `false` forces θ ≡ 0 and A ≥ 0.
    pub allow_phases: bool,
    pub rng_seed: u64,
    /// Maximum number of candidate evaluations (amplitude solves).
    pub budget: usize,
    pub settings: OptimizerSettings,
}

impl DesignProblem {
    pub fn new(
        target: TargetProfile,
        weights: WeightProfile,
        constraints: ConstraintSet,
        grid: KGrid,
        allow_phases: bool,
        rng_seed: u64,
        budget: usize,
    ) -> Self {
        Self {
            target,
            weights,
            constraints,
            grid,
            allow_phases,
            rng_seed,
            budget,
            settings: OptimizerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub sequence: CouplingSequence,
    /// `C_m` on the simulation grid.
    pub objective: f64,
    /// Largest in-gap `|G_k|` over the plateau median (fine grid).
    pub in_gap_residual: f64,
    /// Best search objective after each generation (optimization grid).
    pub trace: Vec<f64>,
    pub evaluations: usize,
    /// `C_m` of the first evaluated candidate on the simulation grid.
    pub initial_objective: f64,
}

/// Samples `k`, trapezoid weights, target and weight values of a quadrature grid.
#[derive(Debug, Clone)]
struct Quadrature {
    k: Vec<f64>,
    /// Trapezoid weight × `w(k)`.
    q: Vec<f64>,
    /// Target in units of the plateau `G_0`.
    t: Vec<f64>,
}

impl Quadrature {
    fn from_points(k: Vec<f64>, target: &TargetProfile, weights: &WeightProfile) -> Result<Self> {
        let n = k.len();
        let mut trap = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            let h = k[i + 1] - k[i];
            trap[i] += h / 2.0;
            trap[i + 1] += h / 2.0;
        }
        let mut q = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        for (&kk, tr) in k.iter().zip(trap) {
            q.push(tr * weight_value(weights, target, kk)?);
            t.push(target_value(target, kk)? / target.g0);
        }
        Ok(Self { k, q, t })
    }

    /// Coarse spacing away from the gaps, simulation spacing on and near them.
    fn optimization(problem: &DesignProblem) -> Result<Self> {
        let kmax = problem.target.k_max;
        let fine = problem.grid.delta_k();
        let coarse = problem.settings.coarse_delta_k.max(fine);
        let gaps = problem.target.gaps();
        let near_gap = |k: f64| gaps.iter().any(|&(a, b)| k >= a - coarse && k <= b + coarse);
        let mut k: Vec<f64> = problem.grid.momenta().iter().copied().filter(|&k| near_gap(k)).collect();
        let n_coarse = (2.0 * kmax / coarse).round() as i64;
        for j in 0..=n_coarse {
            let kk = -kmax + j as f64 * 2.0 * kmax / n_coarse as f64;
            if !near_gap(kk) {
                k.push(kk);
            }
        }
        k.sort_by(f64::total_cmp);
        k.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        Self::from_points(k, &problem.target, &problem.weights)
    }

    fn simulation(problem: &DesignProblem) -> Result<Self> {
        Self::from_points(problem.grid.momenta().to_vec(), &problem.target, &problem.weights)
    }

    fn cm(&self, g: &[Complex64]) -> f64 {
        g.iter().zip(&self.q).zip(&self.t).map(|((z, q), t)| q * (z.norm() - t).abs()).sum()
    }
}

/// `C_m = Σ_j | |G_k| - |G^I_k| |·w(k)·(trapezoid weight)` on the problem grid.
pub fn objective_cm(seq: &CouplingSequence, problem: &DesignProblem) -> Result<f64> {
    let quad = Quadrature::simulation(problem)?;
    let g = k_coupling(seq, &problem.grid);
    Ok(g.iter()
        .zip(&quad.q)
        .zip(&quad.t)
        .map(|((z, q), t)| q * (z.norm() - t * problem.target.g0).abs())
        .sum())
}

/// Phasor matrix `e^{-ik x}` (rows: momenta, columns: positions).
fn phasors(k: &[f64], x: &[f64]) -> Vec<Complex64> {
    let mut e = Vec::with_capacity(k.len() * x.len());
    for &kk in k {
        for &xx in x {
            let (s, c) = (kk * xx).sin_cos();
            e.push(Complex64::new(c, -s));
        }
    }
    e
}

fn apply(e: &[Complex64], n: usize, z: &[Complex64]) -> Vec<Complex64> {
    e.chunks_exact(n).map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum()).collect()
}

/// IRLS amplitude solve for fixed positions; returns amplitudes in units of G_0.
fn solve_amplitudes(
    quad: &Quadrature,
    x: &[f64],
    init: &[Complex64],
    allow_phases: bool,
    iterations: usize,
) -> Vec<Complex64> {
    let n = x.len();
    let e = phasors(&quad.k, x);
    let mut z = init.to_vec();
    let mut h = vec![Complex64::new(0.0, 0.0); n * n];
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    for it in 0..iterations {
        let g = apply(&e, n, &z);
        // Floor on the residual used for reweighting, tightened over the passes.
        let eps = (1e-2 * 0.5f64.powi(it as i32)).max(1e-7);
        h.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        b.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (j, row) in e.chunks_exact(n).enumerate() {
            let gj = g[j];
            let t = if quad.t[j] > 0.0 {
                let m = gj.norm();
                if m > 0.0 { gj * (quad.t[j] / m) } else { Complex64::new(quad.t[j], 0.0) }
            } else {
                Complex64::new(0.0, 0.0)
            };
            let u = quad.q[j] / (gj - t).norm().max(eps);
            if u == 0.0 {
                continue;
            }
            for a in 0..n {
                let ca = row[a].conj() * u;
                b[a] += ca * t;
                let hrow = &mut h[a * n..(a + 1) * n];
                for c in a..n {
                    hrow[c] += ca * row[c];
                }
            }
        }
        for a in 0..n {
            for c in 0..a {
                h[a * n + c] = h[c * n + a].conj();
            }
        }
        z = if allow_phases {
            hermitian_solve(&h, &b, n).unwrap_or(z)
        } else {
            nonneg_solve(&h, &b, n, &z)
        };
    }
    z
}

/// Non-negative minimizer of `aᵀ Re(H) a - 2 Re(b)ᵀ a` by projected coordinate descent.
fn nonneg_solve(h: &[Complex64], b: &[Complex64], n: usize, start: &[Complex64]) -> Vec<Complex64> {
    let mut a: Vec<f64> = start.iter().map(|z| z.re.max(0.0)).collect();
    let hr: Vec<f64> = h.iter().map(|z| z.re).collect();
    let br: Vec<f64> = b.iter().map(|z| z.re).collect();
    let mut grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| hr[i * n + j] * a[j]).sum::<f64>() - br[i])
        .collect();
    for _ in 0..200 {
        let mut change = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            let d = hr[i * n + i];
            if d <= 0.0 {
                continue;
            }
            let new = (a[i] - grad[i] / d).max(0.0);
            let delta = new - a[i];
            if delta != 0.0 {
                for j in 0..n {
                    grad[j] += hr[j * n + i] * delta;
                }
                a[i] = new;
            }
            change = change.max(delta.abs());
            scale = scale.max(new);
        }
        if change <= 1e-12 * scale.max(1e-300) {
            break;
        }
    }
    a.into_iter().map(|v| Complex64::new(v, 0.0)).collect()
}

/// Cholesky solve of a Hermitian positive (semi)definite system with a tiny ridge.
fn hermitian_solve(h: &[Complex64], b: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    let trace: f64 = (0..n).map(|i| h[i * n + i].re).sum();
    let ridge = 1e-12 * trace / n as f64;
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = h[i * n + j];
            if i == j {
                s += ridge;
            }
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p].conj();
            }
            if i == j {
                if !(s.re > 0.0) {
                    return None;
                }
                l[i * n + i] = Complex64::new(s.re.sqrt(), 0.0);
            } else {
                l[i * n + j] = s / l[j * n + j].re;
            }
        }
    }
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * n + p] * y[p];
        }
        y[i] = s / l[i * n + i].re;
    }
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for p in i + 1..n {
            s -= l[p * n + i].conj() * z[p];
        }
        z[i] = s / l[i * n + i].re;
    }
    Some(z)
}

/// Geometry shared by every candidate.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    lo: f64,
    hi: f64,
    spacing: f64,
}

impl Layout {
    fn new(problem: &DesignProblem) -> Result<Self> {
        let c = &problem.constraints;
        let lambda0 = problem.target.lambda0();
        let half = c.max_extent * lambda0 / 2.0;
        let margin = 1e-9 * half;
        let spacing = c.min_spacing * lambda0 * (1.0 + 1e-9);
        let (lo, hi) = (-half + margin, half - margin);
        let n = c.max_points;
        if (n as f64 - 1.0) * spacing >= hi - lo {
            return Err(Error::InvalidArgument(format!(
                "{n} points at spacing η = {} λ0 do not fit in L = {} λ0",
                c.min_spacing, c.max_extent
            )));
        }
        Ok(Self { n, lo, hi, spacing })
    }

    /// Sorts and projects onto the feasible set: spacing, then window.
    fn repair(&self, x: &mut [f64]) {
        for v in x.iter_mut() {
            if !v.is_finite() {
                *v = 0.0;
            }
            *v = v.clamp(self.lo, self.hi);
        }
        x.sort_by(f64::total_cmp);
        for i in 1..x.len() {
            x[i] = x[i].max(x[i - 1] + self.spacing);
        }
        let last = x.len() - 1;
        x[last] = x[last].min(self.hi);
        for i in (0..last).rev() {
            x[i] = x[i].min(x[i + 1] - self.spacing);
        }
    }

    fn jittered(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let step = (self.hi - self.lo) / self.n as f64;
        let mut x: Vec<f64> = (0..self.n)
            .map(|i| self.lo + step * (i as f64 + 0.5) + step * (rng.random::<f64>() - 0.5) * 0.8)
            .collect();
        self.repair(&mut x);
        x
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    x: Vec<f64>,
    z: Vec<Complex64>,
    score: f64,
}

fn candidate_rng(seed: u64, generation: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation.wrapping_mul(1 << 20).wrapping_add(index));
    rng
}

struct Search<'a> {
    problem: &'a DesignProblem,
    quad: Quadrature,
    layout: Layout,
    lambda0: f64,
}

impl Search<'_> {
    /// Penalty added when the Markovianity margin is violated.
    const PENALTY: f64 = 1e3;

    fn initial_amplitudes(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        let p = &self.problem.target;
        if !self.problem.allow_phases && p.kind == ProfileKind::BandGap {
            let step = (self.layout.hi - self.layout.lo) / self.layout.n as f64;
            let z: Vec<Complex64> = x.iter().map(|&xx| Complex64::new(ift_kernel(p, xx).abs() * step, 0.0)).collect();
            if z.iter().any(|v| v.re > 0.0) {
                return z;
            }
        }
        x.iter()
            .map(|_| {
                let a = rng.random::<f64>() / x.len() as f64;
                if self.problem.allow_phases {
                    Complex64::from_polar(a, (rng.random::<f64>() * 2.0 - 1.0) * PI)
                } else {
                    Complex64::new(a, 0.0)
                }
            })
            .collect()
    }

    fn evaluate(&self, x: Vec<f64>, init: &[Complex64]) -> Candidate {
        let z = solve_amplitudes(&self.quad, &x, init, self.problem.allow_phases, self.problem.settings.inner_iterations);
        let g = apply(&phasors(&self.quad.k, &x), x.len(), &z);
        let mut score = self.quad.cm(&g);
        if !self.markov_ok(&z) {
            score += Self::PENALTY;
        }
        Candidate { x, z, score }
    }

    fn markov_ok(&self, z: &[Complex64]) -> bool {
        let c = &self.problem.constraints;
        let model = self.problem.grid.model();
        let g0 = self.problem.target.g0;
        let norm = model.length() / (2.0 * PI);
        let sizes: Vec<f64> = z
            .iter()
            .filter(|v| !c.exclude_uncoupled || v.norm() > 0.0)
            .map(|v| {
                let gamma = 2.0 * PI * (g0 * v.norm()).powi(2) * norm / model.c;
                if gamma > 0.0 { 2.0 * model.c / gamma } else { f64::INFINITY }
            })
            .collect();
        if sizes.is_empty() {
            return true;
        }
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        mean / (c.max_extent * self.lambda0) >= c.markov_margin
    }

    fn sequence(&self, c: &Candidate) -> Result<CouplingSequence> {
        let points = c
            .x
            .iter()
            .zip(&c.z)
            .map(|(&x, z)| {
                if self.problem.allow_phases {
                    CouplingPoint::new(x / self.lambda0, z.norm(), z.arg())
                } else {
                    CouplingPoint::new(x / self.lambda0, z.re.max(0.0), 0.0)
                }
            })
            .collect();
        CouplingSequence::new(points, self.problem.target.g0, self.lambda0, "optimized")
    }
}

/// Orders candidates by score, then point count, then extent.
fn better(a: &Candidate, b: &Candidate) -> bool {
    let key = |c: &Candidate| {
        let n = c.z.iter().filter(|v| v.norm() > 0.0).count();
        (c.score, n, c.x.last().unwrap_or(&0.0) - c.x.first().unwrap_or(&0.0))
    };
    let (sa, na, ea) = key(a);
    let (sb, nb, eb) = key(b);
    sa < sb || (sa == sb && (na < nb || (na == nb && ea < eb)))
}

pub fn optimize(problem: &DesignProblem) -> Result<OptimizationResult> {
    if problem.budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    problem.target.check()?;
    if problem.target.kind == ProfileKind::Chiral && !problem.allow_phases {
        return Err(Error::InvalidArgument("a chiral target needs phases".into()));
    }
    let s = &problem.settings;
    let search = Search {
        problem,
        quad: Quadrature::optimization(problem)?,
        layout: Layout::new(problem)?,
        lambda0: problem.target.lambda0(),
    };
    let mut evaluations = 0usize;
    let budget = problem.budget;
    let np = s.population.max(4);

    // Generation 0: jittered uniform layouts.
    let n_init = np.min(budget);
    let mut pop: Vec<Candidate> = (0..n_init)
        .into_par_iter()
        .map(|i| {
            let mut rng = candidate_rng(problem.rng_seed, 0, i as u64);
            let x = search.layout.jittered(&mut rng);
            let init = search.initial_amplitudes(&x, &mut rng);
            search.evaluate(x, &init)
        })
        .collect();
    evaluations += n_init;
    let first = pop[0].clone();
    let mut best = pop.iter().fold(pop[0].clone(), |b, c| if better(c, &b) { c.clone() } else { b });
    let mut trace = vec![best.score];

    let refine_budget = if budget > np { ((budget as f64) * s.refine_fraction) as usize } else { 0 };
    let de_budget = budget - refine_budget;
    let mut generation = 1u64;
    while pop.len() == np && evaluations + np <= de_budget {
        let trials: Vec<Candidate> = (0..np)
            .into_par_iter()
            .map(|i| {
                let mut rng = candidate_rng(problem.rng_seed, generation, i as u64);
                let pick = |rng: &mut ChaCha8Rng, avoid: &[usize]| loop {
                    let r = rng.random_range(0..np);
                    if !avoid.contains(&r) {
                        break r;
                    }
                };
                let r1 = pick(&mut rng, &[i]);
                let r2 = pick(&mut rng, &[i, r1]);
                let r3 = pick(&mut rng, &[i, r1, r2]);
                let forced = rng.random_range(0..search.layout.n);
                let mut x: Vec<f64> = (0..search.layout.n)
                    .map(|d| {
                        if d == forced || rng.random::<f64>() < s.cr {
                            pop[r1].x[d] + s.f * (pop[r2].x[d] - pop[r3].x[d])
                        } else {
                            pop[i].x[d]
                        }
                    })
                    .collect();
                search.layout.repair(&mut x);
                search.evaluate(x, &pop[i].z)
            })
            .collect();
        evaluations += np;
        for (i, t) in trials.into_iter().enumerate() {
            if t.score <= pop[i].score {
                pop[i] = t;
            }
        }
        for c in &pop {
            if better(c, &best) {
                best = c.clone();
            }
        }
        trace.push(best.score);
        generation += 1;
    }

    // Coordinate pattern search on the best layout.
    let mut step = 0.05 * search.lambda0;
    while evaluations < budget && step > 1e-4 * search.lambda0 {
        let mut improved = false;
        for d in 0..search.layout.n {
            for dir in [1.0, -1.0] {
                if evaluations >= budget {
                    break;
                }
                let mut x = best.x.clone();
                x[d] += dir * step;
                search.layout.repair(&mut x);
                let c = search.evaluate(x, &best.z);
                evaluations += 1;
                if better(&c, &best) {
                    best = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
        trace.push(best.score);
    }

    // Report on the simulation grid; never return something worse than the
    // first candidate, and never an infeasible one.
    let fine = Quadrature::simulation(problem)?;
    let report = |c: &Candidate| -> Result<(CouplingSequence, f64)> {
        let seq = search.sequence(c)?;
        let g = k_coupling(&seq, &problem.grid);
        let scaled: Vec<Complex64> = g.iter().map(|z| z / problem.target.g0).collect();
        Ok((seq, fine.cm(&scaled) * problem.target.g0))
    };
    let (mut seq, mut objective) = report(&best)?;
    let pruned = seq.pruned(s.prune_fraction);
    if pruned.len() < seq.len() && !pruned.is_empty() {
        let g = k_coupling(&pruned, &problem.grid);
        let scaled: Vec<Complex64> = g.iter().map(|z| z / problem.target.g0).collect();
        seq = pruned;
        objective = fine.cm(&scaled) * problem.target.g0;
    }
    let (first_seq, initial_objective) = report(&first)?;
    let model = problem.grid.model();
    let feasible = |q: &CouplingSequence| validate(q, &problem.constraints, model).passed();
    if objective > initial_objective || !feasible(&seq) {
        seq = first_seq;
        objective = initial_objective;
    }
    if !feasible(&seq) {
        return Err(Error::NoFeasibleCandidate { evaluations });
    }
    let g = k_coupling(&seq, &problem.grid);
    let in_gap_residual = in_gap_residual(&g, &problem.grid, &problem.target);
    Ok(OptimizationResult {
        sequence: seq,
        objective,
        in_gap_residual,
        trace,
        evaluations,
        initial_objective,
    })
}
