//! Single-excitation dynamics of one or two giant atoms on the discretized waveguide.
//!
//! Amplitudes obey
//!
//! ```text
//! dc_e,a/dt = -i Σ_k conj(G_{a,k}) c_k
//! dc_k/dt   = -i Δ_k c_k - i Σ_a G_{a,k} c_e,a
//! ```
//!
//! with `G_{a,k}` the grid coupling of atom `a`. The free rotation `e^{-iΔ_k t}`
//! is applied exactly (RK4 in integrating-factor form), so only the coupling
//! terms carry truncation error. The photon field is
//! `ψ(x) = L_w^{-1/2} Σ_k c_k e^{ikx}`, which satisfies Parseval over one
//! period of the waveguide.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coupling::{k_coupling, CouplingSequence};
use crate::error::{Error, Result};
use crate::waveguide::{build_kgrid, KGrid, WaveguideModel};

/// Largest accepted `dt·max|Δ_k|`.
pub const MAX_PHASE_STEP: f64 = 0.1;
/// Largest accepted relative norm drift.
pub const NORM_TOLERANCE: f64 = 1e-6;
/// Default number of field sample points.
pub const DEFAULT_FIELD_POINTS: usize = 2048;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const MINUS_I: Complex64 = Complex64 { re: 0.0, im: -1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub c_e: Vec<Complex64>,
    pub c_k: Vec<Complex64>,
    pub t: f64,
}

impl EvolutionState {
    /// Atom 0 excited, everything else empty.
    pub fn excited(n_atoms: usize, n_modes: usize) -> Self {
        let mut c_e = vec![ZERO; n_atoms];
        c_e[0] = Complex64::new(1.0, 0.0);
        Self {
            c_e,
            c_k: vec![ZERO; n_modes],
            t: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.c_e.iter().map(|z| z.norm_sqr()).sum::<f64>() + self.photon_weight()
    }

    pub fn photon_weight(&self) -> f64 {
        self.c_k.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.c_e.iter().map(|z| z.norm_sqr()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    /// One sequence per atom (at most two).
    pub sequences: Vec<CouplingSequence>,
    pub omega_q: f64,
    pub model: WaveguideModel,
    pub t_final: f64,
    /// Sampling interval of the recorded populations.
    pub record_interval: f64,
    /// Requested step; the largest stable step is used when `None`. Either
    /// way it is shrunk to divide `record_interval`.
    pub dt: Option<f64>,
    /// Positions at which `|ψ(x, t_final)|²` is recorded.
    pub field_positions: Option<Vec<f64>>,
}

impl SimulationPlan {
    pub fn single(seq: CouplingSequence, omega_q: f64, model: WaveguideModel, t_final: f64) -> Self {
        Self {
            sequences: vec![seq],
            omega_q,
            model,
            t_final,
            record_interval: 1.0,
            dt: None,
            field_positions: None,
        }
    }

    /// Two atoms, the second a copy of `seq` translated by `d_s`.
    pub fn pair(seq: CouplingSequence, d_s: f64, omega_q: f64, model: WaveguideModel, t_final: f64) -> Self {
        let partner = seq.translated(d_s);
        Self {
            sequences: vec![seq, partner],
            omega_q,
            model,
            t_final,
            record_interval: 1.0,
            dt: None,
            field_positions: None,
        }
    }

    pub fn with_record_interval(mut self, interval: f64) -> Self {
        self.record_interval = interval;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_field(mut self, positions: Vec<f64>) -> Self {
        self.field_positions = Some(positions);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub positions: Vec<f64>,
    pub intensity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `populations[a][n]` is `|c_e,a(times[n])|²`.
    pub populations: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub dt: f64,
    pub max_norm_drift: f64,
    pub final_state: EvolutionState,
    pub field: Option<FieldSnapshot>,
}

/// Uniform positions over `[-L_w/4, L_w/4]`.
pub fn default_field_positions(model: &WaveguideModel) -> Vec<f64> {
    let half = model.length() / 4.0;
    let n = DEFAULT_FIELD_POINTS;
    (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
}

/// `ψ(x) = L_w^{-1/2} Σ_k a_k e^{ikx}` at each position.
pub fn mode_field(grid: &KGrid, amps: &[Complex64], positions: &[f64]) -> Vec<Complex64> {
    let scale = 1.0 / grid.model().length().sqrt();
    let k0 = grid.momenta()[0];
    let dk = grid.delta_k();
    positions
        .par_iter()
        .map(|&x| {
            // Phase recurrence, re-anchored periodically to bound rounding drift.
            let step = Complex64::from_polar(1.0, dk * x);
            let mut acc = ZERO;
            let mut phase = ZERO;
            for (j, a) in amps.iter().enumerate() {
                if j % 512 == 0 {
                    phase = Complex64::from_polar(1.0, (k0 + j as f64 * dk) * x);
                }
                acc += a * phase;
                phase *= step;
            }
            acc * scale
        })
        .collect()
}

/// `|ψ(x)|²` of a state's photon modes.
pub fn field_profile(state: &EvolutionState, grid: &KGrid, positions: &[f64]) -> Vec<f64> {
    mode_field(grid, &state.c_k, positions).iter().map(|z| z.norm_sqr()).collect()
}

/// Precomputed per-run data.
struct Propagator {
    g: Vec<Vec<Complex64>>,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    dt: f64,
}

impl Propagator {
    fn new(g: Vec<Vec<Complex64>>, detunings: &[f64], dt: f64) -> Self {
        let half = detunings.iter().map(|&d| Complex64::from_polar(1.0, -d * dt / 2.0)).collect();
        let full = detunings.iter().map(|&d| Complex64::from_polar(1.0, -d * dt)).collect();
        Self { g, half, full, dt }
    }

    /// `Σ_a G_{a,k} y_a` at mode `k`.
    #[inline(always)]
    fn drive(&self, k: usize, ye: &[Complex64]) -> Complex64 {
        let mut s = ZERO;
        for (g, y) in self.g.iter().zip(ye) {
            s += g[k] * y;
        }
        s
    }

    /// `-i Σ_k conj(G_{a,k}) m_k` for every atom, with `m_k` produced on the fly.
    fn atomic_rate(&self, n_modes: usize, out: &mut [Complex64], mode: impl Fn(usize) -> Complex64) {
        out.iter_mut().for_each(|o| *o = ZERO);
        if self.g.len() == 1 {
            let g = &self.g[0];
            let mut s = ZERO;
            for k in 0..n_modes {
                s += g[k].conj() * mode(k);
            }
            out[0] = s * MINUS_I;
            return;
        }
        for k in 0..n_modes {
            let m = mode(k);
            for (o, g) in out.iter_mut().zip(&self.g) {
                *o += g[k].conj() * m;
            }
        }
        out.iter_mut().for_each(|o| *o *= MINUS_I);
    }

    fn step(&self, s: &mut EvolutionState) {
        let n = s.c_k.len();
        let na = s.c_e.len();
        let dt = self.dt;
        let h = dt / 2.0;
        let ck = &s.c_k;
        let (eh, ef) = (&self.half, &self.full);

        let ye1 = s.c_e.clone();
        let mut k1 = vec![ZERO; na];
        self.atomic_rate(n, &mut k1, |k| ck[k]);

        let ye2: Vec<Complex64> = (0..na).map(|a| ye1[a] + k1[a] * h).collect();
        let mut k2 = vec![ZERO; na];
        self.atomic_rate(n, &mut k2, |k| eh[k] * (ck[k] + MINUS_I * self.drive(k, &ye1) * h));

        let ye3: Vec<Complex64> = (0..na).map(|a| ye1[a] + k2[a] * h).collect();
        let mut k3 = vec![ZERO; na];
        self.atomic_rate(n, &mut k3, |k| eh[k] * ck[k] + MINUS_I * self.drive(k, &ye2) * h);

        let ye4: Vec<Complex64> = (0..na).map(|a| ye1[a] + k3[a] * dt).collect();
        let mut k4 = vec![ZERO; na];
        self.atomic_rate(n, &mut k4, |k| ef[k] * ck[k] + eh[k] * MINUS_I * self.drive(k, &ye3) * dt);

        let sixth = dt / 6.0;
        let ye23: Vec<Complex64> = (0..na).map(|a| ye2[a] + ye3[a]).collect();
        for k in 0..n {
            let d1 = MINUS_I * self.drive(k, &ye1);
            let d23 = MINUS_I * self.drive(k, &ye23);
            let d4 = MINUS_I * self.drive(k, &ye4);
            s.c_k[k] = ef[k] * s.c_k[k] + (ef[k] * d1 + eh[k] * d23 * 2.0 + d4) * sixth;
        }
        for a in 0..na {
            s.c_e[a] += (k1[a] + (k2[a] + k3[a]) * 2.0 + k4[a]) * sixth;
        }
        s.t += dt;
    }
}

fn check_plan(plan: &SimulationPlan) -> Result<()> {
    if plan.sequences.is_empty() || plan.sequences.len() > 2 {
        return Err(Error::InvalidArgument(format!(
            "plans carry one or two atoms, got {}",
            plan.sequences.len()
        )));
    }
    if !(plan.t_final >= 0.0 && plan.t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_final must be non-negative, got {}", plan.t_final)));
    }
    if !(plan.record_interval > 0.0) {
        return Err(Error::InvalidArgument("record_interval must be positive".into()));
    }
    if !plan.omega_q.is_finite() {
        return Err(Error::InvalidArgument("ω_q must be finite".into()));
    }
    Ok(())
}

/// Step size dividing `record_interval` and satisfying `dt·max|Δ| ≤ 0.1`.
pub fn aligned_step(plan: &SimulationPlan, max_detuning: f64) -> Result<f64> {
    let bound = if max_detuning > 0.0 { MAX_PHASE_STEP / max_detuning } else { plan.record_interval };
    let requested = match plan.dt {
        Some(dt) if !(dt > 0.0) => return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}"))),
        Some(dt) if dt > bound * (1.0 + 1e-12) => {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} violates dt·max|Δ| ≤ {MAX_PHASE_STEP} (max |Δ| = {max_detuning})"
            )))
        }
        Some(dt) => dt,
        None => bound,
    };
    let n_sub = (plan.record_interval / requested * (1.0 - 1e-12)).ceil().max(1.0);
    Ok(plan.record_interval / n_sub)
}

/// Integrates from the excited-atom initial state.
pub fn evolve(plan: &SimulationPlan) -> Result<Trajectory> {
    check_plan(plan)?;
    let grid = build_kgrid(&plan.model)?;
    evolve_from(plan, EvolutionState::excited(plan.sequences.len(), grid.len()))
}

/// Integrates from an arbitrary state (used for property checks).
pub fn evolve_from(plan: &SimulationPlan, initial: EvolutionState) -> Result<Trajectory> {
    check_plan(plan)?;
    let grid = build_kgrid(&plan.model)?;
    if initial.c_e.len() != plan.sequences.len() || initial.c_k.len() != grid.len() {
        return Err(Error::InvalidArgument("initial state does not match the plan".into()));
    }
    let detunings = grid.detunings(plan.omega_q);
    let max_detuning = detunings.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let dt = aligned_step(plan, max_detuning)?;
    let n_sub = (plan.record_interval / dt).round() as usize;
    let n_records = (plan.t_final / plan.record_interval).round() as usize;
    let g = plan.sequences.iter().map(|s| k_coupling(s, &grid)).collect();
    let prop = Propagator::new(g, &detunings, dt);

    let na = plan.sequences.len();
    let mut state = initial;
    let norm0 = state.norm();
    let t0 = state.t;
    let mut times = Vec::with_capacity(n_records + 1);
    let mut populations = vec![Vec::with_capacity(n_records + 1); na];
    let mut norms = Vec::with_capacity(n_records + 1);
    let mut max_drift = 0.0f64;
    let mut record = |s: &EvolutionState, t: f64, max_drift: &mut f64| -> Result<()> {
        let norm = s.norm();
        let drift = if norm0 > 0.0 { (norm / norm0 - 1.0).abs() } else { 0.0 };
        *max_drift = max_drift.max(drift);
        if drift > NORM_TOLERANCE {
            return Err(Error::NormDrift { drift, t, tolerance: NORM_TOLERANCE });
        }
        times.push(t);
        for (p, z) in populations.iter_mut().zip(&s.c_e) {
            p.push(z.norm_sqr());
        }
        norms.push(norm);
        Ok(())
    };
    record(&state, t0, &mut max_drift)?;
    for n in 1..=n_records {
        for _ in 0..n_sub {
            prop.step(&mut state);
        }
        // Pin the clock to the record grid so long runs do not accumulate rounding.
        state.t = t0 + n as f64 * plan.record_interval;
        record(&state, state.t, &mut max_drift)?;
    }
    let field = plan.field_positions.as_ref().map(|xs| FieldSnapshot {
        t: state.t,
        positions: xs.clone(),
        intensity: field_profile(&state, &grid, xs),
    });
    Ok(Trajectory {
        times,
        populations,
        norms,
        dt,
        max_norm_drift: max_drift,
        final_state: state,
        field,
    })
}

pub fn evolve_single(plan: &SimulationPlan) -> Result<Trajectory> {
    if plan.sequences.len() != 1 {
        return Err(Error::InvalidArgument("evolve_single needs exactly one atom".into()));
    }
    evolve(plan)
}

pub fn evolve_pair(plan: &SimulationPlan) -> Result<Trajectory> {
    if plan.sequences.len() != 2 {
        return Err(Error::InvalidArgument("evolve_pair needs exactly two atoms".into()));
    }
    evolve(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::CouplingPoint;
    use approx::assert_relative_eq;

    fn small() -> WaveguideModel {
        WaveguideModel::new(3.0, 3.0, 0.05).unwrap()
    }

    fn point(g0: f64) -> CouplingSequence {
        CouplingSequence::new(vec![CouplingPoint::new(0.0, 1.0, 0.0)], g0, 1.0, "point").unwrap()
    }

    fn empty() -> CouplingSequence {
        CouplingSequence::new(vec![], 0.002, 1.0, "empty").unwrap()
    }

    #[test]
    fn decoupled_atom_is_frozen() {
        let plan = SimulationPlan::single(point(0.0), 4.5, small(), 50.0);
        let tr = evolve_single(&plan).unwrap();
        assert!(tr.populations[0].iter().all(|&p| p == 1.0));
        assert!(tr.final_state.c_k.iter().all(|z| *z == ZERO));
        let tr = evolve_pair(&SimulationPlan::pair(empty(), 3.0, 4.5, small(), 20.0)).unwrap();
        assert!(tr.populations[0].iter().all(|&p| p == 1.0));
        assert!(tr.populations[1].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn free_modes_rotate_exactly() {
        let model = small();
        let grid = build_kgrid(&model).unwrap();
        let mut init = EvolutionState::excited(1, grid.len());
        init.c_e[0] = Complex64::new(0.6, 0.0);
        for (j, c) in init.c_k.iter_mut().enumerate() {
            *c = Complex64::new(((j % 7) as f64 - 3.0) * 0.01, (j % 5) as f64 * 0.01);
        }
        let plan = SimulationPlan::single(point(0.0), 4.5, model, 37.0);
        let tr = evolve_from(&plan, init.clone()).unwrap();
        assert_eq!(tr.final_state.c_e, init.c_e);
        for (j, (&d, (a, b))) in grid.detunings(4.5).iter().zip(tr.final_state.c_k.iter().zip(&init.c_k)).enumerate() {
            let exact = b * Complex64::from_polar(1.0, -d * 37.0);
            assert!((a - exact).norm() < 1e-12, "mode {j}");
        }
    }

    #[test]
    fn point_emitter_decays_at_golden_rule_rate() {
        let model = WaveguideModel::default();
        let seq = point(0.002);
        let gamma = crate::analysis::ww_decay_rate(&seq, 6.0, &model).unwrap();
        let plan = SimulationPlan::single(seq, 6.0, model, 3.0 / gamma).with_record_interval(0.5);
        let tr = evolve_single(&plan).unwrap();
        for (&t, &p) in tr.times.iter().zip(&tr.populations[0]) {
            let expected = (-gamma * t).exp();
            assert!((p - expected).abs() < 0.05 * expected, "t = {t}: {p} vs {expected}");
        }
        assert!(tr.max_norm_drift < 1e-6);
    }

    #[test]
    fn forward_then_backward_returns() {
        let model = small();
        let grid = build_kgrid(&model).unwrap();
        let seq = CouplingSequence::new(
            vec![CouplingPoint::new(-1.0, 0.7, 0.3), CouplingPoint::new(2.0, 0.5, -1.0)],
            0.05,
            1.0,
            "pair",
        )
        .unwrap();
        let g = vec![k_coupling(&seq, &grid)];
        let d = grid.detunings(4.5);
        let dt = 0.01 / d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let fwd = Propagator::new(g.clone(), &d, dt);
        let bwd = Propagator::new(g, &d, -dt);
        let mut s = EvolutionState::excited(1, grid.len());
        for _ in 0..50 {
            fwd.step(&mut s);
        }
        for _ in 0..20 {
            let before = s.clone();
            fwd.step(&mut s);
            bwd.step(&mut s);
            let err = (s.c_e[0] - before.c_e[0]).norm()
                + s.c_k.iter().zip(&before.c_k).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{err}");
        }
    }

    #[test]
    fn evolution_is_linear() {
        let model = small();
        let grid = build_kgrid(&model).unwrap();
        let seq = point(0.05);
        let plan = SimulationPlan::single(seq, 4.5, model, 10.0);
        let base = evolve_from(&plan, EvolutionState::excited(1, grid.len())).unwrap();
        let mut scaled = EvolutionState::excited(1, grid.len());
        let s = Complex64::new(0.3, -0.4);
        scaled.c_e[0] = s;
        let tr = evolve_from(&plan, scaled).unwrap();
        assert!((tr.final_state.c_e[0] - base.final_state.c_e[0] * s).norm() < 1e-14);
        for (a, b) in tr.final_state.c_k.iter().zip(&base.final_state.c_k) {
            assert!((a - b * s).norm() < 1e-14);
        }
    }

    #[test]
    fn step_is_aligned_to_records() {
        let plan = SimulationPlan::single(point(0.0), 4.5, WaveguideModel::default(), 1.0);
        let dt = aligned_step(&plan, 4.5).unwrap();
        assert!(dt * 4.5 <= 0.1);
        assert_relative_eq!((1.0 / dt).round() * dt, 1.0, max_relative = 1e-12);
        assert!(aligned_step(&plan.clone().with_dt(0.5), 4.5).is_err());
        assert!(aligned_step(&plan.clone().with_dt(-0.5), 4.5).is_err());
        assert_relative_eq!(aligned_step(&plan.with_dt(0.01), 4.5).unwrap(), 0.01, max_relative = 1e-12);
    }

    #[test]
    fn rejects_malformed_plans() {
        let mut plan = SimulationPlan::single(point(0.0), 4.5, small(), 1.0);
        assert!(evolve_pair(&plan).is_err());
        plan.t_final = -1.0;
        assert!(evolve(&plan).is_err());
        let pair = SimulationPlan::pair(point(0.0), 1.0, 4.5, small(), 1.0);
        assert!(evolve_single(&pair).is_err());
    }

    #[test]
    fn norm_abort_is_reported() {
        // Absurd coupling with the coarsest admissible step breaks the integrator.
        let plan = SimulationPlan::single(point(50.0), 4.5, small(), 5.0);
        assert!(matches!(evolve(&plan), Err(Error::NormDrift { .. })));
    }

    #[test]
    fn field_obeys_parseval() {
        let model = small();
        let grid = build_kgrid(&model).unwrap();
        let mut s = EvolutionState::excited(1, grid.len());
        for (j, c) in s.c_k.iter_mut().enumerate() {
            *c = Complex64::new((j as f64 * 0.37).sin(), (j as f64 * 0.11).cos()) * 0.01;
        }
        // Sampling one period at the Nyquist-sufficient spacing 2π/(2 k_max) is exact.
        let n = 2 * grid.len();
        let lw = model.length();
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * lw / n as f64).collect();
        let dx = lw / n as f64;
        let total: f64 = field_profile(&s, &grid, &xs).iter().sum::<f64>() * dx;
        assert_relative_eq!(total, s.photon_weight(), max_relative = 1e-10);
        let zero = EvolutionState::excited(1, grid.len());
        assert!(field_profile(&zero, &grid, &xs).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mode_field_matches_direct_sum() {
        let model = WaveguideModel::default();
        let grid = build_kgrid(&model).unwrap();
        let amps: Vec<Complex64> = (0..grid.len()).map(|j| Complex64::new((j as f64).sin(), 0.5)).collect();
        let x = 123.456;
        let direct: Complex64 = grid
            .momenta()
            .iter()
            .zip(&amps)
            .map(|(&k, a)| a * Complex64::from_polar(1.0, k * x))
            .sum::<Complex64>()
            / model.length().sqrt();
        let fast = mode_field(&grid, &amps, &[x])[0];
        assert!((fast - direct).norm() < 1e-11 * direct.norm().max(1.0));
    }
}
