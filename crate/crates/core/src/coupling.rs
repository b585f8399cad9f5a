//! Giant-atom coupling sequences and their momentum-space couplings.
//!
//! A sequence is a set of points `(x_i, A_i, θ_i)` with physical coupling
//! `g(x_i) = G_0·A_i·e^{iθ_i}`. Positions are stored in units of `λ_0` (the
//! unit the published tables use) together with `λ_0` itself, so that the
//! columnar text format round-trips bit-exactly; [`CouplingSequence::positions`]
//! returns raw lengths.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::waveguide::{KGrid, ProfileKind, TargetProfile, WaveguideModel};

/// Default overall coupling scale.
pub const DEFAULT_G0: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingPoint {
    /// Position in units of λ_0.
    pub x: f64,
    /// Dimensionless non-negative amplitude (multiple of G_0).
    pub amplitude: f64,
    /// Phase in (-π, π].
    pub phase: f64,
}

impl CouplingPoint {
    pub fn new(x: f64, amplitude: f64, phase: f64) -> Self {
        Self {
            x,
            amplitude,
            phase: wrap_phase(phase),
        }
    }

    /// Dimensionless complex coupling `A·e^{iθ}`.
    pub fn complex(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Maps a phase into (-π, π].
pub fn wrap_phase(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSequence {
    points: Vec<CouplingPoint>,
    /// Overall coupling scale G_0.
    pub g0: f64,
    /// Length unit of the stored positions.
    pub lambda0: f64,
    pub label: String,
}

impl CouplingSequence {
    /// Builds a sequence, re-sorting points by position. Coincident positions
    /// are accepted here and reported by [`validate`].
    pub fn new(
        mut points: Vec<CouplingPoint>,
        g0: f64,
        lambda0: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::InvalidSequence(format!("λ_0 must be positive, got {lambda0}")));
        }
        if !(g0 >= 0.0 && g0.is_finite()) {
            return Err(Error::InvalidSequence(format!("G_0 must be non-negative, got {g0}")));
        }
        for p in points.iter_mut() {
            if !p.x.is_finite() || !p.amplitude.is_finite() || !p.phase.is_finite() {
                return Err(Error::InvalidSequence("non-finite coupling point".into()));
            }
            if p.amplitude < 0.0 {
                return Err(Error::InvalidSequence(format!(
                    "negative amplitude {} at x = {}",
                    p.amplitude, p.x
                )));
            }
            p.phase = wrap_phase(p.phase);
        }
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        Ok(Self {
            points,
            g0,
            lambda0,
            label: label.into(),
        })
    }

    /// Builds a sequence from raw (non-λ_0) positions.
    pub fn from_raw(
        positions: &[f64],
        amplitudes: &[f64],
        phases: &[f64],
        g0: f64,
        lambda0: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if positions.len() != amplitudes.len() || positions.len() != phases.len() {
            return Err(Error::InvalidSequence("column lengths differ".into()));
        }
        let points = positions
            .iter()
            .zip(amplitudes)
            .zip(phases)
            .map(|((&x, &a), &t)| CouplingPoint::new(x / lambda0, a, t))
            .collect();
        Self::new(points, g0, lambda0, label)
    }

    pub fn points(&self) -> &[CouplingPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Raw positions.
    pub fn positions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x * self.lambda0).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.amplitude).collect()
    }

    /// Raw extent `x_N - x_1` (zero for fewer than two points).
    pub fn extent(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => (b.x - a.x) * self.lambda0,
            _ => 0.0,
        }
    }

    /// Raw span `(x_1, x_N)`, if non-empty.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((
            self.points.first()?.x * self.lambda0,
            self.points.last()?.x * self.lambda0,
        ))
    }

    pub fn is_real_nonnegative(&self) -> bool {
        self.points.iter().all(|p| p.phase == 0.0)
    }

    /// Copy with every position shifted by the raw distance `d`.
    pub fn translated(&self, d: f64) -> Self {
        let shift = d / self.lambda0;
        let mut out = self.clone();
        for p in out.points.iter_mut() {
            p.x += shift;
        }
        out
    }

    /// Copy with a new overall scale.
    pub fn with_g0(&self, g0: f64) -> Self {
        Self { g0, ..self.clone() }
    }

    /// Union of two sequences on the same scale (used for linearity checks).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.g0 != other.g0 || self.lambda0 != other.lambda0 {
            return Err(Error::InvalidSequence("cannot concatenate sequences on different scales".into()));
        }
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Self::new(points, self.g0, self.lambda0, format!("{}+{}", self.label, other.label))
    }

    /// Copy with the points whose amplitude is below `fraction` of the largest removed.
    pub fn pruned(&self, fraction: f64) -> Self {
        let max = self.points.iter().map(|p| p.amplitude).fold(0.0, f64::max);
        let mut out = self.clone();
        out.points.retain(|p| p.amplitude >= fraction * max);
        out
    }
}

/// Momentum-space coupling `G_k = G_0 Σ_i A_i e^{iθ_i} e^{-ik x_i}` on every grid point.
pub fn k_coupling(seq: &CouplingSequence, grid: &KGrid) -> Vec<Complex64> {
    k_coupling_at(seq, grid.momenta())
}

/// [`k_coupling`] at arbitrary momenta.
pub fn k_coupling_at(seq: &CouplingSequence, momenta: &[f64]) -> Vec<Complex64> {
    let xs = seq.positions();
    let gs: Vec<Complex64> = seq.points.iter().map(|p| p.complex() * seq.g0).collect();
    momenta
        .iter()
        .map(|&k| {
            xs.iter()
                .zip(&gs)
                .map(|(&x, &g)| {
                    let (s, c) = (k * x).sin_cos();
                    g * Complex64::new(c, -s)
                })
                .sum()
        })
        .collect()
}

/// True iff `G_k = conj(G_{-k})` on every grid pair to 1e-12 relative to `max |G|`.
pub fn conjugate_symmetry_check(seq: &CouplingSequence, grid: &KGrid) -> bool {
    let g = k_coupling(seq, grid);
    let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return true;
    }
    (0..g.len()).all(|j| (g[j] - g[grid.mirror(j)].conj()).norm() <= 1e-12 * scale)
}

/// Median of `|G_k|` over the out-of-gap grid points: the reference level for
/// in-gap residuals.
pub fn plateau_level(g: &[Complex64], grid: &KGrid, profile: &TargetProfile) -> f64 {
    let mut out: Vec<f64> = grid
        .momenta()
        .iter()
        .zip(g)
        .filter(|(&k, _)| !profile.in_gap(k))
        .map(|(_, z)| z.norm())
        .collect();
    median(&mut out)
}

/// Largest in-gap `|G_k|` over the grid, relative to [`plateau_level`].
pub fn in_gap_residual(g: &[Complex64], grid: &KGrid, profile: &TargetProfile) -> f64 {
    let plateau = plateau_level(g, grid, profile);
    let worst = grid
        .momenta()
        .iter()
        .zip(g)
        .filter(|(&k, _)| profile.in_gap(k))
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max);
    worst / plateau
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Continuous inverse Fourier transform of the band-gap target (per unit G_0):
/// `g_I(x) = sin(k_max x)/(πx) - 2 sin(k_d x/2) cos(k_0 x)/(πx)`.
pub fn ift_kernel(profile: &TargetProfile, x: f64) -> f64 {
    let (kmax, kd, k0) = (profile.k_max, profile.kd, profile.k0);
    if x.abs() < 1e-6 {
        // Series through O(x²): sin(ax)/(πx) ≈ a/π - a³x²/(6π).
        let a = kmax;
        let b = kd / 2.0;
        let lead = (a - 2.0 * b) / PI;
        let second = -(a.powi(3) - 2.0 * (b.powi(3) + 3.0 * b * k0 * k0)) / (6.0 * PI);
        return lead + second * x * x;
    }
    ((kmax * x).sin() - 2.0 * (kd * x / 2.0).sin() * (k0 * x).cos()) / (PI * x)
}

/// Samples the band-gap iFT kernel at `x = n·X_T` for `|x| ≤ half_length`.
///
/// Amplitudes carry `|g_I(x)|·X_T` (the Riemann weight, so that `G_k`
/// approximates the target for any spacing) and the sign becomes a phase of 0 or π.
pub fn ift_baseline(
    profile: &TargetProfile,
    half_length: f64,
    sample_spacing: f64,
) -> Result<CouplingSequence> {
    if profile.kind != ProfileKind::BandGap {
        return Err(Error::InvalidProfile("the iFT baseline needs a band-gap profile".into()));
    }
    if !(half_length > 0.0 && sample_spacing > 0.0) {
        return Err(Error::InvalidArgument("window and spacing must be positive".into()));
    }
    let n_max = (half_length / sample_spacing * (1.0 + 1e-12)).floor() as i64;
    let lambda0 = profile.lambda0();
    let points = (-n_max..=n_max)
        .map(|n| {
            let x = n as f64 * sample_spacing;
            let g = ift_kernel(profile, x) * sample_spacing;
            CouplingPoint::new(x / lambda0, g.abs(), if g < 0.0 { PI } else { 0.0 })
        })
        .collect();
    CouplingSequence::new(points, profile.g0, lambda0, "ift_baseline")
}

/// Minimum point count for the iFT route, `ceil(4 k_max / k_d)`.
pub fn nyquist_bound(profile: &TargetProfile) -> usize {
    let ratio = 4.0 * profile.k_max / profile.kd;
    // Guard against 119.99999999 from representation error.
    (ratio - 1e-9 * ratio).ceil() as usize
}

/// Physical design constraints. Lengths are in units of λ_0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSet {
    /// η: neighbours must be strictly farther apart than `η·λ_0`.
    pub min_spacing: f64,
    /// L: points must lie strictly inside `(-L/2, L/2)`.
    pub max_extent: f64,
    pub max_points: usize,
    /// Linear-coupler case: all phases zero.
    pub require_nonneg_real: bool,
    /// Required ratio `L̄_0 / L`.
    pub markov_margin: f64,
    /// Exclude uncoupled points (infinite wavepacket size) from `L̄_0`.
    pub exclude_uncoupled: bool,
}

impl ConstraintSet {
    pub fn new(
        min_spacing: f64,
        max_extent: f64,
        max_points: usize,
        require_nonneg_real: bool,
        markov_margin: f64,
    ) -> Result<Self> {
        if !(min_spacing > 0.0 && max_extent > 0.0 && max_points >= 1 && markov_margin > 1.0) {
            return Err(Error::InvalidArgument(
                "constraints need η > 0, L > 0, N_max ≥ 1 and markov_margin > 1".into(),
            ));
        }
        Ok(Self {
            min_spacing,
            max_extent,
            max_points,
            require_nonneg_real,
            markov_margin,
            exclude_uncoupled: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
    /// Average single-point wavepacket size `L̄_0` (raw length).
    pub mean_wavepacket_size: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<14} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail)?;
        }
        Ok(())
    }
}

/// Checks a sequence against a constraint set.
pub fn validate(seq: &CouplingSequence, cons: &ConstraintSet, model: &WaveguideModel) -> ValidationReport {
    let lambda0 = seq.lambda0;
    let xs = seq.positions();
    let mut checks = Vec::with_capacity(5);

    let min_gap = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let required = cons.min_spacing * lambda0;
    checks.push(ConstraintCheck {
        name: "min-spacing",
        passed: min_gap > required,
        detail: format!("min gap {:.6} λ0 vs η = {} λ0", min_gap / lambda0, cons.min_spacing),
    });

    let half = cons.max_extent * lambda0 / 2.0;
    let inside = xs.iter().all(|&x| x > -half && x < half);
    checks.push(ConstraintCheck {
        name: "extent",
        passed: inside,
        detail: format!(
            "span {:.6}..{:.6} λ0 vs (-{}, {}) λ0",
            xs.first().copied().unwrap_or(0.0) / lambda0,
            xs.last().copied().unwrap_or(0.0) / lambda0,
            cons.max_extent / 2.0,
            cons.max_extent / 2.0
        ),
    });

    checks.push(ConstraintCheck {
        name: "count",
        passed: seq.len() <= cons.max_points,
        detail: format!("N = {} vs N_max = {}", seq.len(), cons.max_points),
    });

    if cons.require_nonneg_real {
        let bad = seq.points().iter().filter(|p| p.phase != 0.0 || p.amplitude < 0.0).count();
        checks.push(ConstraintCheck {
            name: "nonnegativity",
            passed: bad == 0,
            detail: format!("{bad} point(s) with non-zero phase"),
        });
    }

    let sizes = wavepacket_sizes(seq, model);
    let mean = mean_wavepacket_size(&sizes, cons.exclude_uncoupled);
    let limit = cons.max_extent * lambda0;
    checks.push(ConstraintCheck {
        name: "markovianity",
        passed: mean / limit >= cons.markov_margin,
        detail: format!(
            "L̄0 = {:.4e} λ0, L̄0/L = {:.3e} vs margin {}",
            mean / lambda0,
            mean / limit,
            cons.markov_margin
        ),
    });

    ValidationReport {
        checks,
        mean_wavepacket_size: mean,
    }
}

/// Weisskopf-Wigner rate and emitted wavepacket size of a single coupling point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavepacket {
    pub decay_rate: f64,
    /// Raw length `2c/Γ`; infinite for an uncoupled point.
    pub size: f64,
}

/// Per-point rates `Γ_i = 2π|g'_i|²/c` with `g'_i = G_0 A_i sqrt(L_w/2π)`, and
/// sizes `L_i = 2c/Γ_i`.
pub fn wavepacket_sizes(seq: &CouplingSequence, model: &WaveguideModel) -> Vec<Wavepacket> {
    let norm = model.length() / (2.0 * PI);
    seq.points()
        .iter()
        .map(|p| {
            let g2 = (seq.g0 * p.amplitude).powi(2) * norm;
            let decay_rate = 2.0 * PI * g2 / model.c;
            let size = if decay_rate > 0.0 {
                2.0 * model.c / decay_rate
            } else {
                f64::INFINITY
            };
            Wavepacket { decay_rate, size }
        })
        .collect()
}

/// `L̄_0 = (1/N) Σ L_i`, optionally skipping uncoupled points.
pub fn mean_wavepacket_size(sizes: &[Wavepacket], exclude_uncoupled: bool) -> f64 {
    let kept: Vec<f64> = sizes
        .iter()
        .map(|w| w.size)
        .filter(|s| !exclude_uncoupled || s.is_finite())
        .collect();
    if kept.is_empty() {
        return f64::INFINITY;
    }
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Applies Gaussian fabrication disorder: `A_i → A_i + δA_i`, `δA_i ~ N(0, (σ_A A_i)²)`,
/// and `θ_i → θ_i + δθ_i`, `δθ_i ~ N(0, σ_φ²)`. Negative amplitudes are clamped to 0.
///
/// Each point draws from its own ChaCha stream (`seed`, stream = point index),
/// so the result does not depend on how many points precede it.
pub fn perturb(seq: &CouplingSequence, sigma_a: f64, sigma_phi: f64, seed: u64) -> Result<CouplingSequence> {
    if !(sigma_a >= 0.0 && sigma_phi >= 0.0) {
        return Err(Error::InvalidArgument("disorder widths must be non-negative".into()));
    }
    let mut out = seq.clone();
    for (i, p) in out.points.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let za: f64 = StandardNormal.sample(&mut rng);
        let zp: f64 = StandardNormal.sample(&mut rng);
        if sigma_a > 0.0 {
            p.amplitude = (p.amplitude + sigma_a * p.amplitude * za).max(0.0);
        }
        if sigma_phi > 0.0 {
            p.phase = wrap_phase(p.phase + sigma_phi * zp);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables;
    use crate::waveguide::build_kgrid;
    use approx::assert_relative_eq;

    fn grid() -> KGrid {
        build_kgrid(&WaveguideModel::default()).unwrap()
    }

    fn seq(points: &[(f64, f64, f64)], g0: f64) -> CouplingSequence {
        let pts = points.iter().map(|&(x, a, t)| CouplingPoint::new(x, a, t)).collect();
        CouplingSequence::new(pts, g0, 1.0, "test").unwrap()
    }

    #[test]
    fn point_emitter_is_flat() {
        let s = seq(&[(0.0, 1.0, 0.0)], 1.0);
        for z in k_coupling(&s, &grid()) {
            assert_relative_eq!(z.re, 1.0, epsilon = 1e-15);
            assert_relative_eq!(z.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn symmetric_pair_is_cosine() {
        let x = 0.7;
        let s = seq(&[(-x, 1.0, 0.0), (x, 1.0, 0.0)], 1.0);
        let g = grid();
        for (z, &k) in k_coupling(&s, &g).iter().zip(g.momenta()) {
            assert_relative_eq!(z.re, 2.0 * (k * x).cos(), epsilon = 1e-12);
            assert!(z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn sequences_are_sorted_and_phases_wrapped() {
        let s = seq(&[(1.0, 0.5, 3.0 * PI), (-1.0, 0.2, -PI)], 1.0);
        assert_eq!(s.points()[0].x, -1.0);
        assert_relative_eq!(s.points()[1].phase, PI, epsilon = 1e-12);
        assert_eq!(s.points()[0].phase, PI);
        assert!(CouplingSequence::new(vec![CouplingPoint::new(0.0, -1.0, 0.0)], 1.0, 1.0, "").is_err());
    }

    #[test]
    fn wrap_phase_range() {
        for t in [-10.0, -PI, -1.0, 0.0, 1.0, PI, 4.0, 100.0] {
            let w = wrap_phase(t);
            assert!(w > -PI && w <= PI, "{t} -> {w}");
            assert_relative_eq!((t - w).rem_euclid(2.0 * PI).min(2.0 * PI - (t - w).rem_euclid(2.0 * PI)), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let g = grid();
        assert!(conjugate_symmetry_check(&tables::table_s1(), &g));
        assert!(!conjugate_symmetry_check(&tables::table_s2(), &g));
        let s = seq(&[(-0.3, 0.2, 0.0), (0.1, 0.9, 0.0), (1.7, 0.4, 0.0)], 1.0);
        assert!(conjugate_symmetry_check(&s, &g));
    }

    #[test]
    fn ift_kernel_at_origin() {
        let p = TargetProfile::band_gap(1.5, 0.1, 1.0, 3.0).unwrap();
        assert_relative_eq!(ift_kernel(&p, 0.0), 2.9 / PI, max_relative = 1e-15);
        assert_relative_eq!(ift_kernel(&p, 0.0), 0.923098669, max_relative = 1e-8);
        // Series branch joins the direct formula continuously.
        let direct = |x: f64| ((3.0 * x).sin() - 2.0 * (0.05 * x).sin() * (1.5 * x).cos()) / (PI * x);
        assert_relative_eq!(ift_kernel(&p, 0.99e-6), direct(0.99e-6), max_relative = 1e-9);
        assert_relative_eq!(ift_kernel(&p, 1e-3), direct(1e-3), max_relative = 1e-12);
    }

    #[test]
    fn ift_signs_become_pi_phases() {
        let p = TargetProfile::band_gap(1.5, 0.1, 1.0, 3.0).unwrap();
        let s = ift_baseline(&p, 20.0, 0.25).unwrap();
        assert_eq!(s.len(), 161);
        for (pt, x) in s.points().iter().zip(s.positions()) {
            let g = ift_kernel(&p, x);
            let expected = if g < 0.0 { PI } else { 0.0 };
            assert_eq!(pt.phase, expected);
            assert_relative_eq!(pt.amplitude, g.abs() * 0.25, max_relative = 1e-12);
        }
        // there are sign changes
        assert!(s.points().iter().any(|p| p.phase == PI));
        let chiral = TargetProfile::chiral(1.5, 1.0, 1.0, 3.0).unwrap();
        assert!(ift_baseline(&chiral, 10.0, 1.0).is_err());
        assert!(ift_baseline(&p, 0.0, 1.0).is_err());
    }

    #[test]
    fn nyquist() {
        let p = |kmax, kd| TargetProfile::band_gap(kmax / 2.0, kd, 1.0, kmax).unwrap();
        assert_eq!(nyquist_bound(&TargetProfile::band_gap(1.5, 0.1, 1.0, 3.0).unwrap()), 120);
        assert_eq!(nyquist_bound(&p(1.0, 1.0 - 1e-12)), 4);
        // k_d = k_max is not a valid gap profile, evaluate the formula directly
        let raw = TargetProfile { kind: ProfileKind::BandGap, k0: 1.5, kd: 3.0, g0: 1.0, k_max: 3.0 };
        assert_eq!(nyquist_bound(&raw), 4);
        let raw = TargetProfile { kind: ProfileKind::BandGap, k0: 0.5, kd: 1.0, g0: 1.0, k_max: 1.0 };
        assert_eq!(nyquist_bound(&raw), 4);
    }

    #[test]
    fn validate_golden_table() {
        let s = tables::table_s1();
        let cons = ConstraintSet::new(0.1, 17.0, 30, true, 10.0).unwrap();
        let report = validate(&s, &cons, &WaveguideModel::default());
        assert!(report.passed(), "{report}");
        // Frozen from an independent numpy evaluation of the per-point sizes.
        assert_relative_eq!(report.mean_wavepacket_size / s.lambda0, 1.654348605553e5, max_relative = 1e-9);
        assert!(report.mean_wavepacket_size > 1e3 * 17.0 * s.lambda0);
    }

    #[test]
    fn validate_failures() {
        let model = WaveguideModel::default();
        let cons = ConstraintSet::new(0.1, 17.0, 5, true, 10.0).unwrap();
        let dup = seq(&[(0.0, 0.5, 0.0), (0.0, 0.5, 0.0)], 0.002);
        let r = validate(&dup, &cons, &model);
        assert!(!r.check("min-spacing").unwrap().passed);
        assert!(r.check("count").unwrap().passed);

        let ten: Vec<_> = (0..10).map(|i| (i as f64 * 0.5 - 2.0, 0.3, 0.0)).collect();
        let r = validate(&seq(&ten, 0.002), &cons, &model);
        assert!(!r.check("count").unwrap().passed);
        assert!(r.check("min-spacing").unwrap().passed);

        let wide = seq(&[(-9.0, 0.5, 0.0), (0.0, 0.5, 0.0)], 0.002);
        assert!(!validate(&wide, &cons, &model).check("extent").unwrap().passed);

        let phased = seq(&[(0.0, 0.5, 0.3)], 0.002);
        assert!(!validate(&phased, &cons, &model).check("nonnegativity").unwrap().passed);

        let strong = seq(&[(0.0, 50.0, 0.0)], 0.002);
        assert!(!validate(&strong, &cons, &model).check("markovianity").unwrap().passed);
    }

    #[test]
    fn wavepacket_of_strongest_table_point() {
        let model = WaveguideModel::default();
        let s = tables::table_s1();
        let sizes = wavepacket_sizes(&s, &model);
        let strongest = s
            .points()
            .iter()
            .zip(&sizes)
            .max_by(|a, b| a.0.amplitude.total_cmp(&b.0.amplitude))
            .unwrap();
        assert_eq!(strongest.0.amplitude, 0.9543);
        let size = strongest.1.size / s.lambda0;
        assert!((150.0..250.0).contains(&size), "{size}");
    }

    #[test]
    fn wavepacket_scaling() {
        let model = WaveguideModel::default();
        let a = seq(&[(0.0, 0.4, 0.0)], 0.002);
        let b = seq(&[(0.0, 0.8, 0.0)], 0.002);
        let (wa, wb) = (wavepacket_sizes(&a, &model)[0], wavepacket_sizes(&b, &model)[0]);
        assert_relative_eq!(wb.decay_rate, 4.0 * wa.decay_rate, max_relative = 1e-12);

        let fast = WaveguideModel { c: 6.0, ..model };
        let wf = wavepacket_sizes(&a, &fast)[0];
        assert_relative_eq!(wf.size, 4.0 * wa.size, max_relative = 1e-12);

        let zero = seq(&[(0.0, 0.0, 0.0), (1.0, 0.5, 0.0)], 0.002);
        let sizes = wavepacket_sizes(&zero, &model);
        assert!(sizes[0].size.is_infinite());
        assert!(mean_wavepacket_size(&sizes, false).is_infinite());
        assert_eq!(mean_wavepacket_size(&sizes, true), sizes[1].size);
    }

    #[test]
    fn zero_disorder_is_identity_and_seeds_replay() {
        let s = tables::table_s2();
        assert_eq!(perturb(&s, 0.0, 0.0, 7).unwrap(), s);
        let a = perturb(&s, 0.1, 0.3, 42).unwrap();
        let b = perturb(&s, 0.1, 0.3, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, perturb(&s, 0.1, 0.3, 43).unwrap());
        assert_eq!(a.positions(), s.positions());
        assert!(perturb(&s, -0.1, 0.0, 1).is_err());
    }

    #[test]
    fn disorder_mean_converges() {
        // Law of large numbers on the sampler: the ensemble mean of every
        // amplitude stays within 3 standard errors of the clean value.
        let s = tables::table_s2();
        let n = 4000;
        let mut sums = vec![0.0; s.len()];
        for seed in 0..n {
            for (acc, p) in sums.iter_mut().zip(perturb(&s, 0.1, 0.0, seed).unwrap().points()) {
                *acc += p.amplitude;
            }
        }
        for (acc, p) in sums.iter().zip(s.points()) {
            let mean = acc / n as f64;
            let bound = 3.0 * 0.1 * p.amplitude / (n as f64).sqrt();
            assert!((mean - p.amplitude).abs() < bound, "{mean} vs {}", p.amplitude);
        }
    }

    #[test]
    fn clamps_negative_amplitudes() {
        let s = seq(&[(0.0, 1.0, 0.0); 1], 1.0);
        let clamped = (0..500)
            .map(|seed| perturb(&s, 2.0, 0.0, seed).unwrap().points()[0].amplitude)
            .filter(|&a| a == 0.0)
            .count();
        assert!(clamped > 100);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_grid() -> KGrid {
            build_kgrid(&WaveguideModel { c: 3.0, k_max: 3.0, delta_k: 0.05 }).unwrap()
        }

        fn arb_seq(phases: bool) -> impl Strategy<Value = CouplingSequence> {
            prop::collection::vec((-5.0f64..5.0, 0.0f64..1.0, -3.0f64..3.0), 1..8).prop_map(move |pts| {
                let pts = pts
                    .into_iter()
                    .map(|(x, a, t)| CouplingPoint::new(x, a, if phases { t } else { 0.0 }))
                    .collect();
                CouplingSequence::new(pts, 0.7, 1.3, "p").unwrap()
            })
        }

        proptest! {
            #[test]
            fn linear_under_concatenation(a in arb_seq(true), b in arb_seq(true)) {
                let g = small_grid();
                let (ga, gb) = (k_coupling(&a, &g), k_coupling(&b, &g));
                let gab = k_coupling(&a.concat(&b).unwrap(), &g);
                for j in 0..g.len() {
                    prop_assert!((gab[j] - ga[j] - gb[j]).norm() < 1e-12);
                }
            }

            #[test]
            fn translation_is_a_phase_ramp(a in arb_seq(true), d in -10.0f64..10.0) {
                let g = small_grid();
                let base = k_coupling(&a, &g);
                let moved = k_coupling(&a.translated(d), &g);
                for (j, &k) in g.momenta().iter().enumerate() {
                    let expected = base[j] * Complex64::from_polar(1.0, -k * d);
                    prop_assert!((moved[j] - expected).norm() < 1e-11);
                }
            }

            #[test]
            fn global_phase_leaves_magnitude(a in arb_seq(true), phi in -3.0f64..3.0) {
                let g = small_grid();
                let pts = a.points().iter().map(|p| CouplingPoint::new(p.x, p.amplitude, p.phase + phi)).collect();
                let b = CouplingSequence::new(pts, a.g0, a.lambda0, "b").unwrap();
                for (za, zb) in k_coupling(&a, &g).iter().zip(k_coupling(&b, &g)) {
                    prop_assert!((za.norm() - zb.norm()).abs() < 1e-12);
                }
            }

            #[test]
            fn real_sequences_are_hermitian(a in arb_seq(false)) {
                prop_assert!(conjugate_symmetry_check(&a, &small_grid()));
            }
        }
    }
}
