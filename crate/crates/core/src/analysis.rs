//! Spectral and steady-state observables of a giant atom.
//!
//! Conventions match [`crate::dynamics`]: the discrete sums (self-energy,
//! residue, bound state, dipole-dipole) run over the grid couplings `G_k`, and
//! continuum rates use the density-normalized `G'_k = G_k·sqrt(L_w/2π)`.
//! Energies `E` are detunings from ω_q; a frequency band is `(lo, hi)` in
//! absolute frequency.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::coupling::{k_coupling, k_coupling_at, CouplingSequence};
use crate::dynamics::mode_field;
use crate::error::{Error, Result};
use crate::waveguide::{build_kgrid, KGrid, WaveguideModel};

/// Dense samples used by the pole scan.
pub const POLE_SCAN_SAMPLES: usize = 10_000;

/// Grid couplings and detunings of one atom at one frequency.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub grid: KGrid,
    pub g: Vec<Complex64>,
    pub detunings: Vec<f64>,
    pub omega_q: f64,
}

impl Spectrum {
    pub fn new(seq: &CouplingSequence, omega_q: f64, model: &WaveguideModel) -> Result<Self> {
        let grid = build_kgrid(model)?;
        let g = k_coupling(seq, &grid);
        let detunings = grid.detunings(omega_q);
        Ok(Self { grid, g, detunings, omega_q })
    }

    /// Half-width of the resonance exclusion, `c·δk/2`.
    fn regularization(&self) -> f64 {
        0.5 * self.grid.c() * self.grid.delta_k()
    }

    /// `Σ_e(E) = Σ_k |G_k|²/(E - Δ_k)`; `None` exactly on a coupled grid detuning.
    pub fn self_energy(&self, e: f64) -> Option<f64> {
        let mut s = 0.0;
        for (z, &d) in self.g.iter().zip(&self.detunings) {
            let g2 = z.norm_sqr();
            if g2 == 0.0 {
                continue;
            }
            if e == d {
                return None;
            }
            s += g2 / (e - d);
        }
        Some(s)
    }

    /// `tan θ = Σ_k |G_k|²/(E - Δ_k)²`.
    pub fn mixing(&self, e: f64) -> f64 {
        self.g
            .iter()
            .zip(&self.detunings)
            .map(|(z, &d)| z.norm_sqr() / ((e - d) * (e - d)))
            .sum()
    }

    /// Pole-search window for a frequency band: detunings of the band shrunk by `2c·δk`.
    pub fn gap_window(&self, band: (f64, f64)) -> (f64, f64) {
        let eps = 2.0 * self.grid.c() * self.grid.delta_k();
        (band.0 - self.omega_q + eps, band.1 - self.omega_q - eps)
    }

    /// Bound-state root of `E = Σ_e(E)` in the band window.
    ///
    /// Between consecutive coupled grid detunings `f(E) = E - Σ_e(E)` always
    /// crosses zero once, next to the pole; those quasi-continuum roots carry
    /// almost no atomic weight. Every bracketed root is located and the one
    /// with the largest residue is returned (ties: closest to zero).
    pub fn find_pole(&self, band: (f64, f64)) -> Result<f64> {
        let (lo, hi) = self.gap_window(band);
        if !(hi > lo) {
            return Err(Error::NoRoot { lo, hi });
        }
        let mut poles: Vec<f64> = self
            .g
            .iter()
            .zip(&self.detunings)
            .filter(|(z, &d)| z.norm_sqr() > 0.0 && d >= lo && d <= hi)
            .map(|(_, &d)| d)
            .collect();
        poles.sort_by(f64::total_cmp);
        poles.dedup();

        let f = |e: f64| self.self_energy(e).map(|s| e - s);
        let n = POLE_SCAN_SAMPLES;
        let sample = |i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        // Brackets (a, b) with f(a⁺) < 0 ≤ f(b⁻); pole endpoints count as ∓∞.
        let mut brackets = Vec::new();
        let mut prev = (sample(0), f(sample(0)));
        let mut first_pole = 0usize;
        for i in 1..n {
            let e = sample(i);
            let cur = (e, f(e));
            while first_pole < poles.len() && poles[first_pole] < prev.0 {
                first_pole += 1;
            }
            let mut last = first_pole;
            while last < poles.len() && poles[last] <= e {
                last += 1;
            }
            let inside = &poles[first_pole..last];
            let neg = |v: Option<f64>| v.is_some_and(|v| v < 0.0);
            let nonneg = |v: Option<f64>| v.is_some_and(|v| v >= 0.0);
            match inside {
                [] => {
                    if neg(prev.1) && nonneg(cur.1) {
                        brackets.push((prev.0, e));
                    }
                }
                [p0, .., pl] | [p0 @ pl] => {
                    if neg(prev.1) && *p0 > prev.0 {
                        brackets.push((prev.0, *p0));
                    }
                    for w in inside.windows(2) {
                        brackets.push((w[0], w[1]));
                    }
                    if nonneg(cur.1) && *pl < e {
                        brackets.push((*pl, e));
                    }
                }
            }
            prev = cur;
        }
        brackets
            .into_iter()
            .map(|(a, b)| {
                let root = self.bisect(a, b);
                (root, self.residue(root))
            })
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.abs().total_cmp(&x.0.abs())))
            .map(|(root, _)| root)
            .ok_or(Error::NoRoot { lo, hi })
    }

    /// Bisection on `(a, b)` evaluating only interior points.
    fn bisect(&self, mut a: f64, mut b: f64) -> f64 {
        let f = |e: f64| e - self.self_energy(e).unwrap_or(f64::NAN);
        loop {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        // a and b are adjacent floats; prefer whichever is not a pole.
        match (self.self_energy(a), self.self_energy(b)) {
            (Some(sa), Some(sb)) if (a - sa).abs() <= (b - sb).abs() => a,
            (Some(_), None) => a,
            _ => b,
        }
    }

    /// Steady atomic amplitude `1/(1 + tan θ)` at the pole.
    pub fn residue(&self, e_b: f64) -> f64 {
        1.0 / (1.0 + self.mixing(e_b))
    }

    /// Weak-coupling estimate `(1 + Σ_k |G_k/Δ_k|²)^{-2}`, near-resonant terms dropped.
    pub fn weak_coupling_population(&self) -> f64 {
        let reg = self.regularization();
        let s: f64 = self
            .g
            .iter()
            .zip(&self.detunings)
            .filter(|(_, d)| d.abs() >= reg)
            .map(|(z, &d)| z.norm_sqr() / (d * d))
            .sum();
        (1.0 + s).powi(-2)
    }

    /// Bound-state mode amplitudes `-Z·G_k/Δ_k` (near-resonant terms dropped),
    /// scaled by the steady atomic amplitude `Z` so they compare directly with
    /// the late-time modes of a run started from the excited atom.
    pub fn bound_state_modes(&self, residue: f64) -> Vec<Complex64> {
        let reg = self.regularization();
        self.g
            .iter()
            .zip(&self.detunings)
            .map(|(z, &d)| if d.abs() < reg { Complex64::new(0.0, 0.0) } else { -*z * (residue / d) })
            .collect()
    }

    /// Weisskopf-Wigner rate `2π(|G'_{k_r}|² + |G'_{-k_r}|²)/c`.
    pub fn ww_decay_rate(&self) -> Result<f64> {
        let (gp, gm) = self.resonant_couplings()?;
        let norm = self.grid.model().length() / (2.0 * PI);
        Ok(2.0 * PI * norm * (gp.norm_sqr() + gm.norm_sqr()) / self.grid.c())
    }

    /// `(G_{k_r}, G_{-k_r})`, linearly interpolated.
    pub fn resonant_couplings(&self) -> Result<(Complex64, Complex64)> {
        let kr = self.omega_q / self.grid.c();
        Ok((self.grid.interpolate(&self.g, kr)?, self.grid.interpolate(&self.g, -kr)?))
    }

    /// `J_AB = -Σ_k G_k·conj(G_k e^{-ik d_s})/Δ_k` for a partner translated by `d_s`.
    pub fn dipole_dipole_j(&self, d_s: f64) -> Complex64 {
        let reg = self.regularization();
        let mut j = Complex64::new(0.0, 0.0);
        for ((z, &d), &k) in self.g.iter().zip(&self.detunings).zip(self.grid.momenta()) {
            if d.abs() < reg {
                continue;
            }
            j += Complex64::from_polar(z.norm_sqr() / d, k * d_s);
        }
        -j
    }
}

/// Self-energy sampled on a set of energies.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfEnergyCurve {
    pub energies: Vec<f64>,
    /// `None` where the abscissa hits a coupled grid detuning.
    pub values: Vec<Option<f64>>,
    pub excluded: Vec<f64>,
}

pub fn self_energy_curve(
    seq: &CouplingSequence,
    omega_q: f64,
    model: &WaveguideModel,
    energies: &[f64],
) -> Result<SelfEnergyCurve> {
    let spec = Spectrum::new(seq, omega_q, model)?;
    let values: Vec<Option<f64>> = energies.iter().map(|&e| spec.self_energy(e)).collect();
    let excluded = energies.iter().zip(&values).filter(|(_, v)| v.is_none()).map(|(&e, _)| e).collect();
    Ok(SelfEnergyCurve {
        energies: energies.to_vec(),
        values,
        excluded,
    })
}

pub fn find_pole(seq: &CouplingSequence, omega_q: f64, model: &WaveguideModel, band: (f64, f64)) -> Result<f64> {
    Spectrum::new(seq, omega_q, model)?.find_pole(band)
}

/// Trapped atomic population `|1/(1 + Σ_k |G_k|²/(E_b - Δ_k)²)|²`.
pub fn residue_population(seq: &CouplingSequence, omega_q: f64, model: &WaveguideModel, e_b: f64) -> Result<f64> {
    Ok(Spectrum::new(seq, omega_q, model)?.residue(e_b).powi(2))
}

pub fn weak_coupling_population(seq: &CouplingSequence, omega_q: f64, model: &WaveguideModel) -> Result<f64> {
    Ok(Spectrum::new(seq, omega_q, model)?.weak_coupling_population())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundStateSolution {
    pub e_b: f64,
    /// Steady atomic amplitude.
    pub residue: f64,
    /// `tan θ`.
    pub mixing: f64,
    pub positions: Vec<f64>,
    pub psi_b: Vec<Complex64>,
    /// Photon energy `∫_{x_1}^{x_N} |ψ_b|² dx`.
    pub phi_b: f64,
}

fn require_in_band(omega_q: f64, band: (f64, f64)) -> Result<()> {
    if omega_q < band.0 || omega_q > band.1 {
        return Err(Error::OutsideGap {
            omega_q,
            lo: band.0,
            hi: band.1,
        });
    }
    Ok(())
}

/// Bound-state photon field at `positions`, normalized like
/// [`crate::dynamics::field_profile`] amplitudes.
pub fn bound_state_field(
    seq: &CouplingSequence,
    omega_q: f64,
    model: &WaveguideModel,
    band: (f64, f64),
    positions: &[f64],
) -> Result<Vec<Complex64>> {
    Ok(bound_state(seq, omega_q, model, band, positions)?.psi_b)
}

/// Samples for the trapped-energy integral over the coupling region.
const PHI_B_SAMPLES: usize = 2001;

pub fn bound_state(
    seq: &CouplingSequence,
    omega_q: f64,
    model: &WaveguideModel,
    band: (f64, f64),
    positions: &[f64],
) -> Result<BoundStateSolution> {
    require_in_band(omega_q, band)?;
    let spec = Spectrum::new(seq, omega_q, model)?;
    let e_b = spec.find_pole(band)?;
    let residue = spec.residue(e_b);
    let modes = spec.bound_state_modes(residue);
    let psi_b = mode_field(&spec.grid, &modes, positions);
    let phi_b = match seq.span() {
        Some((a, b)) if b > a => {
            let xs: Vec<f64> = (0..PHI_B_SAMPLES)
                .map(|i| a + (b - a) * i as f64 / (PHI_B_SAMPLES - 1) as f64)
                .collect();
            let field = mode_field(&spec.grid, &modes, &xs);
            trapezoid(&xs, &field.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())
        }
        _ => 0.0,
    };
    Ok(BoundStateSolution {
        e_b,
        residue,
        mixing: spec.mixing(e_b),
        positions: positions.to_vec(),
        psi_b,
        phi_b,
    })
}

/// Trapped photon energy; zero where no in-band bound state exists.
pub fn trapped_photon_energy(seq: &CouplingSequence, omega_q: f64, model: &WaveguideModel, band: (f64, f64)) -> Result<f64> {
    match bound_state(seq, omega_q, model, band, &[]) {
        Ok(b) => Ok(b.phi_b),
        Err(Error::OutsideGap { .. }) | Err(Error::NoRoot { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// Total Weisskopf-Wigner population decay rate `2π(|G'_{k_r}|² + |G'_{-k_r}|²)/c`, `k_r = ω_q/c`.
pub fn ww_decay_rate(seq: &CouplingSequence, omega_q: f64, model: &WaveguideModel) -> Result<f64> {
    let grid = build_kgrid(model)?;
    let kr = omega_q / model.c;
    let g = k_coupling(seq, &grid);
    let (gp, gm) = (grid.interpolate(&g, kr)?, grid.interpolate(&g, -kr)?);
    let norm = model.length() / (2.0 * PI);
    Ok(2.0 * PI * norm * (gp.norm_sqr() + gm.norm_sqr()) / model.c)
}

/// `(β_+, β_-)` from the resonant couplings at `±k_r`.
pub fn chiral_factor(seq: &CouplingSequence, omega_q: f64, model: &WaveguideModel) -> Result<(f64, f64)> {
    let grid = build_kgrid(model)?;
    let kr = omega_q / model.c;
    // Only the four bracketing grid points are needed.
    let j = ((kr + model.k_max) / model.delta_k).floor().max(0.0) as usize;
    let jm = ((-kr + model.k_max) / model.delta_k).floor().max(0.0) as usize;
    let mut idx: Vec<usize> = [j, j + 1, jm, jm + 1].into_iter().filter(|&i| i < grid.len()).collect();
    idx.sort_unstable();
    idx.dedup();
    let ks: Vec<f64> = idx.iter().map(|&i| grid.momenta()[i]).collect();
    let vals = k_coupling_at(seq, &ks);
    let mut g = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (&i, v) in idx.iter().zip(vals) {
        g[i] = v;
    }
    let (gp, gm) = (grid.interpolate(&g, kr)?, grid.interpolate(&g, -kr)?);
    beta_from_weights(gp.norm_sqr(), gm.norm_sqr())
}

fn beta_from_weights(right: f64, left: f64) -> Result<(f64, f64)> {
    let total = right + left;
    if !(total > 0.0) {
        return Err(Error::Undefined("chiral factor with no coupling in either direction".into()));
    }
    Ok((right / total, left / total))
}

/// Field energy on either side of `origin`: `(Φ_R, Φ_L)`.
pub fn flux_split(positions: &[f64], intensity: &[f64], origin: f64) -> (f64, f64) {
    let dx = |i: usize| -> f64 {
        let n = positions.len();
        match (i, n) {
            (_, 0 | 1) => 1.0,
            (0, _) => positions[1] - positions[0],
            (i, n) if i == n - 1 => positions[n - 1] - positions[n - 2],
            (i, _) => 0.5 * (positions[i + 1] - positions[i - 1]),
        }
    };
    let mut right = 0.0;
    let mut left = 0.0;
    for (i, (&x, &p)) in positions.iter().zip(intensity).enumerate() {
        if x > origin {
            right += p * dx(i);
        } else if x < origin {
            left += p * dx(i);
        }
    }
    (right, left)
}

/// `β_± = Φ_{R/L}/(Φ_R + Φ_L)`.
pub fn chirality_from_flux(right: f64, left: f64) -> Result<(f64, f64)> {
    beta_from_weights(right, left)
}

/// Flux-based chiral factor of a late-time field snapshot, split at `x = 0`.
pub fn flux_chirality(positions: &[f64], intensity: &[f64]) -> Result<(f64, f64)> {
    let (r, l) = flux_split(positions, intensity, 0.0);
    chirality_from_flux(r, l)
}

pub fn dipole_dipole_j(seq: &CouplingSequence, omega_q: f64, model: &WaveguideModel, d_s: f64) -> Result<Complex64> {
    Ok(Spectrum::new(seq, omega_q, model)?.dipole_dipole_j(d_s))
}

/// Least-squares slope of `-ln p` over samples with `p ∈ [0.1, 0.9]`.
pub fn fit_decay_rate(times: &[f64], population: &[f64]) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(population)
        .filter(|(_, &p)| (0.1..=0.9).contains(&p))
        .map(|(&t, &p)| (t, p.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::Undefined(format!(
            "only {} samples with population in [0.1, 0.9]",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

const RABI_PADDING: usize = 16;

/// Dominant angular frequency of a uniformly sampled signal: mean removed,
/// Hann-tapered, zero-padded FFT, quadratic refinement of the peak.
pub fn rabi_frequency(dt: f64, signal: &[f64]) -> Result<f64> {
    let n = signal.len();
    if n < 4 || !(dt > 0.0) {
        return Err(Error::InvalidArgument("need at least 4 uniformly spaced samples".into()));
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let m = (n * RABI_PADDING).next_power_of_two();
    // A Hann taper suppresses leakage from the mirror frequency when only a
    // few periods are recorded.
    let taper = |i: usize| (PI * i as f64 / (n - 1) as f64).sin().powi(2);
    let mut buf: Vec<Complex64> = signal
        .iter()
        .enumerate()
        .map(|(i, &s)| Complex64::new((s - mean) * taper(i), 0.0))
        .collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mag: Vec<f64> = buf[..m / 2].iter().map(|z| z.norm()).collect();
    // Skip the tapered main lobe around DC (two unpadded bins).
    let start = (2 * m / n).max(1);
    let (peak, _) = mag
        .iter()
        .enumerate()
        .skip(start)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::Undefined("empty spectrum".into()))?;
    let offset = if peak + 1 < mag.len() {
        let (a, b, c) = (mag[peak - 1], mag[peak], mag[peak + 1]);
        let denom = a - 2.0 * b + c;
        if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 }
    } else {
        0.0
    };
    Ok(2.0 * PI * (peak as f64 + offset) / (m as f64 * dt))
}

/// Values of the local maxima of `signal`, each the largest sample within
/// `±half_window` samples (the trace ends count as one-sided windows).
pub fn oscillation_maxima(signal: &[f64], half_window: usize) -> Vec<f64> {
    let n = signal.len();
    let mut out = Vec::new();
    for i in 0..n {
        let lo = i.saturating_sub(half_window);
        let hi = (i + half_window + 1).min(n);
        let v = signal[i];
        let is_max = signal[lo..i].iter().all(|&s| s < v) && signal[i + 1..hi].iter().all(|&s| s <= v);
        if is_max {
            out.push(v);
        }
    }
    out
}

/// Envelope ratio between the fifth and first oscillation maxima.
pub fn contrast(signal: &[f64], half_window: usize) -> Result<f64> {
    let maxima = oscillation_maxima(signal, half_window);
    if maxima.len() < 5 {
        return Err(Error::Undefined(format!("only {} oscillation maxima found", maxima.len())));
    }
    Ok(maxima[4] / maxima[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::CouplingPoint;
    use crate::tables;
    use crate::waveguide::TargetProfile;
    use approx::assert_relative_eq;

    fn model() -> WaveguideModel {
        WaveguideModel::default()
    }

    fn band() -> (f64, f64) {
        TargetProfile::band_gap(1.5, 0.1, 1.0, 3.0).unwrap().frequency_gap(3.0).unwrap()
    }

    fn single(a: f64, g0: f64) -> CouplingSequence {
        CouplingSequence::new(vec![CouplingPoint::new(0.0, a, 0.0)], g0, 1.0, "point").unwrap()
    }

    #[test]
    fn pole_matches_brute_force_scan() {
        let seq = tables::table_s1_refit();
        let spec = Spectrum::new(&seq, 4.5, &model()).unwrap();
        let e_b = spec.find_pole(band()).unwrap();
        let sigma = spec.self_energy(e_b).unwrap();
        assert!((e_b - sigma).abs() < 1e-8 * e_b.abs().max(1.0));

        // Independent oracle: 10x finer scan near zero, secant refinement.
        let g2: Vec<f64> = spec.g.iter().map(|z| z.norm_sqr()).collect();
        let d = &spec.detunings;
        let f = |e: f64| e - g2.iter().zip(d).map(|(g, d)| g / (e - d)).sum::<f64>();
        let (lo, hi) = spec.gap_window(band());
        let n = 10 * POLE_SCAN_SAMPLES;
        let mut best: Option<f64> = None;
        for i in 0..n - 1 {
            let a = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let b = lo + (hi - lo) * (i + 1) as f64 / (n - 1) as f64;
            if d.iter().any(|&p| p >= a && p <= b) || !(f(a) < 0.0 && f(b) >= 0.0) {
                continue;
            }
            let (mut x0, mut x1) = (a, b);
            for _ in 0..60 {
                let (f0, f1) = (f(x0), f(x1));
                if f1 == f0 {
                    break;
                }
                let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
                x0 = x1;
                x1 = x2;
            }
            if best.map_or(true, |b: f64| x1.abs() < b.abs()) {
                best = Some(x1);
            }
        }
        assert!((e_b - best.unwrap()).abs() < 1e-8, "{e_b} vs {best:?}");
        assert!(e_b.abs() < 0.02);
    }

    #[test]
    fn weak_coupling_limit() {
        // Half a grid step off ω_q = 4.5 so no mode is exactly resonant: with a
        // resonant mode the vanishing coupling limit hybridizes with that single mode.
        let seq = tables::table_s1_refit();
        let w = 4.5 + 1.5e-3;
        let mut last = 0.0f64;
        let mut last_pop = 1.0f64;
        for g0 in [1e-6, 1e-3, 2e-3, 3e-3, 4e-3] {
            let s = seq.with_g0(g0);
            let e_b = find_pole(&s, w, &model(), band()).unwrap();
            let pop = residue_population(&s, w, &model(), e_b).unwrap();
            if g0 == 1e-6 {
                assert!(e_b.abs() < 1e-9);
                assert!((1.0 - pop) < 1e-6, "{e_b} {pop}");
            } else {
                assert!(e_b.abs() > last.abs());
                assert!(pop < last_pop);
            }
            last = e_b;
            last_pop = pop;
            let weak = weak_coupling_population(&s, w, &model()).unwrap();
            assert!((weak - pop).abs() < 0.05);
        }
    }

    #[test]
    fn no_root_is_reported() {
        // A point emitter has no gap: poles cover the window and never leave a
        // negative-to-positive crossing in a pole-free interval.
        let coarse = WaveguideModel::new(3.0, 3.0, 0.1).unwrap();
        let spec = Spectrum::new(&single(1.0, 0.5), 4.5, &coarse).unwrap();
        assert!(matches!(spec.find_pole((4.35, 4.65)), Err(Error::NoRoot { .. })));
        assert!(matches!(spec.find_pole((4.5, 4.5)), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn self_energy_excludes_grid_detunings() {
        let coarse = WaveguideModel::new(3.0, 3.0, 0.5).unwrap();
        let s = single(1.0, 0.1);
        let curve = self_energy_curve(&s, 3.0, &coarse, &[-1.5, 0.0, 0.1]).unwrap();
        assert_eq!(curve.excluded, vec![-1.5, 0.0]);
        assert!(curve.values[2].is_some());
        // 13 modes, |G|² = 0.01, detunings 3|k| - 3.
        let manual: f64 = (-6..=6).map(|j| 0.01 / (0.1 - (3.0 * (j as f64 * 0.5).abs() - 3.0))).sum();
        assert_relative_eq!(curve.values[2].unwrap(), manual, max_relative = 1e-12);
    }

    #[test]
    fn rate_of_single_point() {
        let m = model();
        let s = single(1.0, 0.002);
        let gamma = ww_decay_rate(&s, 4.5, &m).unwrap();
        let per_point = crate::coupling::wavepacket_sizes(&s, &m)[0].decay_rate;
        // Both propagation directions contribute one per-point rate.
        assert_relative_eq!(gamma, 2.0 * per_point, max_relative = 1e-12);
        assert_relative_eq!(gamma, 4.0 * PI * 0.002f64.powi(2) * 1000.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn rate_vanishes_without_resonant_channel() {
        // G = 2cos(k x) with k_r x = π/2.
        let x = PI / 2.0 / 1.5;
        let s = CouplingSequence::new(
            vec![CouplingPoint::new(-x, 1.0, 0.0), CouplingPoint::new(x, 1.0, 0.0)],
            0.002,
            1.0,
            "pair",
        )
        .unwrap();
        let g = ww_decay_rate(&s, 4.5, &model()).unwrap();
        assert!(g < 1e-20, "{g}");
    }

    #[test]
    fn chirality_of_real_and_chiral_tables() {
        let m = model();
        for w in [4.0, 4.5, 5.1] {
            let (bp, bm) = chiral_factor(&tables::table_s1(), w, &m).unwrap();
            assert_relative_eq!(bp, 0.5, epsilon = 1e-12);
            assert_relative_eq!(bp + bm, 1.0, epsilon = 1e-15);
        }
        let (bp, bm) = chiral_factor(&tables::table_s2(), 4.5, &m).unwrap();
        assert!(bp > 0.99);
        assert_relative_eq!(bp + bm, 1.0, epsilon = 1e-15);
        assert!(chiral_factor(&single(0.0, 0.002), 4.5, &m).is_err());
    }

    #[test]
    fn chiral_factor_uses_full_interpolation() {
        let m = model();
        let s = tables::table_s2();
        let spec = Spectrum::new(&s, 4.5123, &m).unwrap();
        let (gp, gm) = spec.resonant_couplings().unwrap();
        let expected = gp.norm_sqr() / (gp.norm_sqr() + gm.norm_sqr());
        assert_relative_eq!(chiral_factor(&s, 4.5123, &m).unwrap().0, expected, max_relative = 1e-12);
    }

    #[test]
    fn flux_estimator() {
        let x: Vec<f64> = (0..101).map(|i| i as f64 - 50.0).collect();
        let right: Vec<f64> = x.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(flux_chirality(&x, &right).unwrap(), (1.0, 0.0));
        let sym: Vec<f64> = x.iter().map(|&x| (-x * x / 50.0).exp()).collect();
        let (bp, bm) = flux_chirality(&x, &sym).unwrap();
        assert_relative_eq!(bp, 0.5, epsilon = 1e-12);
        assert_relative_eq!(bp + bm, 1.0, epsilon = 1e-15);
        assert!(flux_chirality(&x, &vec![0.0; 101]).is_err());
    }

    #[test]
    fn dipole_dipole_symmetries() {
        let m = model();
        let spec = Spectrum::new(&tables::table_s1_refit(), 4.4, &m).unwrap();
        let j0 = spec.dipole_dipole_j(0.0);
        assert!(j0.im.abs() < 1e-10 * j0.norm());
        let d = 3.3;
        let (jp, jm) = (spec.dipole_dipole_j(d), spec.dipole_dipole_j(-d));
        assert!((jp - jm.conj()).norm() < 1e-12 * j0.norm());
        // Real sequences have |G_k| even in k, so J is real at every d_s.
        assert!(jp.im.abs() < 1e-10 * j0.norm());
    }

    #[test]
    fn dipole_dipole_is_linear_in_coupling_power() {
        let m = model();
        let s = tables::table_s1_refit();
        let j1 = dipole_dipole_j(&s, 4.4, &m, 2.0).unwrap();
        let j2 = dipole_dipole_j(&s.with_g0(s.g0 * 2.0), 4.4, &m, 2.0).unwrap();
        assert!((j2 - j1 * 4.0).norm() < 1e-12 * j2.norm());
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let p: Vec<f64> = t.iter().map(|&t| 0.98 * (-0.37 * t).exp()).collect();
        assert_relative_eq!(fit_decay_rate(&t, &p).unwrap(), 0.37, max_relative = 1e-10);
        assert!(fit_decay_rate(&t, &vec![1.0; 400]).is_err());
    }

    #[test]
    fn rabi_frequency_of_cosine() {
        let dt = 1.0;
        let omega = 5.452e-3;
        let s: Vec<f64> = (0..4000).map(|i| (0.5 * omega * i as f64 * dt).cos().powi(2)).collect();
        let w = rabi_frequency(dt, &s).unwrap();
        assert_relative_eq!(w, omega, max_relative = 5e-3);
        let s: Vec<f64> = (0..2000).map(|i| 0.3 + (0.8 * i as f64 * 0.1).sin()).collect();
        assert_relative_eq!(rabi_frequency(0.1, &s).unwrap(), 0.8, max_relative = 1e-3);
    }

    #[test]
    fn contrast_of_damped_oscillation() {
        let s: Vec<f64> = (0..3000)
            .map(|i| {
                let t = i as f64 * 0.01;
                0.5 + 0.5 * (-0.02 * t).exp() * (2.0 * PI * t / 5.0).cos()
            })
            .collect();
        // Maxima at t = 0, 5, 10, 15, 20.
        // The damped maximum sits slightly before t = 20.
        let c = contrast(&s, 100).unwrap();
        let expected = s[1900..2100].iter().fold(0.0f64, |m, &v| m.max(v)) / s[0];
        assert_relative_eq!(c, expected, max_relative = 1e-12);
        let undamped: Vec<f64> = (0..3000).map(|i| (i as f64 * 0.01 * PI / 5.0).cos().powi(2)).collect();
        assert_relative_eq!(contrast(&undamped, 100).unwrap(), 1.0, max_relative = 1e-6);
        assert!(contrast(&s[..500], 100).is_err());
    }

    #[test]
    fn bound_state_rejects_out_of_gap() {
        let r = bound_state_field(&tables::table_s1_refit(), 6.0, &model(), band(), &[0.0]);
        assert!(matches!(r, Err(Error::OutsideGap { .. })));
        assert_eq!(trapped_photon_energy(&tables::table_s1_refit(), 6.0, &model(), band()).unwrap(), 0.0);
    }

    #[test]
    fn trapped_energy_is_consistent_with_mixing() {
        // Inside the coupling region the bound-state photon weight is nearly all
        // of Z²·tanθ (the field is localized there).
        let s = tables::table_s1_refit();
        let b = bound_state(&s, 4.5, &model(), band(), &[]).unwrap();
        let total = b.residue.powi(2) * b.mixing;
        assert!(b.phi_b > 0.0);
        assert!(b.phi_b <= total * 1.001);
        assert!(b.phi_b > 0.9 * total, "{} vs {}", b.phi_b, total);
    }
}
