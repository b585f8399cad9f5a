//! Discretized linear-dispersion waveguide, target coupling profiles and the
//! weight functions that define the design objective.
//!
//! Momenta are in inverse length units, frequencies in the same units as the
//! detunings (ħ = 1). The dispersion is `ω_k = c·|k|` on every grid point and
//! `k_max` is a hard cutoff.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative slack used when deciding whether a momentum sits on a gap edge.
/// Edges are closed: a grid point within this slack of an edge is in the gap.
const EDGE_SLACK: f64 = 1e-9;

/// Waveguide with linear dispersion `ω_k = c|k|`, discretized on a uniform
/// momentum grid over `[-k_max, k_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideModel {
    /// Group (and phase) velocity.
    pub c: f64,
    /// Ultraviolet momentum cutoff.
    pub k_max: f64,
    /// Momentum grid spacing.
    pub delta_k: f64,
}

impl Default for WaveguideModel {
    fn default() -> Self {
        Self {
            c: 3.0,
            k_max: 3.0,
            delta_k: 1e-3,
        }
    }
}

impl WaveguideModel {
    pub fn new(c: f64, k_max: f64, delta_k: f64) -> Result<Self> {
        let model = Self { c, k_max, delta_k };
        model.check()?;
        Ok(model)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidModel(format!("c must be positive, got {}", self.c)));
        }
        if !(self.k_max > 0.0 && self.k_max.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "k_max must be positive, got {}",
                self.k_max
            )));
        }
        if !(self.delta_k > 0.0 && self.delta_k <= self.k_max) {
            return Err(Error::InvalidModel(format!(
                "delta_k must lie in (0, k_max], got {}",
                self.delta_k
            )));
        }
        let ratio = self.k_max / self.delta_k;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::InvalidModel(format!(
                "k_max / delta_k = {ratio} is not an integer"
            )));
        }
        Ok(())
    }

    /// Effective waveguide length `L_w = 2π/δk`.
    pub fn length(&self) -> f64 {
        2.0 * PI / self.delta_k
    }

    /// Same model on a different momentum spacing.
    pub fn with_delta_k(&self, delta_k: f64) -> Result<Self> {
        Self::new(self.c, self.k_max, delta_k)
    }
}

/// Uniform, symmetric momentum grid `k_j = (j - n)·δk`, `j = 0..=2n`.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    model: WaveguideModel,
    half: usize,
    k: Vec<f64>,
}

/// Builds the momentum grid of a waveguide model; it has `2·k_max/δk + 1` points.
pub fn build_kgrid(model: &WaveguideModel) -> Result<KGrid> {
    model.check()?;
    let half = (model.k_max / model.delta_k).round() as usize;
    let k = (0..=2 * half)
        .map(|j| (j as f64 - half as f64) * model.delta_k)
        .collect();
    Ok(KGrid {
        model: *model,
        half,
        k,
    })
}

impl KGrid {
    pub fn model(&self) -> &WaveguideModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn momenta(&self) -> &[f64] {
        &self.k
    }

    pub fn delta_k(&self) -> f64 {
        self.model.delta_k
    }

    pub fn c(&self) -> f64 {
        self.model.c
    }

    /// Index of the grid point `-k_j`.
    pub fn mirror(&self, j: usize) -> usize {
        2 * self.half - j
    }

    pub fn frequency(&self, j: usize) -> f64 {
        self.model.c * self.k[j].abs()
    }

    /// Detunings `Δ_k = c|k| - ω_q` against the supplied atomic frequency.
    pub fn detunings(&self, omega_q: f64) -> Vec<f64> {
        self.k.iter().map(|k| self.model.c * k.abs() - omega_q).collect()
    }

    /// Linear interpolation of grid-sampled complex values at an arbitrary
    /// momentum inside the cutoff.
    pub fn interpolate(&self, values: &[Complex64], k: f64) -> Result<Complex64> {
        assert_eq!(values.len(), self.len(), "values must be sampled on this grid");
        let k_max = self.model.k_max;
        if k.abs() > k_max * (1.0 + EDGE_SLACK) {
            return Err(Error::OutsideCutoff { k, k_max });
        }
        let pos = ((k + k_max) / self.model.delta_k).clamp(0.0, (self.len() - 1) as f64);
        let lo = (pos.floor() as usize).min(self.len() - 2);
        let frac = pos - lo as f64;
        Ok(values[lo] * (1.0 - frac) + values[lo + 1] * frac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// Symmetric gaps centred at `±k_0`.
    BandGap,
    /// A single gap centred at `-k_0`; the positive side stays open.
    Chiral,
}

/// Piecewise-constant target for `|G_k|`: zero inside the gap(s), `g0` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetProfile {
    pub kind: ProfileKind,
    /// Gap centre magnitude.
    pub k0: f64,
    /// Gap width.
    pub kd: f64,
    /// Plateau value outside the gap.
    pub g0: f64,
    pub k_max: f64,
}

impl TargetProfile {
    pub fn new(kind: ProfileKind, k0: f64, kd: f64, g0: f64, k_max: f64) -> Result<Self> {
        let p = Self {
            kind,
            k0,
            kd,
            g0,
            k_max,
        };
        p.check()?;
        Ok(p)
    }

    pub fn band_gap(k0: f64, kd: f64, g0: f64, k_max: f64) -> Result<Self> {
        Self::new(ProfileKind::BandGap, k0, kd, g0, k_max)
    }

    pub fn chiral(k0: f64, kd: f64, g0: f64, k_max: f64) -> Result<Self> {
        Self::new(ProfileKind::Chiral, k0, kd, g0, k_max)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.kd > 0.0) {
            return Err(Error::InvalidProfile(format!("k_d must be positive, got {}", self.kd)));
        }
        if !(self.k0 - self.kd / 2.0 > 0.0) {
            return Err(Error::InvalidProfile("gap must not reach k = 0".into()));
        }
        if !(self.k0 + self.kd / 2.0 < self.k_max) {
            return Err(Error::InvalidProfile("gap must lie below the cutoff".into()));
        }
        if !(self.g0 >= 0.0) {
            return Err(Error::InvalidProfile(format!("G_0 must be non-negative, got {}", self.g0)));
        }
        Ok(())
    }

    /// Wavelength at the gap centre, `λ_0 = 2π/k_0`; the reporting length unit.
    pub fn lambda0(&self) -> f64 {
        2.0 * PI / self.k0
    }

    /// Closed gap intervals in k.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        let lo = self.k0 - self.kd / 2.0;
        let hi = self.k0 + self.kd / 2.0;
        match self.kind {
            ProfileKind::BandGap => vec![(-hi, -lo), (lo, hi)],
            ProfileKind::Chiral => vec![(-hi, -lo)],
        }
    }

    pub fn total_gap_width(&self) -> f64 {
        self.gaps().iter().map(|(a, b)| b - a).sum()
    }

    pub fn in_gap(&self, k: f64) -> bool {
        let slack = EDGE_SLACK * k.abs().max(1.0);
        self.gaps()
            .iter()
            .any(|&(a, b)| k >= a - slack && k <= b + slack)
    }

    /// Frequency window in which no resonant mode couples, if the profile has
    /// one (band-gap profiles only).
    pub fn frequency_gap(&self, c: f64) -> Option<(f64, f64)> {
        match self.kind {
            ProfileKind::BandGap => Some((c * (self.k0 - self.kd / 2.0), c * (self.k0 + self.kd / 2.0))),
            ProfileKind::Chiral => None,
        }
    }

    fn check_cutoff(&self, k: f64) -> Result<()> {
        if k.abs() > self.k_max * (1.0 + EDGE_SLACK) {
            Err(Error::OutsideCutoff { k, k_max: self.k_max })
        } else {
            Ok(())
        }
    }
}

/// Target coupling magnitude `|G^I_k|`.
pub fn target_value(profile: &TargetProfile, k: f64) -> Result<f64> {
    profile.check_cutoff(k)?;
    Ok(if profile.in_gap(k) { 0.0 } else { profile.g0 })
}

/// Two-level weight: `w_in` inside the gap(s), `w_out` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightProfile {
    pub w_in: f64,
    pub w_out: f64,
}

impl WeightProfile {
    pub fn new(w_in: f64, w_out: f64) -> Result<Self> {
        if !(w_out > 0.0 && w_in >= w_out) {
            return Err(Error::InvalidProfile(format!(
                "weights must satisfy w_in >= w_out > 0, got ({w_in}, {w_out})"
            )));
        }
        Ok(Self { w_in, w_out })
    }
}

pub fn weight_value(w: &WeightProfile, profile: &TargetProfile, k: f64) -> Result<f64> {
    profile.check_cutoff(k)?;
    Ok(if profile.in_gap(k) { w.w_in } else { w.w_out })
}
