//! Experiment documents: strict JSON, every block optional until resolved.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use giantatom::coupling::{CouplingPoint, DEFAULT_G0};
use giantatom::montecarlo::{CouplingAverage, DisorderSpec};
use giantatom::{io, tables, ConstraintSet, CouplingSequence, ProfileKind, TargetProfile, WaveguideModel, WeightProfile};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDoc {
    pub command: Option<String>,
    pub scenario: Option<String>,
    pub waveguide: Option<WaveguideDoc>,
    pub target: Option<TargetDoc>,
    pub weights: Option<WeightsDoc>,
    pub constraints: Option<ConstraintsDoc>,
    pub sequence: Option<SequenceSource>,
    pub run: Option<RunDoc>,
    pub disorder: Option<DisorderDoc>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveguideDoc {
    pub c: f64,
    pub k_max: f64,
    pub delta_k: f64,
}

impl Default for WaveguideDoc {
    fn default() -> Self {
        let m = WaveguideModel::default();
        Self { c: m.c, k_max: m.k_max, delta_k: m.delta_k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    BandGap,
    Chiral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetDoc {
    pub kind: TargetKind,
    pub k0: f64,
    pub kd: f64,
    pub g0: f64,
}

impl Default for TargetDoc {
    fn default() -> Self {
        Self { kind: TargetKind::BandGap, k0: 1.5, kd: 0.1, g0: DEFAULT_G0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsDoc {
    pub w_in: f64,
    pub w_out: f64,
}

impl Default for WeightsDoc {
    fn default() -> Self {
        Self { w_in: 60.0, w_out: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintsDoc {
    /// η in units of λ_0.
    pub min_spacing: f64,
    /// L in units of λ_0.
    pub max_extent: f64,
    pub max_points: usize,
    pub require_nonneg_real: bool,
    pub markov_margin: f64,
    pub exclude_uncoupled: bool,
}

impl Default for ConstraintsDoc {
    fn default() -> Self {
        Self {
            min_spacing: 0.1,
            max_extent: 17.0,
            max_points: 30,
            require_nonneg_real: true,
            markov_margin: 10.0,
            exclude_uncoupled: false,
        }
    }
}

impl ConstraintsDoc {
    pub fn to_set(&self) -> Result<ConstraintSet, CliError> {
        let mut set =
            ConstraintSet::new(self.min_spacing, self.max_extent, self.max_points, self.require_nonneg_real, self.markov_margin)?;
        set.exclude_uncoupled = self.exclude_uncoupled;
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SequenceSource {
    Builtin(String),
    File(PathBuf),
    Inline(InlineSequence),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSequence {
    pub lambda0: f64,
    #[serde(default = "default_g0")]
    pub g0: f64,
    #[serde(default)]
    pub label: String,
    /// `[x/λ_0, amplitude, phase_rad]` rows.
    pub points: Vec<[f64; 3]>,
}

fn default_g0() -> f64 {
    DEFAULT_G0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunDoc {
    pub omega_q: Option<f64>,
    pub omega_values: Option<Vec<f64>>,
    pub t_final: Option<f64>,
    pub record_interval: f64,
    /// Separation in units of λ_0.
    pub d_s: f64,
    pub d_s_values: Option<Vec<f64>>,
    pub seed: u64,
    pub budget: usize,
    pub allow_phases: bool,
    pub field_points: Option<usize>,
    /// Also estimate chirality from the emitted field (needs `t_final`).
    pub flux: bool,
    /// iFT sampling: point count N and window half-length L (λ_0), X_T = 2L/N.
    pub ift_points: Option<usize>,
    pub ift_half_length: Option<f64>,
}

impl Default for RunDoc {
    fn default() -> Self {
        Self {
            omega_q: None,
            omega_values: None,
            t_final: None,
            record_interval: 1.0,
            d_s: 0.0,
            d_s_values: None,
            seed: 0,
            budget: 2000,
            allow_phases: false,
            field_points: None,
            flux: false,
            ift_points: None,
            ift_half_length: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Coupling,
    Dynamics,
    Chirality,
    Rabi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageDoc {
    Complex,
    Modulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderDoc {
    pub sigma_a: f64,
    pub sigma_phi: f64,
    /// Optional sweep over σ_A (coupling observable only).
    pub sigma_a_values: Option<Vec<f64>>,
    pub n_realizations: usize,
    pub base_seed: u64,
    pub skip_failed: bool,
    pub average: AverageDoc,
    pub observable: Observable,
}

impl Default for DisorderDoc {
    fn default() -> Self {
        Self {
            sigma_a: 0.0,
            sigma_phi: 0.0,
            sigma_a_values: None,
            n_realizations: 50,
            base_seed: 0,
            skip_failed: false,
            average: AverageDoc::Complex,
            observable: Observable::Coupling,
        }
    }
}

impl DisorderDoc {
    pub fn spec(&self, sigma_a: f64) -> Result<DisorderSpec, CliError> {
        let mut spec = DisorderSpec::new(sigma_a, self.sigma_phi, self.n_realizations, self.base_seed)?;
        spec.skip_failed = self.skip_failed;
        Ok(spec)
    }

    pub fn average(&self) -> CouplingAverage {
        match self.average {
            AverageDoc::Complex => CouplingAverage::Complex,
            AverageDoc::Modulus => CouplingAverage::Modulus,
        }
    }
}

impl ExperimentDoc {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Document(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fills every omitted block with its default so the document records
    /// exactly what ran. Relative sequence paths are made absolute against `base`.
    pub fn resolved(mut self, base: Option<&Path>) -> Self {
        self.waveguide.get_or_insert_with(Default::default);
        self.target.get_or_insert_with(Default::default);
        self.weights.get_or_insert_with(Default::default);
        self.run.get_or_insert_with(Default::default);
        if let (Some(SequenceSource::File(p)), Some(base)) = (self.sequence.as_mut(), base) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }

    pub fn model(&self) -> Result<WaveguideModel, CliError> {
        let w = self.waveguide.clone().unwrap_or_default();
        Ok(WaveguideModel::new(w.c, w.k_max, w.delta_k)?)
    }

    pub fn target(&self) -> Result<TargetProfile, CliError> {
        let t = self.target.clone().unwrap_or_default();
        let kind = match t.kind {
            TargetKind::BandGap => ProfileKind::BandGap,
            TargetKind::Chiral => ProfileKind::Chiral,
        };
        Ok(TargetProfile::new(kind, t.k0, t.kd, t.g0, self.model()?.k_max)?)
    }

    pub fn weights(&self) -> Result<WeightProfile, CliError> {
        let w = self.weights.clone().unwrap_or_default();
        Ok(WeightProfile::new(w.w_in, w.w_out)?)
    }

    pub fn constraints(&self) -> Result<Option<ConstraintSet>, CliError> {
        self.constraints.as_ref().map(ConstraintsDoc::to_set).transpose()
    }

    pub fn run(&self) -> RunDoc {
        self.run.clone().unwrap_or_default()
    }

    pub fn sequence(&self) -> Result<CouplingSequence, CliError> {
        match &self.sequence {
            None => Err(CliError::Document("this command needs a 'sequence' block".into())),
            Some(SequenceSource::Builtin(id)) => Ok(tables::builtin_sequence(id)?),
            Some(SequenceSource::File(p)) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Ok(io::sequence_from_str(&text)?)
            }
            Some(SequenceSource::Inline(s)) => {
                let points = s.points.iter().map(|&[x, a, t]| CouplingPoint::new(x, a, t)).collect();
                Ok(CouplingSequence::new(points, s.g0, s.lambda0, s.label.clone())?)
            }
        }
    }
}

/// Interprets a `--sequence` override: a builtin id, else a file path.
pub fn sequence_override(arg: &str) -> SequenceSource {
    if tables::BUILTIN_IDS.contains(&arg) {
        SequenceSource::Builtin(arg.to_string())
    } else {
        SequenceSource::File(PathBuf::from(arg))
    }
}
