//! Pipelines behind each command and the bundled reproduction scenarios.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use giantatom::analysis::{
    bound_state, chiral_factor, contrast, dipole_dipole_j, find_pole, flux_chirality, rabi_frequency,
    residue_population,
};
use giantatom::coupling::{ift_baseline, in_gap_residual, k_coupling, plateau_level, validate};
use giantatom::dynamics::{default_field_positions, evolve_pair, evolve_single, SimulationPlan};
use giantatom::montecarlo::{ensemble_chirality, ensemble_coupling, ensemble_dynamics, ensemble_rabi};
use giantatom::waveguide::target_value;
use giantatom::{build_kgrid, io, optimize, CouplingSequence, DesignProblem, WaveguideModel};

use crate::doc::{ConstraintsDoc, DisorderDoc, ExperimentDoc, Observable, RunDoc, SequenceSource, TargetDoc, TargetKind};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Design,
    Dynamics,
    BoundState,
    Chirality,
    Dipole,
    Disorder,
    Reproduce,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Dynamics => "dynamics",
            Command::BoundState => "bound-state",
            Command::Chirality => "chirality",
            Command::Dipole => "dipole",
            Command::Disorder => "disorder",
            Command::Reproduce => "reproduce",
        }
    }
}

pub const SCENARIOS: [&str; 8] = [
    "bandgap-fractional-decay",
    "bandgap-bound-state",
    "bandgap-disorder",
    "chiral-broadband",
    "chiral-disorder",
    "dipole-sweep",
    "dipole-rabi",
    "ift-baseline",
];

/// Result files plus scalar findings for the manifest.
pub struct Output {
    dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Map<String, Value>,
    header: Vec<(&'static str, String)>,
}

impl Output {
    pub fn new(dir: &Path, header: Vec<(&'static str, String)>) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), summary: Map::new(), header })
    }

    fn table(
        &mut self,
        name: &str,
        meta: &[(&str, String)],
        columns: &[&str],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut all: Vec<(&str, String)> = self.header.iter().map(|(k, v)| (*k, v.clone())).collect();
        all.extend(meta.iter().map(|(k, v)| (*k, v.clone())));
        io::write_table(std::io::BufWriter::new(file), &all, columns, rows)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }
}

fn omegas(run: &RunDoc) -> Result<Vec<f64>, CliError> {
    match (&run.omega_values, run.omega_q) {
        (Some(v), _) if !v.is_empty() => Ok(v.clone()),
        (_, Some(w)) => Ok(vec![w]),
        _ => Err(CliError::Document("run.omega_q or run.omega_values is required".into())),
    }
}

fn t_final(run: &RunDoc) -> Result<f64, CliError> {
    run.t_final.ok_or_else(|| CliError::Document("run.t_final is required".into()))
}

/// Rejects sequences that violate the document's constraints, if it has any.
fn check_sequence(doc: &ExperimentDoc, seq: &CouplingSequence, model: &WaveguideModel) -> Result<(), CliError> {
    if let Some(c) = doc.constraints()? {
        let report = validate(seq, &c, model);
        if !report.passed() {
            return Err(CliError::Validation(report.to_string()));
        }
    }
    Ok(())
}

fn field_positions(run: &RunDoc, model: &WaveguideModel) -> Vec<f64> {
    let default = default_field_positions(model);
    match run.field_points {
        Some(n) if n >= 2 => {
            let (a, b) = (default[0], default[default.len() - 1]);
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        }
        _ => default,
    }
}

fn band(doc: &ExperimentDoc, model: &WaveguideModel) -> Result<(f64, f64), CliError> {
    doc.target()?
        .frequency_gap(model.c)
        .ok_or_else(|| CliError::Document("the target has no frequency gap".into()))
}

pub fn run(command: Command, doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    match command {
        Command::Design => design(doc, out),
        Command::Dynamics => dynamics(doc, out),
        Command::BoundState => bound_state_cmd(doc, out),
        Command::Chirality => chirality(doc, out),
        Command::Dipole => dipole(doc, out),
        Command::Disorder => disorder(doc, out),
        Command::Reproduce => {
            let name = doc.scenario.clone().ok_or_else(|| CliError::Document("reproduce needs a scenario".into()))?;
            reproduce(&name, doc, out)
        }
    }
}

fn design(doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    let model = doc.model()?;
    let grid = build_kgrid(&model)?;
    let target = doc.target()?;
    let run = doc.run();
    let constraints = match doc.constraints()? {
        Some(c) => c,
        None => ConstraintsDoc::default().to_set()?,
    };
    let problem = DesignProblem::new(target, doc.weights()?, constraints, grid.clone(), run.allow_phases, run.seed, run.budget);
    let result = optimize(&problem)?;
    out.text("sequence.txt", &io::sequence_to_string(&result.sequence))?;
    let g = k_coupling(&result.sequence, &grid);
    let rows: Vec<Vec<f64>> = grid
        .momenta()
        .iter()
        .zip(&g)
        .map(|(&k, z)| Ok(vec![k, z.norm(), target_value(&target, k)?]))
        .collect::<Result<_, giantatom::Error>>()?;
    out.table("coupling.txt", &[], &["k", "abs_G", "target"], rows)?;
    out.table("trace.txt", &[], &["step", "best_objective"], result.trace.iter().enumerate().map(|(i, v)| vec![i as f64, *v]))?;
    out.note("objective", result.objective);
    out.note("initial_objective", result.initial_objective);
    out.note("in_gap_residual", result.in_gap_residual);
    out.note("points", result.sequence.len());
    out.note("evaluations", result.evaluations);
    out.note("validation", validate(&result.sequence, &constraints, &model).to_string());
    Ok(())
}

fn dynamics(doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    let model = doc.model()?;
    let seq = doc.sequence()?;
    check_sequence(doc, &seq, &model)?;
    let run = doc.run();
    let ws = omegas(&run)?;
    let tf = t_final(&run)?;
    let band = doc.target().ok().and_then(|t| t.frequency_gap(model.c));
    let mut columns = vec!["t".to_string()];
    let mut traces = Vec::new();
    let mut notes = Vec::new();
    for &w in &ws {
        let plan = SimulationPlan::single(seq.clone(), w, model, tf).with_record_interval(run.record_interval);
        let traj = evolve_single(&plan)?;
        columns.push(format!("pe_omega_{w}"));
        let mut note = json!({
            "omega_q": w,
            "final_population": traj.populations[0].last().copied().unwrap_or(f64::NAN),
            "max_norm_drift": traj.max_norm_drift,
        });
        if let Some(b) = band.filter(|b| w >= b.0 && w <= b.1) {
            if let Ok(e_b) = find_pole(&seq, w, &model, b) {
                note["residue_population"] = residue_population(&seq, w, &model, e_b)?.into();
                note["bound_state_energy"] = e_b.into();
            }
        }
        notes.push(note);
        if traces.is_empty() {
            traces.push(traj.times.clone());
        }
        traces.push(traj.populations[0].clone());
    }
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = (0..traces[0].len()).map(|i| traces.iter().map(|t| t[i]).collect());
    out.table("population.txt", &[("sequence", seq.label.clone())], &cols, rows)?;
    out.note("runs", notes);
    Ok(())
}

fn bound_state_cmd(doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    let model = doc.model()?;
    let seq = doc.sequence()?;
    check_sequence(doc, &seq, &model)?;
    let run = doc.run();
    let w = *omegas(&run)?.first().expect("non-empty");
    let band = band(doc, &model)?;
    let xs = field_positions(&run, &model);
    let b = bound_state(&seq, w, &model, band, &xs)?;
    let psi2: Vec<f64> = b.psi_b.iter().map(|z| z.norm_sqr()).collect();
    out.table("bound_state.txt", &[("omega_q", w.to_string())], &["x", "abs_psi_b_sq"], xs.iter().zip(&psi2).map(|(&x, &p)| vec![x, p]))?;
    out.note("omega_q", w);
    out.note("bound_state_energy", b.e_b);
    out.note("residue", b.residue);
    out.note("residue_population", b.residue * b.residue);
    out.note("trapped_photon_energy", b.phi_b);
    if let Some(tf) = run.t_final {
        let plan = SimulationPlan::single(seq.clone(), w, model, tf)
            .with_record_interval(run.record_interval)
            .with_field(xs.clone());
        let traj = evolve_single(&plan)?;
        let field = traj.field.as_ref().expect("field requested");
        out.table("field.txt", &[("t", tf.to_string())], &["x", "abs_psi_sq"], xs.iter().zip(&field.intensity).map(|(&x, &p)| vec![x, p]))?;
        out.table("population.txt", &[], &["t", "pe"], traj.times.iter().zip(&traj.populations[0]).map(|(&t, &p)| vec![t, p]))?;
        let (x1, xn) = seq.span().unwrap_or((0.0, 0.0));
        let (inside, total) = region_energy(&xs, &field.intensity, x1, xn);
        out.note("field_inside_fraction", if total > 0.0 { inside / total } else { f64::NAN });
        out.note("field_correlation", correlation(&field.intensity, &psi2));
        out.note("final_population", traj.populations[0].last().copied().unwrap_or(f64::NAN));
        out.note("max_norm_drift", traj.max_norm_drift);
    }
    Ok(())
}

/// Energy inside `[a, b]` and in total, by trapezoid.
fn region_energy(xs: &[f64], y: &[f64], a: f64, b: f64) -> (f64, f64) {
    let mut inside = 0.0;
    let mut total = 0.0;
    for i in 1..xs.len() {
        let e = 0.5 * (xs[i] - xs[i - 1]) * (y[i] + y[i - 1]);
        total += e;
        let mid = 0.5 * (xs[i] + xs[i - 1]);
        if mid >= a && mid <= b {
            inside += e;
        }
    }
    (inside, total)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn chirality(doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    let model = doc.model()?;
    let seq = doc.sequence()?;
    check_sequence(doc, &seq, &model)?;
    let run = doc.run();
    let ws = omegas(&run)?;
    let mut rows = Vec::new();
    let flux = run.flux && run.t_final.is_some();
    for &w in &ws {
        let (bp, bm) = chiral_factor(&seq, w, &model)?;
        let mut row = vec![w, bp, bm];
        if flux {
            let plan = SimulationPlan::single(seq.clone(), w, model, run.t_final.unwrap_or_default())
                .with_record_interval(run.record_interval)
                .with_field(field_positions(&run, &model));
            let traj = evolve_single(&plan)?;
            let f = traj.field.as_ref().expect("field requested");
            row.push(flux_chirality(&f.positions, &f.intensity)?.0);
        }
        rows.push(row);
    }
    let mut cols = vec!["omega_q", "beta_plus", "beta_minus"];
    if flux {
        cols.push("beta_plus_flux");
    }
    out.note("min_beta_plus", rows.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min));
    out.table("chirality.txt", &[("sequence", seq.label.clone())], &cols, rows)?;
    Ok(())
}

fn dipole(doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    let model = doc.model()?;
    let seq = doc.sequence()?;
    check_sequence(doc, &seq, &model)?;
    let run = doc.run();
    let w = *omegas(&run)?.first().expect("non-empty");
    let ds = run.d_s_values.clone().unwrap_or_else(|| vec![run.d_s]);
    let rows: Vec<Vec<f64>> = ds
        .iter()
        .map(|&d| {
            let j = dipole_dipole_j(&seq, w, &model, d * seq.lambda0)?;
            Ok(vec![d, j.re, j.im, j.norm()])
        })
        .collect::<Result<_, giantatom::Error>>()?;
    out.table("dipole.txt", &[("omega_q", w.to_string())], &["d_s_over_lambda0", "re_J", "im_J", "abs_J"], rows)?;
    let j = dipole_dipole_j(&seq, w, &model, run.d_s * seq.lambda0)?;
    out.note("omega_q", w);
    out.note("abs_J", j.norm());
    if let Some(tf) = run.t_final {
        let plan = SimulationPlan::pair(seq.clone(), run.d_s * seq.lambda0, w, model, tf).with_record_interval(run.record_interval);
        let traj = evolve_pair(&plan)?;
        out.table(
            "rabi.txt",
            &[("d_s_over_lambda0", run.d_s.to_string())],
            &["t", "pe1", "pe2"],
            (0..traj.times.len()).map(|i| vec![traj.times[i], traj.populations[0][i], traj.populations[1][i]]),
        )?;
        let omega_r = rabi_frequency(run.record_interval, &traj.populations[0])?;
        out.note("rabi_frequency", omega_r);
        out.note("two_abs_J", 2.0 * j.norm());
        out.note("max_norm_drift", traj.max_norm_drift);
        if let Some(hw) = quarter_period(omega_r, run.record_interval) {
            if let Ok(c) = contrast(&traj.populations[1], hw) {
                out.note("contrast", c);
            }
        }
    }
    Ok(())
}

/// Local-maximum half window of a quarter oscillation period, in samples.
fn quarter_period(omega: f64, dt: f64) -> Option<usize> {
    (omega > 0.0).then(|| ((PI / 2.0) / omega / dt).floor().max(1.0) as usize)
}

fn disorder(doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    let model = doc.model()?;
    let seq = doc.sequence()?;
    check_sequence(doc, &seq, &model)?;
    let run = doc.run();
    let d: DisorderDoc = doc.disorder.clone().ok_or_else(|| CliError::Document("disorder needs a 'disorder' block".into()))?;
    let meta = |s: f64| {
        vec![
            ("sigma_a", s.to_string()),
            ("sigma_phi", d.sigma_phi.to_string()),
            ("n_realizations", d.n_realizations.to_string()),
            ("base_seed", d.base_seed.to_string()),
        ]
    };
    match d.observable {
        Observable::Coupling => {
            let grid = build_kgrid(&model)?;
            let sigmas = d.sigma_a_values.clone().unwrap_or_else(|| vec![d.sigma_a]);
            let clean: Vec<f64> = k_coupling(&seq, &grid).iter().map(|z| z.norm()).collect();
            let mut cols = vec!["k".to_string(), "abs_G_clean".to_string()];
            let mut data = vec![grid.momenta().to_vec(), clean];
            let target = doc.target()?;
            let mut lifts = Vec::new();
            for &s in &sigmas {
                let r = ensemble_coupling(&seq, &d.spec(s)?, &grid, d.average())?;
                let mean = r.mean_coupling.expect("coupling ensemble");
                let in_gap = grid
                    .momenta()
                    .iter()
                    .zip(&mean)
                    .filter(|(&k, _)| target.in_gap(k))
                    .map(|(_, &v)| v)
                    .fold(0.0, f64::max);
                lifts.push(json!({"sigma_a": s, "max_in_gap_abs_G": in_gap}));
                cols.push(format!("abs_G_mean_sigma_{s}"));
                data.push(mean);
            }
            let c: Vec<&str> = cols.iter().map(String::as_str).collect();
            let mut m = meta(d.sigma_a);
            m.push(("average", format!("{:?}", d.average).to_lowercase()));
            out.table("coupling_mean.txt", &m, &c, (0..data[0].len()).map(|i| data.iter().map(|v| v[i]).collect()))?;
            out.note("in_gap_lift", lifts);
        }
        Observable::Dynamics => {
            let w = *omegas(&run)?.first().expect("non-empty");
            let plan = SimulationPlan::single(seq.clone(), w, model, t_final(&run)?).with_record_interval(run.record_interval);
            let r = ensemble_dynamics(&d.spec(d.sigma_a)?, &plan)?;
            out.table("population_mean.txt", &meta(d.sigma_a), &["t", "pe_mean"], r.times.iter().zip(&r.mean_populations[0]).map(|(&t, &p)| vec![t, p]))?;
            out.note("realizations_used", r.n_used());
        }
        Observable::Chirality => {
            let mut rows = Vec::new();
            for &w in &omegas(&run)? {
                let plan = SimulationPlan::single(seq.clone(), w, model, t_final(&run)?)
                    .with_record_interval(run.record_interval)
                    .with_field(field_positions(&run, &model));
                let r = ensemble_chirality(&d.spec(d.sigma_a)?, &plan)?;
                let (bp, bm) = r.chirality.expect("chirality ensemble");
                let (fr, fl) = r.mean_flux.expect("chirality ensemble");
                rows.push(vec![w, bp, bm, fr, fl]);
            }
            out.note("min_beta_plus", rows.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min));
            out.table("chirality_mean.txt", &meta(d.sigma_a), &["omega_q", "beta_plus", "beta_minus", "flux_right", "flux_left"], rows)?;
        }
        Observable::Rabi => {
            let w = *omegas(&run)?.first().expect("non-empty");
            let plan = SimulationPlan::pair(seq.clone(), run.d_s * seq.lambda0, w, model, t_final(&run)?)
                .with_record_interval(run.record_interval);
            let r = ensemble_rabi(&d.spec(d.sigma_a)?, &plan)?;
            let (p1, p2) = (&r.mean_populations[0], &r.mean_populations[1]);
            out.table("rabi_mean.txt", &meta(d.sigma_a), &["t", "pe1_mean", "pe2_mean"], (0..r.times.len()).map(|i| vec![r.times[i], p1[i], p2[i]]))?;
            let j = dipole_dipole_j(&seq, w, &model, run.d_s * seq.lambda0)?;
            if let Some(hw) = quarter_period(2.0 * j.norm(), run.record_interval) {
                if let Ok(c) = contrast(p2, hw) {
                    out.note("contrast", c);
                }
            }
        }
    }
    Ok(())
}

fn ift(doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    let model = doc.model()?;
    let grid = build_kgrid(&model)?;
    let target = doc.target()?;
    let run = doc.run();
    let n = run.ift_points.unwrap_or(300);
    let half = run.ift_half_length.unwrap_or(35.0) * target.lambda0();
    let spacing = 2.0 * half / n as f64;
    let seq = ift_baseline(&target, half, spacing)?;
    out.text("sequence.txt", &io::sequence_to_string(&seq))?;
    let g = k_coupling(&seq, &grid);
    let plateau = plateau_level(&g, &grid, &target);
    out.table(
        "coupling.txt",
        &[("points", seq.len().to_string())],
        &["k", "abs_G_over_plateau"],
        grid.momenta().iter().zip(&g).map(|(&k, z)| vec![k, z.norm() / plateau]),
    )?;
    out.note("points", seq.len());
    out.note("in_gap_residual", in_gap_residual(&g, &grid, &target));
    Ok(())
}

/// Scenario defaults; blocks present in `doc` take precedence.
pub fn scenario_doc(name: &str, doc: &ExperimentDoc) -> Result<(Command, ExperimentDoc), CliError> {
    let builtin = |id: &str| Some(SequenceSource::Builtin(id.into()));
    let chiral_target = Some(TargetDoc { kind: TargetKind::Chiral, k0: 1.5, kd: 1.0, ..Default::default() });
    let run = |f: &dyn Fn(&mut RunDoc)| {
        let mut r = RunDoc::default();
        f(&mut r);
        Some(r)
    };
    let (cmd, mut d) = match name {
        "bandgap-fractional-decay" => (
            Command::Dynamics,
            ExperimentDoc {
                sequence: builtin("table_s1"),
                run: run(&|r| {
                    r.omega_values = Some(vec![4.5, 6.0]);
                    r.t_final = Some(300.0);
                }),
                ..Default::default()
            },
        ),
        "bandgap-bound-state" => (
            Command::BoundState,
            ExperimentDoc {
                sequence: builtin("table_s1"),
                run: run(&|r| {
                    r.omega_q = Some(4.5);
                    r.t_final = Some(500.0);
                }),
                ..Default::default()
            },
        ),
        "bandgap-disorder" => (
            Command::Disorder,
            ExperimentDoc {
                sequence: builtin("table_s1"),
                disorder: Some(DisorderDoc {
                    sigma_a_values: Some(vec![0.05, 0.1, 0.2]),
                    n_realizations: 200,
                    ..Default::default()
                }),
                ..Default::default()
            },
        ),
        "chiral-broadband" => (
            Command::Chirality,
            ExperimentDoc {
                sequence: builtin("table_s2"),
                target: chiral_target,
                run: run(&|r| r.omega_values = Some((0..=60).map(|i| 3.0 + 0.05 * i as f64).collect())),
                ..Default::default()
            },
        ),
        "chiral-disorder" => (
            Command::Disorder,
            ExperimentDoc {
                sequence: builtin("table_s2"),
                target: chiral_target,
                run: run(&|r| {
                    r.omega_values = Some(vec![3.75, 4.125, 4.5, 4.875, 5.25]);
                    r.t_final = Some(150.0);
                }),
                disorder: Some(DisorderDoc {
                    sigma_a: 0.1,
                    sigma_phi: 0.1 * PI,
                    n_realizations: 50,
                    observable: Observable::Chirality,
                    ..Default::default()
                }),
                ..Default::default()
            },
        ),
        "dipole-sweep" => (
            Command::Dipole,
            ExperimentDoc {
                sequence: builtin("table_s1"),
                run: run(&|r| {
                    r.omega_q = Some(4.4);
                    r.d_s_values = Some((0..=80).map(|i| 0.25 * i as f64).collect());
                }),
                ..Default::default()
            },
        ),
        "dipole-rabi" => (
            Command::Dipole,
            ExperimentDoc {
                sequence: builtin("table_s1"),
                run: run(&|r| {
                    r.omega_q = Some(4.4);
                    r.t_final = Some(4000.0);
                }),
                ..Default::default()
            },
        ),
        "ift-baseline" => (
            Command::Reproduce,
            ExperimentDoc {
                run: run(&|r| {
                    r.ift_points = Some(300);
                    r.ift_half_length = Some(35.0);
                }),
                ..Default::default()
            },
        ),
        other => {
            return Err(CliError::Document(format!("unknown scenario '{other}' (known: {})", SCENARIOS.join(", "))))
        }
    };
    macro_rules! prefer {
        ($($f:ident),*) => { $( if doc.$f.is_some() { d.$f = doc.$f.clone(); } )* };
    }
    prefer!(waveguide, target, weights, constraints, sequence, run, disorder, output);
    d.command = Some(Command::Reproduce.name().into());
    d.scenario = Some(name.into());
    Ok((cmd, d))
}

fn reproduce(name: &str, doc: &ExperimentDoc, out: &mut Output) -> Result<(), CliError> {
    let (cmd, resolved) = scenario_doc(name, doc)?;
    match cmd {
        Command::Reproduce => ift(&resolved, out),
        other => run(other, &resolved, out),
    }
}
