//! Patient-specific parameter fitting.
//!
//! For each patient the loss is the sum of squared relative errors between
//! the simulated outputs and the clinical data. It is minimised inside the
//! bounded parameter space with a multi-start (three launches: the reference
//! configuration plus two low-discrepancy points) box-constrained
//! quasi-Newton descent; a patient counts as calibrated when the best loss
//! falls below 1e-3.

mod optimizer;
mod space;

pub use optimizer::{minimize_bounded, OptimizeOutcome, OptimizerOptions, StopReason};
pub use space::{
    CalibratedParam, ParamInterval, ParameterSpace, RvContractilityMap, RV_FAC_REFERENCE,
    SHUNT_RESISTANCE_FLOOR, TAPSE_REFERENCE,
};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParameters;
use crate::observables::{compute_outputs, OutputName, OutputSet};
use crate::solver::{integrate, SolverSettings};

/// A patient counts as calibrated below this loss.
pub const SUCCESS_LOSS: f64 = 1e-3;

/// One clinical measurement with its error, tied to a model output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalDatum {
    pub output: OutputName,
    pub value: f64,
    pub measurement_error: f64,
}

/// Inputs and sparse clinical data of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub heart_rate: f64,
    pub body_surface_area: f64,
    /// Right ventricular fractional area change, %.
    pub rv_fac: Option<f64>,
    /// Tricuspid annular plane systolic excursion, mm.
    pub tapse: Option<f64>,
    pub data: Vec<ClinicalDatum>,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.heart_rate > 0.0 && self.body_surface_area > 0.0) {
            return Err(Error::invalid(format!("{}: HR and BSA must be positive", self.id)));
        }
        if self.data.is_empty() {
            return Err(Error::invalid(format!("{}: no clinical data", self.id)));
        }
        for (i, d) in self.data.iter().enumerate() {
            if !d.output.is_measurable() {
                return Err(Error::invalid(format!(
                    "{}: {} is not a measurable output",
                    self.id,
                    d.output.as_str()
                )));
            }
            if d.value == 0.0 {
                return Err(Error::invalid(format!(
                    "{}: datum {} has zero value (relative error undefined)",
                    self.id,
                    d.output.as_str()
                )));
            }
            if !(d.measurement_error > 0.0) {
                return Err(Error::invalid(format!(
                    "{}: datum {} needs a positive measurement error",
                    self.id,
                    d.output.as_str()
                )));
            }
            if self.data[..i].iter().any(|e| e.output == d.output) {
                return Err(Error::invalid(format!(
                    "{}: duplicate datum {}",
                    self.id,
                    d.output.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Calibration controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSettings {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop when the scaled projected gradient is this small.
    pub gradient_tol: f64,
    /// Stop descending once the loss is this small (an order below success).
    pub stop_loss: f64,
    /// Relative step of the central-difference gradient.
    pub fd_relative_step: f64,
    /// Loss assigned when a simulation fails to reach its periodic state.
    pub failure_penalty: f64,
    pub lbfgs_memory: usize,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            restarts: 3,
            max_iterations: 500,
            gradient_tol: 1e-8,
            stop_loss: 1e-4,
            fd_relative_step: 1e-4,
            failure_penalty: 1e6,
            lbfgs_memory: 8,
            seed: 0,
        }
    }
}

/// Quality of fit for one datum at the calibrated point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatumFit {
    pub output: OutputName,
    pub clinical_value: f64,
    pub model_value: f64,
    /// Signed relative misfit `(model − clinical)/clinical`.
    pub relative_error: f64,
}

/// Outcome of calibrating one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub patient_id: String,
    /// Calibrated parameter vector, in [`CalibratedParam::ALL`] order.
    pub vector: Option<Vec<f64>>,
    /// Full parameter set at the returned point.
    pub params: Option<ModelParameters>,
    pub loss_value: f64,
    /// True iff `loss_value` is below 1e-3.
    pub converged: bool,
    pub restarts_used: usize,
    pub iterations: usize,
    pub loss_evaluations: usize,
    pub per_datum: Vec<DatumFit>,
    /// Present when every launch failed to produce a single valid simulation.
    pub failure: Option<String>,
}

/// Loss, outputs and gradient of one patient's fit, all as functions of the
/// calibrated parameter vector.
pub struct LossModel<'a> {
    pub space: &'a ParameterSpace,
    pub base: &'a ModelParameters,
    pub patient: &'a PatientRecord,
    pub solver: &'a SolverSettings,
    pub settings: &'a CalibrationSettings,
}

impl LossModel<'_> {
    pub fn build(&self, vector: &[f64]) -> ModelParameters {
        self.space.build_model(
            self.base,
            self.patient.heart_rate,
            self.patient.body_surface_area,
            vector,
        )
    }

    /// Simulated outputs at a parameter vector.
    pub fn outputs(&self, vector: &[f64]) -> Result<OutputSet> {
        let params = self.build(vector);
        let traj = integrate(&params, &params.initial_state(), self.solver)?;
        compute_outputs(&traj, &params)
    }

    /// Loss that stays finite across solver failures: a failed simulation is
    /// charged the failure penalty so the descent backs away from it.
    pub fn loss(&self, vector: &[f64]) -> f64 {
        match self.try_loss(vector) {
            Ok(l) => l,
            Err(e) => {
                log::warn!(
                    "patient {}: simulation failed during calibration ({e}); penalised",
                    self.patient.id
                );
                self.settings.failure_penalty
            }
        }
    }

    pub fn try_loss(&self, vector: &[f64]) -> Result<f64> {
        let outputs = self.outputs(vector)?;
        Ok(loss_from_outputs(&outputs, &self.patient.data))
    }

    /// Central-difference gradient of [`Self::loss`] with the configured
    /// relative step per component.
    pub fn gradient(&self, vector: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; vector.len()];
        let mut work = vector.to_vec();
        for i in 0..vector.len() {
            let h = self.settings.fd_relative_step * vector[i].abs().max(1e-12);
            work[i] = vector[i] + h;
            let f_plus = self.loss(&work);
            work[i] = vector[i] - h;
            let f_minus = self.loss(&work);
            work[i] = vector[i];
            g[i] = (f_plus - f_minus) / (2.0 * h);
        }
        g
    }
}

/// Sum of squared relative errors between matched outputs and data.
pub fn loss_from_outputs(outputs: &OutputSet, data: &[ClinicalDatum]) -> f64 {
    data.iter()
        .map(|d| {
            let rel = (outputs.get(d.output) - d.value) / d.value;
            rel * rel
        })
        .sum()
}

/// Replaces the RV active elastance interval with a patient-specific one
/// derived from the echo contractility inputs.
///
/// The patient's fractional area change and annular excursion are normalised
/// against the reference individual's readings; their mean rescales the
/// reference fractional volume change, and the contractility lookup turns
/// that target into an elastance. The new interval is `[0.75, 1.25]` times
/// the looked-up elastance. Missing inputs fall back to the unmodified
/// reference interval with a logged warning. All other intervals are
/// returned untouched.
pub fn build_bounds(space: &ParameterSpace, patient: &PatientRecord) -> ParameterSpace {
    let mut ratios = Vec::new();
    if let Some(fac) = patient.rv_fac {
        ratios.push(fac / RV_FAC_REFERENCE);
    }
    if let Some(tapse) = patient.tapse {
        ratios.push(tapse / TAPSE_REFERENCE);
    }
    if ratios.is_empty() {
        log::warn!(
            "patient {}: no RV_FAC/TAPSE inputs; keeping the reference contractility interval",
            patient.id
        );
        return space.clone();
    }
    let score: f64 = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let target_fvc = score * space.reference_fvc;
    let elastance = space.rv_map.elastance_for(target_fvc);
    let mut out = space.clone();
    out.intervals[out.rv_active_index] = ParamInterval {
        id: CalibratedParam::RvActiveElastance,
        reference: elastance,
        lo: 0.75 * elastance,
        hi: 1.25 * elastance,
    };
    out
}

fn halton(index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const HALTON_PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// The three launch points: the reference vector plus two low-discrepancy
/// points of the box, all deterministic in the seed.
pub fn restart_points(space: &ParameterSpace, settings: &CalibrationSettings) -> Vec<Vec<f64>> {
    let mut points = Vec::with_capacity(settings.restarts.max(1));
    let mut reference = space.reference_vector();
    space.project(&mut reference);
    points.push(reference);
    let offset = settings.seed % 4096;
    for k in 1..settings.restarts.max(1) as u64 {
        let point: Vec<f64> = space
            .intervals
            .iter()
            .enumerate()
            .map(|(i, iv)| {
                let u = halton(offset + k + 1, HALTON_PRIMES[i % HALTON_PRIMES.len()]);
                iv.lo + u * (iv.hi - iv.lo)
            })
            .collect();
        points.push(point);
    }
    points
}

/// Calibrates one patient: multi-start bounded descent, best launch wins.
pub fn calibrate(
    patient: &PatientRecord,
    space: &ParameterSpace,
    base: &ModelParameters,
    solver: &SolverSettings,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    patient.validate()?;
    space.validate()?;
    let bounds = build_bounds(space, patient);
    let model = LossModel {
        space: &bounds,
        base,
        patient,
        solver,
        settings,
    };

    let lo = bounds.lower();
    let hi = bounds.upper();
    let span: Vec<f64> = lo.iter().zip(hi.iter()).map(|(l, h)| h - l).collect();
    let to_x = |z: &[f64]| -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, zi)| lo[i] + zi * span[i])
            .collect()
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0usize;
    let mut evaluations = 0usize;
    let mut restarts_used = 0usize;
    let mut any_valid = false;

    for start in restart_points(&bounds, settings) {
        restarts_used += 1;
        let f0 = model.loss(&start);
        evaluations += 1;
        if f0 < settings.failure_penalty {
            any_valid = true;
        }
        if best.as_ref().map_or(true, |(_, f)| f0 < *f) {
            best = Some((start.clone(), f0));
        }
        // Once a launch has already met the stop target, later launches only
        // contribute their initial evaluation.
        if best.as_ref().unwrap().1 < settings.stop_loss {
            continue;
        }

        let z0: Vec<f64> = start
            .iter()
            .enumerate()
            .map(|(i, x)| ((x - lo[i]) / span[i]).clamp(0.0, 1.0))
            .collect();
        let eval_count = std::cell::Cell::new(0usize);
        let outcome = minimize_bounded(
            |z| {
                eval_count.set(eval_count.get() + 1);
                model.loss(&to_x(z))
            },
            |z| {
                eval_count.set(eval_count.get() + 2 * z.len());
                let g = model.gradient(&to_x(z));
                g.iter().zip(span.iter()).map(|(gi, s)| gi * s).collect()
            },
            &z0,
            &vec![0.0; bounds.len()],
            &vec![1.0; bounds.len()],
            &OptimizerOptions {
                max_iterations: settings.max_iterations,
                grad_tol: settings.gradient_tol,
                f_target: settings.stop_loss,
                memory: settings.lbfgs_memory,
                max_line_search_steps: 30,
            },
        );
        iterations += outcome.iterations;
        evaluations += eval_count.get();
        if outcome.f < settings.failure_penalty {
            any_valid = true;
        }
        if best.as_ref().map_or(true, |(_, f)| outcome.f < *f) {
            best = Some((to_x(&outcome.x), outcome.f));
        }
    }

    let (vector, loss_value) = best.expect("at least one restart ran");
    if !any_valid {
        return Ok(CalibrationResult {
            patient_id: patient.id.clone(),
            vector: None,
            params: None,
            loss_value,
            converged: false,
            restarts_used,
            iterations,
            loss_evaluations: evaluations,
            per_datum: Vec::new(),
            failure: Some("every simulation failed across all launches".into()),
        });
    }

    let params = model.build(&vector);
    let per_datum = match model.outputs(&vector) {
        Ok(outputs) => patient
            .data
            .iter()
            .map(|d| {
                let mv = outputs.get(d.output);
                DatumFit {
                    output: d.output,
                    clinical_value: d.value,
                    model_value: mv,
                    relative_error: (mv - d.value) / d.value,
                }
            })
            .collect(),
        Err(_) => Vec::new(),
    };

    Ok(CalibrationResult {
        patient_id: patient.id.clone(),
        vector: Some(vector),
        params: Some(params),
        loss_value,
        converged: loss_value < SUCCESS_LOSS,
        restarts_used,
        iterations,
        loss_evaluations: evaluations,
        per_datum,
        failure: None,
    })
}

/// Column order of the per-datum pairs in a cohort CSV file.
fn csv_header() -> Vec<String> {
    let mut h = vec![
        "id".to_string(),
        "HR".to_string(),
        "BSA".to_string(),
        "RV_FAC".to_string(),
        "TAPSE".to_string(),
    ];
    for name in OutputName::MEASURABLE {
        h.push(name.as_str().to_string());
        h.push(format!("{}_err", name.as_str()));
    }
    h
}

/// Writes a cohort: one row per patient, one value/error column pair per
/// measurable output, empty cells for missing data.
pub fn write_cohort_csv(path: impl AsRef<Path>, patients: &[PatientRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", csv_header().join(","))?;
    for p in patients {
        let mut row = vec![
            p.id.clone(),
            format!("{}", p.heart_rate),
            format!("{}", p.body_surface_area),
            p.rv_fac.map_or(String::new(), |v| format!("{v}")),
            p.tapse.map_or(String::new(), |v| format!("{v}")),
        ];
        for name in OutputName::MEASURABLE {
            match p.data.iter().find(|d| d.output == name) {
                Some(d) => {
                    row.push(format!("{}", d.value));
                    row.push(format!("{}", d.measurement_error));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a cohort CSV written in the layout of [`write_cohort_csv`].
pub fn read_cohort_csv(path: impl AsRef<Path>) -> Result<Vec<PatientRecord>> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::invalid(format!(
            "cannot read cohort file {}: {e}",
            path.as_ref().display()
        ))
    })?;
    read_cohort(file)
}

pub fn read_cohort<R: std::io::Read>(reader: R) -> Result<Vec<PatientRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected = csv_header();
    let got: Vec<&str> = header.iter().collect();
    if got != expected.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(Error::invalid(format!(
            "cohort header mismatch: expected {expected:?}, got {got:?}"
        )));
    }
    let parse_opt = |field: &str, what: &str| -> Result<Option<f64>> {
        if field.is_empty() {
            Ok(None)
        } else {
            field
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::invalid(format!("bad number {field:?} in column {what}")))
        }
    };
    let mut patients = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let id = record[0].to_string();
        let hr = parse_opt(&record[1], "HR")?
            .ok_or_else(|| Error::invalid(format!("{id}: HR is required")))?;
        let bsa = parse_opt(&record[2], "BSA")?
            .ok_or_else(|| Error::invalid(format!("{id}: BSA is required")))?;
        let rv_fac = parse_opt(&record[3], "RV_FAC")?;
        let tapse = parse_opt(&record[4], "TAPSE")?;
        let mut data = Vec::new();
        for (k, name) in OutputName::MEASURABLE.iter().enumerate() {
            let value = parse_opt(&record[5 + 2 * k], name.as_str())?;
            let err = parse_opt(&record[6 + 2 * k], &format!("{}_err", name.as_str()))?;
            match (value, err) {
                (Some(v), Some(e)) => data.push(ClinicalDatum {
                    output: *name,
                    value: v,
                    measurement_error: e,
                }),
                (Some(v), None) => data.push(ClinicalDatum {
                    output: *name,
                    value: v,
                    measurement_error: name.default_relative_error() * v.abs(),
                }),
                (None, _) => {}
            }
        }
        let patient = PatientRecord {
            id,
            heart_rate: hr,
            body_surface_area: bsa,
            rv_fac,
            tapse,
            data,
        };
        patient.validate()?;
        patients.push(patient);
    }
    Ok(patients)
}
