//! One-patient twin experiment: generate clinical data from a known
//! in-bounds parameter vector, then recover it with the calibration.

use std::time::Instant;

use cardioloop::calibration::{
    calibrate, CalibrationSettings, ClinicalDatum, LossModel, ParameterSpace, PatientRecord,
};
use cardioloop::model::reference_parameters;
use cardioloop::observables::OutputName;
use cardioloop::solver::SolverSettings;

fn main() {
    let base = reference_parameters();
    let solver = SolverSettings {
        samples_per_beat: 250,
        ..SolverSettings::default()
    };
    let t0 = Instant::now();
    let space = ParameterSpace::default_for(&base, &solver).unwrap();
    println!("space built in {:?}", t0.elapsed());

    // Ground truth: a deterministic in-bounds perturbation of the reference.
    let mut truth = space.reference_vector();
    let factors = [
        1.08, 0.93, 1.05, 1.06, 0.95, 1.12, 0.88, 1.07, 0.94, 1.10, 0.85, 1.04,
    ];
    for (v, f) in truth.iter_mut().zip(factors.iter()) {
        *v *= f;
    }
    space.project(&mut truth);

    let settings = CalibrationSettings::default();
    let shell = PatientRecord {
        id: "TWIN".into(),
        heart_rate: 80.0,
        body_surface_area: 1.79,
        rv_fac: None,
        tapse: None,
        data: vec![ClinicalDatum {
            output: OutputName::SapMax,
            value: 1.0,
            measurement_error: 1.0,
        }],
    };
    let model = LossModel {
        space: &space,
        base: &base,
        patient: &shell,
        solver: &solver,
        settings: &settings,
    };
    let t0 = Instant::now();
    let outputs = model.outputs(&truth).unwrap();
    println!("one solve: {:?}", t0.elapsed());

    // Synthesise RV inputs consistent with the truth via the forward lookup.
    let e_truth = truth[space.rv_active_index];
    let score = space.rv_map.fvc_for(e_truth) / space.reference_fvc;
    let patient = PatientRecord {
        id: "TWIN".into(),
        heart_rate: 80.0,
        body_surface_area: 1.79,
        rv_fac: Some(score * cardioloop::calibration::RV_FAC_REFERENCE),
        tapse: Some(score * cardioloop::calibration::TAPSE_REFERENCE),
        data: OutputName::MEASURABLE
            .iter()
            .map(|n| ClinicalDatum {
                output: *n,
                value: outputs.get(*n),
                measurement_error: n.default_relative_error() * outputs.get(*n).abs(),
            })
            .collect(),
    };

    let t0 = Instant::now();
    let result = calibrate(&patient, &space, &base, &solver, &settings).unwrap();
    println!(
        "calibrate: {:?}  loss {:.3e}  converged {}  iters {}  evals {}",
        t0.elapsed(),
        result.loss_value,
        result.converged,
        result.iterations,
        result.loss_evaluations
    );
    for fit in &result.per_datum {
        println!(
            "  {:<16} data {:>9.3}  model {:>9.3}  rel {:+.4e}",
            fit.output.as_str(),
            fit.clinical_value,
            fit.model_value,
            fit.relative_error
        );
    }
}
