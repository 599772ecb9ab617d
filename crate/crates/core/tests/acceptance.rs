//! Acceptance suite: one test per shipped acceptance criterion, each
//! printing a PASS line (run with `cargo test --test acceptance -- --nocapture`
//! to see them).

mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use cardioloop::calibration::{
    CalibrationSettings, LossModel, ParameterSpace, SUCCESS_LOSS,
};
use cardioloop::cohort::{generate, CohortSpec};
use cardioloop::model::reference_parameters;
use cardioloop::observables::{compute_outputs, OutputName, OutputSet};
use cardioloop::pipeline::{run_calibration, run_generate, AnalysisReport, Pipeline, RunConfig};
use cardioloop::solver::{integrate, step_dopri, FnSystem, SolverSettings};
use cardioloop::stats::{
    check_outputs_in_ranges, z_test_one_tailed, Classification, HealthyRanges, SampleSummary,
    TableGroup, TailDirection,
};
use cardioloop::uncertainty::{reliability, rejection_sample, UqSettings, Window};

use common::{assert_trees_identical, regression_slope, run_cli, write_config};

fn pass(criterion: u32, what: &str) {
    println!("criterion {criterion:02}: PASS - {what}");
}

#[test]
fn c01_reference_outputs_inside_healthy_ranges() {
    let params = reference_parameters();
    assert_eq!(params.heart_rate, 80.0);
    assert_eq!(params.body_surface_area, 1.79);
    let traj = integrate(&params, &params.initial_state(), &SolverSettings::default()).unwrap();
    let outputs = compute_outputs(&traj, &params).unwrap();
    let violations =
        check_outputs_in_ranges(&outputs, params.body_surface_area, HealthyRanges::builtin());
    assert!(
        violations.is_empty(),
        "reference individual violates: {violations:?}"
    );
    pass(1, "every reference output lies inside its healthy range");
}

/// Bundled regression fixtures: cohort summary statistics with their known
/// report groups, plus reference p-values for the significant rows.
struct Fixture {
    quantity: &'static str,
    n: usize,
    mean: f64,
    std: f64,
    group: TableGroup,
    reference_p: Option<f64>,
}

const MODEL_OUTPUT_FIXTURES: [Fixture; 23] = [
    Fixture { quantity: "RV_Pmax", n: 29, mean: 33.7, std: 6.8, group: TableGroup::Significant, reference_p: Some(2.62e-6) },
    Fixture { quantity: "PAP_min", n: 29, mean: 23.6, std: 6.2, group: TableGroup::Significant, reference_p: Some(3.06e-11) },
    Fixture { quantity: "PAP_mean", n: 29, mean: 27.1, std: 6.5, group: TableGroup::Significant, reference_p: Some(9.97e-6) },
    Fixture { quantity: "PWP_min", n: 28, mean: 17.1, std: 5.2, group: TableGroup::Significant, reference_p: Some(1.04e-7) },
    Fixture { quantity: "PWP_mean", n: 28, mean: 17.5, std: 5.1, group: TableGroup::Significant, reference_p: Some(5.35e-3) },
    Fixture { quantity: "LV_SV", n: 29, mean: 74.0, std: 10.7, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "CI", n: 29, mean: 3.2, std: 0.5, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "LA_Pmax", n: 25, mean: 12.8, std: 3.2, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "LA_Pmean", n: 27, mean: 10.2, std: 2.8, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "LV_Pmax", n: 29, mean: 124.4, std: 13.3, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "RA_I_Vmax", n: 28, mean: 31.8, std: 8.0, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "RV_I_EDV", n: 29, mean: 75.4, std: 12.4, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "RV_EF", n: 29, mean: 53.6, std: 5.3, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "SVR", n: 29, mean: 15.9, std: 3.3, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "PVR", n: 28, mean: 3.0, std: 1.4, group: TableGroup::NotAltered, reference_p: None },
    Fixture { quantity: "LA_Pmin", n: 22, mean: 7.4, std: 2.2, group: TableGroup::SmallSample, reference_p: None },
    Fixture { quantity: "LV_Pmin", n: 12, mean: 6.2, std: 1.4, group: TableGroup::SmallSample, reference_p: None },
    Fixture { quantity: "RV_I_ESV", n: 14, mean: 33.1, std: 8.4, group: TableGroup::SmallSample, reference_p: None },
    Fixture { quantity: "RA_Pmax", n: 9, mean: 11.7, std: 3.3, group: TableGroup::SmallSample, reference_p: None },
    Fixture { quantity: "RA_Pmin", n: 10, mean: 4.4, std: 2.9, group: TableGroup::SmallSample, reference_p: None },
    Fixture { quantity: "RA_Pmean", n: 23, mean: 7.0, std: 2.6, group: TableGroup::SmallSample, reference_p: None },
    Fixture { quantity: "RV_Pmin", n: 5, mean: 3.0, std: 2.6, group: TableGroup::SmallSample, reference_p: None },
    Fixture { quantity: "ShuntFraction", n: 9, mean: 3.7, std: 0.8, group: TableGroup::SmallSample, reference_p: None },
];

#[test]
fn c02_summaries_only_analysis_reproduces_group_labels() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "config.json", r#"{ "output_dir": "out" }"#);
    let summaries = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/example_cohort_summaries.csv");
    let out = run_cli(
        dir.path(),
        &[
            "--config",
            "config.json",
            "analyze",
            "--summaries-only",
            summaries.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: AnalysisReport = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/analysis/report.json")).unwrap(),
    )
    .unwrap();

    // Raw-data pass: every row sits in range (or has no range); no tests ran.
    assert_eq!(report.test_i.len(), 8);
    for row in &report.test_i {
        assert!(
            matches!(
                row.classification,
                Classification::NotAlteredInRange | Classification::NoRange
            ),
            "{}: {:?}",
            row.quantity,
            row.classification
        );
        assert!(row.p_value.is_none());
    }

    // Model-output pass: every group label matches, and the significant rows
    // reproduce the reference p-values within a factor of two (the fixtures
    // carry rounded means and deviations).
    let by_name: BTreeMap<&str, &cardioloop::pipeline::AnalysisRow> = report
        .test_ii
        .iter()
        .map(|r| (r.quantity.as_str(), r))
        .collect();
    for fixture in MODEL_OUTPUT_FIXTURES {
        let row = by_name
            .get(fixture.quantity)
            .unwrap_or_else(|| panic!("{} missing from report", fixture.quantity));
        let s = row.summary.expect("summaries-only rows carry their sample");
        assert_eq!((s.n, s.mean, s.std), (fixture.n, fixture.mean, fixture.std));
        assert_eq!(
            row.group,
            Some(fixture.group),
            "{}: group mismatch ({:?})",
            fixture.quantity,
            row.classification
        );
        if let Some(p_ref) = fixture.reference_p {
            assert_eq!(row.classification, Classification::IncreasedSignificant);
            let p = row.p_value.expect("significant rows carry a p-value");
            assert!(
                p >= p_ref / 2.0 && p <= p_ref * 2.0,
                "{}: p = {p:.3e} vs reference {p_ref:.3e}",
                fixture.quantity
            );
        }
    }
    pass(2, "summaries-only analysis reproduces all bundled group labels");
}

#[test]
fn c03_z_test_kernel() {
    // At the bound the one-tailed p-value is exactly one half.
    let s = SampleSummary { n: 29, mean: 16.0, std: 6.2 };
    assert_eq!(z_test_one_tailed(&s, 16.0, TailDirection::Above).unwrap(), 0.5);
    assert_eq!(z_test_one_tailed(&s, 16.0, TailDirection::Below).unwrap(), 0.5);

    // Far tail: the bundled minimal-pulmonary-pressure triple against its
    // upper bound.
    let s = SampleSummary { n: 29, mean: 23.6, std: 6.2 };
    let p = z_test_one_tailed(&s, 16.0, TailDirection::Above).unwrap();
    assert!(p < 1e-9, "p = {p:.3e}");
    // Order-of-magnitude agreement with the reference value 3.06e-11.
    assert!(p > 3.06e-12 && p < 3.06e-10, "p = {p:.3e}");
    pass(3, "z-test kernel exact at the bound and accurate in the far tail");
}

#[test]
fn c04_volume_conservation_over_random_draws() {
    let base = reference_parameters();
    let solver = SolverSettings {
        samples_per_beat: 250,
        ..SolverSettings::default()
    };
    let space = ParameterSpace::default_for(&base, &solver).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for draw in 0..50 {
        let vector: Vec<f64> = space
            .intervals
            .iter()
            .map(|iv| rng.random_range(iv.lo..=iv.hi))
            .collect();
        let params = space.build_model(&base, base.heart_rate, base.body_surface_area, &vector);
        let init = params.initial_state();
        let v0 = cardioloop::model::total_blood_volume(&init, &params);
        let run = cardioloop::solver::integrate_n_beats(&params, &init, 20, &solver)
            .unwrap_or_else(|e| panic!("draw {draw} failed: {e}"));
        for beat in &run.beat_states {
            for s in beat {
                let drift = (cardioloop::model::total_blood_volume(s, &params) - v0).abs() / v0;
                worst = worst.max(drift);
            }
        }
    }
    assert!(worst < 1e-4, "worst relative drift {worst:.3e}");
    pass(4, "volume drift over 20 beats stays below 1e-4 on 50 random draws");
}

#[test]
fn c05_integrator_convergence_order() {
    // Fixed-step global convergence on a smooth nonlinear problem with a
    // known solution: logistic growth y' = y(1-y), y(0) = 0.1.
    let sys = FnSystem::new(1, |_t, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * (1.0 - y[0]));
    let exact = |t: f64| 1.0 / (1.0 + 9.0 * (-t).exp());
    let mut points = Vec::new();
    for steps in [4usize, 8, 16, 32, 64] {
        let h = 1.0 / steps as f64;
        let mut y = vec![0.1];
        for k in 0..steps {
            let (y1, _) = step_dopri(&sys, k as f64 * h, &y, h).unwrap();
            y = y1;
        }
        let err = (y[0] - exact(1.0)).abs();
        points.push((h.ln(), err.ln()));
    }
    let slope = regression_slope(&points);
    assert!(
        (slope - 5.0).abs() < 0.2,
        "observed global order {slope:.3}"
    );
    pass(5, "empirical convergence order is 5 within 0.2");
}

#[test]
fn c06_gradient_matches_central_differences() {
    let base = reference_parameters();
    let solver = SolverSettings {
        samples_per_beat: 250,
        steady_state_tol: 1e-4,
        ..SolverSettings::default()
    };
    let space = ParameterSpace::default_for(&base, &solver).unwrap();
    let spec = CohortSpec {
        size: 3,
        rng_seed: 31,
        noise_scale: 1.0,
        ..CohortSpec::default()
    };
    let (patients, _) = generate(&spec, &space, &base, &solver).unwrap();
    let settings = CalibrationSettings::default();
    let mut rng = ChaCha12Rng::seed_from_u64(606);
    let mut checked = 0usize;
    for patient in &patients {
        let model = LossModel {
            space: &space,
            base: &base,
            patient,
            solver: &solver,
            settings: &settings,
        };
        for _ in 0..10 {
            let point: Vec<f64> = space
                .intervals
                .iter()
                .map(|iv| rng.random_range(iv.lo..=iv.hi))
                .collect();
            let grad = model.gradient(&point);
            // Independent central-difference oracle at the contract's
            // relative step.
            let mut work = point.clone();
            for i in 0..point.len() {
                let h = 1e-4 * point[i].abs();
                work[i] = point[i] + h;
                let f_plus = model.loss(&work);
                work[i] = point[i] - h;
                let f_minus = model.loss(&work);
                work[i] = point[i];
                let oracle = (f_plus - f_minus) / (2.0 * h);
                if oracle.abs() < 1e-10 && grad[i].abs() < 1e-10 {
                    continue;
                }
                let rel = (grad[i] - oracle).abs() / oracle.abs().max(grad[i].abs());
                assert!(
                    rel < 1e-2,
                    "{}: component {i}: {} vs oracle {} (rel {rel:.3e})",
                    patient.id,
                    grad[i],
                    oracle
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "only {checked} components compared");
    pass(6, "loss gradient matches the central-difference oracle");
}

#[test]
fn c07_twin_experiment_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let mut config: RunConfig = serde_json::from_str(
        r#"{
            "seed": 2024,
            "jobs": 2,
            "cohort": { "size": 10, "parameter_jitter": 0.12, "input_jitter": 0.08, "noise_scale": 0.0 }
        }"#,
    )
    .unwrap();
    config.output_dir = dir.path().join("out");
    let pl = Pipeline::load(config).unwrap();
    let (_, patients, _) = run_generate(&pl).unwrap();
    let calibrations = run_calibration(&pl, &patients).unwrap();
    assert_eq!(calibrations.len(), 10);
    for c in &calibrations {
        assert!(
            c.result.converged && c.result.loss_value < SUCCESS_LOSS,
            "{} failed: loss {:.3e}",
            c.record.id,
            c.result.loss_value
        );
        for fit in &c.result.per_datum {
            assert!(
                fit.relative_error.abs() < 0.032,
                "{} {}: {:.3}% misfit",
                c.record.id,
                fit.output.as_str(),
                100.0 * fit.relative_error.abs()
            );
        }
    }
    pass(7, "10 of 10 zero-noise twins recovered below the loss threshold");
}

#[test]
fn c08_rejection_sampling_contract() {
    // Stub model (output = parameter) with a window covering exactly 12% of
    // the perturbation range at the initial width.
    let windows = [Window {
        output: OutputName::SapMax,
        lo: 0.5 - 0.0075,
        hi: 0.5 + 0.0075,
        degenerate: false,
    }];
    let settings = UqSettings {
        rng_seed: 11,
        ..UqSettings::default()
    };
    let eval = |v: &[f64]| Some((v.to_vec(), v.to_vec()));
    let outcome = rejection_sample(eval, &windows, &[0.5], &[0.0], &[1.0], &settings).unwrap();
    assert!(
        outcome.tuned_ratio >= 0.10 && outcome.tuned_ratio <= 0.15,
        "tuned acceptance ratio {}",
        outcome.tuned_ratio
    );
    assert_eq!(outcome.accepted.len(), settings.n);

    // Identical seeds give identical accepted sets.
    let again = rejection_sample(eval, &windows, &[0.5], &[0.0], &[1.0], &settings).unwrap();
    assert_eq!(outcome.accepted, again.accepted);

    // Reliability rule at 4% and 6% std-to-mean ratios.
    let mk = |ratio: f64| -> Vec<OutputSet> {
        let mean = 20.0;
        let d = ratio * mean / (2.0f64).sqrt();
        vec![
            OutputSet::from_fn(|_| mean - d),
            OutputSet::from_fn(|_| mean + d),
        ]
    };
    let uq = UqSettings::default();
    assert!(reliability(&mk(0.04), &uq).get(OutputName::PwpMean).unwrap().reliable);
    assert!(!reliability(&mk(0.06), &uq).get(OutputName::PwpMean).unwrap().reliable);
    pass(8, "acceptance ratio tuned into band; reliability rule and determinism hold");
}

#[test]
fn c09_shunt_fraction_reaches_seventy_percent() {
    let base = reference_parameters();
    let solver = SolverSettings {
        samples_per_beat: 250,
        ..SolverSettings::default()
    };
    let space = ParameterSpace::default_for(&base, &solver).unwrap();
    let interval = space
        .intervals
        .iter()
        .find(|iv| iv.id == cardioloop::calibration::CalibratedParam::ShuntResistance)
        .unwrap();
    // Sweep from the reference down to the calibration floor.
    let mut values = vec![interval.reference];
    let mut r = interval.reference;
    while r / 2.0 > interval.lo {
        r /= 2.0;
        values.push(r);
    }
    values.push(interval.lo);
    let mut last = -1.0;
    let mut final_fraction = 0.0;
    for r_sh in values {
        let mut params = base.clone();
        params.shunt_resistance = r_sh;
        let traj = integrate(&params, &params.initial_state(), &solver).unwrap();
        let outputs = compute_outputs(&traj, &params).unwrap();
        let sf = outputs.get(OutputName::ShuntFraction);
        assert!(
            sf > last,
            "shunt fraction not increasing: {sf} after {last} at R_SH {r_sh}"
        );
        last = sf;
        final_fraction = sf;
    }
    assert!(
        final_fraction >= 70.0,
        "shunt fraction at the interval floor is {final_fraction:.1}%"
    );
    pass(9, "shunt fraction rises monotonically to >= 70% at the interval floor");
}

#[test]
fn c10_pipeline_determinism_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();

    // One shared synthetic cohort.
    let mut gen_config: RunConfig = serde_json::from_str(
        r#"{
            "seed": 99,
            "solver": { "samples_per_beat": 250 },
            "cohort": { "size": 20, "parameter_jitter": 0.1, "noise_scale": 0.0 }
        }"#,
    )
    .unwrap();
    gen_config.output_dir = base.to_path_buf();
    let pl = Pipeline::load(gen_config).unwrap();
    let (cohort_path, _, _) = run_generate(&pl).unwrap();

    let config_body = |jobs: usize, out: &str| {
        format!(
            r#"{{
                "patients": "{}",
                "output_dir": "{}",
                "seed": 99,
                "jobs": {jobs},
                "solver": {{ "samples_per_beat": 250 }},
                "calibration": {{ "max_iterations": 25 }},
                "uq": {{ "n": 30 }}
            }}"#,
            cohort_path.display(),
            base.join(out).display()
        )
    };
    write_config(base, "run1.json", &config_body(1, "out1"));
    write_config(base, "run8.json", &config_body(8, "out8"));

    let out1 = run_cli(base, &["--config", "run1.json", "run"]);
    assert!(out1.status.success(), "{}", String::from_utf8_lossy(&out1.stderr));
    let out8 = run_cli(base, &["--config", "run8.json", "run"]);
    assert!(out8.status.success(), "{}", String::from_utf8_lossy(&out8.stderr));

    assert_trees_identical(&base.join("out1"), &base.join("out8"));
    pass(10, "end-to-end run is byte-identical across --jobs 1 and --jobs 8");
}
