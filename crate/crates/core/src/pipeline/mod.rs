//! Batch orchestration: configuration, per-patient stages, artifacts and
//! reports behind the command-line binary.
//!
//! Every stage writes its results as JSON artifacts under the output
//! directory and can equally be fed from those artifacts, so
//! calibrate → uq → analyze run as one process or as separate invocations
//! with bit-identical results. All randomness flows from the single
//! configured seed through per-patient derived seeds (`seed ⊕ index`), which
//! makes results independent of the parallelism degree.

mod report;

pub use report::{read_summaries_csv, AnalysisReport, AnalysisRow};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate, read_cohort_csv, CalibrationResult, CalibrationSettings, ParameterSpace,
    PatientRecord,
};
use crate::cohort::{generate, CohortSpec, GroundTruth};
use crate::error::{Error, Result};
use crate::model::{load_parameters, reference_parameters, ModelParameters};
use crate::observables::{compute_outputs_with, OutputName, PvrDownstream};
use crate::solver::{integrate, SolverSettings, Trajectory};
use crate::stats::{
    classify, table_group, Classification, HealthyRange, HealthyRanges, SampleSummary,
};
use crate::uncertainty::{reliability, sample_outputs, ReliabilityVerdict, UqSettings};

/// Controls of the two-pass cohort analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    pub alpha: f64,
    /// Sample-size gate of the model-output pass.
    pub min_n: usize,
    /// Rows with fewer elements are reported in the small-sample group.
    pub small_sample_n: usize,
    pub pvr_downstream: PvrDownstream,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            alpha: crate::stats::DEFAULT_ALPHA,
            min_n: crate::stats::DEFAULT_MIN_N,
            small_sample_n: crate::stats::SMALL_SAMPLE_GROUP_N,
            pvr_downstream: PvrDownstream::default(),
        }
    }
}

/// Full run configuration. Paths left unset fall back to the bundled
/// reference parameter set and healthy ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub reference_parameters: Option<PathBuf>,
    pub healthy_ranges: Option<PathBuf>,
    pub patients: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads for patient-level parallelism; 0 picks the default.
    pub jobs: usize,
    pub solver: SolverSettings,
    pub calibration: CalibrationSettings,
    pub uq: UqSettings,
    pub analysis: AnalysisSettings,
    pub cohort: CohortSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            reference_parameters: None,
            healthy_ranges: None,
            patients: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            jobs: 0,
            solver: SolverSettings::default(),
            calibration: CalibrationSettings::default(),
            uq: UqSettings::default(),
            analysis: AnalysisSettings::default(),
            cohort: CohortSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::invalid(format!(
                "cannot read config {}: {e}",
                path.as_ref().display()
            ))
        })?;
        let config: RunConfig = serde_json::from_str(&text)?;
        Ok(config)
    }

    /// FNV-1a hash of the canonical JSON form, stamped into reports.
    ///
    /// Covers the result-affecting fields only: the parallelism degree and
    /// the output location never change what is computed, so they are
    /// normalised away and reruns across `--jobs` settings stay
    /// byte-identical.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.jobs = 0;
        canonical.output_dir = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serialises");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    /// Seed for patient `index`: the global seed with the index folded in.
    pub fn patient_seed(&self, index: usize) -> u64 {
        self.seed ^ (index as u64)
    }
}

/// Loaded context shared by every stage.
pub struct Pipeline {
    pub config: RunConfig,
    pub base: ModelParameters,
    pub ranges: HealthyRanges,
    pub space: ParameterSpace,
}

impl Pipeline {
    pub fn load(config: RunConfig) -> Result<Self> {
        config.solver.validate()?;
        config.uq.validate()?;
        let base = match &config.reference_parameters {
            Some(path) => load_parameters(path)?,
            None => reference_parameters(),
        };
        base.validate()?;
        let ranges = match &config.healthy_ranges {
            Some(path) => HealthyRanges::load(path)?,
            None => HealthyRanges::builtin().clone(),
        };
        let space = ParameterSpace::default_for(&base, &config.solver)?;
        Ok(Pipeline {
            config,
            base,
            ranges,
            space,
        })
    }

    pub fn patients(&self) -> Result<Vec<PatientRecord>> {
        let path = self.config.patients.as_ref().ok_or_else(|| {
            Error::invalid("this command needs a patient cohort file (--patients or config)")
        })?;
        read_cohort_csv(path)
    }

    fn out(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.config.output_dir.join(rel)
    }

    /// Runs `work` on an indexed patient list inside a dedicated thread
    /// pool, preserving input order in the output.
    fn for_patients<T: Send, I: Sync>(
        &self,
        items: &[I],
        work: impl Fn(usize, &I) -> T + Sync,
    ) -> Vec<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            items
                .par_iter()
                .enumerate()
                .map(|(i, item)| work(i, item))
                .collect()
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

// ---------------------------------------------------------------------------
// simulate

/// Output of a single simulation command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub id: String,
    pub beats_to_converge: usize,
    pub transient_csv: PathBuf,
    pub outputs_json: PathBuf,
}

/// Simulates one parameter set to its periodic state and writes the
/// normalised transient plus the output set.
pub fn run_simulate(
    pl: &Pipeline,
    params: &ModelParameters,
    id: &str,
) -> Result<(SimulateSummary, Trajectory)> {
    let traj = integrate(params, &params.initial_state(), &pl.config.solver)?;
    let outputs = compute_outputs_with(&traj, params, pl.config.analysis.pvr_downstream)?;
    let dir = pl.out("transients");
    std::fs::create_dir_all(&dir)?;
    let csv_path = dir.join(format!("{}.csv", sanitize_id(id)));
    let mut file = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    traj.write_csv(&mut file)?;
    let outputs_path = dir.join(format!("{}_outputs.json", sanitize_id(id)));
    write_json(&outputs_path, &outputs)?;
    Ok((
        SimulateSummary {
            id: id.to_string(),
            beats_to_converge: traj.beats_to_converge,
            transient_csv: csv_path,
            outputs_json: outputs_path,
        },
        traj,
    ))
}

// ---------------------------------------------------------------------------
// generate

/// Writes a synthetic cohort (and its ground truth sidecar) into the output
/// directory and returns the cohort path.
pub fn run_generate(pl: &Pipeline) -> Result<(PathBuf, Vec<PatientRecord>, Vec<GroundTruth>)> {
    let mut spec = pl.config.cohort.clone();
    spec.rng_seed = pl.config.seed.wrapping_add(spec.rng_seed);
    let (patients, truths) = generate(&spec, &pl.space, &pl.base, &pl.config.solver)?;
    std::fs::create_dir_all(&pl.config.output_dir)?;
    let cohort_path = pl.out("patients.csv");
    crate::calibration::write_cohort_csv(&cohort_path, &patients)?;
    write_json(&pl.out("ground_truth.json"), &truths)?;
    Ok((cohort_path, patients, truths))
}

// ---------------------------------------------------------------------------
// calibrate

/// One patient's calibration, tied to its cohort position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientCalibration {
    pub index: usize,
    pub record: PatientRecord,
    pub result: CalibrationResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub total: usize,
    pub converged: usize,
    pub converged_ids: Vec<String>,
    pub failed_ids: Vec<String>,
}

/// Calibrates every patient (in parallel) and writes per-patient artifacts
/// plus a cohort summary.
pub fn run_calibration(
    pl: &Pipeline,
    patients: &[PatientRecord],
) -> Result<Vec<PatientCalibration>> {
    let results: Vec<Result<PatientCalibration>> = pl.for_patients(patients, |index, patient| {
        let settings = CalibrationSettings {
            seed: pl.config.patient_seed(index),
            ..pl.config.calibration.clone()
        };
        let result = calibrate(patient, &pl.space, &pl.base, &pl.config.solver, &settings)?;
        Ok(PatientCalibration {
            index,
            record: patient.clone(),
            result,
        })
    });
    let mut calibrations = Vec::with_capacity(results.len());
    for r in results {
        calibrations.push(r?);
    }

    for c in &calibrations {
        write_json(
            &pl.out(format!("calibration/{}.json", sanitize_id(&c.record.id))),
            c,
        )?;
        // Converged patients also get their periodic-beat transient.
        if c.result.converged {
            if let Some(params) = &c.result.params {
                run_simulate(pl, params, &c.record.id)?;
            }
        }
    }
    let summary = CalibrationSummary {
        total: calibrations.len(),
        converged: calibrations.iter().filter(|c| c.result.converged).count(),
        converged_ids: calibrations
            .iter()
            .filter(|c| c.result.converged)
            .map(|c| c.record.id.clone())
            .collect(),
        failed_ids: calibrations
            .iter()
            .filter(|c| !c.result.converged)
            .map(|c| c.record.id.clone())
            .collect(),
    };
    write_json(&pl.out("calibration/summary.json"), &summary)?;
    Ok(calibrations)
}

/// Reloads calibration artifacts for the given cohort, in cohort order.
pub fn load_calibrations(
    pl: &Pipeline,
    patients: &[PatientRecord],
) -> Result<Vec<PatientCalibration>> {
    patients
        .iter()
        .map(|p| {
            read_json::<PatientCalibration>(
                &pl.out(format!("calibration/{}.json", sanitize_id(&p.id))),
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// uq

/// Reliability outcome of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum UqOutcome {
    /// The patient never calibrated; no sampling was attempted.
    Skipped { reason: String },
    /// The acceptance ratio could not be tuned into its band.
    Failed { reason: String },
    Done {
        verdict: ReliabilityVerdict,
        final_w: f64,
        total_draws: usize,
        adaptations: usize,
        tuned_ratio: f64,
        sample_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientUq {
    pub index: usize,
    pub patient_id: String,
    pub outcome: UqOutcome,
}

/// Screens every calibrated patient's outputs for reliability.
pub fn run_uq(pl: &Pipeline, calibrations: &[PatientCalibration]) -> Result<Vec<PatientUq>> {
    let reports: Vec<PatientUq> = pl.for_patients(calibrations, |_, c| {
        let outcome = if !c.result.converged {
            UqOutcome::Skipped {
                reason: format!("not calibrated (loss {:.3e})", c.result.loss_value),
            }
        } else {
            let vector = c.result.vector.as_ref().expect("converged result has a vector");
            let settings = UqSettings {
                rng_seed: pl.config.patient_seed(c.index),
                ..pl.config.uq.clone()
            };
            match sample_outputs(
                &c.record,
                vector,
                &pl.space,
                &pl.base,
                &pl.config.solver,
                &settings,
            ) {
                Ok(outcome) => UqOutcome::Done {
                    verdict: reliability(&outcome.accepted, &settings),
                    final_w: outcome.final_w,
                    total_draws: outcome.total_draws,
                    adaptations: outcome.adaptations,
                    tuned_ratio: outcome.tuned_ratio,
                    sample_size: outcome.accepted.len(),
                },
                Err(e) => UqOutcome::Failed {
                    reason: e.to_string(),
                },
            }
        };
        PatientUq {
            index: c.index,
            patient_id: c.record.id.clone(),
            outcome,
        }
    });
    for r in &reports {
        write_json(&pl.out(format!("uq/{}.json", sanitize_id(&r.patient_id))), r)?;
    }
    Ok(reports)
}

/// Reloads UQ artifacts for the given cohort, in cohort order.
pub fn load_uq(pl: &Pipeline, patients: &[PatientRecord]) -> Result<Vec<PatientUq>> {
    patients
        .iter()
        .map(|p| read_json::<PatientUq>(&pl.out(format!("uq/{}.json", sanitize_id(&p.id)))))
        .collect()
}

// ---------------------------------------------------------------------------
// analyze

/// Clinical quantities of the raw-data pass: output, reported name and the
/// per-patient transform (volumes indexed by BSA to match their ranges).
fn test_i_quantities() -> Vec<(OutputName, &'static str, bool)> {
    vec![
        (OutputName::LaVmax, "LA_I_Vmax", true),
        (OutputName::LvEdv, "LV_I_EDV", true),
        (OutputName::LvEsv, "LV_ESV", false),
        (OutputName::LvEf, "LV_EF", false),
        (OutputName::MaxGradPRav, "max_grad_p_rAV", false),
        (OutputName::SapMax, "SAP_max", false),
        (OutputName::SapMin, "SAP_min", false),
        (OutputName::PapMax, "PAP_max", false),
    ]
}

/// Model-only outputs of the second pass, in canonical order.
fn test_ii_quantities() -> Vec<OutputName> {
    OutputName::ALL
        .iter()
        .copied()
        .filter(|n| !n.is_measurable())
        .collect()
}

fn classify_row(
    quantity: &str,
    summary: Option<SampleSummary>,
    range: Option<&HealthyRange>,
    settings: &AnalysisSettings,
    gated: bool,
) -> Result<AnalysisRow> {
    let (classification, p_value) = match &summary {
        Some(s) => classify(
            s,
            range,
            settings.alpha,
            if gated { Some(settings.min_n) } else { None },
        )?,
        None => (Classification::InsufficientSample, None),
    };
    let group = if gated {
        Some(table_group(
            classification,
            summary.map_or(0, |s| s.n),
            settings.small_sample_n,
        ))
    } else {
        None
    };
    Ok(AnalysisRow {
        quantity: quantity.to_string(),
        summary,
        lower: range.and_then(|r| r.lower),
        upper: range.and_then(|r| r.upper),
        classification,
        p_value,
        group,
    })
}

fn group_rank(row: &AnalysisRow) -> u8 {
    match row.group {
        Some(crate::stats::TableGroup::Significant) => 0,
        Some(crate::stats::TableGroup::NotAltered) => 1,
        Some(crate::stats::TableGroup::SmallSample) => 2,
        Some(crate::stats::TableGroup::NoRange) => 3,
        None => 4,
    }
}

/// The two-pass analysis over cohort data and reliability verdicts.
pub fn run_analysis(
    pl: &Pipeline,
    patients: &[PatientRecord],
    uq: &[PatientUq],
) -> Result<AnalysisReport> {
    let settings = &pl.config.analysis;

    // Pass 1: raw clinical data, per quantity across patients.
    let mut test_i = Vec::new();
    for (output, quantity, indexed) in test_i_quantities() {
        let values: Vec<f64> = patients
            .iter()
            .flat_map(|p| {
                p.data.iter().filter(|d| d.output == output).map(|d| {
                    if indexed {
                        d.value / p.body_surface_area
                    } else {
                        d.value
                    }
                })
            })
            .collect();
        let summary = crate::stats::summarize_sample(&values);
        if summary.is_none() {
            continue; // quantity never measured in this cohort
        }
        test_i.push(classify_row(
            quantity,
            summary,
            pl.ranges.get(quantity),
            settings,
            false,
        )?);
    }

    // Pass 2: reliable model-output means, one value per screened patient.
    let mut test_ii = Vec::new();
    for output in test_ii_quantities() {
        let values: Vec<f64> = uq
            .iter()
            .filter_map(|r| match &r.outcome {
                UqOutcome::Done { verdict, .. } => verdict
                    .get(output)
                    .filter(|o| o.reliable)
                    .map(|o| o.mean),
                _ => None,
            })
            .collect();
        let summary = crate::stats::summarize_sample(&values);
        test_ii.push(classify_row(
            output.as_str(),
            summary,
            pl.ranges.get(output.as_str()),
            settings,
            true,
        )?);
    }
    test_ii.sort_by_key(group_rank);

    let report = AnalysisReport {
        test_i,
        test_ii,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: pl.config.hash(),
        seed: pl.config.seed,
    };
    write_analysis(pl, &report)?;
    Ok(report)
}

/// Summaries-only analysis: classify externally supplied (n, mean, std)
/// triples without touching the model.
pub fn run_analysis_from_summaries(
    pl: &Pipeline,
    test_i: &[(String, SampleSummary)],
    test_ii: &[(String, SampleSummary)],
) -> Result<AnalysisReport> {
    let settings = &pl.config.analysis;
    let rows_i = test_i
        .iter()
        .map(|(q, s)| classify_row(q, Some(*s), pl.ranges.get(q), settings, false))
        .collect::<Result<Vec<_>>>()?;
    let mut rows_ii = test_ii
        .iter()
        .map(|(q, s)| classify_row(q, Some(*s), pl.ranges.get(q), settings, true))
        .collect::<Result<Vec<_>>>()?;
    rows_ii.sort_by_key(group_rank);
    let report = AnalysisReport {
        test_i: rows_i,
        test_ii: rows_ii,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: pl.config.hash(),
        seed: pl.config.seed,
    };
    write_analysis(pl, &report)?;
    Ok(report)
}

fn write_analysis(pl: &Pipeline, report: &AnalysisReport) -> Result<()> {
    write_json(&pl.out("analysis/report.json"), report)?;
    let dir = pl.out("analysis");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("tables.txt"), report.render_text())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// report

/// Everything one run produced, consolidated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsolidatedReport {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub patients: Vec<PatientSection>,
    pub analysis: AnalysisReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientSection {
    pub id: String,
    pub converged: bool,
    pub loss: f64,
    pub reliable_outputs: Vec<String>,
    pub uq_status: String,
}

/// Builds the consolidated document from calibration and UQ results plus the
/// cohort analysis, in deterministic order (patient id, then quantity name).
pub fn run_report(
    pl: &Pipeline,
    calibrations: &[PatientCalibration],
    uq: &[PatientUq],
    analysis: &AnalysisReport,
) -> Result<ConsolidatedReport> {
    let mut sections: Vec<PatientSection> = calibrations
        .iter()
        .map(|c| {
            let uq_entry = uq.iter().find(|r| r.patient_id == c.record.id);
            let (status, mut reliable): (String, Vec<String>) = match uq_entry.map(|r| &r.outcome)
            {
                Some(UqOutcome::Done { verdict, .. }) => (
                    "done".into(),
                    verdict
                        .outputs
                        .iter()
                        .filter(|(_, o)| o.reliable)
                        .map(|(k, _)| k.clone())
                        .collect(),
                ),
                Some(UqOutcome::Failed { reason }) => (format!("failed: {reason}"), Vec::new()),
                Some(UqOutcome::Skipped { reason }) => (format!("skipped: {reason}"), Vec::new()),
                None => ("missing".into(), Vec::new()),
            };
            reliable.sort();
            PatientSection {
                id: c.record.id.clone(),
                converged: c.result.converged,
                loss: c.result.loss_value,
                reliable_outputs: reliable,
                uq_status: status,
            }
        })
        .collect();
    sections.sort_by(|a, b| a.id.cmp(&b.id));

    let report = ConsolidatedReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: pl.config.hash(),
        seed: pl.config.seed,
        patients: sections,
        analysis: analysis.clone(),
    };
    write_json(&pl.out("report.json"), &report)?;

    let mut text = String::new();
    text.push_str(&format!(
        "cardioloop report (version {}, config {}, seed {})\n\n",
        report.version, report.config_hash, report.seed
    ));
    text.push_str(&format!(
        "patients: {} total, {} calibrated\n\n",
        report.patients.len(),
        report.patients.iter().filter(|p| p.converged).count()
    ));
    for p in &report.patients {
        text.push_str(&format!(
            "{}: loss {:.3e}, {}; uq {}; reliable [{}]\n",
            p.id,
            p.loss,
            if p.converged { "calibrated" } else { "not calibrated" },
            p.uq_status,
            p.reliable_outputs.join(", ")
        ));
    }
    text.push('\n');
    text.push_str(&report.analysis.render_text());
    std::fs::write(pl.out("report.txt"), text)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// composition

/// Full end-to-end run: calibrate, screen, analyse, report.
pub fn run_all(pl: &Pipeline) -> Result<(CalibrationSummary, AnalysisReport)> {
    let patients = pl.patients()?;
    let calibrations = run_calibration(pl, &patients)?;
    let summary = CalibrationSummary {
        total: calibrations.len(),
        converged: calibrations.iter().filter(|c| c.result.converged).count(),
        converged_ids: calibrations
            .iter()
            .filter(|c| c.result.converged)
            .map(|c| c.record.id.clone())
            .collect(),
        failed_ids: calibrations
            .iter()
            .filter(|c| !c.result.converged)
            .map(|c| c.record.id.clone())
            .collect(),
    };
    let uq = run_uq(pl, &calibrations)?;
    let analysis = run_analysis(pl, &patients, &uq)?;
    run_report(pl, &calibrations, &uq, &analysis)?;
    Ok((summary, analysis))
}

/// Maps an error to the command-line exit code contract: 3 for solver
/// failures, 4 for bad inputs, 1 otherwise.
pub fn exit_code_for(error: &Error) -> i32 {
    if error.is_solver_failure() {
        3
    } else {
        match error {
            Error::InvalidInput(_) | Error::Json(_) | Error::Csv(_) | Error::Io(_) => 4,
            _ => 1,
        }
    }
}
