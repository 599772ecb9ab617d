//! Command-line front end of the simulation/calibration/analysis pipeline.
//!
//! Exit codes: 0 success, 2 no patient calibrated, 3 solver failure,
//! 4 malformed input file, 1 anything else.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cardioloop::calibration::SUCCESS_LOSS;
use cardioloop::model::{load_parameters, reference_parameters};
use cardioloop::pipeline::{
    exit_code_for, load_calibrations, load_uq, read_summaries_csv, run_all, run_analysis,
    run_analysis_from_summaries, run_calibration, run_generate, run_report, run_simulate,
    run_uq, Pipeline, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "cardioloop",
    version,
    about = "Closed-loop 0D cardiocirculatory simulation, calibration and cohort analysis"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Patient cohort CSV; overrides the config.
    #[arg(long, global = true)]
    patients: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global random seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for patient-level parallelism; overrides the config.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output-grid resolution per beat; overrides the config.
    #[arg(long = "samples-per-beat", global = true)]
    samples_per_beat: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the reference individual (or a parameter file) to its
    /// periodic state; write the normalised transient and the outputs.
    Simulate {
        /// Parameter file to simulate instead of the configured reference.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Stem of the output files.
        #[arg(long, default_value = "reference")]
        id: String,
    },
    /// Generate a synthetic patient cohort plus its ground-truth sidecar.
    Generate {
        /// Number of patients; overrides the config.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Calibrate every patient of the cohort.
    Calibrate,
    /// Screen the calibrated patients' outputs for reliability.
    Uq,
    /// Run the two-pass cohort analysis from stage artifacts.
    Analyze {
        /// Classify externally supplied (test,quantity,n,mean,std) triples
        /// instead of pipeline artifacts.
        #[arg(long = "summaries-only")]
        summaries_only: Option<PathBuf>,
    },
    /// Consolidate calibration, screening and analysis into one document.
    Report,
    /// Full pipeline: calibrate, screen, analyse, report.
    Run,
}

fn build_config(common: &Common) -> cardioloop::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            return Err(cardioloop::Error::invalid(
                "--config PATH is required (an empty JSON object selects all defaults)",
            ))
        }
    };
    if let Some(p) = &common.patients {
        config.patients = Some(p.clone());
    }
    if let Some(o) = &common.out {
        config.output_dir = o.clone();
    }
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(j) = common.jobs {
        config.jobs = j;
    }
    if let Some(n) = common.samples_per_beat {
        config.solver.samples_per_beat = n;
    }
    Ok(config)
}

fn real_main(cli: Cli) -> cardioloop::Result<i32> {
    let config = build_config(&cli.common)?;
    let pl = Pipeline::load(config)?;
    match cli.command {
        Command::Simulate { params, id } => {
            let model = match params {
                Some(path) => load_parameters(path)?,
                None => match &pl.config.reference_parameters {
                    Some(path) => load_parameters(path)?,
                    None => reference_parameters(),
                },
            };
            let (summary, traj) = run_simulate(&pl, &model, &id)?;
            println!(
                "{}: periodic after {} beats; transient {} ({} rows), outputs {}",
                summary.id,
                summary.beats_to_converge,
                summary.transient_csv.display(),
                traj.samples_per_beat(),
                summary.outputs_json.display()
            );
            Ok(0)
        }
        Command::Generate { size } => {
            let mut pl = pl;
            if let Some(size) = size {
                pl.config.cohort.size = size;
            }
            let (path, patients, _) = run_generate(&pl)?;
            println!("wrote {} patients to {}", patients.len(), path.display());
            Ok(0)
        }
        Command::Calibrate => {
            let patients = pl.patients()?;
            let calibrations = run_calibration(&pl, &patients)?;
            let converged = calibrations.iter().filter(|c| c.result.converged).count();
            for c in &calibrations {
                println!(
                    "{}: loss {:.3e} ({})",
                    c.record.id,
                    c.result.loss_value,
                    if c.result.converged {
                        "calibrated"
                    } else {
                        c.result.failure.as_deref().unwrap_or("above threshold")
                    }
                );
            }
            println!(
                "calibrated {converged} of {} (loss < {SUCCESS_LOSS:.0e})",
                calibrations.len()
            );
            Ok(if converged > 0 { 0 } else { 2 })
        }
        Command::Uq => {
            let patients = pl.patients()?;
            let calibrations = load_calibrations(&pl, &patients)?;
            let reports = run_uq(&pl, &calibrations)?;
            for r in &reports {
                match &r.outcome {
                    cardioloop::pipeline::UqOutcome::Done {
                        final_w,
                        sample_size,
                        ..
                    } => println!(
                        "{}: accepted {sample_size} configurations at w = {final_w:.4}",
                        r.patient_id
                    ),
                    cardioloop::pipeline::UqOutcome::Failed { reason } => {
                        println!("{}: failed ({reason})", r.patient_id)
                    }
                    cardioloop::pipeline::UqOutcome::Skipped { reason } => {
                        println!("{}: skipped ({reason})", r.patient_id)
                    }
                }
            }
            Ok(0)
        }
        Command::Analyze { summaries_only } => {
            let report = match summaries_only {
                Some(path) => {
                    let file = std::fs::File::open(&path).map_err(|e| {
                        cardioloop::Error::invalid(format!(
                            "cannot read summaries {}: {e}",
                            path.display()
                        ))
                    })?;
                    let (test_i, test_ii) = read_summaries_csv(file)?;
                    run_analysis_from_summaries(&pl, &test_i, &test_ii)?
                }
                None => {
                    let patients = pl.patients()?;
                    let uq = load_uq(&pl, &patients)?;
                    run_analysis(&pl, &patients, &uq)?
                }
            };
            print!("{}", report.render_text());
            Ok(0)
        }
        Command::Report => {
            let patients = pl.patients()?;
            let calibrations = load_calibrations(&pl, &patients)?;
            let uq = load_uq(&pl, &patients)?;
            let analysis = run_analysis(&pl, &patients, &uq)?;
            let report = run_report(&pl, &calibrations, &uq, &analysis)?;
            println!(
                "report written to {} ({} patients)",
                pl.config.output_dir.join("report.txt").display(),
                report.patients.len()
            );
            Ok(0)
        }
        Command::Run => {
            let (summary, analysis) = run_all(&pl)?;
            print!("{}", analysis.render_text());
            println!("calibrated {} of {}", summary.converged, summary.total);
            Ok(if summary.converged > 0 { 0 } else { 2 })
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    std::process::exit(code);
}
