//! Adaptive Dormand–Prince 5(4) integration and periodic steady-state
//! detection.
//!
//! The circuit is integrated beat by beat. After each beat the state is
//! compared with the state one period earlier; once the largest relative
//! component change falls below `steady_state_tol` the beat is declared
//! periodic and returned, resampled on a uniform grid through the 4th-order
//! dense output (step control never sees the sampling grid).

mod dopri;

pub use dopri::step_dopri;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    derived_signals, rhs_unchecked, DerivedSignals, ModelParameters, ModelState, STATE_DIM,
};
use dopri::DopriWorkspace;

/// Right-hand side of an autonomous-in-shape ODE system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

/// Adapter turning a closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnSystem { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (self.f)(t, y, dydt)
    }
}

/// The circuit model as an [`OdeSystem`].
pub struct CircuitSystem<'a> {
    pub params: &'a ModelParameters,
}

impl OdeSystem for CircuitSystem<'_> {
    fn dim(&self) -> usize {
        STATE_DIM
    }
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let s = ModelState::from_slice(y);
        dydt.copy_from_slice(&rhs_unchecked(t, &s, self.params).to_array());
    }
}

/// Integration controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative error tolerance.
    pub rel_tol: f64,
    /// Absolute error tolerance, in each state's native unit.
    pub abs_tol: f64,
    /// First trial step, s.
    pub initial_step: f64,
    /// Largest allowed step, s.
    pub max_step: f64,
    /// Beat budget for reaching the periodic steady state.
    pub max_beats: usize,
    /// Largest relative state change across one beat that still counts as
    /// periodic.
    pub steady_state_tol: f64,
    /// Points of the uniform output grid per beat.
    pub samples_per_beat: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rel_tol: 1e-6,
            abs_tol: 1e-6,
            initial_step: 1e-4,
            max_step: 2e-2,
            max_beats: 200,
            steady_state_tol: 1e-3,
            samples_per_beat: 1000,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if !(self.initial_step > 0.0 && self.max_step > 0.0) {
            return Err(Error::invalid("step bounds must be positive"));
        }
        if self.max_beats < 2 {
            return Err(Error::invalid("max_beats must be at least 2"));
        }
        if self.samples_per_beat < 100 {
            return Err(Error::invalid("samples_per_beat must be at least 100"));
        }
        if !(self.steady_state_tol > 0.0) {
            return Err(Error::invalid("steady_state_tol must be positive"));
        }
        Ok(())
    }
}

/// The final (periodic) beat of a converged integration, on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Sample times measured from beat onset; `times[j] = j·T/N`, strictly
    /// increasing, spanning exactly one heartbeat (endpoint excluded).
    pub times: Vec<f64>,
    pub states: Vec<ModelState>,
    pub signals: Vec<DerivedSignals>,
    /// Heartbeat period, s.
    pub beat_period: f64,
    /// Beats integrated before the periodicity criterion was met.
    pub beats_to_converge: usize,
    /// Residual of the periodicity criterion at acceptance.
    pub steady_state_residual: f64,
    /// Whether the periodicity criterion was met (always true for
    /// trajectories returned by [`integrate`]).
    pub converged: bool,
    /// Accepted integrator steps over the whole run (diagnostic).
    pub steps_accepted: usize,
}

impl Trajectory {
    pub fn samples_per_beat(&self) -> usize {
        self.times.len()
    }

    /// Writes the beat as CSV with the time axis normalised to [0, 1).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["time_normalized".to_string()];
        header.extend(ModelState::FIELD_NAMES.iter().map(|s| s.to_string()));
        header.extend(DerivedSignals::FIELD_NAMES.iter().map(|s| s.to_string()));
        writeln!(w, "{}", header.join(","))?;
        for j in 0..self.times.len() {
            let mut row = Vec::with_capacity(1 + STATE_DIM + 11);
            row.push(format_float(self.times[j] / self.beat_period));
            row.extend(self.states[j].to_array().iter().map(|v| format_float(*v)));
            row.extend(self.signals[j].to_array().iter().map(|v| format_float(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn format_float(v: f64) -> String {
    // Shortest representation that round-trips exactly.
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: f64) -> String {
    format!("{v}")
}

/// Raw multi-beat run: states sampled on the per-beat grid for every beat.
#[derive(Debug, Clone)]
pub struct MultiBeatRun {
    pub beat_period: f64,
    /// `beat_states[b][j]` is the state at `t = b·T + j·T/N`.
    pub beat_states: Vec<Vec<ModelState>>,
    /// States at beat boundaries, length `beats + 1`.
    pub boundary_states: Vec<ModelState>,
}

/// Periodic solution of a generic system, for harness and verification use.
#[derive(Debug, Clone)]
pub struct GenericBeatRun {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub periods_run: usize,
    pub residual: f64,
    pub converged: bool,
    pub boundary_states: Vec<Vec<f64>>,
    pub steps_accepted: usize,
}

struct AdaptiveState {
    h: f64,
    steps_accepted: usize,
    steps_rejected: usize,
}

/// Core beat-by-beat engine shared by every public entry point.
///
/// Integrates `periods` beats (or until the periodicity residual drops below
/// `steady_tol`, when given), sampling each beat on a uniform grid of
/// `samples` points via dense output. Returns the sampled beats (all of them
/// when `keep_all`, otherwise only the last one).
fn run_engine<S: OdeSystem>(
    sys: &S,
    period: f64,
    y0: &[f64],
    settings: &SolverSettings,
    max_beats: usize,
    steady_tol: Option<f64>,
    keep_all: bool,
) -> Result<GenericBeatRun> {
    settings.validate()?;
    if !(period > 0.0) {
        return Err(Error::invalid("period must be positive"));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure {
            t: 0.0,
            detail: "non-finite initial state".into(),
        });
    }
    let dim = sys.dim();
    let n_samples = settings.samples_per_beat;
    let mut ws = DopriWorkspace::new(dim);
    let mut adapt = AdaptiveState {
        h: settings.initial_step.min(settings.max_step).min(period),
        steps_accepted: 0,
        steps_rejected: 0,
    };

    let mut y = y0.to_vec();
    let mut boundary_states = vec![y.clone()];
    let mut kept: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut beats_run = 0usize;

    for beat in 0..max_beats {
        let t_start = beat as f64 * period;
        let t_end = t_start + period;
        let y_start = y.clone();
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
        samples.push(y.clone());
        let mut next_sample = 1usize;

        let mut t = t_start;
        ws.k1_valid = false;
        while t < t_end {
            let mut h = adapt.h.min(settings.max_step);
            // Stretch slightly overlong steps onto the boundary so no
            // unrepresentably small remainder is ever left over.
            let clipped = t + 1.01 * h >= t_end;
            if clipped {
                h = t_end - t;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            ws.attempt(sys, t, &y, h);
            // Scaled RMS error norm; a non-finite norm forces rejection.
            let mut err_sq = 0.0f64;
            for i in 0..dim {
                let sc =
                    settings.abs_tol + settings.rel_tol * y[i].abs().max(ws.y_new[i].abs());
                let e = ws.err[i] / sc;
                err_sq += e * e;
            }
            let err_norm = (err_sq / dim as f64).sqrt();
            if err_norm.is_finite() && err_norm <= 1.0 {
                ws.prepare_dense(&y, h);
                // Pull every grid point that fell inside this step.
                while next_sample < n_samples {
                    let ts = t_start + next_sample as f64 * period / n_samples as f64;
                    if ts > t + h {
                        break;
                    }
                    let theta = ((ts - t) / h).clamp(0.0, 1.0);
                    let mut out = vec![0.0; dim];
                    ws.dense_eval(theta, &mut out);
                    samples.push(out);
                    next_sample += 1;
                }
                t = if clipped { t_end } else { t + h };
                y.copy_from_slice(&ws.y_new);
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericFailure {
                        t,
                        detail: "non-finite state after accepted step".into(),
                    });
                }
                ws.advance_fsal();
                adapt.steps_accepted += 1;
                let fac = (0.9 * err_norm.powf(-0.2)).clamp(0.2, 10.0);
                adapt.h = (h * fac).min(settings.max_step);
            } else {
                adapt.steps_rejected += 1;
                ws.k1_valid = true; // k[0] still holds f(t, y)
                let fac = if err_norm.is_finite() {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.1, 1.0)
                } else {
                    0.1
                };
                adapt.h = h * fac;
            }
        }
        beats_run = beat + 1;
        boundary_states.push(y.clone());
        if keep_all {
            kept.push(samples);
        } else {
            kept.clear();
            kept.push(samples);
        }

        if let Some(tol) = steady_tol {
            residual = y
                .iter()
                .zip(y_start.iter())
                .map(|(a, b)| (a - b).abs() / (b.abs() + settings.abs_tol))
                .fold(0.0, f64::max);
            if residual < tol {
                converged = true;
                break;
            }
        }
    }

    if steady_tol.is_some() && !converged {
        return Err(Error::NonConvergence {
            beats: beats_run,
            delta: residual,
        });
    }

    let last = kept.last().unwrap();
    let times: Vec<f64> = (0..n_samples)
        .map(|j| j as f64 * period / n_samples as f64)
        .collect();
    let states = if keep_all {
        kept.iter().flatten().cloned().collect()
    } else {
        last.clone()
    };
    Ok(GenericBeatRun {
        times,
        states,
        periods_run: beats_run,
        residual: if residual.is_finite() { residual } else { 0.0 },
        converged,
        boundary_states,
        steps_accepted: adapt.steps_accepted,
    })
}

/// Integrates the circuit to its periodic steady state and returns the final
/// beat on the uniform output grid.
pub fn integrate(
    params: &ModelParameters,
    init: &ModelState,
    settings: &SolverSettings,
) -> Result<Trajectory> {
    params.validate()?;
    let sys = CircuitSystem { params };
    let run = run_engine(
        &sys,
        params.period(),
        &init.to_array(),
        settings,
        settings.max_beats,
        Some(settings.steady_state_tol),
        false,
    )?;
    let states: Vec<ModelState> = run.states.iter().map(|y| ModelState::from_slice(y)).collect();
    let signals: Vec<DerivedSignals> = run
        .times
        .iter()
        .zip(states.iter())
        .map(|(t, s)| derived_signals(*t, s, params))
        .collect();
    Ok(Trajectory {
        times: run.times,
        states,
        signals,
        beat_period: params.period(),
        beats_to_converge: run.periods_run,
        steady_state_residual: run.residual,
        converged: true,
        steps_accepted: run.steps_accepted,
    })
}

/// Integrates the circuit for exactly `n_beats` beats (no periodicity gate);
/// used for conservation and tolerance diagnostics.
pub fn integrate_n_beats(
    params: &ModelParameters,
    init: &ModelState,
    n_beats: usize,
    settings: &SolverSettings,
) -> Result<MultiBeatRun> {
    params.validate()?;
    if n_beats == 0 {
        return Err(Error::invalid("n_beats must be positive"));
    }
    let sys = CircuitSystem { params };
    let run = run_engine(
        &sys,
        params.period(),
        &init.to_array(),
        settings,
        n_beats,
        None,
        true,
    )?;
    let n = settings.samples_per_beat;
    let beat_states = run
        .states
        .chunks(n)
        .map(|chunk| chunk.iter().map(|y| ModelState::from_slice(y)).collect())
        .collect();
    Ok(MultiBeatRun {
        beat_period: params.period(),
        beat_states,
        boundary_states: run
            .boundary_states
            .iter()
            .map(|y| ModelState::from_slice(y))
            .collect(),
    })
}

/// Generic periodic steady-state integration of an arbitrary system.
pub fn integrate_periodic<S: OdeSystem>(
    sys: &S,
    period: f64,
    y0: &[f64],
    settings: &SolverSettings,
) -> Result<GenericBeatRun> {
    run_engine(
        sys,
        period,
        y0,
        settings,
        settings.max_beats,
        Some(settings.steady_state_tol),
        false,
    )
}

/// Generic fixed-horizon integration over `n_periods` periods.
pub fn integrate_periods<S: OdeSystem>(
    sys: &S,
    period: f64,
    y0: &[f64],
    n_periods: usize,
    settings: &SolverSettings,
) -> Result<GenericBeatRun> {
    run_engine(sys, period, y0, settings, n_periods, None, true)
}
