//! Closed-loop lumped-parameter (0D) cardiocirculatory simulation with
//! patient-specific calibration, output reliability screening and cohort
//! statistics.
//!
//! The crate is organised around a fixed pipeline:
//!
//! 1. [`model`] — the closed-loop circuit (four chambers, four valves,
//!    systemic/pulmonary arterial, capillary and venous compartments, plus a
//!    non-oxygenated pulmonary shunt branch) expressed as a 14-state ODE.
//! 2. [`solver`] — adaptive Dormand–Prince 5(4) integration with dense
//!    output, run beat by beat until a periodic steady state is reached.
//! 3. [`observables`] — reduction of the periodic beat to named scalar
//!    outputs (pressures, volumes, ejection fractions, resistances, shunt
//!    fraction, ...).
//! 4. [`calibration`] — bounded multi-start quasi-Newton fitting of a
//!    12-parameter subset against sparse per-patient clinical data.
//! 5. [`uncertainty`] — rejection sampling of parameter perturbations with
//!    acceptance-ratio tuning, yielding per-output reliability verdicts.
//! 6. [`stats`] — one-tailed z-tests of cohort means against healthy ranges
//!    and the three-way classification used in reports.
//! 7. [`cohort`] — reproducible synthetic cohorts for twin experiments.
//! 8. [`pipeline`] — file formats, batch orchestration and report rendering
//!    behind the `cardioloop` command-line binary.
//!
//! All numerical code is deterministic: identical inputs (including RNG
//! seeds) produce bitwise-identical results on the same platform.

pub mod calibration;
pub mod cohort;
pub mod error;
pub mod model;
pub mod observables;
pub mod pipeline;
pub mod solver;
pub mod stats;
pub mod uncertainty;

pub use error::{Error, Result};
