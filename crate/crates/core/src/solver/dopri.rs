//! Dormand–Prince 5(4) step kernel with 4th-order dense output.

use crate::error::{Error, Result};
use crate::solver::OdeSystem;

// Classic DOPRI5 tableau (7 stages, FSAL).
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
// 5th-order weights (also the last tableau row: FSAL).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights for the 4th-order interpolant.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Workspace for repeated steps of one system; owns every scratch buffer so
/// stepping allocates nothing.
pub(crate) struct DopriWorkspace {
    pub k: [Vec<f64>; 7],
    pub y_stage: Vec<f64>,
    pub y_new: Vec<f64>,
    pub err: Vec<f64>,
    pub rcont: [Vec<f64>; 5],
    /// Whether `k[0]` already holds the derivative at the current point
    /// (FSAL propagation from the previous accepted step).
    pub k1_valid: bool,
}

impl DopriWorkspace {
    pub fn new(dim: usize) -> Self {
        DopriWorkspace {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            y_stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
            err: vec![0.0; dim],
            rcont: std::array::from_fn(|_| vec![0.0; dim]),
            k1_valid: false,
        }
    }

    /// One embedded 5(4) step attempt from `(t, y)` with step `h`.
    ///
    /// On return `y_new` holds the 5th-order solution, `err` the per-component
    /// difference between the 5th- and 4th-order solutions, and `k[6]` the
    /// derivative at `(t + h, y_new)` (reusable as the next `k[0]`).
    pub fn attempt<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &[f64], h: f64) {
        let n = y.len();
        if !self.k1_valid {
            sys.eval(t, y, &mut self.k[0]);
        }
        for i in 0..n {
            self.y_stage[i] = y[i] + h * A21 * self.k[0][i];
        }
        {
            let (head, tail) = self.k.split_at_mut(1);
            let _ = head;
            sys.eval(t + C[1] * h, &self.y_stage, &mut tail[0]);
        }
        for i in 0..n {
            self.y_stage[i] = y[i] + h * (A31 * self.k[0][i] + A32 * self.k[1][i]);
        }
        {
            let (head, tail) = self.k.split_at_mut(2);
            let _ = head;
            sys.eval(t + C[2] * h, &self.y_stage, &mut tail[0]);
        }
        for i in 0..n {
            self.y_stage[i] =
                y[i] + h * (A41 * self.k[0][i] + A42 * self.k[1][i] + A43 * self.k[2][i]);
        }
        {
            let (head, tail) = self.k.split_at_mut(3);
            let _ = head;
            sys.eval(t + C[3] * h, &self.y_stage, &mut tail[0]);
        }
        for i in 0..n {
            self.y_stage[i] = y[i]
                + h * (A51 * self.k[0][i]
                    + A52 * self.k[1][i]
                    + A53 * self.k[2][i]
                    + A54 * self.k[3][i]);
        }
        {
            let (head, tail) = self.k.split_at_mut(4);
            let _ = head;
            sys.eval(t + C[4] * h, &self.y_stage, &mut tail[0]);
        }
        for i in 0..n {
            self.y_stage[i] = y[i]
                + h * (A61 * self.k[0][i]
                    + A62 * self.k[1][i]
                    + A63 * self.k[2][i]
                    + A64 * self.k[3][i]
                    + A65 * self.k[4][i]);
        }
        {
            let (head, tail) = self.k.split_at_mut(5);
            let _ = head;
            sys.eval(t + C[5] * h, &self.y_stage, &mut tail[0]);
        }
        for i in 0..n {
            self.y_new[i] = y[i]
                + h * (B1 * self.k[0][i]
                    + B3 * self.k[2][i]
                    + B4 * self.k[3][i]
                    + B5 * self.k[4][i]
                    + B6 * self.k[5][i]);
        }
        {
            let (head, tail) = self.k.split_at_mut(6);
            let _ = head;
            sys.eval(t + C[6] * h, &self.y_new, &mut tail[0]);
        }
        for i in 0..n {
            self.err[i] = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
        }
    }

    /// Prepares the dense-output coefficients for the step just accepted.
    pub fn prepare_dense(&mut self, y: &[f64], h: f64) {
        let n = y.len();
        for i in 0..n {
            let ydiff = self.y_new[i] - y[i];
            let bspl = h * self.k[0][i] - ydiff;
            self.rcont[0][i] = y[i];
            self.rcont[1][i] = ydiff;
            self.rcont[2][i] = bspl;
            self.rcont[3][i] = ydiff - h * self.k[6][i] - bspl;
            self.rcont[4][i] = h
                * (D1 * self.k[0][i]
                    + D3 * self.k[2][i]
                    + D4 * self.k[3][i]
                    + D5 * self.k[4][i]
                    + D6 * self.k[5][i]
                    + D7 * self.k[6][i]);
        }
    }

    /// Evaluates the interpolant at fraction `theta` in [0, 1] of the last
    /// prepared step.
    pub fn dense_eval(&self, theta: f64, out: &mut [f64]) {
        let t1 = 1.0 - theta;
        for i in 0..out.len() {
            out[i] = self.rcont[0][i]
                + theta
                    * (self.rcont[1][i]
                        + t1 * (self.rcont[2][i]
                            + theta * (self.rcont[3][i] + t1 * self.rcont[4][i])));
        }
    }

    /// Marks the FSAL derivative as valid after accepting a step: the caller
    /// must have moved `y_new` into the current state.
    pub fn advance_fsal(&mut self) {
        self.k.swap(0, 6);
        self.k1_valid = true;
    }
}

/// One explicit Dormand–Prince 5(4) step. Returns the 5th-order update and
/// the per-component embedded error estimate.
pub fn step_dopri<S: OdeSystem>(sys: &S, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(h > 0.0) {
        return Err(Error::invalid("step size must be positive"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure {
            t,
            detail: "non-finite state".into(),
        });
    }
    let mut ws = DopriWorkspace::new(y.len());
    ws.attempt(sys, t, y, h);
    if ws.y_new.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure {
            t,
            detail: format!("non-finite stage in step of size {h:e}"),
        });
    }
    Ok((ws.y_new.clone(), ws.err.clone()))
}
