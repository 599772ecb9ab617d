//! Closed-loop 0D cardiocirculatory circuit.
//!
//! The circulation is modelled with the usual electrical analogy: pressures
//! are potentials, flows are currents, vessel compliance is capacitance,
//! blood inertia is inductance and the periodic rise of chamber elastance
//! provides contraction. The loop is fixed:
//!
//! ```text
//! LA -MV-> LV -AV-> AR_SYS =(R,L)=> C_SYS -R-> VEN_SYS =(R,L)=> RA
//! RA -TV-> RV -PV-> AR_PUL =(R,L)=> C_PUL -R-> VEN_PUL =(R,L)=> LA
//!                       \________ R_SH _________/
//! ```
//!
//! Each vascular compartment is a compliance node; AR/VEN compartments drain
//! through a series resistance-inertance branch whose flow is a state, while
//! the capillary nodes (C_SYS, C_PUL) drain through a pure resistance whose
//! flow is algebraic. The shunt branch R_SH connects the pulmonary arterial
//! node directly to the pulmonary venous node in parallel with the
//! oxygenated capillary path.
//!
//! State vector (14 components, fixed order):
//! `V_LA V_LV V_RA V_RV | p_AR_SYS p_C_SYS p_VEN_SYS p_AR_PUL p_C_PUL
//! p_VEN_PUL | Q_AR_SYS Q_VEN_SYS Q_AR_PUL Q_VEN_PUL`.

mod reference;

pub use reference::{
    load_parameters, parameters_from_flat_map, parameters_from_json_str, parameters_to_flat_map,
    reference_parameters, save_parameters,
};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 14;

/// Identifies one of the four heart chambers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChamberId {
    La,
    Lv,
    Ra,
    Rv,
}

impl ChamberId {
    pub const ALL: [ChamberId; 4] = [ChamberId::La, ChamberId::Lv, ChamberId::Ra, ChamberId::Rv];

    pub fn as_str(self) -> &'static str {
        match self {
            ChamberId::La => "LA",
            ChamberId::Lv => "LV",
            ChamberId::Ra => "RA",
            ChamberId::Rv => "RV",
        }
    }
}

/// Identifies one of the four heart valves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValveId {
    Mitral,
    Aortic,
    Tricuspid,
    Pulmonary,
}

impl ValveId {
    pub const ALL: [ValveId; 4] = [
        ValveId::Mitral,
        ValveId::Aortic,
        ValveId::Tricuspid,
        ValveId::Pulmonary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValveId::Mitral => "MV",
            ValveId::Aortic => "AV",
            ValveId::Tricuspid => "TV",
            ValveId::Pulmonary => "PV",
        }
    }
}

/// Identifies one of the six vascular compartments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VesselId {
    ArSys,
    CSys,
    VenSys,
    ArPul,
    CPul,
    VenPul,
}

impl VesselId {
    pub const ALL: [VesselId; 6] = [
        VesselId::ArSys,
        VesselId::CSys,
        VesselId::VenSys,
        VesselId::ArPul,
        VesselId::CPul,
        VesselId::VenPul,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VesselId::ArSys => "AR_SYS",
            VesselId::CSys => "C_SYS",
            VesselId::VenSys => "VEN_SYS",
            VesselId::ArPul => "AR_PUL",
            VesselId::CPul => "C_PUL",
            VesselId::VenPul => "VEN_PUL",
        }
    }
}

/// Time-varying elastance chamber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamberParams {
    /// Baseline (diastolic) elastance, mmHg/mL. Must be positive.
    pub passive_elastance: f64,
    /// Additional elastance at peak activation, mmHg/mL.
    pub active_elastance: f64,
    /// Volume at zero transmural pressure, mL.
    pub rest_volume: f64,
    /// Start of the activation window as a fraction of the beat, in [0, 1).
    pub activation_onset: f64,
    /// Width of the activation window as a fraction of the beat, in (0, 1).
    pub activation_duration: f64,
}

/// Diode-with-resistance valve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValveParams {
    /// Forward (open) resistance, mmHg·s/mL.
    pub r_open: f64,
    /// Reverse (closed) resistance, mmHg·s/mL. Must exceed `r_open`.
    pub r_closed: f64,
}

/// One vascular compartment: a compliance node plus its outflow branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VascularParams {
    /// Outflow branch resistance, mmHg·s/mL.
    pub resistance: f64,
    /// Node compliance, mL/mmHg.
    pub compliance: f64,
    /// Outflow branch inertance, mmHg·s²/mL. Zero makes the flow algebraic.
    pub inertance: f64,
    /// Volume stored in the node at zero pressure, mL.
    pub unstressed_volume: f64,
}

/// Full parameterisation of the circuit for one individual.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    /// LA, LV, RA, RV in that order.
    pub chambers: [ChamberParams; 4],
    /// MV, AV, TV, PV in that order.
    pub valves: [ValveParams; 4],
    /// AR_SYS, C_SYS, VEN_SYS, AR_PUL, C_PUL, VEN_PUL in that order.
    pub vessels: [VascularParams; 6],
    /// Resistance of the non-oxygenated pulmonary capillary branch, mmHg·s/mL.
    pub shunt_resistance: f64,
    /// Heart rate, beats/min.
    pub heart_rate: f64,
    /// Body surface area, m².
    pub body_surface_area: f64,
    /// Total circulating volume, mL. Conserved along any trajectory.
    pub total_blood_volume: f64,
}

impl ModelParameters {
    pub fn chamber(&self, id: ChamberId) -> &ChamberParams {
        &self.chambers[id as usize]
    }

    pub fn chamber_mut(&mut self, id: ChamberId) -> &mut ChamberParams {
        &mut self.chambers[id as usize]
    }

    pub fn valve(&self, id: ValveId) -> &ValveParams {
        &self.valves[id as usize]
    }

    pub fn vessel(&self, id: VesselId) -> &VascularParams {
        &self.vessels[id as usize]
    }

    pub fn vessel_mut(&mut self, id: VesselId) -> &mut VascularParams {
        &mut self.vessels[id as usize]
    }

    /// Heartbeat period in seconds.
    pub fn period(&self) -> f64 {
        60.0 / self.heart_rate
    }

    /// Checks the structural invariants of the parameter set.
    pub fn validate(&self) -> Result<()> {
        for (id, ch) in ChamberId::ALL.iter().zip(self.chambers.iter()) {
            if !(ch.passive_elastance > 0.0) {
                return Err(Error::invalid(format!(
                    "{}: passive elastance must be positive",
                    id.as_str()
                )));
            }
            if ch.active_elastance < 0.0 || ch.rest_volume < 0.0 {
                return Err(Error::invalid(format!(
                    "{}: active elastance and rest volume must be non-negative",
                    id.as_str()
                )));
            }
            if !(ch.activation_duration > 0.0 && ch.activation_duration < 1.0) {
                return Err(Error::invalid(format!(
                    "{}: activation duration must lie in (0, 1)",
                    id.as_str()
                )));
            }
            if !(0.0..1.0).contains(&ch.activation_onset) {
                return Err(Error::invalid(format!(
                    "{}: activation onset must lie in [0, 1)",
                    id.as_str()
                )));
            }
        }
        for (id, v) in ValveId::ALL.iter().zip(self.valves.iter()) {
            if !(v.r_open > 0.0 && v.r_open < v.r_closed) {
                return Err(Error::invalid(format!(
                    "{}: need 0 < r_open < r_closed",
                    id.as_str()
                )));
            }
        }
        for (id, v) in VesselId::ALL.iter().zip(self.vessels.iter()) {
            if !(v.resistance > 0.0 && v.compliance > 0.0) {
                return Err(Error::invalid(format!(
                    "{}: resistance and compliance must be positive",
                    id.as_str()
                )));
            }
            if v.inertance < 0.0 || v.unstressed_volume < 0.0 {
                return Err(Error::invalid(format!(
                    "{}: inertance and unstressed volume must be non-negative",
                    id.as_str()
                )));
            }
        }
        // The four arterial/venous branches carry flow states; the capillary
        // nodes drain algebraically and must not carry inertance.
        for id in [VesselId::ArSys, VesselId::VenSys, VesselId::ArPul, VesselId::VenPul] {
            if !(self.vessel(id).inertance > 0.0) {
                return Err(Error::invalid(format!(
                    "{}: inertance must be positive (flow is a state)",
                    id.as_str()
                )));
            }
        }
        for id in [VesselId::CSys, VesselId::CPul] {
            if self.vessel(id).inertance != 0.0 {
                return Err(Error::invalid(format!(
                    "{}: inertance must be zero (flow is algebraic)",
                    id.as_str()
                )));
            }
        }
        if !(self.shunt_resistance > 0.0) {
            return Err(Error::invalid("shunt resistance must be positive"));
        }
        if !(self.heart_rate > 0.0 && self.body_surface_area > 0.0) {
            return Err(Error::invalid("HR and BSA must be positive"));
        }
        if !(self.total_blood_volume > 0.0) {
            return Err(Error::invalid("total blood volume must be positive"));
        }
        Ok(())
    }

    /// Deterministic initial condition for this parameter set.
    ///
    /// Chambers start at nominal filling volumes and nodes at nominal
    /// pressures; whatever volume is then missing against
    /// `total_blood_volume` is stored by shifting every node pressure by the
    /// same amount (ΔV distributed proportionally to compliance).
    pub fn initial_state(&self) -> ModelState {
        let mut s = ModelState {
            v_la: self.chamber(ChamberId::La).rest_volume + 45.0,
            v_lv: self.chamber(ChamberId::Lv).rest_volume + 110.0,
            v_ra: self.chamber(ChamberId::Ra).rest_volume + 45.0,
            v_rv: self.chamber(ChamberId::Rv).rest_volume + 110.0,
            p_ar_sys: 85.0,
            p_c_sys: 30.0,
            p_ven_sys: 8.0,
            p_ar_pul: 18.0,
            p_c_pul: 10.0,
            p_ven_pul: 7.0,
            q_ar_sys: 0.0,
            q_ven_sys: 0.0,
            q_ar_pul: 0.0,
            q_ven_pul: 0.0,
        };
        let missing = self.total_blood_volume - total_blood_volume(&s, self);
        let total_compliance: f64 = self.vessels.iter().map(|v| v.compliance).sum();
        let dp = missing / total_compliance;
        s.p_ar_sys += dp;
        s.p_c_sys += dp;
        s.p_ven_sys += dp;
        s.p_ar_pul += dp;
        s.p_c_pul += dp;
        s.p_ven_pul += dp;
        s
    }
}

/// Instantaneous state of the circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelState {
    pub v_la: f64,
    pub v_lv: f64,
    pub v_ra: f64,
    pub v_rv: f64,
    pub p_ar_sys: f64,
    pub p_c_sys: f64,
    pub p_ven_sys: f64,
    pub p_ar_pul: f64,
    pub p_c_pul: f64,
    pub p_ven_pul: f64,
    pub q_ar_sys: f64,
    pub q_ven_sys: f64,
    pub q_ar_pul: f64,
    pub q_ven_pul: f64,
}

impl ModelState {
    pub const FIELD_NAMES: [&'static str; STATE_DIM] = [
        "V_LA", "V_LV", "V_RA", "V_RV", "p_AR_SYS", "p_C_SYS", "p_VEN_SYS", "p_AR_PUL", "p_C_PUL",
        "p_VEN_PUL", "Q_AR_SYS", "Q_VEN_SYS", "Q_AR_PUL", "Q_VEN_PUL",
    ];

    pub fn to_array(self) -> [f64; STATE_DIM] {
        [
            self.v_la,
            self.v_lv,
            self.v_ra,
            self.v_rv,
            self.p_ar_sys,
            self.p_c_sys,
            self.p_ven_sys,
            self.p_ar_pul,
            self.p_c_pul,
            self.p_ven_pul,
            self.q_ar_sys,
            self.q_ven_sys,
            self.q_ar_pul,
            self.q_ven_pul,
        ]
    }

    pub fn from_slice(y: &[f64]) -> ModelState {
        assert_eq!(y.len(), STATE_DIM);
        ModelState {
            v_la: y[0],
            v_lv: y[1],
            v_ra: y[2],
            v_rv: y[3],
            p_ar_sys: y[4],
            p_c_sys: y[5],
            p_ven_sys: y[6],
            p_ar_pul: y[7],
            p_c_pul: y[8],
            p_ven_pul: y[9],
            q_ar_sys: y[10],
            q_ven_sys: y[11],
            q_ar_pul: y[12],
            q_ven_pul: y[13],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Pressures and flows obtained algebraically from the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedSignals {
    pub p_la: f64,
    pub p_lv: f64,
    pub p_ra: f64,
    pub p_rv: f64,
    pub q_mv: f64,
    pub q_av: f64,
    pub q_tv: f64,
    pub q_pv: f64,
    pub q_c_sys: f64,
    pub q_c_pul: f64,
    pub q_sh: f64,
}

impl DerivedSignals {
    pub const FIELD_NAMES: [&'static str; 11] = [
        "p_LA", "p_LV", "p_RA", "p_RV", "Q_MV", "Q_AV", "Q_TV", "Q_PV", "Q_C_SYS", "Q_C_PUL",
        "Q_SH",
    ];

    pub fn to_array(self) -> [f64; 11] {
        [
            self.p_la, self.p_lv, self.p_ra, self.p_rv, self.q_mv, self.q_av, self.q_tv,
            self.q_pv, self.q_c_sys, self.q_c_pul, self.q_sh,
        ]
    }
}

/// Normalised activation of a chamber at time `t`.
///
/// Half-cosine pulse: zero outside the activation window, rising to exactly 1
/// at the window midpoint. Periodic with period `t_hb` and continuous
/// everywhere (C¹ across the window edges).
pub fn activation(t: f64, ch: &ChamberParams, t_hb: f64) -> f64 {
    let phase = (t / t_hb - ch.activation_onset).rem_euclid(1.0);
    if phase < ch.activation_duration {
        0.5 * (1.0 - (std::f64::consts::TAU * phase / ch.activation_duration).cos())
    } else {
        0.0
    }
}

/// Chamber pressure from the time-varying elastance law
/// `p = (E_passive + E_active·a(t)) · (V − V0)`.
pub fn chamber_pressure(v: f64, t: f64, ch: &ChamberParams, t_hb: f64) -> f64 {
    (ch.passive_elastance + ch.active_elastance * activation(t, ch, t_hb)) * (v - ch.rest_volume)
}

/// Flow through a valve: forward resistance when the pressure gradient is
/// non-negative, closed resistance otherwise. Continuous (zero) at Δp = 0.
pub fn valve_flow(p_up: f64, p_down: f64, valve: &ValveParams) -> f64 {
    let dp = p_up - p_down;
    if dp >= 0.0 {
        dp / valve.r_open
    } else {
        dp / valve.r_closed
    }
}

/// Evaluates every algebraic pressure and flow at `(t, s)`.
pub fn derived_signals(t: f64, s: &ModelState, p: &ModelParameters) -> DerivedSignals {
    let t_hb = p.period();
    let p_la = chamber_pressure(s.v_la, t, p.chamber(ChamberId::La), t_hb);
    let p_lv = chamber_pressure(s.v_lv, t, p.chamber(ChamberId::Lv), t_hb);
    let p_ra = chamber_pressure(s.v_ra, t, p.chamber(ChamberId::Ra), t_hb);
    let p_rv = chamber_pressure(s.v_rv, t, p.chamber(ChamberId::Rv), t_hb);
    DerivedSignals {
        p_la,
        p_lv,
        p_ra,
        p_rv,
        q_mv: valve_flow(p_la, p_lv, p.valve(ValveId::Mitral)),
        q_av: valve_flow(p_lv, s.p_ar_sys, p.valve(ValveId::Aortic)),
        q_tv: valve_flow(p_ra, p_rv, p.valve(ValveId::Tricuspid)),
        q_pv: valve_flow(p_rv, s.p_ar_pul, p.valve(ValveId::Pulmonary)),
        q_c_sys: (s.p_c_sys - s.p_ven_sys) / p.vessel(VesselId::CSys).resistance,
        q_c_pul: (s.p_c_pul - s.p_ven_pul) / p.vessel(VesselId::CPul).resistance,
        q_sh: (s.p_ar_pul - s.p_ven_pul) / p.shunt_resistance,
    }
}

/// Time derivative of the state: volume balances at the chambers, flow
/// balances at the compliance nodes and momentum balances on the four
/// resistance-inertance branches.
pub fn rhs(t: f64, s: &ModelState, p: &ModelParameters) -> Result<ModelState> {
    if !s.is_finite() {
        return Err(Error::NumericFailure {
            t,
            detail: "non-finite state passed to rhs".into(),
        });
    }
    Ok(rhs_unchecked(t, s, p))
}

/// Same as [`rhs`] but without the finiteness guard; the integrator performs
/// its own per-step checks.
pub(crate) fn rhs_unchecked(t: f64, s: &ModelState, p: &ModelParameters) -> ModelState {
    let d = derived_signals(t, s, p);
    let ar_sys = p.vessel(VesselId::ArSys);
    let c_sys = p.vessel(VesselId::CSys);
    let ven_sys = p.vessel(VesselId::VenSys);
    let ar_pul = p.vessel(VesselId::ArPul);
    let c_pul = p.vessel(VesselId::CPul);
    let ven_pul = p.vessel(VesselId::VenPul);
    ModelState {
        v_la: s.q_ven_pul - d.q_mv,
        v_lv: d.q_mv - d.q_av,
        v_ra: s.q_ven_sys - d.q_tv,
        v_rv: d.q_tv - d.q_pv,
        p_ar_sys: (d.q_av - s.q_ar_sys) / ar_sys.compliance,
        p_c_sys: (s.q_ar_sys - d.q_c_sys) / c_sys.compliance,
        p_ven_sys: (d.q_c_sys - s.q_ven_sys) / ven_sys.compliance,
        p_ar_pul: (d.q_pv - s.q_ar_pul - d.q_sh) / ar_pul.compliance,
        p_c_pul: (s.q_ar_pul - d.q_c_pul) / c_pul.compliance,
        p_ven_pul: (d.q_c_pul + d.q_sh - s.q_ven_pul) / ven_pul.compliance,
        q_ar_sys: (s.p_ar_sys - s.p_c_sys - ar_sys.resistance * s.q_ar_sys) / ar_sys.inertance,
        q_ven_sys: (s.p_ven_sys - d.p_ra - ven_sys.resistance * s.q_ven_sys) / ven_sys.inertance,
        q_ar_pul: (s.p_ar_pul - s.p_c_pul - ar_pul.resistance * s.q_ar_pul) / ar_pul.inertance,
        q_ven_pul: (s.p_ven_pul - d.p_la - ven_pul.resistance * s.q_ven_pul) / ven_pul.inertance,
    }
}

/// Total circulating volume: chamber volumes plus the stressed and
/// unstressed volume of every compliance node. Constant along exact
/// trajectories of [`rhs`].
pub fn total_blood_volume(s: &ModelState, p: &ModelParameters) -> f64 {
    let chambers = s.v_la + s.v_lv + s.v_ra + s.v_rv;
    let node_pressures = [
        s.p_ar_sys,
        s.p_c_sys,
        s.p_ven_sys,
        s.p_ar_pul,
        s.p_c_pul,
        s.p_ven_pul,
    ];
    let nodes: f64 = p
        .vessels
        .iter()
        .zip(node_pressures.iter())
        .map(|(v, &pr)| v.unstressed_volume + v.compliance * pr)
        .sum();
    chambers + nodes
}
