//! The calibrated parameter subset, its bounded intervals and the
//! contractility lookup that turns echo inputs into a patient-specific
//! interval for the right-ventricular active elastance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChamberId, ModelParameters, VesselId};
use crate::observables::{compute_outputs, OutputName};
use crate::solver::{integrate, SolverSettings};

/// Reference echo readings of the ideal individual, used to normalise
/// patient inputs before the contractility lookup.
pub const RV_FAC_REFERENCE: f64 = 42.0; // %
pub const TAPSE_REFERENCE: f64 = 22.0; // mm

/// Smallest shunt resistance the calibration may reach; low enough that the
/// shunt fraction exceeds 70% of pulmonary flow on the reference model.
pub const SHUNT_RESISTANCE_FLOOR: f64 = 0.035;

/// The twelve model parameters the calibration is allowed to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibratedParam {
    LaActiveElastance,
    LvActiveElastance,
    RaActiveElastance,
    RvActiveElastance,
    RvPassiveElastance,
    ArSysResistance,
    ArSysCompliance,
    ArPulResistance,
    ArPulCompliance,
    CSysResistance,
    ShuntResistance,
    TotalBloodVolume,
}

impl CalibratedParam {
    pub const ALL: [CalibratedParam; 12] = [
        CalibratedParam::LaActiveElastance,
        CalibratedParam::LvActiveElastance,
        CalibratedParam::RaActiveElastance,
        CalibratedParam::RvActiveElastance,
        CalibratedParam::RvPassiveElastance,
        CalibratedParam::ArSysResistance,
        CalibratedParam::ArSysCompliance,
        CalibratedParam::ArPulResistance,
        CalibratedParam::ArPulCompliance,
        CalibratedParam::CSysResistance,
        CalibratedParam::ShuntResistance,
        CalibratedParam::TotalBloodVolume,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CalibratedParam::LaActiveElastance => "chamber.LA.active_elastance",
            CalibratedParam::LvActiveElastance => "chamber.LV.active_elastance",
            CalibratedParam::RaActiveElastance => "chamber.RA.active_elastance",
            CalibratedParam::RvActiveElastance => "chamber.RV.active_elastance",
            CalibratedParam::RvPassiveElastance => "chamber.RV.passive_elastance",
            CalibratedParam::ArSysResistance => "vascular.AR_SYS.resistance",
            CalibratedParam::ArSysCompliance => "vascular.AR_SYS.compliance",
            CalibratedParam::ArPulResistance => "vascular.AR_PUL.resistance",
            CalibratedParam::ArPulCompliance => "vascular.AR_PUL.compliance",
            CalibratedParam::CSysResistance => "vascular.C_SYS.resistance",
            CalibratedParam::ShuntResistance => "shunt.resistance",
            CalibratedParam::TotalBloodVolume => "total_blood_volume",
        }
    }

    pub fn get(self, p: &ModelParameters) -> f64 {
        match self {
            CalibratedParam::LaActiveElastance => p.chamber(ChamberId::La).active_elastance,
            CalibratedParam::LvActiveElastance => p.chamber(ChamberId::Lv).active_elastance,
            CalibratedParam::RaActiveElastance => p.chamber(ChamberId::Ra).active_elastance,
            CalibratedParam::RvActiveElastance => p.chamber(ChamberId::Rv).active_elastance,
            CalibratedParam::RvPassiveElastance => p.chamber(ChamberId::Rv).passive_elastance,
            CalibratedParam::ArSysResistance => p.vessel(VesselId::ArSys).resistance,
            CalibratedParam::ArSysCompliance => p.vessel(VesselId::ArSys).compliance,
            CalibratedParam::ArPulResistance => p.vessel(VesselId::ArPul).resistance,
            CalibratedParam::ArPulCompliance => p.vessel(VesselId::ArPul).compliance,
            CalibratedParam::CSysResistance => p.vessel(VesselId::CSys).resistance,
            CalibratedParam::ShuntResistance => p.shunt_resistance,
            CalibratedParam::TotalBloodVolume => p.total_blood_volume,
        }
    }

    pub fn set(self, p: &mut ModelParameters, value: f64) {
        match self {
            CalibratedParam::LaActiveElastance => {
                p.chamber_mut(ChamberId::La).active_elastance = value
            }
            CalibratedParam::LvActiveElastance => {
                p.chamber_mut(ChamberId::Lv).active_elastance = value
            }
            CalibratedParam::RaActiveElastance => {
                p.chamber_mut(ChamberId::Ra).active_elastance = value
            }
            CalibratedParam::RvActiveElastance => {
                p.chamber_mut(ChamberId::Rv).active_elastance = value
            }
            CalibratedParam::RvPassiveElastance => {
                p.chamber_mut(ChamberId::Rv).passive_elastance = value
            }
            CalibratedParam::ArSysResistance => p.vessel_mut(VesselId::ArSys).resistance = value,
            CalibratedParam::ArSysCompliance => p.vessel_mut(VesselId::ArSys).compliance = value,
            CalibratedParam::ArPulResistance => p.vessel_mut(VesselId::ArPul).resistance = value,
            CalibratedParam::ArPulCompliance => p.vessel_mut(VesselId::ArPul).compliance = value,
            CalibratedParam::CSysResistance => p.vessel_mut(VesselId::CSys).resistance = value,
            CalibratedParam::ShuntResistance => p.shunt_resistance = value,
            CalibratedParam::TotalBloodVolume => p.total_blood_volume = value,
        }
    }
}

/// One calibrated parameter with its bounded interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInterval {
    pub id: CalibratedParam,
    pub reference: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ParamInterval {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo <= self.reference && self.reference <= self.hi && self.lo < self.hi) {
            return Err(Error::invalid(format!(
                "interval for {} must satisfy lo <= reference <= hi",
                self.id.as_str()
            )));
        }
        Ok(())
    }
}

/// Monotone lookup between RV active elastance and the simulated RV
/// fractional volume change of the reference individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvContractilityMap {
    /// (elastance, fractional volume change %) pairs, elastance ascending.
    pub points: Vec<(f64, f64)>,
}

impl RvContractilityMap {
    /// Builds the lookup by sweeping the RV active elastance over `[lo, hi]`
    /// on the base model and recording the simulated fractional volume
    /// change of the right ventricle.
    pub fn from_sweep(
        base: &ModelParameters,
        lo: f64,
        hi: f64,
        n_points: usize,
        solver: &SolverSettings,
    ) -> Result<Self> {
        if n_points < 3 || !(lo > 0.0 && lo < hi) {
            return Err(Error::invalid("contractility sweep needs 3+ points, 0 < lo < hi"));
        }
        let ratio = (hi / lo).powf(1.0 / (n_points - 1) as f64);
        let mut points = Vec::with_capacity(n_points);
        for k in 0..n_points {
            let e = lo * ratio.powi(k as i32);
            let mut p = base.clone();
            CalibratedParam::RvActiveElastance.set(&mut p, e);
            let traj = integrate(&p, &p.initial_state(), solver)?;
            let out = compute_outputs(&traj, &p)?;
            points.push((e, out.get(OutputName::RvEf)));
        }
        for w in points.windows(2) {
            if !(w[1].1 > w[0].1) {
                return Err(Error::invalid(format!(
                    "contractility sweep is not monotone: {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(RvContractilityMap { points })
    }

    /// Fractional volume change at a given elastance (clamped interpolation).
    pub fn fvc_for(&self, elastance: f64) -> f64 {
        interp(&self.points, elastance, |p| p.0, |p| p.1)
    }

    /// Elastance producing a given fractional volume change (clamped inverse).
    pub fn elastance_for(&self, fvc: f64) -> f64 {
        interp(&self.points, fvc, |p| p.1, |p| p.0)
    }
}

fn interp(
    points: &[(f64, f64)],
    x: f64,
    key: impl Fn(&(f64, f64)) -> f64,
    val: impl Fn(&(f64, f64)) -> f64,
) -> f64 {
    if x <= key(&points[0]) {
        return val(&points[0]);
    }
    if x >= key(points.last().unwrap()) {
        return val(points.last().unwrap());
    }
    for w in points.windows(2) {
        let (x0, x1) = (key(&w[0]), key(&w[1]));
        if x <= x1 {
            let t = (x - x0) / (x1 - x0);
            return val(&w[0]) + t * (val(&w[1]) - val(&w[0]));
        }
    }
    val(points.last().unwrap())
}

/// The bounded search space of the calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub intervals: Vec<ParamInterval>,
    /// Index of the RV active elastance inside `intervals`.
    pub rv_active_index: usize,
    pub rv_map: RvContractilityMap,
    /// Fractional volume change of the base model at its reference elastance.
    pub reference_fvc: f64,
}

impl ParameterSpace {
    /// Default space for a base parameter set: multiplicative `[0.5, 2]`
    /// intervals around the reference values, a `[0.75, 1.25]` interval for
    /// the RV active elastance, and a shunt-resistance interval whose floor
    /// allows shunt fractions beyond 70%.
    pub fn default_for(base: &ModelParameters, solver: &SolverSettings) -> Result<Self> {
        let mut intervals = Vec::with_capacity(CalibratedParam::ALL.len());
        let mut rv_active_index = 0;
        for (k, id) in CalibratedParam::ALL.iter().enumerate() {
            let reference = id.get(base);
            let (lo, hi) = match id {
                CalibratedParam::RvActiveElastance => {
                    rv_active_index = k;
                    (0.75 * reference, 1.25 * reference)
                }
                CalibratedParam::ShuntResistance => {
                    (SHUNT_RESISTANCE_FLOOR.min(0.5 * reference), 2.0 * reference)
                }
                _ => (0.5 * reference, 2.0 * reference),
            };
            intervals.push(ParamInterval {
                id: *id,
                reference,
                lo,
                hi,
            });
        }
        // Sweep the full generic range so patient lookups stay in-table even
        // for contractilities well away from the reference.
        let e_ref = CalibratedParam::RvActiveElastance.get(base);
        let rv_map = RvContractilityMap::from_sweep(base, 0.5 * e_ref, 2.0 * e_ref, 9, solver)?;
        let reference_fvc = rv_map.fvc_for(e_ref);
        let space = ParameterSpace {
            intervals,
            rv_active_index,
            rv_map,
            reference_fvc,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::invalid("parameter space is empty"));
        }
        for iv in &self.intervals {
            iv.validate()?;
        }
        if self.rv_active_index >= self.intervals.len()
            || self.intervals[self.rv_active_index].id != CalibratedParam::RvActiveElastance
        {
            return Err(Error::invalid("rv_active_index does not point at the RV elastance"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn reference_vector(&self) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.reference).collect()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.hi).collect()
    }

    /// Clamps a parameter vector into the box.
    pub fn project(&self, v: &mut [f64]) {
        for (x, iv) in v.iter_mut().zip(self.intervals.iter()) {
            *x = x.clamp(iv.lo, iv.hi);
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.len()
            && v.iter()
                .zip(self.intervals.iter())
                .all(|(x, iv)| *x >= iv.lo && *x <= iv.hi)
    }

    /// Builds a full model: the base set with the patient's HR and BSA and
    /// the calibrated subset overridden by `vector`.
    pub fn build_model(
        &self,
        base: &ModelParameters,
        heart_rate: f64,
        body_surface_area: f64,
        vector: &[f64],
    ) -> ModelParameters {
        assert_eq!(vector.len(), self.len());
        let mut p = base.clone();
        p.heart_rate = heart_rate;
        p.body_surface_area = body_surface_area;
        for (iv, value) in self.intervals.iter().zip(vector.iter()) {
            iv.id.set(&mut p, *value);
        }
        p
    }
}
