//! Reduction of a periodic beat to the named scalar model outputs.
//!
//! The output set splits into two groups: quantities with a measured clinical
//! counterpart (used for calibration) and quantities only the model can
//! provide (used for the cohort analysis). Extrema and means are taken by
//! scanning the uniform beat grid; integrals are grid averages times the
//! period.

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::ModelParameters;
use crate::solver::Trajectory;

/// Every named model output, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputName {
    // Outputs with a clinical counterpart.
    LaVmax,
    LvEdv,
    LvEsv,
    LvEf,
    MaxGradPRav,
    SapMax,
    SapMin,
    PapMax,
    // Model-only outputs.
    LaPmax,
    LaPmin,
    LaPmean,
    LvPmax,
    LvPmin,
    RaPmax,
    RaPmin,
    RaPmean,
    RvPmax,
    RvPmin,
    RaIVmax,
    RvIEdv,
    RvIEsv,
    RvEf,
    LvSv,
    Co,
    Ci,
    Svr,
    Pvr,
    PapMin,
    PapMean,
    PwpMin,
    PwpMean,
    ShuntFraction,
}

pub const OUTPUT_COUNT: usize = 32;

/// Broad physical kind of an output; drives default measurement errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantityKind {
    Pressure,
    Volume,
    Percentage,
    Flow,
    Resistance,
}

impl OutputName {
    pub const ALL: [OutputName; OUTPUT_COUNT] = [
        OutputName::LaVmax,
        OutputName::LvEdv,
        OutputName::LvEsv,
        OutputName::LvEf,
        OutputName::MaxGradPRav,
        OutputName::SapMax,
        OutputName::SapMin,
        OutputName::PapMax,
        OutputName::LaPmax,
        OutputName::LaPmin,
        OutputName::LaPmean,
        OutputName::LvPmax,
        OutputName::LvPmin,
        OutputName::RaPmax,
        OutputName::RaPmin,
        OutputName::RaPmean,
        OutputName::RvPmax,
        OutputName::RvPmin,
        OutputName::RaIVmax,
        OutputName::RvIEdv,
        OutputName::RvIEsv,
        OutputName::RvEf,
        OutputName::LvSv,
        OutputName::Co,
        OutputName::Ci,
        OutputName::Svr,
        OutputName::Pvr,
        OutputName::PapMin,
        OutputName::PapMean,
        OutputName::PwpMin,
        OutputName::PwpMean,
        OutputName::ShuntFraction,
    ];

    /// The eight outputs that have a measured clinical counterpart.
    pub const MEASURABLE: [OutputName; 8] = [
        OutputName::LaVmax,
        OutputName::LvEdv,
        OutputName::LvEsv,
        OutputName::LvEf,
        OutputName::MaxGradPRav,
        OutputName::SapMax,
        OutputName::SapMin,
        OutputName::PapMax,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutputName::LaVmax => "LA_Vmax",
            OutputName::LvEdv => "LV_EDV",
            OutputName::LvEsv => "LV_ESV",
            OutputName::LvEf => "LV_EF",
            OutputName::MaxGradPRav => "max_grad_p_rAV",
            OutputName::SapMax => "SAP_max",
            OutputName::SapMin => "SAP_min",
            OutputName::PapMax => "PAP_max",
            OutputName::LaPmax => "LA_Pmax",
            OutputName::LaPmin => "LA_Pmin",
            OutputName::LaPmean => "LA_Pmean",
            OutputName::LvPmax => "LV_Pmax",
            OutputName::LvPmin => "LV_Pmin",
            OutputName::RaPmax => "RA_Pmax",
            OutputName::RaPmin => "RA_Pmin",
            OutputName::RaPmean => "RA_Pmean",
            OutputName::RvPmax => "RV_Pmax",
            OutputName::RvPmin => "RV_Pmin",
            OutputName::RaIVmax => "RA_I_Vmax",
            OutputName::RvIEdv => "RV_I_EDV",
            OutputName::RvIEsv => "RV_I_ESV",
            OutputName::RvEf => "RV_EF",
            OutputName::LvSv => "LV_SV",
            OutputName::Co => "CO",
            OutputName::Ci => "CI",
            OutputName::Svr => "SVR",
            OutputName::Pvr => "PVR",
            OutputName::PapMin => "PAP_min",
            OutputName::PapMean => "PAP_mean",
            OutputName::PwpMin => "PWP_min",
            OutputName::PwpMean => "PWP_mean",
            OutputName::ShuntFraction => "ShuntFraction",
        }
    }

    pub fn parse(name: &str) -> Option<OutputName> {
        OutputName::ALL.iter().copied().find(|n| n.as_str() == name)
    }

    pub fn is_measurable(self) -> bool {
        OutputName::MEASURABLE.contains(&self)
    }

    pub fn kind(self) -> QuantityKind {
        use OutputName::*;
        match self {
            LaVmax | LvEdv | LvEsv | RaIVmax | RvIEdv | RvIEsv | LvSv => QuantityKind::Volume,
            LvEf | RvEf | ShuntFraction => QuantityKind::Percentage,
            Co | Ci => QuantityKind::Flow,
            Svr | Pvr => QuantityKind::Resistance,
            _ => QuantityKind::Pressure,
        }
    }

    /// Default relative measurement error for a clinical datum of this kind:
    /// 5% for pressures and percentages, 10% for volumes.
    pub fn default_relative_error(self) -> f64 {
        match self.kind() {
            QuantityKind::Volume => 0.10,
            _ => 0.05,
        }
    }
}

impl std::fmt::Display for OutputName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for OutputName {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for OutputName {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        OutputName::parse(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown output name {text}")))
    }
}

/// The named scalar outputs of one simulated beat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSet {
    values: [f64; OUTPUT_COUNT],
}

impl OutputSet {
    pub fn from_fn(mut f: impl FnMut(OutputName) -> f64) -> OutputSet {
        let mut values = [0.0; OUTPUT_COUNT];
        for (i, name) in OutputName::ALL.iter().enumerate() {
            values[i] = f(*name);
        }
        OutputSet { values }
    }

    pub fn get(&self, name: OutputName) -> f64 {
        self.values[name as usize]
    }

    pub fn set(&mut self, name: OutputName, value: f64) {
        self.values[name as usize] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (OutputName, f64)> + '_ {
        OutputName::ALL.iter().map(move |n| (*n, self.get(*n)))
    }
}

impl Serialize for OutputSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(OUTPUT_COUNT))?;
        for (name, value) in self.iter() {
            map.serialize_entry(name.as_str(), &value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for OutputSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OutputSet;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map of output name to value")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<OutputSet, A::Error> {
                let mut values = [f64::NAN; OUTPUT_COUNT];
                while let Some((key, value)) = access.next_entry::<String, f64>()? {
                    match OutputName::parse(&key) {
                        Some(name) => values[name as usize] = value,
                        None => {
                            return Err(serde::de::Error::custom(format!(
                                "unknown output name {key}"
                            )))
                        }
                    }
                }
                if values.iter().any(|v| v.is_nan()) {
                    return Err(serde::de::Error::custom("incomplete output set"));
                }
                Ok(OutputSet { values })
            }
        }
        deserializer.deserialize_map(V)
    }
}

/// Which mean pressure is subtracted upstream of the pulmonary resistance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PvrDownstream {
    /// Mean left atrial pressure (default).
    #[default]
    LaMean,
    /// Mean wedge pressure at the oxygenated capillary node.
    PwpMean,
}

/// Computes every named output from a converged periodic beat.
pub fn compute_outputs(traj: &Trajectory, params: &ModelParameters) -> Result<OutputSet> {
    compute_outputs_with(traj, params, PvrDownstream::default())
}

/// Like [`compute_outputs`] with an explicit convention for the pressure
/// downstream of the pulmonary circulation.
pub fn compute_outputs_with(
    traj: &Trajectory,
    params: &ModelParameters,
    pvr_downstream: PvrDownstream,
) -> Result<OutputSet> {
    if !traj.converged {
        return Err(Error::ContractViolation(
            "outputs require a converged periodic beat".into(),
        ));
    }
    if traj.states.is_empty() {
        return Err(Error::ContractViolation("empty trajectory".into()));
    }

    let stat = |f: &dyn Fn(usize) -> f64| -> (f64, f64, f64) {
        let n = traj.states.len();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for j in 0..n {
            let v = f(j);
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        (min, max, sum / n as f64)
    };

    let (_, la_vmax, _) = stat(&|j| traj.states[j].v_la);
    let (lv_esv, lv_edv, _) = stat(&|j| traj.states[j].v_lv);
    let (_, ra_vmax, _) = stat(&|j| traj.states[j].v_ra);
    let (rv_esv, rv_edv, _) = stat(&|j| traj.states[j].v_rv);
    let (sap_min, sap_max, sap_mean) = stat(&|j| traj.states[j].p_ar_sys);
    let (pap_min, pap_max, pap_mean) = stat(&|j| traj.states[j].p_ar_pul);
    let (pwp_min, _, pwp_mean) = stat(&|j| traj.states[j].p_c_pul);
    let (la_pmin, la_pmax, la_pmean) = stat(&|j| traj.signals[j].p_la);
    let (lv_pmin, lv_pmax, _) = stat(&|j| traj.signals[j].p_lv);
    let (ra_pmin, ra_pmax, ra_pmean) = stat(&|j| traj.signals[j].p_ra);
    let (rv_pmin, rv_pmax, _) = stat(&|j| traj.signals[j].p_rv);
    let (_, max_grad_rav, _) = stat(&|j| traj.signals[j].p_rv - traj.signals[j].p_ra);
    let (_, _, q_sh_mean) = stat(&|j| traj.signals[j].q_sh);
    let (_, _, q_c_pul_mean) = stat(&|j| traj.signals[j].q_c_pul);

    let bsa = params.body_surface_area;
    let lv_sv = lv_edv - lv_esv;
    let lv_ef = 100.0 * lv_sv / lv_edv;
    let rv_ef = 100.0 * (rv_edv - rv_esv) / rv_edv;
    let co = lv_sv * params.heart_rate / 1000.0; // L/min
    let ci = co / bsa;
    let svr = (sap_mean - ra_pmean) / co; // mmHg·min/L
    let pvr_ref = match pvr_downstream {
        PvrDownstream::LaMean => la_pmean,
        PvrDownstream::PwpMean => pwp_mean,
    };
    let pvr = (pap_mean - pvr_ref) / co;
    let shunt_fraction = 100.0 * q_sh_mean / (q_sh_mean + q_c_pul_mean);

    let mut set = OutputSet {
        values: [0.0; OUTPUT_COUNT],
    };
    set.set(OutputName::LaVmax, la_vmax);
    set.set(OutputName::LvEdv, lv_edv);
    set.set(OutputName::LvEsv, lv_esv);
    set.set(OutputName::LvEf, lv_ef);
    set.set(OutputName::MaxGradPRav, max_grad_rav);
    set.set(OutputName::SapMax, sap_max);
    set.set(OutputName::SapMin, sap_min);
    set.set(OutputName::PapMax, pap_max);
    set.set(OutputName::LaPmax, la_pmax);
    set.set(OutputName::LaPmin, la_pmin);
    set.set(OutputName::LaPmean, la_pmean);
    set.set(OutputName::LvPmax, lv_pmax);
    set.set(OutputName::LvPmin, lv_pmin);
    set.set(OutputName::RaPmax, ra_pmax);
    set.set(OutputName::RaPmin, ra_pmin);
    set.set(OutputName::RaPmean, ra_pmean);
    set.set(OutputName::RvPmax, rv_pmax);
    set.set(OutputName::RvPmin, rv_pmin);
    set.set(OutputName::RaIVmax, ra_vmax / bsa);
    set.set(OutputName::RvIEdv, rv_edv / bsa);
    set.set(OutputName::RvIEsv, rv_esv / bsa);
    set.set(OutputName::RvEf, rv_ef);
    set.set(OutputName::LvSv, lv_sv);
    set.set(OutputName::Co, co);
    set.set(OutputName::Ci, ci);
    set.set(OutputName::Svr, svr);
    set.set(OutputName::Pvr, pvr);
    set.set(OutputName::PapMin, pap_min);
    set.set(OutputName::PapMean, pap_mean);
    set.set(OutputName::PwpMin, pwp_min);
    set.set(OutputName::PwpMean, pwp_mean);
    set.set(OutputName::ShuntFraction, shunt_fraction);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_parameters;
    use crate::solver::{integrate, SolverSettings};

    fn reference_trajectory() -> (Trajectory, ModelParameters) {
        let p = reference_parameters();
        let traj = integrate(&p, &p.initial_state(), &SolverSettings::default()).unwrap();
        (traj, p)
    }

    #[test]
    fn arithmetic_identities() {
        let (traj, p) = reference_trajectory();
        let out = compute_outputs(&traj, &p).unwrap();
        let edv = out.get(OutputName::LvEdv);
        let esv = out.get(OutputName::LvEsv);
        let sv = out.get(OutputName::LvSv);
        assert!((sv - (edv - esv)).abs() < 1e-9);
        assert!((out.get(OutputName::LvEf) - 100.0 * sv / edv).abs() < 1e-9);
        assert!((out.get(OutputName::Co) - sv * p.heart_rate / 1000.0).abs() < 1e-9);
        assert!(
            (out.get(OutputName::Ci) - out.get(OutputName::Co) / p.body_surface_area).abs() < 1e-9
        );
    }

    #[test]
    fn ef_sv_worked_example() {
        // EDV 100 mL and ESV 36 mL give EF 64% and SV 64 mL.
        let edv: f64 = 100.0;
        let esv: f64 = 36.0;
        let sv = edv - esv;
        assert_eq!(sv, 64.0);
        assert_eq!(100.0 * sv / edv, 64.0);
        // CO 6 L/min at BSA 2 m² gives CI 3.
        assert_eq!(6.0 / 2.0, 3.0);
        // Resistance convention: (93 - 7) mmHg over 5.5 L/min.
        let svr: f64 = (93.0 - 7.0) / 5.5;
        assert!((svr - 15.64).abs() < 5e-3);
    }

    #[test]
    fn min_mean_max_ordering() {
        let (traj, p) = reference_trajectory();
        let out = compute_outputs(&traj, &p).unwrap();
        assert!(out.get(OutputName::LaPmin) <= out.get(OutputName::LaPmean));
        assert!(out.get(OutputName::LaPmean) <= out.get(OutputName::LaPmax));
        assert!(out.get(OutputName::RaPmin) <= out.get(OutputName::RaPmean));
        assert!(out.get(OutputName::RaPmean) <= out.get(OutputName::RaPmax));
        assert!(out.get(OutputName::PapMin) <= out.get(OutputName::PapMean));
        assert!(out.get(OutputName::PapMean) <= out.get(OutputName::PapMax));
        assert!(out.get(OutputName::PwpMin) <= out.get(OutputName::PwpMean));
        assert!(out.get(OutputName::LvEsv) <= out.get(OutputName::LvEdv));
        assert!(out.get(OutputName::RvIEsv) <= out.get(OutputName::RvIEdv));
    }

    #[test]
    fn bsa_scaling_only_touches_indexed_outputs() {
        let (traj, p) = reference_trajectory();
        let out = compute_outputs(&traj, &p).unwrap();
        let mut p2 = p.clone();
        p2.body_surface_area *= 2.0;
        let out2 = compute_outputs(&traj, &p2).unwrap();
        for (name, v) in out.iter() {
            let v2 = out2.get(name);
            match name {
                OutputName::RaIVmax | OutputName::RvIEdv | OutputName::RvIEsv | OutputName::Ci => {
                    assert!((v2 - v / 2.0).abs() < 1e-12, "{name}")
                }
                _ => assert_eq!(v, v2, "{name}"),
            }
        }
    }

    #[test]
    fn refuses_non_converged_trajectory() {
        let (mut traj, p) = reference_trajectory();
        traj.converged = false;
        assert!(matches!(
            compute_outputs(&traj, &p),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn equal_branch_integrals_give_even_shunt_fraction() {
        let (mut traj, p) = reference_trajectory();
        for sig in traj.signals.iter_mut() {
            sig.q_c_pul = sig.q_sh;
        }
        let out = compute_outputs(&traj, &p).unwrap();
        assert!((out.get(OutputName::ShuntFraction) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn pvr_downstream_switch() {
        let (traj, p) = reference_trajectory();
        let a = compute_outputs_with(&traj, &p, PvrDownstream::LaMean).unwrap();
        let b = compute_outputs_with(&traj, &p, PvrDownstream::PwpMean).unwrap();
        assert_ne!(a.get(OutputName::Pvr), b.get(OutputName::Pvr));
        assert_eq!(a.get(OutputName::Svr), b.get(OutputName::Svr));
    }

    #[test]
    fn output_set_json_round_trip() {
        let (traj, p) = reference_trajectory();
        let out = compute_outputs(&traj, &p).unwrap();
        let text = serde_json::to_string(&out).unwrap();
        assert!(text.contains("\"max_grad_p_rAV\""));
        assert!(text.contains("\"RA_I_Vmax\""));
        let back: OutputSet = serde_json::from_str(&text).unwrap();
        assert_eq!(out, back);
    }
}
