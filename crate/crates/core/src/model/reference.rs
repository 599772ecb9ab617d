//! Reference parameter set and the flat key-value parameter file format.
//!
//! Parameter files are flat JSON objects with one numeric entry per field and
//! units spelled out in the key, e.g. `"valve.AV.r_open_mmHg_s_per_mL"`. The
//! shipped reference set describes an ideal individual (HR 80 bpm, BSA
//! 1.79 m²) whose simulated outputs all fall inside the bundled healthy
//! ranges; it is data, versioned with the crate.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::{ChamberId, ChamberParams, ModelParameters, ValveId, ValveParams, VascularParams, VesselId};

const REFERENCE_JSON: &str = include_str!("../../data/reference_params.json");

const CHAMBER_FIELDS: [&str; 5] = [
    "passive_elastance_mmHg_per_mL",
    "active_elastance_mmHg_per_mL",
    "rest_volume_mL",
    "activation_onset",
    "activation_duration",
];

const VESSEL_FIELDS: [&str; 4] = [
    "resistance_mmHg_s_per_mL",
    "compliance_mL_per_mmHg",
    "inertance_mmHg_s2_per_mL",
    "unstressed_volume_mL",
];

/// The shipped reference individual. Parsed once and cached.
pub fn reference_parameters() -> ModelParameters {
    static CACHE: OnceLock<ModelParameters> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            parameters_from_json_str(REFERENCE_JSON)
                .expect("bundled reference parameter file must parse")
        })
        .clone()
}

/// Parses a flat key-value JSON document into a parameter set.
pub fn parameters_from_json_str(text: &str) -> Result<ModelParameters> {
    let map: BTreeMap<String, f64> = serde_json::from_str(text)?;
    parameters_from_flat_map(&map)
}

/// Reads a parameter file from disk.
pub fn load_parameters(path: impl AsRef<Path>) -> Result<ModelParameters> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::invalid(format!(
            "cannot read parameter file {}: {e}",
            path.as_ref().display()
        ))
    })?;
    parameters_from_json_str(&text)
}

/// Writes a parameter set as a flat key-value JSON document.
pub fn save_parameters(path: impl AsRef<Path>, params: &ModelParameters) -> Result<()> {
    let map = parameters_to_flat_map(params);
    let text = serde_json::to_string_pretty(&map)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn parameters_to_flat_map(params: &ModelParameters) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    for (id, ch) in ChamberId::ALL.iter().zip(params.chambers.iter()) {
        let base = format!("chamber.{}", id.as_str());
        let values = [
            ch.passive_elastance,
            ch.active_elastance,
            ch.rest_volume,
            ch.activation_onset,
            ch.activation_duration,
        ];
        for (field, value) in CHAMBER_FIELDS.iter().zip(values.iter()) {
            map.insert(format!("{base}.{field}"), *value);
        }
    }
    for (id, v) in ValveId::ALL.iter().zip(params.valves.iter()) {
        map.insert(
            format!("valve.{}.r_open_mmHg_s_per_mL", id.as_str()),
            v.r_open,
        );
        map.insert(
            format!("valve.{}.r_closed_mmHg_s_per_mL", id.as_str()),
            v.r_closed,
        );
    }
    for (id, v) in VesselId::ALL.iter().zip(params.vessels.iter()) {
        let base = format!("vascular.{}", id.as_str());
        let values = [v.resistance, v.compliance, v.inertance, v.unstressed_volume];
        for (field, value) in VESSEL_FIELDS.iter().zip(values.iter()) {
            map.insert(format!("{base}.{field}"), *value);
        }
    }
    map.insert("shunt.resistance_mmHg_s_per_mL".into(), params.shunt_resistance);
    map.insert("heart_rate_bpm".into(), params.heart_rate);
    map.insert("body_surface_area_m2".into(), params.body_surface_area);
    map.insert("total_blood_volume_mL".into(), params.total_blood_volume);
    map
}

pub fn parameters_from_flat_map(map: &BTreeMap<String, f64>) -> Result<ModelParameters> {
    let mut seen = 0usize;
    let get = |key: &str, seen: &mut usize| -> Result<f64> {
        match map.get(key) {
            Some(v) => {
                *seen += 1;
                Ok(*v)
            }
            None => Err(Error::invalid(format!("parameter file misses key {key}"))),
        }
    };

    let mut chambers = Vec::with_capacity(4);
    for id in ChamberId::ALL {
        let base = format!("chamber.{}", id.as_str());
        chambers.push(ChamberParams {
            passive_elastance: get(&format!("{base}.{}", CHAMBER_FIELDS[0]), &mut seen)?,
            active_elastance: get(&format!("{base}.{}", CHAMBER_FIELDS[1]), &mut seen)?,
            rest_volume: get(&format!("{base}.{}", CHAMBER_FIELDS[2]), &mut seen)?,
            activation_onset: get(&format!("{base}.{}", CHAMBER_FIELDS[3]), &mut seen)?,
            activation_duration: get(&format!("{base}.{}", CHAMBER_FIELDS[4]), &mut seen)?,
        });
    }
    let mut valves = Vec::with_capacity(4);
    for id in ValveId::ALL {
        valves.push(ValveParams {
            r_open: get(&format!("valve.{}.r_open_mmHg_s_per_mL", id.as_str()), &mut seen)?,
            r_closed: get(
                &format!("valve.{}.r_closed_mmHg_s_per_mL", id.as_str()),
                &mut seen,
            )?,
        });
    }
    let mut vessels = Vec::with_capacity(6);
    for id in VesselId::ALL {
        let base = format!("vascular.{}", id.as_str());
        vessels.push(VascularParams {
            resistance: get(&format!("{base}.{}", VESSEL_FIELDS[0]), &mut seen)?,
            compliance: get(&format!("{base}.{}", VESSEL_FIELDS[1]), &mut seen)?,
            inertance: get(&format!("{base}.{}", VESSEL_FIELDS[2]), &mut seen)?,
            unstressed_volume: get(&format!("{base}.{}", VESSEL_FIELDS[3]), &mut seen)?,
        });
    }
    let params = ModelParameters {
        chambers: chambers.try_into().unwrap(),
        valves: valves.try_into().unwrap(),
        vessels: vessels.try_into().unwrap(),
        shunt_resistance: get("shunt.resistance_mmHg_s_per_mL", &mut seen)?,
        heart_rate: get("heart_rate_bpm", &mut seen)?,
        body_surface_area: get("body_surface_area_m2", &mut seen)?,
        total_blood_volume: get("total_blood_volume_mL", &mut seen)?,
    };
    if map.len() != seen {
        let known = parameters_to_flat_map(&params);
        let stray: Vec<&String> = map.keys().filter(|k| !known.contains_key(*k)).collect();
        return Err(Error::invalid(format!(
            "parameter file has unknown keys: {stray:?}"
        )));
    }
    params.validate()?;
    Ok(params)
}

impl serde::Serialize for ModelParameters {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        parameters_to_flat_map(self).serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for ModelParameters {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(deserializer)?;
        parameters_from_flat_map(&map).map_err(serde::de::Error::custom)
    }
}
