//! Cohort statistics: one-tailed z-tests of sample means against healthy
//! ranges and the classification logic used by the analysis reports.
//!
//! Two passes share the same kernel. Test I runs on raw clinical data and
//! carries no sample-size gate; test II runs on the model-only outputs that
//! survived the reliability screen and only tests samples with more than 25
//! elements. Quantities whose mean already sits inside the healthy range are
//! never tested.

pub mod special;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{OutputName, OutputSet};
use special::{normal_tail_lower, normal_tail_upper};

/// Significance level for the one-tailed tests.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// A z-test needs more than 25 elements (test II only).
pub const DEFAULT_MIN_N: usize = 26;
/// Report rows with fewer elements are grouped as "sample too small".
pub const SMALL_SAMPLE_GROUP_N: usize = 25;

const HEALTHY_RANGES_JSON: &str = include_str!("../../data/healthy_ranges.json");

/// Healthy interval for one quantity; one of the bounds may be open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthyRange {
    pub quantity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub source: String,
}

impl HealthyRange {
    pub fn validate(&self) -> Result<()> {
        if self.lower.is_none() && self.upper.is_none() {
            return Err(Error::invalid(format!(
                "{}: a healthy range needs at least one bound",
                self.quantity
            )));
        }
        if let (Some(lo), Some(hi)) = (self.lower, self.upper) {
            if !(lo < hi) {
                return Err(Error::invalid(format!(
                    "{}: lower bound must be below upper bound",
                    self.quantity
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower.map_or(true, |lo| value >= lo) && self.upper.map_or(true, |hi| value <= hi)
    }
}

/// The full healthy-range table, keyed by quantity name.
#[derive(Debug, Clone)]
pub struct HealthyRanges {
    map: BTreeMap<String, HealthyRange>,
}

impl HealthyRanges {
    pub fn from_records(records: Vec<HealthyRange>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in records {
            r.validate()?;
            if map.insert(r.quantity.clone(), r).is_some() {
                return Err(Error::invalid("duplicate healthy-range quantity"));
            }
        }
        Ok(HealthyRanges { map })
    }

    /// The bundled defaults.
    pub fn builtin() -> &'static HealthyRanges {
        static CACHE: OnceLock<HealthyRanges> = OnceLock::new();
        CACHE.get_or_init(|| {
            let records: Vec<HealthyRange> = serde_json::from_str(HEALTHY_RANGES_JSON)
                .expect("bundled healthy-range file must parse");
            HealthyRanges::from_records(records).expect("bundled healthy ranges must validate")
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::invalid(format!(
                "cannot read healthy-range file {}: {e}",
                path.as_ref().display()
            ))
        })?;
        let records: Vec<HealthyRange> = serde_json::from_str(&text)?;
        HealthyRanges::from_records(records)
    }

    pub fn get(&self, quantity: &str) -> Option<&HealthyRange> {
        self.map.get(quantity)
    }

    pub fn iter(&self) -> impl Iterator<Item = &HealthyRange> {
        self.map.values()
    }
}

/// Size, mean and unbiased standard deviation of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Summarises one sample; `None` when empty. The standard deviation uses the
/// unbiased (n−1) normalisation and is zero for singletons.
pub fn summarize_sample(values: &[f64]) -> Option<SampleSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(SampleSummary { n, mean, std })
}

/// Summarises each quantity's sample across patients.
pub fn cohort_summarize(
    values_by_quantity: &BTreeMap<String, Vec<f64>>,
) -> BTreeMap<String, SampleSummary> {
    values_by_quantity
        .iter()
        .filter_map(|(k, v)| summarize_sample(v).map(|s| (k.clone(), s)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDirection {
    Above,
    Below,
}

/// One-tailed z-test of a sample mean against a bound, with the variance
/// taken equal to the unbiased sample variance.
///
/// `Above` tests H0: μ ≤ bound against the mean lying above it (upper tail);
/// `Below` is the mirror image.
pub fn z_test_one_tailed(s: &SampleSummary, bound: f64, direction: TailDirection) -> Result<f64> {
    if s.n < 2 {
        return Err(Error::DegenerateSample(format!(
            "z-test needs n >= 2, got {}",
            s.n
        )));
    }
    if !(s.std > 0.0) {
        return Err(Error::DegenerateSample(
            "z-test needs a positive sample standard deviation".into(),
        ));
    }
    let z = (s.mean - bound) / (s.std / (s.n as f64).sqrt());
    Ok(match direction {
        TailDirection::Above => normal_tail_upper(z),
        TailDirection::Below => normal_tail_lower(z),
    })
}

/// Outcome of comparing one quantity's sample against its healthy range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Mean inside the healthy range; no test performed.
    NotAlteredInRange,
    /// Mean outside the range but the null hypothesis was retained.
    NotAlteredTestRetained,
    /// Mean significantly above the upper bound.
    IncreasedSignificant,
    /// Mean significantly below the lower bound.
    DecreasedSignificant,
    /// Too few elements to test an out-of-range mean.
    InsufficientSample,
    /// No healthy range is defined for the quantity.
    NoRange,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::NotAlteredInRange => "not altered (in range)",
            Classification::NotAlteredTestRetained => "not altered (test retained)",
            Classification::IncreasedSignificant => "significantly increased",
            Classification::DecreasedSignificant => "significantly decreased",
            Classification::InsufficientSample => "insufficient sample",
            Classification::NoRange => "no range",
        }
    }
}

/// Classifies one sample against its healthy range.
///
/// In-range means are never tested. Out-of-range means are tested only when
/// `min_n` (the test II gate) is satisfied; `None` disables the gate, as in
/// test I. The test always runs against the violated bound.
pub fn classify(
    s: &SampleSummary,
    range: Option<&HealthyRange>,
    alpha: f64,
    min_n: Option<usize>,
) -> Result<(Classification, Option<f64>)> {
    let range = match range {
        None => return Ok((Classification::NoRange, None)),
        Some(r) => r,
    };
    if range.contains(s.mean) {
        return Ok((Classification::NotAlteredInRange, None));
    }
    if let Some(gate) = min_n {
        if s.n < gate {
            return Ok((Classification::InsufficientSample, None));
        }
    }
    let above = range.upper.map_or(false, |hi| s.mean > hi);
    let (bound, direction) = if above {
        (range.upper.unwrap(), TailDirection::Above)
    } else {
        (range.lower.unwrap(), TailDirection::Below)
    };
    let p = z_test_one_tailed(s, bound, direction)?;
    let class = if p < alpha {
        if above {
            Classification::IncreasedSignificant
        } else {
            Classification::DecreasedSignificant
        }
    } else {
        Classification::NotAlteredTestRetained
    };
    Ok((class, Some(p)))
}

/// Report-level grouping mirroring the three-way table layout:
/// I = rejected null hypothesis, II = not rejected (or in range),
/// III = sample too small to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableGroup {
    #[serde(rename = "I")]
    Significant,
    #[serde(rename = "II")]
    NotAltered,
    #[serde(rename = "III")]
    SmallSample,
    #[serde(rename = "-")]
    NoRange,
}

impl TableGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            TableGroup::Significant => "I",
            TableGroup::NotAltered => "II",
            TableGroup::SmallSample => "III",
            TableGroup::NoRange => "-",
        }
    }
}

/// Assigns the report group for a test II row. Samples with fewer than
/// `small_sample_n` elements are reported as group III regardless of whether
/// their mean sits inside the range.
pub fn table_group(classification: Classification, n: usize, small_sample_n: usize) -> TableGroup {
    match classification {
        Classification::NoRange => TableGroup::NoRange,
        Classification::InsufficientSample => TableGroup::SmallSample,
        _ if n < small_sample_n => TableGroup::SmallSample,
        Classification::IncreasedSignificant | Classification::DecreasedSignificant => {
            TableGroup::Significant
        }
        _ => TableGroup::NotAltered,
    }
}

/// An output value that violates its healthy range.
#[derive(Debug, Clone, Serialize)]
pub struct RangeViolation {
    pub quantity: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Name and value under which an output is checked against the healthy-range
/// table. Chamber volumes with indexed ranges are checked per unit BSA.
pub fn range_check_alias(name: OutputName, value: f64, bsa: f64) -> (&'static str, f64) {
    match name {
        OutputName::LaVmax => ("LA_I_Vmax", value / bsa),
        OutputName::LvEdv => ("LV_I_EDV", value / bsa),
        _ => (name.as_str(), value),
    }
}

/// Checks every output of a simulated beat against the healthy ranges.
/// Outputs without a range entry pass vacuously.
pub fn check_outputs_in_ranges(
    outputs: &OutputSet,
    bsa: f64,
    ranges: &HealthyRanges,
) -> Vec<RangeViolation> {
    let mut violations = Vec::new();
    for (name, value) in outputs.iter() {
        let (alias, checked) = range_check_alias(name, value, bsa);
        if let Some(range) = ranges.get(alias) {
            if !range.contains(checked) {
                violations.push(RangeViolation {
                    quantity: alias.to_string(),
                    value: checked,
                    lower: range.lower,
                    upper: range.upper,
                });
            }
        }
    }
    violations
}
