//! Reliability screening of model-only outputs under measurement error.
//!
//! Around a calibrated parameter vector, parameters are perturbed uniformly
//! within a relative width `w` (clipped to the calibration intervals) and a
//! perturbed configuration is accepted when every output matched to a
//! clinical datum stays inside a window of ± one measurement error around
//! that datum. The width is tuned geometrically until the acceptance ratio
//! falls inside [0.10, 0.15]; the tuned width then collects a fresh sample of
//! `n` accepted output sets. An output's mean over the accepted sample is
//! considered reliable when the sample standard deviation stays below 5% of
//! the mean's magnitude.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{build_bounds, ParameterSpace, PatientRecord};
use crate::error::{Error, Result};
use crate::model::ModelParameters;
use crate::observables::{compute_outputs, OutputName, OutputSet};
use crate::solver::{integrate, SolverSettings};
use crate::stats::special::{chi_squared_sf, normal_quantile};
use crate::stats::summarize_sample;

/// Means with magnitude below this are never called reliable: the 5%-of-mean
/// rule is ill-posed around zero.
pub const RELIABILITY_MEAN_FLOOR: f64 = 1e-6;

/// Rejection-sampling controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UqSettings {
    /// Accepted-sample target.
    pub n: usize,
    /// Initial relative perturbation width.
    pub w0: f64,
    /// Acceptance-ratio window the width is tuned into.
    pub acceptance_band: (f64, f64),
    /// Std-to-mean ratio below which a mean counts as reliable.
    pub reliability_ratio: f64,
    /// Geometric factor of the width adaptation.
    pub w_adjust_factor: f64,
    /// Adaptation budget before the patient is marked unreliable.
    pub max_adaptations: usize,
    pub rng_seed: u64,
}

impl Default for UqSettings {
    fn default() -> Self {
        UqSettings {
            n: 100,
            w0: 0.125,
            acceptance_band: (0.10, 0.15),
            reliability_ratio: 0.05,
            w_adjust_factor: 1.25,
            max_adaptations: 20,
            rng_seed: 0,
        }
    }
}

impl UqSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.w0 > 0.0 && self.w0 < 1.0) {
            return Err(Error::invalid("w0 must lie in (0, 1)"));
        }
        let (lo, hi) = self.acceptance_band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::invalid("acceptance band must lie inside (0, 1)"));
        }
        if self.n < 10 {
            return Err(Error::invalid("accepted-sample target must be at least 10"));
        }
        if !(self.w_adjust_factor > 1.0) {
            return Err(Error::invalid("w adjustment factor must exceed 1"));
        }
        Ok(())
    }
}

/// Acceptance window of one clinical datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub output: OutputName,
    pub lo: f64,
    pub hi: f64,
    /// True when the measurement error was zero and the window collapsed.
    pub degenerate: bool,
}

impl Window {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.lo && value <= self.hi
    }
}

/// One window per clinical datum, centred on the datum with half-width equal
/// to the measurement error.
pub fn acceptance_windows(patient: &PatientRecord) -> Vec<Window> {
    patient
        .data
        .iter()
        .map(|d| Window {
            output: d.output,
            lo: d.value - d.measurement_error,
            hi: d.value + d.measurement_error,
            degenerate: d.measurement_error == 0.0,
        })
        .collect()
}

/// Draws one perturbed vector: each component uniform on
/// `[p̄_i(1−w), p̄_i(1+w)]` intersected with its calibration interval.
pub fn perturb(
    p_bar: &[f64],
    lo: &[f64],
    hi: &[f64],
    w: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    p_bar
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let half = w * p.abs();
            let a = (p - half).max(lo[i]);
            let b = (p + half).min(hi[i]);
            if b > a {
                rng.random_range(a..=b)
            } else {
                // Degenerate overlap: the centre is pinned at a bound.
                a.min(b).clamp(lo[i], hi[i])
            }
        })
        .collect()
}

/// Result of the width tuning plus the final accepted sample.
#[derive(Debug, Clone)]
pub struct RejectionOutcome<S> {
    pub accepted: Vec<S>,
    pub final_w: f64,
    pub total_draws: usize,
    pub adaptations: usize,
    /// Acceptance ratio measured in the last tuning round.
    pub tuned_ratio: f64,
}

/// Core rejection loop, generic in the evaluated payload.
///
/// `eval` maps a perturbed vector to the values matched against `windows`
/// (in window order) plus an arbitrary payload to store on acceptance;
/// `None` marks a failed simulation, which counts as a rejected draw.
pub fn rejection_sample<S>(
    mut eval: impl FnMut(&[f64]) -> Option<(Vec<f64>, S)>,
    windows: &[Window],
    p_bar: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: &UqSettings,
) -> Result<RejectionOutcome<S>> {
    settings.validate()?;
    if windows.is_empty() {
        return Err(Error::invalid("rejection sampling needs at least one window"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(settings.rng_seed);
    let (band_lo, band_hi) = settings.acceptance_band;
    let mut w = settings.w0;
    let mut adaptations = 0usize;
    let mut total_draws = 0usize;

    let accepts = |values: &[f64]| -> bool {
        values
            .iter()
            .zip(windows.iter())
            .all(|(v, win)| win.contains(*v))
    };

    // Tune the width until the measured acceptance ratio sits in the band.
    // Wider perturbations scatter the outputs further, so acceptance falls
    // as w grows: ratios above the band widen w, ratios below narrow it.
    let tuned_ratio = loop {
        let mut accepted = 0usize;
        for _ in 0..settings.n {
            let draw = perturb(p_bar, lo, hi, w, &mut rng);
            total_draws += 1;
            if let Some((values, _)) = eval(&draw) {
                if accepts(&values) {
                    accepted += 1;
                }
            }
        }
        let ratio = accepted as f64 / settings.n as f64;
        if (band_lo..=band_hi).contains(&ratio) {
            break ratio;
        }
        adaptations += 1;
        if adaptations > settings.max_adaptations {
            return Err(Error::UqFailure(format!(
                "acceptance ratio {ratio:.3} still outside [{band_lo}, {band_hi}] after {} width adaptations (w = {w:.4})",
                settings.max_adaptations
            )));
        }
        if ratio > band_hi {
            w = (w * settings.w_adjust_factor).min(0.99);
        } else {
            w /= settings.w_adjust_factor;
        }
    };

    // Collect a fresh sample of n accepted configurations at the tuned
    // width; the tuning draws are discarded.
    let mut accepted: Vec<S> = Vec::with_capacity(settings.n);
    let draw_budget = 100 * settings.n;
    let mut phase2_draws = 0usize;
    while accepted.len() < settings.n {
        if phase2_draws >= draw_budget {
            return Err(Error::UqFailure(format!(
                "only {} of {} configurations accepted within {} draws at w = {w:.4}",
                accepted.len(),
                settings.n,
                draw_budget
            )));
        }
        let draw = perturb(p_bar, lo, hi, w, &mut rng);
        total_draws += 1;
        phase2_draws += 1;
        if let Some((values, payload)) = eval(&draw) {
            if accepts(&values) {
                accepted.push(payload);
            }
        }
    }

    Ok(RejectionOutcome {
        accepted,
        final_w: w,
        total_draws,
        adaptations,
        tuned_ratio,
    })
}

/// Runs the rejection sampler on the real model around a calibrated vector.
///
/// The perturbation intervals are the patient-specific calibration bounds
/// (the same construction `calibrate` used). Requires a calibrated patient.
pub fn sample_outputs(
    patient: &PatientRecord,
    calibrated: &[f64],
    space: &ParameterSpace,
    base: &ModelParameters,
    solver: &SolverSettings,
    settings: &UqSettings,
) -> Result<RejectionOutcome<OutputSet>> {
    patient.validate()?;
    let bounds = build_bounds(space, patient);
    if calibrated.len() != bounds.len() {
        return Err(Error::invalid("calibrated vector length mismatch"));
    }
    let windows = acceptance_windows(patient);
    let lo = bounds.lower();
    let hi = bounds.upper();
    let eval = |vector: &[f64]| -> Option<(Vec<f64>, OutputSet)> {
        let params = bounds.build_model(
            base,
            patient.heart_rate,
            patient.body_surface_area,
            vector,
        );
        let traj = integrate(&params, &params.initial_state(), solver).ok()?;
        let outputs = compute_outputs(&traj, &params).ok()?;
        let matched: Vec<f64> = windows.iter().map(|w| outputs.get(w.output)).collect();
        Some((matched, outputs))
    };
    rejection_sample(eval, &windows, calibrated, &lo, &hi, settings)
}

/// Reliability of one output's accepted sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputReliability {
    pub mean: f64,
    pub std: f64,
    pub reliable: bool,
    pub sample_size: usize,
}

/// Per-output reliability verdicts for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityVerdict {
    pub outputs: BTreeMap<String, OutputReliability>,
}

impl ReliabilityVerdict {
    pub fn get(&self, name: OutputName) -> Option<&OutputReliability> {
        self.outputs.get(name.as_str())
    }
}

/// Applies the std-below-5%-of-mean rule to every output of the accepted
/// sample. Means smaller than the degenerate floor are never reliable.
pub fn reliability(accepted: &[OutputSet], settings: &UqSettings) -> ReliabilityVerdict {
    assert!(!accepted.is_empty(), "reliability needs a non-empty sample");
    let mut outputs = BTreeMap::new();
    for name in OutputName::ALL {
        let values: Vec<f64> = accepted.iter().map(|o| o.get(name)).collect();
        let s = summarize_sample(&values).unwrap();
        let reliable =
            s.mean.abs() > RELIABILITY_MEAN_FLOOR && s.std < settings.reliability_ratio * s.mean.abs();
        outputs.insert(
            name.as_str().to_string(),
            OutputReliability {
                mean: s.mean,
                std: s.std,
                reliable,
                sample_size: s.n,
            },
        );
    }
    ReliabilityVerdict { outputs }
}

/// Chi-squared goodness-of-fit p-value of the sample against a normal with
/// the sample's own mean and standard deviation.
///
/// Uses ⌈√n⌉ equal-probability bins under the fitted normal and k − 3
/// degrees of freedom. Purely diagnostic: nothing downstream branches on it.
pub fn normality_check(sample: &[f64]) -> Result<f64> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::invalid(format!(
            "normality check needs at least 20 points, got {n}"
        )));
    }
    let s = summarize_sample(sample).unwrap();
    if !(s.std > 0.0) {
        return Err(Error::DegenerateSample(
            "normality check on a constant sample".into(),
        ));
    }
    let k = (n as f64).sqrt().ceil() as usize;
    let edges: Vec<f64> = (1..k)
        .map(|j| s.mean + s.std * normal_quantile(j as f64 / k as f64))
        .collect();
    let mut counts = vec![0usize; k];
    for &x in sample {
        let bin = edges.partition_point(|e| x > *e);
        counts[bin] += 1;
    }
    let expected = n as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = (k - 3) as f64;
    Ok(chi_squared_sf(stat, dof))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::ClinicalDatum;

    fn settings(seed: u64) -> UqSettings {
        UqSettings {
            rng_seed: seed,
            ..UqSettings::default()
        }
    }

    fn patient_with(data: Vec<(OutputName, f64, f64)>) -> PatientRecord {
        PatientRecord {
            id: "U-001".into(),
            heart_rate: 80.0,
            body_surface_area: 1.79,
            rv_fac: None,
            tapse: None,
            data: data
                .into_iter()
                .map(|(output, value, measurement_error)| ClinicalDatum {
                    output,
                    value,
                    measurement_error,
                })
                .collect(),
        }
    }

    #[test]
    fn windows_follow_data() {
        let p = patient_with(vec![
            (OutputName::SapMax, 120.0, 6.0),
            (OutputName::LvEf, 60.0, 3.0),
        ]);
        let w = acceptance_windows(&p);
        assert_eq!(w.len(), 2);
        assert_eq!((w[0].lo, w[0].hi), (114.0, 126.0));
        assert!(!w[0].degenerate);

        let mut degen = patient_with(vec![(OutputName::SapMax, 120.0, 6.0)]);
        degen.data[0].measurement_error = 0.0;
        let w = acceptance_windows(&degen);
        assert_eq!((w[0].lo, w[0].hi), (120.0, 120.0));
        assert!(w[0].degenerate);
    }

    #[test]
    fn perturb_zero_width_returns_centre() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let p = vec![2.0, 5.0];
        let out = perturb(&p, &[0.0, 0.0], &[10.0, 10.0], 1e-15, &mut rng);
        for (a, b) in out.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn perturb_clips_at_bounds() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        // Centre sits on the upper bound: draws live in [p(1-w), hi].
        let p = vec![10.0];
        for _ in 0..1000 {
            let out = perturb(&p, &[0.0], &[10.0], 0.2, &mut rng);
            assert!(out[0] <= 10.0 && out[0] >= 8.0);
        }
    }

    #[test]
    fn perturb_draws_fill_the_interval() {
        // Uniform-law check: the empirical minimum and maximum of many draws
        // approach the interval ends.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let p = vec![4.0];
        let w = 0.25;
        let (mut lo_seen, mut hi_seen) = (f64::INFINITY, f64::NEG_INFINITY);
        let n = 10_000;
        for _ in 0..n {
            let x = perturb(&p, &[0.0], &[100.0], w, &mut rng)[0];
            assert!((3.0..=5.0).contains(&x));
            lo_seen = lo_seen.min(x);
            hi_seen = hi_seen.max(x);
        }
        // Expected gap to the end for a uniform sample of n draws is
        // width/(n+1); allow ten times that.
        let slack = 10.0 * 2.0 / (n as f64 + 1.0);
        assert!(lo_seen - 3.0 < slack, "min {lo_seen}");
        assert!(5.0 - hi_seen < slack, "max {hi_seen}");
    }

    /// Stub model where the output equals the parameter: the acceptance
    /// probability at width w over centre c is |window ∩ [c(1-w), c(1+w)]| /
    /// (2·w·c) while the box is not binding.
    fn stub_eval(v: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((v.to_vec(), v.to_vec()))
    }

    #[test]
    fn stub_acceptance_ratio_lands_in_band() {
        // Window of half-width 0.0075 around 0.5 against perturbations of
        // half-width 0.5·w: at w0 = 0.125 the window covers exactly 12% of
        // the perturbation range, inside the band already.
        let windows = [Window {
            output: OutputName::SapMax,
            lo: 0.5 - 0.0075,
            hi: 0.5 + 0.0075,
            degenerate: false,
        }];
        let out = rejection_sample(
            stub_eval,
            &windows,
            &[0.5],
            &[0.0],
            &[1.0],
            &settings(11),
        )
        .unwrap();
        assert_eq!(out.accepted.len(), 100);
        assert!(out.tuned_ratio >= 0.10 && out.tuned_ratio <= 0.15, "{}", out.tuned_ratio);
        // Every accepted payload is inside the window.
        for a in &out.accepted {
            assert!(windows[0].contains(a[0]));
        }
    }

    #[test]
    fn full_coverage_windows_drive_width_up_until_failure() {
        // A window covering everything keeps the acceptance ratio at 1, so
        // the tuner widens w every round until the budget is exhausted.
        let windows = [Window {
            output: OutputName::SapMax,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            degenerate: false,
        }];
        let spread = std::cell::Cell::new(0.0f64);
        let err = rejection_sample(
            |v: &[f64]| {
                spread.set(spread.get().max((v[0] - 0.5).abs()));
                stub_eval(v)
            },
            &windows,
            &[0.5],
            &[0.0],
            &[1.0],
            &UqSettings {
                max_adaptations: 5,
                ..settings(4)
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::UqFailure(_)));
        // The width grew beyond the initial 12.5% perturbation half-width.
        assert!(spread.get() > 0.5 * 0.125, "spread {}", spread.get());
    }

    #[test]
    fn narrow_windows_drive_width_down() {
        // A window covering ~3% of the initial perturbation range forces the
        // tuner to shrink w until the ratio climbs into the band.
        let windows = [Window {
            output: OutputName::SapMax,
            lo: 0.5 - 0.002,
            hi: 0.5 + 0.002,
            degenerate: false,
        }];
        let out = rejection_sample(
            stub_eval,
            &windows,
            &[0.5],
            &[0.0],
            &[1.0],
            &settings(7),
        )
        .unwrap();
        assert!(out.final_w < 0.125);
        assert!(out.adaptations >= 1);
        assert!(out.tuned_ratio >= 0.10 && out.tuned_ratio <= 0.15);
    }

    #[test]
    fn stub_acceptance_probability_is_non_increasing_in_width() {
        // Direct Monte Carlo estimate of the acceptance probability of the
        // stub model at fixed widths.
        let window = Window {
            output: OutputName::SapMax,
            lo: 0.5 - 0.01,
            hi: 0.5 + 0.01,
            degenerate: false,
        };
        let mut last = 1.1;
        for w in [0.05, 0.1, 0.2, 0.4] {
            let mut rng = ChaCha12Rng::seed_from_u64(99);
            let n = 20_000;
            let mut accepted = 0;
            for _ in 0..n {
                let x = perturb(&[0.5], &[0.0], &[1.0], w, &mut rng)[0];
                if window.contains(x) {
                    accepted += 1;
                }
            }
            let ratio = accepted as f64 / n as f64;
            assert!(ratio < last, "acceptance grew to {ratio} at w = {w}");
            last = ratio;
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_samples() {
        let windows = [Window {
            output: OutputName::SapMax,
            lo: 0.5 - 0.0075,
            hi: 0.5 + 0.0075,
            degenerate: false,
        }];
        let a = rejection_sample(stub_eval, &windows, &[0.5], &[0.0], &[1.0], &settings(42))
            .unwrap();
        let b = rejection_sample(stub_eval, &windows, &[0.5], &[0.0], &[1.0], &settings(42))
            .unwrap();
        assert_eq!(a.accepted, b.accepted);
        assert_eq!(a.total_draws, b.total_draws);
        let c = rejection_sample(stub_eval, &windows, &[0.5], &[0.0], &[1.0], &settings(43))
            .unwrap();
        assert_ne!(a.accepted, c.accepted);
    }

    #[test]
    fn reliability_thresholds() {
        let s = UqSettings::default();
        // Construct samples with a known std/mean ratio: two-point samples
        // {m−d, m+d} have mean m and unbiased std d·√2.
        let mk = |mean: f64, ratio: f64| -> Vec<OutputSet> {
            let d = ratio * mean / (2.0f64).sqrt();
            vec![
                OutputSet::from_fn(|_| mean - d),
                OutputSet::from_fn(|_| mean + d),
            ]
        };
        let v = reliability(&mk(20.0, 0.04), &s);
        assert!(v.get(OutputName::SapMax).unwrap().reliable);
        let v = reliability(&mk(20.0, 0.06), &s);
        assert!(!v.get(OutputName::SapMax).unwrap().reliable);
        // Constant samples are reliable (zero dispersion).
        let v = reliability(&vec![OutputSet::from_fn(|_| 20.0); 5], &s);
        let r = v.get(OutputName::PwpMean).unwrap();
        assert!(r.reliable);
        assert_eq!(r.std, 0.0);
        assert_eq!(r.sample_size, 5);
        // Near-zero means are never reliable.
        let v = reliability(&vec![OutputSet::from_fn(|_| 1e-9); 5], &s);
        assert!(!v.get(OutputName::PwpMean).unwrap().reliable);
    }

    fn box_muller(rng: &mut ChaCha12Rng) -> f64 {
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn normality_check_accepts_normal_samples() {
        // Monte Carlo over seeds: a correct 1%-level test rejects roughly 1
        // seed in 100.
        let mut rejected = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let sample: Vec<f64> = (0..10_000).map(|_| 3.0 + 0.7 * box_muller(&mut rng)).collect();
            if normality_check(&sample).unwrap() <= 0.01 {
                rejected += 1;
            }
        }
        assert!(rejected <= 1, "{rejected} of 100 normal samples rejected");
    }

    #[test]
    fn normality_check_rejects_uniform_samples() {
        for seed in 0..10u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let sample: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
            assert!(normality_check(&sample).unwrap() < 0.01);
        }
    }

    #[test]
    fn normality_check_degenerate_cases() {
        assert!(normality_check(&[1.0; 10]).is_err());
        assert!(matches!(
            normality_check(&[2.5; 64]),
            Err(Error::DegenerateSample(_))
        ));
    }
}
