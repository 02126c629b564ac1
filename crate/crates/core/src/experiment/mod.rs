//! Control-cycle orchestration, enhancement analysis and model fitting.
//!
//! Everything here works in `f64`: these are the data-facing parts of the
//! crate, fed by event counts and configuration files.

mod cycle;
mod data;
mod fit;

pub use cycle::{simulate_control_cycle, CycleOutput, CycleSetup};
pub use data::{read_histogram_csv, write_fit_report, write_histogram_csv, write_parameter_csv, MeasuredHistogram};
pub use fit::{
    fit_targets, FitConfig, FitData, FitModel, FitParameters, FitResult, Objective, ParameterMask, FIT_QUADRATURE_ORDER,
};

use crate::error::{domain, Error, Result};
use crate::timedomain::MotionProfile;
use crate::units::FE57_WAVELENGTH_PM;

/// Timing of the storage-ring fill seen by the experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BunchCycleConfig {
    pub n_bunches: usize,
    pub bunch_spacing_ns: f64,
    /// 1-based index of the bunch during which the voltage pattern fires.
    pub signal_bunch: usize,
    /// 1-based index of the bunch used as unperturbed reference.
    pub reference_bunch: usize,
}

impl Default for BunchCycleConfig {
    fn default() -> Self {
        Self { n_bunches: 40, bunch_spacing_ns: 192.0, signal_bunch: 1, reference_bunch: 40 }
    }
}

impl BunchCycleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bunches == 0 || !(self.bunch_spacing_ns > 0.0) {
            return Err(domain("cycle needs at least one bunch and a positive spacing"));
        }
        for (name, i) in [("signal", self.signal_bunch), ("reference", self.reference_bunch)] {
            if i == 0 || i > self.n_bunches {
                return Err(domain(format!("{name} bunch {i} outside 1..={}", self.n_bunches)));
            }
        }
        Ok(())
    }

    pub fn cycle_duration_ns(&self) -> f64 {
        self.n_bunches as f64 * self.bunch_spacing_ns
    }

    /// Excitation time of bunch `index` (1-based) within the cycle.
    pub fn bunch_start_ns(&self, index: usize) -> f64 {
        (index - 1) as f64 * self.bunch_spacing_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// One pulse.
    Single,
    /// A pulse followed by one of opposite polarity `tau2_ns` later.
    Double,
}

/// Voltage pulses applied to the piezo, described by the displacement they
/// are assumed to produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltagePattern {
    pub kind: PatternKind,
    /// Start of the first pulse after the x-ray excitation.
    pub tau1_ns: f64,
    pub pulse_width_ns: f64,
    /// Delay of the opposite pulse (double pattern only).
    pub tau2_ns: f64,
    /// Plateau displacement.
    pub amplitude_pm: f64,
    pub rise_time_ns: f64,
    /// Displacement left behind after each pulse, as a fraction of its
    /// amplitude.
    pub residual_fraction: f64,
}

impl Default for VoltagePattern {
    fn default() -> Self {
        Self {
            kind: PatternKind::Single,
            tau1_ns: 32.0,
            pulse_width_ns: 20.0,
            tau2_ns: 0.0,
            amplitude_pm: FE57_WAVELENGTH_PM / 2.0,
            rise_time_ns: 5.0,
            residual_fraction: 0.0,
        }
    }
}

impl VoltagePattern {
    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_width_ns > 0.0) || !(self.rise_time_ns > 0.0) {
            return Err(domain("pulse width and rise time must be positive"));
        }
        if self.kind == PatternKind::Double && !(self.tau2_ns > 0.0) {
            return Err(domain("double pattern needs tau2 > 0"));
        }
        if ![self.tau1_ns, self.tau2_ns, self.amplitude_pm, self.residual_fraction].iter().all(|x| x.is_finite()) {
            return Err(domain("pattern values must be finite"));
        }
        Ok(())
    }

    /// `(start, sign)` of every pulse.
    fn pulses(&self) -> Vec<(f64, f64)> {
        match self.kind {
            PatternKind::Single => vec![(self.tau1_ns, 1.0)],
            PatternKind::Double => vec![(self.tau1_ns, 1.0), (self.tau1_ns + self.tau2_ns, -1.0)],
        }
    }

    /// Trapezoid of one pulse: ramp up over the rise time, hold until the
    /// pulse width has elapsed, ramp to the residual level.
    fn pulse_knots(&self, start: f64) -> [f64; 4] {
        let up = start + self.rise_time_ns;
        let fall = (start + self.pulse_width_ns).max(up);
        [start, up, fall, fall + self.rise_time_ns]
    }

    fn pulse_value(&self, start: f64, sign: f64, t: f64) -> f64 {
        let [t0, t1, t2, t3] = self.pulse_knots(start);
        let a = sign * self.amplitude_pm;
        let r = a * self.residual_fraction;
        if t <= t0 {
            0.0
        } else if t < t1 {
            a * (t - t0) / (t1 - t0)
        } else if t <= t2 {
            a
        } else if t < t3 {
            a + (r - a) * (t - t2) / (t3 - t2)
        } else {
            r
        }
    }
}

/// Piecewise-linear displacement produced by `pattern`, relative to the
/// x-ray excitation at `t = 0`.
///
/// The piezo is assumed to follow the voltage with linear ramps; its true
/// transfer function is not modeled.
pub fn voltage_to_motion(pattern: &VoltagePattern) -> Result<MotionProfile<f64>> {
    pattern.validate()?;
    let pulses = pattern.pulses();
    let mut times: Vec<f64> = pulses.iter().flat_map(|&(s, _)| pattern.pulse_knots(s)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let knots =
        times.into_iter().map(|t| (t, pulses.iter().map(|&(s, sign)| pattern.pulse_value(s, sign, t)).sum())).collect();
    MotionProfile::new(knots, FE57_WAVELENGTH_PM)
}

/// Ratio trace with low-statistics bins masked.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementTrace {
    pub time_ns: Vec<f64>,
    /// `None` where the denominator fell below the floor.
    pub xi: Vec<Option<f64>>,
    pub floor: f64,
}

impl EnhancementTrace {
    pub fn masked_count(&self) -> usize {
        self.xi.iter().filter(|x| x.is_none()).count()
    }

    /// `(t, xi)` of the unmasked bins.
    pub fn defined(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.time_ns.iter().zip(&self.xi).filter_map(|(&t, x)| x.map(|v| (t, v)))
    }
}

/// Default count floor below which reference bins are masked.
pub const DEFAULT_COUNT_FLOOR: f64 = 10.0;

/// `xi(t) = signal(t) / reference(t)`.
pub fn enhancement(signal: &[f64], reference: &[f64], time_ns: &[f64], floor: f64) -> Result<EnhancementTrace> {
    background_enhancement(signal, reference, &vec![0.0; signal.len()], time_ns, floor)
}

/// `xi_exp(t) = (signal + rho) / (reference + rho)` for a background `rho`
/// present in both bunches.
pub fn background_enhancement(
    signal: &[f64],
    reference: &[f64],
    rho: &[f64],
    time_ns: &[f64],
    floor: f64,
) -> Result<EnhancementTrace> {
    let n = signal.len();
    if reference.len() != n || rho.len() != n || time_ns.len() != n {
        return Err(domain("signal, reference, background and time axis must share one binning"));
    }
    if rho.iter().any(|&r| !(r >= 0.0)) {
        return Err(domain("background must be >= 0"));
    }
    if !(floor >= 0.0) {
        return Err(domain("count floor must be >= 0"));
    }
    let xi: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let den = reference[i] + rho[i];
            (den >= floor && den > 0.0).then(|| (signal[i] + rho[i]) / den)
        })
        .collect();
    if xi.iter().all(Option::is_none) {
        return Err(Error::AllMasked);
    }
    Ok(EnhancementTrace { time_ns: time_ns.to_vec(), xi, floor })
}
