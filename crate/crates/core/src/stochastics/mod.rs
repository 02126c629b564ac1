//! Residual sample motion and photon counting statistics.
//!
//! Residual vibrations are modeled as a Doppler detuning `delta` of target 1,
//! constant during one excitation window and Gaussian across shots with
//!
//! `p(delta) = 1 / (2 sqrt(pi) sigma) exp(-(delta / (2 sigma))^2)`.
//!
//! With this parameterization `sigma` is not the standard deviation; that is
//! `sqrt(2) sigma` (see [`ResidualMotionModel::standard_deviation`]). All
//! reported widths use `sigma`.

mod events;

pub use events::{
    fold_events, poisson_events, poisson_events_mixture, BunchHistograms, BunchRates, Event, EventStream,
};

use gauss_quad::GaussHermite;
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::hyperfine::NuclearModel;
use crate::real::{cis, czero, Real};
use crate::timedomain::WindowedInterferometer;
use crate::units::doppler_velocity_mm_s;

pub const DEFAULT_QUADRATURE_ORDER: usize = 41;
/// Largest order tried while refining an average.
pub const QUADRATURE_ORDER_CAP: usize = 335;
/// Relative change between successive orders accepted as converged.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualMotionModel<T> {
    /// Width parameter of `p(delta)` in units of gamma.
    pub sigma_det: T,
    /// Gauss-Hermite order, odd so that `delta = 0` is a node.
    pub quadrature_order: usize,
}

impl<T: Real> Default for ResidualMotionModel<T> {
    fn default() -> Self {
        Self { sigma_det: T::zero(), quadrature_order: DEFAULT_QUADRATURE_ORDER }
    }
}

impl<T: Real> ResidualMotionModel<T> {
    pub fn new(sigma_det: T, quadrature_order: usize) -> Result<Self> {
        let m = Self { sigma_det, quadrature_order };
        m.validate()?;
        Ok(m)
    }

    pub fn with_sigma(sigma_det: T) -> Result<Self> {
        Self::new(sigma_det, DEFAULT_QUADRATURE_ORDER)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_det >= T::zero()) || !self.sigma_det.is_finite() {
            return Err(domain(format!("sigma_det must be finite and >= 0, got {}", self.sigma_det)));
        }
        if self.quadrature_order < 5 || self.quadrature_order.is_multiple_of(2) {
            return Err(domain(format!("quadrature order must be odd and >= 5, got {}", self.quadrature_order)));
        }
        Ok(())
    }

    /// `p(delta)`; integrates to one.
    pub fn density(&self, delta: T) -> T {
        let two_s = self.sigma_det + self.sigma_det;
        (-(delta / two_s).powi(2)).exp() / (two_s * T::PI().sqrt())
    }

    /// True standard deviation of `p(delta)`, `sqrt(2) sigma_det`.
    pub fn standard_deviation(&self) -> T {
        self.sigma_det * T::SQRT_2()
    }

    /// Detuning nodes and probability weights (summing to one).
    pub fn nodes(&self) -> Result<Vec<(T, T)>> {
        hermite_nodes(self.sigma_det, self.quadrature_order)
    }
}

/// Substituting `delta = 2 sigma x` turns `∫ p(delta) f(delta)` into
/// `pi^-1/2 ∫ e^{-x^2} f(2 sigma x)`.
fn hermite_nodes<T: Real>(sigma: T, order: usize) -> Result<Vec<(T, T)>> {
    let rule = GaussHermite::new(order).map_err(|e| domain(format!("Gauss-Hermite rule of order {order}: {e}")))?;
    let norm = std::f64::consts::PI.sqrt();
    let scale = sigma + sigma;
    Ok(rule.iter().map(|&(x, w)| (scale * T::lit(x), T::lit(w / norm))).collect())
}

/// Average `f(delta)` over `p(delta)`, raising the order (`n -> 2n + 1`)
/// until the result changes by less than [`QUADRATURE_TOLERANCE`] relative
/// to its largest element.
pub fn average_over_detuning<T, F>(model: &ResidualMotionModel<T>, f: F) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(T) -> Vec<T> + Sync,
{
    model.validate()?;
    if model.sigma_det == T::zero() {
        return Ok(f(T::zero()));
    }
    let mut order = model.quadrature_order;
    let mut current = average_fixed(model.sigma_det, order, &f)?;
    let mut change = f64::NAN;
    loop {
        let next_order = 2 * order + 1;
        if next_order > QUADRATURE_ORDER_CAP {
            return Err(Error::Quadrature { order, cap: QUADRATURE_ORDER_CAP, change });
        }
        let next = average_fixed(model.sigma_det, next_order, &f)?;
        let c = relative_change(&current, &next);
        if c < T::lit(QUADRATURE_TOLERANCE) {
            return Ok(next);
        }
        change = c.as_f64();
        current = next;
        order = next_order;
    }
}

/// Fixed-order Gauss-Hermite average, no convergence check.
pub fn average_fixed<T, F>(sigma: T, order: usize, f: &F) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(T) -> Vec<T> + Sync,
{
    let nodes = hermite_nodes(sigma, order)?;
    let parts: Vec<(T, Vec<T>)> = nodes.par_iter().map(|&(d, w)| (w, f(d))).collect();
    let len = parts.iter().map(|p| p.1.len()).min().unwrap_or(0);
    let mut acc = vec![T::zero(); len];
    for (w, v) in parts {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
    }
    Ok(acc)
}

fn relative_change<T: Real>(a: &[T], b: &[T]) -> T {
    let scale = b.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    a.iter().zip(b).fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs())) / scale
}

/// `|[e^{i delta t} E1(t)] * E2(t)|^2` for one detuning; `e1`, `e2` are
/// scattered densities per ns sampled from `t = 0` with step `dt_ns`.
pub fn detuned_chain_intensity<T: Real>(
    e1: &[Complex<T>],
    e2: &[Complex<T>],
    dt_ns: T,
    lifetime_ns: T,
    delta: T,
) -> Vec<T> {
    let n = e1.len().min(e2.len());
    let shifted: Vec<_> =
        e1[..n].iter().enumerate().map(|(j, &e)| e * cis(delta * T::lit(j as f64) * dt_ns / lifetime_ns)).collect();
    (0..n)
        .map(|j| {
            let mut acc = czero::<T>();
            for i in 0..=j {
                acc += shifted[i] * e2[j - i];
            }
            (acc * dt_ns).norm_sqr()
        })
        .collect()
}

/// Residual-motion average of the scalar two-target chain.
pub fn detuning_averaged_intensity<T: Real>(
    e1: &[Complex<T>],
    e2: &[Complex<T>],
    dt_ns: T,
    lifetime_ns: T,
    model: &ResidualMotionModel<T>,
) -> Result<Vec<T>> {
    if !(dt_ns > T::zero()) {
        return Err(domain("time step must be positive"));
    }
    average_over_detuning(model, |d| detuned_chain_intensity(e1, e2, dt_ns, lifetime_ns, d))
}

/// Residual-motion average of the pi intensity of the full two-target Jones
/// chain (both polarization families, all pathways), target 1 detuned and
/// displaced with `phases`.
pub fn averaged_window_intensity<T: Real>(
    interferometer: &WindowedInterferometer<T>,
    phases: &[T],
    model: &ResidualMotionModel<T>,
) -> Result<Vec<T>> {
    average_over_detuning(model, |d| interferometer.field_with_phases(phases, d).pi_intensity())
}

/// Velocity (mm/s) whose first-order Doppler shift is `delta` (units of gamma).
pub fn velocity_of_detuning<T: Real>(delta: T, model: &NuclearModel<T>) -> T {
    doppler_velocity_mm_s(delta, model.gamma_nev, model.energy_kev)
}

/// Displacement amplitude (nm) of a harmonic vibration at `f_hz` with
/// velocity amplitude `sigma_v_mm_s`.
pub fn displacement_spread<T: Real>(sigma_v_mm_s: T, f_hz: T) -> Result<T> {
    if !(f_hz > T::zero()) {
        return Err(domain(format!("vibration frequency must be positive, got {f_hz}")));
    }
    Ok(sigma_v_mm_s / ((T::PI() + T::PI()) * f_hz) * T::lit(1e6))
}
