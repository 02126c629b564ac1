//! One-dimensional echo model of the support plate.
//!
//! The piezo kick launches a wave packet into the plate; it reflects at the
//! back face and returns to the sample every `2 d / v_s`, each time displacing
//! the sample again with amplitude reduced by `(1 - loss)` per roundtrip.

use std::io::Write;

use gauss_quad::GaussHermite;

use crate::error::{domain, Result};
use crate::real::Real;
use crate::stochastics::{averaged_window_intensity, ResidualMotionModel};
use crate::timedomain::WindowedInterferometer;
use crate::units::FE57_WAVELENGTH_PM;

/// Displacement pulse at the sample surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KickSpec<T> {
    pub amplitude_pm: T,
    /// Half-cosine rise (and fall) time.
    pub rise_time_ns: T,
    /// Full duration including rise and fall.
    pub duration_ns: T,
    /// Start relative to the first excitation of the cycle.
    pub start_ns: T,
}

impl<T: Real> Default for KickSpec<T> {
    /// 20 ns raised-cosine pulse of half a wavelength.
    fn default() -> Self {
        Self {
            amplitude_pm: T::lit(FE57_WAVELENGTH_PM / 2.0),
            rise_time_ns: T::lit(10.0),
            duration_ns: T::lit(20.0),
            start_ns: T::lit(32.0),
        }
    }
}

impl<T: Real> KickSpec<T> {
    /// Pulse shape at time `t` after its start.
    pub fn shape(&self, t: T) -> T {
        let (r, d) = (self.rise_time_ns, self.duration_ns);
        if t <= T::zero() || t >= d {
            return T::zero();
        }
        let half = T::lit(0.5);
        let edge = |x: T| half - half * (T::PI() * x / r).cos();
        let s = if t < r {
            edge(t)
        } else if t > d - r {
            edge(d - t)
        } else {
            T::one()
        };
        self.amplitude_pm * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateSpec<T> {
    pub thickness_mm: T,
    pub sound_velocity_m_s: T,
    /// Fraction of the amplitude lost per roundtrip, in `[0, 1]`.
    pub reflection_loss: T,
    pub kick: KickSpec<T>,
    /// Gaussian spreading of echo `j`, `sigma = dispersion_ns * sqrt(j)`;
    /// zero disables it.
    pub dispersion_ns: T,
}

impl<T: Real> Default for PlateSpec<T> {
    fn default() -> Self {
        Self {
            thickness_mm: T::lit(4.0),
            sound_velocity_m_s: T::lit(2740.0),
            reflection_loss: T::lit(0.5),
            kick: KickSpec::default(),
            dispersion_ns: T::zero(),
        }
    }
}

impl<T: Real> PlateSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.thickness_mm > T::zero()) || !(self.sound_velocity_m_s > T::zero()) {
            return Err(domain("plate thickness and sound velocity must be positive"));
        }
        if !(self.reflection_loss >= T::zero() && self.reflection_loss <= T::one()) {
            return Err(domain(format!("reflection loss must lie in [0, 1], got {}", self.reflection_loss)));
        }
        let k = &self.kick;
        if !(k.duration_ns > T::zero())
            || !(k.rise_time_ns > T::zero())
            || k.rise_time_ns + k.rise_time_ns > k.duration_ns
        {
            return Err(domain("kick needs 0 < 2 rise time <= duration"));
        }
        if !(self.dispersion_ns >= T::zero()) {
            return Err(domain("dispersion must be >= 0"));
        }
        Ok(())
    }
}

/// `2 d / v_s` in microseconds.
pub fn roundtrip_time<T: Real>(plate: &PlateSpec<T>) -> T {
    // mm / (m/s) = ms
    (plate.thickness_mm + plate.thickness_mm) / plate.sound_velocity_m_s * T::lit(1e3)
}

/// Sample displacement (pm) at times `t_ns` from the kick and its echoes.
/// With `include_initial = false` only echoes `j >= 1` contribute.
pub fn displacement_history<T: Real>(plate: &PlateSpec<T>, t_ns: &[T], include_initial: bool) -> Result<Vec<T>> {
    plate.validate()?;
    let t_max = t_ns.iter().copied().fold(T::neg_infinity(), T::max);
    let period = roundtrip_time(plate) * T::lit(1e3);
    let kick = &plate.kick;
    let n_echo =
        if t_max > kick.start_ns { ((t_max - kick.start_ns) / period).floor().to_usize().unwrap_or(0) + 1 } else { 0 };
    let rule = if plate.dispersion_ns > T::zero() { Some(GaussHermite::new(41).expect("order >= 2")) } else { None };
    let keep = T::one() - plate.reflection_loss;
    let first = if include_initial { 0 } else { 1 };

    let mut out = vec![T::zero(); t_ns.len()];
    for j in first..=n_echo {
        let amp = keep.powi(j as i32);
        if amp == T::zero() {
            continue;
        }
        let arrival = kick.start_ns + T::lit(j as f64) * period;
        let sigma = plate.dispersion_ns * T::lit(j as f64).sqrt();
        for (o, &t) in out.iter_mut().zip(t_ns) {
            let local = t - arrival;
            *o += amp
                * match (&rule, sigma > T::zero()) {
                    (Some(rule), true) => {
                        // Gaussian smoothing: ∫ g(s) shape(t - s) ds
                        let c = T::SQRT_2() * sigma;
                        let acc: f64 = rule.iter().map(|&(x, w)| w * kick.shape(local - c * T::lit(x)).as_f64()).sum();
                        T::lit(acc / std::f64::consts::PI.sqrt())
                    }
                    _ => kick.shape(local),
                };
        }
    }
    Ok(out)
}

/// Bunch (1-based) whose excitation window sees echo `j`.
pub fn echo_bunch<T: Real>(plate: &PlateSpec<T>, j: usize, bunch_spacing_ns: T) -> usize {
    let arrival = plate.kick.start_ns + T::lit(j as f64) * roundtrip_time(plate) * T::lit(1e3);
    (arrival / bunch_spacing_ns).floor().to_usize().unwrap_or(0) + 1
}

/// Delayed pi intensity integrated over each bunch window, starting at
/// `veto_ns` after the excitation, with target 1 following the acoustic
/// displacement history (initial kick included).
pub fn revival_counts<T: Real>(
    plate: &PlateSpec<T>,
    interferometer: &WindowedInterferometer<T>,
    residual: &ResidualMotionModel<T>,
    n_bunches: usize,
    bunch_spacing_ns: T,
    veto_ns: T,
) -> Result<Vec<T>> {
    let n = interferometer.len();
    let dt = interferometer.dt();
    let lambda = T::lit(FE57_WAVELENGTH_PM);
    let two_pi = T::PI() + T::PI();
    let mut counts = Vec::with_capacity(n_bunches);
    for b in 0..n_bunches {
        let start = T::lit(b as f64) * bunch_spacing_ns;
        let times: Vec<T> = (0..n).map(|j| start + T::lit(j as f64) * dt).collect();
        let z = displacement_history(plate, &times, true)?;
        let phases: Vec<T> = z.iter().map(|&zj| two_pi * (zj - z[0]) / lambda).collect();
        let intensity = averaged_window_intensity(interferometer, &phases, residual)?;
        let total: T = intensity
            .iter()
            .enumerate()
            .filter(|(j, _)| T::lit(*j as f64) * dt >= veto_ns && T::lit(*j as f64) * dt < bunch_spacing_ns)
            .map(|(_, &x)| x)
            .sum();
        counts.push(total * dt);
    }
    Ok(counts)
}

/// CSV with header `bunch_index,counts`.
pub fn write_bunch_counts_csv<W: Write, T: Real>(writer: W, counts: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bunch_index", "counts"])?;
    for (i, c) in counts.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{:e}", c.as_f64())])?;
    }
    w.flush()?;
    Ok(())
}
