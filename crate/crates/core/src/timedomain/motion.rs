use crate::error::{domain, Result};
use crate::real::Real;
use crate::units::FE57_WAVELENGTH_PM;

/// Piecewise-linear displacement `z(t)` (pm vs ns) along the beam.
///
/// Knots are ordered in time; two knots at the same instant form a jump and
/// the profile is right-continuous there. Before the first knot `z` equals
/// the first value, after the last it is held until [`end_ns`](Self::end_ns).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionProfile<T> {
    knots: Vec<(T, T)>,
    wavelength_pm: T,
    end_ns: T,
}

impl<T: Real> MotionProfile<T> {
    pub fn new(knots: Vec<(T, T)>, wavelength_pm: T) -> Result<Self> {
        if !(wavelength_pm > T::zero()) {
            return Err(domain("wavelength must be positive"));
        }
        if knots.iter().any(|(t, z)| !t.is_finite() || !z.is_finite()) {
            return Err(domain("motion knots must be finite"));
        }
        for w in knots.windows(3) {
            if w[0].0 == w[2].0 {
                return Err(domain("at most two knots may share a time"));
            }
        }
        if knots.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(domain("motion knots must be ordered in time"));
        }
        Ok(Self { knots, wavelength_pm, end_ns: T::infinity() })
    }

    /// No motion at all.
    pub fn stationary() -> Self {
        Self { knots: Vec::new(), wavelength_pm: T::lit(FE57_WAVELENGTH_PM), end_ns: T::infinity() }
    }

    /// Jump by `dz_pm` at `t_ns`.
    pub fn step(t_ns: T, dz_pm: T) -> Self {
        Self::steps(&[(t_ns, dz_pm)]).expect("single step is ordered")
    }

    /// Successive jumps `(t_ns, dz_pm)`; displacements accumulate.
    pub fn steps(jumps: &[(T, T)]) -> Result<Self> {
        let mut knots = Vec::with_capacity(2 * jumps.len());
        let mut z = T::zero();
        for &(t, dz) in jumps {
            knots.push((t, z));
            z += dz;
            knots.push((t, z));
        }
        Self::new(knots, T::lit(FE57_WAVELENGTH_PM))
    }

    /// Linear ramp from 0 to `dz_pm` between `t0` and `t1`.
    pub fn ramp(t0: T, t1: T, dz_pm: T) -> Result<Self> {
        if !(t1 > t0) {
            return Err(domain("ramp must have positive duration"));
        }
        Self::new(vec![(t0, T::zero()), (t1, dz_pm)], T::lit(FE57_WAVELENGTH_PM))
    }

    /// Profile valid only up to `end_ns`.
    pub fn with_end(mut self, end_ns: T) -> Self {
        self.end_ns = end_ns;
        self
    }

    pub fn with_wavelength(mut self, wavelength_pm: T) -> Result<Self> {
        if !(wavelength_pm > T::zero()) {
            return Err(domain("wavelength must be positive"));
        }
        self.wavelength_pm = wavelength_pm;
        Ok(self)
    }

    pub fn knots(&self) -> &[(T, T)] {
        &self.knots
    }

    pub fn wavelength_pm(&self) -> T {
        self.wavelength_pm
    }

    pub fn end_ns(&self) -> T {
        self.end_ns
    }

    fn interpolate(&self, i: usize, t: T) -> T {
        let (t0, z0) = self.knots[i];
        match self.knots.get(i + 1) {
            Some(&(t1, z1)) if t1 > t0 => z0 + (z1 - z0) * (t - t0) / (t1 - t0),
            _ => z0,
        }
    }

    /// `z(t)`, right-continuous at jumps.
    pub fn displacement(&self, t: T) -> T {
        match self.knots.partition_point(|k| k.0 <= t) {
            0 => self.knots.first().map_or(T::zero(), |k| k.1),
            i => self.interpolate(i - 1, t),
        }
    }

    /// Left limit `z(t-)`.
    pub fn displacement_before(&self, t: T) -> T {
        match self.knots.partition_point(|k| k.0 < t) {
            0 => self.knots.first().map_or(T::zero(), |k| k.1),
            i => self.interpolate(i - 1, t),
        }
    }

    /// `phi(t) = 2 pi (z(t) - z(0-)) / lambda`, relative to the excitation.
    pub fn phase(&self, t: T) -> T {
        let dz = self.displacement(t) - self.displacement_before(T::zero());
        (T::PI() + T::PI()) * dz / self.wavelength_pm
    }

    /// Same profile delayed by `dt_ns`.
    pub fn shifted(&self, dt_ns: T) -> Self {
        Self {
            knots: self.knots.iter().map(|&(t, z)| (t + dt_ns, z)).collect(),
            wavelength_pm: self.wavelength_pm,
            end_ns: self.end_ns + dt_ns,
        }
    }
}
