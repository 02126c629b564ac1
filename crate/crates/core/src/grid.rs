//! Paired frequency and time grids for the discrete Fourier bridge.

use crate::error::{Error, Result};
use crate::real::Real;

/// Uniform detuning grid `w_k = (k - n/2) dw`, `k = 0..n`, in units of gamma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid<T> {
    n: usize,
    d_omega: T,
    lifetime_ns: T,
}

/// Time grid `t_j = t_start + j dt` (ns) paired with a [`FrequencyGrid`].
///
/// Samples with `j >= n/2` are the wrapped negative times of the periodic
/// transform; causal responses vanish there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    pub t_start: T,
    pub dt: T,
    pub n_samples: usize,
}

impl<T: Real> FrequencyGrid<T> {
    /// Grid spanning `[-half_span, half_span)` with `n` samples.
    pub fn new(half_span: T, n: usize, lifetime_ns: T) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Grid(format!("sample count must be a power of two >= 16, got {n}")));
        }
        if !(half_span > T::zero()) || !(lifetime_ns > T::zero()) {
            return Err(Error::Grid("span and lifetime must be positive".into()));
        }
        let grid = Self { n, d_omega: (half_span + half_span) / T::lit(n as f64), lifetime_ns };
        let window = grid.time_grid().window_ns();
        if window < T::lit(192.0) {
            return Err(Error::Grid(format!("time window {window} ns is shorter than 192 ns")));
        }
        Ok(grid)
    }

    /// +-400 gamma with 2^16 samples and a 141 ns lifetime.
    pub fn standard() -> Self {
        Self::new(T::lit(400.0), 1 << 16, T::lit(crate::units::FE57_LIFETIME_NS)).expect("standard grid is valid")
    }

    /// Rebuild a grid from explicit detuning samples, which must be uniform
    /// and laid out as `(k - n/2) dw`.
    pub fn from_samples(omegas: &[T], lifetime_ns: T) -> Result<Self> {
        let n = omegas.len();
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Grid(format!("sample count must be a power of two >= 16, got {n}")));
        }
        let dw = omegas[1] - omegas[0];
        if !(dw > T::zero()) {
            return Err(Error::Grid("grid must be strictly increasing".into()));
        }
        let tol = T::lit(1e-9) * dw * T::lit(n as f64);
        for (k, &w) in omegas.iter().enumerate() {
            let expect = T::lit(k as f64 - (n / 2) as f64) * dw;
            if (w - expect).abs() > tol {
                return Err(Error::Grid(format!("non-uniform or off-centre sample at index {k}")));
            }
        }
        Self::new(dw * T::lit((n / 2) as f64), n, lifetime_ns)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn d_omega(&self) -> T {
        self.d_omega
    }

    pub fn lifetime_ns(&self) -> T {
        self.lifetime_ns
    }

    pub fn half_span(&self) -> T {
        self.d_omega * T::lit((self.n / 2) as f64)
    }

    #[inline]
    pub fn omega(&self, k: usize) -> T {
        T::lit(k as f64 - (self.n / 2) as f64) * self.d_omega
    }

    pub fn omegas(&self) -> Vec<T> {
        (0..self.n).map(|k| self.omega(k)).collect()
    }

    /// Index of the sample nearest to `omega`, clamped to the grid.
    pub fn nearest_index(&self, omega: T) -> usize {
        let k = (omega / self.d_omega).round().to_f64().unwrap_or(0.0) + (self.n / 2) as f64;
        k.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Time step in units of the lifetime (`dt * gamma`).
    pub fn dt_gamma(&self) -> T {
        (T::PI() + T::PI()) / (T::lit(self.n as f64) * self.d_omega)
    }

    pub fn time_grid(&self) -> TimeGrid<T> {
        TimeGrid { t_start: T::zero(), dt: self.dt_gamma() * self.lifetime_ns, n_samples: self.n }
    }

    /// Whether the grid covers all `lines` with `margin` linewidths to spare.
    pub fn covers(&self, lines: &[T], margin: T) -> bool {
        let lo = lines.iter().copied().fold(T::infinity(), T::min);
        let hi = lines.iter().copied().fold(T::neg_infinity(), T::max);
        lo - margin >= -self.half_span() && hi + margin < self.half_span()
    }
}

impl<T: Real> TimeGrid<T> {
    pub fn window_ns(&self) -> T {
        self.dt * T::lit(self.n_samples as f64)
    }

    /// Physical time of sample `j`, unwrapping the negative half.
    #[inline]
    pub fn time(&self, j: usize) -> T {
        let jj = if j < self.n_samples / 2 { j as f64 } else { j as f64 - self.n_samples as f64 };
        self.t_start + T::lit(jj) * self.dt
    }

    /// Number of leading samples covering `[0, t_end_ns)`.
    pub fn samples_until(&self, t_end_ns: T) -> usize {
        let m = (t_end_ns / self.dt).ceil().to_f64().unwrap_or(0.0).max(0.0) as usize;
        m.min(self.n_samples / 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_geometry() {
        let g = FrequencyGrid::<f64>::standard();
        assert_eq!(g.len(), 65536);
        assert!((g.d_omega() - 800.0 / 65536.0).abs() < 1e-15);
        let tg = g.time_grid();
        assert!((tg.dt - 2.0 * std::f64::consts::PI * 141.0 / 800.0).abs() < 1e-12);
        assert!(tg.window_ns() > 1536.0);
        assert_eq!(g.omega(32768), 0.0);
        assert_eq!(g.nearest_index(0.0), 32768);
        assert!(g.covers(&[-54.0, 54.0], 200.0));
        assert!(!g.covers(&[-254.0, 54.0], 200.0));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(FrequencyGrid::<f64>::new(400.0, 1000, 141.0).is_err());
        assert!(FrequencyGrid::<f64>::new(-1.0, 1024, 141.0).is_err());
        // window = 2 pi 141 / 800 * 16 ~ 17 ns
        assert!(FrequencyGrid::<f64>::new(400.0, 16, 141.0).is_err());
        let mut w = FrequencyGrid::<f64>::new(40.0, 1024, 141.0).unwrap().omegas();
        assert!(FrequencyGrid::from_samples(&w, 141.0).is_ok());
        w[100] += 0.01;
        assert!(FrequencyGrid::from_samples(&w, 141.0).is_err());
    }

    #[test]
    fn negative_half_unwraps() {
        let g = FrequencyGrid::<f64>::new(40.0, 1024, 141.0).unwrap().time_grid();
        assert!(g.time(1023) < 0.0);
        assert!((g.time(1023) + g.dt).abs() < 1e-12);
        assert_eq!(g.samples_until(g.dt * 10.0), 10);
    }
}
