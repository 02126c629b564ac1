use num_complex::Complex;

use super::{JonesTimeResponse, MotionProfile, TimeResponse};
use crate::error::{domain, Result};
use crate::real::{cis, czero, Real};

/// Two-target chain truncated to a short window after each excitation.
///
/// Evaluates the same causal convolution as
/// [`compose_time`](super::compose_time) by direct summation over the first
/// `n` samples, which is cheaper when many motion profiles or detunings share
/// one pair of targets (bunch trains, residual-motion averages).
#[derive(Debug, Clone)]
pub struct WindowedInterferometer<T> {
    dt: T,
    lifetime_ns: T,
    first: [(Complex<T>, Vec<Complex<T>>); 4],
    second: [(Complex<T>, Vec<Complex<T>>); 4],
}

/// Scattered output fields over the window for unit sigma input.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowField<T> {
    pub dt: T,
    pub sigma: Vec<Complex<T>>,
    pub pi: Vec<Complex<T>>,
}

impl<T: Real> WindowField<T> {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn time(&self, j: usize) -> T {
        T::lit(j as f64) * self.dt
    }

    pub fn pi_intensity(&self) -> Vec<T> {
        self.pi.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn sigma_intensity(&self) -> Vec<T> {
        self.sigma.iter().map(|z| z.norm_sqr()).collect()
    }
}

fn truncate<T: Real>(r: &TimeResponse<T>, n: usize) -> (Complex<T>, Vec<Complex<T>>) {
    (r.prompt, r.scattered[..n].to_vec())
}

impl<T: Real> WindowedInterferometer<T> {
    /// `lifetime_ns` converts detunings (units of gamma) to rad/ns.
    pub fn new(
        first: &JonesTimeResponse<T>,
        second: &JonesTimeResponse<T>,
        window_ns: T,
        lifetime_ns: T,
    ) -> Result<Self> {
        let grid = first.grid();
        if grid != second.grid() {
            return Err(domain("targets were sampled on different grids"));
        }
        let n = grid.samples_until(window_ns);
        if n == 0 {
            return Err(domain(format!("window of {window_ns} ns holds no samples")));
        }
        let pack =
            |m: &JonesTimeResponse<T>| [truncate(&m.ss, n), truncate(&m.sp, n), truncate(&m.ps, n), truncate(&m.pp, n)];
        Ok(Self { dt: grid.dt, lifetime_ns, first: pack(first), second: pack(second) })
    }

    pub fn len(&self) -> usize {
        self.first[0].1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Phase `phi(t_j)` of the window samples under `motion`.
    pub fn phases(&self, motion: &MotionProfile<T>) -> Vec<T> {
        (0..self.len()).map(|j| motion.phase(T::lit(j as f64) * self.dt)).collect()
    }

    /// Output with target 1 displaced by `motion` and Doppler detuned by
    /// `detuning` (units of gamma).
    pub fn field(&self, motion: &MotionProfile<T>, detuning: T) -> WindowField<T> {
        self.field_with_phases(&self.phases(motion), detuning)
    }

    /// As [`field`](Self::field) with precomputed phases (one per sample).
    pub fn field_with_phases(&self, phases: &[T], detuning: T) -> WindowField<T> {
        let n = self.len();
        assert_eq!(phases.len(), n, "one phase per window sample");
        let w = detuning / self.lifetime_ns;
        let modulation: Vec<_> =
            phases.iter().enumerate().map(|(j, &p)| cis(p + w * T::lit(j as f64) * self.dt)).collect();
        // sigma input: column (ss, ps) of target 1
        let moved = |(p, s): &(Complex<T>, Vec<Complex<T>>)| {
            (*p, s.iter().zip(&modulation).map(|(&a, &m)| a * m).collect::<Vec<_>>())
        };
        let col = [moved(&self.first[0]), moved(&self.first[2])];
        let mut out = [vec![czero(); n], vec![czero(); n]];
        for (row, o) in out.iter_mut().enumerate() {
            for (k, (p1, s1)) in col.iter().enumerate() {
                let (p2, s2) = &self.second[2 * row + k];
                for j in 0..n {
                    let mut acc = s2[j] * *p1 + s1[j] * *p2;
                    let mut conv = czero();
                    for i in 0..=j {
                        conv += s2[j - i] * s1[i];
                    }
                    acc += conv * self.dt;
                    o[j] += acc;
                }
            }
        }
        let [sigma, pi] = out;
        WindowField { dt: self.dt, sigma, pi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FrequencyGrid;
    use crate::hyperfine::{NuclearConstants, NuclearModel, TargetSpec};
    use crate::timedomain::{apply_detuning, apply_motion_jones, compose_time, target_time_response};
    use std::f64::consts::{FRAC_PI_4, PI};

    fn setup() -> (FrequencyGrid<f64>, JonesTimeResponse<f64>, JonesTimeResponse<f64>) {
        let g = FrequencyGrid::new(400.0, 1 << 13, 141.0).unwrap();
        let c = NuclearConstants::default();
        let t1 = TargetSpec::alpha_iron(1.89, 32.65, 0.75 * PI).unwrap();
        let t2 = TargetSpec::alpha_iron(1.92, 32.69, 0.255 * PI).unwrap();
        let j1 = target_time_response(&t1, &NuclearModel::for_target(&t1, &c).unwrap(), &g);
        let j2 = target_time_response(&t2, &NuclearModel::for_target(&t2, &c).unwrap(), &g);
        (g, j1, j2)
    }

    #[test]
    fn matches_full_convolution() {
        let (_, j1, j2) = setup();
        let motion = MotionProfile::steps(&[(30.0, 40.0), (110.0, -40.0)]).unwrap();
        let w = WindowedInterferometer::new(&j1, &j2, 192.0, 141.0).unwrap();
        let field = w.field(&motion, 0.7);

        let mut moved = apply_motion_jones(&j1, &motion).unwrap();
        moved.ss = apply_detuning(&moved.ss, 0.7, 141.0);
        moved.ps = apply_detuning(&moved.ps, 0.7, 141.0);
        let full = compose_time(&moved, &j2).unwrap();
        let peak = full.ss.peak();
        for j in 0..w.len() {
            assert!((field.sigma[j] - full.ss.scattered[j]).norm() < 1e-12 * peak);
            assert!((field.pi[j] - full.ps.scattered[j]).norm() < 1e-12 * peak);
        }
    }

    #[test]
    fn window_length() {
        let (g, j1, j2) = setup();
        let w = WindowedInterferometer::new(&j1, &j2, 192.0, 141.0).unwrap();
        let dt = g.time_grid().dt;
        assert_eq!(w.len(), (192.0 / dt).ceil() as usize);
        assert!(WindowedInterferometer::new(&j1, &j2, 0.0, 141.0).is_err());
    }

    #[test]
    fn static_crossed_targets_leak_only_through_their_difference() {
        let g = FrequencyGrid::new(400.0, 1 << 13, 141.0).unwrap();
        let c = NuclearConstants::default();
        let t = TargetSpec::alpha_iron(1.0, 33.0, FRAC_PI_4).unwrap();
        let m = NuclearModel::for_target(&t, &c).unwrap();
        let j1 = target_time_response(&t, &m, &g);
        let j2 = target_time_response(&t.with_alpha(-FRAC_PI_4), &m, &g);
        let w = WindowedInterferometer::new(&j1, &j2, 192.0, 141.0).unwrap();
        let f = w.field(&MotionProfile::stationary(), 0.0);
        let peak = f.sigma_intensity().into_iter().fold(0.0, f64::max);
        assert!(f.pi_intensity().iter().all(|&x| x < 1e-20 * peak));
    }
}
