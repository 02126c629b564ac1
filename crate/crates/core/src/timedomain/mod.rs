//! Causal time-domain amplitudes, motion-induced phases and gated spectra.
//!
//! Fourier convention: `F(w) = ∫ f(t) e^{-i w t} dt`, so the single-pole
//! spectrum `1 / (i w + 1/2)` is the decay `e^{-t/2}` for `t > 0` (both in
//! lifetime units). Time samples are amplitude densities per ns; the
//! unscattered pulse is kept apart as the weight of a delta at `t = 0`.
//!
//! Responses are built from [`NuclearModel::responses_sampled`], whose
//! lineshape is the exact transform of a sampled causal exponential. The
//! discrete spectra are therefore genuine power series in `e^{-i w dt}` and
//! time products, convolutions and their transforms agree to rounding.

mod motion;
mod window;

pub use motion::MotionProfile;
pub use window::WindowedInterferometer;

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Error, Result};
use crate::grid::{FrequencyGrid, TimeGrid};
use crate::hyperfine::{NuclearModel, TargetSpec};
use crate::polarimeter::{check_leakage, target_matrix_from};
use crate::real::{cis, czero, Real};

/// Entry of a Jones matrix, named output-then-input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    SigmaSigma,
    SigmaPi,
    PiSigma,
    PiPi,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::SigmaSigma, Channel::SigmaPi, Channel::PiSigma, Channel::PiPi];
}

/// `prompt * delta(t) + scattered(t)` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeResponse<T> {
    pub grid: TimeGrid<T>,
    pub prompt: Complex<T>,
    /// Density per ns; indices `>= n/2` hold the wrapped negative times.
    pub scattered: Vec<Complex<T>>,
}

impl<T: Real> TimeResponse<T> {
    pub fn zero(grid: TimeGrid<T>) -> Self {
        Self { grid, prompt: czero(), scattered: vec![czero(); grid.n_samples] }
    }

    /// Unit prompt and nothing scattered.
    pub fn identity(grid: TimeGrid<T>) -> Self {
        Self { prompt: Complex::new(T::one(), T::zero()), ..Self::zero(grid) }
    }

    /// Split a spectrum into `prompt + scattered` and transform the scattered part.
    pub fn from_spectrum(prompt: Complex<T>, spectrum: &[Complex<T>], grid: &FrequencyGrid<T>) -> Result<Self> {
        let rest: Vec<_> = spectrum.iter().map(|&f| f - prompt).collect();
        Ok(Self { grid: grid.time_grid(), prompt, scattered: spectrum_to_time(&rest, grid)? })
    }

    pub fn len(&self) -> usize {
        self.scattered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scattered.is_empty()
    }

    pub fn time(&self, j: usize) -> T {
        self.grid.time(j)
    }

    /// Largest `|scattered|`.
    pub fn peak(&self) -> T {
        self.scattered.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// Largest `|scattered|` at negative times relative to the peak.
    pub fn causality_leakage(&self) -> T {
        let peak = self.peak();
        if peak == T::zero() {
            return T::zero();
        }
        self.scattered[self.len() / 2..].iter().map(|z| z.norm()).fold(T::zero(), T::max) / peak
    }

    /// Time after which `|scattered|` stays below `rel * peak`.
    pub fn support_end_ns(&self, rel: T) -> T {
        let threshold = rel * self.peak();
        let half = self.len() / 2;
        match self.scattered[..half].iter().rposition(|z| z.norm() > threshold) {
            Some(j) => self.time(j + 1),
            None => T::zero(),
        }
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        Self { grid: self.grid, prompt: self.prompt * c, scattered: self.scattered.iter().map(|&s| s * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_grids(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            prompt: self.prompt + other.prompt,
            scattered: self.scattered.iter().zip(&other.scattered).map(|(&a, &b)| a + b).collect(),
        })
    }

    /// Frequency-domain counterpart on `grid`.
    pub fn spectrum(&self, grid: &FrequencyGrid<T>) -> Result<Vec<Complex<T>>> {
        let mut f = time_to_spectrum(&self.scattered, grid)?;
        for v in &mut f {
            *v += self.prompt;
        }
        Ok(f)
    }

    /// `|scattered(t)|^2` per sample (per ns^2).
    pub fn intensity(&self) -> Vec<T> {
        time_intensity(&self.scattered)
    }
}

fn check_grids<T: Real>(a: &TimeGrid<T>, b: &TimeGrid<T>) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Grid(format!(
            "time grids differ: ({}, {} ns, {}) vs ({}, {} ns, {})",
            a.t_start, a.dt, a.n_samples, b.t_start, b.dt, b.n_samples
        )))
    }
}

fn plan<T: Real>(n: usize, inverse: bool) -> Arc<dyn Fft<T>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

fn check_len<T: Real>(len: usize, grid: &FrequencyGrid<T>) -> Result<()> {
    if len == grid.len() {
        Ok(())
    } else {
        Err(Error::Grid(format!("{len} samples on a grid of {}", grid.len())))
    }
}

/// `f(t_j) = (dw / 2 pi) sum_k F(w_k) e^{i w_k t_j}` with `dw` in rad/ns;
/// returns densities per ns on `grid.time_grid()`.
pub fn spectrum_to_time<T: Real>(spectrum: &[Complex<T>], grid: &FrequencyGrid<T>) -> Result<Vec<Complex<T>>> {
    check_len(spectrum.len(), grid)?;
    let mut buf = spectrum.to_vec();
    plan::<T>(buf.len(), true).process(&mut buf);
    // w_k = (k - n/2) dw puts a factor (-1)^j on sample j
    let norm = T::one() / grid.time_grid().window_ns();
    for (j, v) in buf.iter_mut().enumerate() {
        *v = if j % 2 == 0 { *v * norm } else { -*v * norm };
    }
    Ok(buf)
}

/// `F(w_k) = dt sum_j f(t_j) e^{-i w_k t_j}`, inverse of [`spectrum_to_time`].
pub fn time_to_spectrum<T: Real>(samples: &[Complex<T>], grid: &FrequencyGrid<T>) -> Result<Vec<Complex<T>>> {
    check_len(samples.len(), grid)?;
    let dt = grid.time_grid().dt;
    let mut buf: Vec<_> = samples.iter().enumerate().map(|(j, &v)| if j % 2 == 0 { v * dt } else { -v * dt }).collect();
    plan::<T>(buf.len(), false).process(&mut buf);
    Ok(buf)
}

/// All four entries of a time-domain Jones matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JonesTimeResponse<T> {
    pub ss: TimeResponse<T>,
    pub sp: TimeResponse<T>,
    pub ps: TimeResponse<T>,
    pub pp: TimeResponse<T>,
}

impl<T: Real> JonesTimeResponse<T> {
    pub fn identity(grid: TimeGrid<T>) -> Self {
        Self {
            ss: TimeResponse::identity(grid),
            sp: TimeResponse::zero(grid),
            ps: TimeResponse::zero(grid),
            pp: TimeResponse::identity(grid),
        }
    }

    pub fn channel(&self, c: Channel) -> &TimeResponse<T> {
        match c {
            Channel::SigmaSigma => &self.ss,
            Channel::SigmaPi => &self.sp,
            Channel::PiSigma => &self.ps,
            Channel::PiPi => &self.pp,
        }
    }

    fn entries(&self) -> [&TimeResponse<T>; 4] {
        [&self.ss, &self.sp, &self.ps, &self.pp]
    }

    fn map(&self, f: impl Fn(&TimeResponse<T>) -> Result<TimeResponse<T>>) -> Result<Self> {
        Ok(Self { ss: f(&self.ss)?, sp: f(&self.sp)?, ps: f(&self.ps)?, pp: f(&self.pp)? })
    }

    pub fn grid(&self) -> TimeGrid<T> {
        self.ss.grid
    }
}

/// Jones matrix of one target in the time domain. Every entry is evaluated
/// on `grid` with the sampled lineshape and split into its high-frequency
/// limit (prompt) and the transform of the remainder.
pub fn target_time_response<T: Real>(
    target: &TargetSpec<T>,
    model: &NuclearModel<T>,
    grid: &FrequencyGrid<T>,
) -> JonesTimeResponse<T> {
    let dt_gamma = grid.dt_gamma();
    let att = target.attenuation();
    let n = grid.len();
    let mut spectra = [vec![czero(); n], vec![czero(); n], vec![czero(); n], vec![czero(); n]];
    for k in 0..n {
        let r = model.responses_sampled(grid.omega(k), dt_gamma);
        let m = target_matrix_from(r, target.alpha, att, T::zero());
        spectra[0][k] = m.m_ss;
        spectra[1][k] = m.m_sp;
        spectra[2][k] = m.m_ps;
        spectra[3][k] = m.m_pp;
    }
    let prompt = [Complex::new(att, T::zero()), czero(), czero(), Complex::new(att, T::zero())];
    let build =
        |i: usize| TimeResponse::from_spectrum(prompt[i], &spectra[i], grid).expect("spectrum length matches grid");
    JonesTimeResponse { ss: build(0), sp: build(1), ps: build(2), pp: build(3) }
}

/// One channel of [`target_time_response`].
pub fn single_target_time_response<T: Real>(
    target: &TargetSpec<T>,
    model: &NuclearModel<T>,
    grid: &FrequencyGrid<T>,
    channel: Channel,
) -> TimeResponse<T> {
    target_time_response(target, model, grid).channel(channel).clone()
}

/// Multiply the scattered part by `e^{i phi(t)}`; the prompt pulse has left
/// before anything moves.
///
/// Exact for piecewise-constant displacement, first order in
/// `(dz/dt) * dwell / lambda` for ramps.
pub fn apply_motion<T: Real>(resp: &TimeResponse<T>, profile: &MotionProfile<T>) -> Result<TimeResponse<T>> {
    let required = resp.support_end_ns(T::lit(1e-9));
    if profile.end_ns() < required {
        return Err(Error::ProfileTooShort {
            profile_end_ns: profile.end_ns().as_f64(),
            required_ns: required.as_f64(),
        });
    }
    let half = resp.len() / 2;
    let mut out = resp.clone();
    for (j, s) in out.scattered[..half].iter_mut().enumerate() {
        *s *= cis(profile.phase(resp.time(j)));
    }
    Ok(out)
}

/// [`apply_motion`] on every entry.
pub fn apply_motion_jones<T: Real>(
    m: &JonesTimeResponse<T>,
    profile: &MotionProfile<T>,
) -> Result<JonesTimeResponse<T>> {
    m.map(|r| apply_motion(r, profile))
}

/// Multiply the scattered part by `e^{i delta t}` (`delta` in units of gamma),
/// the Doppler shift of a target moving at constant velocity.
pub fn apply_detuning<T: Real>(resp: &TimeResponse<T>, delta: T, lifetime_ns: T) -> TimeResponse<T> {
    let half = resp.len() / 2;
    let mut out = resp.clone();
    for (j, s) in out.scattered[..half].iter_mut().enumerate() {
        *s *= cis(delta * resp.time(j) / lifetime_ns);
    }
    out
}

/// `m2 * m1` as 2x2 matrix convolution; `m1` acts first.
///
/// Delta terms multiply analytically; the scattered parts are convolved
/// linearly (causal half only, zero padded), so nothing wraps around.
pub fn compose_time<T: Real>(m1: &JonesTimeResponse<T>, m2: &JonesTimeResponse<T>) -> Result<JonesTimeResponse<T>> {
    let grid = m1.grid();
    for e in m1.entries().into_iter().chain(m2.entries()) {
        check_grids(&grid, &e.grid)?;
    }
    let n = grid.n_samples;
    let half = n / 2;
    let fwd = plan::<T>(n, false);
    let transform = |r: &TimeResponse<T>| {
        let mut buf = vec![czero(); n];
        buf[..half].copy_from_slice(&r.scattered[..half]);
        fwd.process(&mut buf);
        buf
    };
    let f1: Vec<_> = m1.entries().iter().map(|r| transform(r)).collect();
    let f2: Vec<_> = m2.entries().iter().map(|r| transform(r)).collect();
    let inv = plan::<T>(n, true);
    let scale = grid.dt / T::lit(n as f64);

    // entry index of (row, col) in ss, sp, ps, pp order
    let idx = |r: usize, c: usize| 2 * r + c;
    let entry = |r: usize, c: usize| -> TimeResponse<T> {
        let mut spec = vec![czero(); n];
        let mut prompt = czero();
        let mut linear = vec![czero(); half];
        for k in 0..2 {
            let a = m2.entries()[idx(r, k)];
            let b = m1.entries()[idx(k, c)];
            prompt += a.prompt * b.prompt;
            for (i, (x, y)) in f2[idx(r, k)].iter().zip(&f1[idx(k, c)]).enumerate() {
                spec[i] += x * y;
            }
            for j in 0..half {
                linear[j] += a.scattered[j] * b.prompt + b.scattered[j] * a.prompt;
            }
        }
        inv.process(&mut spec);
        let mut scattered = vec![czero(); n];
        for j in 0..half {
            scattered[j] = spec[j] * scale + linear[j];
        }
        TimeResponse { grid, prompt, scattered }
    };
    Ok(JonesTimeResponse { ss: entry(0, 0), sp: entry(0, 1), ps: entry(1, 0), pp: entry(1, 1) })
}

/// Output field of a two-target chain for unit sigma input.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizedTimeField<T> {
    pub sigma: TimeResponse<T>,
    pub pi: TimeResponse<T>,
}

impl<T: Real> PolarizedTimeField<T> {
    pub fn from_product(m: &JonesTimeResponse<T>) -> Self {
        Self { sigma: m.ss.clone(), pi: m.ps.clone() }
    }

    /// Intensity behind an analyzer passing pi and a fraction `leakage` of sigma.
    pub fn detected_intensity(&self, leakage: T) -> Result<Vec<T>> {
        check_leakage(leakage)?;
        Ok(self
            .pi
            .scattered
            .iter()
            .zip(&self.sigma.scattered)
            .map(|(p, s)| p.norm_sqr() + leakage * s.norm_sqr())
            .collect())
    }
}

/// Two targets in sequence, target 1 displaced by `motion`.
pub fn two_target_time_field<T: Real>(
    first: &JonesTimeResponse<T>,
    second: &JonesTimeResponse<T>,
    motion: &MotionProfile<T>,
) -> Result<PolarizedTimeField<T>> {
    let moved = apply_motion_jones(first, motion)?;
    Ok(PolarizedTimeField::from_product(&compose_time(&moved, second)?))
}

/// `|E(t)|^2` per sample.
pub fn time_intensity<T: Real>(field: &[Complex<T>]) -> Vec<T> {
    field.iter().map(|z| z.norm_sqr()).collect()
}

/// `|F(w)|^2` of a time field, optionally restricted to `[t0, t1)` ns.
/// The prompt contributes only when the window contains `t = 0`.
pub fn gated_spectrum<T: Real>(
    field: &TimeResponse<T>,
    grid: &FrequencyGrid<T>,
    window_ns: Option<(T, T)>,
) -> Result<Vec<T>> {
    if grid.time_grid() != field.grid {
        return Err(Error::Grid("time field does not belong to the frequency grid".into()));
    }
    let mut gated = field.clone();
    if let Some((t0, t1)) = window_ns {
        if !(t1 > t0) {
            return Err(domain(format!("empty gate window [{t0}, {t1})")));
        }
        for (j, s) in gated.scattered.iter_mut().enumerate() {
            let t = field.time(j);
            if t < t0 || t >= t1 {
                *s = czero();
            }
        }
        if !(t0 <= T::zero() && T::zero() < t1) {
            gated.prompt = czero();
        }
    }
    Ok(gated.spectrum(grid)?.iter().map(|z| z.norm_sqr()).collect())
}
