use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::neldermead::NelderMead;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::grid::FrequencyGrid;
use crate::hyperfine::{NuclearConstants, NuclearModel, TargetSpec};
use crate::polarimeter::target_matrix_from;
use crate::stochastics::{average_fixed, DEFAULT_QUADRATURE_ORDER};
use crate::timedomain::{target_time_response, JonesTimeResponse, TimeResponse, WindowedInterferometer};

/// Forward model whose parameters are adjusted.
#[derive(Debug, Clone, PartialEq)]
pub enum FitModel {
    /// Delayed sigma-sigma intensity of one target between parallel
    /// polarizers.
    SingleTarget { target: TargetSpec<f64>, constants: NuclearConstants<f64>, grid: FrequencyGrid<f64> },
    /// Static pi intensity of the two-target chain averaged over residual
    /// detuning of target 1. Target parameters refer to target 1.
    TwoTarget {
        first: TargetSpec<f64>,
        second: TargetSpec<f64>,
        constants: NuclearConstants<f64>,
        grid: FrequencyGrid<f64>,
        quadrature_order: usize,
    },
}

/// Every parameter the forward models understand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParameters {
    pub thickness_um: f64,
    pub b_field_t: f64,
    pub alpha: f64,
    pub mu_e_d: f64,
    pub sigma_det: f64,
    /// Expected counts per unit intensity.
    pub scale: f64,
}

impl FitParameters {
    pub fn from_target(target: &TargetSpec<f64>, sigma_det: f64, scale: f64) -> Self {
        Self {
            thickness_um: target.thickness_um,
            b_field_t: target.b_field_t,
            alpha: target.alpha,
            mu_e_d: target.mu_e_d,
            sigma_det,
            scale,
        }
    }

    pub const NAMES: [&'static str; 6] =
        ["thickness_um", "b_field_T", "alpha_rad", "mu_e_d", "sigma_det_gamma", "scale"];

    pub fn to_array(self) -> [f64; 6] {
        [self.thickness_um, self.b_field_t, self.alpha, self.mu_e_d, self.sigma_det, self.scale]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { thickness_um: a[0], b_field_t: a[1], alpha: a[2], mu_e_d: a[3], sigma_det: a[4], scale: a[5] }
    }

    fn apply(&self, target: &TargetSpec<f64>) -> TargetSpec<f64> {
        TargetSpec {
            thickness_um: self.thickness_um,
            b_field_t: self.b_field_t,
            mu_e_d: self.mu_e_d,
            ..target.with_alpha(self.alpha)
        }
    }
}

/// Which parameters are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParameterMask {
    pub thickness: bool,
    pub b_field: bool,
    pub alpha: bool,
    pub mu_e_d: bool,
    pub sigma_det: bool,
    pub scale: bool,
}

impl ParameterMask {
    fn to_array(self) -> [bool; 6] {
        [self.thickness, self.b_field, self.alpha, self.mu_e_d, self.sigma_det, self.scale]
    }

    fn touches_target(&self) -> bool {
        self.thickness || self.b_field || self.alpha || self.mu_e_d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Poisson deviance `2 sum(mu - n + n ln(n / mu))`.
    #[default]
    Poisson,
    /// `sum((n - mu)^2 / max(n, 1))`.
    WeightedLeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub objective: Objective,
    pub mask: ParameterMask,
    /// Bins starting before this time are ignored (prompt flash).
    pub veto_ns: f64,
    /// Simplex iterations per restart.
    pub max_iters: u64,
    /// Further simplex runs started from the best point.
    pub restarts: usize,
    /// Stop when the spread of objective values over the simplex drops
    /// below this.
    pub tolerance: f64,
    /// Polish the simplex result with L-BFGS on a finite-difference gradient.
    pub refine: bool,
    /// Range of alpha; by default a quarter turn around the starting value.
    pub alpha_bounds: Option<(f64, f64)>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Poisson,
            mask: ParameterMask { scale: true, ..Default::default() },
            veto_ns: 16.0,
            max_iters: 4000,
            restarts: 2,
            tolerance: 1e-10,
            refine: false,
            alpha_bounds: None,
        }
    }
}

/// Counts per time bin of one bunch.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    /// Bin centers after the excitation.
    pub time_ns: Vec<f64>,
    pub counts: Vec<f64>,
}

impl FitData {
    pub fn new(time_ns: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let d = Self { time_ns, counts };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_ns.len() != self.counts.len() || self.time_ns.is_empty() {
            return Err(domain("data needs matching, non-empty time and count columns"));
        }
        if self.counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(domain("counts must be finite and >= 0"));
        }
        if self.time_ns.iter().any(|t| !(*t >= 0.0)) || self.time_ns.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("bin times must be >= 0 and strictly increasing"));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub parameters: FitParameters,
    /// One standard deviation from the curvature of the objective; zero for
    /// fixed parameters and NaN when the curvature is singular.
    pub uncertainties: FitParameters,
    /// Names of the free parameters, in covariance order.
    pub free: Vec<&'static str>,
    pub covariance: Vec<Vec<f64>>,
    pub objective: Objective,
    pub objective_value: f64,
    /// Bins entering the objective.
    pub n_bins: usize,
    pub iterations: u64,
}

impl FitModel {
    fn validate(&self, params: &FitParameters, mask: &ParameterMask) -> Result<()> {
        let target = match self {
            Self::SingleTarget { target, .. } => {
                if mask.sigma_det {
                    return Err(domain("sigma_det has no effect on a single-target fit"));
                }
                target
            }
            Self::TwoTarget { first, second, quadrature_order, .. } => {
                second.validate()?;
                crate::stochastics::ResidualMotionModel::new(params.sigma_det, *quadrature_order)?;
                first
            }
        };
        if mask.b_field && target.line_positions.is_some() {
            return Err(domain("b_field cannot be fitted when line positions are given explicitly"));
        }
        params.apply(target).validate()?;
        if !(params.scale > 0.0) {
            return Err(domain("scale must be positive"));
        }
        Ok(())
    }

    /// Expected counts `scale * I(t)` at `time_ns`.
    pub fn predict(&self, params: &FitParameters, time_ns: &[f64]) -> Result<Vec<f64>> {
        let shape = Prepared::new(self, params, time_ns, false)?.shape(params)?;
        Ok(shape.iter().map(|x| params.scale * x).collect())
    }
}

/// Model pieces that stay fixed during one fit.
struct Prepared<'a> {
    model: &'a FitModel,
    time_ns: Vec<f64>,
    dt: f64,
    n: usize,
    /// Two-target chain with target 1 fixed.
    fixed: Option<WindowedInterferometer<f64>>,
    second: Option<JonesTimeResponse<f64>>,
}

impl<'a> Prepared<'a> {
    fn new(model: &'a FitModel, params: &FitParameters, time_ns: &[f64], target_free: bool) -> Result<Self> {
        let grid = match model {
            FitModel::SingleTarget { grid, .. } | FitModel::TwoTarget { grid, .. } => *grid,
        };
        let tg = grid.time_grid();
        let t_max = time_ns.iter().copied().fold(0.0, f64::max);
        let n = tg.samples_until(t_max) + 2;
        if n > tg.n_samples / 2 {
            return Err(domain(format!("data extend to {t_max} ns, beyond the grid window")));
        }
        let mut p = Self { model, time_ns: time_ns.to_vec(), dt: tg.dt, n, fixed: None, second: None };
        if let FitModel::TwoTarget { first, second, constants, .. } = model {
            let j2 = target_time_response(second, &NuclearModel::for_target(second, constants)?, &grid);
            if !target_free {
                let t1 = params.apply(first);
                let j1 = target_time_response(&t1, &NuclearModel::for_target(&t1, constants)?, &grid);
                p.fixed = Some(WindowedInterferometer::new(&j1, &j2, n as f64 * tg.dt, constants.lifetime_ns)?);
            }
            p.second = Some(j2);
        }
        Ok(p)
    }

    /// Unscaled intensity at the data times.
    fn shape(&self, params: &FitParameters) -> Result<Vec<f64>> {
        let samples = match self.model {
            FitModel::SingleTarget { target, constants, grid } => {
                let t = params.apply(target);
                let r = sigma_sigma_response(&t, &NuclearModel::for_target(&t, constants)?, grid)?;
                r.scattered[..self.n].iter().map(|z| z.norm_sqr()).collect()
            }
            FitModel::TwoTarget { first, constants, grid, quadrature_order, .. } => {
                let built;
                let interferometer = match &self.fixed {
                    Some(w) => w,
                    None => {
                        let t1 = params.apply(first);
                        let j1 = target_time_response(&t1, &NuclearModel::for_target(&t1, constants)?, grid);
                        let j2 = self.second.as_ref().expect("second target prepared");
                        built = WindowedInterferometer::new(&j1, j2, self.n as f64 * self.dt, constants.lifetime_ns)?;
                        &built
                    }
                };
                let zeros = vec![0.0; interferometer.len()];
                let f = |d: f64| interferometer.field_with_phases(&zeros, d).pi_intensity();
                if params.sigma_det == 0.0 {
                    f(0.0)
                } else {
                    average_fixed(params.sigma_det, *quadrature_order, &f)?
                }
            }
        };
        Ok(self.time_ns.iter().map(|&t| interpolate(&samples, self.dt, t)).collect())
    }
}

fn sigma_sigma_response(
    target: &TargetSpec<f64>,
    model: &NuclearModel<f64>,
    grid: &FrequencyGrid<f64>,
) -> Result<TimeResponse<f64>> {
    let dt_gamma = grid.dt_gamma();
    let att = target.attenuation();
    let spectrum: Vec<Complex<f64>> = (0..grid.len())
        .map(|k| target_matrix_from(model.responses_sampled(grid.omega(k), dt_gamma), target.alpha, att, 0.0).m_ss)
        .collect();
    TimeResponse::from_spectrum(Complex::new(att, 0.0), &spectrum, grid)
}

fn interpolate(samples: &[f64], dt: f64, t: f64) -> f64 {
    let x = t / dt;
    let j = (x.floor() as usize).min(samples.len() - 2);
    let f = x - j as f64;
    samples[j] * (1.0 - f) + samples[j + 1] * f
}

/// Map between the optimizer's unbounded coordinates and parameters.
#[derive(Debug, Clone, Copy)]
enum Transform {
    Log,
    Bounded(f64, f64),
}

impl Transform {
    fn to_param(self, u: f64) -> f64 {
        match self {
            Self::Log => u.exp(),
            Self::Bounded(lo, hi) => lo + (hi - lo) / (1.0 + (-u).exp()),
        }
    }

    fn to_internal(self, p: f64) -> f64 {
        match self {
            Self::Log => p.ln(),
            Self::Bounded(lo, hi) => {
                let s = ((p - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
                (s / (1.0 - s)).ln()
            }
        }
    }

    fn derivative(self, u: f64) -> f64 {
        match self {
            Self::Log => u.exp(),
            Self::Bounded(lo, hi) => {
                let s = 1.0 / (1.0 + (-u).exp());
                (hi - lo) * s * (1.0 - s)
            }
        }
    }
}

struct Problem<'a> {
    prepared: Prepared<'a>,
    counts: Vec<f64>,
    objective: Objective,
    base: [f64; 6],
    /// Indices into the parameter array driven by the optimizer.
    free: Vec<usize>,
    transforms: [Transform; 6],
    /// Scale solved in closed form instead of searched.
    profile_scale: bool,
}

impl Problem<'_> {
    fn params(&self, u: &[f64]) -> FitParameters {
        let mut a = self.base;
        for (&i, &x) in self.free.iter().zip(u) {
            a[i] = self.transforms[i].to_param(x);
        }
        FitParameters::from_array(a)
    }

    fn best_scale(&self, shape: &[f64]) -> f64 {
        let (num, den) = match self.objective {
            Objective::Poisson => (self.counts.iter().sum::<f64>(), shape.iter().sum::<f64>()),
            Objective::WeightedLeastSquares => self.counts.iter().zip(shape).fold((0.0, 0.0), |(a, b), (&n, &s)| {
                let w = 1.0 / n.max(1.0);
                (a + w * n * s, b + w * s * s)
            }),
        };
        if den > 0.0 && num > 0.0 {
            num / den
        } else {
            1.0
        }
    }

    fn value(&self, shape: &[f64], scale: f64) -> f64 {
        let terms = self.counts.iter().zip(shape).map(|(&n, &s)| {
            let mu = (scale * s).max(1e-300);
            match self.objective {
                Objective::Poisson if n > 0.0 => 2.0 * (mu - n + n * (n / mu).ln()),
                Objective::Poisson => 2.0 * mu,
                Objective::WeightedLeastSquares => (n - mu).powi(2) / n.max(1.0),
            }
        });
        terms.sum()
    }

    /// Objective and the scale used for it.
    fn evaluate(&self, u: &[f64]) -> Result<(f64, f64)> {
        let p = self.params(u);
        let shape = self.prepared.shape(&p)?;
        let scale = if self.profile_scale { self.best_scale(&shape) } else { p.scale };
        Ok((self.value(&shape, scale), scale))
    }

    fn cost_or_penalty(&self, u: &[f64]) -> f64 {
        match self.evaluate(u) {
            Ok((v, _)) if v.is_finite() => v,
            _ => f64::MAX / 4.0,
        }
    }
}

/// Borrowed problem handed to the optimizer.
struct Handle<'a, 'b>(&'a Problem<'b>);

impl CostFunction for Handle<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.0.cost_or_penalty(u))
    }
}

impl Gradient for Handle<'_, '_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, u: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok((0..u.len())
            .into_par_iter()
            .map(|i| {
                let h = 1e-6 * (1.0 + u[i].abs());
                let (mut a, mut b) = (u.clone(), u.clone());
                a[i] += h;
                b[i] -= h;
                (self.0.cost_or_penalty(&a) - self.0.cost_or_penalty(&b)) / (2.0 * h)
            })
            .collect())
    }
}

fn optimizer_error(e: argmin::core::Error) -> Error {
    domain(format!("optimizer: {e}"))
}

fn simplex(u0: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut s = vec![u0.to_vec()];
    for i in 0..u0.len() {
        let mut v = u0.to_vec();
        v[i] += step;
        s.push(v);
    }
    s
}

/// Fit `model` to `data`, starting from `initial`.
///
/// Positive parameters are searched on a log scale and alpha inside its
/// bounds, with a Nelder-Mead simplex restarted `config.restarts` times from
/// the best point. When the scale is the only parameter tied to the count
/// level it is solved in closed form at every step. The covariance is twice
/// the inverse finite-difference Hessian of the objective (deviance or
/// chi-square), mapped back to the natural parameters.
pub fn fit_targets(model: &FitModel, data: &FitData, initial: &FitParameters, config: &FitConfig) -> Result<FitResult> {
    data.validate()?;
    model.validate(initial, &config.mask)?;
    let mask = config.mask.to_array();
    if !mask.iter().any(|&m| m) {
        return Err(domain("at least one parameter must be free"));
    }
    let keep: Vec<usize> = (0..data.time_ns.len()).filter(|&i| data.time_ns[i] >= config.veto_ns).collect();
    if keep.is_empty() {
        return Err(domain("no bins remain after the prompt veto"));
    }
    let times: Vec<f64> = keep.iter().map(|&i| data.time_ns[i]).collect();
    let counts: Vec<f64> = keep.iter().map(|&i| data.counts[i]).collect();

    let alpha_bounds = config.alpha_bounds.unwrap_or(match model {
        FitModel::SingleTarget { .. } => (0.0, std::f64::consts::FRAC_PI_2),
        FitModel::TwoTarget { .. } => {
            (initial.alpha - std::f64::consts::FRAC_PI_4, initial.alpha + std::f64::consts::FRAC_PI_4)
        }
    });
    let mut start = *initial;
    if matches!(model, FitModel::SingleTarget { .. }) {
        // sigma-sigma depends on alpha only through cos^2 and sin^2
        let a = start.alpha.rem_euclid(std::f64::consts::PI);
        start.alpha = if a > std::f64::consts::FRAC_PI_2 { std::f64::consts::PI - a } else { a };
    }
    if config.mask.alpha && !(start.alpha > alpha_bounds.0 && start.alpha < alpha_bounds.1) {
        return Err(domain(format!("starting alpha {} outside its bounds {alpha_bounds:?}", start.alpha)));
    }
    if config.mask.sigma_det && !(start.sigma_det > 0.0) {
        return Err(domain("a free sigma_det needs a positive starting value"));
    }
    let mut transforms = [Transform::Log; 6];
    transforms[2] = Transform::Bounded(alpha_bounds.0, alpha_bounds.1);

    let prepared = Prepared::new(model, &start, &times, config.mask.touches_target())?;
    let free: Vec<usize> = (0..6).filter(|&i| mask[i]).collect();
    let searched: Vec<usize> = free.iter().copied().filter(|&i| i != 5).collect();
    let mut problem = Problem {
        prepared,
        counts,
        objective: config.objective,
        base: start.to_array(),
        free: searched.clone(),
        transforms,
        profile_scale: config.mask.scale,
    };

    let mut u: Vec<f64> = searched.iter().map(|&i| transforms[i].to_internal(start.to_array()[i])).collect();
    let mut iterations = 0;
    if !u.is_empty() {
        let mut step = 0.1;
        for _ in 0..=config.restarts {
            let solver =
                NelderMead::new(simplex(&u, step)).with_sd_tolerance(config.tolerance).map_err(optimizer_error)?;
            let res = Executor::new(Handle(&problem), solver)
                .configure(|s| s.max_iters(config.max_iters))
                .run()
                .map_err(optimizer_error)?;
            let state = res.state();
            iterations += state.get_iter();
            u = state.get_best_param().cloned().unwrap_or(u);
            if state.get_termination_status() == &TerminationStatus::Terminated(TerminationReason::MaxItersReached) {
                let mut best = problem.params(&u);
                best.scale = problem.evaluate(&u)?.1;
                return Err(Error::FitNotConverged {
                    iterations: iterations as usize,
                    best_objective: state.get_best_cost(),
                    best_parameters: best.to_array().to_vec(),
                });
            }
            step *= 0.2;
        }
        if config.refine {
            let solver = LBFGS::new(MoreThuenteLineSearch::new(), 5);
            let res = Executor::new(Handle(&problem), solver)
                .configure(|s| s.param(u.clone()).max_iters(200))
                .run()
                .map_err(optimizer_error)?;
            iterations += res.state().get_iter();
            if let Some(best) = res.state().get_best_param() {
                if problem.cost_or_penalty(best) <= problem.cost_or_penalty(&u) {
                    u = best.to_vec();
                }
            }
        }
    }
    let (objective_value, scale) = problem.evaluate(&u)?;
    let mut best = problem.params(&u);
    best.scale = scale;

    // curvature over every free parameter, scale included
    problem.base = best.to_array();
    problem.free = free.clone();
    problem.profile_scale = false;
    let u_full: Vec<f64> = free.iter().map(|&i| transforms[i].to_internal(best.to_array()[i])).collect();
    let cov_u = covariance(&problem, &u_full);
    let jac: Vec<f64> = free.iter().zip(&u_full).map(|(&i, &x)| transforms[i].derivative(x)).collect();
    let k = free.len();
    let mut cov = vec![vec![0.0; k]; k];
    let mut sd = [0.0; 6];
    for a in 0..k {
        for b in 0..k {
            cov[a][b] = jac[a] * cov_u[(a, b)] * jac[b];
        }
        sd[free[a]] = cov[a][a].sqrt();
    }

    Ok(FitResult {
        parameters: best,
        uncertainties: FitParameters::from_array(sd),
        free: free.iter().map(|&i| FitParameters::NAMES[i]).collect(),
        covariance: cov,
        objective: config.objective,
        objective_value,
        n_bins: times.len(),
        iterations,
    })
}

/// `2 H^-1` from central differences; NaN when `H` is singular.
fn covariance(problem: &Problem<'_>, u: &[f64]) -> DMatrix<f64> {
    let k = u.len();
    let h = 1e-4;
    let f = |du: &[(usize, f64)]| {
        let mut v = u.to_vec();
        for &(i, d) in du {
            v[i] += d;
        }
        problem.cost_or_penalty(&v)
    };
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let f0 = f(&[]);
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                (f(&[(i, h)]) - 2.0 * f0 + f(&[(i, -h)])) / (h * h)
            } else {
                (f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)]) + f(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            }
        })
        .collect();
    let mut hess = DMatrix::zeros(k, k);
    for (&(i, j), &v) in pairs.iter().zip(&entries) {
        hess[(i, j)] = v;
        hess[(j, i)] = v;
    }
    match hess.try_inverse() {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => inv * 2.0,
        _ => DMatrix::from_element(k, k, f64::NAN),
    }
}

/// Default quadrature order of two-target fits.
pub const FIT_QUADRATURE_ORDER: usize = DEFAULT_QUADRATURE_ORDER;
